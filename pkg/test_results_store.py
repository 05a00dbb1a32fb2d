import json

import numpy as np
import pandas as pd
import pytest

from errors import SchemaVersionError
from experiments import ExperimentConfig, run_experiment
from results_store import (
    ERRORS_FILE,
    SUMMARY_COLUMNS,
    load_results,
    log_error,
    normalize_for_json,
    persist_results,
    write_summary_csv,
)
from settings import RuntimeSettings


@pytest.fixture(scope="module")
def two_cells():
    config = ExperimentConfig(
        q_values=[2],
        h_values=[0.8],
        n_values=[32, 64],
        replications=3,
        oversampling=4,
        seed=5,
        experiment_kind="rosenblatt-limit",
        reference_grid=128,
    )
    return run_experiment(config, RuntimeSettings(max_grid=2 ** 16, memory_budget=2 ** 30, workers=1))


def test_round_trip(tmp_path, two_cells):
    path = tmp_path / "results.json"
    persist_results(two_cells, str(path))
    assert load_results(str(path)) == two_cells


def test_unknown_schema_version(tmp_path):
    path = tmp_path / "results.json"
    path.write_text(json.dumps({"schema_version": 99, "results": []}))
    with pytest.raises(SchemaVersionError):
        load_results(str(path))


def test_summary_csv_single_statistic_kind(tmp_path, two_cells):
    path = tmp_path / "summary.csv"
    rows = write_summary_csv(two_cells, str(path))
    frame = pd.read_csv(path)
    assert rows == len(frame) == len(two_cells)
    assert list(frame.columns) == SUMMARY_COLUMNS
    assert frame["ks"].notna().all()


def test_summary_csv_one_row_per_cell_and_statistic(tmp_path):
    config = ExperimentConfig(
        q_values=[2],
        h_values=[0.8],
        n_values=[32, 64],
        replications=3,
        oversampling=4,
        seed=5,
        experiment_kind="variance-scaling",
    )
    cells = run_experiment(config, RuntimeSettings(max_grid=2 ** 16, memory_budget=2 ** 30, workers=1))
    path = tmp_path / "summary.csv"
    rows = write_summary_csv(cells, str(path))
    frame = pd.read_csv(path)
    assert rows == len(frame) == 4
    assert sorted(frame["stat"].unique()) == ["s_n", "v_n"]
    assert frame.groupby("N").size().tolist() == [2, 2]


def test_normalize_for_json():
    out = normalize_for_json({"a": np.float64(1.5), "b": (np.int64(3), None), "c": np.arange(2), "d": True})
    assert out == {"a": 1.5, "b": [3, None], "c": [0, 1], "d": True}
    assert isinstance(out["b"][0], int)


def test_log_error_appends_json_lines(tmp_path):
    for i in range(2):
        try:
            raise ValueError(f"boom {i}")
        except ValueError as exc:
            log_error(exc, context={"H": np.float64(0.8)}, source="test", out_dir=str(tmp_path))
    lines = (tmp_path / ERRORS_FILE).read_text().splitlines()
    assert len(lines) == 2
    record = json.loads(lines[1])
    assert record["error_type"] == "ValueError"
    assert record["error_message"] == "boom 1"
    assert record["context"] == {"H": 0.8}
    assert "Traceback" in record["traceback"]


def test_log_error_without_out_dir_is_noop(tmp_path):
    log_error(RuntimeError("x"), out_dir=None)
    assert not list(tmp_path.iterdir())
