import json
import math

import numpy as np
import pytest
from scipy import stats

from errors import ConfigError, InsufficientSamplesError, RegressionError
from experiments import (
    ExperimentConfig,
    bias_study,
    identity_holds,
    ks_two_sample,
    moment_report,
    regress_scaling,
    replicate_stream,
    run_experiment,
    summarize,
)
from hurst_params import derive_params
from settings import RuntimeSettings


def _config(**overrides):
    base = dict(
        q_values=[2],
        h_values=[0.8],
        n_values=[64],
        replications=4,
        oversampling=4,
        seed=99,
        experiment_kind="variance-scaling",
        workers=1,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def _settings(**overrides):
    values = dict(max_grid=2 ** 20, memory_budget=2 ** 30, workers=1)
    values.update(overrides)
    return RuntimeSettings(**values)


def test_regress_scaling_exact_line():
    x = np.log([256.0, 1024.0, 4096.0])
    slope, se = regress_scaling([(xi, -0.4 * xi + 1.0) for xi in x])
    assert slope == pytest.approx(-0.4, abs=1e-12)
    assert se == pytest.approx(0.0, abs=1e-12)


def test_regress_scaling_errors():
    with pytest.raises(RegressionError):
        regress_scaling([(1.0, 2.0), (1.0, 3.0), (2.0, 4.0)])
    with pytest.raises(RegressionError):
        regress_scaling([(1.0, 2.0), (2.0, 3.0)])


def test_regress_scaling_noisy_line():
    rng = np.random.default_rng(1)
    x = np.linspace(0, 5, 50)
    y = 0.7 * x + rng.normal(0, 0.1, x.size)
    slope, se = regress_scaling(list(zip(x, y)))
    assert abs(slope - 0.7) < 2.5 * se
    assert se == pytest.approx(stats.linregress(x, y).stderr, rel=1e-8)


def test_ks_two_sample():
    a = np.arange(10.0)
    assert ks_two_sample(a, a) == 0.0
    assert ks_two_sample(np.zeros(5), np.ones(7)) == 1.0
    with pytest.raises(InsufficientSamplesError):
        ks_two_sample([], [1.0])


def test_ks_two_sample_critical_value():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        hits += ks_two_sample(rng.standard_normal(1000), rng.standard_normal(1000)) < 0.0607
    assert hits >= 90


def test_moment_report():
    constant = moment_report([2.0, 2.0, 2.0, 2.0])
    assert constant.variance == 0.0 and constant.skewness is None and constant.excess_kurtosis is None

    two = moment_report([-1.0, 1.0])
    assert two.mean == 0.0 and two.skewness == 0.0 and two.excess_kurtosis is None

    x = np.random.default_rng(5).standard_normal(200_000)
    m = moment_report(x)
    assert abs(m.excess_kurtosis) < 3 * math.sqrt(24 / x.size)

    with pytest.raises(InsufficientSamplesError):
        moment_report([1.0])


def test_config_validation():
    with pytest.raises(ConfigError):
        _config(replications=1)
    with pytest.raises(ConfigError):
        _config(n_values=[128, 64])
    with pytest.raises(ConfigError):
        _config(n_values=[100])
    with pytest.raises(ConfigError):
        _config(experiment_kind="plotting")
    with pytest.raises(ConfigError):
        _config(experiment_kind="clt-q1")
    with pytest.raises(ConfigError):
        _config(h_values=[1.2])
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**_config().to_dict(), "colour": "blue"})


def test_config_from_json_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(_config().to_dict()))
    assert ExperimentConfig.from_json_file(str(path)) == _config()


def test_resource_ceiling_checked_before_work():
    with pytest.raises(ConfigError):
        run_experiment(_config(oversampling=64, n_values=[4096]), _settings(max_grid=2 ** 16))
    with pytest.raises(ConfigError):
        run_experiment(_config(), _settings(memory_budget=1000))


def test_worker_count_reduced_to_fit_budget(caplog):
    config = _config(n_values=[64], oversampling=4, reference_grid=256)
    per_worker = 96 * 256
    with caplog.at_level("WARNING"):
        run_experiment(config, _settings(workers=8, memory_budget=2 * per_worker))
    assert "Riduco i processi" in caplog.text


def test_run_is_deterministic_and_worker_independent():
    config = _config(n_values=[32, 64, 128], replications=3)
    first = run_experiment(config, _settings())
    again = run_experiment(config, _settings())
    parallel = run_experiment(config, _settings(workers=2))
    assert first == again == parallel
    assert [r.N for r in first] == [32, 64, 128]
    assert first[0].slope is not None and first[0].slope == first[-1].slope
    assert all(r.identity_violations == 0 for r in first)


def test_experiment_kinds_draw_distinct_paths():
    consistency = run_experiment(_config(experiment_kind="consistency"), _settings())[0]
    scaling = run_experiment(_config(experiment_kind="variance-scaling"), _settings())[0]
    assert [r.v_n for r in consistency.per_replicate] != [r.v_n for r in scaling.per_replicate]
    stream = replicate_stream(99, "consistency", derive_params(0.8, 2), 64, 0)
    assert stream != replicate_stream(99, "variance-scaling", derive_params(0.8, 2), 64, 0)


def test_summary_recomputable_from_replicates():
    result = run_experiment(_config(experiment_kind="fourth-moment"), _settings())[0]
    assert summarize("fourth-moment", result.per_replicate) == result.summary
    assert set(result.summary) == {"v_n", "v_n_fourth"}


def test_limit_experiment_compares_with_reference():
    config = _config(experiment_kind="rosenblatt-limit", reference_grid=256, replications=5)
    result = run_experiment(config, _settings())[0]
    assert result.ks is not None and result.ks.sample_sizes == (5, 5)
    assert 0.0 <= result.ks.statistic <= 1.0
    assert result.reference is not None


def test_identity_holds_detects_violation():
    result = run_experiment(_config(), _settings())[0]
    report = result.per_replicate[0]
    assert identity_holds(report)
    report.v_n = report.v_n + 1e-9
    assert not identity_holds(report)


@pytest.mark.slow
def test_consistency_experiment():
    config = _config(experiment_kind="consistency", n_values=[2 ** 8, 2 ** 10, 2 ** 12], replications=500, oversampling=64)
    results = run_experiment(config, _settings(max_grid=2 ** 24, memory_budget=2 ** 32))
    errors = [r.summary["abs_error"].mean for r in results]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 0.03


@pytest.mark.slow
def test_variance_scaling_slope():
    config = _config(n_values=[2 ** 8, 2 ** 10, 2 ** 12], replications=2000, oversampling=64)
    results = run_experiment(config, _settings(max_grid=2 ** 24, memory_budget=2 ** 32))
    slope, _ = results[0].slope
    assert slope == pytest.approx(-0.4, abs=0.15)


@pytest.mark.slow
def test_clt_q1_is_gaussian():
    config = _config(q_values=[1], h_values=[0.6], n_values=[2 ** 12], replications=2000, oversampling=1, experiment_kind="clt-q1")
    moments = run_experiment(config, _settings())[0].summary["root_n_v_n"]
    assert abs(moments.skewness) < 0.15
    assert abs(moments.excess_kurtosis) < 0.3


def test_bias_study_shapes():
    points = bias_study(derive_params(0.8, 2), 2, [4, 16], reps=20, seed=3)
    assert [p.m for p in points] == [4, 16]
    assert all(p.target == pytest.approx(0.5 ** 1.6) for p in points)
    with pytest.raises(ConfigError):
        bias_study(derive_params(0.8, 2), 3, [4], reps=5, seed=3)
