from __future__ import annotations

import json
import os
import traceback
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from errors import SchemaVersionError
from experiments import ExperimentResult

SCHEMA_VERSION = 1
ERRORS_FILE = "errors.jsonl"
SUMMARY_COLUMNS = ["q", "H", "N", "stat", "mean", "var", "skew", "kurt", "slope", "slope_se", "ks"]


def _now_utc() -> datetime:
    return datetime.now(timezone.utc)


def _to_plain_number(value: Any) -> Optional[float]:
    """Converte numeri (inclusi numpy scalars) in tipi Python.

    Gli interi restano interi; restituisce None se non convertibile.
    """

    if value is None or isinstance(value, bool):
        return None
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return None


def normalize_for_json(value: Any) -> Any:
    """Sostituisce ricorsivamente numpy scalars/array e tuple con tipi JSON nativi."""
    if isinstance(value, dict):
        return {str(k): normalize_for_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [normalize_for_json(v) for v in value]
    if isinstance(value, np.ndarray):
        return [normalize_for_json(v) for v in value.tolist()]

    num = _to_plain_number(value)
    if num is not None:
        return num

    return value


def write_json(payload: Any, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(normalize_for_json(payload), f, indent=2)
        f.write("\n")


# =====================
# Risultati degli esperimenti
# =====================


def persist_results(results: Sequence[ExperimentResult], path: str) -> None:
    """Salva i risultati in un file JSON versionato (round trip senza perdita)."""
    write_json({"schema_version": SCHEMA_VERSION, "results": [r.to_dict() for r in results]}, path)


def load_results(path: str) -> List[ExperimentResult]:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    version = data.get("schema_version") if isinstance(data, dict) else None
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"{path}: schema_version={version!r} non supportata (attesa {SCHEMA_VERSION})")
    return [ExperimentResult.from_dict(item) for item in data["results"]]


def summary_frame(results: Sequence[ExperimentResult]) -> pd.DataFrame:
    """Una riga per (cella, statistica)."""
    rows: List[Dict[str, Any]] = []
    for res in results:
        slope, slope_se = res.slope if res.slope is not None else (None, None)
        for stat, m in res.summary.items():
            rows.append(
                {
                    "q": res.q,
                    "H": res.H,
                    "N": res.N,
                    "stat": stat,
                    "mean": m.mean,
                    "var": m.variance,
                    "skew": m.skewness,
                    "kurt": m.excess_kurtosis,
                    "slope": slope,
                    "slope_se": slope_se,
                    "ks": res.ks.statistic if res.ks is not None else None,
                }
            )
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def write_summary_csv(results: Sequence[ExperimentResult], path: str) -> int:
    frame = summary_frame(results)
    frame.to_csv(path, index=False, float_format="%.17g")
    return len(frame)


# =====================
# Log degli errori
# =====================


def log_error(
    exc: BaseException,
    *,
    context: Optional[Dict[str, Any]] = None,
    source: Optional[str] = None,
    out_dir: Optional[str] = None,
) -> None:
    """Aggiunge un'eccezione a `errors.jsonl` nella cartella di output.

    Parametri:
    - exc: eccezione catturata (es. nell'`except Exception as e:`)
    - context: dizionario opzionale con informazioni aggiuntive (argomenti del comando, ...)
    - source: stringa opzionale per indicare la sorgente (es. "simulate", "verify-limit", ...)
    - out_dir: cartella di output; se None non viene scritto nulla

    Uso tipico::

        try:
            ...
        except HermiteError as e:
            log_error(e, context={"H": 0.8}, source="simulate", out_dir=args.out)
            raise
    """

    if out_dir is None:
        return
    record = {
        "timestamp": _now_utc().isoformat(),
        "error_type": type(exc).__name__,
        "error_message": str(exc),
        "traceback": "".join(traceback.format_exception(type(exc), exc, exc.__traceback__)),
        "context": normalize_for_json(context) if context is not None else None,
        "source": source,
    }
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, ERRORS_FILE), "a", encoding="utf-8") as f:
        f.write(json.dumps(record, default=str) + "\n")
