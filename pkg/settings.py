from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

from errors import ConfigError

load_dotenv()


DEFAULT_MAX_GRID = 2 ** 24
DEFAULT_MEMORY_BUDGET = 4 * 1024 ** 3  # 4 GiB
DEFAULT_OVERSAMPLING = 64


@dataclass
class RuntimeSettings:
    max_grid: int = DEFAULT_MAX_GRID
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    workers: int = 1
    log_level: str = "INFO"
    default_oversampling: int = DEFAULT_OVERSAMPLING


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{name}={raw!r} non è un intero valido") from None
    if value < 1:
        raise ConfigError(f"{name} deve essere positivo, trovato {value}")
    return value


def get_runtime_settings(workers: Optional[int] = None) -> RuntimeSettings:
    """Legge la configurazione di runtime dalle variabili d'ambiente (anche da `.env`).

    Variabili riconosciute (tutte opzionali):
    - HERMITE_MAX_GRID: limite della griglia interna n = m·N (default 2**24)
    - HERMITE_MEMORY_BUDGET: budget di memoria in byte (default 4 GiB)
    - HERMITE_WORKERS: numero di processi (default: tutti i core)
    - HERMITE_LOG_LEVEL: livello di logging (default INFO)
    - HERMITE_DEFAULT_OVERSAMPLING: oversampling m di default (default 64)

    Esempio:
    export HERMITE_WORKERS=4
    """

    level = os.getenv("HERMITE_LOG_LEVEL", "INFO").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise ConfigError(f"HERMITE_LOG_LEVEL={level!r} non riconosciuto")

    return RuntimeSettings(
        max_grid=_env_int("HERMITE_MAX_GRID", DEFAULT_MAX_GRID),
        memory_budget=_env_int("HERMITE_MEMORY_BUDGET", DEFAULT_MEMORY_BUDGET),
        workers=workers if workers is not None else _env_int("HERMITE_WORKERS", os.cpu_count() or 1),
        log_level=level,
        default_oversampling=_env_int("HERMITE_DEFAULT_OVERSAMPLING", DEFAULT_OVERSAMPLING),
    )
