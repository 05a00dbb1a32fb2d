from __future__ import annotations

from typing import Optional


class HermiteError(Exception):
    """Radice comune degli errori della libreria."""


class ParameterDomainError(HermiteError, ValueError):
    """Parametro fuori dominio (H, q, k, lag, N, m, gridSize...)."""


class RegimeError(HermiteError, ValueError):
    """Statistica o costante non definita nel regime richiesto (es. c1 con 4H'-3 <= 0)."""


class EmbeddingFailureError(HermiteError, RuntimeError):
    """Autovalore negativo non trascurabile nell'embedding circolante."""


class FactorizationError(HermiteError, RuntimeError):
    def __init__(self, message: str, pivot: Optional[int] = None):
        super().__init__(message)
        self.pivot = pivot


class ResourceLimitError(HermiteError, RuntimeError):
    """Griglia interna o matrice densa oltre il limite configurato."""


class DegeneratePathError(HermiteError, ValueError):
    """Traiettoria con S_N = 0: input corrotto."""


class QuadratureAccuracyError(HermiteError, RuntimeError):
    def __init__(self, message: str, coarse: float, fine: float):
        super().__init__(message)
        self.coarse = coarse
        self.fine = fine


class RegressionError(HermiteError, ValueError):
    pass


class InsufficientSamplesError(HermiteError, ValueError):
    pass


class SchemaVersionError(HermiteError, ValueError):
    pass


class ConfigError(HermiteError, ValueError):
    pass
