from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Any

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from errors import EmbeddingFailureError, FactorizationError, ParameterDomainError, ResourceLimitError
from hurst_params import fgn_autocovariance

logger = logging.getLogger(__name__)

# Autovalori negativi sotto questa frazione del massimo sono rumore di arrotondamento
NEGATIVE_EIGENVALUE_TOL = 1e-10
CHOLESKY_MAX_N = 4096
# oltre questa lunghezza lo spettro (2n float) viene ricalcolato a ogni chiamata
SCALE_CACHE_MAX_N = 2 ** 18
_UINT64 = (1 << 64) - 1


# ==============================
#      STREAM RIPRODUCIBILI
# ==============================


def derive_stream_index(*key: Any) -> int:
    """Indice di stream a 64 bit derivato da una chiave (es. cella e replica).

    Stessa chiave -> stesso indice, su qualsiasi processo e ordine di esecuzione.
    """

    digest = hashlib.blake2b(repr(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RandomStream:
    """Coppia (seed, stream_index) da cui si ricava un generatore numpy indipendente.

    Le normali sono prodotte con `Generator.standard_normal` (ziggurat di PCG64).
    """

    seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed & _UINT64, spawn_key=(self.stream_index & _UINT64,))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, *key: Any) -> "RandomStream":
        return RandomStream(self.seed, derive_stream_index(self.stream_index, *key))


class SeriesKind(str, Enum):
    CIRCULANT = "circulant"
    CHOLESKY = "cholesky"


@dataclass
class GaussianSeries:
    hurst: float
    values: np.ndarray
    kind: SeriesKind


def _check_hurst(H: float, n: int) -> None:
    if not (0.0 < H < 1.0):
        raise ParameterDomainError(f"H={H} fuori da (0,1)")
    if n < 1:
        raise ParameterDomainError(f"n={n} deve essere >= 1")


# ==============================
#     EMBEDDING CIRCOLANTE
# ==============================


def _embedding_row(H: float, n: int) -> np.ndarray:
    # [γ(0), ..., γ(n), γ(n-1), ..., γ(1)]  -> lunghezza 2n
    gamma = fgn_autocovariance(H, np.arange(n + 1))
    gamma = np.atleast_1d(gamma)
    return np.concatenate([gamma, gamma[-2:0:-1]])


def embedding_eigenvalues(H: float, n: int) -> np.ndarray:
    """Autovalori della matrice circolante 2n x 2n che immerge la covarianza fGn."""
    _check_hurst(H, n)
    return np.fft.fft(_embedding_row(H, n)).real


def _sampling_scale(H: float, n: int) -> np.ndarray:
    # spettri grandi (2n float) non vanno in cache
    if n > SCALE_CACHE_MAX_N:
        return _compute_sampling_scale(H, n)
    return _cached_sampling_scale(H, n)


def _compute_sampling_scale(H: float, n: int) -> np.ndarray:
    eig = embedding_eigenvalues(H, n)
    lam_max = float(eig.max())
    lam_min = float(eig.min())
    if lam_min < -NEGATIVE_EIGENVALUE_TOL * lam_max:
        raise EmbeddingFailureError(
            f"embedding non semidefinito per H={H}, n={n}: min autovalore {lam_min:.3e}"
        )
    if lam_min < 0.0:
        logger.debug("Autovalori negativi trascurabili azzerati (min=%.3e) per H=%s n=%d", lam_min, H, n)
    scale = np.sqrt(np.clip(eig, 0.0, None) / eig.size)
    scale.setflags(write=False)
    return scale


_cached_sampling_scale = lru_cache(maxsize=16)(_compute_sampling_scale)


def embedded_autocovariance(H: float, n: int) -> np.ndarray:
    """Covarianza effettiva del generatore circolante, ricavata dallo spettro (dopo il clamp)."""
    scale = _sampling_scale(H, n)
    return np.fft.ifft(scale ** 2 * scale.size).real[:n]


def generate_fgn_circulant(H: float, n: int, stream: RandomStream) -> GaussianSeries:
    """fGn esatto di lunghezza n con il metodo di Davies-Harte, costo O(n log n)."""
    _check_hurst(H, n)
    scale = _sampling_scale(H, n)
    size = scale.size
    rng = stream.generator()
    z = rng.standard_normal(2 * size)
    w = scale * (z[:size] + 1j * z[size:])
    values = np.fft.fft(w).real[:n]
    return GaussianSeries(hurst=H, values=values, kind=SeriesKind.CIRCULANT)


# ==============================
#        ORACOLO CHOLESKY
# ==============================


def toeplitz_covariance(H: float, n: int) -> np.ndarray:
    return linalg.toeplitz(np.atleast_1d(fgn_autocovariance(H, np.arange(n))))


def generate_fgn_cholesky(H: float, n: int, stream: RandomStream) -> GaussianSeries:
    """fGn tramite fattorizzazione di Cholesky della covarianza di Toeplitz densa (O(n^3))."""
    _check_hurst(H, n)
    if n > CHOLESKY_MAX_N:
        raise ResourceLimitError(f"Cholesky limitato a n <= {CHOLESKY_MAX_N}, richiesto n={n}")

    factor, info = lapack.dpotrf(toeplitz_covariance(H, n), lower=1, clean=1)
    if info > 0:
        raise FactorizationError(
            f"covarianza non definita positiva al pivot {info - 1} (H={H}, n={n})", pivot=info - 1
        )
    if info < 0:
        raise FactorizationError(f"argomento {-info} non valido in dpotrf")

    z = stream.generator().standard_normal(n)
    return GaussianSeries(hurst=H, values=factor @ z, kind=SeriesKind.CHOLESKY)
