from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy import special

from errors import ParameterDomainError, QuadratureAccuracyError, ResourceLimitError
from fgn_engine import RandomStream, generate_fgn_circulant
from hurst_params import (
    HurstParams,
    d_constant,
    derive_params,
    fgn_autocovariance,
    hermite_polynomial,
    kernel_constant,
)
from settings import get_runtime_settings
from worker_pool import ordered_map

logger = logging.getLogger(__name__)

DEFAULT_MARGINAL_OVERSAMPLING = 2 ** 14
QUADRATIC_FORM_MAX_GRID = 2048
QUADRATIC_FORM_NODES = 32
QUADRATIC_FORM_TOL = 1e-6
# sottodiagonali con media di cella e nodi per lato di cella
QUADRATIC_FORM_BAND = 3
QUADRATIC_FORM_SUBCELL = 8
# pannelli graduati in s per la quasi-singolarità (u - y_i)^{H'-3/2} vicino alla diagonale
_PANEL_BREAKS = np.array([0.0, 4.0 ** -6, 4.0 ** -5, 4.0 ** -4, 4.0 ** -3, 4.0 ** -2, 4.0 ** -1, 1.0])


@dataclass
class HermitePath:
    """Traiettoria di Z^(q,H) sulla griglia {i/N}, con i metadati di simulazione."""

    params: HurstParams
    N: int
    oversampling: int
    values: np.ndarray
    sigma_n: float
    provenance: RandomStream

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) / self.N


# ==============================
#        NORMALIZZAZIONE
# ==============================


@lru_cache(maxsize=64)
def sigma_n(q: int, h_prime: float, n: int) -> float:
    """Deviazione standard esatta di sum_{i<=n} H_q(X_i) per fGn X di Hurst h_prime.

    La doppia somma sugli indici è ridotta ai lag: n + 2 sum_k (n-k) rho(k)^q.
    """

    if q < 1 or n < 1:
        raise ParameterDomainError(f"sigma_n richiede q >= 1 e n >= 1 (q={q}, n={n})")
    lags = np.arange(1, n, dtype=float)
    rho = np.asarray(fgn_autocovariance(h_prime, lags), dtype=float)
    total = float(n) + 2.0 * float(np.sum((n - lags) * rho ** q))
    return math.sqrt(math.factorial(q) * total)


# ==============================
#      SIMULAZIONE PER AGGREGAZIONE
# ==============================


def simulate_path(
    params: HurstParams,
    N: int,
    m: int,
    stream: RandomStream,
    max_grid: Optional[int] = None,
) -> HermitePath:
    """Simula Z^(q,H) su {j/N} aggregando H_q di un fGn a Hurst H' su n = m·N punti.

    values[j] = sigma_n^{-1} * sum_{i <= j·m} H_q(X_i), quindi E[values[N]^2] = 1 esattamente.
    """

    if N < 1 or m < 1:
        raise ParameterDomainError(f"N e m devono essere >= 1 (N={N}, m={m})")
    n = m * N
    ceiling = max_grid if max_grid is not None else get_runtime_settings().max_grid
    if n > ceiling:
        raise ResourceLimitError(f"griglia interna n={n} oltre il limite {ceiling}")

    x = generate_fgn_circulant(params.h_prime, n, stream).values
    partial = np.cumsum(hermite_polynomial(params.q, x))
    sigma = sigma_n(params.q, params.h_prime, n)

    values = np.empty(N + 1)
    values[0] = 0.0
    values[1:] = partial[m - 1 :: m] / sigma
    return HermitePath(params=params, N=N, oversampling=m, values=values, sigma_n=sigma, provenance=stream)


def _marginal_task(task: Tuple[HurstParams, int, RandomStream]) -> float:
    params, m, stream = task
    return float(simulate_path(params, 1, m, stream).values[-1])


def simulate_rosenblatt_marginal(
    h_second: float,
    reps: int,
    stream: RandomStream,
    m: int = DEFAULT_MARGINAL_OVERSAMPLING,
    workers: int = 1,
) -> np.ndarray:
    """Campioni indipendenti di Z^(2,h_second)_1, uno per stream derivato."""
    params = derive_params(h_second, 2)
    tasks: List[Tuple[HurstParams, int, RandomStream]] = [
        (params, m, stream.child("rosenblatt-marginal", r)) for r in range(reps)
    ]
    logger.info("Campionamento Rosenblatt: %d repliche, H''=%s, m=%d", reps, h_second, m)
    return np.asarray(ordered_map(_marginal_task, tasks, workers), dtype=float)


# ==============================
#   ORACOLO A FORMA QUADRATICA (q=2)
# ==============================


def _graded_rule(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    lo, hi = _PANEL_BREAKS[:-1, None], _PANEL_BREAKS[1:, None]
    half = 0.5 * (hi - lo)
    return (lo + half * (x + 1.0)).ravel(), (half * w).ravel()


def _cell_weights(grid_size: int, h_prime: float) -> np.ndarray:
    # valore quadratico medio di y^{1/2-H'} sulla cella: conserva la massa L2 vicino a y = 0
    edges = np.arange(grid_size + 1) / grid_size
    e = 2.0 - 2.0 * h_prime
    mean_sq = (edges[1:] ** e - edges[:-1] ** e) / e * grid_size
    return np.sqrt(mean_sq)


def _kernel_pairs(h_prime: float, y_low: np.ndarray, y_high: np.ndarray, nodes: int) -> np.ndarray:
    """∫_{y_high}^1 u^{2H'-1} (u-y_low)^{H'-3/2} (u-y_high)^{H'-3/2} du, elemento per elemento.

    Con u = y_high + L s^p, p = 1/(H'-1/2), il peso (u-y_high)^{H'-3/2} viene assorbito.
    """

    s, w = _graded_rule(nodes)
    p = 1.0 / (h_prime - 0.5)
    length = 1.0 - y_high
    u = y_high[:, None] + length[:, None] * s[None, :] ** p
    integrand = u ** (2.0 * h_prime - 1.0) * (u - y_low[:, None]) ** (h_prime - 1.5)
    return p * length ** (h_prime - 0.5) * (integrand @ w)


def _kernel_column(h_prime: float, y_lower: np.ndarray, y_j: float, nodes: int) -> np.ndarray:
    return _kernel_pairs(h_prime, y_lower, np.full(y_lower.shape, y_j), nodes)


def _offset_cell_average(h_prime: float, grid_size: int, offset: int) -> np.ndarray:
    # media del nucleo sulle coppie di celle (i, i+offset), prodotto tensoriale di Gauss-Legendre
    t, w = np.polynomial.legendre.leggauss(QUADRATIC_FORM_SUBCELL)
    t, w = 0.5 * (t + 1.0), 0.5 * w
    base = np.arange(grid_size - offset, dtype=float)
    total = np.zeros(base.size)
    for ta, wa in zip(t, w):
        for tb, wb in zip(t, w):
            y_low = (base + ta) / grid_size
            y_high = (base + offset + tb) / grid_size
            total += wa * wb * _kernel_pairs(h_prime, y_low, y_high, QUADRATIC_FORM_NODES)
    return total


def _diagonal_cell_average(h_prime: float, grid_size: int) -> np.ndarray:
    """Media del nucleo su ogni cella diagonale, dove diverge come |y_1 - y_2|^{2H'-2}.

    Con y_2 - y_1 = delta/g la singolarità diventa il peso di Jacobi delta^{2H'-2} (1 - delta).
    """

    e = 2.0 * h_prime - 2.0
    x, wx = special.roots_jacobi(QUADRATIC_FORM_SUBCELL, 1.0, e)
    delta = 0.5 * (x + 1.0)
    wd = wx * 0.5 ** (e + 2.0)
    t, wt = np.polynomial.legendre.leggauss(QUADRATIC_FORM_SUBCELL)
    t, wt = 0.5 * (t + 1.0), 0.5 * wt
    base = np.arange(grid_size, dtype=float)
    total = np.zeros(grid_size)
    for dk, wk in zip(delta, wd):
        for tk, wtk in zip(t, wt):
            y_low = (base + (1.0 - dk) * tk) / grid_size
            y_high = y_low + dk / grid_size
            pairs = _kernel_pairs(h_prime, y_low, y_high, QUADRATIC_FORM_NODES)
            total += wk * wtk * dk ** -e * pairs
    return 2.0 * total


@lru_cache(maxsize=4)
def _quadratic_form_matrix(h_second: float, grid_size: int) -> np.ndarray:
    """Matrice simmetrica A del nucleo proiettato sulle celle, diagonale inclusa.

    Lontano dalla diagonale A_ij è il valore al punto medio. Nelle prime
    QUADRATIC_FORM_BAND sottodiagonali e sulla diagonale è la media di cella.
    """

    h_prime = 1.0 + (h_second - 1.0) / 2.0
    y = (np.arange(grid_size) + 0.5) / grid_size
    weights = _cell_weights(grid_size, h_prime)
    c2 = kernel_constant(h_prime) ** 2

    # controllo di raffinamento sulle coppie adiacenti, le più vicine alla singolarità
    for j in (1, grid_size // 2, grid_size - 1):
        coarse = _kernel_column(h_prime, y[j - 1 : j], y[j], QUADRATIC_FORM_NODES // 2)[0]
        fine = _kernel_column(h_prime, y[j - 1 : j], y[j], QUADRATIC_FORM_NODES)[0]
        if abs(fine - coarse) > QUADRATIC_FORM_TOL * abs(fine):
            raise QuadratureAccuracyError(
                f"quadratura non convergente vicino alla diagonale (cella {j}, griglia {grid_size})",
                coarse=float(coarse),
                fine=float(fine),
            )

    kernel = np.zeros((grid_size, grid_size))
    for j in range(1, grid_size):
        kernel[:j, j] = _kernel_column(h_prime, y[:j], y[j], QUADRATIC_FORM_NODES)
    for offset in range(1, min(QUADRATIC_FORM_BAND, grid_size - 1) + 1):
        rows = np.arange(grid_size - offset)
        kernel[rows, rows + offset] = _offset_cell_average(h_prime, grid_size, offset)
    kernel += kernel.T
    kernel[np.diag_indices(grid_size)] = _diagonal_cell_average(h_prime, grid_size)

    matrix = c2 * weights[:, None] * weights[None, :] * kernel
    matrix.setflags(write=False)
    logger.debug("Matrice della forma quadratica pronta (H''=%s, griglia=%d)", h_second, grid_size)
    return matrix


def _check_quadratic_form_args(h_second: float, grid_size: int) -> None:
    if not (0.5 < h_second < 1.0):
        raise ParameterDomainError(f"h_second={h_second} fuori da (1/2,1)")
    if not (2 <= grid_size <= QUADRATIC_FORM_MAX_GRID):
        raise ParameterDomainError(f"gridSize={grid_size} fuori da [2, {QUADRATIC_FORM_MAX_GRID}]")


def quadratic_form_variance(h_second: float, grid_size: int) -> float:
    """Varianza esatta dell'oracolo discreto: 2 d^2 sum_ij A_ij^2 / gridSize^2."""
    _check_quadratic_form_args(h_second, grid_size)
    matrix = _quadratic_form_matrix(h_second, grid_size)
    d = d_constant(derive_params(h_second, 2))
    return float(2.0 * d ** 2 * np.sum(matrix ** 2) / grid_size ** 2)


def rosenblatt_quadratic_form_oracle(h_second: float, grid_size: int, stream: RandomStream) -> float:
    """Un campione di Z^(2,h_second)_1 dalla discretizzazione dell'integrale doppio di Wiener.

    d(h_second,2) * (sum_ij A_ij xi_i xi_j - tr(A)/gridSize) con xi ~ N(0, 1/gridSize):
    il termine diagonale è rinormalizzato (xi_i^2 - 1/gridSize), quindi la media è zero.
    """

    _check_quadratic_form_args(h_second, grid_size)
    matrix = _quadratic_form_matrix(h_second, grid_size)
    d = d_constant(derive_params(h_second, 2))
    xi = stream.generator().standard_normal(grid_size) / math.sqrt(grid_size)
    return float(d * (xi @ matrix @ xi - np.trace(matrix) / grid_size))


def rosenblatt_quadratic_form_samples(
    h_second: float, grid_size: int, reps: int, stream: RandomStream
) -> np.ndarray:
    """reps campioni dell'oracolo, uno per stream derivato (stessa legge di chiamate ripetute)."""
    _check_quadratic_form_args(h_second, grid_size)
    matrix = _quadratic_form_matrix(h_second, grid_size)
    d = d_constant(derive_params(h_second, 2))
    xi = np.stack(
        [stream.child("quadratic-form", r).generator().standard_normal(grid_size) for r in range(reps)]
    ) / math.sqrt(grid_size)
    return d * (np.einsum("ri,ri->r", xi @ matrix, xi) - np.trace(matrix) / grid_size)
