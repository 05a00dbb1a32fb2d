from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, special

from errors import ParameterDomainError, QuadratureAccuracyError
from hurst_params import HurstParams, a_constant, d_constant, fgn_autocovariance

logger = logging.getLogger(__name__)

MAX_N = 2 ** 10
# pannelli geometrici per le celle singolari: rapporto, cifre decimali richieste al primo pannello, tetto
_PANEL_RATIO = 0.15
_PANEL_DECADES = 10.0
_MAX_LEVELS = 24
_INNER_RTOL = 1e-12
# elementi per blocco nel calcolo vettoriale dei lag lontani
_BLOCK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class QuadratureSpec:
    nodes_per_cell: int = 16
    diagonal_splitting: bool = True
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.nodes_per_cell < 4:
            raise ParameterDomainError(f"nodes_per_cell={self.nodes_per_cell} deve essere >= 4")


# ==============================
#        REGOLE DI QUADRATURA
# ==============================


@lru_cache(maxsize=32)
def _jacobi_unit(nodes: int, left: float) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Jacobi su [0,1] per il peso s^left."""
    x, w = special.roots_jacobi(nodes, 0.0, left)
    return 0.5 * (x + 1.0), w / 2.0 ** (left + 1.0)


@lru_cache(maxsize=32)
def _panel_rule(nodes: int, levels: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss-Legendre composito su [0,1], pannelli geometrici di rapporto _PANEL_RATIO verso entrambi gli estremi.

    Restituisce (v, 1-v, pesi); il complemento è calcolato senza cancellazione vicino a 1.
    """

    x, w = np.polynomial.legendre.leggauss(nodes)
    breaks = np.concatenate(([0.0], _PANEL_RATIO ** np.arange(levels, 0, -1, dtype=float), [0.5]))
    lo, hi = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (hi - lo)
    near = (lo + half * (x + 1.0)).ravel()
    weights = (half * w).ravel()
    v = np.concatenate((near, 1.0 - near[::-1]))
    comp = np.concatenate((1.0 - near, near[::-1]))
    return v, comp, np.concatenate((weights, weights[::-1]))


def _levels(exponent: float) -> int:
    # il primo pannello [0, r^L] pesa circa (r^L)^{2+exponent}
    decades = _PANEL_DECADES / ((2.0 + exponent) * -math.log10(_PANEL_RATIO))
    return int(min(_MAX_LEVELS, max(2, math.ceil(decades))))


def _exponents(params: HurstParams, k: int) -> Tuple[float, float]:
    alpha = 2.0 * params.h_prime - 2.0
    return alpha * k, alpha * (params.q - k)


def _prefactor(params: HurstParams) -> float:
    return a_constant(params.h_prime) ** (2 * params.q) * d_constant(params) ** 4


# ==============================
#     CELLE LONTANE (lag >= 2)
# ==============================


def _psi_part(
    p: np.ndarray, r: np.ndarray, right: bool, gamma: float, beta: float, s: np.ndarray, ws: np.ndarray
) -> np.ndarray:
    # Ψ(p, r) = p^{1+γ} L(p, r) + (1-p)^{1+γ} R(p, r); L e R sono regolari se r dista >= 1 da [0,1]
    pe = p[..., None]
    re = r[..., None]
    x = pe + (1.0 - pe) * s if right else pe * (1.0 - s)
    return np.sum(ws * np.abs(x - re) ** beta, axis=-1)


def _far_lag_values(lags: np.ndarray, gamma: float, beta: float, nodes: int) -> np.ndarray:
    """Integrale sulla cella unitaria per lag >= 2, condizionando su (y, z').

    La funzione integranda si fattorizza in Ψ(y, z'-lag) Ψ(z', y+lag); espandendo le due
    parti di ciascun Ψ restano quattro integrali regolari contro i pesi y^{1+γ} o (1-y)^{1+γ},
    ognuno calcolato con una regola di Gauss-Jacobi tensoriale.
    """

    x, wx = _jacobi_unit(nodes, 1.0 + gamma)
    s, ws = _jacobi_unit(nodes, gamma)
    sides = ((False, x), (True, 1.0 - x))
    weight = wx[:, None] * wx[None, :]

    out = np.zeros(lags.size)
    block = max(1, _BLOCK_ELEMENTS // nodes ** 3)
    for start in range(0, lags.size, block):
        lag = lags[start : start + block, None, None].astype(float)
        shape = (lag.shape[0], nodes, nodes)
        for y_right, y_nodes in sides:
            y = np.broadcast_to(y_nodes[None, :, None], shape)
            for z_right, z_nodes in sides:
                zp = np.broadcast_to(z_nodes[None, None, :], shape)
                one = _psi_part(y, zp - lag, y_right, gamma, beta, s, ws)
                two = _psi_part(zp, y + lag, z_right, gamma, beta, s, ws)
                out[start : start + block] += np.einsum("ab,lab->l", weight, one * two)
    return out


# ==============================
#   CELLE SINGOLARI (lag 0 e 1)
# ==============================


def _quad_weighted(func, lo: float, hi: float, left: float) -> float:
    if hi <= lo:
        return 0.0
    value, _ = integrate.quad(
        func, lo, hi, weight="alg", wvar=(left, 0.0), epsabs=0.0, epsrel=_INNER_RTOL, limit=200
    )
    return value


def _split_factors(lag: int, gamma: float, beta: float, v: float, w: float) -> Tuple[float, float]:
    """Fattori P(v), Q(v) della riduzione a piramide, con i pesi singolari assorbiti.

    lag 0: P = ∫(1-z)^γ |z-v|^β,  Q = ∫(1-x)^β |x-v|^γ
    lag 1: P = ∫(1-z)^γ (z+v)^β,  Q = ∫(1+u)^β |u-v|^γ
    """

    if lag == 0:
        tail = w ** (1.0 + gamma + beta)
        p_val = _quad_weighted(lambda s: (w + s) ** gamma, 0.0, v, beta) + tail * special.beta(1.0 + beta, 1.0 + gamma)
        q_val = _quad_weighted(lambda s: (w + s) ** beta, 0.0, v, gamma) + tail * special.beta(1.0 + gamma, 1.0 + beta)
        return p_val, q_val

    if v < 1e-14:
        p_val = special.beta(1.0 + beta, 1.0 + gamma)
    else:
        p_val, _ = integrate.quad(
            lambda z: (z + v) ** beta, 0.0, 1.0, weight="alg", wvar=(0.0, gamma),
            epsabs=0.0, epsrel=_INNER_RTOL, limit=200,
        )
    q_val = _quad_weighted(lambda s: (1.0 + v - s) ** beta, 0.0, v, gamma)
    q_val += _quad_weighted(lambda s: (1.0 + v + s) ** beta, 0.0, w, gamma)
    return p_val, q_val


def _plain_factors(lag: int, gamma: float, beta: float, v: float) -> Tuple[float, float]:
    # senza spezzamento: quadratura adattiva generica con il punto singolare come breakpoint
    opts = dict(epsabs=0.0, epsrel=_INNER_RTOL, limit=200, points=[v])
    if lag == 0:
        p_val, _ = integrate.quad(lambda z: (1.0 - z) ** gamma * abs(z - v) ** beta, 0.0, 1.0, **opts)
        q_val, _ = integrate.quad(lambda x: (1.0 - x) ** beta * abs(x - v) ** gamma, 0.0, 1.0, **opts)
    else:
        p_val, _ = integrate.quad(lambda z: (1.0 - z) ** gamma * (z + v) ** beta, 0.0, 1.0, **opts)
        q_val, _ = integrate.quad(lambda u: (1.0 + u) ** beta * abs(u - v) ** gamma, 0.0, 1.0, **opts)
    return p_val, q_val


@lru_cache(maxsize=256)
def _singular_lag_value(lag: int, gamma: float, beta: float, nodes: int, splitting: bool) -> float:
    """Integrale per lag 0 o 1.

    L'integranda è omogenea di grado c = 2(γ+β): sulla decomposizione del cubo in piramidi
    la parte radiale vale 1/(4+c) e le quattro piramidi coincidono per simmetria.
    Sulla faccia y=1 la variabile centrale v separa le altre due; P(v) e Q(v) hanno potenze
    frazionarie in v e 1-v, trattate con pannelli geometrici verso entrambi gli estremi.
    """

    c = 2.0 * (gamma + beta)
    if splitting:
        v, w, wv = _panel_rule(nodes, _levels(min(gamma, beta, gamma + beta)))
        factors = [_split_factors(lag, gamma, beta, vi, wi) for vi, wi in zip(v, w)]
    else:
        x, wl = np.polynomial.legendre.leggauss(nodes)
        v, wv = 0.5 * (x + 1.0), 0.5 * wl
        factors = [_plain_factors(lag, gamma, beta, vi) for vi in v]
    products = np.array([p_val * q_val for p_val, q_val in factors])
    return 4.0 / (4.0 + c) * float(wv @ products)


# ==============================
#        API PUBBLICA
# ==============================


def _raw_values(lags: np.ndarray, gamma: float, beta: float, nodes: int, splitting: bool) -> np.ndarray:
    out = np.empty(lags.size)
    near = lags <= 1
    for idx in np.flatnonzero(near):
        out[idx] = _singular_lag_value(int(lags[idx]), gamma, beta, nodes, splitting)
    if np.any(~near):
        out[~near] = _far_lag_values(lags[~near], gamma, beta, nodes)
    return out


def _refined_values(params: HurstParams, k: int, lags: np.ndarray, spec: QuadratureSpec) -> np.ndarray:
    gamma, beta = _exponents(params, k)
    coarse = _raw_values(lags, gamma, beta, spec.nodes_per_cell, spec.diagonal_splitting)
    fine = _raw_values(lags, gamma, beta, 2 * spec.nodes_per_cell, spec.diagonal_splitting)
    gap = np.abs(fine - coarse)
    bad = gap > spec.tolerance * np.abs(fine)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise QuadratureAccuracyError(
            f"raffinamento fallito al lag {int(lags[i])} (k={k}, H={params.H}, q={params.q}): "
            f"{coarse[i]:.12g} -> {fine[i]:.12g}",
            coarse=float(coarse[i]),
            fine=float(fine[i]),
        )
    logger.debug("Quadratura ok su %d lag (k=%d), scarto max %.2e", lags.size, k, float(np.max(gap / np.abs(fine))))
    return _prefactor(params) * fine


def _check_k(params: HurstParams, k: int, upper: int) -> None:
    if not (0 <= k <= upper):
        raise ParameterDomainError(f"k={k} fuori da [0, {upper}] per q={params.q}")


def _check_n(N: int) -> None:
    if not (1 <= N <= MAX_N):
        raise ParameterDomainError(f"N={N} fuori da [1, {MAX_N}]")


def contraction_inner_product(
    params: HurstParams, k: int, lag: int, spec: QuadratureSpec = QuadratureSpec()
) -> float:
    """Integrale quadruplo riscalato sulla cella unitaria, con il prefattore a(H')^{2q} d(H,q)^4.

    ∫_{[0,1]^4} |y-z|^{γ} |y'-z'|^{γ} |y-y'+lag|^{β} |z-z'+lag|^{β},
    γ = (2H'-2)k, β = (2H'-2)(q-k).
    """

    _check_k(params, k, params.q - 1)
    if lag < 0:
        raise ParameterDomainError(f"lag={lag} negativo")
    return float(_refined_values(params, k, np.array([int(lag)]), spec)[0])


def lag_inner_products(params: HurstParams, k: int, N: int, spec: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """contraction_inner_product per tutti i lag 0..N-1."""
    _check_k(params, k, params.q - 1)
    return _refined_values(params, k, np.arange(N), spec)


def _assembled(params: HurstParams, k: int, N: int, spec: QuadratureSpec) -> float:
    values = lag_inner_products(params, k, N, spec)
    lags = np.arange(N)
    weights = np.where(lags == 0, float(N), 2.0 * (N - lags))
    exponent = 4.0 * params.H - 2.0 - 4.0 - (2.0 * params.h_prime - 2.0) * 2 * params.q
    return math.factorial(2 * params.q - 2 * k) * N ** exponent * float(weights @ values)


def expected_T2_squared(params: HurstParams, N: int, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """E[T_2^2] esatto, con la doppia somma su (i,j) ridotta ai lag per stazionarietà."""
    _check_n(N)
    return _assembled(params, params.q - 1, N, spec)


def expected_T2q2k_squared_bound(
    params: HurstParams, k: int, N: int, spec: QuadratureSpec = QuadratureSpec()
) -> float:
    """Maggiorazione di E[T_{2q-2k}^2] (simmetrizzazione ||g~|| <= ||g||), 0 <= k <= q-2."""
    _check_k(params, k, params.q - 2)
    _check_n(N)
    return _assembled(params, k, N, spec)


def chaos_variance_asymptote(params: HurstParams, k: int, N: int) -> Optional[float]:
    """Asintoto da somma di Riemann di E[T_{2q-2k}^2]; per k = q-1 coincide con c1 N^{2(2H'-2)}.

    None quando 2(2H'-2)(q-k) <= -1 (serie dei lag convergente, regime gaussiano).
    """

    _check_k(params, k, params.q - 1)
    gamma, beta = _exponents(params, k)
    if 2.0 * beta <= -1.0:
        return None
    cell = 2.0 / ((1.0 + gamma) * (2.0 + gamma))
    riemann = 1.0 / ((1.0 + 2.0 * beta) * (2.0 + 2.0 * beta))
    return math.factorial(2 * params.q - 2 * k) * 2.0 * _prefactor(params) * cell ** 2 * riemann * N ** (2.0 * beta)


def fbm_quadratic_variation_variance(H: float, N: int) -> float:
    """Var(V_N) per il fBm per somma diretta O(N^2): (2/N^2) sum_{i,j} rho(i-j)^2."""
    idx = np.arange(N)
    rho = fgn_autocovariance(H, np.abs(np.subtract.outer(idx, idx)))
    return 2.0 / N ** 2 * float(np.sum(np.asarray(rho) ** 2))
