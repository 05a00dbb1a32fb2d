from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Union

import numpy as np
from numpy.polynomial import hermite_e
from scipy import integrate, special

from errors import ParameterDomainError, RegimeError

ArrayLike = Union[float, np.ndarray]

# Soglia per riconoscere H = 3/4 nelle costanti di regime
CRITICAL_H = 0.75
REGIME_TOL = 1e-12

# Termini sommati esplicitamente nella serie S(H); il resto va in forma chiusa
SERIES_TERMS = 1024


# ==============================
#        PARAMETRI
# ==============================


@dataclass(frozen=True)
class HurstParams:
    """Parametri (H, q) del processo di Hermite e gli indici derivati.

    - h_prime = 1 + (H-1)/q  (Hurst del rumore fGn che guida il processo)
    - h_second = 2*h_prime - 1  (parametro della Rosenblatt limite)
    """

    H: float
    q: int
    h_prime: float
    h_second: float


def derive_params(H: float, q: int) -> HurstParams:
    if isinstance(q, bool) or not isinstance(q, (int, np.integer)) or q < 1:
        raise ParameterDomainError(f"q deve essere un intero >= 1, trovato {q!r}")
    H = float(H)
    if not (0.5 < H < 1.0):
        raise ParameterDomainError(f"H deve stare in (1/2, 1), trovato {H}")
    q = int(q)
    h_prime = 1.0 + (H - 1.0) / q
    return HurstParams(H=H, q=q, h_prime=h_prime, h_second=2.0 * h_prime - 1.0)


def a_constant(h_prime: float) -> float:
    return h_prime * (2.0 * h_prime - 1.0)


def d_constant(p: HurstParams) -> float:
    """d(H,q) = (H(2H-1))^{1/2} / (q! (H'(2H'-1))^q)^{1/2}. Vale 1 per q=1."""
    num = p.H * (2.0 * p.H - 1.0)
    den = math.factorial(p.q) * a_constant(p.h_prime) ** p.q
    return math.sqrt(num) / math.sqrt(den)


def c1_constant(p: HurstParams) -> float:
    """Costante c_{1,H} della varianza asintotica di T_2.

    Solleva RegimeError se 4H'-3 <= 0 (q=1 e H <= 3/4: regime gaussiano).
    """

    hp = p.h_prime
    if 4.0 * hp - 3.0 <= 0.0:
        raise RegimeError(
            f"c1 non definita per H={p.H}, q={p.q}: 4H'-3 = {4.0 * hp - 3.0:.6g} <= 0"
        )
    d = d_constant(p)
    a = a_constant(hp)
    q = p.q
    den = (
        (4.0 * hp - 3.0)
        * (4.0 * hp - 2.0)
        * ((2.0 * hp - 2.0) * (q - 1) + 1.0) ** 2
        * ((hp - 1.0) * (q - 1) + 1.0) ** 2
    )
    return 4.0 * d ** 4 * a ** (2 * q) / den


def combinatorial_coefficient(q: int, k: int) -> float:
    """c_{2q-2k} = k! binom(q,k)^2, per 0 <= k <= q-1 (k = q-1 è il c_2 di T_2)."""
    if not (0 <= k <= q - 1):
        raise ParameterDomainError(f"k={k} fuori da [0, {q - 1}] per q={q}")
    return float(math.factorial(k) * math.comb(q, k) ** 2)


def z_constant(p: HurstParams, k: int) -> float:
    if not (1 <= k <= p.q - 2):
        raise ParameterDomainError(f"z_{{k,H}} richiede 1 <= k <= q-2, trovato k={k}, q={p.q}")
    hp = p.h_prime
    d = d_constant(p)
    return d ** 2 * a_constant(hp) ** k / ((hp - 1.0) * k + 1.0) / (2.0 * (hp - 1.0) + 1.0)


def regime_of(H: float) -> str:
    """Regime della variazione quadratica per q=1: 'gaussian', 'critical' o 'rosenblatt'."""
    if abs(H - CRITICAL_H) <= REGIME_TOL:
        return "critical"
    return "gaussian" if H < CRITICAL_H else "rosenblatt"


def chaos_decay_exponent(p: HurstParams, k: int) -> float:
    """Esponente in N di E[T_{2q-2k}^2]: (2H'-2)(2q-2k), saturato a -1 quando la serie converge."""
    if not (0 <= k <= p.q - 1):
        raise ParameterDomainError(f"k={k} fuori da [0, {p.q - 1}]")
    return max((2.0 * p.h_prime - 2.0) * (2 * p.q - 2 * k), -1.0)


# ==============================
#   COSTANTI DI REGIME (x, b)
# ==============================


def _series_term(H: float, ell: np.ndarray) -> np.ndarray:
    # g(l) = 2 l^{2H} - (l+1)^{2H} - (l-1)^{2H}, scritto con expm1/log1p per l grande
    p = 2.0 * H
    inv = 1.0 / ell
    return -ell ** p * (np.expm1(p * np.log1p(inv)) + np.expm1(p * np.log1p(-inv)))


def fgn_square_series(H: float) -> Optional[float]:
    """S(H) = sum_{l>=1} (2l^{2H} - (l+1)^{2H} - (l-1)^{2H})^2, definita per H < 3/4.

    I primi SERIES_TERMS termini sono sommati direttamente; la coda usa lo sviluppo
    g(l)^2 = c^2 l^{4H-4} (1 + 2 kappa l^{-2} + ...) con la zeta di Hurwitz.
    Restituisce None se la serie diverge (H >= 3/4).
    """

    if H >= CRITICAL_H - REGIME_TOL:
        return None
    p = 2.0 * H
    ell = np.arange(2, SERIES_TERMS + 1, dtype=float)
    head = (2.0 - 2.0 ** p) ** 2 + float(np.sum(_series_term(H, ell) ** 2))
    c2 = (p * (p - 1.0)) ** 2
    kappa = (p - 2.0) * (p - 3.0) / 12.0
    s = 4.0 - 2.0 * p
    tail = c2 * (special.zeta(s, SERIES_TERMS + 1) + 2.0 * kappa * special.zeta(s + 2.0, SERIES_TERMS + 1))
    return head + float(tail)


@dataclass
class BConstants:
    b1: Dict[int, Optional[float]] = field(default_factory=dict)
    b2: Dict[int, Optional[float]] = field(default_factory=dict)
    b3: Dict[int, Optional[float]] = field(default_factory=dict)


def b_constants(p: HurstParams) -> BConstants:
    """Costanti b_{1,H,k}, b_{2,H,k}, b_{3,H,k} per k = 1..q-1.

    Ogni voce è None fuori dal proprio regime (b1: H > 3/4, b2: H < 3/4, b3: H = 3/4).
    """

    regime = regime_of(p.H)
    d = d_constant(p)
    a = a_constant(p.h_prime)
    base = d ** 4 * a ** (2 * p.q) * math.factorial(p.q) ** 2
    series = fgn_square_series(p.H)

    out = BConstants()
    for k in range(1, p.q):
        weight = base * math.comb(p.q, k) ** 2
        out.b1[k] = (
            weight * 2.0 / ((4.0 * p.H - 3.0) * (4.0 * p.H - 2.0)) if regime == "rosenblatt" else None
        )
        out.b2[k] = weight * series if regime == "gaussian" else None
        out.b3[k] = weight * 2.0 * 0.5 if regime == "critical" else None
    return out


@dataclass
class XConstants:
    x1: Optional[float]
    x2: Optional[float]
    x3: Optional[float]


def x_constants(p: HurstParams) -> XConstants:
    """Costanti di regime della varianza di T_{2q}: x1 (H<3/4), x2 (H>3/4), x3 (H=3/4)."""
    H = p.H
    b = b_constants(p)
    regime = regime_of(H)
    x1 = x2 = x3 = None
    if regime == "gaussian":
        x1 = sum(b.b2.values()) + 1.0 + 0.5 * fgn_square_series(H)
    elif regime == "rosenblatt":
        x2 = sum(b.b1.values()) + H ** 2 * (2.0 * H - 1.0) / (4.0 * H - 3.0)
    else:
        x3 = sum(b.b3.values()) + 9.0 / 16.0
    return XConstants(x1=x1, x2=x2, x3=x3)


@dataclass
class ConstantSet:
    d: float
    a: float
    c1: Optional[float]
    comb: Dict[int, float]
    z: Dict[int, float]
    x: XConstants
    b: BConstants


def constant_set(p: HurstParams) -> ConstantSet:
    try:
        c1 = c1_constant(p)
    except RegimeError:
        c1 = None
    return ConstantSet(
        d=d_constant(p),
        a=a_constant(p.h_prime),
        c1=c1,
        comb={k: combinatorial_coefficient(p.q, k) for k in range(p.q)},
        z={k: z_constant(p, k) for k in range(1, p.q - 1)},
        x=x_constants(p),
        b=b_constants(p),
    )


# ==============================
#   POLINOMI E COVARIANZE
# ==============================


def hermite_polynomial(q: int, x: ArrayLike) -> ArrayLike:
    """Polinomio di Hermite probabilistico (monico) H_q valutato in x."""
    if q < 0:
        raise ParameterDomainError(f"grado q={q} negativo")
    coeffs = np.zeros(q + 1)
    coeffs[q] = 1.0
    return hermite_e.hermeval(x, coeffs)


def fgn_autocovariance(H: float, lag: ArrayLike) -> ArrayLike:
    if not (0.0 < H < 1.0):
        raise ParameterDomainError(f"H={H} fuori da (0,1)")
    k = np.abs(np.asarray(lag, dtype=float))
    p = 2.0 * H
    near = 0.5 * (np.abs(k + 1.0) ** p + np.abs(k - 1.0) ** p - 2.0 * k ** p)
    # per lag >= 2 la differenza seconda diretta perde cifre (errore ~ eps * lag^2)
    far = -0.5 * _series_term(H, np.maximum(k, 2.0))
    out = np.where(k >= 2.0, far, near)
    return float(out) if np.ndim(out) == 0 else out


def fbm_covariance(H: float, s: ArrayLike, t: ArrayLike) -> ArrayLike:
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    p = 2.0 * H
    out = 0.5 * (s ** p + t ** p - np.abs(t - s) ** p)
    return float(out) if np.ndim(out) == 0 else out


# ==============================
#   NUCLEO K^{H'} E DERIVATA
# ==============================


def kernel_constant(h_prime: float) -> float:
    """c_{H'} = (H'(2H'-1) / B(2-2H', H'-1/2))^{1/2}, con la Beta via log-gamma."""
    if not (0.5 < h_prime < 1.0):
        raise ParameterDomainError(f"h_prime={h_prime} fuori da (1/2,1)")
    log_beta = special.betaln(2.0 - 2.0 * h_prime, h_prime - 0.5)
    return math.sqrt(a_constant(h_prime) * math.exp(-log_beta))


def _kernel_derivative(h_prime: float, t: ArrayLike, s: ArrayLike) -> ArrayLike:
    c = kernel_constant(h_prime)
    return c * (s / t) ** (0.5 - h_prime) * (t - s) ** (h_prime - 1.5)


def kernel_derivative(h_prime: float, t: ArrayLike, s: ArrayLike) -> ArrayLike:
    """Derivata del nucleo ∂_1 K^{H'}(t, s) per 0 < s < t <= 1."""
    t_arr = np.asarray(t, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0.0) or np.any(s_arr >= t_arr) or np.any(t_arr > 1.0):
        raise ParameterDomainError("kernel_derivative richiede 0 < s < t <= 1")
    out = _kernel_derivative(h_prime, t_arr, s_arr)
    return float(out) if np.ndim(out) == 0 else out


def kernel_identity_integral(h_prime: float, u: float, v: float) -> float:
    """∫_0^{u∧v} ∂_1K(u,α) ∂_1K(v,α) dα per quadratura adattiva con pesi algebrici.

    Il risultato atteso è a(H')|u-v|^{2H'-2}.
    """

    if u == v:
        raise ParameterDomainError("l'integrale diverge per u = v")
    lo, hi = min(u, v), max(u, v)
    c = kernel_constant(h_prime)
    scale = c * c * (u * v) ** (h_prime - 0.5)

    # pesi: α^{1-2H'} in 0 e (lo-α)^{H'-3/2} in lo; resta il fattore liscio (hi-α)^{H'-3/2}
    value, _ = integrate.quad(
        lambda alpha: (hi - alpha) ** (h_prime - 1.5),
        0.0,
        lo,
        weight="alg",
        wvar=(1.0 - 2.0 * h_prime, h_prime - 1.5),
        epsabs=0.0,
        epsrel=1e-12,
        limit=200,
    )
    return scale * value
