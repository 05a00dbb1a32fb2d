from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from errors import DegeneratePathError, ParameterDomainError, RegimeError
from hermite_simulator import HermitePath
from hurst_params import HurstParams, c1_constant, combinatorial_coefficient, regime_of

PathLike = Union[HermitePath, Sequence[float], np.ndarray]


@dataclass
class VariationReport:
    """Statistiche di variazione di una singola traiettoria.

    I campi che richiedono il vero H (v_n e le statistiche normalizzate) sono None
    se true_h non è noto; normalized_v_n è None anche fuori dal regime di Rosenblatt.
    """

    N: int
    s_n: float
    h_hat: float
    v_n: Optional[float] = None
    normalized_v_n: Optional[float] = None
    normalized_error: Optional[float] = None
    true_h: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "VariationReport":
        return cls(**data)


def _grid_values(path: PathLike) -> np.ndarray:
    values = np.asarray(getattr(path, "values", path), dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ParameterDomainError("la traiettoria deve avere almeno due valori di griglia")
    return values


def _increments(path: PathLike) -> np.ndarray:
    return np.diff(_grid_values(path))


# ==============================
#   VARIAZIONI E STIMATORE
# ==============================


def empirical_mean_square(path: PathLike) -> float:
    """S_N = (1/N) sum (ΔZ_i)^2."""
    inc = _increments(path)
    return float(np.mean(inc * inc))


def centered_quadratic_variation(path: PathLike, H: float) -> float:
    """V_N = (1/N) sum [ (ΔZ_i)^2 / N^{-2H} - 1 ].

    Calcolata come N^{2H} S_N - 1, così 1 + V_N = N^{2H} S_N vale all'arrotondamento.
    """

    N = _increments(path).size
    return N ** (2.0 * H) * empirical_mean_square(path) - 1.0


def estimate_hurst(path: PathLike) -> float:
    """Ĥ_N = -log S_N / (2 log N)."""
    N = _increments(path).size
    if N < 2:
        raise ParameterDomainError("estimate_hurst richiede N >= 2")
    s_n = empirical_mean_square(path)
    if s_n <= 0.0:
        raise DegeneratePathError("S_N = 0: traiettoria costante, input corrotto")
    return -math.log(s_n) / (2.0 * math.log(N))


def normalized_limit_statistic(v_n: float, params: HurstParams, N: int) -> float:
    """c1^{-1/2} N^{2-2H'} c_2^{-1} V_N, che converge alla Rosenblatt di parametro H''."""
    c1 = c1_constant(params)
    c2 = combinatorial_coefficient(params.q, params.q - 1)
    return N ** (2.0 - 2.0 * params.h_prime) * v_n / (c2 * math.sqrt(c1))


def plugin_normalized_error(h_hat: float, H: float, params: HurstParams, N: int) -> float:
    """2 N^{2-2Ĥ'} (H - Ĥ) log N con Ĥ' = 1 + (Ĥ-1)/q."""
    if N < 2:
        raise ParameterDomainError("plugin_normalized_error richiede N >= 2")
    h_hat_prime = 1.0 + (h_hat - 1.0) / params.q
    return 2.0 * N ** (2.0 - 2.0 * h_hat_prime) * (H - h_hat) * math.log(N)


def hermite_variation_statistic(v_n: float, H: float, N: int) -> float:
    """Variazione di Hermite di ordine 2 del fBm (q=1), v_N = N V_N, normalizzata per regime.

    H < 3/4: N^{-1/2} v_N;  H = 3/4: (N log N)^{-1/2} v_N;  H > 3/4: N^{2(1-H)-1} v_N.
    """

    v = N * v_n
    regime = regime_of(H)
    if regime == "gaussian":
        return v / math.sqrt(N)
    if regime == "critical":
        return v / math.sqrt(N * math.log(N))
    return N ** (2.0 * (1.0 - H) - 1.0) * v


def log_error_identity(v_n: float, h_hat: float, H: float, N: int) -> float:
    """Residuo di log(1 + V_N) = 2 (H - Ĥ) log N; nullo a meno dell'arrotondamento."""
    return math.log1p(v_n) - 2.0 * (H - h_hat) * math.log(N)


def moment_scaling_ratio(v_n_samples: Sequence[float], params: HurstParams, N: int, order: int = 4) -> float:
    """E[V_N^order] N^{-(order/2)(4H'-4)}: limitato in N per ogni ordine pari."""
    if order < 2 or order % 2:
        raise ParameterDomainError(f"order={order} deve essere pari e >= 2")
    moment = float(np.mean(np.asarray(v_n_samples, dtype=float) ** order))
    return moment * N ** (-(order // 2) * (4.0 * params.h_prime - 4.0))


def variation_report(
    path: PathLike,
    params: Optional[HurstParams] = None,
    true_h: Optional[float] = None,
) -> VariationReport:
    """Calcola tutte le statistiche di una traiettoria.

    Se `params` è dato, true_h di default è params.H; senza H noto si riportano solo N, S_N e Ĥ.
    """

    if true_h is None and params is not None:
        true_h = params.H
    N = _increments(path).size
    report = VariationReport(N=N, s_n=empirical_mean_square(path), h_hat=estimate_hurst(path), true_h=true_h)
    if true_h is None:
        return report

    report.v_n = centered_quadratic_variation(path, true_h)
    if params is not None:
        try:
            report.normalized_v_n = normalized_limit_statistic(report.v_n, params, N)
        except RegimeError:
            report.normalized_v_n = None
        report.normalized_error = plugin_normalized_error(report.h_hat, true_h, params, N)
    return report
