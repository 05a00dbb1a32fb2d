from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from experiments import (
    ExperimentConfig,
    ExperimentResult,
    identity_holds,
    ks_two_sample,
    replicate_stream,
    run_experiment,
    scaling_slope,
)
from fgn_engine import RandomStream, derive_stream_index, generate_fgn_circulant
from hermite_simulator import (
    rosenblatt_quadratic_form_samples,
    simulate_path,
    simulate_rosenblatt_marginal,
)
from hurst_params import c1_constant, derive_params, fgn_autocovariance
from quadrature_oracle import QuadratureSpec, expected_T2_squared, expected_T2q2k_squared_bound
from settings import RuntimeSettings, get_runtime_settings
from worker_pool import ordered_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AcceptanceThresholds:
    autocov_se: float = 3.0
    increment_tol: float = 0.05
    consistency_max: float = 0.03
    ratio_tol: float = 0.20
    slope_tol: float = 0.15
    dominance_factor: float = 2.0
    ks_limit: float = 0.10
    ks_cross: float = 0.08
    moment_tol: float = 0.20
    skew_max: float = 0.15
    kurt_max: float = 0.30
    fourth_slope_tol: float = 0.20
    identity_ulp: int = 8


@dataclass(frozen=True)
class RunPlan:
    """Parametri Monte Carlo comuni a una verifica; None = valore di default della verifica."""

    seed: int
    reps: Optional[int] = None
    oversampling: int = 64
    workers: Optional[int] = None
    H: float = 0.8
    q: int = 2
    reference_grid: int = 2 ** 14

    def count(self, default: int) -> int:
        return self.reps if self.reps is not None else default


@dataclass
class CheckOutcome:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        mark = "✅" if self.passed else "❌"
        return f"{mark} {self.name}: {self.value:.6g} (soglia {self.threshold:.6g}) {self.detail}".rstrip()


def _settings(plan: RunPlan) -> RuntimeSettings:
    return get_runtime_settings(plan.workers)


def _identity_check(results: Sequence[ExperimentResult], thresholds: AcceptanceThresholds) -> CheckOutcome:
    violations = sum(
        sum(not identity_holds(r, thresholds.identity_ulp) for r in res.per_replicate) for res in results
    )
    paths = sum(len(res.per_replicate) for res in results)
    return CheckOutcome("identità 1+V_N = N^{2H} S_N", violations == 0, float(violations), 0.0, f"su {paths} traiettorie")


# ==============================
#        verify-consistency
# ==============================


def _autocov_task(task: Tuple[float, int, RandomStream, int]) -> np.ndarray:
    H, n, stream, lags = task
    x = generate_fgn_circulant(H, n, stream).values
    return np.array([np.mean(x[: n - k] * x[k:]) for k in range(lags + 1)])


def check_gaussian_engine(plan: RunPlan, thresholds: AcceptanceThresholds, n: int = 2 ** 10) -> List[CheckOutcome]:
    """Autocovarianze campionarie del fGn ai lag 0..5 entro `autocov_se` errori standard."""
    reps = plan.count(10_000)
    workers = _settings(plan).workers
    out = []
    for H in (0.5, 0.7, 0.9):
        base = RandomStream(plan.seed, derive_stream_index("engine", H))
        tasks = [(H, n, base.child(r), 5) for r in range(reps)]
        samples = np.stack(ordered_map(_autocov_task, tasks, workers))
        mean = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / math.sqrt(reps)
        z = np.abs(mean - np.asarray(fgn_autocovariance(H, np.arange(6)))) / se
        worst = float(z.max())
        out.append(CheckOutcome(f"autocovarianza fGn H={H}", worst <= thresholds.autocov_se, worst, thresholds.autocov_se, "max |z| lag 0-5"))
    return out


def verify_consistency(plan: RunPlan, thresholds: AcceptanceThresholds = AcceptanceThresholds()) -> Tuple[List[CheckOutcome], List[ExperimentResult]]:
    checks = check_gaussian_engine(plan, thresholds)
    config = ExperimentConfig(
        q_values=[plan.q],
        h_values=[plan.H],
        n_values=[2 ** 8, 2 ** 10, 2 ** 12],
        replications=plan.count(500),
        oversampling=plan.oversampling,
        seed=plan.seed,
        experiment_kind="consistency",
        workers=plan.workers,
    )
    results = run_experiment(config, _settings(plan))
    errors = [res.summary["abs_error"].mean for res in results]
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    checks.append(CheckOutcome("mean |Ĥ-H| decrescente in N", decreasing, errors[-1], errors[0], str([round(e, 5) for e in errors])))
    checks.append(CheckOutcome(f"mean |Ĥ-H| a N={results[-1].N}", errors[-1] < thresholds.consistency_max, errors[-1], thresholds.consistency_max))
    checks.append(_identity_check(results, thresholds))
    return checks, results


# ==============================
#        verify-variance
# ==============================


def _increment_task(task) -> np.ndarray:
    params, N, m, stream, spans = task
    values = simulate_path(params, N, m, stream).values
    return np.array([np.mean((values[s:] - values[:-s]) ** 2) for s in spans])


def check_increment_law(plan: RunPlan, thresholds: AcceptanceThresholds, N: int = 128) -> List[CheckOutcome]:
    """E[(Z_t - Z_s)^2] contro |t-s|^{2H} sugli span 1/N, 1/8, 1/2."""
    params = derive_params(plan.H, plan.q)
    spans = (1, N // 8, N // 2)
    reps = plan.count(2000)
    tasks = [(params, N, plan.oversampling, replicate_stream(plan.seed, "increment-law", params, N, r), spans) for r in range(reps)]
    mean = np.stack(ordered_map(_increment_task, tasks, _settings(plan).workers)).mean(axis=0)
    out = []
    for s, value in zip(spans, mean):
        target = (s / N) ** (2.0 * params.H)
        rel = abs(value / target - 1.0)
        out.append(CheckOutcome(f"incremento su span {s}/{N}", rel <= thresholds.increment_tol, rel, thresholds.increment_tol))
    return out


def check_quadrature_ratio(thresholds: AcceptanceThresholds, N: int = 512, spec: QuadratureSpec = QuadratureSpec()) -> List[CheckOutcome]:
    out = []
    for q, H in ((2, 0.8), (3, 0.7)):
        params = derive_params(H, q)
        ratio = expected_T2_squared(params, N, spec) / (c1_constant(params) * N ** (2.0 * (2.0 * params.h_prime - 2.0)))
        out.append(CheckOutcome(f"E[T2^2]/asintoto (q={q}, H={H}, N={N})", abs(ratio - 1.0) <= thresholds.ratio_tol, ratio, 1.0 + thresholds.ratio_tol))
    return out


def check_chaos_dominance(thresholds: AcceptanceThresholds, spec: QuadratureSpec = QuadratureSpec()) -> List[CheckOutcome]:
    """Il rapporto E[T_{2q-2k}^2]/E[T_2^2] cala almeno di `dominance_factor` da N=64 a N=1024."""
    params = derive_params(0.7, 3)
    out = []
    for k in range(params.q - 1):
        ratios = [expected_T2q2k_squared_bound(params, k, N, spec) / expected_T2_squared(params, N, spec) for N in (64, 1024)]
        drop = ratios[0] / ratios[1]
        out.append(CheckOutcome(f"dominanza di T2 su T_{2 * params.q - 2 * k}", drop >= thresholds.dominance_factor, drop, thresholds.dominance_factor))
    return out


def verify_variance(plan: RunPlan, thresholds: AcceptanceThresholds = AcceptanceThresholds()) -> Tuple[List[CheckOutcome], List[ExperimentResult]]:
    checks = check_increment_law(plan, thresholds)
    checks += check_quadrature_ratio(thresholds)

    config = ExperimentConfig(
        q_values=[plan.q],
        h_values=[plan.H],
        n_values=[2 ** 8, 2 ** 10, 2 ** 12],
        replications=plan.count(2000),
        oversampling=plan.oversampling,
        seed=plan.seed,
        experiment_kind="variance-scaling",
        workers=plan.workers,
    )
    results = run_experiment(config, _settings(plan))
    params = derive_params(plan.H, plan.q)
    expected = 2.0 * (2.0 * params.h_prime - 2.0)
    slope, slope_se = results[0].slope
    checks.append(CheckOutcome("pendenza log Var(V_N)", abs(slope - expected) <= thresholds.slope_tol, slope, expected, f"± {thresholds.slope_tol} (se {slope_se:.3g})"))

    checks += check_chaos_dominance(thresholds)

    # stesse traiettorie dell'esperimento di varianza
    fourth, fourth_se = scaling_slope("fourth-moment", params, results)
    checks.append(CheckOutcome("pendenza momento quarto normalizzato", abs(fourth) <= thresholds.fourth_slope_tol, fourth, 0.0, f"± {thresholds.fourth_slope_tol} (se {fourth_se:.3g})"))
    checks.append(_identity_check(results, thresholds))
    return checks, results


# ==============================
#        verify-limit
# ==============================


def check_cross_oracle(plan: RunPlan, thresholds: AcceptanceThresholds, grid_size: int = 1024) -> CheckOutcome:
    """KS tra i due costruttori indipendenti della Rosenblatt (aggregazione e forma quadratica)."""
    reps = plan.count(2000)
    h_second = derive_params(0.8, 2).h_second
    aggregated = simulate_rosenblatt_marginal(
        h_second, reps, RandomStream(plan.seed, derive_stream_index("cross", "aggregated")),
        m=plan.reference_grid, workers=_settings(plan).workers,
    )
    quadratic = rosenblatt_quadratic_form_samples(
        h_second, grid_size, reps, RandomStream(plan.seed, derive_stream_index("cross", "quadratic"))
    )
    ks = ks_two_sample(aggregated, quadratic)
    return CheckOutcome("KS aggregazione vs forma quadratica", ks <= thresholds.ks_cross, ks, thresholds.ks_cross)


def verify_limit(plan: RunPlan, thresholds: AcceptanceThresholds = AcceptanceThresholds()) -> Tuple[List[CheckOutcome], List[ExperimentResult]]:
    settings = _settings(plan)
    rosenblatt = ExperimentConfig(
        q_values=[plan.q],
        h_values=[plan.H],
        n_values=[2 ** 12],
        replications=plan.count(1000),
        oversampling=plan.oversampling,
        seed=plan.seed,
        experiment_kind="rosenblatt-limit",
        workers=plan.workers,
        reference_grid=plan.reference_grid,
    )
    results = run_experiment(rosenblatt, settings)
    ks = results[0].ks.statistic
    checks = [CheckOutcome("KS V_N normalizzata vs Rosenblatt", ks <= thresholds.ks_limit, ks, thresholds.ks_limit)]
    checks.append(check_cross_oracle(plan, thresholds))

    # regime gaussiano: fBm esatto con m = 1
    clt = ExperimentConfig(
        q_values=[1],
        h_values=[0.6],
        n_values=[2 ** 12],
        replications=plan.count(2000),
        oversampling=1,
        seed=plan.seed,
        experiment_kind="clt-q1",
        workers=plan.workers,
    )
    clt_results = run_experiment(clt, settings)
    moments = clt_results[0].summary["root_n_v_n"]
    skew = abs(moments.skewness)
    kurt = abs(moments.excess_kurtosis)
    checks.append(CheckOutcome("|asimmetria| sqrt(N) V_N, q=1 H=0.6", skew < thresholds.skew_max, skew, thresholds.skew_max))
    checks.append(CheckOutcome("|curtosi in eccesso| sqrt(N) V_N, q=1 H=0.6", kurt < thresholds.kurt_max, kurt, thresholds.kurt_max))

    results += clt_results
    checks.append(_identity_check(results, thresholds))
    return checks, results


# ==============================
#        verify-estimator
# ==============================


def verify_estimator(plan: RunPlan, thresholds: AcceptanceThresholds = AcceptanceThresholds()) -> Tuple[List[CheckOutcome], List[ExperimentResult]]:
    """Media e varianza dell'errore normalizzato contro c_2 c1^{1/2} R.

    La Rosenblatt ha media nulla: la media è confrontata in unità di deviazione standard del riferimento.
    """

    config = ExperimentConfig(
        q_values=[plan.q],
        h_values=[plan.H],
        n_values=[2 ** 13],
        replications=plan.count(1000),
        oversampling=plan.oversampling,
        seed=plan.seed,
        experiment_kind="estimator-limit",
        workers=plan.workers,
        reference_grid=plan.reference_grid,
    )
    results = run_experiment(config, _settings(plan))
    observed = results[0].summary["normalized_error"]
    reference = results[0].reference
    sd_ref = math.sqrt(reference.variance)
    mean_gap = abs(observed.mean - reference.mean) / sd_ref
    var_gap = abs(observed.variance / reference.variance - 1.0)
    checks = [
        CheckOutcome("media errore normalizzato", mean_gap <= thresholds.moment_tol, mean_gap, thresholds.moment_tol, "in dev. std del riferimento"),
        CheckOutcome("varianza errore normalizzato", var_gap <= thresholds.moment_tol, var_gap, thresholds.moment_tol, "scarto relativo"),
        _identity_check(results, thresholds),
    ]
    return checks, results


VERIFICATIONS = {
    "verify-consistency": verify_consistency,
    "verify-variance": verify_variance,
    "verify-limit": verify_limit,
    "verify-estimator": verify_estimator,
}


def plan_from_config(config: ExperimentConfig, **overrides) -> RunPlan:
    """RunPlan con seed, repliche, oversampling, processi e griglia di riferimento presi dal config."""
    plan = RunPlan(
        seed=config.seed,
        reps=config.replications,
        oversampling=config.oversampling,
        workers=config.workers,
        H=config.h_values[0],
        q=config.q_values[0],
        reference_grid=config.reference_grid,
    )
    return replace(plan, **{k: v for k, v in overrides.items() if v is not None})
