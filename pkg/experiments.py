from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from errors import ConfigError, InsufficientSamplesError, RegressionError
from fgn_engine import RandomStream, derive_stream_index
from hermite_simulator import DEFAULT_MARGINAL_OVERSAMPLING, simulate_path, simulate_rosenblatt_marginal
from hurst_params import HurstParams, c1_constant, combinatorial_coefficient, derive_params
from settings import RuntimeSettings, get_runtime_settings
from variations import VariationReport, moment_scaling_ratio, variation_report
from worker_pool import ordered_map

logger = logging.getLogger(__name__)

EXPERIMENT_KINDS = (
    "consistency",
    "variance-scaling",
    "rosenblatt-limit",
    "estimator-limit",
    "fourth-moment",
    "clt-q1",
)

# Statistiche per tipo di esperimento (schema versione 1)
TRACKED_STATS: Dict[str, Tuple[str, ...]] = {
    "consistency": ("h_hat", "abs_error"),
    "variance-scaling": ("v_n", "s_n"),
    "rosenblatt-limit": ("normalized_v_n",),
    "estimator-limit": ("normalized_error",),
    "fourth-moment": ("v_n", "v_n_fourth"),
    "clt-q1": ("root_n_v_n",),
}

IDENTITY_ULP = 8
BYTES_PER_GRID_POINT = 96


# ==============================
#        CONFIGURAZIONE
# ==============================


@dataclass
class ExperimentConfig:
    """Griglia (q, H, N) di un esperimento Monte Carlo.

    Caricabile da JSON con chiavi snake_case; chiavi sconosciute sono un errore.
    reference_grid è l'oversampling del campione Rosenblatt di riferimento.
    """

    q_values: List[int]
    h_values: List[float]
    n_values: List[int]
    replications: int
    oversampling: int = 64
    seed: int = 0
    experiment_kind: str = "consistency"
    workers: Optional[int] = None
    reference_grid: int = DEFAULT_MARGINAL_OVERSAMPLING

    def __post_init__(self):
        if self.experiment_kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"experiment_kind={self.experiment_kind!r} non valido, attesi {EXPERIMENT_KINDS}")
        if not self.q_values or not self.h_values or not self.n_values:
            raise ConfigError("q_values, h_values e n_values non possono essere vuoti")
        if self.replications < 2:
            raise ConfigError(f"replications={self.replications} deve essere >= 2")
        if self.oversampling < 1 or self.reference_grid < 1:
            raise ConfigError("oversampling e reference_grid devono essere >= 1")
        if any(b <= a for a, b in zip(self.n_values, self.n_values[1:])):
            raise ConfigError(f"n_values={self.n_values} deve essere strettamente crescente")
        for n in self.n_values:
            if n < 2 or n & (n - 1):
                raise ConfigError(f"N={n} non è una potenza di 2 (>= 2)")
        if self.experiment_kind == "clt-q1" and any(q != 1 for q in self.q_values):
            raise ConfigError("clt-q1 richiede q_values = [1]")
        for q, H in itertools.product(self.q_values, self.h_values):
            try:
                derive_params(H, q)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"chiavi di configurazione sconosciute: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"configurazione incompleta: {exc}") from exc

    @classmethod
    def from_json_file(cls, path: str) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: JSON non valido ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: atteso un oggetto JSON")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# ==============================
#        RISULTATI
# ==============================


@dataclass
class MomentSummary:
    mean: float
    variance: float
    skewness: Optional[float]
    excess_kurtosis: Optional[float]


@dataclass
class KsComparison:
    statistic: float
    sample_sizes: Tuple[int, int]


@dataclass
class ExperimentResult:
    kind: str
    q: int
    H: float
    N: int
    per_replicate: List[VariationReport]
    summary: Dict[str, MomentSummary] = field(default_factory=dict)
    slope: Optional[Tuple[float, float]] = None
    ks: Optional[KsComparison] = None
    reference: Optional[MomentSummary] = None
    identity_violations: int = 0

    @property
    def cell(self) -> Tuple[int, float, int]:
        return self.q, self.H, self.N

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "q": self.q,
            "H": self.H,
            "N": self.N,
            "per_replicate": [r.to_dict() for r in self.per_replicate],
            "summary": {name: asdict(m) for name, m in self.summary.items()},
            "slope": list(self.slope) if self.slope is not None else None,
            "ks": asdict(self.ks) if self.ks is not None else None,
            "reference": asdict(self.reference) if self.reference is not None else None,
            "identity_violations": self.identity_violations,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentResult":
        ks = data.get("ks")
        return cls(
            kind=data["kind"],
            q=int(data["q"]),
            H=float(data["H"]),
            N=int(data["N"]),
            per_replicate=[VariationReport.from_dict(r) for r in data["per_replicate"]],
            summary={name: MomentSummary(**m) for name, m in data.get("summary", {}).items()},
            slope=tuple(data["slope"]) if data.get("slope") is not None else None,
            ks=KsComparison(ks["statistic"], tuple(ks["sample_sizes"])) if ks is not None else None,
            reference=MomentSummary(**data["reference"]) if data.get("reference") is not None else None,
            identity_violations=int(data.get("identity_violations", 0)),
        )


# ==============================
#        STATISTICHE
# ==============================


def regress_scaling(points: Sequence[Tuple[float, float]]) -> Tuple[float, float]:
    """Pendenza OLS di log(statistica) su log(N) e il suo errore standard."""
    if len(points) < 3:
        raise RegressionError(f"servono almeno 3 punti, trovati {len(points)}")
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if np.unique(x).size < x.size:
        raise RegressionError(f"ascisse ripetute: {x.tolist()}")
    fit = stats.linregress(x, y)
    # errore standard dai residui, nullo su una retta esatta
    residuals = y - (fit.intercept + fit.slope * x)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(float(np.sum(residuals ** 2)) / (x.size - 2) / sxx)
    return float(fit.slope), stderr


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) == 0 or len(b) == 0:
        raise InsufficientSamplesError("ks_two_sample richiede campioni non vuoti")
    return float(stats.ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float)).statistic)


def moment_report(samples: Sequence[float]) -> MomentSummary:
    """Media, varianza corretta, asimmetria e curtosi in eccesso.

    Asimmetria e curtosi sono None se la varianza è nulla; la curtosi anche con meno di 4 campioni.
    """

    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise InsufficientSamplesError(f"servono almeno 2 campioni, trovati {x.size}")
    variance = float(np.var(x, ddof=1))
    if variance == 0.0:
        return MomentSummary(mean=float(np.mean(x)), variance=0.0, skewness=None, excess_kurtosis=None)
    kurt = float(stats.kurtosis(x, fisher=True, bias=True)) if x.size >= 4 else None
    return MomentSummary(
        mean=float(np.mean(x)),
        variance=variance,
        skewness=float(stats.skew(x, bias=True)),
        excess_kurtosis=kurt,
    )


def tracked_values(kind: str, reports: Sequence[VariationReport]) -> Dict[str, np.ndarray]:
    """Valori per replica delle statistiche tracciate, ricavati solo dai VariationReport."""
    out: Dict[str, np.ndarray] = {}
    for name in TRACKED_STATS[kind]:
        if name == "abs_error":
            values = [abs(r.h_hat - r.true_h) for r in reports]
        elif name == "v_n_fourth":
            values = [r.v_n ** 4 for r in reports]
        elif name == "root_n_v_n":
            values = [math.sqrt(r.N) * r.v_n for r in reports]
        else:
            values = [getattr(r, name) for r in reports]
        out[name] = np.asarray(values, dtype=float)
    return out


def summarize(kind: str, reports: Sequence[VariationReport]) -> Dict[str, MomentSummary]:
    return {name: moment_report(values) for name, values in tracked_values(kind, reports).items()}


def scaling_slope(kind: str, params: HurstParams, results: Sequence[ExperimentResult]) -> Optional[Tuple[float, float]]:
    """Pendenza in log N della statistica di scala del tipo, su celle con stesso (q, H).

    variance-scaling: Var(V_N); fourth-moment: E[V_N^4] N^{-2(4H'-4)}; consistency: mean |Ĥ-H|.
    """

    if len(results) < 3 or kind not in ("variance-scaling", "fourth-moment", "consistency"):
        return None
    points = []
    for res in results:
        values = tracked_values(kind, res.per_replicate)
        if kind == "variance-scaling":
            stat = float(np.var(values["v_n"], ddof=1))
        elif kind == "fourth-moment":
            stat = moment_scaling_ratio(values["v_n"], params, res.N, order=4)
        else:
            stat = float(np.mean(values["abs_error"]))
        points.append((math.log(res.N), math.log(stat)))
    return regress_scaling(points)


# ==============================
#        ESECUZIONE
# ==============================


def identity_holds(report: VariationReport, ulp: int = IDENTITY_ULP) -> bool:
    """1 + V_N = N^{2H} S_N entro `ulp` unità nell'ultima posizione."""
    rhs = report.N ** (2.0 * report.true_h) * report.s_n
    return abs((1.0 + report.v_n) - rhs) <= ulp * float(np.spacing(abs(rhs)))


def _replicate_task(task: Tuple[HurstParams, int, int, RandomStream]) -> VariationReport:
    params, N, m, stream = task
    return variation_report(simulate_path(params, N, m, stream), params)


def replicate_stream(seed: int, kind: str, params: HurstParams, N: int, r: int) -> RandomStream:
    """Stream della replica r nella cella (q, H, N) dell'esperimento kind."""
    return RandomStream(seed, derive_stream_index(kind, params.q, params.H, N, r))


def _resolve_workers(config: ExperimentConfig, settings: RuntimeSettings) -> int:
    n_max = config.oversampling * max(config.n_values)
    if n_max > settings.max_grid:
        raise ConfigError(f"griglia interna n={n_max} oltre HERMITE_MAX_GRID={settings.max_grid}")
    per_worker = BYTES_PER_GRID_POINT * max(n_max, config.reference_grid)
    if per_worker > settings.memory_budget:
        raise ConfigError(
            f"memoria stimata per processo {per_worker} B oltre il budget {settings.memory_budget} B"
        )
    workers = max(1, settings.workers)
    fitting = max(1, settings.memory_budget // per_worker)
    if workers > fitting:
        logger.warning("Riduco i processi da %d a %d per il budget di memoria", workers, fitting)
        workers = fitting
    return workers


def _reference_sample(config: ExperimentConfig, params: HurstParams, workers: int) -> np.ndarray:
    stream = RandomStream(config.seed, derive_stream_index("reference", params.q, params.H))
    logger.info("Campione Rosenblatt di riferimento per q=%d H=%s", params.q, params.H)
    return simulate_rosenblatt_marginal(
        params.h_second, config.replications, stream, m=config.reference_grid, workers=workers
    )


def run_experiment(config: ExperimentConfig, settings: Optional[RuntimeSettings] = None) -> List[ExperimentResult]:
    """Esegue l'esperimento su tutte le celle (q, H, N), ordinate per cella.

    La replica r della cella usa lo stream derivato da (q, H, N, r): il risultato non
    dipende dal numero di processi.
    """

    settings = settings or get_runtime_settings(config.workers)
    workers = _resolve_workers(config, settings)
    kind = config.experiment_kind
    needs_reference = kind in ("rosenblatt-limit", "estimator-limit")

    results: List[ExperimentResult] = []
    for q, H in itertools.product(config.q_values, config.h_values):
        params = derive_params(H, q)
        reference = None
        if needs_reference:
            c1 = c1_constant(params)
            reference = _reference_sample(config, params, workers)
            if kind == "estimator-limit":
                reference = combinatorial_coefficient(q, q - 1) * math.sqrt(c1) * reference

        group: List[ExperimentResult] = []
        for N in config.n_values:
            logger.info("Cella q=%d H=%s N=%d: %d repliche (%s)", q, H, N, config.replications, kind)
            tasks = [
                (params, N, config.oversampling, replicate_stream(config.seed, config.experiment_kind, params, N, r))
                for r in range(config.replications)
            ]
            reports = ordered_map(_replicate_task, tasks, workers)
            result = ExperimentResult(
                kind=kind,
                q=q,
                H=params.H,
                N=N,
                per_replicate=reports,
                summary=summarize(kind, reports),
                identity_violations=sum(not identity_holds(r) for r in reports),
            )
            if result.identity_violations:
                logger.warning("Identità 1+V_N = N^{2H} S_N violata su %d repliche", result.identity_violations)
            if reference is not None:
                stat_name = TRACKED_STATS[kind][0]
                sample = tracked_values(kind, reports)[stat_name]
                result.ks = KsComparison(ks_two_sample(sample, reference), (sample.size, reference.size))
                result.reference = moment_report(reference)
            group.append(result)

        slope = scaling_slope(kind, params, group)
        for result in group:
            result.slope = slope
        results.extend(group)
    return results


# ==============================
#        STUDIO DEL BIAS IN m
# ==============================


@dataclass
class BiasPoint:
    m: int
    mean_square: float
    target: float
    relative_bias: float
    stderr: float


def bias_study(
    params: HurstParams,
    N: int,
    m_values: Iterable[int],
    reps: int,
    seed: int,
    workers: int = 1,
) -> List[BiasPoint]:
    """E[Z_{1/2}^2] simulato contro (1/2)^{2H} al variare dell'oversampling m.

    La traiettoria è normalizzata all'istante 1, quindi lo scarto a t = 1/2 misura
    la velocità di convergenza dell'aggregazione in m.
    """

    if N < 2 or N % 2:
        raise ConfigError(f"bias_study richiede N pari, trovato {N}")
    target = 0.5 ** (2.0 * params.H)
    points = []
    for m in m_values:
        tasks = [(params, N, m, RandomStream(seed, derive_stream_index("bias", m, r))) for r in range(reps)]
        squares = np.asarray(ordered_map(_half_time_square, tasks, workers), dtype=float)
        mean_square = float(np.mean(squares))
        points.append(
            BiasPoint(
                m=m,
                mean_square=mean_square,
                target=target,
                relative_bias=mean_square / target - 1.0,
                stderr=float(np.std(squares, ddof=1) / math.sqrt(reps)) / target,
            )
        )
        logger.info("bias_study m=%d: bias relativo %.4f", m, points[-1].relative_bias)
    return points


def _half_time_square(task: Tuple[HurstParams, int, int, RandomStream]) -> float:
    params, N, m, stream = task
    return float(simulate_path(params, N, m, stream).values[N // 2] ** 2)
