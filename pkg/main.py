from __future__ import annotations

import argparse
import json
import logging
import os
import secrets
import sys
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

import results_store
from acceptance import VERIFICATIONS, AcceptanceThresholds, RunPlan, plan_from_config
from errors import HermiteError
from experiments import ExperimentConfig, bias_study
from fgn_engine import RandomStream, generate_fgn_circulant
from hermite_simulator import simulate_path
from hurst_params import combinatorial_coefficient, constant_set, derive_params, regime_of
from quadrature_oracle import (
    QuadratureSpec,
    chaos_variance_asymptote,
    expected_T2_squared,
    expected_T2q2k_squared_bound,
)
from settings import get_runtime_settings
from variations import variation_report

logger = logging.getLogger("hermite")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED = 2

DEFAULT_ORACLE_N = [64, 128, 256, 512, 1024]
DEFAULT_BIAS_M = [4, 16, 64]


class HermiteArgumentParser(argparse.ArgumentParser):
    """Parser con uscita 1 sugli errori di sintassi (usage su stderr)."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: errore: {message}\n")


@dataclass
class CliInvocation:
    subcommand: str
    flags: Dict[str, Any]


# ==============================
#        PARSER
# ==============================


def _threshold_flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> HermiteArgumentParser:
    parser = HermiteArgumentParser(
        prog="hermite",
        description="Simulazione dei processi di Hermite e stima di H tramite variazione quadratica.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("constants", help="costanti derivate da (H, q)")
    p.add_argument("--H", type=float, required=True, help="indice di auto-similarità in (1/2, 1)")
    p.add_argument("--q", type=int, required=True, help="ordine del caos (>= 1)")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", help="cartella di output (default stdout)")

    p = sub.add_parser("simulate", help="simula una traiettoria di Z^(q,H) su {j/N}")
    p.add_argument("--H", type=float, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--N", type=int, required=True, help="numero di intervalli della griglia")
    p.add_argument("--m", type=int, help="oversampling (default HERMITE_DEFAULT_OVERSAMPLING)")
    p.add_argument("--seed", type=int, help="seed a 64 bit (se assente viene generato e stampato)")
    p.add_argument("--raw-fgn", action="store_true", help="emette il fGn di base (m·N punti) invece del processo")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", help="cartella di output (default stdout)")

    p = sub.add_parser("estimate", help="stima Ĥ da una traiettoria CSV")
    p.add_argument("--in", dest="in_path", required=True, help="CSV con colonna `value` (o t,value)")
    p.add_argument("--q", type=int, help="ordine del caos, usato solo insieme a --H (default 1)")
    p.add_argument("--H", type=float, help="vero H, per V_N e le statistiche normalizzate")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", help="cartella di output (default stdout)")

    p = sub.add_parser("oracle", help="varianze dei termini del caos per quadratura")
    p.add_argument("--H", type=float, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--k", type=int, help="indice di contrazione (default q-1, cioè T_2)")
    p.add_argument("--n-values", type=int, nargs="+", default=DEFAULT_ORACLE_N)
    p.add_argument("--nodes", type=int, default=QuadratureSpec.nodes_per_cell, help="nodi di Gauss per cella")
    p.add_argument("--tolerance", type=float, default=QuadratureSpec.tolerance)
    p.add_argument("--no-diagonal-splitting", action="store_true")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", help="cartella di output (default stdout)")

    p = sub.add_parser("bias", help="bias di aggregazione: E[Z_{1/2}^2] contro (1/2)^{2H} al variare di m")
    p.add_argument("--H", type=float, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--N", type=int, default=16, help="griglia {j/N}, N pari")
    p.add_argument("--m-values", type=int, nargs="+", default=DEFAULT_BIAS_M)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="processi (default HERMITE_WORKERS)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", help="cartella di output (default stdout)")

    for name in VERIFICATIONS:
        p = sub.add_parser(name, help="verifica di accettazione Monte Carlo")
        p.add_argument("--H", type=float, help="H della cella principale (default 0.8)")
        p.add_argument("--q", type=int, help="q della cella principale (default 2)")
        p.add_argument("--m", type=int, help="oversampling")
        p.add_argument("--seed", type=int)
        p.add_argument("--reps", type=int, help="repliche (sostituisce i default della verifica)")
        p.add_argument("--workers", type=int, help="processi (default HERMITE_WORKERS)")
        p.add_argument("--reference-grid", type=int, help="oversampling del campione Rosenblatt di riferimento")
        p.add_argument("--config", help="ExperimentConfig JSON con seed, repliche, oversampling e processi")
        p.add_argument("--format", choices=["json", "csv"], default="json")
        p.add_argument("--out", help="cartella per results.json, summary.csv ed errors.jsonl")
        for f in fields(AcceptanceThresholds):
            p.add_argument(_threshold_flag(f.name), dest=f.name, type=type(f.default), default=f.default)

    return parser


def cli_flags(parser: Optional[argparse.ArgumentParser] = None) -> Dict[str, List[str]]:
    """Opzioni di ogni sottocomando, ordinate (interfaccia fissata dal file golden)."""
    parser = parser or build_parser()
    out: Dict[str, List[str]] = {}
    for action in parser._subparsers._group_actions:
        for name, subparser in action.choices.items():
            out[name] = sorted(opt for a in subparser._actions for opt in a.option_strings)
    return out


def parse_invocation(argv: Optional[Sequence[str]] = None) -> CliInvocation:
    args = build_parser().parse_args(argv)
    flags = vars(args).copy()
    return CliInvocation(subcommand=flags.pop("subcommand"), flags=flags)


# ==============================
#        OUTPUT
# ==============================


def _resolve_seed(seed: Optional[int]) -> int:
    if seed is None:
        seed = secrets.randbits(63)
        print(f"seed={seed}", file=sys.stderr)
    return seed


def _emit_frame(frame: pd.DataFrame, fmt: str, out_dir: Optional[str], stem: str) -> None:
    if fmt == "csv":
        text = frame.to_csv(index=False, float_format="%.17g")
    else:
        text = json.dumps(results_store.normalize_for_json(frame.to_dict(orient="list")), indent=2) + "\n"
    _write_text(text, out_dir, f"{stem}.{fmt}")


def _emit_payload(payload: Dict[str, Any], fmt: str, out_dir: Optional[str], stem: str) -> None:
    if fmt == "csv":
        _emit_frame(pd.DataFrame([payload]), "csv", out_dir, stem)
        return
    text = json.dumps(results_store.normalize_for_json(payload), indent=2) + "\n"
    _write_text(text, out_dir, f"{stem}.json")


def _write_text(text: str, out_dir: Optional[str], filename: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, filename), "w", encoding="utf-8") as f:
        f.write(text)


# ==============================
#        SOTTOCOMANDI
# ==============================


def _cmd_constants(args: argparse.Namespace) -> int:
    params = derive_params(args.H, args.q)
    cs = constant_set(params)
    payload = {
        "H": params.H,
        "q": params.q,
        "hPrime": params.h_prime,
        "hSecond": params.h_second,
        "a": cs.a,
        "d": cs.d,
        "c1": cs.c1,
        "c2": combinatorial_coefficient(params.q, params.q - 1),
        "regime": regime_of(params.H),
        "x1": cs.x.x1,
        "x2": cs.x.x2,
        "x3": cs.x.x3,
    }
    if args.format == "json":
        payload["z"] = cs.z
    _emit_payload(payload, args.format, args.out, "constants")
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    params = derive_params(args.H, args.q)
    m = args.m if args.m is not None else get_runtime_settings().default_oversampling
    seed = _resolve_seed(args.seed)
    stream = RandomStream(seed)

    if args.raw_fgn:
        n = m * args.N
        if n > get_runtime_settings().max_grid:
            raise ValueError(f"griglia interna n={n} oltre HERMITE_MAX_GRID")
        series = generate_fgn_circulant(params.h_prime, n, stream)
        frame = pd.DataFrame({"value": series.values})
        sigma = None
    else:
        path = simulate_path(params, args.N, m, stream)
        frame = pd.DataFrame({"t": path.times, "value": path.values})
        sigma = path.sigma_n

    _emit_frame(frame, args.format, args.out, "path")
    if args.out is not None:
        results_store.write_json(
            {
                "H": params.H,
                "q": params.q,
                "hPrime": params.h_prime,
                "N": args.N,
                "m": m,
                "seed": seed,
                "streamIndex": stream.stream_index,
                "sigmaN": sigma,
                "rawFgn": args.raw_fgn,
            },
            os.path.join(args.out, "path.meta.json"),
        )
    return EXIT_OK


def _cmd_estimate(args: argparse.Namespace) -> int:
    frame = pd.read_csv(args.in_path)
    column = "value" if "value" in frame.columns else frame.columns[-1]
    values = frame[column].to_numpy(dtype=float)
    if args.H is None and args.q is not None:
        logger.warning("--q=%d ignorato: senza --H si stima solo Ĥ", args.q)
    params = derive_params(args.H, args.q if args.q is not None else 1) if args.H is not None else None
    report = variation_report(values, params)
    payload = {
        "N": report.N,
        "sN": report.s_n,
        "hHat": report.h_hat,
        "vN": report.v_n,
        "normalizedVN": report.normalized_v_n,
        "normalizedError": report.normalized_error,
        "trueH": report.true_h,
    }
    _emit_payload(payload, args.format, args.out, "estimate")
    return EXIT_OK


def _cmd_oracle(args: argparse.Namespace) -> int:
    params = derive_params(args.H, args.q)
    k = args.k if args.k is not None else params.q - 1
    spec = QuadratureSpec(
        nodes_per_cell=args.nodes,
        diagonal_splitting=not args.no_diagonal_splitting,
        tolerance=args.tolerance,
    )
    rows = []
    for N in args.n_values:
        if k == params.q - 1:
            value = expected_T2_squared(params, N, spec)
        else:
            value = expected_T2q2k_squared_bound(params, k, N, spec)
        asymptote = chaos_variance_asymptote(params, k, N)
        rows.append(
            {"N": N, "k": k, "value": value, "asymptote": asymptote, "ratio": value / asymptote if asymptote else None}
        )
        logger.info("oracle N=%d k=%d: %.10g", N, k, value)
    _emit_frame(pd.DataFrame(rows, columns=["N", "k", "value", "asymptote", "ratio"]), args.format, args.out, "oracle")
    return EXIT_OK


def _cmd_bias(args: argparse.Namespace) -> int:
    params = derive_params(args.H, args.q)
    seed = _resolve_seed(args.seed)
    workers = get_runtime_settings(args.workers).workers
    points = bias_study(params, args.N, args.m_values, args.reps, seed, workers=workers)
    columns = ["m", "mean_square", "target", "relative_bias", "stderr"]
    _emit_frame(pd.DataFrame([asdict(p) for p in points], columns=columns), args.format, args.out, "bias")
    return EXIT_OK


def _run_plan(args: argparse.Namespace) -> RunPlan:
    overrides = {
        "reps": args.reps,
        "oversampling": args.m,
        "workers": args.workers,
        "H": args.H,
        "q": args.q,
        "reference_grid": args.reference_grid,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config is not None:
        if args.seed is not None:
            overrides["seed"] = args.seed
        return plan_from_config(ExperimentConfig.from_json_file(args.config), **overrides)
    base = RunPlan(seed=_resolve_seed(args.seed), oversampling=get_runtime_settings().default_oversampling)
    return replace(base, **overrides)


def _cmd_verify(name: str, args: argparse.Namespace) -> int:
    plan = _run_plan(args)
    thresholds = AcceptanceThresholds(**{f.name: getattr(args, f.name) for f in fields(AcceptanceThresholds)})

    print(f"\n=== {name} (seed={plan.seed}, q={plan.q}, H={plan.H}) ===", file=sys.stderr)
    checks, results = VERIFICATIONS[name](plan, thresholds)
    for check in checks:
        print(check.line(), file=sys.stderr)

    table = pd.DataFrame([asdict(c) for c in checks])
    _emit_frame(table, args.format, None, "checks")
    if args.out is not None:
        results_store.persist_results(results, os.path.join(args.out, "results.json"))
        results_store.write_summary_csv(results, os.path.join(args.out, "summary.csv"))
        _emit_frame(table, args.format, args.out, "checks")

    failed = [c.name for c in checks if not c.passed]
    if failed:
        logger.warning("%s: %d controlli falliti", name, len(failed))
        return EXIT_FAILED
    return EXIT_OK


def dispatch(invocation: CliInvocation) -> int:
    args = argparse.Namespace(**invocation.flags)
    if invocation.subcommand == "constants":
        return _cmd_constants(args)
    if invocation.subcommand == "simulate":
        return _cmd_simulate(args)
    if invocation.subcommand == "estimate":
        return _cmd_estimate(args)
    if invocation.subcommand == "oracle":
        return _cmd_oracle(args)
    if invocation.subcommand == "bias":
        return _cmd_bias(args)
    if invocation.subcommand in VERIFICATIONS:
        return _cmd_verify(invocation.subcommand, args)
    raise ValueError(f"sottocomando sconosciuto: {invocation.subcommand}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    invocation = parse_invocation(argv)
    out_dir = invocation.flags.get("out")
    try:
        level = get_runtime_settings().log_level
        logging.basicConfig(
            level=level, stream=sys.stderr, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
        )
        return dispatch(invocation)
    except (HermiteError, ValueError, OSError) as exc:
        logger.error("%s fallito: %s", invocation.subcommand, exc)
        results_store.log_error(exc, context=invocation.flags, source=invocation.subcommand, out_dir=out_dir)
        print(f"errore: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
