"""Command-line front end.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .boot import (
    PivotKind,
    bootstrap_ci,
    pivot_quantiles,
    run_perturbation_bootstrap,
    run_residual_bootstrap,
    run_wild_bootstrap,
    standard_errors,
)
from .diagnostics import design_diagnostics, score_moments_from_residuals, naive_studentization_gap
from .edgeworth import (
    Edgeworth1D,
    EdgeworthRangeWarning,
    edgeworth_cdf,
    edgeworth_density,
    location_model_coefficients,
    simple_regression_b11,
)
from .errors import InvalidParameterError, PertbootError, UnsupportedModelError
from .io import load_config, load_csv, make_manifest
from .mest import m_estimate
from .perturb import get_scheme
from .score import SCORE_NAMES, get_score
from .sim import rate_sweep, run_scenario, scenario_from_mapping

log = logging.getLogger("pertboot")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
_ENGINE_PIVOT = {"residual": PivotKind.H, "wild": PivotKind.HBREVE}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _resolve_seed(args) -> int:
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        return args.seed
    if args.entropy:
        seed = secrets.randbits(63)
        log.warning("no --seed given; using fresh entropy seed %d", seed)
        return seed
    raise UsageError("randomized commands need --seed (or --entropy to draw one)")


def _out_dir(args) -> Path | None:
    if not getattr(args, "out", None):
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _add_data_args(p, response_required=True):
    p.add_argument("--data", required=True, help="numeric CSV with header row")
    p.add_argument("--response", required=response_required, default=None, help="response column name")
    p.add_argument("--intercept", action="store_true", help="prepend a column of ones")


def _add_score_args(p):
    p.add_argument("--score", default="ls", help=f"score function: {', '.join(SCORE_NAMES)}")
    p.add_argument("--tuning", type=float, default=None, help="score tuning constant")


def _fit_from_args(args):
    data = load_csv(args.data, args.response, intercept=args.intercept)
    score = get_score(args.score, args.tuning)
    return data, score, m_estimate(data, score)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_fit(args, argv) -> int:
    data, score, fit = _fit_from_args(args)
    out = {
        "n": fit.n,
        "p": fit.p,
        "score": score.name,
        "tuning": score.tuning,
        "beta": fit.beta_bar,
        "sigma_hat": fit.sigma_hat,
        "tau_n": fit.tau_n,
        "s_n2": fit.s_n2,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "equation_norm": fit.eq_norm,
        "degenerate": fit.degenerate,
    }
    if not fit.degenerate:
        root_n = np.sqrt(fit.n)
        out["std_error"] = standard_errors(fit, PivotKind.H) / root_n
        out["std_error_hetero"] = standard_errors(fit, PivotKind.HBREVE) / root_n
    _emit(out)
    out_dir = _out_dir(args)
    if out_dir:
        (out_dir / "fit.json").write_text(json.dumps(out, indent=2, default=_json_default))
        make_manifest("fit", argv).write(out_dir)
    return EXIT_OK


def cmd_bootstrap(args, argv) -> int:
    seed = _resolve_seed(args)
    engine = args.engine
    if args.pivot is None:
        kind = _ENGINE_PIVOT.get(engine, PivotKind.HTILDE)
    else:
        kind = PivotKind.parse(args.pivot)
        if engine in _ENGINE_PIVOT and kind is not _ENGINE_PIVOT[engine]:
            raise UsageError(
                f"the {engine} engine produces the '{_ENGINE_PIVOT[engine].value}' pivot"
            )
    if args.B < 1:
        raise UsageError("--B must be >= 1")
    data, score, fit = _fit_from_args(args)
    if engine == "perturb":
        scheme = get_scheme(args.scheme, args.scheme_scale)
        sample = run_perturbation_bootstrap(data, score, fit, scheme, kind, args.B, seed, n_threads=args.threads)
    elif engine == "residual":
        sample = run_residual_bootstrap(data, score, fit, args.B, seed, n_threads=args.threads)
    else:
        sample = run_wild_bootstrap(data, fit, args.B, seed, n_threads=args.threads)
    probs = [0.025, 0.05, 0.5, 0.95, 0.975]
    out = {
        "engine": engine,
        "pivot": kind.tag,
        "B": sample.B,
        "seed": seed,
        "level": args.level,
        "beta": fit.beta_bar,
        "ci": bootstrap_ci(sample, fit, args.level, kind),
        "pivot_quantiles": {str(q): row for q, row in zip(probs, pivot_quantiles(sample, probs))},
        "rejection_rate": sample.rejection_rate,
        "unreliable": sample.unreliable,
    }
    _emit(out)
    if args.dump_pivots:
        header = ",".join(f"pivot{j + 1}" for j in range(fit.p))
        np.savetxt(args.dump_pivots, sample.pivots, delimiter=",", header=header, comments="", fmt="%.17g")
    out_dir = _out_dir(args)
    if out_dir:
        (out_dir / "bootstrap.json").write_text(json.dumps(out, indent=2, default=_json_default))
        make_manifest("bootstrap", argv, seed=seed).write(out_dir)
    return EXIT_OK


def cmd_simulate(args, argv) -> int:
    cfg, raw = load_config(args.config)
    s, sweep = scenario_from_mapping(cfg)
    has_seed = "seed" in cfg.get("scenario", {})
    if args.seed is not None or not has_seed:
        s = replace(s, seed=_resolve_seed(args))
    out_dir = _out_dir(args)
    if args.sweep:
        if "n_grid" not in sweep:
            raise UsageError("--sweep needs sweep.n_grid in the config")
        table = rate_sweep(s, sweep["n_grid"], float(sweep.get("growth", 2.0)), n_threads=args.threads)
        _emit({"scenario": s.to_dict(), "rows": table.rows})
        if out_dir:
            table.write_csv(out_dir / "sweep.csv")
    else:
        rep = run_scenario(s, n_threads=args.threads)
        print(rep.to_json())
        if out_dir:
            rep.to_json(out_dir / "report.json")
            rep.write_long_csv(out_dir / "report.csv")
        if rep.partial:
            log.error("simulation stopped early: %s", rep.error)
            if out_dir:
                make_manifest("simulate", argv, raw, s.seed).write(out_dir)
            return EXIT_NUMERIC
    if out_dir:
        make_manifest("simulate", argv, raw, s.seed).write(out_dir)
    return EXIT_OK


def _grid(spec: str) -> np.ndarray:
    try:
        lo, hi, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise UsageError(f"--grid must be lo:hi:step, got {spec!r}") from None
    if step <= 0 or hi < lo:
        raise UsageError("--grid needs lo <= hi and step > 0")
    return np.arange(lo, hi + step / 2, step)


def cmd_edgeworth(args, argv) -> int:
    if args.model == "simple-regression":
        if not args.data or args.gamma1 is None:
            raise UsageError("simple-regression needs --data, --response and --gamma1")
        data = load_csv(args.data, args.response, intercept=args.intercept)
        fit = m_estimate(data, get_score("ls"))
        print("coordinate,b11")
        for j in (1, 2):
            print(f"{j},{simple_regression_b11(fit, args.gamma1, j)!r}")
        return EXIT_OK
    if args.which == "naive-bootstrap":
        if not args.data:
            raise UsageError("naive-bootstrap coefficients need --data and --response")
        data = load_csv(args.data, args.response, intercept=False)
        e = location_model_coefficients(m_estimate(data, get_score("ls")), "naive-bootstrap")
    elif args.b11 is not None or args.b31 is not None:
        if args.n is None:
            raise UsageError("--b11/--b31 need --n")
        e = Edgeworth1D(args.b11 or 0.0, args.b31 or 0.0, args.n)
    else:
        if args.n is None or args.third_moment is None:
            raise UsageError("the original expansion needs --n, --sigma and --third-moment")
        if args.sigma <= 0:
            raise UsageError("--sigma must be positive")
        k3 = args.third_moment / args.sigma**3
        e = Edgeworth1D(-0.5 * k3, -2.0 * k3, args.n)
    xs = _grid(args.grid)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", EdgeworthRangeWarning)
        dens = edgeworth_density(e, xs)
        cdf = edgeworth_cdf(e, xs)
    for msg in dict.fromkeys(str(w.message) for w in caught):
        log.warning(msg)
    print(f"# b11={e.b11!r} b31={e.b31!r} n={e.n}")
    print("x,density,cdf")
    for x, d, c in zip(xs.tolist(), dens.tolist(), cdf.tolist()):
        print(f"{x!r},{d!r},{c!r}")
    return EXIT_OK


def cmd_diagnose(args, argv) -> int:
    if args.response:
        data = load_csv(args.data, args.response, intercept=args.intercept)
        X = data.X
    else:
        from .io import load_design_csv

        X = load_design_csv(args.data)
        if args.intercept:
            X = np.column_stack([np.ones(X.shape[0]), X])
        data = None
    out = {"design": design_diagnostics(X, args.alpha).to_dict()}
    if data is not None:
        score = get_score(args.score, args.tuning)
        fit = m_estimate(data, score)
        moments = score_moments_from_residuals(score, fit.residuals)
        out["score_moments"] = moments.__dict__
        out["naive_studentization_gap"] = naive_studentization_gap(moments)
    _emit(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pertboot", description="Perturbation bootstrap for regression M-estimators.")
    parser.add_argument("--version", action="version", version=f"pertboot {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("fit", help="M-estimate and standard errors as JSON")
    _add_data_args(p)
    _add_score_args(p)
    p.add_argument("--out", help="directory for fit.json and manifest.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bootstrap", help="bootstrap confidence intervals as JSON")
    _add_data_args(p)
    _add_score_args(p)
    p.add_argument("--engine", choices=("perturb", "residual", "wild"), default="perturb")
    p.add_argument("--pivot", choices=[k.value for k in PivotKind], default=None)
    p.add_argument("--B", type=int, default=2000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--entropy", action="store_true", help="draw a seed when --seed is absent")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--scheme", default="scaled-beta-half")
    p.add_argument("--scheme-scale", type=float, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--dump-pivots", metavar="CSV", help="write the B x p pivot matrix")
    p.add_argument("--out", help="directory for bootstrap.json and manifest.json")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("simulate", help="Monte Carlo comparison from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--sweep", action="store_true", help="run the rate sweep over sweep.n_grid")
    p.add_argument("--seed", type=int, default=None, help="overrides scenario.seed")
    p.add_argument("--entropy", action="store_true")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", help="directory for report files and manifest.json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("edgeworth", help="Edgeworth density and CDF table as CSV")
    p.add_argument("--model", choices=("location", "simple-regression"), default="location")
    p.add_argument("--which", choices=("original", "naive-bootstrap"), default="original")
    p.add_argument("--n", type=int)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--third-moment", type=float)
    p.add_argument("--b11", type=float)
    p.add_argument("--b31", type=float)
    p.add_argument("--gamma1", type=float)
    p.add_argument("--data")
    p.add_argument("--response", default="y")
    p.add_argument("--intercept", action="store_true")
    p.add_argument("--grid", default="-4:4:0.5", help="lo:hi:step")
    p.set_defaults(func=cmd_edgeworth)

    p = sub.add_parser("diagnose", help="design diagnostics as JSON")
    _add_data_args(p, response_required=False)
    _add_score_args(p)
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"pertboot {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidParameterError, UnsupportedModelError) as exc:
        print(f"pertboot {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PertbootError as exc:
        print(f"pertboot {args.command}: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
