"""Command-line interface: ``noisyaloha {eval,optimize,regions,simulate,examples}``.

Exit codes: 0 ok, 2 usage or domain error, 3 Newton non-convergence,
4 simulation disagrees with the closed form at the requested z threshold.

Machine formats (csv, json) print probabilities with 10 significant digits;
``--format table`` rounds to 4 decimals.  A ``--config FILE`` of
``key=value`` lines supplies defaults; flags given on the command line win.
Environment variables are never consulted for parameters.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from ._accel import backend
from .exact import HISTORY, PREEMPTIVE, VARIANTS
from .model import (
    DomainError,
    FiniteModel,
    PoissonModel,
    ProbabilityOverflowWarning,
    v_finite,
    v_finite_history,
    v_infinite,
)
from .optimizer import optimal_k_finite, optimal_k_infinite, region_grid, solve_xstar
from .reproduce import CURVE_FILES, EXAMPLES
from .simulator import SimConfig, compare_with_analytic

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_STAT_FAIL = 4

log = logging.getLogger("noisyaloha")


class UsageError(Exception):
    pass


# --- records and formatting --------------------------------------------------


@dataclass
class OutputRecord:
    scenario: str
    model: str
    n_users: int | None
    q: float | None
    lam: float
    epsilon: float
    k: int | None
    variant: str
    provenance: str
    metrics: dict = field(default_factory=dict)

    def flat(self) -> dict:
        d = {
            "scenario": self.scenario,
            "model": self.model,
            "n_users": self.n_users,
            "q": self.q,
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "k": self.k,
            "variant": self.variant,
            "provenance": self.provenance,
        }
        d.update(self.metrics)
        return d


def _g10(x):
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    return float(f"{x:.10g}")


def _csv_cell(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def _table_cell(x):
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.4f}"
    return str(x)


def render_rows(rows: list[dict], fmt: str, parameters: dict, command: str, seed=None, extra_meta=None) -> str:
    if fmt == "json":
        meta = {"tool": "noisyaloha", "version": __version__, "command": command, "seed": seed, "backend": backend()}
        meta.update(extra_meta or {})
        doc = {
            "parameters": {k: _g10(v) for k, v in parameters.items()},
            "results": [{k: _g10(v) for k, v in r.items()} for r in rows],
            "meta": meta,
        }
        return json.dumps(doc, indent=2) + "\n"
    header = list(rows[0]) if rows else []
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_csv_cell(r[h]) for h in header])
        return buf.getvalue()
    cells = [[_table_cell(r[h]) for h in header] for r in rows]
    widths = [max([len(h)] + [len(c[i]) for c in cells]) for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


# --- argument helpers ----------------------------------------------------------


def parse_k_range(text: str) -> list[int]:
    """``"7"`` -> [7]; ``"0..30"`` -> [0, ..., 30] (both ends inclusive)."""
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = (int(p) for p in text.split("..", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"K must be an integer or a range a..b, got {text!r}") from None
    if lo < 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"K range must satisfy 0 <= a <= b, got {text!r}")
    return list(range(lo, hi + 1))


def _pair(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(p) for p in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo,hi got {text!r}") from None
    return lo, hi


def _resolution(text: str) -> tuple[int, int]:
    try:
        a, b = (int(p) for p in str(text).lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected AxB, got {text!r}") from None
    return a, b


def read_config(path: str) -> dict[str, str]:
    cfg = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


_TRUE = {"1", "true", "yes", "on"}


def _apply_config(sub: argparse.ArgumentParser, cfg: dict[str, str]) -> None:
    by_dest = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        if key == "model":
            if value not in ("finite", "poisson"):
                raise UsageError(f"config model must be finite or poisson, got {value!r}")
            defaults["model"] = value
            continue
        dest = "lam" if key == "lambda" else key
        action = by_dest.get(dest)
        if action is None or dest in ("help", "config"):
            raise UsageError(f"unknown config key {key!r} for this command")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[dest] = value.lower() in _TRUE
        elif action.type is not None:
            try:
                defaults[dest] = action.type(value)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config {key}: {exc}") from None
        else:
            defaults[dest] = value
        if action.choices is not None and defaults[dest] not in action.choices:
            raise UsageError(f"config {key}: {value!r} is not one of {list(action.choices)}")
    sub.set_defaults(**defaults)


def _add_model_args(p: argparse.ArgumentParser) -> None:
    fam = p.add_mutually_exclusive_group()
    fam.add_argument("--finite", dest="model", action="store_const", const="finite", help="N-user Markov model")
    fam.add_argument("--poisson", dest="model", action="store_const", const="poisson", help="infinite-user limit")
    p.add_argument("--n", type=int, help="number of users N (finite)")
    p.add_argument("--q", type=float, help="per-slot activation probability q (finite)")
    p.add_argument("--lambda", dest="lam", type=float,
                   help="arrival rate; with --finite sets q = lambda/(N - lambda)")
    p.add_argument("--epsilon", type=float, help="noise corruption probability in [0, 1)")
    p.add_argument("--variant", choices=VARIANTS, default=PREEMPTIVE)


def _add_io_args(p, formats=("json", "csv", "table"), default="table"):
    p.add_argument("--format", choices=formats, default=default)
    p.add_argument("--output", "-o", help="write to this file instead of stdout")
    p.add_argument("--config", help="key=value defaults file (flags override)")


def _finite_q(args) -> float:
    if args.n is None:
        raise UsageError("--finite needs --n")
    if args.q is not None and args.lam is not None:
        raise UsageError("give either --q or --lambda for the finite model, not both")
    if args.q is not None:
        return args.q
    if args.lam is not None:
        if not 0 < args.lam < args.n:
            raise DomainError(f"need 0 < lambda < N, got {args.lam}")
        return args.lam / (args.n - args.lam)
    raise UsageError("--finite needs --q or --lambda")


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            flag = "--lambda" if name == "lam" else "--" + name.replace("_", "-")
            raise UsageError(f"missing required {flag}")


def _model_for(args, k: int):
    if args.model is None:
        raise UsageError("choose --finite or --poisson")
    _require(args, "epsilon")
    if args.model == "finite":
        return FiniteModel(args.n, _finite_q(args), args.epsilon, k)
    _require(args, "lam")
    return PoissonModel(args.lam, args.epsilon, k)


def _record(model, variant: str, provenance: str, scenario: str, metrics: dict) -> OutputRecord:
    if isinstance(model, FiniteModel):
        return OutputRecord(scenario, "finite", model.n_users, model.q, model.arrival_rate, model.epsilon,
                            model.k_retx, variant, provenance, metrics)
    return OutputRecord(scenario, "poisson", None, None, model.lam, model.epsilon, model.k_retx,
                        PREEMPTIVE, provenance, metrics)


def _v(model, variant):
    if isinstance(model, PoissonModel):
        return v_infinite(model)
    return v_finite_history(model) if variant == HISTORY else v_finite(model)


def _rate(model):
    return model.lam if isinstance(model, PoissonModel) else model.arrival_rate


def _param_echo(args) -> dict:
    keys = ("model", "n", "q", "lam", "epsilon", "k", "variant")
    out = {}
    for key in keys:
        if hasattr(args, key):
            val = getattr(args, key)
            if key == "k" and isinstance(val, list):
                val = f"{val[0]}..{val[-1]}" if len(val) > 1 else val[0]
            out["lambda" if key == "lam" else key] = val
    return out


# --- commands ------------------------------------------------------------------


def cmd_eval(args) -> int:
    if args.k is None:
        raise UsageError("missing required --k")
    rows = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ProbabilityOverflowWarning)
        for k in args.k:
            model = _model_for(args, k)
            v = _v(model, args.variant)
            w = _rate(model) * v
            rows.append(_record(model, args.variant, "analytic", "eval",
                                {"v": v, "w": w, "one_minus_v": 1.0 - v}).flat())
    for warn in caught:
        log.warning("%s", warn.message)
    if any(r["w"] > 1.0 for r in rows):
        log.warning("W exceeds 1 for some rows (returned uncapped)")
    _emit(render_rows(rows, args.format, _param_echo(args), "eval"), args.output)
    return EXIT_OK


def cmd_optimize(args) -> int:
    base = _model_for(args, 0)
    if args.newton and not 0.0 < base.epsilon < 1.0:
        raise UsageError("--newton needs 0 < epsilon < 1")
    if isinstance(base, PoissonModel):
        k_star = optimal_k_infinite(base.lam, base.epsilon, args.k_cap)
    else:
        k_star = optimal_k_finite(base.n_users, base.q, base.epsilon, args.k_cap, args.variant)
    best = base.with_k(k_star)
    v = _v(best, args.variant)
    metrics = {"k_star": k_star, "v": v, "w": _rate(best) * v, "one_minus_v": 1.0 - v}
    code = EXIT_OK
    if args.newton:
        lam = _rate(base)
        res = solve_xstar(lam, base.epsilon, tol=args.tol, max_iter=args.max_iter)
        metrics.update(
            x_star=res.x_star,
            newton_k=res.k_estimate,
            newton_iterations=res.iterations,
            newton_residual=res.residual,
            newton_converged=res.converged,
        )
        if not res.converged:
            log.error("Newton iteration did not converge (residual %.3g)", res.residual)
            code = EXIT_NO_CONVERGENCE
    row = _record(best, args.variant, "optimizer", "optimize", metrics).flat()
    _emit(render_rows([row], args.format, _param_echo(args), "optimize"), args.output)
    return code


def cmd_regions(args) -> int:
    grid = region_grid(args.eps_range, args.lambda_range, args.resolution, args.k_cap)
    if args.bucket:
        grid = grid.bucket()
    if args.format == "json":
        params = {
            "epsilon_range": list(args.eps_range),
            "lambda_range": list(args.lambda_range),
            "resolution": f"{args.resolution[0]}x{args.resolution[1]}",
            "k_cap": args.k_cap,
            "bucket": args.bucket,
        }
        doc = {
            "parameters": params,
            "results": grid.to_json_obj(),
            "meta": {"tool": "noisyaloha", "version": __version__, "command": "regions", "seed": None,
                     "backend": backend()},
        }
        text = json.dumps(doc) + "\n"
    else:
        text = grid.to_csv()
    _emit(text, args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for simulate")
    if args.k is None or len(args.k) != 1:
        raise UsageError("simulate needs a single --k value")
    model = _model_for(args, args.k[0])
    reps = args.replications
    if args.slots < reps:
        raise UsageError("--slots must be at least --replications")
    config = SimConfig(model, args.seed, args.slots // reps, args.variant, args.warmup, reps)
    report = compare_with_analytic(config, threshold=args.threshold, workers=args.workers)
    s = report.stats
    metrics = {
        "v_hat": s.v_hat,
        "v_stderr": s.v_stderr,
        "v_analytic": report.v_analytic,
        "z_v": report.z_v,
        "w_hat": s.w_hat,
        "w_stderr": s.w_stderr,
        "w_analytic": report.w_analytic,
        "z_w": report.z_w,
        "arrivals": s.arrivals,
        "delivered_messages": s.delivered_messages,
        "total_slots": s.total_slots,
        "replications": reps,
        "pass": report.passed,
    }
    row = _record(model, args.variant, "simulated", "simulate", metrics).flat()
    params = _param_echo(args)
    params.update(slots=args.slots, replications=reps, warmup=config.warmup_slots, threshold=args.threshold)
    text = render_rows([row], args.format, params, "simulate", seed=args.seed)
    if args.dump_replications:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        fields = list(vars(s.replications[0]))
        w.writerow(fields)
        for r in s.replications:
            w.writerow([getattr(r, f) for f in fields])
        Path(args.dump_replications).write_text(buf.getvalue())
    _emit(text, args.output)
    return EXIT_OK if report.passed else EXIT_STAT_FAIL


def cmd_examples(args) -> int:
    numbers = [args.example] if args.example else sorted(EXAMPLES)
    reports = [EXAMPLES[n]() for n in numbers]
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for rep in reports:
            (out / f"{CURVE_FILES[rep.number]}.csv").write_text(rep.curves_csv())
    if args.format == "json":
        doc = {
            "parameters": {"examples": numbers},
            "results": [
                {
                    "example": rep.number,
                    "title": rep.title,
                    "parameters": {k: _g10(v) for k, v in rep.parameters.items()},
                    "comparisons": [
                        {"quantity": c.quantity, "reported": c.reported, "computed": _g10(float(c.computed)),
                         "abs_diff": None if c.abs_diff is None else _g10(float(c.abs_diff)),
                         "tolerance": c.tolerance, "within": c.within}
                        for c in rep.comparisons
                    ],
                    "facts": {k: _g10(v) if not isinstance(v, bool) else v for k, v in rep.facts.items()},
                    "flags": rep.flags,
                }
                for rep in reports
            ],
            "meta": {"tool": "noisyaloha", "version": __version__, "command": "examples", "seed": None},
        }
        text = json.dumps(doc, indent=2) + "\n"
    else:
        lines = []
        for rep in reports:
            lines.append(f"Example {rep.number}: {rep.title}")
            lines.append(f"  {'quantity':<28} {'reported':>10} {'computed':>10} {'|diff|':>10}  ok")
            for c in rep.comparisons:
                rep_s = "-" if c.reported is None else f"{c.reported:.4f}"
                diff_s = "-" if c.abs_diff is None else f"{c.abs_diff:.2e}"
                ok = {True: "yes", False: "NO", None: ""}[c.within]
                lines.append(f"  {c.quantity:<28} {rep_s:>10} {float(c.computed):>10.4f} {diff_s:>10}  {ok}")
            for flag in rep.flags:
                lines.append(f"  ! {flag}")
            lines.append("")
        text = "\n".join(lines)
    _emit(text, args.output)
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisyaloha", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("eval", help="evaluate V and W for one K or a range of K")
    _add_model_args(p)
    p.add_argument("--k", type=parse_k_range)
    _add_io_args(p)
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("optimize", help="integer-optimal K (and optional Newton relaxation)")
    _add_model_args(p)
    p.add_argument("--k-cap", type=int, default=None, help="largest K scanned (default max(64, ceil(4/lambda)))")
    p.add_argument("--newton", action="store_true", help="also report the Newton root x*")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=100)
    _add_io_args(p)
    p.set_defaults(func=cmd_optimize)

    p = subs.add_parser("regions", help="optimal-K map over an (epsilon, lambda) grid")
    p.add_argument("--eps-range", type=_pair, default=(0.01, 0.99))
    p.add_argument("--lambda-range", type=_pair, default=(0.01, 0.75))
    p.add_argument("--resolution", type=_resolution, default=(99, 75), help="N_EPSxN_LAMBDA, e.g. 99x75")
    p.add_argument("--k-cap", type=int, default=None)
    p.add_argument("--bucket", action="store_true", help="report every K* >= 5 as 5")
    _add_io_args(p, formats=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_regions)

    p = subs.add_parser("simulate", help="Monte Carlo run compared with the closed form")
    _add_model_args(p)
    p.add_argument("--k", type=parse_k_range)
    p.add_argument("--slots", type=int, default=10_000_000, help="total slots over all replications")
    p.add_argument("--replications", type=int, default=16)
    p.add_argument("--warmup", type=int, default=None, help="warmup slots per replication (default 10(K+1))")
    p.add_argument("--seed", type=int, default=None, help="required")
    p.add_argument("--threshold", type=float, default=3.0, help="pass if |z| <= threshold")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dump-replications", help="CSV file for per-replication tallies")
    _add_io_args(p)
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("examples", help="recompute the published examples")
    p.add_argument("--example", type=int, choices=sorted(EXAMPLES))
    p.add_argument("--out-dir", help="write curve data CSVs here")
    _add_io_args(p, formats=("table", "json"), default="table")
    p.set_defaults(func=cmd_examples)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        config_path = None
        if "--config" in argv:
            i = argv.index("--config")
            config_path = argv[i + 1] if i + 1 < len(argv) else None
        if config_path:
            cfg = read_config(config_path)
            command = next((a for a in argv if a in parser._subparsers._group_actions[0].choices), None)
            if command is not None:
                _apply_config(parser._subparsers._group_actions[0].choices[command], cfg)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"noisyaloha: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"noisyaloha: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DomainError) as exc:
        print(f"noisyaloha: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
