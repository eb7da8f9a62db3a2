"""Command-line front end.

Subcommands: ``plan``, ``estimate``, ``analyze`` and ``study``. Exit codes are
0 on success, 2 for usage errors, 3 for malformed input files, 4 for numerical
failures and 5 when a study breaks the bound-domination invariant.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import FidelityParams, plan_report
from .errors import AsmfError, DataFormatError, InvariantViolation, NumericalError, ParameterError
from .estimators import (
    GradientBatch,
    estimate_characteristics,
    estimate_from_batch,
    evaluate_batch,
    read_batch_csv,
    resolve_workers,
    write_batch_csv,
)
from .experiments import StudyConfig, run_study
from .models import exact_H, load_model_spec, quadratic_pair
from .subspace import basis_to_csv, spectral_energy, subspace_report
from .symmat import eigenvalues, load_matrix, operator_norm, relative_error, save_matrix

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_INVARIANT = 5

# only key whose value may differ between otherwise identical runs
TIMESTAMP_KEY = "timestamp_utc"


class UsageError(Exception):
    pass


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _stamp(obj, args):
    if getattr(args, "timestamp", False):
        obj[TIMESTAMP_KEY] = datetime.now(timezone.utc).isoformat()
    return obj


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


# plan -------------------------------------------------------------------


def cmd_plan(args):
    p = FidelityParams(beta=args.beta, theta=args.theta, delta_H=args.delta, dim=args.dim)
    if args.mode == "sf-exp":
        _warn("the absolute constant C is not known explicitly; "
              f"C={args.C} gives a heuristic sample size")
    report = plan_report(args.mode, args.eps, p, eta=args.eta,
                         C_abs=args.C if args.mode == "sf-exp" else None)
    _dump_json(report, args.output)
    return EXIT_OK


# estimate ---------------------------------------------------------------


def _batch_from_model(args):
    if args.seed is None:
        raise UsageError("--seed is required when sampling from a model")
    if args.m1 is None:
        raise UsageError("--m1 is required when sampling from a model")
    spec, density, cost_ratio = load_model_spec(args.model)
    pair = quadratic_pair(spec, density, cost_ratio=cost_ratio)
    if args.kind == "mf":
        if not args.m2:
            raise UsageError("--m2 >= 1 is required for --kind mf")
        batch = evaluate_batch(pair, args.m1, args.m2, args.seed, args.stream)
    else:
        batch = evaluate_batch(pair.hi, args.m1, 0, args.seed, args.stream)
    ref = exact_H(spec, density)
    return batch, pair.hi.cost_weight, pair.lo.cost_weight, ref


def _batch_from_file(args):
    batch = read_batch_csv(args.gradients)
    if args.kind == "mf":
        if batch.lo_paired is None:
            raise DataFormatError("--kind mf needs lo_paired rows, none found")
        if batch.lo_extra is None or batch.m2 == 0:
            raise DataFormatError("--kind mf needs lo_extra rows, none found")
    else:
        batch = GradientBatch(batch.hi_paired)
    return batch, args.hi_cost, args.lo_cost, None


def cmd_estimate(args):
    workers = resolve_workers(args.threads)
    if args.model:
        batch, hi_cost, lo_cost, ref = _batch_from_model(args)
    else:
        batch, hi_cost, lo_cost, ref = _batch_from_file(args)
    est = estimate_from_batch(batch, workers=workers, hi_cost=hi_cost, lo_cost=lo_cost,
                              seed=args.seed)
    meta = est.metadata()
    meta["stream"] = args.stream if args.model else None
    meta["source"] = str(args.model or args.gradients)
    try:
        meta["characteristics"] = estimate_characteristics(batch, est).to_dict()
    except NumericalError as exc:
        meta["characteristics"] = None
        _warn(f"characteristics unavailable: {exc}")
    if ref is not None:
        meta["relative_error_vs_exact"] = relative_error(ref, est.matrix)
    save_matrix(est.matrix, args.output)
    if args.dump_batch:
        with open(args.dump_batch, "w", newline="") as fh:
            write_batch_csv(batch, fh)
    _dump_json(_stamp(meta, args), args.metadata)
    return EXIT_OK


# analyze ----------------------------------------------------------------


def _parse_r(args, d):
    if (args.r is None) == (args.r_range is None):
        raise UsageError("give exactly one of --r and --r-range")
    if args.r is not None:
        rs = [args.r]
    else:
        try:
            lo, hi = (int(x) for x in args.r_range.split(".."))
        except ValueError:
            raise UsageError(f"--r-range must look like 1..20, got {args.r_range!r}") from None
        rs = list(range(lo, hi + 1))
    if not rs or min(rs) < 1 or max(rs) > d:
        raise UsageError(f"r must lie in [1, {d}]")
    return rs


def cmd_analyze(args):
    h = load_matrix(args.matrix)
    ref = load_matrix(args.reference) if args.reference else None
    if ref is not None and ref.dim != h.dim:
        raise DataFormatError(f"reference has dimension {ref.dim}, matrix has {h.dim}")
    rs = _parse_r(args, h.dim)
    reports = [subspace_report(h, r, ref).to_dict() for r in rs]
    energy = []
    for r in rs:
        try:
            energy.append({"r": r, "energy": spectral_energy(h, r)})
        except NumericalError:
            energy.append({"r": r, "energy": None})
    out = {
        "dim": h.dim,
        "spectrum": eigenvalues(h).tolist(),
        "operator_norm": operator_norm(h),
        "energy_table": energy,
        "reports": reports,
    }
    if args.basis:
        Path(args.basis).write_text(basis_to_csv(subspace_report(h, rs[-1]).subspace))
    _dump_json(_stamp(out, args), args.output)
    return EXIT_OK


# study ------------------------------------------------------------------


def _config_path(name):
    path = Path(name)
    if path.exists():
        return path
    shipped = resources.files("asmf").joinpath("configs", path.name)
    if shipped.is_file():
        return shipped
    raise DataFormatError(f"no such study config: {name}")


def cmd_study(args):
    path = _config_path(args.config)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{args.config}: invalid JSON: {exc.msg}", row=exc.lineno,
                              column=exc.colno) from None
    if not isinstance(raw, dict):
        raise DataFormatError(f"{args.config}: top level must be an object")
    if args.seed is not None:
        raw["seed"] = args.seed
    elif "seed" not in raw:
        raise UsageError("study needs a seed: set it in the config or pass --seed")
    if args.trials is not None:
        raw["trials"] = args.trials
    cfg = StudyConfig.from_dict(raw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = run_study(cfg, workers=resolve_workers(args.threads))
    for note in result.notes:
        _warn(note)
    if args.csv:
        Path(args.csv).write_text(result.to_csv())
    doc = _stamp(result.to_dict(), args)
    if args.json:
        _dump_json(doc, args.json)
    if not args.csv and not args.json:
        sys.stdout.write(result.to_csv())
    if args.check_bounds:
        result.check_bound_domination()
    return EXIT_OK


# parser -----------------------------------------------------------------


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="asmf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: $ASMF_THREADS or 1)")
    common.add_argument("--timestamp", action="store_true",
                        help=f"add a '{TIMESTAMP_KEY}' field to JSON outputs")

    p = sub.add_parser("plan", help="sample sizes for a target accuracy")
    p.add_argument("--mode", required=True, choices=["mf-exp", "mf-prob", "sf-exp", "sf-prob"])
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--eta", type=float)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--delta", type=float, required=True, help="intrinsic dimension")
    p.add_argument("--dim", type=_positive_int, required=True)
    p.add_argument("--C", type=float, default=1.0, help="absolute constant for sf-exp")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("estimate", parents=[common], help="estimate the AS matrix")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="model spec JSON")
    src.add_argument("--gradients", help="gradient batch CSV")
    p.add_argument("--kind", choices=["sf", "mf"], required=True)
    p.add_argument("--m1", type=_positive_int)
    p.add_argument("--m2", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--hi-cost", type=float, default=1.0, help="cost per hi sample (file input)")
    p.add_argument("--lo-cost", type=float, default=1.0, help="cost per lo sample (file input)")
    p.add_argument("-o", "--output", required=True, help="matrix file (.csv or ASMX)")
    p.add_argument("--metadata", default="-", help="metadata JSON path")
    p.add_argument("--dump-batch", help="also write the gradient batch CSV")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("analyze", parents=[common], help="subspace diagnostics of a matrix")
    p.add_argument("matrix")
    p.add_argument("--r", type=int)
    p.add_argument("--r-range", help="inclusive range such as 1..20")
    p.add_argument("--reference", help="reference matrix for the certificate")
    p.add_argument("--basis", help="write the basis for the largest r as CSV")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("study", parents=[common], help="run a parametric study")
    p.add_argument("config", help="study config JSON (path or name of a shipped config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=_positive_int)
    p.add_argument("--csv", help="tidy result table")
    p.add_argument("--json", help="full result document")
    p.add_argument("--no-check-bounds", dest="check_bounds", action="store_false",
                   help="do not fail when a cell exceeds its bound")
    p.set_defaults(func=cmd_study)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except ParameterError as exc:
        print(f"asmf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, OSError) as exc:
        print(f"asmf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"asmf: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InvariantViolation as exc:
        print(f"asmf: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except AsmfError as exc:
        print(f"asmf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
