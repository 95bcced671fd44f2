"""Command-line front end: ``solve``, ``filter`` and ``experiment``.

Exit codes: 0 success, 2 input error, 3 breakdown before the first
iteration.
"""

import argparse
import configparser
import json
import logging
import math
import os
import sys

import numpy as np

from . import experiments as ex
from .fileio import centered_mask_image, read_array, read_csv_matrix, write_array, write_pgm
from .hybrid import hybrid_run
from .operators import Blur2D, DenseOperator, IdentityOperator, KroneckerOperator, unvec, vec
from .spectral_filter import DEFAULT_EPSILON, filter_data_2d, filter_mask
from .stopping import (DEFAULT_DELTA, DEFAULT_P, DataFilteringRule, DiscrepancyRule,
                       LCurveRule, NcpRule, solve, write_trace_csv)

log = logging.getLogger("picardstop")

EXIT_OK, EXIT_INPUT, EXIT_BREAKDOWN = 0, 2, 3


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


# ---------------------------------------------------------------------------
# operator mini-grammar


def _parse_size(text):
    try:
        parts = [int(t) for t in text.lower().split("x")]
    except ValueError as exc:
        raise InputError(f"bad size {text!r}; expected MxN") from exc
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2 or min(parts) < 1:
        raise InputError(f"bad size {text!r}; expected MxN")
    return tuple(parts)


def parse_operator(text, dims=None):
    """Build an operator from ``kind[:key=value,...]`` or a CSV path.

    ``dims`` is the data shape ``(M, N)``; it fills in a missing ``size``.
    """
    if ":" not in text and os.path.exists(text):
        return DenseOperator(read_csv_matrix(text))
    kind, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise InputError(f"bad operator parameter {item!r}")
        params[key.strip()] = value.strip()

    def take(name, cast, default=None):
        if name not in params:
            if default is None:
                raise InputError(f"operator {kind!r} needs {name}=")
            return default
        try:
            return cast(params.pop(name))
        except ValueError as exc:
            raise InputError(f"bad value for {name}") from exc

    try:
        size = _parse_size(params.pop("size")) if "size" in params else dims
        if kind in ("gaussian", "motion", "identity") and size is None:
            raise InputError(f"operator {kind!r} needs size=MxN")
        if kind == "gaussian":
            sigma = take("sigma", float, 2.0)
            radius = take("radius", int, -1)
            boundary = take("boundary", str, "zero")
            psf = ex.gaussian_psf(sigma, None if radius < 0 else radius)
            op = Blur2D(psf, size, boundary)
        elif kind == "motion":
            length = take("length", int, 9)
            angle = take("angle", float, 0.0)
            boundary = take("boundary", str, "zero")
            op = Blur2D(ex.motion_psf(length, angle), size, boundary)
        elif kind == "identity":
            op = IdentityOperator(size[0] * size[1])
        elif kind == "dense":
            op = DenseOperator(_read_input(take("file", str)))
        elif kind == "kron":
            op = KroneckerOperator(_read_input(take("a1", str)), _read_input(take("a2", str)))
        else:
            raise InputError(f"unknown operator kind {kind!r}")
    except InputError:
        raise
    except ValueError as exc:
        raise InputError(f"bad operator {text!r}: {exc}") from exc
    if params:
        raise InputError(f"unknown operator parameters: {', '.join(sorted(params))}")
    return op


def _read_input(path):
    try:
        return read_array(path)
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _data_dims(arr):
    """Image shape, with row or column vectors treated as 1-D signals."""
    if arr.shape[0] == 1 or arr.shape[1] == 1:
        return (arr.size, 1)
    return arr.shape


# ---------------------------------------------------------------------------
# subcommands


def _cmd_solve(args):
    data = _read_input(args.data)
    dims = _data_dims(data)
    b = vec(data.reshape(dims, order="F") if dims[1] == 1 else data)
    A = parse_operator(args.operator, dims)
    if A.shape[0] != b.size:
        raise InputError(f"operator has {A.shape[0]} rows, data has {b.size} entries")
    if not np.any(b):
        raise ArithmeticError("data vector is zero")
    k_max = min(args.max_iter, *A.shape)
    log.info("operator %s, data %dx%d, k_max=%d", A, dims[0], dims[1], k_max)
    os.makedirs(args.out, exist_ok=True)
    M, N = dims
    summary = {"stop": args.stop, "operator": args.operator, "data": args.data}

    if args.stop == "wgcv":
        res = hybrid_run(A, b, k_max)
        x = res.x
        summary.update(stop_iteration=res.k, selected_iteration=res.k, reason=res.reason,
                       **{"lambda": res.lambdas[-1]})
        trace_path = os.path.join(args.out, "trace.csv")
        with open(trace_path, "w") as fh:
            fh.write("k,lambda,residual_norm,solution_norm\n")
            for k, lam, r, s in res.trace_rows():
                fh.write(f"{k},{lam!r},{r!r},{s!r}\n")
    else:
        if args.stop == "df":
            filt = filter_data_2d(unvec(b, M, N), args.ordering, args.h, args.epsilon)
            rule = DataFilteringRule(vec(filt.filtered), args.delta, args.p)
            summary.update(ordering=args.ordering, k0=filt.estimate.k0,
                           picard_detected=filt.estimate.detected)
        elif args.stop == "lcurve":
            rule = LCurveRule(args.p)
        elif args.stop == "ncp":
            rule = NcpRule(dims, args.p)
        else:
            if args.noise_std is None:
                raise InputError("--noise-std is required for --stop discrepancy")
            rule = DiscrepancyRule(args.noise_std, b.size, args.tau)
        res = solve(A, b, rule, k_max)
        x = res.x
        d = res.decision
        summary.update(stop_iteration=d.stop_iteration, selected_iteration=d.selected_iteration,
                       reason=d.reason)
        write_trace_csv(os.path.join(args.out, "trace.csv"), d)

    n_out = x.size
    if n_out == M * N and N > 1:
        img = unvec(x, M, N)
        write_array(os.path.join(args.out, "solution.csv"), img)
        if args.data.lower().endswith(".pgm"):
            write_pgm(os.path.join(args.out, "solution.pgm"), img)
    else:
        write_array(os.path.join(args.out, "solution.csv"), x)
    with open(os.path.join(args.out, "decision.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"stopped at k={summary['stop_iteration']}, selected k={summary['selected_iteration']}"
          f" ({summary['reason']})")
    return EXIT_OK


def _cmd_filter(args):
    data = _read_input(args.data)
    dims = _data_dims(data)
    img = data.reshape(dims, order="F") if dims[1] == 1 else data
    M, N = dims
    if M * N < 2:
        raise InputError("filtering needs at least two samples")
    res = filter_data_2d(img, args.ordering, args.h, args.epsilon, k0=args.k0)
    est = res.estimate
    write_array(args.out, res.filtered)
    report = {"k0": est.k0, "V_k0": est.noise_variance_estimate, "retained": res.retained,
              "m": M * N, "h": est.h, "epsilon": est.epsilon, "detected": est.detected,
              "ordering": args.ordering}
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if args.emit_mask:
        mask = filter_mask(args.ordering, M, N, res.retained + 1)
        write_pgm(args.emit_mask, centered_mask_image(mask), maxval=255)
    print(f"k0={est.k0} V(k0)={est.noise_variance_estimate:.6g} retained={res.retained}/{M * N}")
    return EXIT_OK


_CONFIG_KEYS = {
    "problems": "list:str", "methods": "list:str", "alphas": "list:float",
    "seeds": "int", "k_max": "int", "image_size": "int", "master_seed": "int",
    "blur_sigma": "float", "boundary": "str", "delta": "float", "p": "int",
    "epsilon": "float", "h": "int", "tau": "float", "record_timing": "bool",
}


def _convert(kind, text):
    if kind.startswith("list:"):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(_convert(kind[5:], t) for t in items)
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "bool":
        low = text.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(text)
        return low in ("true", "1", "yes")
    return text


def load_config(path):
    """Parse a flat ``key = value`` experiment config into an ExperimentConfig."""
    try:
        with open(path) as fh:
            text = fh.read()
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#",), inline_comment_prefixes=("#",))
    try:
        parser.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise InputError(f"{path}: malformed config: {exc}") from exc
    values, bad = {}, []
    for key, raw in parser["experiment"].items():
        kind = _CONFIG_KEYS.get(key)
        if kind is None:
            bad.append(f"{key} (unknown key)")
            continue
        try:
            values[key] = _convert(kind, raw)
        except ValueError:
            bad.append(f"{key} (bad value {raw!r})")
    for name in values.get("methods", ()):
        if name not in ex.METHODS:
            bad.append(f"methods (unknown method {name!r})")
    for name in values.get("problems", ()):
        if name not in ("gaussian_blur", "motion_blur", "separable_kron", "dense_1d"):
            bad.append(f"problems (unknown problem {name!r})")
    if values.get("seeds", 1) < 1 or values.get("k_max", 1) < 1:
        bad.append("seeds/k_max (must be positive)")
    if bad:
        raise InputError(f"{path}: offending keys: " + "; ".join(bad))
    return ex.ExperimentConfig(**values)


def _cmd_experiment(args):
    config = load_config(args.config) if args.config else ex.ExperimentConfig()
    if args.seed is not None:
        config.master_seed = args.seed
    os.makedirs(args.out, exist_ok=True)
    records = ex.run_experiment(config)
    ex.records_to_csv(records, os.path.join(args.out, "results.csv"))
    ex.summary_to_csv(records, os.path.join(args.out, "summary.csv"))
    errors = sum(r.method.startswith("error:") for r in records)
    print(f"{len(records)} records written to {args.out}" + (f" ({errors} failed runs)"
                                                             if errors else ""))
    return EXIT_OK


# ---------------------------------------------------------------------------


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError("must be a positive number")
    return v


def _filter_flags(p):
    p.add_argument("--ordering", choices=("hyperbolic", "elliptic"), default="hyperbolic",
                   help="coefficient ordering (default: %(default)s)")
    p.add_argument("--epsilon", type=_positive_float, default=DEFAULT_EPSILON,
                   help="relative-change bound for the Picard parameter (default: %(default)s)")
    p.add_argument("--h", type=_positive_int, default=None,
                   help="detection step (default: ceil(m/100); hyperbolic raises it to at "
                        "least M+N-1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="picardstop",
                                     description="Iterative regularization with spectral stopping rules.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="more log output (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="regularized solve with a stopping rule")
    ps.add_argument("--operator", required=True,
                    help="operator spec such as gaussian:sigma=2.0,size=64x64 or a CSV matrix")
    ps.add_argument("--data", required=True, help="data image (PGM) or CSV")
    ps.add_argument("--stop", choices=("df", "lcurve", "ncp", "discrepancy", "wgcv"),
                    default="df", help="stopping rule (default: %(default)s)")
    _filter_flags(ps)
    ps.add_argument("--max-iter", type=_positive_int, default=150,
                    help="iteration cap (default: %(default)s)")
    ps.add_argument("--delta", type=_positive_float, default=DEFAULT_DELTA,
                    help="DF relative-change bound (default: %(default)s)")
    ps.add_argument("--p", type=_positive_int, default=DEFAULT_P,
                    help="consecutive iterations required to stop (default: %(default)s)")
    ps.add_argument("--noise-std", type=_positive_float, default=None,
                    help="noise standard deviation, discrepancy rule only")
    ps.add_argument("--tau", type=_positive_float, default=1.01,
                    help="discrepancy safety factor (default: %(default)s)")
    ps.add_argument("--out", default="picardstop-out",
                    help="output directory (default: %(default)s)")
    ps.set_defaults(func=_cmd_solve)

    pf = sub.add_parser("filter", help="Picard-parameter filtering of an image")
    pf.add_argument("--data", required=True, help="image (PGM) or CSV")
    _filter_flags(pf)
    pf.add_argument("--k0", type=_positive_int, default=None,
                    help="force the Picard parameter instead of detecting it")
    pf.add_argument("--out", required=True, help="filtered output (.pgm or .csv)")
    pf.add_argument("--report", default=None, help="write the estimate as JSON")
    pf.add_argument("--emit-mask", default=None,
                    help="write the kept-frequency window as PGM, zero frequency centered")
    pf.set_defaults(func=_cmd_filter)

    pe = sub.add_parser("experiment", help="multi-realization comparison of stopping rules")
    pe.add_argument("--config", default=None, help="flat key = value config file")
    pe.add_argument("--out", required=True, help="output directory for results.csv, summary.csv")
    pe.add_argument("--seed", type=int, default=None, help="override master_seed")
    pe.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ArithmeticError as exc:
        print(f"error: breakdown before the first iteration: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
