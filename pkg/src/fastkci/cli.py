"""Command-line entry point: ``fastkci {test,coverage,power,discover,scale}``.

Exit status is 0 on success, 2 for invalid input and 3 for failures while
running.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import bench
from .errors import ColumnSpecError, FastKCIError, ParseError, ValidationError
from .fast import default_threads
from .synth import DIRECT_EDGE, SHARED_NOISE

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _columns(text):
    return [c.strip() for c in text.split(",") if c.strip()]


def read_csv_columns(path, groups):
    """Load named column groups from a headed CSV file.

    Parameters
    ----------
    path : str or Path
    groups : list of list of str
        Column names per returned block.

    Returns
    -------
    list of ndarray, one ``(n, len(group))`` array per group.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path} is empty") from None
        index = {name: k for k, name in enumerate(header)}
        for name in (c for g in groups for c in g):
            if name not in index:
                raise ColumnSpecError(f"column {name!r} not found in {path}; have {header}")
        wanted = [index[c] for g in groups for c in g]
        rows = []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            values = []
            for k in wanted:
                cell = row[k] if k < len(row) else ""
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"row {row_no} (line {row_no + 1}), column {header[k]!r}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None
            rows.append(values)
    if not rows:
        raise ParseError(f"{path} has no data rows")
    data = np.asarray(rows, dtype=float)
    out, start = [], 0
    for g in groups:
        out.append(data[:, start:start + len(g)])
        start += len(g)
    return out


def _method_specs(args, default=("kci", "fastkci")):
    names = args.method or list(default)
    return [bench.MethodSpec(m, args.V, args.J, args.B, args.lam) for m in names]


def cmd_test(args):
    if not args.x or not args.y:
        raise ColumnSpecError("--x and --y must name at least one column each")
    x, y, z = read_csv_columns(args.input, [_columns(args.x), _columns(args.y), _columns(args.z or "")])
    spec = _method_specs(args, default=("kci",))[0]
    outcome = bench.make_test(spec, args.seed, args.threads)(x, y, z)
    print(f"method: {spec.label}")
    print(f"statistic: {outcome.statistic:.10g}")
    print(f"p_value: {outcome.p_value:.6g}")
    print(f"n: {outcome.sample_size}")
    print(f"elapsed_seconds: {outcome.elapsed_seconds:.4f}")
    row = {"method": spec.label, **{k: v for k, v in outcome.to_dict().items() if k != "sample_size"},
           "n": outcome.sample_size}
    config = {"input": str(args.input), "x": _columns(args.x), "y": _columns(args.y),
              "z": _columns(args.z or ""), "method": spec.method, "V": spec.V, "J": spec.J,
              "B": spec.B, "lam": spec.lam, "seed": args.seed, "threads": args.threads}
    return bench.ResultRecord("test", config, [row], {"p_value": row["p_value"]})


def cmd_coverage(args):
    return bench.run_coverage(args.n, args.D, args.V_true, args.seeds, _method_specs(args),
                              args.seed, args.threads)


def cmd_power(args):
    return bench.run_power(args.n, args.D, args.V_true, args.sigma_vio, args.mode,
                           args.calibrated, args.seeds, _method_specs(args), args.seed, args.threads)


def cmd_discover(args):
    return bench.run_discover(args.setting, args.n, args.seeds, args.sigma, _method_specs(args),
                              args.alpha, args.max_cond_size, args.seed, args.threads)


def cmd_scale(args):
    return bench.run_scale(args.n, _method_specs(args), master_seed=args.seed,
                           threads=args.threads, timeout=args.timeout_secs)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--method", action="append", choices=bench.METHODS,
                        help="test to run; repeat to run several")
    common.add_argument("--V", type=int, default=10, help="FastKCI partition size")
    common.add_argument("--J", type=int, default=16, help="FastKCI replicates")
    common.add_argument("--B", type=int, default=1000, help="null samples")
    common.add_argument("--lambda", dest="lam", type=float, default=1e-3, help="ridge parameter")
    common.add_argument("--alpha", type=float, default=0.05)
    common.add_argument("--seed", type=int, default=bench.DEFAULT_SEED, help="master seed")
    common.add_argument("--seeds", type=int, default=100, help="number of replicates")
    common.add_argument("--threads", type=int, default=default_threads(),
                        help="thread cap (default from $FASTKCI_THREADS or the CPU count)")
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("--timeout-secs", type=float, default=bench.DEFAULT_TIMEOUT)

    parser = argparse.ArgumentParser(prog="fastkci", description="Kernel conditional independence tests and experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", parents=[common], help="run one CI test on a CSV file")
    p.add_argument("--input", required=True)
    p.add_argument("--x", required=True, help="comma-separated X column names")
    p.add_argument("--y", required=True, help="comma-separated Y column names")
    p.add_argument("--z", default="", help="comma-separated Z column names")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("coverage", parents=[common], help="type-I error experiment")
    p.add_argument("--n", type=int, default=600)
    p.add_argument("--D", type=int, nargs="+", default=[1])
    p.add_argument("--V-true", dest="V_true", type=int, nargs="+", default=[1])
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("power", parents=[common], help="power experiment")
    p.add_argument("--n", type=int, default=600)
    p.add_argument("--D", type=int, default=1)
    p.add_argument("--V-true", dest="V_true", type=int, default=1)
    p.add_argument("--sigma-vio", type=float, nargs="+", default=[0.0, 0.5, 1.0, 2.0])
    p.add_argument("--mode", choices=(SHARED_NOISE, DIRECT_EDGE), default=SHARED_NOISE)
    p.add_argument("--calibrated", action="store_true",
                   help="direct edge at one third of the signal scale")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("discover", parents=[common], help="PC skeleton recovery")
    p.add_argument("--setting", choices=("A", "B"), default="A")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--sigma", type=float, default=0.2, help="setting B noise scale")
    p.add_argument("--max-cond-size", type=int, default=3)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("scale", parents=[common], help="runtime against sample size")
    p.add_argument("--n", type=int, nargs="+", default=[500, 1000, 2000, 4000])
    p.set_defaults(func=cmd_scale)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        record = args.func(args)
        csv_path, json_path = record.write(args.out)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FastKCIError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.command != "test":
        print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
