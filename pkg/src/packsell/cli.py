"""Command-line interface: inspect, convert, benchmark, and solve.

Every command with machine-readable output emits exactly one JSON object
(with a ``schema`` version field) on stdout; diagnostics go to stderr.
The --threads value is recorded in reports for reproducibility; the kernels
in this package are vectorized single-threaded code, so it does not change
execution.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .codec import CodecError, PackFormat, parse_format
from .container import ContainerError, MAGIC, read_psell, write_psell
from .matrix import (CsrMatrix, MatrixFormatError, compute_stats, load_matrix_market,
                     row_sum_scale, sym_diag_scale, to_coo, to_csr, write_matrix_market)
from .metrics import bench_spmv
from .packed import build_packsell, footprint_bits, packsell_to_csr
from .sell import build_sell
from .solvers import SolveConfig, iocg, make_backend, make_rhs_and_x0, pcg
from .stencil import poisson2d, poisson3d

log = logging.getLogger("packsell")

SCHEMA_VERSION = 1

_SCALES = {"none": lambda A: A, "row": row_sum_scale, "sym": sym_diag_scale}


def _default_threads() -> int:
    env = os.environ.get("PACKSELL_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            log.warning("ignoring non-integer PACKSELL_THREADS=%r", env)
    return os.cpu_count() or 1


def _emit(obj: dict) -> None:
    json.dump(obj, sys.stdout)
    sys.stdout.write("\n")


def _load_csr(path: str) -> CsrMatrix:
    return to_csr(load_matrix_market(path))


def _is_container(path: str) -> bool:
    try:
        with open(path, "rb") as f:
            return f.read(len(MAGIC)) == MAGIC
    except OSError:
        return False


def _working_dtype(format_name: str) -> np.dtype:
    if format_name in ("csr", "sell64"):
        return np.dtype(np.float64)
    if format_name == "sell16":
        return np.dtype(np.float16)
    if format_name == "sell32":
        return np.dtype(np.float32)
    if format_name.startswith("packsell-"):
        return parse_format(format_name[len("packsell-"):]).value_dtype
    raise ValueError(f"unknown format {format_name!r}")


def _make_x(spec: str, n: int, dtype) -> np.ndarray:
    if spec == "ones":
        return np.ones(n, dtype=dtype)
    if spec.startswith("random:"):
        seed = int(spec.split(":", 1)[1])
        rng = np.random.Generator(np.random.PCG64(seed))
        return rng.random(n).astype(dtype)
    raise ValueError(f"--x must be 'ones' or 'random:SEED', got {spec!r}")


def _is_symmetric(A: CsrMatrix) -> bool:
    if A.n_rows != A.n_cols:
        return False
    coo = to_coo(A)
    order = np.lexsort((coo.rows, coo.cols))
    return (np.array_equal(coo.rows, coo.cols[order])
            and np.array_equal(coo.cols, coo.rows[order])
            and np.array_equal(coo.values, coo.values[order]))


def cmd_info(args) -> int:
    A = _load_csr(args.matrix)
    st = compute_stats(A)
    report = {
        "schema": SCHEMA_VERSION,
        "n_rows": A.n_rows,
        "n_cols": A.n_cols,
        "nnz": st.nnz,
        "rsd": st.rsd,
        "lower_bandwidth": st.lower_bandwidth,
        "upper_bandwidth": st.upper_bandwidth,
        "nnz_per_row_min": st.nnz_per_row_min,
        "nnz_per_row_max": st.nnz_per_row_max,
        "nnz_per_row_mean": st.nnz_per_row_mean,
        "symmetric": _is_symmetric(A),
    }
    if args.json:
        _emit(report)
    else:
        for k, v in report.items():
            if k != "schema":
                print(f"{k:18} {v}")
    return 0


def cmd_convert(args) -> int:
    fmt = PackFormat(args.w, args.d, args.codec)
    A = _SCALES[args.scale](_load_csr(args.matrix))
    M = build_packsell(A, args.c, args.sigma, fmt, args.mode)
    write_psell(M, args.out)
    fp = footprint_bits(M)
    report = {
        "schema": SCHEMA_VERSION,
        "out": args.out,
        "w": fmt.w,
        "d": fmt.d,
        "codec": fmt.codec,
        "format": fmt.name,
        "mode": args.mode,
        "c": args.c,
        "sigma": args.sigma,
        "scale": args.scale,
        "nnz": M.counts.nnz_real,
        "n_dummy": M.counts.n_dummy,
        "n_padding": M.counts.n_padding,
        "pack_bits": fp.pack_bits,
        "sell_equiv_bits": fp.sell_equiv_bits,
        "footprint_ratio": fp.ratio,
    }
    if args.json:
        _emit(report)
    else:
        print(f"wrote {args.out}: {fmt.name} W={fmt.w} D={fmt.d}, "
              f"nnz={M.counts.nnz_real} dummies={M.counts.n_dummy} padding={M.counts.n_padding}, "
              f"footprint ratio {fp.ratio:.4f}")
    return 0


def cmd_spmv(args) -> int:
    if args.reps < 1:
        raise ValueError(f"--reps must be >= 1, got {args.reps}")
    if args.warmup < 0:
        raise ValueError(f"--warmup must be >= 0, got {args.warmup}")
    footprint_ratio = None
    if _is_container(args.matrix):
        M = read_psell(args.matrix)
        # The container stores the already-quantized matrix, so backward
        # error is measured against the stored values.
        source = packsell_to_csr(M)
        name = f"packsell-{M.fmt.name}"
        dtype = M.fmt.value_dtype
        footprint_ratio = footprint_bits(M).ratio
    else:
        A = _load_csr(args.matrix)
        name = args.format
        dtype = _working_dtype(name)
        source = A
        if name == "csr":
            M = A
        elif name.startswith("sell"):
            value_dtype = {"sell64": np.float64, "sell32": np.float32, "sell16": np.float16}[name]
            M = build_sell(A, args.c, args.sigma, "implicit", value_dtype)
        else:
            Mp = build_packsell(A, args.c, args.sigma, parse_format(name[len("packsell-"):]), "implicit")
            footprint_ratio = footprint_bits(Mp).ratio
            M = Mp
    x = _make_x(args.x, M.n_cols, dtype)
    rep = bench_spmv(M, x, reps=args.reps, warmup=args.warmup, source=source)
    report = {"schema": SCHEMA_VERSION, "matrix": args.matrix, "x": args.x,
              "threads": args.threads, **rep.to_dict()}
    if footprint_ratio is not None:
        report["footprint_ratio"] = footprint_ratio
    _emit(report)
    return 0


def cmd_footprint(args) -> int:
    lo, hi = args.sweep_d
    if args.codec == "fp16" and (lo, hi) != (15, 15):
        raise ValueError("the fp16 codec fixes D=15 (V=16); use --sweep-d 15..15 or --codec e8my")
    A = _load_csr(args.matrix)
    rows = []
    for d in range(lo, hi + 1):
        fmt = PackFormat(32, d, args.codec)
        M = build_packsell(A, args.c, args.sigma, fmt, args.mode)
        fp = footprint_bits(M)
        rows.append({
            "d": d,
            "format": fmt.name,
            "n_dummy": M.counts.n_dummy,
            "n_padding": M.counts.n_padding,
            "pack_bits": fp.pack_bits,
            "sell_equiv_bits": fp.sell_equiv_bits,
            "ratio": fp.ratio,
        })
    # Dense-band limit of the ratio, ignoring per-matrix overhead: a packed
    # word replaces one value plus one 32-bit index (2/3 for 16-bit values).
    value_bits = 16 if args.codec == "fp16" else 32
    limit = 32.0 / (value_bits + 32)
    if args.json:
        _emit({"schema": SCHEMA_VERSION, "matrix": args.matrix, "codec": args.codec,
               "dense_band_limit_ratio": limit, "rows": rows})
    else:
        cols = ["d", "format", "n_dummy", "n_padding", "pack_bits", "sell_equiv_bits", "ratio"]
        print(",".join(cols))
        for row in rows:
            print(",".join(str(row[k]) for k in cols))
    return 0


def cmd_solve(args) -> int:
    A = _SCALES[args.scale](_load_csr(args.matrix))
    b, x0 = make_rhs_and_x0(A.n_rows, args.seed)
    cfg = SolveConfig(solver=args.solver, tol=args.tol, max_outer=args.max_outer,
                      m_in=args.m_in, inner_precision=args.inner_precision,
                      a_backend=args.backend, preconditioner=args.precond)
    if args.solver == "pcg":
        report = pcg(make_backend(A, args.backend), b, cfg, x0=x0)
    else:
        report = iocg(A, b, cfg)
    out = {"schema": SCHEMA_VERSION, "matrix": args.matrix, "solver": args.solver,
           "backend": args.backend, "m_in": args.m_in, "tol": args.tol,
           "seed": args.seed, "scale": args.scale, "precond": args.precond,
           "inner_precision": args.inner_precision, "threads": args.threads,
           **report.to_dict()}
    _emit(out)
    if args.residual_csv:
        with open(args.residual_csv, "w") as f:
            f.write("iteration,relative_residual\n")
            for i, r in enumerate(report.residual_history):
                f.write(f"{i},{r!r}\n")
    if not report.converged and not args.allow_nonconverged:
        log.error("solver did not converge: %s", report.reason)
        return 1
    return 0


def cmd_gen(args) -> int:
    dims = [int(t) for t in args.dims.lower().split("x")]
    if args.stencil == "poisson2d":
        if len(dims) == 1:
            dims = dims * 2
        if len(dims) != 2:
            raise ValueError(f"poisson2d expects NxM dims, got {args.dims!r}")
        A = poisson2d(*dims)
    else:
        if len(dims) == 1:
            dims = dims * 3
        if len(dims) != 3:
            raise ValueError(f"poisson3d expects NxMxK dims, got {args.dims!r}")
        A = poisson3d(*dims)
    write_matrix_market(A, args.out)
    report = {"schema": SCHEMA_VERSION, "stencil": args.stencil,
              "dims": dims, "n": A.n_rows, "nnz": A.nnz, "out": args.out}
    if args.json:
        _emit(report)
    else:
        print(f"wrote {args.out}: {args.stencil} {'x'.join(map(str, dims))}, n={A.n_rows}, nnz={A.nnz}")
    return 0


def _parse_sweep(text: str):
    if ".." in text:
        lo, hi = text.split("..", 1)
    else:
        lo = hi = text
    lo, hi = int(lo), int(hi)
    if not 1 <= lo <= hi:
        raise argparse.ArgumentTypeError(f"bad sweep range {text!r}")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="packsell",
                                description="Packed sliced sparse matrix formats, SpMV benchmarks, and CG solvers.")
    sub = p.add_subparsers(dest="command", required=True)

    def add_threads(sp):
        sp.add_argument("--threads", type=int, default=_default_threads(),
                        help="thread count recorded in reports (kernels are single-threaded; "
                             "default from PACKSELL_THREADS or CPU count)")

    sp = sub.add_parser("info", help="print matrix statistics")
    sp.add_argument("matrix")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_info)

    sp = sub.add_parser("convert", help="pack a Matrix Market file into a .psell container")
    sp.add_argument("matrix")
    sp.add_argument("out")
    sp.add_argument("--w", type=int, default=32, choices=(32, 64))
    sp.add_argument("--d", type=int, default=15)
    sp.add_argument("--codec", default="fp16", choices=("fp16", "e8my", "fp32embed"))
    sp.add_argument("--c", type=int, default=32)
    sp.add_argument("--sigma", type=int, default=256)
    sp.add_argument("--mode", default="implicit", choices=("none", "explicit", "implicit"))
    sp.add_argument("--scale", default="none", choices=("none", "row", "sym"))
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_convert)

    sp = sub.add_parser("spmv", help="benchmark SpMV on a matrix or container")
    sp.add_argument("matrix", help="Matrix Market file or .psell container")
    sp.add_argument("--format", default="csr",
                    help="csr, sell16/32/64, or packsell-<fmt> (ignored for containers)")
    sp.add_argument("--reps", type=int, default=10000)
    sp.add_argument("--warmup", type=int, default=100)
    sp.add_argument("--x", default="ones", help="'ones' or 'random:SEED'")
    sp.add_argument("--c", type=int, default=32)
    sp.add_argument("--sigma", type=int, default=256)
    add_threads(sp)
    sp.set_defaults(func=cmd_spmv)

    sp = sub.add_parser("footprint", help="storage accounting across delta widths")
    sp.add_argument("matrix")
    sp.add_argument("--sweep-d", type=_parse_sweep, default=(1, 12),
                    help="delta-bit range 'LO..HI' (default 1..12)")
    sp.add_argument("--codec", default="e8my", choices=("fp16", "e8my"))
    sp.add_argument("--c", type=int, default=32)
    sp.add_argument("--sigma", type=int, default=256)
    sp.add_argument("--mode", default="implicit", choices=("none", "explicit", "implicit"))
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_footprint)

    sp = sub.add_parser("solve", help="run a CG solver with a chosen SpMV backend")
    sp.add_argument("matrix")
    sp.add_argument("--solver", default="pcg", choices=("pcg", "iocg"))
    sp.add_argument("--backend", default="csr64")
    sp.add_argument("--m-in", type=int, default=50, dest="m_in")
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--scale", default="sym", choices=("none", "row", "sym"))
    sp.add_argument("--max-outer", type=int, default=1000, dest="max_outer")
    sp.add_argument("--inner-precision", default="real32", choices=("real32", "real64"),
                    dest="inner_precision")
    sp.add_argument("--precond", default="identity", choices=("identity", "jacobi"))
    sp.add_argument("--allow-nonconverged", action="store_true")
    sp.add_argument("--residual-csv", default=None)
    add_threads(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("gen", help="generate a Laplacian stencil matrix")
    sp.add_argument("--stencil", required=True, choices=("poisson2d", "poisson3d"))
    sp.add_argument("--dims", required=True, help="grid size, e.g. 32x32 or 16x16x16")
    sp.add_argument("out")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_gen)
    return p


def _setup_logging() -> None:
    # Rebind the handler to the current stderr on every invocation so logs
    # land on the caller's stream (and never on stdout).
    root = logging.getLogger("packsell")
    for h in list(root.handlers):
        root.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    root.propagate = False


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MatrixFormatError, ContainerError, CodecError, ValueError, OSError) as e:
        log.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
