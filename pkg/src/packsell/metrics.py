"""Evaluation quantities: backward error and the SpMV benchmark harness.

FLOP counting assumes two floating-point operations per real nonzero;
padding and dummy words are excluded. Backward error is always measured
against the unquantized source matrix in float64, which is how the quality
of a lossy-format SpMV is judged here.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .matrix import CsrMatrix, csr_spmv
from .packed import PackSellMatrix, packsell_spmv
from .sell import SellMatrix, sell_spmv


@dataclass
class SpmvReport:
    format_name: str
    reps: int
    warmup: int
    elapsed_per_call: float
    gflops: float
    backward_error: float
    bytes_touched_estimate: int
    y: np.ndarray = field(repr=False, compare=False, default=None)

    def to_dict(self) -> dict:
        return {
            "format": self.format_name,
            "reps": self.reps,
            "warmup": self.warmup,
            "elapsed_per_call": self.elapsed_per_call,
            "gflops": self.gflops,
            "backward_error": self.backward_error,
            "bytes_touched_estimate": self.bytes_touched_estimate,
        }


def inf_norm_matrix(A: CsrMatrix) -> float:
    """Maximum absolute row sum."""
    sums = np.zeros(A.n_rows)
    rows = np.repeat(np.arange(A.n_rows), A.row_lengths())
    np.add.at(sums, rows, np.abs(A.values))
    return float(sums.max()) if A.n_rows else 0.0


def backward_error(A: CsrMatrix, x, y) -> float:
    """|| y - A x ||_inf / (||A||_inf ||x||_inf), evaluated in float64.

    ``A`` is the unquantized matrix; ``y`` is the output under test (any
    precision, widened here).
    """
    x64 = np.asarray(x, dtype=np.float64)
    y64 = np.asarray(y, dtype=np.float64)
    if len(x64) != A.n_cols or len(y64) != A.n_rows:
        raise ValueError("dimension mismatch between A, x, and y")
    den = inf_norm_matrix(A) * float(np.abs(x64).max(initial=0.0))
    if den == 0.0:
        raise ValueError("backward error undefined: ||A||*||x|| is zero")
    resid = y64 - csr_spmv(A, x64, np.float64)
    return float(np.abs(resid).max(initial=0.0)) / den


def _dispatch(matrix):
    if isinstance(matrix, CsrMatrix):
        name = "csr"
        kernel = lambda x: csr_spmv(matrix, x, x.dtype)
        nnz = matrix.nnz
        data_bytes = matrix.values.nbytes + matrix.col_idx.nbytes + matrix.row_ptr.nbytes
        stored = matrix.nnz
    elif isinstance(matrix, SellMatrix):
        name = f"sell{matrix.val.dtype.itemsize * 8}"
        kernel = lambda x: sell_spmv(matrix, x)
        nnz = matrix.nnz
        data_bytes = matrix.val.nbytes + matrix.col.nbytes + matrix.offset.nbytes
        data_bytes += matrix.perm.nbytes if matrix.perm is not None else 0
        stored = matrix.n_stored
    elif isinstance(matrix, PackSellMatrix):
        name = f"packsell-{matrix.fmt.name}"
        kernel = lambda x: packsell_spmv(matrix, x)
        nnz = matrix.counts.nnz_real
        data_bytes = matrix.pack.nbytes + matrix.offset.nbytes
        data_bytes += matrix.perm.nbytes if matrix.perm is not None else 0
        stored = matrix.n_stored
    else:
        raise TypeError(f"unsupported matrix type {type(matrix).__name__}")
    return name, kernel, nnz, data_bytes, stored


def bench_spmv(matrix, x, reps: int = 10000, warmup: int = 100,
               source: CsrMatrix = None) -> SpmvReport:
    """Time repeated SpMV calls and report throughput and backward error.

    ``source`` is the unquantized CSR matrix used for the backward error;
    it defaults to ``matrix`` itself when that is already CSR. Timing wraps
    only the kernel call.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    if source is None:
        if not isinstance(matrix, CsrMatrix):
            raise ValueError("source matrix is required to evaluate backward error of a non-CSR format")
        source = matrix
    name, kernel, nnz, data_bytes, stored = _dispatch(matrix)
    x = np.asarray(x)
    for _ in range(warmup):
        y = kernel(x)
    t0 = time.perf_counter()
    for _ in range(reps):
        y = kernel(x)
    elapsed = (time.perf_counter() - t0) / reps
    gflops = 2.0 * nnz / elapsed / 1e9 if elapsed > 0 else 0.0
    touched = data_bytes + stored * x.dtype.itemsize + len(y) * y.dtype.itemsize
    return SpmvReport(
        format_name=name,
        reps=reps,
        warmup=warmup,
        elapsed_per_call=elapsed,
        gflops=gflops,
        backward_error=backward_error(source, x, y),
        bytes_touched_estimate=int(touched),
        y=y,
    )
