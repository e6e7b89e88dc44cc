"""Canonical sparse matrix types, Matrix Market I/O, diagonal scalings, and stats.

CSR is the reference representation: its row-sequential SpMV is the oracle
all other kernels in this package are checked against, so the accumulation
order (left to right within each row, ascending columns) is part of the
contract here, not an implementation detail.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, TextIO, Union

import numpy as np

INDEX_DTYPE = np.int32  # column indices; row pointers are int64


class MatrixFormatError(ValueError):
    """Raised for malformed or unsupported Matrix Market input."""


class CooMatrix:
    """Coordinate-format matrix; canonical form is (row, col)-sorted with no duplicates."""

    def __init__(self, n_rows, n_cols, rows, cols, values, _canonical=False):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        if not (len(self.rows) == len(self.cols) == len(self.values)):
            raise ValueError("rows, cols, values must have equal length")
        if len(self.rows):
            if self.rows.min() < 0 or self.rows.max() >= self.n_rows:
                raise ValueError("row index out of bounds")
            if self.cols.min() < 0 or self.cols.max() >= self.n_cols:
                raise ValueError("column index out of bounds")
        self.is_canonical = bool(_canonical)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def entries(self):
        """Entries as a list of (row, col, value) tuples."""
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))

    def canonicalize(self) -> "CooMatrix":
        """Sort by (row, col) and sum duplicate coordinates.

        Explicit zeros are kept as structural entries; they count toward nnz,
        padding, and footprint like any other stored element.
        """
        if self.is_canonical:
            return self
        order = np.lexsort((self.cols, self.rows))
        r, c, v = self.rows[order], self.cols[order], self.values[order]
        if len(r):
            first = np.ones(len(r), dtype=bool)
            first[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
            starts = np.flatnonzero(first)
            v = np.add.reduceat(v, starts) if len(starts) else v
            r, c = r[starts], c[starts]
        return CooMatrix(self.n_rows, self.n_cols, r, c, v, _canonical=True)


class CsrMatrix:
    """Compressed sparse row matrix with float64 values and int32 column indices."""

    def __init__(self, n_rows, n_cols, row_ptr, col_idx, values):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row_ptr = np.asarray(row_ptr, dtype=np.int64)
        self.col_idx = np.asarray(col_idx, dtype=INDEX_DTYPE)
        self.values = np.asarray(values, dtype=np.float64)
        if len(self.row_ptr) != self.n_rows + 1:
            raise ValueError("row_ptr must have n_rows + 1 entries")
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != len(self.values):
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if len(self.col_idx) != len(self.values):
            raise ValueError("col_idx and values must have equal length")
        self._value_casts: dict = {}
        self._plans: dict = {}

    @property
    def nnz(self) -> int:
        return len(self.values)

    def row_lengths(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def diagonal(self) -> np.ndarray:
        """Stored diagonal entries; positions without a stored diagonal are 0."""
        d = np.zeros(min(self.n_rows, self.n_cols))
        rows = np.repeat(np.arange(self.n_rows, dtype=np.int64), self.row_lengths())
        on_diag = rows == self.col_idx
        d[rows[on_diag]] = self.values[on_diag]
        return d

    def _values_as(self, dtype) -> np.ndarray:
        dtype = np.dtype(dtype)
        if dtype not in self._value_casts:
            self._value_casts[dtype] = self.values.astype(dtype)
        return self._value_casts[dtype]

    def _plan(self, dtype):
        """Rows grouped by equal length, with pre-gathered column/value blocks.

        Lets the SpMV loop run one vectorized step per element position while
        keeping each row's accumulation strictly left to right.
        """
        dtype = np.dtype(dtype)
        if dtype in self._plans:
            return self._plans[dtype]
        lengths = self.row_lengths()
        vals = self._values_as(dtype)
        groups = []
        for ln in np.unique(lengths):
            if ln == 0:
                continue
            rows = np.flatnonzero(lengths == ln)
            gather = self.row_ptr[rows][:, None] + np.arange(ln)
            groups.append((rows, self.col_idx[gather], vals[gather]))
        self._plans[dtype] = groups
        return groups


@dataclass(frozen=True)
class MatrixStats:
    nnz: int
    rsd: float
    lower_bandwidth: int
    upper_bandwidth: int
    nnz_per_row_min: float
    nnz_per_row_max: float
    nnz_per_row_mean: float


_Source = Union[str, Path, bytes, TextIO, BinaryIO]


def _read_lines(source: _Source):
    if isinstance(source, (str, Path)):
        with open(source, "rb") as f:
            data = f.read()
    elif isinstance(source, bytes):
        data = source
    else:
        data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    return data.splitlines()


def load_matrix_market(source: _Source) -> CooMatrix:
    """Read a Matrix Market coordinate file into a canonical CooMatrix.

    Accepts fields `real`/`integer` and symmetries `general`/`symmetric`.
    Symmetric off-diagonal entries are mirrored, indices are converted to
    0-based, and duplicate coordinates are summed.
    """
    lines = _read_lines(source)
    if not lines:
        raise MatrixFormatError("empty input")
    banner = lines[0].split()
    if len(banner) != 5 or banner[0] != "%%MatrixMarket":
        raise MatrixFormatError(f"line 1: malformed header {lines[0]!r}")
    obj, fmt, field, symmetry = (t.lower() for t in banner[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixFormatError(f"line 1: only 'matrix coordinate' input is supported, got {obj} {fmt}")
    if field not in ("real", "integer"):
        raise MatrixFormatError(f"line 1: field {field!r} not supported (need real or integer)")
    if symmetry not in ("general", "symmetric"):
        raise MatrixFormatError(f"line 1: symmetry {symmetry!r} not supported (need general or symmetric)")

    lineno = 1
    size = None
    for lineno, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        size = s.split()
        break
    if size is None or len(size) != 3:
        raise MatrixFormatError(f"line {lineno}: expected 'n m nnz' size line")
    try:
        n, m, nnz = (int(t) for t in size)
    except ValueError:
        raise MatrixFormatError(f"line {lineno}: non-integer size line") from None
    if n < 0 or m < 0 or nnz < 0:
        raise MatrixFormatError(f"line {lineno}: negative size")

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    k = 0
    for off, line in enumerate(lines[lineno:], start=lineno + 1):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        if k >= nnz:
            raise MatrixFormatError(f"line {off}: more than {nnz} declared entries")
        parts = s.split()
        if len(parts) != 3:
            raise MatrixFormatError(f"line {off}: expected 'i j value'")
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise MatrixFormatError(f"line {off}: unparsable entry {s!r}") from None
        if not (1 <= i <= n and 1 <= j <= m):
            raise MatrixFormatError(f"line {off}: index ({i}, {j}) outside declared {n} x {m}")
        rows[k], cols[k], vals[k] = i - 1, j - 1, v
        k += 1
    if k != nnz:
        raise MatrixFormatError(f"expected {nnz} entries, found {k}")

    if symmetry == "symmetric":
        off_diag = rows != cols
        mr, mc, mv = cols[off_diag], rows[off_diag], vals[off_diag]
        rows = np.concatenate([rows, mr])
        cols = np.concatenate([cols, mc])
        vals = np.concatenate([vals, mv])
    return CooMatrix(n, m, rows, cols, vals).canonicalize()


def write_matrix_market(A: Union[CooMatrix, CsrMatrix], dest: Union[str, Path, TextIO]) -> None:
    """Write a matrix as Matrix Market 'coordinate real general' (full storage)."""
    coo = to_coo(A) if isinstance(A, CsrMatrix) else A.canonicalize()
    own = isinstance(dest, (str, Path))
    f = open(dest, "w") if own else dest
    try:
        f.write("%%MatrixMarket matrix coordinate real general\n")
        f.write(f"{coo.n_rows} {coo.n_cols} {coo.nnz}\n")
        for i, j, v in zip(coo.rows, coo.cols, coo.values):
            f.write(f"{i + 1} {j + 1} {float(v)!r}\n")
    finally:
        if own:
            f.close()


def to_csr(coo: CooMatrix) -> CsrMatrix:
    """Convert a canonical CooMatrix to CSR."""
    coo = coo.canonicalize()
    row_ptr = np.zeros(coo.n_rows + 1, dtype=np.int64)
    np.add.at(row_ptr, coo.rows + 1, 1)
    np.cumsum(row_ptr, out=row_ptr)
    return CsrMatrix(coo.n_rows, coo.n_cols, row_ptr, coo.cols, coo.values)


def to_coo(A: CsrMatrix) -> CooMatrix:
    rows = np.repeat(np.arange(A.n_rows, dtype=np.int64), A.row_lengths())
    return CooMatrix(A.n_rows, A.n_cols, rows, A.col_idx.astype(np.int64), A.values, _canonical=True)


def permute_rows(A: CsrMatrix, order) -> CsrMatrix:
    """CSR matrix whose row k is row order[k] of A."""
    order = np.asarray(order, dtype=np.int64)
    lengths = A.row_lengths()[order]
    row_ptr = np.zeros(A.n_rows + 1, dtype=np.int64)
    np.cumsum(lengths, out=row_ptr[1:])
    gather = np.concatenate(
        [np.arange(A.row_ptr[r], A.row_ptr[r + 1]) for r in order]
    ) if A.nnz else np.empty(0, dtype=np.int64)
    return CsrMatrix(A.n_rows, A.n_cols, row_ptr, A.col_idx[gather], A.values[gather])


def csr_spmv(A: CsrMatrix, x: np.ndarray, precision=np.float64) -> np.ndarray:
    """y = A x with each row accumulated left to right in the given precision.

    Values and x are converted (round to nearest) to the working precision
    before multiplying; every product and partial sum rounds in that
    precision. This sequential-in-row order is what makes the kernel usable
    as a bitwise oracle for the slice-based formats.
    """
    wd = np.dtype(precision)
    x = np.asarray(x)
    if len(x) != A.n_cols:
        raise ValueError(f"x has length {len(x)}, expected {A.n_cols}")
    xw = x.astype(wd, copy=False)
    y = np.zeros(A.n_rows, dtype=wd)
    for rows, cols, vals in A._plan(wd):
        acc = vals[:, 0] * xw[cols[:, 0]]
        for j in range(1, vals.shape[1]):
            acc += vals[:, j] * xw[cols[:, j]]
        y[rows] = acc
    return y


def row_sum_scale(A: CsrMatrix) -> CsrMatrix:
    """Scale each row by the inverse of its absolute-value sum."""
    sums = np.zeros(A.n_rows)
    rows = np.repeat(np.arange(A.n_rows), A.row_lengths())
    np.add.at(sums, rows, np.abs(A.values))
    zero = np.flatnonzero(sums == 0.0)
    if len(zero):
        raise ValueError(f"row {zero[0]} has zero absolute sum; cannot scale")
    return CsrMatrix(A.n_rows, A.n_cols, A.row_ptr, A.col_idx, A.values / sums[rows])


def sym_diag_scale(A: CsrMatrix) -> CsrMatrix:
    """Two-sided scaling by 1/sqrt(|diagonal|), giving unit-magnitude diagonal."""
    if A.n_rows != A.n_cols:
        raise ValueError("symmetric scaling requires a square matrix")
    diag = A.diagonal()
    bad = np.flatnonzero(diag == 0.0)
    if len(bad):
        raise ValueError(f"row {bad[0]} has no nonzero stored diagonal entry")
    g = np.sqrt(np.abs(diag))
    rows = np.repeat(np.arange(A.n_rows), A.row_lengths())
    values = A.values / (g[rows] * g[A.col_idx])
    return CsrMatrix(A.n_rows, A.n_cols, A.row_ptr, A.col_idx, values)


def compute_stats(A: CsrMatrix) -> MatrixStats:
    """Per-row nonzero statistics, relative standard deviation, and bandwidths.

    RSD is the population standard deviation of per-row nonzero counts over
    their mean (0 when the mean is 0). Bandwidths come from the extreme
    stored column per row; empty rows contribute 0.
    """
    lengths = A.row_lengths()
    mean = float(lengths.mean()) if A.n_rows else 0.0
    if mean > 0:
        rsd = float(lengths.std()) / mean
    else:
        rsd = 0.0
    lower = 0
    upper = 0
    if A.nnz:
        rows = np.arange(A.n_rows)
        nonempty = lengths > 0
        first = A.col_idx[A.row_ptr[:-1][nonempty]]
        last = A.col_idx[A.row_ptr[1:][nonempty] - 1]
        lower = int(max(0, (rows[nonempty] - first).max(initial=0)))
        upper = int(max(0, (last - rows[nonempty]).max(initial=0)))
    return MatrixStats(
        nnz=A.nnz,
        rsd=rsd,
        lower_bandwidth=lower,
        upper_bandwidth=upper,
        nnz_per_row_min=float(lengths.min()) if A.n_rows else 0.0,
        nnz_per_row_max=float(lengths.max()) if A.n_rows else 0.0,
        nnz_per_row_mean=mean,
    )
