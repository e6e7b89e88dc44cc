"""Sliced-ELL storage with optional row sorting inside fixed-size blocks.

Rows are grouped into slices of C consecutive storage rows; each slice is padded
so all its rows store the same number of elements, laid out column major.
Sorting rows by descending nonzero count within blocks of ``sigma`` rows
(``sigma`` a multiple of C) reduces padding. The permutation is either
applied physically (``explicit``), recorded per block in a small ``perm``
array (``implicit``), or skipped (``none``).
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .matrix import INDEX_DTYPE, CsrMatrix, permute_rows

MODES = ("none", "explicit", "implicit")


def row_sort_order(counts, sigma: int) -> np.ndarray:
    """Storage order of rows: descending count inside each sigma block, stable."""
    counts = np.asarray(counts)
    n = len(counts)
    order = np.empty(n, dtype=np.int64)
    for start in range(0, n, sigma):
        stop = min(start + sigma, n)
        order[start:stop] = start + np.argsort(-counts[start:stop], kind="stable")
    return order


def _check_layout_params(c: int, sigma: int, mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if c < 1:
        raise ValueError(f"slice size must be >= 1, got {c}")
    if mode != "none":
        if sigma < 1 or sigma % c != 0:
            raise ValueError(f"sigma ({sigma}) must be a positive multiple of the slice size ({c})")
        if sigma > 65536:
            raise ValueError("sigma above 65536 is not supported (perm entries are at most 16-bit)")


def perm_dtype(sigma: int) -> np.dtype:
    return np.dtype(np.uint8) if sigma <= 256 else np.dtype(np.uint16)


class SellMatrix:
    """Sliced storage: ``val``/``col`` column-major per slice plus slice offsets.

    ``perm`` is present only in implicit mode and stores, for each storage
    row, the original row's offset within its sigma block. Padding entries
    carry value 0 and repeat the row's last column index (0 for empty rows)
    so every gather stays in bounds.
    """

    def __init__(self, n_rows, n_cols, c, sigma, mode, val, col, offset,
                 perm=None, nnz=None, n_padding=None):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.c = int(c)
        self.sigma = int(sigma)
        self.mode = mode
        self.val = np.asarray(val)
        self.col = np.asarray(col, dtype=INDEX_DTYPE)
        self.offset = np.asarray(offset, dtype=np.int64)
        self.perm = None if perm is None else np.asarray(perm)
        self.nnz = int(nnz) if nnz is not None else None
        self.n_padding = int(n_padding) if n_padding is not None else None
        self._val_casts: dict = {}
        self._plan_cache: Optional[list] = None
        self._out_idx: Optional[np.ndarray] = None

    @property
    def n_slices(self) -> int:
        return len(self.offset) - 1

    @property
    def n_stored(self) -> int:
        return int(self.offset[-1])

    def _val_as(self, dtype) -> np.ndarray:
        dtype = np.dtype(dtype)
        if dtype not in self._val_casts:
            self._val_casts[dtype] = self.val.astype(dtype)
        return self._val_casts[dtype]

    def _plan(self):
        """Slices grouped by width: (slice ids, gather index block (g, w, C))."""
        if self._plan_cache is None:
            widths = np.diff(self.offset) // self.c
            groups = []
            for w in np.unique(widths):
                if w == 0:
                    continue
                ks = np.flatnonzero(widths == w)
                gather = (self.offset[ks][:, None] + np.arange(w * self.c)).reshape(len(ks), w, self.c)
                groups.append((ks, gather))
            self._plan_cache = groups
        return self._plan_cache

    def output_index(self) -> np.ndarray:
        """Original row index for each storage row in [0, n_rows)."""
        if self._out_idx is None:
            s = np.arange(self.n_rows, dtype=np.int64)
            if self.mode == "implicit":
                self._out_idx = (s // self.sigma) * self.sigma + self.perm[:self.n_rows].astype(np.int64)
            else:
                self._out_idx = s
        return self._out_idx


def build_sell(A: CsrMatrix, c: int = 32, sigma: int = 256, mode: str = "implicit",
               value_dtype=np.float64) -> SellMatrix:
    """Build sliced storage from CSR.

    ``mode='none'`` keeps row order (sigma is treated as 1). ``explicit``
    physically reorders rows, after which the layout is the plain sliced
    format of the permuted matrix. ``implicit`` keeps the matrix logically
    in original order and records per-block permutation entries.
    """
    _check_layout_params(c, sigma, mode)
    counts = A.row_lengths()
    if mode == "explicit":
        order = row_sort_order(counts, sigma)
        out = build_sell(permute_rows(A, order), c, sigma, "none", value_dtype)
        out.mode = "explicit"
        out.sigma = sigma
        return out

    n = A.n_rows
    n_storage = -(-n // c) * c
    if mode == "implicit":
        order = row_sort_order(counts, sigma)
    else:
        order = np.arange(n, dtype=np.int64)
    inv_order = np.empty(n, dtype=np.int64)
    inv_order[order] = np.arange(n)

    storage_counts = np.zeros(n_storage, dtype=np.int64)
    storage_counts[:n] = counts[order]
    n_slices = n_storage // c
    widths = storage_counts.reshape(n_slices, c).max(axis=1) if n_slices else np.zeros(0, dtype=np.int64)
    offset = np.zeros(n_slices + 1, dtype=np.int64)
    np.cumsum(widths * c, out=offset[1:])
    total = int(offset[-1])

    val = np.zeros(total, dtype=np.dtype(value_dtype))
    col = np.zeros(total, dtype=INDEX_DTYPE)

    # Scatter real entries: element j of storage row s lands at
    # offset[s // c] + j * c + s % c.
    rows = np.repeat(np.arange(n, dtype=np.int64), counts)
    j = np.arange(A.nnz, dtype=np.int64) - np.repeat(A.row_ptr[:-1], counts)
    s = inv_order[rows]
    tgt = offset[s // c] + j * c + s % c
    val[tgt] = A.values.astype(val.dtype)
    col[tgt] = A.col_idx

    # Padding keeps the row's last stored column (0 for empty rows).
    last_col = np.zeros(n_storage, dtype=INDEX_DTYPE)
    nonempty = counts > 0
    last_col[inv_order[nonempty]] = A.col_idx[A.row_ptr[1:][nonempty] - 1]
    pad_counts = np.repeat(widths, c) - storage_counts
    n_padding = int(pad_counts.sum())
    if n_padding:
        srows = np.repeat(np.arange(n_storage), pad_counts)
        base = np.repeat(np.cumsum(pad_counts) - pad_counts, pad_counts)
        pj = np.arange(n_padding) - base + np.repeat(storage_counts, pad_counts)
        ptgt = offset[srows // c] + pj * c + srows % c
        col[ptgt] = last_col[srows]

    perm = None
    if mode == "implicit":
        perm = (order - (np.arange(n) // sigma) * sigma).astype(perm_dtype(sigma))
    return SellMatrix(n, A.n_cols, c, sigma, mode,
                      val, col, offset, perm, nnz=A.nnz, n_padding=n_padding)


def sell_spmv(M: SellMatrix, x: np.ndarray) -> np.ndarray:
    """y = M x in the precision of x, accumulating each row in stored order.

    Stored values are converted to x's dtype before multiplying; padding
    contributes an exact zero. Output rows are written back in original
    order (through the per-block permutation in implicit mode).
    """
    x = np.asarray(x)
    if len(x) != M.n_cols:
        raise ValueError(f"x has length {len(x)}, expected {M.n_cols}")
    wd = x.dtype
    vals = M._val_as(wd)
    y = np.zeros(M.n_rows, dtype=wd)
    out_idx = M.output_index()
    lanes = np.arange(M.c, dtype=np.int64)
    for ks, gather in M._plan():
        t = np.zeros((len(ks), M.c), dtype=wd)
        for j in range(gather.shape[1]):
            idx = gather[:, j, :]
            t += vals[idx] * x[M.col[idx]]
        srows = ks[:, None] * M.c + lanes
        mask = srows < M.n_rows
        y[out_idx[srows[mask]]] = t[mask]
    return y
