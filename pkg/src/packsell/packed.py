"""Delta/value-packed sliced format: dummy insertion, alignment, and SpMV.

Column indices are stored as deltas from the previous stored element in the
row; the first element is measured from a per-row base offset that is
uniform inside each ``sigma`` block (block start minus the lower bandwidth,
clamped at zero). A gap too wide for the D-bit delta field is carried by a
value-less dummy word, and the following real element stores delta 0. The
slice alignment of the plain sliced format is then applied over real and
dummy words alike, with the all-zero word as padding.
"""

from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from . import codec
from .matrix import CsrMatrix, CooMatrix, to_csr, compute_stats
from .sell import _check_layout_params, build_sell, perm_dtype, row_sort_order


class DeltaEntry(NamedTuple):
    delta: int
    value: Optional[float]  # None marks a dummy word


class StorageCounts(NamedTuple):
    nnz_real: int
    n_dummy: int
    n_padding: int


class FootprintReport(NamedTuple):
    pack_bits: int
    sell_equiv_bits: int
    ratio: float


def leftmost_offset(i: int, sigma: int, k_left: int) -> int:
    """Base column for the first delta of row i: sigma-block start minus k_left.

    Identical for every row in the same sigma block, and zero whenever the
    block start does not exceed the lower bandwidth.
    """
    block = (i // sigma) * sigma
    return block - k_left if k_left < block else 0


def _leftmost_offsets(n: int, sigma: int, k_left: int) -> np.ndarray:
    block = (np.arange(n, dtype=np.int64) // sigma) * sigma
    return np.where(k_left < block, block - k_left, 0)


def build_delta_stream(row_cols, row_vals, d_i: int, fmt: codec.PackFormat) -> list:
    """Delta stream of one row: reference path used to cross-check the builder.

    Emits a dummy entry carrying the full gap before any element whose delta
    would overflow D bits (the element itself then stores delta 0); a gap
    beyond even the dummy range is split into a chain of dummy entries.
    """
    cols = [int(c) for c in row_cols]
    if cols and cols[0] < d_i:
        raise ValueError(
            f"first column {cols[0]} is left of the row base offset {d_i}; "
            "the lower bandwidth used to derive the offset is inconsistent"
        )
    stream: list[DeltaEntry] = []
    prev = d_i
    for c, v in zip(cols, row_vals):
        gap = c - prev
        if gap >= 1 << fmt.d:
            while gap > fmt.max_dummy_delta:
                stream.append(DeltaEntry(fmt.max_dummy_delta, None))
                gap -= fmt.max_dummy_delta
            stream.append(DeltaEntry(gap, None))
            gap = 0
        stream.append(DeltaEntry(gap, float(v)))
        prev = c
    return stream


class PackSellMatrix:
    """Packed word array plus slice offsets, permutation, and bandwidth metadata."""

    def __init__(self, n_rows, n_cols, c, sigma, mode, fmt, pack, offset,
                 perm=None, k_left=0, counts=StorageCounts(0, 0, 0)):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.c = int(c)
        self.sigma = int(sigma)
        self.mode = mode
        self.fmt = fmt
        self.pack = np.asarray(pack, dtype=fmt.word_dtype)
        self.offset = np.asarray(offset, dtype=np.int64)
        self.perm = None if perm is None else np.asarray(perm)
        self.k_left = int(k_left)
        self.counts = StorageCounts(*counts)
        self._plan_cache: Optional[list] = None
        self._out_idx: Optional[np.ndarray] = None

    @property
    def n_slices(self) -> int:
        return len(self.offset) - 1

    @property
    def n_stored(self) -> int:
        return int(self.offset[-1])

    @property
    def effective_sigma(self) -> int:
        """Block size actually used for base offsets and sorting (1 when unsorted)."""
        return 1 if self.mode == "none" else self.sigma

    def _plan(self):
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

    def storage_base_offsets(self) -> np.ndarray:
        """Row base offsets indexed by storage row (block-uniform, so the
        within-block permutation does not change them)."""
        n_storage = self.n_slices * self.c
        return _leftmost_offsets(n_storage, self.effective_sigma, self.k_left)


def _stream_layout(A: CsrMatrix, d_row: np.ndarray, fmt: codec.PackFormat):
    """Vectorized per-entry stream layout.

    Returns (gaps, dummy_mask, stored_counts) where gaps[k] is the delta of
    real entry k before dummy splitting, dummy_mask[k] says entry k is
    preceded by a dummy word, and stored_counts[r] is the number of words
    (real + dummy) row r contributes.
    """
    lengths = A.row_lengths()
    nonempty = lengths > 0
    starts = A.row_ptr[:-1][nonempty]
    gaps = A.col_idx.astype(np.int64)
    gaps[1:] -= A.col_idx[:-1].astype(np.int64)
    gaps[starts] = A.col_idx[starts] - d_row[nonempty]
    if len(starts) and gaps[starts].min() < 0:
        bad = np.flatnonzero(nonempty)[np.argmin(gaps[starts])]
        raise ValueError(
            f"row {bad}: first column {A.col_idx[A.row_ptr[bad]]} is left of its base offset; "
            "lower bandwidth metadata is inconsistent"
        )
    dummy = gaps >= (1 << fmt.d)
    if A.nnz and int(gaps.max()) > fmt.max_dummy_delta:
        raise ValueError(
            f"a column gap exceeds the dummy delta range 2**{fmt.w - 1} - 1; "
            "matrices this wide are not supported"
        )
    dcum = np.concatenate([[0], np.cumsum(dummy)])
    stored_counts = lengths + (dcum[A.row_ptr[1:]] - dcum[A.row_ptr[:-1]])
    return gaps, dummy, dcum, stored_counts


def build_packsell(A: CsrMatrix, c: int = 32, sigma: int = 256,
                   fmt: codec.PackFormat = codec.PackFormat(),
                   mode: str = "implicit", _k_left_override: Optional[int] = None) -> PackSellMatrix:
    """Build the packed sliced format from CSR.

    Pipeline: derive the lower bandwidth, lay out each row's delta stream
    with dummy words for oversized gaps, sort rows inside sigma blocks by
    descending stored-word count (stable), pad slices with all-zero words,
    and pack column major per slice. ``explicit`` mode stores rows in the
    sorted order with no permutation array; ``implicit`` keeps original
    ordering logically and records the block-local permutation.

    ``_k_left_override`` substitutes the computed lower bandwidth and exists
    for structural tests only (it shifts every row's base offset).
    """
    _check_layout_params(c, sigma, mode)
    eff_sigma = 1 if mode == "none" else sigma
    if _k_left_override is not None:
        k_left = int(_k_left_override)
    else:
        k_left = compute_stats(A).lower_bandwidth
    n = A.n_rows
    d_row = _leftmost_offsets(n, eff_sigma, k_left)
    gaps, dummy, dcum, stored_counts = _stream_layout(A, d_row, fmt)

    if mode == "none":
        order = np.arange(n, dtype=np.int64)
    else:
        order = row_sort_order(stored_counts, sigma)
    inv_order = np.empty(n, dtype=np.int64)
    inv_order[order] = np.arange(n)

    n_storage = -(-n // c) * c
    storage_counts = np.zeros(n_storage, dtype=np.int64)
    storage_counts[:n] = stored_counts[order]
    n_slices = n_storage // c
    widths = storage_counts.reshape(n_slices, c).max(axis=1) if n_slices else np.zeros(0, dtype=np.int64)
    offset = np.zeros(n_slices + 1, dtype=np.int64)
    np.cumsum(widths * c, out=offset[1:])
    total = int(offset[-1])

    # Zero-initialized array makes every unwritten slot a padding word.
    pack = np.zeros(total, dtype=fmt.word_dtype)

    rows = np.repeat(np.arange(n, dtype=np.int64), A.row_lengths())
    j = np.arange(A.nnz, dtype=np.int64) - np.repeat(A.row_ptr[:-1], A.row_lengths())
    q_real = j + (dcum[1:] - dcum[np.repeat(A.row_ptr[:-1], A.row_lengths())])
    s = inv_order[rows]
    base = offset[s // c] + s % c
    real_deltas = np.where(dummy, 0, gaps)
    patterns = codec.encode_values(fmt, A.values)
    pack[base + q_real * c] = codec.pack_words(fmt, patterns, real_deltas, np.ones(A.nnz, dtype=bool))
    if dummy.any():
        dk = np.flatnonzero(dummy)
        pack[base[dk] + (q_real[dk] - 1) * c] = codec.pack_words(
            fmt, np.zeros(len(dk)), gaps[dk], np.zeros(len(dk), dtype=bool))

    perm = None
    if mode == "implicit":
        perm = (order - (np.arange(n) // sigma) * sigma).astype(perm_dtype(sigma))
    n_dummy = int(dummy.sum())
    counts = StorageCounts(A.nnz, n_dummy, total - A.nnz - n_dummy)
    return PackSellMatrix(n, A.n_cols, c, sigma, mode, fmt, pack, offset,
                          perm, k_left, counts)


def packsell_spmv(M: PackSellMatrix, x: np.ndarray) -> np.ndarray:
    """y = M x in the precision of x with on-the-fly unpacking.

    Each row walks its packed words in stored order: the delta advances a
    column cursor starting at the row's base offset and the decoded value
    (exact zero for dummy and padding words) multiplies the gathered x
    entry. The cursor start is clamped into [0, n_cols) so rows whose base
    offset lies past the last column (possible only for rows with no real
    entries) still gather in bounds; their contribution is zero either way.
    """
    x = np.asarray(x)
    if len(x) != M.n_cols:
        raise ValueError(f"x has length {len(x)}, expected {M.n_cols}")
    wd = x.dtype
    y = np.zeros(M.n_rows, dtype=wd)
    base = np.minimum(M.storage_base_offsets(), max(M.n_cols - 1, 0))
    out_idx = M.output_index()
    lanes = np.arange(M.c, dtype=np.int64)
    for ks, gather in M._plan():
        srows = ks[:, None] * M.c + lanes
        cursor = base[srows]
        t = np.zeros(srows.shape, dtype=wd)
        for j in range(gather.shape[1]):
            words = M.pack[gather[:, j, :]]
            values, deltas, _ = codec.unpack_words(M.fmt, words)
            cursor += deltas.astype(np.int64)
            t += values.astype(wd, copy=False) * x[cursor]
        mask = srows < M.n_rows
        y[out_idx[srows[mask]]] = t[mask]
    return y


def packsell_to_csr(M: PackSellMatrix) -> CsrMatrix:
    """Reconstruct the (quantized) matrix by decoding every delta chain.

    Rows come back in the matrix's logical order: original order for
    ``none``/``implicit``, stored order for ``explicit``.
    """
    rows_out = []
    cols_out = []
    vals_out = []
    base = M.storage_base_offsets()
    out_idx = M.output_index()
    lanes = np.arange(M.c, dtype=np.int64)
    for ks, gather in M._plan():
        srows = ks[:, None] * M.c + lanes
        cursor = base[srows]
        for j in range(gather.shape[1]):
            words = M.pack[gather[:, j, :]]
            values, deltas, flags = codec.unpack_words(M.fmt, words)
            cursor += deltas.astype(np.int64)
            keep = flags & (srows < M.n_rows)
            rows_out.append(out_idx[srows[keep]])
            cols_out.append(cursor[keep])
            vals_out.append(values[keep].astype(np.float64))
    if rows_out:
        rows = np.concatenate(rows_out)
        cols = np.concatenate(cols_out)
        vals = np.concatenate(vals_out)
    else:
        rows = cols = vals = np.empty(0)
    return to_csr(CooMatrix(M.n_rows, M.n_cols, rows, cols, vals))


def footprint_bits(M: PackSellMatrix) -> FootprintReport:
    """Storage bits of the packed matrix versus a like-for-like sliced build.

    The sliced equivalent uses the same slice size, block size, mode, and
    the value precision matching the codec (16-bit values for the fp16
    codec, 32-bit otherwise), with its padding counted from an actual
    build. Offset and permutation overhead is included on both sides.
    Note the dense-band limit of the ratio for 32-bit words with 16-bit
    values is 32/48 = 2/3.
    """
    value_bits = 16 if M.fmt.codec == codec.FP16 else 32
    value_dtype = np.float16 if value_bits == 16 else np.float32
    perm_bits = 0 if M.perm is None else M.perm.dtype.itemsize * 8 * len(M.perm)
    pack_bits = M.fmt.w * M.n_stored + 64 * (M.n_slices + 1) + perm_bits

    A = packsell_to_csr(M)
    sell_mode = "none" if M.mode == "explicit" else M.mode
    sell = build_sell(A, M.c, M.sigma, sell_mode, value_dtype)
    sell_perm_bits = 0 if sell.perm is None else sell.perm.dtype.itemsize * 8 * len(sell.perm)
    sell_bits = (value_bits + 32) * sell.n_stored + 64 * (sell.n_slices + 1) + sell_perm_bits
    ratio = pack_bits / sell_bits if sell_bits else 1.0
    return FootprintReport(int(pack_bits), int(sell_bits), float(ratio))
