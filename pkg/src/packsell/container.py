"""Bit-exact binary container for packed matrices (.psell files).

Layout (all little endian):
  8 bytes   magic "PSELL\\0v1"
  header    word bits u8, delta bits u8, codec id u8, mode id u8,
            slice size u32, block size u32, then u64 fields: n_rows,
            n_cols, k_left, nnz_real, n_dummy, n_padding, n_slices
  payload   offset array (n_slices + 1, u64), permutation array (implicit
            mode only; u8 when sigma <= 256, else u16, n_rows entries),
            pack array (offset[-1] words, u32 or u64)

Writing the same matrix twice yields identical bytes, and a read-back
matrix is field-for-field identical to the in-memory build.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from .codec import E8MY, FP16, FP32EMBED, PackFormat
from .packed import PackSellMatrix, StorageCounts
from .sell import perm_dtype

MAGIC = b"PSELL\x00v1"
_HEADER = struct.Struct("<BBBBIIQQQQQQQ")
_CODEC_IDS = {FP16: 1, E8MY: 2, FP32EMBED: 3}
_CODEC_NAMES = {v: k for k, v in _CODEC_IDS.items()}
_MODE_IDS = {"none": 0, "explicit": 1, "implicit": 2}
_MODE_NAMES = {v: k for k, v in _MODE_IDS.items()}


class ContainerError(ValueError):
    """Raised for malformed or inconsistent .psell content."""


def write_psell(M: PackSellMatrix, dest: Union[str, Path, BinaryIO]) -> None:
    own = isinstance(dest, (str, Path))
    f = open(dest, "wb") if own else dest
    try:
        f.write(MAGIC)
        f.write(_HEADER.pack(
            M.fmt.w, M.fmt.d, _CODEC_IDS[M.fmt.codec], _MODE_IDS[M.mode],
            M.c, M.sigma, M.n_rows, M.n_cols, M.k_left,
            M.counts.nnz_real, M.counts.n_dummy, M.counts.n_padding, M.n_slices,
        ))
        f.write(M.offset.astype("<u8").tobytes())
        if M.mode == "implicit":
            f.write(M.perm.astype(perm_dtype(M.sigma).newbyteorder("<")).tobytes())
        f.write(M.pack.astype(M.fmt.word_dtype.newbyteorder("<")).tobytes())
    finally:
        if own:
            f.close()


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ContainerError(f"truncated container: expected {n} bytes for {what}, got {len(data)}")
    return data


def read_psell(source: Union[str, Path, BinaryIO]) -> PackSellMatrix:
    own = isinstance(source, (str, Path))
    f = open(source, "rb") if own else source
    try:
        if _read_exact(f, len(MAGIC), "magic") != MAGIC:
            raise ContainerError("not a .psell container (bad magic)")
        fields = _HEADER.unpack(_read_exact(f, _HEADER.size, "header"))
        w, d, codec_id, mode_id, c, sigma, n_rows, n_cols, k_left, nnz, n_dummy, n_pad, n_slices = fields
        if codec_id not in _CODEC_NAMES:
            raise ContainerError(f"unknown codec id {codec_id}")
        if mode_id not in _MODE_NAMES:
            raise ContainerError(f"unknown mode id {mode_id}")
        try:
            fmt = PackFormat(w, d, _CODEC_NAMES[codec_id])
        except ValueError as e:
            raise ContainerError(f"invalid format in header: {e}") from None
        mode = _MODE_NAMES[mode_id]

        offset = np.frombuffer(_read_exact(f, 8 * (n_slices + 1), "offset array"), dtype="<u8").astype(np.int64)
        if len(offset) and (offset[0] != 0 or np.any(np.diff(offset) < 0)):
            raise ContainerError("offset array is not a non-decreasing prefix starting at 0")
        perm = None
        if mode == "implicit":
            pdt = perm_dtype(sigma)
            raw = _read_exact(f, pdt.itemsize * n_rows, "perm array")
            perm = np.frombuffer(raw, dtype=pdt.newbyteorder("<")).astype(pdt)
        n_words = int(offset[-1]) if len(offset) else 0
        wdt = fmt.word_dtype
        pack = np.frombuffer(_read_exact(f, wdt.itemsize * n_words, "pack array"),
                             dtype=wdt.newbyteorder("<")).astype(wdt)
        if nnz + n_dummy + n_pad != n_words:
            raise ContainerError(
                f"header counts ({nnz} + {n_dummy} + {n_pad}) do not sum to the stored word count {n_words}")
        return PackSellMatrix(n_rows, n_cols, c, sigma, mode, fmt, pack, offset,
                              perm, k_left, StorageCounts(nnz, n_dummy, n_pad))
    finally:
        if own:
            f.close()
