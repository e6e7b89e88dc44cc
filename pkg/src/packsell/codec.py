"""W-bit word layout packing a column delta and an encoded value together.

Each word holds a flag in the least significant bit, a D-bit delta above it,
and a V = W - D - 1 bit encoded value in the top bits. When the flag is 0
the value is absent and the delta may occupy all W - 1 upper bits (up to
2**(W-1) - 1). The all-zero word doubles as alignment padding.

Value codecs:
  * ``fp16``      -- IEEE half bit pattern embedded directly (requires V = 16).
  * ``e8my``      -- sign + 8 exponent + Y = 22 - D mantissa bits, bit-compatible
                     with an FP32 whose low D + 1 mantissa bits are zero (W = 32).
  * ``fp32embed`` -- full FP32 pattern, lossless; W = 64 only, used for oracle
                     testing against FP32 CSR kernels.

Unpacking is branch free (shift arithmetic plus a flag multiply) so the same
code path serves real, dummy, and padding words.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

FP16 = "fp16"
E8MY = "e8my"
FP32EMBED = "fp32embed"

_WORD_DTYPES = {32: np.dtype(np.uint32), 64: np.dtype(np.uint64)}


class CodecError(ValueError):
    """A value cannot be represented (non-finite input or overflow after rounding)."""


@dataclass(frozen=True)
class PackFormat:
    """The (W, D, codec) tuple fixing word width, delta bits, and value encoding."""

    w: int = 32
    d: int = 15
    codec: str = FP16

    def __post_init__(self):
        if self.w not in _WORD_DTYPES:
            raise ValueError(f"word width must be 32 or 64, got {self.w}")
        if not 1 <= self.d <= self.w - 2:
            raise ValueError(f"delta bits must be in [1, {self.w - 2}], got {self.d}")
        if self.codec == FP16:
            if self.v != 16:
                raise ValueError(f"fp16 codec needs 16 value bits, got V={self.v} (use D={self.w - 17})")
        elif self.codec == E8MY:
            if self.w != 32:
                raise ValueError("e8my codec requires 32-bit words")
            if self.mantissa_bits < 1:
                raise ValueError(f"e8my needs at least 1 mantissa bit (D={self.d} leaves {self.mantissa_bits})")
        elif self.codec == FP32EMBED:
            if self.w != 64 or self.v < 32:
                raise ValueError("fp32embed codec requires 64-bit words and V >= 32")
        else:
            raise ValueError(f"unknown codec {self.codec!r}")

    @property
    def v(self) -> int:
        """Value bits; W = V + D + 1."""
        return self.w - self.d - 1

    @property
    def mantissa_bits(self) -> int:
        """Mantissa bits Y of the e8my layout (V = 1 + 8 + Y)."""
        return self.v - 9

    @property
    def max_delta(self) -> int:
        """Largest delta storable alongside a value."""
        return (1 << self.d) - 1

    @property
    def max_dummy_delta(self) -> int:
        """Largest delta storable in a flag=0 (value-absent) word."""
        return (1 << (self.w - 1)) - 1

    @property
    def word_dtype(self) -> np.dtype:
        return _WORD_DTYPES[self.w]

    @property
    def value_dtype(self) -> np.dtype:
        """Natural working dtype of decoded values."""
        return np.dtype(np.float16) if self.codec == FP16 else np.dtype(np.float32)

    @property
    def name(self) -> str:
        if self.codec == FP16:
            return "fp16"
        if self.codec == E8MY:
            return f"e8m{self.mantissa_bits}"
        return "fp32embed"


def parse_format(name: str) -> PackFormat:
    """Map a preset name (fp16, e8m14, fp32embed, ...) to a PackFormat."""
    name = name.lower()
    if name == "fp16":
        return PackFormat(32, 15, FP16)
    if name == "fp32embed":
        return PackFormat(64, 31, FP32EMBED)
    if name.startswith("e8m"):
        try:
            y = int(name[3:])
        except ValueError:
            raise ValueError(f"unknown format preset {name!r}") from None
        return PackFormat(32, 22 - y, E8MY)
    raise ValueError(f"unknown format preset {name!r}")


class UnpackedEntry(NamedTuple):
    value: float
    delta: int
    has_value: bool


def _check_finite(values: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(values))
    if len(bad):
        raise CodecError(f"non-finite value {values[bad[0]]!r} at position {bad[0]}")


def _encode_fp16(values: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        half = values.astype(np.float16)
    over = np.flatnonzero(np.isinf(half) & np.isfinite(values))
    if len(over):
        raise CodecError(
            f"value {values[over[0]]!r} overflows FP16 (|v| beyond 65504) at position {over[0]}"
        )
    return half.view(np.uint16).astype(np.uint32)


def _encode_e8my(values: np.ndarray, d: int) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        v32 = values.astype(np.float32)
        # Subnormal FP32 inputs flush to signed zero; the frexp-based scaling
        # is not meaningful below the normal range.
        tiny = (v32 != 0) & (np.abs(v32) < np.float32(2.0**-126))
        v32 = np.where(tiny, np.copysign(np.float32(0.0), v32), v32)
        v64 = v32.astype(np.float64)
        _, exp = np.frexp(v32)
        scale = np.ldexp(1.0, exp - 24 + d + 1)  # exact powers of two in float64
        ratio = v64 / scale
        k = np.trunc(ratio + np.copysign(0.5, ratio))  # round half away from zero
        q = (k * scale).astype(np.float32)
    over = np.flatnonzero(np.isinf(q))
    if len(over):
        raise CodecError(f"value {values[over[0]]!r} rounds to infinity in e8m{22 - d} at position {over[0]}")
    bits = q.view(np.uint32)
    low = np.uint32((1 << (d + 1)) - 1)
    bits = bits & ~low  # truncation; the rounding already zeroed these bits
    return bits >> np.uint32(d + 1)


def _encode_fp32(values: np.ndarray, v_bits: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        f32 = values.astype(np.float32)
    over = np.flatnonzero(np.isinf(f32) & np.isfinite(values))
    if len(over):
        raise CodecError(f"value {values[over[0]]!r} overflows FP32 at position {over[0]}")
    pattern = f32.view(np.uint32).astype(np.uint64)
    return pattern << np.uint64(v_bits - 32)


def encode_values(fmt: PackFormat, values) -> np.ndarray:
    """Encode an array of finite reals to right-aligned V-bit patterns."""
    values = np.asarray(values, dtype=np.float64)
    _check_finite(values)
    if fmt.codec == FP16:
        return _encode_fp16(values)
    if fmt.codec == E8MY:
        return _encode_e8my(values, fmt.d)
    return _encode_fp32(values, fmt.v)


def decode_patterns(fmt: PackFormat, patterns) -> np.ndarray:
    """Decode right-aligned V-bit patterns to the codec's natural float dtype."""
    if fmt.codec == FP16:
        return np.asarray(patterns, dtype=np.uint32).astype(np.uint16).view(np.float16)
    if fmt.codec == E8MY:
        bits = np.asarray(patterns, dtype=np.uint32) << np.uint32(fmt.d + 1)
        return bits.view(np.float32)
    bits = np.asarray(patterns, dtype=np.uint64) >> np.uint64(fmt.v - 32)
    return bits.astype(np.uint32).view(np.float32)


def encode_value(fmt: PackFormat, value: float) -> int:
    """Encode one finite real to its V-bit pattern."""
    return int(encode_values(fmt, [value])[0])


def decode_value(fmt: PackFormat, pattern: int) -> float:
    """Decode one V-bit pattern back to a real."""
    return float(decode_patterns(fmt, [pattern])[0])


def quantize(fmt: PackFormat, values) -> np.ndarray:
    """decode(encode(v)) for an array, returned in float64."""
    return decode_patterns(fmt, encode_values(fmt, values)).astype(np.float64)


def pack_words(fmt: PackFormat, patterns, deltas, flags) -> np.ndarray:
    """Assemble words from encoded patterns, deltas, and presence flags.

    Build-time path; range validation is the caller's job (the scalar
    ``pack`` below validates).
    """
    wt = fmt.word_dtype
    patterns = np.asarray(patterns).astype(wt)
    deltas = np.asarray(deltas).astype(wt)
    flags = np.asarray(flags).astype(wt)
    return np.where(
        flags.astype(bool),
        (patterns << wt.type(fmt.d + 1)) | (deltas << wt.type(1)) | wt.type(1),
        deltas << wt.type(1),
    ).astype(wt)


def unpack_words(fmt: PackFormat, words):
    """Branch-free unpacking of an array of words.

    Returns ``(values, deltas, flags)`` where values are in the codec's
    natural float dtype (exact zero where the flag is 0), deltas are the
    full recovered deltas, and flags mark value presence. The delta is
    recovered by a flag-dependent left-then-right shift and the value bits
    are multiplied by the flag, so no data-dependent branching occurs.
    """
    wt = fmt.word_dtype
    words = np.asarray(words, dtype=wt)
    flag = words & wt.type(1)
    shift = flag * wt.type(fmt.v)
    deltas = (words << shift) >> (shift + wt.type(1))
    if fmt.codec == FP16:
        vbits = (words >> wt.type(16)).astype(np.uint16) * flag.astype(np.uint16)
        values = vbits.view(np.float16)
    elif fmt.codec == E8MY:
        low = wt.type((1 << (fmt.d + 1)) - 1)
        values = (((words & ~low) * flag)).view(np.float32)
    else:
        vbits = (words >> wt.type(fmt.d + 1)) * flag
        values = (vbits >> np.uint64(fmt.v - 32)).astype(np.uint32).view(np.float32)
    return values, deltas, flag.astype(bool)


def pack(fmt: PackFormat, value: Optional[float], delta: int) -> int:
    """Pack one (value, delta) pair; value ``None`` makes a dummy/padding word."""
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    if value is None:
        if delta > fmt.max_dummy_delta:
            raise ValueError(f"dummy delta {delta} exceeds {fmt.max_dummy_delta}")
        return delta << 1
    if delta > fmt.max_delta:
        raise ValueError(f"delta {delta} exceeds {fmt.max_delta} (needs a dummy word)")
    return (encode_value(fmt, value) << (fmt.d + 1)) | (delta << 1) | 1


def unpack(fmt: PackFormat, word: int) -> UnpackedEntry:
    """Unpack one word; total on every W-bit pattern."""
    values, deltas, flags = unpack_words(fmt, [word])
    return UnpackedEntry(float(values[0]), int(deltas[0]), bool(flags[0]))
