"""Word layout and value codecs: bit goldens, round trips, and error bounds."""

import math

import numpy as np
import pytest

from packsell.codec import (CodecError, E8MY, FP16, FP32EMBED, PackFormat, UnpackedEntry,
                            decode_patterns, decode_value, encode_value, encode_values,
                            pack, pack_words, parse_format, quantize, unpack, unpack_words)


def e8my_reference(value: float, d: int) -> float:
    """Independent scalar recipe: normalize, snap to the coarse grid, rescale."""
    v32 = np.float32(value)
    if v32 == 0:
        return 0.0
    _, e = math.frexp(float(v32))
    s = math.ldexp(1.0, e - 24 + d + 1)
    r = float(v32) / s
    k = math.floor(r + 0.5) if r >= 0 else math.ceil(r - 0.5)
    return float(np.float32(k * s))


class TestPackFormat:
    def test_bit_budget(self):
        fmt = PackFormat(32, 15, FP16)
        assert fmt.w == fmt.v + fmt.d + 1
        assert fmt.max_delta == 2**15 - 1
        assert fmt.max_dummy_delta == 2**31 - 1

    def test_e8my_mantissa_relation(self):
        for d in range(1, 13):
            fmt = PackFormat(32, d, E8MY)
            assert fmt.mantissa_bits == 22 - d
            assert fmt.v == 9 + fmt.mantissa_bits

    @pytest.mark.parametrize("w,d,codec", [
        (16, 4, FP16),        # bad word width
        (32, 0, E8MY),        # delta bits too small
        (32, 31, E8MY),       # delta bits too large
        (32, 14, FP16),       # fp16 needs V = 16
        (64, 15, E8MY),       # e8my is 32-bit only
        (32, 22, E8MY),       # no mantissa bits left
        (32, 15, FP32EMBED),  # fp32embed is 64-bit only
        (64, 40, FP32EMBED),  # V < 32
        (32, 15, "bogus"),
    ])
    def test_invalid_formats(self, w, d, codec):
        with pytest.raises(ValueError):
            PackFormat(w, d, codec)

    def test_parse_presets(self):
        assert parse_format("fp16") == PackFormat(32, 15, FP16)
        assert parse_format("e8m14") == PackFormat(32, 8, E8MY)
        assert parse_format("e8m20") == PackFormat(32, 2, E8MY)
        assert parse_format("fp32embed") == PackFormat(64, 31, FP32EMBED)
        assert parse_format("e8m14").name == "e8m14"
        with pytest.raises(ValueError):
            parse_format("q5")


class TestFp16Codec:
    FMT = PackFormat(32, 15, FP16)

    def test_one(self):
        assert encode_value(self.FMT, 1.0) == 0x3C00
        assert decode_value(self.FMT, 0x3C00) == 1.0

    def test_round_to_nearest_even(self):
        # 2049 sits halfway between 2048 and 2050 in fp16; even mantissa wins.
        assert decode_value(self.FMT, encode_value(self.FMT, 2049.0)) == 2048.0
        assert decode_value(self.FMT, encode_value(self.FMT, 2051.0)) == 2052.0

    def test_max_finite_ok_overflow_rejected(self):
        assert decode_value(self.FMT, encode_value(self.FMT, 65504.0)) == 65504.0
        with pytest.raises(CodecError):
            encode_value(self.FMT, 65520.0)
        with pytest.raises(CodecError):
            encode_value(self.FMT, -1e9)

    def test_subnormal_halves_allowed(self):
        v = 2.0**-20
        assert decode_value(self.FMT, encode_value(self.FMT, v)) == v

    def test_non_finite_rejected(self):
        for bad in (float("nan"), float("inf"), -float("inf")):
            with pytest.raises(CodecError):
                encode_value(self.FMT, bad)


class TestE8myCodec:
    def test_one_is_identity(self):
        for d in (1, 2, 6, 12):
            fmt = PackFormat(32, d, E8MY)
            assert encode_value(fmt, 1.0) << (d + 1) == 0x3F800000

    def test_golden_tenth_d2(self):
        fmt = PackFormat(32, 2, E8MY)
        ref = e8my_reference(0.1, 2)
        pattern = encode_value(fmt, 0.1)
        full = pattern << 3
        assert full == np.float32(ref).view(np.uint32) == 0x3DCCCCD0
        assert full & 0b111 == 0
        assert decode_value(fmt, pattern) == np.float32(ref)

    def test_matches_reference_recipe(self, rng):
        for d in (1, 2, 6, 12):
            fmt = PackFormat(32, d, E8MY)
            vals = rng.uniform(-10, 10, 400)
            got = quantize(fmt, vals)
            want = [e8my_reference(v, d) for v in vals]
            assert np.array_equal(got, want), f"d={d}"

    def test_low_bits_always_zero(self, rng):
        for d in (1, 5, 12):
            fmt = PackFormat(32, d, E8MY)
            vals = rng.uniform(-1e6, 1e6, 1000)
            bits = decode_patterns(fmt, encode_values(fmt, vals)).view(np.uint32)
            assert not np.any(bits & ((1 << (d + 1)) - 1))

    def test_relative_error_bound_d12(self, rng):
        fmt = PackFormat(32, 12, E8MY)  # 10 mantissa bits
        vals = rng.uniform(-100, 100, 10**6)
        vals = vals[np.abs(vals) > 1e-6]
        q = quantize(fmt, vals.astype(np.float32).astype(np.float64))
        rel = np.abs(q - vals.astype(np.float32).astype(np.float64)) / np.abs(vals)
        assert rel.max() <= 2.0**-11 / (1 - 2.0**-11) + 1e-12

    def test_half_ulp_bound(self, rng):
        for d in (2, 8):
            y = 22 - d
            fmt = PackFormat(32, d, E8MY)
            vals = rng.uniform(-50, 50, 2000)
            v32 = vals.astype(np.float32).astype(np.float64)
            q = quantize(fmt, v32)
            _, e = np.frexp(v32)
            ulp = np.ldexp(1.0, e - y)  # 2**(unbiased_exponent - Y), exponent from [0.5, 1) normalization
            assert np.all(np.abs(q - v32) <= 0.5 * ulp)

    def test_more_mantissa_bits_at_least_as_accurate(self, rng):
        vals = rng.uniform(-20, 20, 2000)
        v32 = vals.astype(np.float32).astype(np.float64)
        errs = {}
        for y in (10, 14, 18, 21):
            fmt = PackFormat(32, 22 - y, E8MY)
            errs[y] = np.abs(quantize(fmt, v32) - v32)
        assert np.all(errs[14] <= errs[10])
        assert np.all(errs[18] <= errs[14])
        assert np.all(errs[21] <= errs[18])

    def test_monotone(self, rng):
        fmt = PackFormat(32, 8, E8MY)
        vals = np.sort(rng.uniform(-5, 5, 3000))
        q = quantize(fmt, vals)
        assert np.all(np.diff(q) >= 0)

    def test_exact_on_coarse_dyadics(self):
        fmt = PackFormat(32, 12, E8MY)  # 10 mantissa bits
        for v in (0.0, 1.0, -2.0, 0.5, 3.0, 1.5, -1024.0, 0.03125, 40.25):
            assert decode_value(fmt, encode_value(fmt, v)) == v

    def test_carry_into_exponent(self):
        fmt = PackFormat(32, 12, E8MY)
        v = float(np.float32(1.0) - np.float32(2.0**-13))  # rounds up across the binade
        assert decode_value(fmt, encode_value(fmt, v)) == 1.0

    def test_subnormal_flush_and_overflow(self):
        fmt = PackFormat(32, 2, E8MY)
        assert decode_value(fmt, encode_value(fmt, 1e-40)) == 0.0
        assert math.copysign(1.0, decode_value(fmt, encode_value(fmt, -1e-40))) == -1.0
        with pytest.raises(CodecError):
            encode_value(fmt, 3.5e38)

    def test_rounds_half_away_from_zero(self):
        # Force an exact tie: with 20 mantissa bits kept, value 1 + 2**-21
        # sits halfway between 1 and 1 + 2**-20.
        fmt = PackFormat(32, 2, E8MY)
        v = float(np.float32(1.0) + np.float32(2.0**-21))
        assert decode_value(fmt, encode_value(fmt, v)) == float(np.float32(1.0) + np.float32(2.0**-20))
        assert decode_value(fmt, encode_value(fmt, -v)) == -float(np.float32(1.0) + np.float32(2.0**-20))


class TestFp32Embed:
    FMT = PackFormat(64, 31, FP32EMBED)

    def test_lossless_on_f32(self, rng):
        vals = rng.uniform(-1e3, 1e3, 1000).astype(np.float32).astype(np.float64)
        assert np.array_equal(quantize(self.FMT, vals), vals)


class TestPackUnpack:
    def test_golden_value_word(self):
        fmt = PackFormat(32, 15, FP16)
        # Independent assembly of the three fields.
        expected = (int(np.float16(1.0).view(np.uint16)) << 16) | (3 << 1) | 1
        assert expected == 0x3C000007
        assert pack(fmt, 1.0, 3) == expected
        assert unpack(fmt, expected) == UnpackedEntry(1.0, 3, True)

    def test_golden_dummy_word(self):
        fmt = PackFormat(32, 15, FP16)
        assert pack(fmt, None, 70000) == 70000 << 1 == 0x000222E0
        assert unpack(fmt, 0x000222E0) == UnpackedEntry(0.0, 70000, False)

    def test_padding_word(self):
        fmt = PackFormat(32, 15, FP16)
        assert pack(fmt, None, 0) == 0x00000000
        assert unpack(fmt, 0) == UnpackedEntry(0.0, 0, False)

    def test_delta_range_errors(self):
        fmt = PackFormat(32, 4, E8MY)
        with pytest.raises(ValueError):
            pack(fmt, 1.0, 16)
        with pytest.raises(ValueError):
            pack(fmt, None, 2**31)
        with pytest.raises(ValueError):
            pack(fmt, 1.0, -1)

    @pytest.mark.parametrize("fmt", [
        PackFormat(32, 15, FP16),
        PackFormat(32, 2, E8MY),
        PackFormat(32, 12, E8MY),
        PackFormat(64, 31, FP32EMBED),
    ])
    def test_round_trip(self, fmt, rng):
        values = rng.uniform(-100, 100, 500)
        deltas = rng.integers(0, fmt.max_delta + 1, 500)
        for v, d in zip(values[:50], deltas[:50]):
            got = unpack(fmt, pack(fmt, float(v), int(d)))
            assert got == UnpackedEntry(decode_value(fmt, encode_value(fmt, float(v))), int(d), True)
        words = pack_words(fmt, encode_values(fmt, values), deltas, np.ones(500, bool))
        dec, dl, fl = unpack_words(fmt, words)
        assert np.array_equal(dec, decode_patterns(fmt, encode_values(fmt, values)))
        assert np.array_equal(dl.astype(np.int64), deltas)
        assert fl.all()
        big = rng.integers(0, fmt.max_dummy_delta + 1, 200)
        dwords = pack_words(fmt, np.zeros(200), big, np.zeros(200, bool))
        dec, dl, fl = unpack_words(fmt, dwords)
        assert not np.any(dec) and not fl.any()
        assert np.array_equal(dl.astype(np.int64), big)

    def test_unpack_total_on_arbitrary_patterns(self, rng):
        fmt = PackFormat(32, 8, E8MY)
        words = rng.integers(0, 2**32, 10000, dtype=np.uint64).astype(np.uint32)
        values, deltas, flags = unpack_words(fmt, words)
        assert np.all(deltas[~flags] == (words[~flags] >> np.uint32(1)))
        assert np.all(deltas[flags] < 2**fmt.d)
        assert not np.any(values[~flags])
