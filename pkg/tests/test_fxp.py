"""Fixed-point kernel tests: scalar reference semantics, vectorized
equivalence, saturation and overflow contracts."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from elmsentry.fxp import (ACC_MAX, ACC_MIN, Accumulator, AccumulatorOverflow,
                           DegenerateDenominator, FxpFormat, FxpValue,
                           OpCounter, dequantize, fixed_divide, fixed_dot,
                           fixed_matvec, fixed_scale, mac, quantize, slice_acc)

FMT = FxpFormat()


class TestFormat:
    def test_default_is_q3_12_with_mid_slice(self):
        assert FMT.word_bits == 16
        assert FMT.frac_bits == 12
        assert FMT.slice_select == 2
        assert FMT.shift == 12
        assert FMT.scale == 4096

    @pytest.mark.parametrize("s, shift", [(0, 4), (1, 8), (2, 12), (3, 16)])
    def test_slice_select_offsets(self, s, shift):
        assert FxpFormat(slice_select=s).shift == shift

    @pytest.mark.parametrize("bad", [{"word_bits": 10}, {"word_bits": 20},
                                     {"slice_select": 4}, {"slice_select": -1},
                                     {"frac_bits": 16}, {"frac_bits": -1}])
    def test_invalid_formats_rejected(self, bad):
        with pytest.raises(ValueError):
            FxpFormat(**bad)

    def test_word_range(self):
        assert FMT.raw_min == -32768
        assert FMT.raw_max == 32767
        fmt8 = FxpFormat(word_bits=8, frac_bits=4)
        assert (fmt8.raw_min, fmt8.raw_max) == (-128, 127)


class TestMac:
    def test_zero_annihilator(self):
        acc = mac(Accumulator(0), FxpValue(0), FxpValue(12345))
        assert acc.raw == 0

    def test_exact_product(self):
        acc = mac(Accumulator(0), FxpValue(4096), FxpValue(4096))
        assert acc.raw == 16777216

    def test_overflow_detected(self):
        with pytest.raises(AccumulatorOverflow):
            mac(Accumulator(ACC_MAX), FxpValue(4096), FxpValue(4096))

    def test_counter_increments(self):
        counter = OpCounter()
        mac(Accumulator(0), FxpValue(1), FxpValue(1), counter)
        assert counter.macs == 1

    def test_mixed_formats_rejected(self):
        with pytest.raises(ValueError):
            mac(Accumulator(0), FxpValue(1),
                FxpValue(1, FxpFormat(word_bits=8, frac_bits=4)))


class TestSlice:
    def test_recovers_product_scale(self):
        assert slice_acc(Accumulator(16777216)).raw == 4096

    def test_zero(self):
        assert slice_acc(Accumulator(0)).raw == 0

    def test_saturates_high_with_sticky_flag(self):
        counter = OpCounter()
        out = slice_acc(Accumulator(1 << 30), counter)
        assert out.raw == 32767
        assert counter.saturated

    def test_saturates_low(self):
        counter = OpCounter()
        out = slice_acc(Accumulator(-(1 << 30)), counter)
        assert out.raw == -32768
        assert counter.saturations == 1

    def test_truncates_low_bits(self):
        # arithmetic shift keeps the floor for negative values
        assert slice_acc(Accumulator(-1)).raw == -1
        assert slice_acc(Accumulator(4095)).raw == 0

    @given(st.integers(ACC_MIN, ACC_MAX), st.integers(ACC_MIN, ACC_MAX))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert slice_acc(Accumulator(lo)).raw <= slice_acc(Accumulator(hi)).raw


class TestQuantize:
    def test_zero(self):
        assert quantize(0.0).raw == 0

    def test_one(self):
        assert quantize(1.0).raw == 4096

    def test_saturates(self):
        counter = OpCounter()
        assert quantize(1e6, counter=counter).raw == 32767
        assert counter.saturated
        assert quantize(-1e6).raw == -32768

    def test_half_even_rounding(self):
        assert quantize(0.5 / 4096).raw == 0
        assert quantize(1.5 / 4096).raw == 2

    @given(st.floats(-7.9, 7.9))
    def test_roundtrip_error_bound(self, x):
        assert abs(dequantize(quantize(x)) - x) <= 2.0 ** (-13)

    @given(st.floats(-2.8, 2.8), st.floats(-2.8, 2.8))
    def test_product_through_datapath(self, a, b):
        va, vb = quantize(a), quantize(b)
        got = dequantize(slice_acc(mac(Accumulator(0), va, vb)))
        assert abs(got - dequantize(va) * dequantize(vb)) < 2.0 ** (-12)


class TestVectorizedKernels:
    def scalar_matvec(self, m_raw, v_raw, fmt, bias_raw=None):
        """Reference: explicit mac/slice chain per row, ascending index."""
        out = []
        for j, row in enumerate(np.asarray(m_raw)):
            acc = Accumulator(0, fmt)
            if bias_raw is not None:
                acc = Accumulator(int(bias_raw[j]) << fmt.shift, fmt)
            for a, b in zip(row, np.asarray(v_raw)):
                acc = mac(acc, FxpValue(int(a), fmt), FxpValue(int(b), fmt))
            out.append(slice_acc(acc).raw)
        return np.array(out)

    def test_matches_scalar_chain(self, rng):
        for _ in range(20):
            m = rng.integers(-4096, 4096, size=(6, 5))
            v = rng.integers(-4096, 4096, size=5)
            b = rng.integers(-4096, 4096, size=6)
            got = fixed_matvec(m, v, FMT, bias_raw=b)
            np.testing.assert_array_equal(got, self.scalar_matvec(m, v, FMT, b))

    def test_partial_sum_overflow_detected(self):
        # large positive then negative product: final sum fits but the
        # intermediate partial sum does not
        m = np.array([[32767, 32767, 32767, -32767, -32767, -32767]])
        v = np.array([32767] * 6)
        with pytest.raises(AccumulatorOverflow):
            fixed_matvec(m, v, FMT)

    def test_mac_count(self):
        counter = OpCounter()
        fixed_matvec(np.ones((3, 4), dtype=int), np.ones(4, dtype=int), FMT,
                     counter=counter)
        assert counter.macs == 12

    def test_fixed_dot_is_row_matvec(self, rng):
        a = rng.integers(-4096, 4096, size=8)
        b = rng.integers(-4096, 4096, size=8)
        assert fixed_dot(a, b, FMT) == fixed_matvec(a[np.newaxis, :], b, FMT)[0]

    def test_fixed_scale_elementwise(self):
        out = fixed_scale(np.array([4096, -4096]), np.array([2048, 2048]), FMT)
        np.testing.assert_array_equal(out, [2048, -2048])

    def test_fixed_scale_saturates(self):
        counter = OpCounter()
        out = fixed_scale(np.array([32767]), np.array([32767]), FMT,
                          counter=counter)
        assert out[0] == 32767
        assert counter.saturated


class TestFixedDivide:
    def test_exact_quotient(self):
        # 2.0 / 0.5 = 4.0 in Q3.12
        out = fixed_divide(np.array([8192]), 2048, FMT)
        assert out[0] == 16384

    def test_truncates_toward_zero(self):
        # -1/3 scaled: truncation keeps the magnitude floor on both signs
        pos = fixed_divide(np.array([1]), 3, FMT)[0]
        neg = fixed_divide(np.array([-1]), 3, FMT)[0]
        assert pos == (1 << 12) // 3
        assert neg == -pos

    def test_zero_or_negative_denominator_rejected(self):
        for denom in (0, -5):
            with pytest.raises(DegenerateDenominator):
                fixed_divide(np.array([1]), denom, FMT)

    def test_counts_one_divide(self):
        counter = OpCounter()
        fixed_divide(np.array([1, 2, 3]), 7, FMT, counter=counter)
        assert counter.divides == 1


class TestOpCounter:
    def test_merge_is_additive(self):
        a = OpCounter(macs=3, activations=1, divides=2, theta_updates=1,
                      saturations=4)
        b = OpCounter(macs=5, divides=1)
        a.merge(b)
        assert (a.macs, a.activations, a.divides, a.theta_updates,
                a.saturations) == (8, 1, 3, 1, 4)

    def test_copy_is_independent(self):
        a = OpCounter(macs=1)
        c = a.copy()
        c.macs += 1
        assert a.macs == 1
