from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amsquant.fpformat import FORMATS
from amsquant.kernels import dequantize, restore_half
from amsquant.packing import layout_of, padded_cols
from amsquant.quantizer import (
    CodeMatrix,
    ams_share,
    channel_scale,
    force_shared_bit,
    group_errors,
    quantize_tensor,
    rtn_quantize,
)
from amsquant.schemes import SCHEMES
from conftest import ALL_SCHEMES, SHARED_SCHEMES
from oracles import argmin_codes, group_sq_errors

E2M2, E2M3 = FORMATS["e2m2"], FORMATS["e2m3"]
SHARE_PAIRS = [(SCHEMES[n].base_format, SCHEMES[n].k) for n in SHARED_SCHEMES]


def candidate_values(cm: CodeMatrix, bit: int, scales) -> np.ndarray:
    fmt = cm.fmt
    table = np.array([fmt.code_values[c] for c in range(fmt.n_codes)])
    return table[(cm.codes & 0xFE) | bit] * scales.astype(np.float64)[:, None]


class TestChannelScale:
    def test_fifteen_over_e2m3(self):
        assert channel_scale([15.0, -3.0, 0.5], E2M3) == 2.0

    def test_all_zero(self):
        assert channel_scale(np.zeros(5), E2M3) == 1.0

    def test_e2m2_max(self):
        assert channel_scale([-7.0, 1.0], E2M2) == 1.0

    def test_rounded_to_half(self):
        s = channel_scale([1.0], E2M3)
        assert s == float(np.float16(1 / 7.5))

    @pytest.mark.parametrize("bad", [np.inf, -np.inf, np.nan])
    def test_non_finite(self, bad):
        with pytest.raises(ValueError, match="non-finite weight"):
            channel_scale([1.0, bad], E2M3)

    def test_empty(self):
        with pytest.raises(ValueError):
            channel_scale([], E2M3)


class TestRtn:
    def test_zero_row(self):
        cm, scales = rtn_quantize(np.zeros((1, 4)), E2M3)
        assert not cm.codes.any()
        assert scales.tolist() == [1.0]

    def test_on_grid_row(self):
        cm, scales = rtn_quantize(np.array([[7.5, -3.75]]), E2M3)
        assert scales.tolist() == [1.0]
        assert cm.values().tolist() == [[7.5, -3.75]]

    def test_matches_oracle(self, rng):
        w = rng.standard_normal((8, 8)).astype(np.float32)
        cm, scales = rtn_quantize(w, E2M3)
        q = w.astype(np.float64) / scales.astype(np.float64)[:, None]
        expected = argmin_codes(q.ravel(), E2M3).reshape(8, 8)
        np.testing.assert_array_equal(cm.codes, expected)

    @pytest.mark.parametrize("fmt", list(FORMATS.values()), ids=str)
    def test_max_element_hits_format_max(self, fmt, rng):
        w = rng.standard_normal((32, 40)) * rng.uniform(1e-3, 1e3, size=(32, 1))
        cm, _ = rtn_quantize(w, fmt)
        j = np.argmax(np.abs(w), axis=1)
        assert np.all(np.abs(cm.values()[np.arange(32), j]) == fmt.max_value)

    def test_non_finite(self):
        with pytest.raises(ValueError, match="non-finite weight"):
            rtn_quantize(np.array([[1.0, np.nan]]), E2M3)

    def test_scales_positive_and_finite_at_extremes(self):
        w = np.array([[1e-12, 0.0], [1e9, 1.0], [0.0, 0.0]])
        _, scales = rtn_quantize(w, E2M3)
        assert np.all(np.isfinite(scales)) and np.all(scales > 0)


class TestAmsShare:
    def test_all_lsb_zero_unchanged(self):
        w = np.array([[1.0, 1.25, 7.0]])
        cm = CodeMatrix(argmin_codes(w[0].astype(np.float32), E2M3)[None, :], E2M3, 3)
        assert not np.any(cm.codes & 1)
        out = ams_share(cm, w, np.array([1.0], dtype=np.float16), 3)
        np.testing.assert_array_equal(out.codes, cm.codes)
        assert out.shared_bits.tolist() == [[0]]

    def test_all_lsb_one_on_grid_unchanged(self):
        w = np.array([[1.125, 1.375, 7.5]])
        cm, s = rtn_quantize(w, E2M3)
        assert np.all(cm.codes & 1)
        out = ams_share(cm, w, s, 3)
        np.testing.assert_array_equal(out.codes, cm.codes)
        assert out.shared_bits.tolist() == [[1]]

    def test_mixed_group_by_hand(self):
        # b=0: 1.125 -> 1.0, error 1/64; b=1: 1.0 -> 1.125 and 1.25 -> 1.375, error 2/64
        w = np.array([[1.125, 1.0, 1.25]])
        cm = CodeMatrix(argmin_codes(w[0].astype(np.float32), E2M3)[None, :], E2M3, 3)
        scales = np.array([1.0], dtype=np.float16)
        e0, e1 = group_errors(cm, w, scales, 3)
        assert (e0[0, 0], e1[0, 0]) == (1 / 64, 2 / 64)
        out = ams_share(cm, w, scales, 3)
        assert out.shared_bits.tolist() == [[0]]
        assert out.values().tolist() == [[1.0, 1.0, 1.25]]

    def test_tie_prefers_zero(self):
        # 1.0625 is equidistant from 1.0 (LSB 0) and 1.125 (LSB 1)
        w = np.array([[1.0625]])
        cm = CodeMatrix(np.array([[0b001001]], dtype=np.uint8), E2M3, 1)
        out = ams_share(cm, w, np.array([1.0], dtype=np.float16), 1)
        assert out.shared_bits.tolist() == [[0]]

    def test_group_size_mismatch(self):
        cm, s = rtn_quantize(np.ones((2, 5)), E2M3)
        with pytest.raises(ValueError, match="does not divide"):
            ams_share(cm, np.ones((2, 5)), s, 3)

    def test_rejects_already_shared(self):
        w = np.ones((1, 3))
        cm, s = rtn_quantize(w, E2M3)
        with pytest.raises(ValueError):
            ams_share(ams_share(cm, w, s, 3), w, s, 3)

    @pytest.mark.parametrize("fmt,k", SHARE_PAIRS, ids=str)
    def test_group_optimality(self, fmt, k, rng):
        w = rng.standard_normal((16, 48))
        cm, s = rtn_quantize(w, fmt)
        out = ams_share(cm, w, s, k)
        err0 = group_sq_errors(candidate_values(cm, 0, s), w, k)
        err1 = group_sq_errors(candidate_values(cm, 1, s), w, k)
        got = group_sq_errors(out.values() * s.astype(np.float64)[:, None], w, k)
        np.testing.assert_array_equal(got, np.minimum(err0, err1))
        np.testing.assert_array_equal(out.shared_bits, (err1 < err0).astype(np.uint8))

    @pytest.mark.parametrize("fmt,k", SHARE_PAIRS, ids=str)
    def test_lsb_only_perturbation(self, fmt, k, rng):
        w = rng.standard_normal((16, 48))
        cm, s = rtn_quantize(w, fmt)
        out = ams_share(cm, w, s, k)
        diff = out.codes ^ cm.codes
        # -0 produced by clearing the LSB is canonicalised to +0
        zeroed = (out.codes == 0) & (cm.codes == (fmt.sign_mask | 1))
        assert np.all((diff <= 1) | zeroed)
        assert np.all(out.values() == np.where(zeroed, 0.0, out.values()))
        lsb = (out.codes & 1).reshape(16, -1, k)
        assert np.all(lsb == out.shared_bits[:, :, None])

    @pytest.mark.parametrize("fmt,k", SHARE_PAIRS, ids=str)
    def test_beats_forced_alternatives(self, fmt, k, rng):
        w = rng.standard_normal((16, 48))
        cm, s = rtn_quantize(w, fmt)
        sse = {}
        for label, out in [
            ("adaptive", ams_share(cm, w, s, k)),
            ("zero", force_shared_bit(cm, k, 0)),
            ("one", force_shared_bit(cm, k, 1)),
        ]:
            sse[label] = float(np.sum((out.values() * s.astype(np.float64)[:, None] - w) ** 2))
        assert sse["adaptive"] <= sse["zero"] and sse["adaptive"] <= sse["one"]

    @settings(max_examples=40, deadline=None)
    @given(
        pair=st.sampled_from(SHARE_PAIRS),
        exponent=st.integers(-8, 8),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_power_of_two_scale_invariance(self, pair, exponent, seed):
        fmt, k = pair
        w = np.random.default_rng(seed).standard_normal((4, 12))
        factor = 2.0**exponent
        cm, s = rtn_quantize(w, fmt)
        cm2, s2 = rtn_quantize(w * factor, fmt)
        np.testing.assert_array_equal(cm.codes, cm2.codes)
        np.testing.assert_array_equal(s2.astype(np.float64), s.astype(np.float64) * factor)
        a = ams_share(cm, w, s, k)
        b = ams_share(cm2, w * factor, s2, k)
        np.testing.assert_array_equal(a.codes, b.codes)

    def test_tail_group_uses_actual_members_only(self):
        # cols=4, k=3: the second group holds column 3 and two padding slots.
        # Counting the padding zeros would favour bit 0 (1.125 -> 1.0).
        w = np.array([[7.5, 7.5, 7.5, 1.125]])
        qt = quantize_tensor(w, "fp5.33-e2m3")
        assert qt.padded_cols == 6
        assert decoded(qt.codes()[0, 3]) == 1.125
        np.testing.assert_array_equal(dequantize(qt), w.astype(np.float32))
        assert not restore_half(qt)[:, 4:].any()


def decoded(code) -> float:
    return float(E2M3.code_values[code])


class TestQuantizeTensor:
    def test_zero_matrix(self):
        qt = quantize_tensor(np.zeros((4, 3)), "fp5.33-e2m3")
        assert not qt.payload.any()
        assert qt.scales.tolist() == [1.0] * 4

    def test_fp425_row_of_64(self, rng):
        qt = quantize_tensor(rng.standard_normal((1, 64)), "fp4.25-e2m2")
        assert qt.payload_nbytes == 34
        assert qt.payload.shape == (1, 17)

    @pytest.mark.parametrize("name", ALL_SCHEMES)
    @pytest.mark.parametrize("cols", [1, 5, 64, 77])
    def test_roundtrip_matches_unpacked_pipeline(self, name, cols, rng):
        scheme = SCHEMES[name]
        w = rng.standard_normal((6, cols)).astype(np.float32)
        qt = quantize_tensor(w, scheme)
        width = padded_cols(cols, layout_of(scheme))
        padded = np.zeros((6, width))
        padded[:, :cols] = w
        cm, s = rtn_quantize(padded, scheme.base_format)
        cm = CodeMatrix(cm.codes, cm.fmt, cols)
        if scheme.k > 1:
            cm = ams_share(cm, padded, s, scheme.k)
        np.testing.assert_array_equal(qt.scales, s)
        expected = cm.values()[:, :cols] * s.astype(np.float64)[:, None]
        np.testing.assert_array_equal(dequantize(qt).astype(np.float64), expected)

    def test_thread_count_does_not_change_result(self, rng):
        w = rng.standard_normal((600, 40))
        a = quantize_tensor(w, "fp4.33-e2m2", n_jobs=1)
        b = quantize_tensor(w, "fp4.33-e2m2", n_jobs=4)
        assert a.identical(b)

    def test_float16_input_widened(self, rng):
        w = rng.standard_normal((3, 16)).astype(np.float16)
        assert quantize_tensor(w, "fp6-e2m3").identical(quantize_tensor(w.astype(np.float32), "fp6-e2m3"))

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError, match="non-finite weight"):
            quantize_tensor(np.array([[np.inf]]), "fp6-e2m3")
        with pytest.raises(ValueError):
            quantize_tensor(np.zeros(5), "fp6-e2m3")
        with pytest.raises(ValueError):
            quantize_tensor(np.zeros((2, 2)), "fp7-e3m3")
