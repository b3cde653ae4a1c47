import numpy as np
import pytest
from numpy.testing import assert_allclose

import oodseg
from oodseg import SchemaError, ValidationError

from _oracles import entropy_exact
from conftest import random_prob_map


def _pixel(*probs):
    return np.asarray(probs, dtype=np.float32).reshape(1, 1, -1)


class TestEntropy:
    def test_one_hot_is_zero(self):
        assert oodseg.entropy_map(_pixel(1.0, 0.0, 0.0))[0, 0] == 0.0

    def test_uniform_is_one(self):
        for c in (2, 3, 4, 11, 19):
            p = np.full((1, 1, c), 1.0 / c, dtype=np.float64)
            assert_allclose(oodseg.entropy_map(p)[0, 0], 1.0, atol=1e-7)

    def test_skewed_four_class_pixel_matches_oracle(self):
        p = _pixel(0.7, 0.1, 0.1, 0.1)
        expected = entropy_exact([0.7, 0.1, 0.1, 0.1])
        assert_allclose(oodseg.entropy_map(p)[0, 0], expected, atol=1e-5)

    def test_random_pixels_match_oracle(self, rng):
        p = random_prob_map(rng, 5, 10, 6)
        got = oodseg.entropy_map(p)
        for r in range(5):
            for c in range(10):
                expected = entropy_exact([float(v) for v in p[r, c]])
                assert_allclose(got[r, c], expected, atol=1e-6)

    def test_float64_input_matches_oracle_tightly(self, rng):
        raw = rng.gamma(1.0, size=(3, 4, 5))
        p = raw / raw.sum(axis=2, keepdims=True)
        got = oodseg.entropy_map(p)
        for r in range(3):
            for c in range(4):
                expected = entropy_exact([float(v) for v in p[r, c]])
                assert_allclose(got[r, c], expected, atol=1e-7)

    def test_mixing_toward_uniform_increases_entropy(self, rng):
        # H((1-lam) p + lam u) is non-decreasing in lam by concavity.
        p = random_prob_map(rng, 25, 40, 8, dtype=np.float64)
        u = np.full_like(p, 1.0 / 8.0)
        lams = np.linspace(0.0, 1.0, 11)
        prev = oodseg.entropy_map(p)
        for lam in lams[1:]:
            cur = oodseg.entropy_map((1.0 - lam) * p + lam * u)
            # 1e-6 slack absorbs the float32 output rounding
            assert np.all(cur >= prev - 1e-6)
            prev = cur


class TestMargin:
    def test_documented_example(self):
        # top two probabilities 0.6 and 0.3 -> 1 - 0.3 = 0.7
        assert_allclose(oodseg.margin_map(_pixel(0.6, 0.3, 0.1))[0, 0], 0.7, atol=1e-7)

    def test_one_hot_is_zero(self):
        assert oodseg.margin_map(_pixel(0.0, 1.0, 0.0))[0, 0] == 0.0

    def test_tied_top_pair_is_one(self):
        assert_allclose(oodseg.margin_map(_pixel(0.4, 0.4, 0.2))[0, 0], 1.0, atol=1e-7)

    def test_channel_order_is_irrelevant(self, rng):
        p = random_prob_map(rng, 6, 6, 5)
        perm = rng.permutation(5)
        np.testing.assert_array_equal(oodseg.margin_map(p), oodseg.margin_map(p[:, :, perm]))

    def test_matches_sort_based_recompute(self, rng):
        p = random_prob_map(rng, 8, 9, 7)
        top = np.sort(p.astype(np.float64), axis=2)
        expected = 1.0 - (top[:, :, -1] - top[:, :, -2])
        assert_allclose(oodseg.margin_map(p), expected, atol=1e-6)


class TestMaxprob:
    def test_uniform_four_class(self):
        p = np.full((2, 3, 4), 0.25, dtype=np.float32)
        assert_allclose(oodseg.maxprob_map(p), 0.75, atol=1e-7)

    def test_one_hot_is_zero(self):
        assert oodseg.maxprob_map(_pixel(0.0, 0.0, 1.0))[0, 0] == 0.0

    def test_matches_recompute(self, rng):
        p = random_prob_map(rng, 8, 9, 7)
        expected = 1.0 - p.astype(np.float64).max(axis=2)
        assert_allclose(oodseg.maxprob_map(p), expected, atol=1e-6)


class TestArgmax:
    def test_matches_python_scan(self, rng):
        p = random_prob_map(rng, 16, 16, 7)
        got = oodseg.argmax_map(p)
        assert got.dtype == np.int32
        for r in range(16):
            for c in range(16):
                best, best_p = 0, p[r, c, 0]
                for k in range(1, 7):
                    if p[r, c, k] > best_p:
                        best, best_p = k, p[r, c, k]
                assert got[r, c] == best

    def test_tie_break_prefers_smallest_index(self):
        p = _pixel(0.1, 0.45, 0.45)
        assert oodseg.argmax_map(p)[0, 0] == 1

    def test_invariant_under_monotone_rescaling(self, rng):
        # Sharpening/flattening the softmax must not change the prediction
        # (up to exact ties, which the random draw avoids almost surely).
        p = random_prob_map(rng, 12, 12, 6, dtype=np.float64)
        base = oodseg.argmax_map(p)
        for power in (0.5, 2.0):
            q = p**power
            q /= q.sum(axis=2, keepdims=True)
            np.testing.assert_array_equal(oodseg.argmax_map(q), base)


class TestCommonBehavior:
    @pytest.mark.parametrize("fn", [oodseg.entropy_map, oodseg.margin_map, oodseg.maxprob_map])
    def test_output_contract(self, rng, fn):
        p = random_prob_map(rng, 14, 9, 5)
        out = fn(p)
        assert out.shape == (14, 9)
        assert out.dtype == np.float32
        assert np.all((out >= 0.0) & (out <= 1.0))

    @pytest.mark.parametrize(
        "fn", [oodseg.entropy_map, oodseg.margin_map, oodseg.maxprob_map, oodseg.argmax_map]
    )
    def test_rank_and_class_checks(self, fn):
        with pytest.raises(SchemaError):
            fn(np.zeros((4, 4), dtype=np.float32))
        with pytest.raises(ValidationError):
            fn(np.ones((4, 4, 1), dtype=np.float32))
        with pytest.raises(SchemaError):
            fn(np.zeros((4, 4, 3), dtype=np.int32))

    def test_scores_agree_on_binary_maps(self, rng):
        # With C = 2 margin and maxprob carry the same information:
        # margin = 1 - (p1 - p2) = 1 - (2 p1 - 1) = 2 (1 - p1) = 2 maxprob.
        p = random_prob_map(rng, 10, 10, 2, dtype=np.float64)
        assert_allclose(oodseg.margin_map(p), 2.0 * oodseg.maxprob_map(p), atol=1e-6)
