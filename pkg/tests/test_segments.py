import numpy as np
import pytest
from numpy.testing import assert_allclose

import oodseg
from oodseg import DomainError, SchemaError

from _oracles import flood_fill_components, naive_segment_features
from conftest import random_prob_map


def _pixel_lists(segments):
    return [[(int(r), int(c)) for r, c in seg.pixels] for seg in segments]


class TestThresholdMask:
    def test_geq_semantics(self):
        score = np.array([[0.1, 0.5], [0.7, 0.5]], dtype=np.float32)
        mask = oodseg.threshold_mask(score, 0.5)
        np.testing.assert_array_equal(mask, [[False, True], [True, True]])

    def test_extreme_thresholds(self):
        score = np.array([[0.0, 1.0]], dtype=np.float32)
        assert oodseg.threshold_mask(score, 0.0).all()
        np.testing.assert_array_equal(oodseg.threshold_mask(score, 1.0), [[False, True]])

    @pytest.mark.parametrize("t", [-0.1, 1.1, np.nan])
    def test_threshold_domain(self, t):
        with pytest.raises(DomainError):
            oodseg.threshold_mask(np.zeros((2, 2), dtype=np.float32), t)

    def test_rank_check(self):
        with pytest.raises(SchemaError):
            oodseg.threshold_mask(np.zeros((2, 2, 2), dtype=np.float32), 0.5)


class TestConnectedComponents:
    def test_diagonal_pair(self):
        mask = np.array([[1, 0], [0, 1]], dtype=bool)
        assert len(oodseg.connected_components(mask, connectivity=4)) == 2
        assert len(oodseg.connected_components(mask, connectivity=8)) == 1

    def test_empty_mask(self):
        assert oodseg.connected_components(np.zeros((3, 3), dtype=bool)) == []

    def test_full_mask(self):
        segs = oodseg.connected_components(np.ones((4, 6), dtype=bool), connectivity=4)
        assert len(segs) == 1
        assert segs[0].size == 24
        assert segs[0].bbox == (0, 0, 3, 5)

    def test_ids_and_pixels_in_raster_order(self):
        mask = np.array(
            [
                [0, 1, 0, 1],
                [0, 1, 0, 0],
                [0, 0, 0, 0],
                [1, 0, 0, 1],
            ],
            dtype=bool,
        )
        segs = oodseg.connected_components(mask, connectivity=4)
        assert [s.id for s in segs] == [0, 1, 2, 3]
        # components keyed by their first pixel in raster order
        assert _pixel_lists(segs) == [
            [(0, 1), (1, 1)],
            [(0, 3)],
            [(3, 0)],
            [(3, 3)],
        ]

    def test_u_shape_merges_across_rows(self):
        mask = np.array(
            [
                [1, 0, 1],
                [1, 0, 1],
                [1, 1, 1],
            ],
            dtype=bool,
        )
        segs = oodseg.connected_components(mask, connectivity=4)
        assert len(segs) == 1
        assert segs[0].size == 7

    def test_single_row_and_column(self):
        row = np.array([[1, 1, 0, 1]], dtype=bool)
        segs = oodseg.connected_components(row, connectivity=4)
        assert _pixel_lists(segs) == [[(0, 0), (0, 1)], [(0, 3)]]
        col = row.T.copy()
        segs = oodseg.connected_components(col, connectivity=4)
        assert _pixel_lists(segs) == [[(0, 0), (1, 0)], [(3, 0)]]

    def test_connectivity_validation(self):
        with pytest.raises(DomainError):
            oodseg.connected_components(np.ones((2, 2), dtype=bool), connectivity=6)

    @pytest.mark.parametrize("connectivity", [4, 8])
    @pytest.mark.parametrize("density", [0.2, 0.45, 0.7])
    def test_matches_flood_fill(self, connectivity, density):
        rng = np.random.default_rng(hash((connectivity, density)) % 2**32)
        for _ in range(35):
            mask = rng.random((32, 32)) < density
            got = _pixel_lists(oodseg.connected_components(mask, connectivity))
            expected = flood_fill_components(mask, connectivity)
            assert got == expected

    def test_matches_flood_fill_on_thin_grids(self):
        rng = np.random.default_rng(99)
        for shape in [(1, 64), (64, 1), (2, 33), (33, 2)]:
            for _ in range(10):
                mask = rng.random(shape) < 0.5
                for connectivity in (4, 8):
                    got = _pixel_lists(oodseg.connected_components(mask, connectivity))
                    assert got == flood_fill_components(mask, connectivity)


class TestComputeFeatures:
    @staticmethod
    def _maps(rng, h, w, c=5):
        prob = random_prob_map(rng, h, w, c)
        return (
            oodseg.entropy_map(prob),
            oodseg.margin_map(prob),
            oodseg.maxprob_map(prob),
            oodseg.argmax_map(prob),
            c,
        )

    def test_single_pixel_segment(self):
        h, w = 4, 5
        entropy = np.zeros((h, w), dtype=np.float32)
        entropy[1, 2] = 0.625
        margin = np.full((h, w), 0.25, dtype=np.float32)
        maxprob = np.full((h, w), 0.125, dtype=np.float32)
        pred = np.zeros((h, w), dtype=np.int32)
        pred[0, 2] = 1
        pred[2, 2] = 2
        seg = oodseg.SegmentRecord(id=0, pixels=np.array([[1, 2]]), bbox=(1, 2, 1, 2))
        f = oodseg.compute_features(seg, entropy, margin, maxprob, pred, num_classes=4)
        assert f.size == 1.0
        assert f.interior_size == 0.0
        assert f.boundary_size == 1.0
        assert f.rel_interior == 0.0
        assert f.mean_entropy == 0.625
        assert f.mean_entropy_interior == 0.0  # empty interior mean is defined as 0
        assert f.mean_entropy_boundary == 0.625
        assert f.var_entropy == 0.0
        assert f.mean_margin == 0.25
        assert f.mean_maxprob_unc == 0.125
        assert f.bbox_height_rel == 1 / h
        assert f.bbox_width_rel == 1 / w
        assert f.centroid_row_rel == 1.5 / h
        assert f.centroid_col_rel == 2.5 / w
        # ring holds classes {0, 1, 2} out of 4
        assert f.n_adjacent_classes_rel == 3 / 4

    def test_three_by_three_block(self):
        h, w = 8, 8
        entropy = np.full((h, w), 0.5, dtype=np.float32)
        margin = np.zeros((h, w), dtype=np.float32)
        maxprob = np.zeros((h, w), dtype=np.float32)
        pred = np.full((h, w), 3, dtype=np.int32)
        pixels = np.array([(r, c) for r in (2, 3, 4) for c in (5, 6, 7)])
        seg = oodseg.SegmentRecord(id=0, pixels=pixels, bbox=(2, 5, 4, 7))
        f = oodseg.compute_features(seg, entropy, margin, maxprob, pred, num_classes=6)
        assert f.size == 9.0
        # only the center pixel has all 8 neighbors inside the segment; the
        # right column touches the image border which counts as non-interior
        assert f.interior_size == 1.0
        assert f.boundary_size == 8.0
        assert f.rel_interior == 1 / 9
        assert f.mean_entropy == f.mean_entropy_interior == f.mean_entropy_boundary == 0.5
        assert f.var_entropy == 0.0
        assert f.bbox_height_rel == 3 / 8
        assert f.bbox_width_rel == 3 / 8
        assert f.centroid_row_rel == 3.5 / 8
        assert f.centroid_col_rel == 6.5 / 8
        assert f.n_adjacent_classes_rel == 1 / 6

    def test_full_image_segment_has_no_ring(self):
        h, w = 3, 3
        maps = self._maps(np.random.default_rng(5), h, w)
        pixels = np.array([(r, c) for r in range(h) for c in range(w)])
        seg = oodseg.SegmentRecord(id=0, pixels=pixels, bbox=(0, 0, h - 1, w - 1))
        f = oodseg.compute_features(seg, *maps)
        assert f.interior_size == 1.0  # image border makes the rest boundary
        assert f.n_adjacent_classes_rel == 0.0

    def test_matches_naive_oracle_on_random_segments(self, rng):
        entropy, margin, maxprob, pred, c = self._maps(rng, 24, 30)
        for trial in range(30):
            mask = rng.random((24, 30)) < 0.35
            if not mask.any():
                continue
            segs = oodseg.connected_components(mask, connectivity=8 if trial % 2 else 4)
            for seg in segs[:5]:
                got = oodseg.compute_features(seg, entropy, margin, maxprob, pred, c)
                expected = naive_segment_features(seg.pixels, entropy, margin, maxprob, pred, c)
                for name in oodseg.FEATURE_NAMES:
                    assert_allclose(
                        getattr(got, name), expected[name], rtol=1e-12, atol=1e-12, err_msg=name
                    )

    def test_to_vector_order(self, rng):
        maps = self._maps(rng, 6, 6)
        seg = oodseg.connected_components(np.ones((6, 6), dtype=bool))[0]
        f = oodseg.compute_features(seg, *maps)
        vec = f.to_vector()
        assert vec.shape == (len(oodseg.FEATURE_NAMES),)
        for i, name in enumerate(oodseg.FEATURE_NAMES):
            assert vec[i] == getattr(f, name)


class TestExtractSegments:
    def test_uniform_map_is_one_full_segment(self):
        p = np.full((6, 7, 4), 0.25, dtype=np.float32)
        segs = oodseg.extract_segments(p, t=0.5)
        assert len(segs) == 1
        assert segs[0].size == 42
        assert segs[0].features.mean_entropy == pytest.approx(1.0)

    def test_one_hot_map_has_no_segments_above_zero(self):
        p = np.zeros((5, 5, 3), dtype=np.float32)
        p[:, :, 1] = 1.0
        assert oodseg.extract_segments(p, t=0.25) == []
        # at t = 0 the >= comparison captures every pixel
        segs = oodseg.extract_segments(p, t=0.0)
        assert len(segs) == 1 and segs[0].size == 25

    def test_min_size_keeps_prefilter_ids(self, rng):
        p = random_prob_map(rng, 40, 40, 6)
        entropy = oodseg.entropy_map(p)
        t = float(np.quantile(entropy, 0.7))
        all_segs = oodseg.extract_segments(p, t=t, min_size=1)
        big_segs = oodseg.extract_segments(p, t=t, min_size=4)
        assert 0 < len(big_segs) < len(all_segs)
        by_id = {s.id: s for s in all_segs}
        for seg in big_segs:
            assert seg.size >= 4
            np.testing.assert_array_equal(seg.pixels, by_id[seg.id].pixels)

    def test_min_size_validation(self):
        p = np.full((2, 2, 2), 0.5, dtype=np.float32)
        with pytest.raises(DomainError):
            oodseg.extract_segments(p, t=0.5, min_size=0)

    def test_segments_partition_the_mask(self, rng):
        p = random_prob_map(rng, 32, 32, 5)
        t = 0.9
        segs = oodseg.extract_segments(p, t=t)
        mask = oodseg.threshold_mask(oodseg.entropy_map(p), t)
        covered = np.zeros_like(mask, dtype=int)
        for seg in segs:
            covered[seg.pixels[:, 0], seg.pixels[:, 1]] += 1
        assert covered[mask].min() == covered[mask].max() == 1
        assert covered[~mask].sum() == 0

    def test_raising_threshold_nests_segments(self, rng):
        p = random_prob_map(rng, 32, 32, 5)
        lo = oodseg.extract_segments(p, t=0.85)
        hi = oodseg.extract_segments(p, t=0.95)
        label = np.full((32, 32), -1, dtype=int)
        for seg in lo:
            label[seg.pixels[:, 0], seg.pixels[:, 1]] = seg.id
        for seg in hi:
            owners = label[seg.pixels[:, 0], seg.pixels[:, 1]]
            assert owners.min() >= 0  # inside some low-threshold segment
            assert owners.min() == owners.max()  # and exactly one of them

    def test_deterministic(self, rng):
        p = random_prob_map(rng, 24, 24, 6)
        a = oodseg.extract_segments(p, t=0.9, min_size=2)
        b = oodseg.extract_segments(p, t=0.9, min_size=2)
        assert len(a) == len(b)
        for sa, sb in zip(a, b):
            assert sa.id == sb.id and sa.bbox == sb.bbox
            np.testing.assert_array_equal(sa.pixels, sb.pixels)
            assert sa.features == sb.features

    def test_synthetic_scene_end_to_end_matches_flood_fill(self):
        cfg = oodseg.SceneConfig(
            height=48, width=48, num_classes=6, n_regions=12, n_ood_blobs=2,
            blob_radius_range=(4.0, 7.0), seed=7,
        )
        prob, _, _ = oodseg.generate_scene(cfg)
        segs = oodseg.extract_segments(prob, t=0.4, min_size=10)
        mask = oodseg.threshold_mask(oodseg.entropy_map(prob), 0.4)
        expected = [c for c in flood_fill_components(mask, 8) if len(c) >= 10]
        assert _pixel_lists(segs) == expected


class TestFeaturesMatrix:
    def test_requires_filled_features(self):
        segs = oodseg.connected_components(np.ones((2, 2), dtype=bool))
        with pytest.raises(DomainError):
            oodseg.features_matrix(segs)

    def test_stacks_in_order(self, rng):
        p = random_prob_map(rng, 20, 20, 5)
        segs = oodseg.extract_segments(p, t=0.9)
        mat = oodseg.features_matrix(segs)
        assert mat.shape == (len(segs), len(oodseg.FEATURE_NAMES))
        for i, seg in enumerate(segs):
            np.testing.assert_array_equal(mat[i], seg.features.to_vector())

    def test_empty_input(self):
        assert oodseg.features_matrix([]).shape == (0, len(oodseg.FEATURE_NAMES))
