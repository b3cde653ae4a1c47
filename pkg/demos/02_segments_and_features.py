"""
From uncertainty maps to candidate segments
===========================================

Thresholding an entropy map gives a binary mask; its connected components
are the candidate OoD segments. Each segment is summarized by fifteen
hand-crafted features (size, shape, location, and uncertainty statistics
split between interior and boundary) — the raw material for the meta
classifier in the next demo.
"""

import numpy as np

import oodseg

prob, gt, _ = oodseg.generate_scene(oodseg.SceneConfig(seed=7))
entropy = oodseg.entropy_map(prob)

# Threshold the entropy at t = 0.3 (>= semantics) and keep 8-connected
# components with at least 10 pixels. extract_segments derives the margin,
# max-probability and argmax maps itself and fills all fifteen features.
segments = oodseg.extract_segments(prob, t=0.3, connectivity=8, min_size=10)
mask = oodseg.threshold_mask(entropy, 0.3)
print(f"flagged pixels: {int(mask.sum())}, segments >= 10 px: {len(segments)}")

# How many of them sit on a real blob? Majority coverage (>=50%) decides.
match = oodseg.match_segments(segments, gt)
print(f"matched blobs: {match.tp}, false segments: {match.fp}, missed blobs: {match.fn}")

# Peek at the largest three segments. `features.size` counts pixels;
# interior pixels have all eight neighbours inside the segment.
segments.sort(key=lambda s: s.features.size, reverse=True)
print(f"\n{'id':>4s} {'size':>6s} {'interior':>8s} {'mean_ent':>8s} {'ent_bd':>8s} {'var_ent':>8s}")
for seg in segments[:3]:
    f = seg.features
    print(
        f"{seg.id:4d} {f.size:6.0f} {f.interior_size:8.0f}"
        f" {f.mean_entropy:8.3f} {f.mean_entropy_boundary:8.3f} {f.var_entropy:8.4f}"
    )

# The canonical feature order is pinned; a segment flattens to one row.
vec = segments[0].features.to_vector()
print(f"\nfeature vector: {vec.shape[0]} values in the order {oodseg.FEATURE_NAMES[:3] + ('...',)}")

# Raising the threshold can only shrink the flagged set — segments at a
# higher t are always subsets of segments at a lower one.
for t in (0.2, 0.4, 0.6, 0.8):
    m = oodseg.threshold_mask(entropy, t)
    n_seg = len(oodseg.connected_components(m, 8))
    print(f"t={t:.1f}: {int(m.sum()):5d} pixels in {n_seg:3d} raw components")
