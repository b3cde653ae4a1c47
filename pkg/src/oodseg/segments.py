"""Candidate OoD segments: thresholding, connected components, per-segment features.

A score map is thresholded into a binary mask, the mask is partitioned into
connected components (4- or 8-connectivity) with a run-based union-find pass,
and each surviving component gets a vector of 15 hand-crafted statistics
(``FEATURE_NAMES``) summarizing its size, geometry, uncertainty profile and
class neighborhood. These vectors feed the logistic-regression meta
classifier that separates true from false OoD indications.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, SchemaError
from .scores import argmax_map, entropy_map, margin_map, maxprob_map

__all__ = [
    "FEATURE_NAMES",
    "SegmentFeatures",
    "SegmentRecord",
    "threshold_mask",
    "connected_components",
    "compute_features",
    "extract_segments",
    "features_matrix",
]

# Canonical feature order. Tables, serialized models and weight rankings all
# index features by position in this tuple; changing it is a format break.
FEATURE_NAMES = (
    "size",
    "interior_size",
    "boundary_size",
    "rel_interior",
    "mean_entropy",
    "mean_entropy_interior",
    "mean_entropy_boundary",
    "var_entropy",
    "mean_margin",
    "mean_maxprob_unc",
    "bbox_height_rel",
    "bbox_width_rel",
    "centroid_row_rel",
    "centroid_col_rel",
    "n_adjacent_classes_rel",
)


@dataclass(frozen=True)
class SegmentFeatures:
    """Hand-crafted per-segment statistics in canonical order.

    Interior pixels are those whose eight neighbors all exist and belong to
    the segment; the boundary is the rest, so size = interior + boundary.
    ``var_entropy`` is the population variance. Means over an empty interior
    (or boundary) are defined as 0.0. Centroids use pixel centers, i.e.
    ``(mean_index + 0.5) / extent``, so they lie strictly inside (0, 1).
    """

    size: float
    interior_size: float
    boundary_size: float
    rel_interior: float
    mean_entropy: float
    mean_entropy_interior: float
    mean_entropy_boundary: float
    var_entropy: float
    mean_margin: float
    mean_maxprob_unc: float
    bbox_height_rel: float
    bbox_width_rel: float
    centroid_row_rel: float
    centroid_col_rel: float
    n_adjacent_classes_rel: float

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)


@dataclass
class SegmentRecord:
    """One connected component of a thresholded score map.

    ``pixels`` is an (n, 2) array of (row, col) coordinates in raster order;
    ``bbox`` is (row_min, col_min, row_max, col_max) inclusive. ``features``
    stays None until filled by :func:`compute_features`.
    """

    id: int
    pixels: np.ndarray
    bbox: tuple
    features: Optional[SegmentFeatures] = None

    @property
    def size(self) -> int:
        return int(self.pixels.shape[0])


def threshold_mask(score: np.ndarray, t: float) -> np.ndarray:
    """Binary mask of pixels with ``score >= t``; t must lie in [0, 1]."""
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"threshold {t!r} outside [0, 1]")
    score = np.asarray(score)
    if score.ndim != 2:
        raise SchemaError(f"score map must be rank 2, got rank {score.ndim}")
    return score >= t


def _find(parent: np.ndarray, x: int) -> int:
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:  # path compression
        parent[x], x = root, parent[x]
    return root


def connected_components(mask: np.ndarray, connectivity: int = 8) -> list[SegmentRecord]:
    """Partition the 1-pixels of a binary mask into connected components.

    Uses a run-based two-pass union-find: maximal horizontal runs of
    1-pixels become union-find nodes, runs in adjacent rows are united when
    their column intervals touch under the requested connectivity. Component
    ids are assigned in raster order of each component's first pixel, and
    every pixel list comes back raster-ordered. Features are left unfilled.
    """
    if connectivity not in (4, 8):
        raise DomainError(f"connectivity must be 4 or 8, got {connectivity!r}")
    mask = np.asarray(mask).astype(bool)
    if mask.ndim != 2:
        raise SchemaError(f"mask must be rank 2, got rank {mask.ndim}")
    h, w = mask.shape
    if h < 1 or w < 1:
        raise DomainError(f"mask dimensions must be at least 1x1, got {h}x{w}")

    # Pad one False column so runs never wrap across row ends in the flat view.
    padded = np.zeros((h, w + 1), dtype=bool)
    padded[:, :w] = mask
    flat = padded.ravel()
    edges = np.diff(flat.astype(np.int8))
    starts = np.flatnonzero(edges == 1) + 1
    stops = np.flatnonzero(edges == -1) + 1
    if flat[0]:
        starts = np.concatenate([[0], starts])
    n_runs = starts.size
    if n_runs == 0:
        return []
    run_row = starts // (w + 1)
    col_lo = starts - run_row * (w + 1)
    col_hi = stops - run_row * (w + 1)  # exclusive

    parent = np.arange(n_runs, dtype=np.int64)
    slack = 1 if connectivity == 8 else 0
    row_first = np.searchsorted(run_row, np.arange(h + 1))
    for r in range(1, h):
        i0, i1 = row_first[r], row_first[r + 1]
        j0, j1 = row_first[r - 1], row_first[r]
        j = j0
        for i in range(i0, i1):
            while j < j1 and col_hi[j] + slack <= col_lo[i]:
                j += 1
            k = j
            while k < j1 and col_lo[k] < col_hi[i] + slack:
                ra, rb = _find(parent, i), _find(parent, k)
                if ra != rb:
                    parent[ra] = rb
                k += 1

    # Relabel roots in raster order of each component's first run.
    comp_of_run = np.empty(n_runs, dtype=np.int64)
    root_to_comp: dict[int, int] = {}
    for i in range(n_runs):
        root = _find(parent, i)
        if root not in root_to_comp:
            root_to_comp[root] = len(root_to_comp)
        comp_of_run[i] = root_to_comp[root]
    n_comps = len(root_to_comp)

    run_len = col_hi - col_lo
    total = int(run_len.sum())
    px_row = np.repeat(run_row, run_len)
    offsets = np.arange(total) - np.repeat(np.cumsum(run_len) - run_len, run_len)
    px_col = np.repeat(col_lo, run_len) + offsets
    px_comp = np.repeat(comp_of_run, run_len)

    order = np.argsort(px_comp, kind="stable")  # raster order kept inside components
    rows_g, cols_g = px_row[order], px_col[order]
    counts = np.bincount(px_comp, minlength=n_comps)
    bounds = np.concatenate([[0], np.cumsum(counts)])
    segments = []
    for c in range(n_comps):
        rows = rows_g[bounds[c]:bounds[c + 1]]
        cols = cols_g[bounds[c]:bounds[c + 1]]
        segments.append(
            SegmentRecord(
                id=c,
                pixels=np.stack([rows, cols], axis=1).astype(np.int64),
                bbox=(int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max())),
            )
        )
    return segments


def compute_features(
    seg: SegmentRecord,
    entropy: np.ndarray,
    margin: np.ndarray,
    maxprob_unc: np.ndarray,
    pred: np.ndarray,
    num_classes: int,
) -> SegmentFeatures:
    """Fill the 15 canonical statistics for one segment.

    All reductions run in float64 regardless of map dtype, so results are
    bit-stable across runs and thread counts. The adjacency feature counts
    distinct predicted classes in the segment's 1-pixel outer ring (the
    8-dilation minus the segment, clipped to the image).
    """
    h, w = entropy.shape
    rows = seg.pixels[:, 0]
    cols = seg.pixels[:, 1]
    r0, c0, r1, c1 = seg.bbox

    # Local bool grid with a 1-pixel apron; cells beyond the image stay False,
    # which makes image-border pixels non-interior automatically.
    local = np.zeros((r1 - r0 + 3, c1 - c0 + 3), dtype=bool)
    local[rows - r0 + 1, cols - c0 + 1] = True
    nbr_all = np.ones((r1 - r0 + 1, c1 - c0 + 1), dtype=bool)
    ring_any = np.zeros_like(local)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            shifted = local[1 + dr:local.shape[0] - 1 + dr, 1 + dc:local.shape[1] - 1 + dc]
            if dr or dc:
                nbr_all &= shifted
            ring_any[1 + dr:local.shape[0] - 1 + dr, 1 + dc:local.shape[1] - 1 + dc] |= local[1:-1, 1:-1]
    interior_flags = (nbr_all & local[1:-1, 1:-1])[rows - r0, cols - c0]

    ring_local = ring_any & ~local
    ring_r, ring_c = np.nonzero(ring_local)
    ring_r = ring_r + r0 - 1
    ring_c = ring_c + c0 - 1
    inside = (ring_r >= 0) & (ring_r < h) & (ring_c >= 0) & (ring_c < w)
    ring_classes = np.unique(pred[ring_r[inside], ring_c[inside]])

    ent = entropy[rows, cols].astype(np.float64)
    mar = margin[rows, cols].astype(np.float64)
    mpu = maxprob_unc[rows, cols].astype(np.float64)
    size = ent.size
    interior = int(interior_flags.sum())
    boundary = size - interior
    ent_interior = ent[interior_flags]
    ent_boundary = ent[~interior_flags]

    return SegmentFeatures(
        size=float(size),
        interior_size=float(interior),
        boundary_size=float(boundary),
        rel_interior=interior / size,
        mean_entropy=float(ent.mean()),
        mean_entropy_interior=float(ent_interior.mean()) if interior else 0.0,
        mean_entropy_boundary=float(ent_boundary.mean()) if boundary else 0.0,
        var_entropy=float(ent.var()),
        mean_margin=float(mar.mean()),
        mean_maxprob_unc=float(mpu.mean()),
        bbox_height_rel=(r1 - r0 + 1) / h,
        bbox_width_rel=(c1 - c0 + 1) / w,
        centroid_row_rel=(float(rows.mean(dtype=np.float64)) + 0.5) / h,
        centroid_col_rel=(float(cols.mean(dtype=np.float64)) + 0.5) / w,
        n_adjacent_classes_rel=ring_classes.size / num_classes,
    )


def _segments_from_maps(
    entropy: np.ndarray,
    margin: np.ndarray,
    maxprob_unc: np.ndarray,
    pred: np.ndarray,
    num_classes: int,
    t: float,
    connectivity: int,
    min_size: int,
) -> list[SegmentRecord]:
    """Threshold + label + filter + featurize on precomputed score maps.

    Shared by :func:`extract_segments` and the evaluation sweep so both paths
    produce byte-identical segments. Component ids keep their pre-filter
    values, so gaps in the id sequence reveal suppressed small components.
    """
    if min_size < 1:
        raise DomainError(f"min_size must be >= 1, got {min_size!r}")
    mask = threshold_mask(entropy, t)
    segments = [s for s in connected_components(mask, connectivity) if s.size >= min_size]
    for seg in segments:
        seg.features = compute_features(seg, entropy, margin, maxprob_unc, pred, num_classes)
    return segments


def extract_segments(
    p: np.ndarray,
    t: float,
    connectivity: int = 8,
    min_size: int = 1,
) -> list[SegmentRecord]:
    """Full candidate-extraction pipeline on a probability map.

    Computes the entropy map, thresholds it at ``t``, labels connected
    components, drops those smaller than ``min_size`` and fills features
    (which also draw on the margin, max-probability and argmax maps).
    """
    p = np.asarray(p)
    return _segments_from_maps(
        entropy_map(p),
        margin_map(p),
        maxprob_map(p),
        argmax_map(p),
        p.shape[2],
        t,
        connectivity,
        min_size,
    )


def features_matrix(segments: list[SegmentRecord]) -> np.ndarray:
    """Stack segment features into an (n, 15) float64 table in canonical order."""
    if not segments:
        return np.zeros((0, len(FEATURE_NAMES)), dtype=np.float64)
    for seg in segments:
        if seg.features is None:
            raise DomainError(f"segment {seg.id} has no features; run compute_features first")
    return np.stack([seg.features.to_vector() for seg in segments])
