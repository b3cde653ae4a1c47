"""Bit-exact file I/O for probability maps, label masks, score maps and feature tables.

Interchange formats
-------------------
Tensors travel as NPY v1.0 files (magic ``\\x93NUMPY``, version ``(1, 0)``,
header dict with ``descr`` in ``{'<f4', '<i4'}``, ``fortran_order: False``).
Three tensor kinds are supported:

* probability map -- rank 3, ``<f4``, shape (H, W, C), rows on the simplex
* score map       -- rank 2, ``<f4``, values in [0, 1]
* label mask      -- rank 2, ``<i4``, class ids plus the reserved ids below

Feature tables travel as CSV ('.' decimal, header row, LF line endings) with
columns ``id, bbox_row_min, bbox_col_min, bbox_row_max, bbox_col_max``
followed by the canonical feature names and an optional trailing ``label``
column. Floats are written with shortest round-trip repr, so a write/read
cycle is lossless well beyond 9 significant digits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib import format as npy_format

from .errors import FormatError, IoError, SchemaError, ValidationError
from .segments import FEATURE_NAMES

# Reserved label-mask ids. Class ids 0..C-1 stay free for the model's
# own semantic categories (Cityscapes-style masks).
OOD_ID = 254
IGNORE_ID = 255

# Absolute tolerance for per-pixel probability sums. float32 softmax output
# commonly deviates from 1 at the 1e-6..1e-5 level.
PROB_SUM_TOL = 1e-4

_BBOX_COLUMNS = ("bbox_row_min", "bbox_col_min", "bbox_row_max", "bbox_col_max")
_LABEL_COLUMN = "label"


def _first_bad_pixel(bad_2d: np.ndarray) -> tuple[int, int]:
    """Raster-order coordinates of the first True entry of a 2-D bool array."""
    flat = int(np.argmax(bad_2d))
    return flat // bad_2d.shape[1], flat % bad_2d.shape[1]


def validate_prob_map(data: np.ndarray) -> None:
    """Check probability-map invariants, raising ValidationError on the first violation.

    Expects a rank-3 float32 array. Checks, in order: H, W >= 1 and C >= 2;
    every value in [0, 1]; every pixel's channel sum within ``PROB_SUM_TOL``
    of 1. Values are never clamped.
    """
    if data.ndim != 3 or data.dtype != np.float32:
        raise SchemaError(f"probability map must be rank-3 float32, got rank-{data.ndim} {data.dtype}")
    h, w, c = data.shape
    if h < 1 or w < 1:
        raise ValidationError(f"probability map needs H >= 1 and W >= 1, got {h}x{w}")
    if c < 2:
        raise ValidationError(f"probability map needs C >= 2 classes, got {c}")
    non_finite = ~np.isfinite(data)
    if non_finite.any():
        r, col = _first_bad_pixel(non_finite.any(axis=2))
        raise ValidationError(f"pixel ({r}, {col}): non-finite probability")
    out_of_range = (data < 0.0) | (data > 1.0)
    if out_of_range.any():
        r, col = _first_bad_pixel(out_of_range.any(axis=2))
        raise ValidationError(f"pixel ({r}, {col}): probability outside [0, 1]")
    sums = data.sum(axis=2, dtype=np.float64)
    bad = np.abs(sums - 1.0) > PROB_SUM_TOL
    if bad.any():
        r, col = _first_bad_pixel(bad)
        raise ValidationError(
            f"pixel ({r}, {col}): probabilities sum to {sums[r, col]:.6g}, "
            f"expected 1 within {PROB_SUM_TOL:g}"
        )


def validate_score_map(data: np.ndarray) -> None:
    """Check score-map invariants (rank-2 float32, every value in [0, 1])."""
    if data.ndim != 2 or data.dtype != np.float32:
        raise SchemaError(f"score map must be rank-2 float32, got rank-{data.ndim} {data.dtype}")
    bad = ~((data >= 0.0) & (data <= 1.0))  # also catches NaN
    if bad.any():
        r, c = _first_bad_pixel(bad)
        raise ValidationError(f"pixel ({r}, {c}): score {data[r, c]!r} outside [0, 1]")


def validate_label_mask(data: np.ndarray, num_classes: Optional[int] = None) -> None:
    """Check label-mask invariants.

    Every value must be a class id in ``0..num_classes-1`` or one of the
    reserved ids ``OOD_ID``/``IGNORE_ID``. Without ``num_classes`` only the
    representable range ``0..IGNORE_ID`` is enforced.
    """
    if data.ndim != 2 or data.dtype != np.int32:
        raise SchemaError(f"label mask must be rank-2 int32, got rank-{data.ndim} {data.dtype}")
    if num_classes is None:
        bad = (data < 0) | (data > IGNORE_ID)
    else:
        bad = ~(((data >= 0) & (data < num_classes)) | (data == OOD_ID) | (data == IGNORE_ID))
    if bad.any():
        r, c = _first_bad_pixel(bad)
        raise ValidationError(f"pixel ({r}, {c}): label id {int(data[r, c])} is not a valid class id")


def read_npy(path, expected_rank: int, validate: bool = True) -> np.ndarray:
    """Read a tensor from an NPY v1.0 file.

    ``expected_rank=3`` yields a probability map (float32); ``expected_rank=2``
    yields a score map (float32) or a label mask (int32), decided by the
    stored dtype. With ``validate=True`` content invariants are checked on
    load (probability maps: simplex rows; score maps: [0, 1] range; label
    masks: id range).

    Raises FormatError for malformed files, SchemaError for dtype/rank/order
    mismatches and ValidationError for invariant violations.
    """
    if expected_rank not in (2, 3):
        raise SchemaError(f"expected_rank must be 2 or 3, got {expected_rank}")
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with fh:
        try:
            version = npy_format.read_magic(fh)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc
        if version != (1, 0):
            raise FormatError(f"{path}: NPY version {version} unsupported, expected (1, 0)")
        try:
            shape, fortran_order, dtype = npy_format.read_array_header_1_0(fh)
        except ValueError as exc:
            raise FormatError(f"{path}: malformed header: {exc}") from exc
        if fortran_order:
            raise SchemaError(f"{path}: fortran_order arrays are not supported")
        if dtype not in (np.dtype("<f4"), np.dtype("<i4")):
            raise SchemaError(f"{path}: dtype {dtype.str!r} unsupported, expected '<f4' or '<i4'")
        if len(shape) != expected_rank:
            raise SchemaError(f"{path}: rank {len(shape)} does not match expected rank {expected_rank}")
        if expected_rank == 3 and dtype != np.dtype("<f4"):
            raise SchemaError(f"{path}: rank-3 tensors must be '<f4', got {dtype.str!r}")
        payload = fh.read()
        n_expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if len(payload) != n_expected:
            raise FormatError(f"{path}: payload holds {len(payload)} bytes, header promises {n_expected}")
        data = np.frombuffer(payload, dtype=dtype).reshape(shape)
    data = np.ascontiguousarray(data)
    if validate:
        if expected_rank == 3:
            validate_prob_map(data)
        elif data.dtype == np.float32:
            validate_score_map(data)
        else:
            validate_label_mask(data)
    return data


def write_npy(data: np.ndarray, path) -> None:
    """Write a tensor as an NPY v1.0 file (little-endian, C order).

    The caller is responsible for content invariants; dtype and rank are
    checked here. Re-reading the file yields a bit-identical payload.
    """
    if data.ndim == 3:
        if data.dtype != np.float32:
            raise SchemaError(f"rank-3 tensors must be float32, got {data.dtype}")
    elif data.ndim == 2:
        if data.dtype not in (np.float32, np.int32):
            raise SchemaError(f"rank-2 tensors must be float32 or int32, got {data.dtype}")
    else:
        raise SchemaError(f"only rank-2/rank-3 tensors are supported, got rank {data.ndim}")
    descr = "<f4" if data.dtype == np.float32 else "<i4"
    out = np.ascontiguousarray(data.astype(descr, copy=False))
    try:
        with open(path, "wb") as fh:
            npy_format.write_array_header_1_0(
                fh, {"descr": descr, "fortran_order": False, "shape": out.shape}
            )
            fh.write(out.tobytes("C"))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


@dataclass
class SegmentTable:
    """Tabular view of extracted segments: ids, bounding boxes, features, labels.

    ``labels`` is None for unlabeled tables; otherwise an int array where 1
    marks a true OoD indication, 0 a false one and -1 a segment excluded
    from training (only ignore-labelled pixels).
    """

    ids: np.ndarray
    bboxes: np.ndarray
    features: np.ndarray
    labels: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @staticmethod
    def empty(labeled: bool = False) -> "SegmentTable":
        return SegmentTable(
            ids=np.zeros(0, dtype=np.int64),
            bboxes=np.zeros((0, 4), dtype=np.int64),
            features=np.zeros((0, len(FEATURE_NAMES)), dtype=np.float64),
            labels=np.zeros(0, dtype=np.int64) if labeled else None,
        )


def _expected_header(labeled: bool) -> list[str]:
    header = ["id", *_BBOX_COLUMNS, *FEATURE_NAMES]
    if labeled:
        header.append(_LABEL_COLUMN)
    return header


def write_feature_csv(table: SegmentTable, path) -> None:
    """Write a segment table as CSV with the canonical column order."""
    labeled = table.labels is not None
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(_expected_header(labeled))
            for i in range(len(table)):
                row = [int(table.ids[i]), *(int(v) for v in table.bboxes[i])]
                row.extend(repr(float(v)) for v in table.features[i])
                if labeled:
                    row.append(int(table.labels[i]))
                writer.writerow(row)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_feature_csv(path) -> SegmentTable:
    """Read a segment table written by :func:`write_feature_csv`.

    The header must match the canonical schema exactly (optionally with the
    trailing ``label`` column); any unknown or missing column raises
    SchemaError, a non-numeric cell raises FormatError.
    """
    try:
        fh = open(path, "r", newline="")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file, expected a header row") from None
        if header == _expected_header(labeled=True):
            labeled = True
        elif header == _expected_header(labeled=False):
            labeled = False
        else:
            expected = _expected_header(labeled=False)
            unknown = [c for c in header if c not in expected + [_LABEL_COLUMN]]
            if unknown:
                raise SchemaError(f"{path}: unknown column {unknown[0]!r}")
            raise SchemaError(f"{path}: header does not match the canonical column order")
        ids, bboxes, feats, labels = [], [], [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FormatError(f"{path}:{line_no}: expected {len(header)} cells, got {len(row)}")
            try:
                ids.append(int(row[0]))
                bboxes.append([int(v) for v in row[1:5]])
                feats.append([float(v) for v in row[5:5 + len(FEATURE_NAMES)]])
                if labeled:
                    labels.append(int(row[5 + len(FEATURE_NAMES)]))
            except ValueError as exc:
                raise FormatError(f"{path}:{line_no}: non-numeric cell: {exc}") from exc
    n = len(ids)
    return SegmentTable(
        ids=np.asarray(ids, dtype=np.int64).reshape(n),
        bboxes=np.asarray(bboxes, dtype=np.int64).reshape(n, 4),
        features=np.asarray(feats, dtype=np.float64).reshape(n, len(FEATURE_NAMES)),
        labels=np.asarray(labels, dtype=np.int64).reshape(n) if labeled else None,
    )
