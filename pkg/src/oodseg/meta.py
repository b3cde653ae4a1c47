"""Logistic-regression meta classifier over segment features.

Candidate OoD segments are labeled against ground truth (true vs. false
indication), features are z-scored, and a ridge-regularized logistic
regression is fitted with damped Newton iterations (IRLS). Applying the
fitted model removes segments it scores below the cutoff, which is how
false indications get filtered out after thresholding. Because the model
is linear, its weights double as a ranking of which hand-crafted features
drive the detection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    FormatError,
    IoError,
    NumericalError,
    SchemaError,
    ValidationError,
)
from .segments import FEATURE_NAMES, SegmentRecord, features_matrix
from .tensor_io import IGNORE_ID, OOD_ID

__all__ = [
    "MetaModel",
    "label_segments",
    "standardize_fit",
    "fit_logistic",
    "fit_meta",
    "predict_proba",
    "feature_weights",
    "apply_meta_filter",
    "save_meta_model",
    "load_meta_model",
]

EXCLUDED_LABEL = -1  # segment lay entirely on ignore pixels; drop before fitting


@dataclass(frozen=True)
class MetaModel:
    """Fitted ridge-logistic model plus the standardization it was trained with.

    ``weights`` follow the canonical feature order; indices listed in
    ``dropped_features`` had zero variance at fit time and carry weight
    exactly 0.0 (their ``feature_stds`` entry is 0.0 as well). ``grad_norm``
    and ``n_iter`` are fit diagnostics and are not serialized.
    """

    weights: np.ndarray
    bias: float
    feature_means: np.ndarray
    feature_stds: np.ndarray
    l2_lambda: float
    dropped_features: tuple
    feature_names: tuple
    grad_norm: float = field(default=math.nan, compare=False)
    n_iter: int = field(default=0, compare=False)


def label_segments(segments: list[SegmentRecord], gt: np.ndarray, tau_tp: float = 0.5) -> np.ndarray:
    """Meta-training labels: 1 = true OoD indication, 0 = false, -1 = excluded.

    A segment is a true indication when at least ``tau_tp`` of its pixels lie
    on ground-truth OoD pixels; pixels with the ignore id are excluded from
    both numerator and denominator. Segments consisting solely of ignore
    pixels get ``EXCLUDED_LABEL`` and must be dropped before fitting.
    """
    tau_tp = float(tau_tp)
    if not (0.0 < tau_tp <= 1.0):
        raise DomainError(f"tau_tp {tau_tp!r} outside (0, 1]")
    gt = np.asarray(gt)
    if gt.ndim != 2:
        raise SchemaError(f"ground-truth mask must be rank 2, got rank {gt.ndim}")
    labels = np.empty(len(segments), dtype=np.int64)
    for i, seg in enumerate(segments):
        values = gt[seg.pixels[:, 0], seg.pixels[:, 1]]
        considered = int((values != IGNORE_ID).sum())
        if considered == 0:
            labels[i] = EXCLUDED_LABEL
            continue
        on_ood = int((values == OOD_ID).sum())
        labels[i] = 1 if on_ood / considered >= tau_tp else 0
    return labels


def standardize_fit(features: np.ndarray):
    """Z-score a feature table column-wise with the population std.

    Returns ``(standardized, means, stds, dropped)``. Columns that are exactly
    constant have std 0; they are reported in ``dropped`` (sorted indices) and
    their standardized values are set to 0.0 so downstream fits see no signal
    from them.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise SchemaError(f"feature table must be rank 2, got rank {x.ndim}")
    if x.shape[0] < 1:
        raise DomainError("feature table needs at least one row")
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    constant = x.max(axis=0) == x.min(axis=0)
    stds = np.where(constant, 0.0, stds)  # a constant column's std is exactly 0
    dropped = np.flatnonzero(constant)
    safe = np.where(stds == 0.0, 1.0, stds)
    standardized = (x - means) / safe
    standardized[:, dropped] = 0.0
    return standardized, means, stds, dropped


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _objective(x: np.ndarray, y: np.ndarray, theta: np.ndarray, lam: float) -> float:
    z = x @ theta[:-1] + theta[-1]
    # y*z - log(1 + e^z) is the pointwise log-likelihood of a Bernoulli logit
    return float(np.sum(y * z - np.logaddexp(0.0, z)) - 0.5 * lam * (theta @ theta))


def fit_logistic(
    features: np.ndarray,
    labels: np.ndarray,
    l2_lambda: float = 1e-3,
    max_iter: int = 500,
    grad_tol: float = 1e-8,
) -> MetaModel:
    """Maximize the ridge-penalized Bernoulli log-likelihood by damped Newton (IRLS).

    ``features`` is expected to be standardized already (see
    :func:`standardize_fit` / :func:`fit_meta`); the returned model therefore
    records identity standardization. Starts from zero parameters, solves the
    (d+1)-dimensional Newton system each iteration and halves the step while
    it would decrease the objective, so the fit is fully deterministic.
    Stops when the gradient infinity-norm falls below ``grad_tol`` or after
    ``max_iter`` updates; the final gradient norm is recorded on the model.

    The L2 term ``(lambda/2)(||w||^2 + b^2)`` includes the bias, which keeps
    the optimum finite even for single-class label sets.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise SchemaError(f"feature table must be rank 2, got rank {x.ndim}")
    n, d = x.shape
    if n < 1:
        raise DomainError("cannot fit on an empty table")
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if y.shape[0] != n:
        raise SchemaError(f"{n} rows but {y.shape[0]} labels")
    if not np.isin(y, (0.0, 1.0)).all():
        raise DomainError("labels must be 0 or 1 (drop excluded segments first)")
    lam = float(l2_lambda)
    if lam < 0:
        raise DomainError(f"l2_lambda must be >= 0, got {lam!r}")

    theta = np.zeros(d + 1, dtype=np.float64)
    n_iter = 0
    while True:
        z = x @ theta[:-1] + theta[-1]
        mu = _sigmoid(z)
        residual = y - mu
        grad = np.empty(d + 1)
        grad[:-1] = x.T @ residual - lam * theta[:-1]
        grad[-1] = residual.sum() - lam * theta[-1]
        if not np.all(np.isfinite(grad)):
            raise NumericalError("non-finite gradient", iteration=n_iter)
        grad_norm = float(np.abs(grad).max())
        if grad_norm < grad_tol or n_iter >= max_iter:
            break
        s = mu * (1.0 - mu)
        hess = np.empty((d + 1, d + 1))
        hess[:-1, :-1] = x.T @ (s[:, None] * x)
        hess[:-1, -1] = x.T @ s
        hess[-1, :-1] = hess[:-1, -1]
        hess[-1, -1] = s.sum()
        hess[np.diag_indices(d + 1)] += lam
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular Hessian: {exc}", iteration=n_iter) from exc
        # Newton steps on this concave objective rarely overshoot, but halve
        # deterministically if one would lower the objective.
        f0 = _objective(x, y, theta, lam)
        scale = 1.0
        for _ in range(60):
            candidate = theta + scale * step
            if _objective(x, y, candidate, lam) >= f0:
                break
            scale *= 0.5
        theta = theta + scale * step
        if not np.all(np.isfinite(theta)):
            raise NumericalError("non-finite iterate", iteration=n_iter)
        n_iter += 1

    names = FEATURE_NAMES if d == len(FEATURE_NAMES) else tuple(f"f{i}" for i in range(d))
    return MetaModel(
        weights=theta[:-1].copy(),
        bias=float(theta[-1]),
        feature_means=np.zeros(d),
        feature_stds=np.ones(d),
        l2_lambda=lam,
        dropped_features=(),
        feature_names=names,
        grad_norm=grad_norm,
        n_iter=n_iter,
    )


def fit_meta(
    features: np.ndarray,
    labels: np.ndarray,
    l2_lambda: float = 1e-3,
    max_iter: int = 500,
    grad_tol: float = 1e-8,
) -> MetaModel:
    """Standardize a raw feature table and fit the meta classifier on it.

    Zero-variance columns are dropped from the fit and come back with weight
    exactly 0.0; the returned model carries the training means/stds so
    :func:`predict_proba` can standardize raw features internally.
    """
    x = np.asarray(features, dtype=np.float64)
    standardized, means, stds, dropped = standardize_fit(x)
    kept = np.setdiff1d(np.arange(x.shape[1]), dropped)
    core = fit_logistic(standardized[:, kept], labels, l2_lambda, max_iter, grad_tol)
    weights = np.zeros(x.shape[1], dtype=np.float64)
    weights[kept] = core.weights
    names = FEATURE_NAMES if x.shape[1] == len(FEATURE_NAMES) else tuple(f"f{i}" for i in range(x.shape[1]))
    return MetaModel(
        weights=weights,
        bias=core.bias,
        feature_means=means,
        feature_stds=stds,
        l2_lambda=float(l2_lambda),
        dropped_features=tuple(int(i) for i in dropped),
        feature_names=names,
        grad_norm=core.grad_norm,
        n_iter=core.n_iter,
    )


def predict_proba(model: MetaModel, features: np.ndarray) -> np.ndarray:
    """Probability that each row is a true OoD indication: sigma(w . z + b).

    ``features`` are raw (unstandardized); the model's means/stds are applied
    internally. Dropped features contribute nothing because their weights
    are exactly zero.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.weights.shape[0]:
        got = x.shape[1] if x.ndim == 2 else None
        raise SchemaError(f"expected {model.weights.shape[0]} feature columns, got {got}")
    safe = np.where(model.feature_stds == 0.0, 1.0, model.feature_stds)
    z = (x - model.feature_means) / safe
    return _sigmoid(z @ model.weights + model.bias)


def feature_weights(model: MetaModel) -> list:
    """Features ranked by |weight| descending; ties keep canonical order."""
    order = np.argsort(-np.abs(model.weights), kind="stable")
    return [(model.feature_names[i], float(model.weights[i])) for i in order]


def apply_meta_filter(segments: list[SegmentRecord], model: MetaModel, cutoff: float = 0.5):
    """Split segments into (kept, removed) by thresholding predict_proba at cutoff.

    Both lists preserve the input order. Removing a segment can only lower
    the false-positive count and raise the false-negative count of a
    downstream matching, never the reverse.
    """
    cutoff = float(cutoff)
    if not (0.0 < cutoff < 1.0):
        raise DomainError(f"cutoff {cutoff!r} outside (0, 1)")
    if not segments:
        return [], []
    proba = predict_proba(model, features_matrix(segments))
    kept = [seg for seg, p in zip(segments, proba) if p >= cutoff]
    removed = [seg for seg, p in zip(segments, proba) if p < cutoff]
    return kept, removed


def save_meta_model(model: MetaModel, path) -> None:
    """Serialize a MetaModel as JSON with the pinned key set."""
    payload = {
        "weights": [float(v) for v in model.weights],
        "bias": float(model.bias),
        "means": [float(v) for v in model.feature_means],
        "stds": [float(v) for v in model.feature_stds],
        "lambda": float(model.l2_lambda),
        "dropped": [int(i) for i in model.dropped_features],
        "feature_names": list(model.feature_names),
    }
    try:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_meta_model(path) -> MetaModel:
    """Load a model saved by :func:`save_meta_model`.

    The stored ``feature_names`` must equal the canonical order; anything
    else fails with SchemaError so silently mis-ordered weights can never be
    applied to a table.
    """
    try:
        with open(path, "r") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    required = {"weights", "bias", "means", "stds", "lambda", "dropped", "feature_names"}
    if not isinstance(payload, dict) or set(payload) != required:
        raise SchemaError(f"{path}: model JSON must have exactly the keys {sorted(required)}")
    if tuple(payload["feature_names"]) != FEATURE_NAMES:
        raise SchemaError(f"{path}: feature_names do not match the canonical feature order")
    weights = np.asarray(payload["weights"], dtype=np.float64)
    means = np.asarray(payload["means"], dtype=np.float64)
    stds = np.asarray(payload["stds"], dtype=np.float64)
    n = len(FEATURE_NAMES)
    if weights.shape != (n,) or means.shape != (n,) or stds.shape != (n,):
        raise SchemaError(f"{path}: weights/means/stds must each have {n} entries")
    values = np.concatenate([weights, means, stds, [payload["bias"], payload["lambda"]]])
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{path}: model parameters must be finite")
    dropped = tuple(int(i) for i in payload["dropped"])
    if any(not (0 <= i < n) for i in dropped):
        raise SchemaError(f"{path}: dropped indices out of range")
    if any(weights[i] != 0.0 for i in dropped):
        raise ValidationError(f"{path}: dropped features must carry weight 0")
    return MetaModel(
        weights=weights,
        bias=float(payload["bias"]),
        feature_means=means,
        feature_stds=stds,
        l2_lambda=float(payload["lambda"]),
        dropped_features=dropped,
        feature_names=FEATURE_NAMES,
    )
