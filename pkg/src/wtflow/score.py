"""Anomaly maps from integrated endpoints, topK aggregation, and AUROC.

Two per-location scoring functionals are provided. In worst-transport mode
the score is the terminal radius ||x_hat_1||: trained flows keep normal
samples trapped near the origin while anomalies escape. In the reversed
flow-matching baseline mode the score is the deviation |‖x_hat_1‖ - sqrt(d)|
from the Gaussian shell radius that normal terminals should reach.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flow import integrate_batch
from .model import VectorFieldModel
from .numcore import Tensor
from .wtmap import WTParams, apply_wt

__all__ = ["AnomalyResult", "anomaly_map", "topk_image_score", "auroc"]

_MODES = ("wt", "rfm")


@dataclass(frozen=True)
class AnomalyResult:
    """Per-location score map plus the aggregated image-level score."""

    map: np.ndarray
    image_score: float
    label: int | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.map)) or np.any(self.map < 0.0):
            raise ValueError("anomaly scores must be finite and non-negative")


def anomaly_map(features: np.ndarray, model: VectorFieldModel,
                wt: WTParams | None, n_steps: int = 50,
                mode: str = "wt") -> np.ndarray:
    """Score every location of one image by integrating its channel vector.

    ``features`` may be a single d-vector, an (L, d) stack of location
    vectors, or a (C, H, W) feature map (scored per spatial location, with
    d = C). Output shapes are (1,), (L,), and (H, W) respectively.
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim == 1:
        vectors, out_shape = feats[None, :], (1,)
    elif feats.ndim == 2:
        vectors, out_shape = feats, (feats.shape[0],)
    elif feats.ndim == 3:
        c, h, w = feats.shape
        vectors, out_shape = feats.reshape(c, h * w).T, (h, w)
    else:
        raise ValueError(f"unsupported feature layout {feats.shape}")
    if vectors.shape[1] != model.dim:
        raise ValueError(
            f"feature dimension {vectors.shape[1]} does not match model dim {model.dim}")

    start = apply_wt(Tensor(vectors), wt).data if wt is not None else vectors
    terminal = integrate_batch(start, model, n_steps=n_steps, record=False).terminal
    radii = np.linalg.norm(terminal, axis=1)
    if mode == "wt":
        scores = radii
    else:
        scores = np.abs(radii - math.sqrt(model.dim))
    return scores.reshape(out_shape)


def topk_image_score(score_map: np.ndarray, k_frac: float = 0.03) -> float:
    """Mean of the ceil(k_frac * N) largest per-location scores."""
    flat = np.asarray(score_map, dtype=np.float64).reshape(-1)
    if flat.size == 0:
        raise ValueError("empty anomaly map")
    if not 0.0 < k_frac <= 1.0:
        raise ValueError(f"k_frac must lie in (0, 1], got {k_frac}")
    k = math.ceil(k_frac * flat.size)
    top = np.partition(flat, flat.size - k)[flat.size - k:]
    return float(np.sort(top)[::-1].mean())


def auroc(scores, labels) -> float:
    """Area under the ROC curve via the rank statistic, ties counted half.

    Equals the probability that a random anomalous (label 1) score exceeds a
    random normal (label 0) score. Needs both classes present.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(s.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc needs both classes present")
    ranks = _average_ranks(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average of their rank range."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks
