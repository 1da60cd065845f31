"""Worst-transport normalization and the degenerate constant-cost coupling check.

The worst-transport map is the frozen affine normalization ``x -> gamma*x +
beta`` with ``gamma = 1/sqrt(var + eps)`` and ``beta = -mean * gamma``,
fitted once on the training batch and never learned. Centering the data at
the origin makes every admissible transport plan to the Gaussian tie under a
constant cost: the Kantorovich problem degenerates, and
:func:`constant_cost_total` makes that degeneracy executable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import Tensor

__all__ = ["WTParams", "DiscreteCoupling", "fit_wt", "apply_wt",
           "constant_cost_total"]

DEFAULT_WT_EPS = 1e-5

_MODES = ("per_channel", "global")


@dataclass(frozen=True)
class WTParams:
    """Frozen scale/shift of the worst-transport normalization.

    ``gamma`` and ``beta`` are per-channel vectors (length 1 in global mode),
    with ``beta = -mean * gamma`` by construction. Variance uses the biased
    (population) estimator, as in non-learnable normalization layers.
    """

    gamma: np.ndarray
    beta: np.ndarray
    eps: float
    mode: str

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if np.any(self.gamma <= 0.0):
            raise ValueError("gamma must be positive elementwise")
        if self.gamma.shape != self.beta.shape:
            raise ValueError("gamma and beta must have matching shapes")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


def _channel_axes(batch: np.ndarray) -> tuple[int, ...]:
    # (N, C): stats over N. (N, C, H, W): stats over N, H, W.
    if batch.ndim == 2:
        return (0,)
    if batch.ndim == 4:
        return (0, 2, 3)
    raise ValueError(f"expected a (N, C) or (N, C, H, W) batch, got ndim={batch.ndim}")


def fit_wt(features: Tensor, eps: float = DEFAULT_WT_EPS,
           mode: str = "per_channel") -> WTParams:
    """Fit the normalization statistics on a training batch and freeze them.

    Per-channel mode computes mean/std per channel over all samples (and
    spatial positions, for 4-D batches); global mode pools every element into
    a single scalar pair.
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    if eps < 0.0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    batch = np.asarray(features.data, dtype=np.float64)
    if batch.size == 0:
        raise ValueError("cannot fit worst-transport parameters on an empty batch")

    if mode == "global":
        mean = np.array([batch.mean()])
        var = np.array([batch.var()])
    else:
        axes = _channel_axes(batch)
        mean = batch.mean(axis=axes)
        var = batch.var(axis=axes)

    denom = np.sqrt(var + eps)
    if np.any(denom == 0.0):
        raise ValueError("zero variance with eps=0; supply a positive eps")
    gamma = 1.0 / denom
    beta = -mean * gamma
    return WTParams(gamma=gamma, beta=beta, eps=float(eps), mode=mode)


def apply_wt(x: Tensor, p: WTParams) -> Tensor:
    """Elementwise gamma*x + beta, broadcast along the channel axis."""
    data = x.data
    c = p.channels
    if p.mode == "global":
        return Tensor(p.gamma[0] * data + p.beta[0])
    if data.ndim >= 1 and data.shape[-1] == c and data.ndim <= 2:
        # (C,) vector or (N, C) batch of channel vectors
        return Tensor(p.gamma * data + p.beta)
    if data.ndim in (3, 4) and data.shape[-3] == c:
        # (C, H, W) or (N, C, H, W) feature maps
        g = p.gamma.reshape(c, 1, 1)
        b = p.beta.reshape(c, 1, 1)
        return Tensor(g * data + b)
    raise ValueError(
        f"layout {data.shape} incompatible with {c}-channel parameters")


@dataclass(frozen=True)
class DiscreteCoupling:
    """Nonnegative plan over source x target atoms with prescribed marginals."""

    weights: np.ndarray
    source: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        w = self.weights
        if w.ndim != 2:
            raise ValueError("coupling weights must be a matrix")
        if np.any(w < 0.0):
            raise ValueError("coupling weights must be nonnegative")
        if w.shape != (self.source.shape[0], self.target.shape[0]):
            raise ValueError("weights shape must match marginal lengths")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("coupling must carry total mass 1")
        if not np.allclose(w.sum(axis=1), self.source, atol=1e-9):
            raise ValueError("row sums must equal the source marginal")
        if not np.allclose(w.sum(axis=0), self.target, atol=1e-9):
            raise ValueError("column sums must equal the target marginal")


def constant_cost_total(coupling: DiscreteCoupling, c0: float) -> float:
    """Total transport cost under the constant cost c(x, y) = c0.

    Equals ``c0 * sum(weights)`` and therefore c0 itself for every admissible
    plan: no plan is better or worse than any other, which is exactly the
    degeneracy the worst-transport normalization engineers.
    """
    if c0 < 0.0:
        raise ValueError(f"c0 must be non-negative, got {c0}")
    return float(c0 * coupling.weights.sum())
