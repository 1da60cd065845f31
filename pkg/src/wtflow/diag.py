"""Executable geometric diagnostics.

Covers the concentration of Gaussian mass on the sqrt(d) shell, the
second-order growth of KL divergence under a small Gaussian admixture, a
closed-form marginal-field oracle for finite datasets, trajectory-norm
tables over integration steps, initial radial-motion statistics, and the
radius bound check on feature containers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flow import integrate_batch
from .model import VectorFieldModel
from .numcore import RandomStream
from .paths import DEFAULT_T_MIN, PathKind, PathSpec

__all__ = [
    "annulus_fraction",
    "kl_perturbation_curve",
    "KLCurve",
    "marginal_field_oracle",
    "NormTable",
    "trajectory_norm_table",
    "RadialStats",
    "initial_radial_stats",
    "RadiusBoundReport",
    "radius_bound_check",
]


def annulus_fraction(d: int, n: int, beta: float,
                     stream: RandomStream, chunk: int = 8192) -> float:
    """Monte Carlo mass of N(0, I_d) inside sqrt(d) - beta <= ||x|| <= sqrt(d) + beta.

    Draws in fixed-size chunks so the memory footprint stays bounded for
    large n*d; the draw sequence is fully determined by the stream.
    """
    if d < 1 or n < 1:
        raise ValueError("d and n must be >= 1")
    if not 0.0 < beta <= math.sqrt(d):
        raise ValueError(f"beta must lie in (0, sqrt(d)], got {beta}")
    lo, hi = math.sqrt(d) - beta, math.sqrt(d) + beta
    hits = 0
    remaining = n
    while remaining > 0:
        m = min(chunk, remaining)
        draws = stream.normal((m, d))
        norms = np.linalg.norm(draws, axis=1)
        hits += int(np.count_nonzero((norms >= lo) & (norms <= hi)))
        remaining -= m
    return hits / n


# ---------------------------------------------------------------------------
# KL growth under an epsilon Gaussian admixture.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KLCurve:
    eps: np.ndarray
    kl: np.ndarray
    slope: float


def _normal_pdf(x: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    z = (x - mu) / sigma
    return np.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))


def _adaptive_simpson(f, a: float, b: float, tol: float,
                      max_depth: int = 50) -> float:
    """Classic recursive adaptive Simpson quadrature with Richardson check."""

    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, tol, depth):
        m = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + m), 0.5 * (m + hi)
        flm, frm = f(lm), f(rm)
        left = simpson(lo, m, flo, flm, fmid)
        right = simpson(m, hi, fmid, frm, fhi)
        if depth >= max_depth:
            raise RuntimeError("adaptive quadrature failed to converge")
        if abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (recurse(lo, m, flo, flm, fmid, left, tol / 2.0, depth + 1)
                + recurse(m, hi, fmid, frm, fhi, right, tol / 2.0, depth + 1))

    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)
    return recurse(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, 0)


def kl_perturbation_curve(mu0: float, var0: float, eps_list,
                          tol: float = 1e-10) -> KLCurve:
    """KL(p0 || (p0 + eps*N)/(1+eps)) for each eps, plus the log-log slope.

    ``p0`` is the Gaussian N(mu0, var0) and N the standard normal density;
    the admixture is renormalized by (1+eps) so the divergence is between
    probability densities. Quadrature is adaptive Simpson on
    [mu0 - 10*sigma_max, mu0 + 10*sigma_max]. Restricted to var0 >= 1: for
    lighter-tailed p0 the density ratio N/p0 diverges and the expansion
    leaves its valid regime.
    """
    if var0 < 1.0:
        raise ValueError(f"var0 must be >= 1 (regime limit), got {var0}")
    eps_arr = np.asarray(sorted(float(e) for e in eps_list), dtype=np.float64)
    if np.any(eps_arr < 0.0) or np.any(eps_arr > 0.1):
        raise ValueError("eps values must lie in [0, 0.1]")
    sigma0 = math.sqrt(var0)
    sigma_max = max(sigma0, 1.0)
    a, b = mu0 - 10.0 * sigma_max, mu0 + 10.0 * sigma_max

    def kl_one(eps: float) -> float:
        if eps == 0.0:
            return 0.0
        log1p_eps = math.log1p(eps)

        def integrand(x):
            p0 = _normal_pdf(np.asarray(x), mu0, sigma0)
            ratio = _normal_pdf(np.asarray(x), 0.0, 1.0) / p0
            return float(p0 * (log1p_eps - np.log1p(eps * ratio)))

        return _adaptive_simpson(integrand, a, b, tol)

    kl = np.array([kl_one(e) for e in eps_arr])
    fit = (eps_arr > 0.0) & (kl > 0.0)
    if np.count_nonzero(fit) >= 2:
        slope = float(np.polyfit(np.log(eps_arr[fit]), np.log(kl[fit]), 1)[0])
    else:
        slope = float("nan")
    return KLCurve(eps=eps_arr, kl=kl, slope=slope)


# ---------------------------------------------------------------------------
# Finite-dataset marginal field.
# ---------------------------------------------------------------------------

def mixture_weights(x: np.ndarray, t: float, dataset: np.ndarray,
                    spec: PathSpec) -> np.ndarray:
    """Normalized responsibilities of each dataset point for the query x.

    Proportional to the conditional Gaussian density of x at time t given
    each point, computed with log-sum-exp stabilization; sums to one.
    """
    x = np.asarray(x, dtype=np.float64)
    data = np.asarray(dataset, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("dataset must be a non-empty (N, d) array")
    if x.shape != (data.shape[1],):
        raise ValueError(f"query shape {x.shape} does not match dataset dim")
    sigma = spec.sigma(t)
    if sigma < spec.t_min:
        from .paths import SingularityError
        raise SingularityError(
            f"marginal field undefined at t={t} (sigma_t={sigma})")
    mus = np.stack([spec.mu(p, t) for p in data])           # (N, d)
    log_w = -np.sum((x[None, :] - mus) ** 2, axis=1) / (2.0 * sigma * sigma)
    peak = log_w.max()
    if not np.isfinite(peak):
        raise FloatingPointError("all mixture weights underflowed")
    w = np.exp(log_w - peak)
    return w / w.sum()


def marginal_field_oracle(x: np.ndarray, t: float, dataset: np.ndarray,
                          spec: PathSpec) -> np.ndarray:
    """Closed-form marginal velocity for a finite conditioning set.

    The marginal field is the responsibility-weighted mixture of the
    conditional fields, one term per dataset point.
    """
    x = np.asarray(x, dtype=np.float64)
    data = np.asarray(dataset, dtype=np.float64)
    w = mixture_weights(x, t, data, spec)
    fields = np.stack([spec.conditional_field(x, p, t) for p in data])
    return (w[:, None] * fields).sum(axis=0)


# ---------------------------------------------------------------------------
# Trajectory-norm tables and radial statistics.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormTable:
    """Mean ||x_t|| per class at selected integration steps.

    ``argmin`` marks, per row, the grid column whose mean norm is smallest;
    an interior minimum (index > 0) is the signature of initial motion
    toward the origin.
    """

    classes: list[str]
    grid: list[int]
    means: np.ndarray
    argmin: list[int]

    def row(self, name: str) -> np.ndarray:
        return self.means[self.classes.index(name)]

    def argmin_of(self, name: str) -> int:
        return self.argmin[self.classes.index(name)]


def trajectory_norm_table(model: VectorFieldModel, datasets,
                          n_steps: int = 50, grid=None) -> NormTable:
    """Integrate each class's samples and tabulate mean norms on the grid.

    ``datasets`` maps class name -> (N, d) array (a bare array is treated as
    a single class named "all"). Default grid is steps 0, 5, ..., n_steps.
    """
    if isinstance(datasets, np.ndarray):
        datasets = {"all": datasets}
    if grid is None:
        grid = list(range(0, n_steps + 1, max(1, n_steps // 10)))
    grid = [int(g) for g in grid]
    if any(g < 0 or g > n_steps for g in grid):
        raise ValueError("grid steps must lie in [0, n_steps]")

    classes, rows, mins = [], [], []
    for name, samples in datasets.items():
        samples = np.asarray(samples, dtype=np.float64)
        traj = integrate_batch(samples, model, n_steps=n_steps, record=True)
        mean_norms = traj.norms.mean(axis=1)        # (n_steps+1,)
        row = mean_norms[grid]
        classes.append(str(name))
        rows.append(row)
        mins.append(int(np.argmin(row)))
    return NormTable(classes=classes, grid=grid,
                     means=np.stack(rows), argmin=mins)


@dataclass(frozen=True)
class RadialStats:
    mean_radial: float
    fraction_inward: float
    n_used: int
    n_skipped: int


def initial_radial_stats(model: VectorFieldModel, dataset: np.ndarray,
                         t_eval: float = DEFAULT_T_MIN) -> RadialStats:
    """Radial component of the field at the start of integration.

    For each sample computes r = <v(x, t_eval), x/||x||>; negative r means
    motion toward the origin. Samples exactly at the origin are skipped
    (their direction is undefined).
    """
    data = np.asarray(dataset, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("dataset must be a non-empty (N, d) array")
    norms = np.linalg.norm(data, axis=1)
    keep = norms > 0.0
    if not np.any(keep):
        raise ValueError("all samples sit at the origin")
    x = data[keep]
    v = model.eval_batch(x, t_eval)
    r = np.sum(v * (x / norms[keep][:, None]), axis=1)
    return RadialStats(mean_radial=float(r.mean()),
                       fraction_inward=float(np.mean(r < 0.0)),
                       n_used=int(keep.sum()),
                       n_skipped=int((~keep).sum()))


@dataclass(frozen=True)
class RadiusBoundReport:
    max_norm: float
    bound: float
    violation: bool


def radius_bound_check(features: np.ndarray) -> RadiusBoundReport:
    """Max per-location channel-vector norm against the sqrt(d) shell radius.

    Accepts (N, d), (C, H, W), or (N, C, H, W) layouts; d is the channel
    count. A violation means some location already sits outside the Gaussian
    shell that flow targets are drawn from.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim == 2:
        vectors = feats
    elif feats.ndim == 3:
        c = feats.shape[0]
        vectors = feats.reshape(c, -1).T
    elif feats.ndim == 4:
        n, c = feats.shape[0], feats.shape[1]
        vectors = feats.reshape(n, c, -1).transpose(0, 2, 1).reshape(-1, c)
    else:
        raise ValueError(f"unsupported feature layout {feats.shape}")
    d = vectors.shape[1]
    max_norm = float(np.linalg.norm(vectors, axis=1).max()) if vectors.size else 0.0
    bound = math.sqrt(d)
    return RadiusBoundReport(max_norm=max_norm, bound=bound,
                             violation=max_norm > bound)
