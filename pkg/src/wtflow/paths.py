"""Conditional Gaussian probability paths and their velocity fields.

Three path regimes are supported, each a linear interpolation with schedules
(mu_t, sigma_t) conditioned on one endpoint:

* forward RF:  data at t=1, conditioned on x1; mu_t = t*x1, sigma_t = 1 - t
* forward OT:  noised variant; mu_t = t*x1, sigma_t = 1 - (1-eps)*t
* reverse RF:  data at t=0, Gaussian at t=1, conditioned on x0;
               mu_t = (1-t)*x0, sigma_t = t

The reverse path's analytic velocity divides by sigma_t = t and is therefore
undefined at t=0; evaluation below a guard ``t_min`` raises
:class:`SingularityError`. Training never needs the analytic field (its
regression target is simply x_end - x_start), so the guard affects
diagnostics only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .numcore import Tensor

__all__ = [
    "PathKind",
    "PathSpec",
    "SingularityError",
    "interpolate",
    "conditional_target",
    "eval_reverse_field",
    "eval_forward_ot_field",
]

DEFAULT_T_MIN = 1e-4


class SingularityError(ValueError):
    """Raised when a conditional field is evaluated where it is undefined."""


class PathKind(enum.Enum):
    FORWARD_RF = "forward_rf"
    FORWARD_OT = "forward_ot"
    REVERSE_RF = "reverse_rf"


@dataclass(frozen=True)
class PathSpec:
    """Which conditional Gaussian path is in force.

    ``epsilon`` is the noise floor of the forward OT path (ignored by the
    others); ``t_min`` guards field evaluation near vanishing sigma_t;
    ``t_max_forward`` is the right end of the forward-RF time domain,
    exposed as a knob and defaulting to 1.
    """

    kind: PathKind
    epsilon: float = 0.0
    t_min: float = DEFAULT_T_MIN
    t_max_forward: float = 1.0

    def __post_init__(self):
        if self.kind is PathKind.FORWARD_OT and not (0.0 < self.epsilon < 1.0):
            raise ValueError(f"forward OT needs 0 < epsilon < 1, got {self.epsilon}")
        if not (0.0 < self.t_min < 1.0):
            raise ValueError(f"t_min must lie in (0, 1), got {self.t_min}")

    def sigma(self, t: float) -> float:
        if self.kind is PathKind.FORWARD_RF:
            return 1.0 - t
        if self.kind is PathKind.FORWARD_OT:
            return 1.0 - (1.0 - self.epsilon) * t
        return t

    def mu(self, cond: np.ndarray, t: float) -> np.ndarray:
        """Path mean given the conditioning endpoint (x1 forward, x0 reverse)."""
        if self.kind is PathKind.REVERSE_RF:
            return (1.0 - t) * cond
        return t * cond

    def conditional_field(self, x: np.ndarray, cond: np.ndarray,
                          t: float) -> np.ndarray:
        """Velocity (d sigma/dt / sigma) * (x - mu_t) + d mu/dt at any x.

        Raises :class:`SingularityError` when sigma_t falls below ``t_min``,
        which is t -> 0 for the reverse path and t -> 1 forward.
        """
        s = self.sigma(t)
        if s < self.t_min:
            raise SingularityError(
                f"{self.kind.value} field undefined at t={t} (sigma_t={s})")
        if self.kind is PathKind.REVERSE_RF:
            return (x - (1.0 - t) * cond) / t - cond
        if self.kind is PathKind.FORWARD_RF:
            return cond - (x - t * cond) / s
        dsigma = -(1.0 - self.epsilon)
        return cond + dsigma * (x - t * cond) / s


def _check_same_shape(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def interpolate(x0: Tensor, x1: Tensor, t: float) -> Tensor:
    """Linear path point (1-t)*x0 + t*x1; endpoints are returned bit-exactly."""
    _check_same_shape(x0, x1)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if t == 0.0:
        return Tensor(x0.data.copy())
    if t == 1.0:
        return Tensor(x1.data.copy())
    return Tensor((1.0 - t) * x0.data + t * x1.data)


def conditional_target(x_start: Tensor, x_end: Tensor) -> Tensor:
    """Constant velocity of the straight path, x_end - x_start.

    This is the regression target of conditional flow-matching training in
    both directions.
    """
    _check_same_shape(x_start, x_end)
    return Tensor(x_end.data - x_start.data)


def eval_reverse_field(x_t: Tensor, x0: Tensor, t: float,
                       spec: PathSpec) -> Tensor:
    """Reverse-path conditional velocity at (x_t, t) given data point x0.

    Equals ``(x_t - (1-t)*x0)/t - x0``, which reduces to x1 - x0 for on-path
    points. Undefined at t=0; any t below ``spec.t_min`` raises
    :class:`SingularityError` regardless of the state.
    """
    if spec.kind is not PathKind.REVERSE_RF:
        raise ValueError(f"spec.kind must be REVERSE_RF, got {spec.kind}")
    _check_same_shape(x_t, x0)
    if t < spec.t_min:
        raise SingularityError(
            f"reverse field undefined for t={t} < t_min={spec.t_min}")
    return Tensor(spec.conditional_field(x_t.data, x0.data, t))


def eval_forward_ot_field(x_t: Tensor, x1: Tensor, t: float, epsilon: float,
                          t_min: float = DEFAULT_T_MIN) -> Tensor:
    """Forward OT conditional velocity at (x_t, t) given data point x1.

    Algebraically ``x1 - (1-eps)*x0`` for on-path points; as eps -> 0 it
    approaches the plain straight-path target x1 - x0. Raises when the
    schedule denominator 1 - (1-eps)*t falls below ``t_min``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0.0 <= t < 1.0:
        raise ValueError(f"t must lie in [0, 1), got {t}")
    _check_same_shape(x_t, x1)
    spec = PathSpec(PathKind.FORWARD_OT, epsilon=epsilon, t_min=t_min)
    return Tensor(spec.conditional_field(x_t.data, x1.data, t))
