"""Discrete Euler integration of learned vector fields from t=0 to t=1.

The grid is uniform with left-endpoint updates x_{j+1} = x_j + (1/n) v(x_j, t_j),
t_j = j/n. No adaptive stepping and no higher-order solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import VectorFieldModel
from .numcore import Tensor

__all__ = ["Trajectory", "IntegrationError", "integrate_euler",
           "integrate_batch", "one_step_endpoint"]


class IntegrationError(RuntimeError):
    """Non-finite state encountered; carries the failing step index."""

    def __init__(self, step: int):
        super().__init__(f"non-finite state at step {step}")
        self.step = step


@dataclass(frozen=True)
class Trajectory:
    """Recorded grid times, states, and per-step Euclidean norms of one sample.

    With recording disabled only the two endpoints are kept (times then hold
    0 and 1). ``states[0]`` is always the supplied initial point.
    """

    times: np.ndarray
    states: np.ndarray
    norms: np.ndarray

    def __post_init__(self):
        if not (len(self.times) == self.states.shape[0] == len(self.norms)):
            raise ValueError("trajectory fields must be index-aligned")

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


class BatchTrajectory:
    """Trajectories of a whole batch integrated in lockstep."""

    def __init__(self, times: np.ndarray, states: np.ndarray):
        self.times = times                      # (S,)
        self.states = states                    # (S, N, d)
        self.norms = np.linalg.norm(states, axis=2)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    def sample(self, i: int) -> Trajectory:
        return Trajectory(times=self.times, states=self.states[:, i, :],
                          norms=self.norms[:, i])

    def __len__(self) -> int:
        return self.states.shape[1]


def integrate_batch(x_init: np.ndarray, model: VectorFieldModel,
                    n_steps: int = 50, record: bool = True) -> BatchTrajectory:
    """Euler-integrate every row of ``x_init`` (N, d) over n_steps."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    x = np.asarray(x_init, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("x_init must be (N, d)")
    dt = 1.0 / n_steps
    if record:
        states = np.empty((n_steps + 1, *x.shape), dtype=np.float64)
        times = np.arange(n_steps + 1, dtype=np.float64) * dt
        states[0] = x
    else:
        states = np.empty((2, *x.shape), dtype=np.float64)
        times = np.array([0.0, 1.0])
        states[0] = x
    cur = x.copy()
    for j in range(n_steps):
        v = model.eval_batch(cur, j * dt)
        cur = cur + dt * v
        if not np.all(np.isfinite(cur)):
            raise IntegrationError(j)
        if record:
            states[j + 1] = cur
    if not record:
        states[1] = cur
    return BatchTrajectory(times=times, states=states)


def integrate_euler(x_init: Tensor, model: VectorFieldModel,
                    n_steps: int = 50, record: bool = True) -> Trajectory:
    """Integrate a single d-vector; see :func:`integrate_batch`."""
    data = np.asarray(x_init.data, dtype=np.float64)
    if data.ndim != 1:
        raise ValueError("x_init must be a flat vector")
    return integrate_batch(data[None, :], model, n_steps, record).sample(0)


def one_step_endpoint(x_init: Tensor, model: VectorFieldModel) -> Tensor:
    """x + v(x, 0): the single-step terminal, bit-identical to n_steps=1."""
    data = np.asarray(x_init.data, dtype=np.float64)
    return Tensor(data + 1.0 * model.eval_batch(data, 0.0))
