"""The parameterized vector field: an MLP over (sample, sinusoidal time embedding).

Each spatial location's channel vector is treated independently, so the model
maps a d-vector plus a K-dimensional time embedding through fully connected
layers back to a d-vector. The final layer is zero-initialized so the field
starts at exactly zero and early trajectories are near-identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .numcore import RandomStream, Tensor

__all__ = ["TimeEmbedConfig", "VectorFieldModel", "embed_time"]

_ACTIVATIONS = ("silu", "tanh")


@dataclass(frozen=True)
class TimeEmbedConfig:
    """Sinusoidal embedding: K/2 frequencies geometric in [omega_min, omega_max]."""

    dim: int = 64
    omega_min: float = 1.0
    omega_max: float = 1000.0

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2 != 0:
            raise ValueError(f"embedding dim must be even and >= 2, got {self.dim}")
        if not 0.0 < self.omega_min <= self.omega_max:
            raise ValueError("need 0 < omega_min <= omega_max")

    def frequencies(self) -> np.ndarray:
        half = self.dim // 2
        if half == 1:
            return np.array([self.omega_min])
        ratio = self.omega_max / self.omega_min
        return self.omega_min * ratio ** (np.arange(half) / (half - 1))


def embed_time(t: float, cfg: TimeEmbedConfig) -> np.ndarray:
    """[sin(w_0 t), cos(w_0 t), ..., sin(w_{K/2-1} t), cos(w_{K/2-1} t)]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return embed_times(np.array([t]), cfg)[0]


def embed_times(ts: np.ndarray, cfg: TimeEmbedConfig) -> np.ndarray:
    """Vectorized embedding for a batch of times, shape (len(ts), K)."""
    ts = np.asarray(ts, dtype=np.float64)
    if np.any((ts < 0.0) | (ts > 1.0)):
        raise ValueError("all times must lie in [0, 1]")
    phase = ts[:, None] * cfg.frequencies()[None, :]
    out = np.empty((ts.shape[0], cfg.dim), dtype=np.float64)
    out[:, 0::2] = np.sin(phase)
    out[:, 1::2] = np.cos(phase)
    return out


class VectorFieldModel:
    """MLP vector field v(x, t) with output dimension equal to input dimension.

    ``widths`` are the hidden layer sizes; the full layer stack is
    [d + K] + widths + [d]. Hidden layers use fan-in-scaled uniform
    initialization U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the final layer starts
    at zero. Parameters are gradient leaves for the numcore tape.
    """

    def __init__(self, dim: int, hidden: list[int] | tuple[int, ...] = (256, 256),
                 activation: str = "silu",
                 time_embed: TimeEmbedConfig = TimeEmbedConfig(),
                 init_stream: RandomStream | None = None):
        if dim < 1:
            raise ValueError(f"sample dimension must be >= 1, got {dim}")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        self.dim = int(dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.activation = activation
        self.time_embed = time_embed

        sizes = [self.dim + time_embed.dim, *self.hidden, self.dim]
        stream = init_stream if init_stream is not None else RandomStream(0)
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for li, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = li == len(sizes) - 2
            if last:
                w = np.zeros((fan_in, fan_out))
            else:
                bound = 1.0 / math.sqrt(fan_in)
                w = (stream.uniform(fan_in * fan_out) * 2.0 - 1.0) * bound
                w = w.reshape(fan_in, fan_out)
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(np.zeros(fan_out), requires_grad=True))

    @property
    def layer_sizes(self) -> list[tuple[int, int]]:
        return [(w.shape[0], w.shape[1]) for w in self.weights]

    def parameters(self) -> list[Tensor]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.append(w)
            params.append(b)
        return params

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    # -- tape-recorded forward (training) -----------------------------------

    def forward_batch(self, x: np.ndarray, ts: np.ndarray) -> Tensor:
        """v(x_i, t_i) for a batch; differentiable w.r.t. the parameters.

        ``x`` is (B, d) and ``ts`` (B,). The inputs enter the tape as
        constants, so gradients flow to the weights and biases only.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"expected input of shape (B, {self.dim}), got {x.shape}")
        emb = embed_times(np.asarray(ts, dtype=np.float64), self.time_embed)
        h = Tensor(np.concatenate([x, emb], axis=1))
        act = nc.silu if self.activation == "silu" else nc.tanh
        n_layers = len(self.weights)
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = nc.add(nc.matmul(h, w), b)
            if li < n_layers - 1:
                h = act(h)
        return h

    def forward(self, x: Tensor, t: float) -> Tensor:
        """v(x, t) for a single d-vector."""
        data = np.asarray(x.data, dtype=np.float64)
        if data.shape != (self.dim,):
            raise ValueError(f"expected shape ({self.dim},), got {data.shape}")
        out = self.forward_batch(data[None, :], np.array([t]))
        return Tensor(out.data[0])

    # -- plain numpy forward (inference) -------------------------------------

    def eval_batch(self, x: np.ndarray, t: float) -> np.ndarray:
        """Fast untaped evaluation at a shared time, for ODE integration."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.dim:
            raise ValueError(f"expected (B, {self.dim}) input, got {x.shape}")
        emb = embed_times(np.full(x.shape[0], float(t)), self.time_embed)
        h = np.concatenate([x, emb], axis=1)
        n_layers = len(self.weights)
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.data + b.data
            if li < n_layers - 1:
                h = _activate(h, self.activation)
        return h[0] if squeeze else h


def _activate(h: np.ndarray, name: str) -> np.ndarray:
    if name == "tanh":
        return np.tanh(h)
    return h * nc._sigmoid(h)
