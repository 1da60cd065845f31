"""Conditional flow-matching regression with AdamW and a step-decay schedule.

Each step draws a fresh random coupling: every (worst-transport-mapped) data
vector is paired with an independent standard Gaussian draw and a time
t ~ U(0,1) sampled on the open interval, giving interpolants x_t and constant
regression targets x_end - x_start. The loss is the batch mean of the squared
Euclidean error between the model field and those targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .numcore import RandomStream, Tensor
from .model import TimeEmbedConfig, VectorFieldModel
from .paths import PathKind, PathSpec
from .wtmap import WTParams, apply_wt, fit_wt

__all__ = [
    "TrainConfig",
    "CouplingBatch",
    "AdamWState",
    "TrainResult",
    "TrainingDivergedError",
    "make_batch",
    "cfm_loss",
    "optimizer_step",
    "effective_lr",
    "train",
]


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; the defaults are the full-scale settings.

    Desk-scale 2-D toys typically override to batch_size=256,
    max_steps=4000, learning_rate=1e-3 with lr_decay_factor=1.0 (constant).
    """

    learning_rate: float = 2e-4
    weight_decay: float = 0.1
    epochs: int = 100
    batch_size: int = 8
    lr_decay_every: int = 20
    lr_decay_factor: float = 0.1
    seed: int = 0
    direction: PathKind = PathKind.REVERSE_RF
    wt_enabled: bool = True
    wt_eps: float = 1e-5
    wt_mode: str = "per_channel"
    hidden: tuple[int, ...] = (256, 256)
    activation: str = "silu"
    time_embed: TimeEmbedConfig = field(default_factory=TimeEmbedConfig)
    max_steps: int | None = None

    def __post_init__(self):
        # learning_rate 0 is allowed as the degenerate no-update run
        if self.learning_rate < 0.0 or self.weight_decay < 0.0:
            raise ValueError("rates must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr_decay_every < 1 or self.lr_decay_factor <= 0.0:
            raise ValueError("invalid learning-rate schedule")
        if self.direction not in (PathKind.FORWARD_RF, PathKind.REVERSE_RF):
            raise ValueError("training direction must be forward_rf or reverse_rf")


@dataclass(frozen=True)
class CouplingBatch:
    """Index-aligned arrays of one sampled coupling.

    ``x0`` holds the path starts, ``x1`` the path ends; in the reverse
    direction the starts are the (mapped) data and the ends Gaussian draws,
    and vice versa forward. ``u = x1 - x0`` is the regression target.
    """

    x0: np.ndarray
    x1: np.ndarray
    t: np.ndarray
    x_t: np.ndarray
    u: np.ndarray

    def __len__(self) -> int:
        return self.x0.shape[0]


def make_batch(data: np.ndarray, wt: WTParams | None, stream: RandomStream,
               direction: PathKind = PathKind.REVERSE_RF) -> CouplingBatch:
    """Couple a data minibatch with fresh Gaussian draws and times.

    Applies the worst-transport map when ``wt`` is given (the data side is
    passed through untouched otherwise, bit-exactly). Times are uniform on
    the open interval (0, 1): endpoint draws are rejected and redrawn.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("data must be a non-empty (B, d) batch")
    mapped = apply_wt(Tensor(data), wt).data if wt is not None else data
    gauss = stream.normal(data.shape)
    t = stream.uniform_open(data.shape[0])
    if direction is PathKind.REVERSE_RF:
        x0, x1 = mapped, gauss
    else:
        x0, x1 = gauss, mapped
    x_t = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    return CouplingBatch(x0=x0, x1=x1, t=t, x_t=x_t, u=x1 - x0)


def cfm_loss(model: VectorFieldModel, batch: CouplingBatch) -> Tensor:
    """Batch mean of the squared Euclidean norm of (target - model field)."""
    v = model.forward_batch(batch.x_t, batch.t)
    diff = nc.sub(Tensor(batch.u), v)
    return nc.scale(nc.sum_all(nc.mul(diff, diff)), 1.0 / len(batch))


@dataclass
class AdamWState:
    """First/second moments and step count of the adaptive-moment optimizer."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: list[Tensor]) -> "AdamWState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params])


def optimizer_step(params: list[Tensor], grads: list[np.ndarray],
                   state: AdamWState, lr: float, weight_decay: float) -> None:
    """One decoupled-weight-decay adaptive-moment update, in place.

    m <- b1*m + (1-b1)*g, v <- b2*v + (1-b2)*g^2, with bias correction
    m_hat = m/(1-b1^step), v_hat = v/(1-b2^step); then
    theta <- theta - lr * (m_hat/(sqrt(v_hat)+eps) + wd*theta).
    """
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("non-finite gradient encountered")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.data = p.data - lr * (update + weight_decay * p.data)


def effective_lr(cfg: TrainConfig, epoch: int) -> float:
    """lr0 * factor^floor(epoch / every), exact step decay."""
    return cfg.learning_rate * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)


class TrainingDivergedError(RuntimeError):
    """Loss or gradients went non-finite; carries the last good checkpoint."""

    def __init__(self, message: str, last_checkpoint: bytes | None = None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


@dataclass
class TrainResult:
    model: VectorFieldModel
    wt: WTParams | None
    epoch_losses: list[float]
    checkpoint: bytes
    steps: int


def train(data: np.ndarray, cfg: TrainConfig) -> TrainResult:
    """Full regression loop; bit-identical results for identical seeds.

    Fits the worst-transport statistics once on the whole training set (when
    enabled), then runs epochs of shuffled minibatches through
    make_batch -> cfm_loss -> backward -> optimizer_step under the step-decay
    schedule. Aborts with the last finite-loss checkpoint on divergence.
    """
    from .checkpoint import serialize_checkpoint

    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("data must be a non-empty (N, d) array")
    if not np.all(np.isfinite(data)):
        raise ValueError("training data must be finite")

    root = RandomStream(cfg.seed)
    init_stream = root.child(0)
    loop_stream = root.child(1)

    wt = fit_wt(Tensor(data), eps=cfg.wt_eps, mode=cfg.wt_mode) if cfg.wt_enabled else None
    model = VectorFieldModel(dim=data.shape[1], hidden=cfg.hidden,
                             activation=cfg.activation, time_embed=cfg.time_embed,
                             init_stream=init_stream)
    params = model.parameters()
    state = AdamWState.init(params)
    path_spec = PathSpec(cfg.direction)

    def snapshot() -> bytes:
        return serialize_checkpoint(model, wt, path_spec)

    last_good = snapshot()
    epoch_losses: list[float] = []
    steps = 0
    n = data.shape[0]
    done = False
    for epoch in range(cfg.epochs):
        lr = effective_lr(cfg, epoch)
        order = loop_stream.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            rows = data[order[start:start + cfg.batch_size]]
            batch = make_batch(rows, wt, loop_stream, cfg.direction)
            with nc.Tape() as tape:
                loss = cfm_loss(model, batch)
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise TrainingDivergedError(
                    f"loss diverged at step {steps}", last_checkpoint=last_good)
            grads = nc.backward(tape, loss, leaves=params)
            try:
                optimizer_step(params, grads, state, lr, cfg.weight_decay)
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(
                    f"{exc} at step {steps}", last_checkpoint=last_good) from None
            losses.append(loss_val)
            steps += 1
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                done = True
                break
        epoch_losses.append(float(np.mean(losses)))
        last_good = snapshot()
        if done:
            break
    return TrainResult(model=model, wt=wt, epoch_losses=epoch_losses,
                       checkpoint=last_good, steps=steps)
