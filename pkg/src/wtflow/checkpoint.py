"""Binary checkpoint format: model parameters, WT statistics, path regime.

Layout (all little-endian):

    magic       4 bytes  b"WTF1"
    version     u32      1
    dim         u32      sample dimension d
    embed_dim   u32      time embedding size K
    omega_min   f64
    omega_max   f64
    activation  u8       0 = silu, 1 = tanh
    path_kind   u8       0 = forward_rf, 1 = forward_ot, 2 = reverse_rf
    wt_present  u8
    wt_mode     u8       0 = per_channel, 1 = global
    epsilon     f64      OT noise floor of the path spec
    t_min       f64
    t_max_fwd   f64
    n_layers    u32
    per layer:  u32 fan_in, u32 fan_out
    per layer:  f64[fan_in*fan_out] weights row-major, f64[fan_out] bias
    if wt_present:
                f64 wt_eps, u32 channels, f64[channels] gamma, f64[channels] beta
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .model import TimeEmbedConfig, VectorFieldModel
from .numcore import Tensor
from .paths import PathKind, PathSpec
from .wtmap import WTParams

__all__ = ["serialize_checkpoint", "deserialize_checkpoint",
           "write_checkpoint", "read_checkpoint", "CheckpointError"]

MAGIC = b"WTF1"
VERSION = 1

_ACT_CODES = {"silu": 0, "tanh": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}
_KIND_CODES = {PathKind.FORWARD_RF: 0, PathKind.FORWARD_OT: 1, PathKind.REVERSE_RF: 2}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}
_MODE_CODES = {"per_channel": 0, "global": 1}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}


class CheckpointError(ValueError):
    """Malformed or truncated checkpoint bytes."""


def serialize_checkpoint(model: VectorFieldModel, wt: WTParams | None,
                         spec: PathSpec) -> bytes:
    buf = io.BytesIO()
    te = model.time_embed
    buf.write(MAGIC)
    buf.write(struct.pack("<III", VERSION, model.dim, te.dim))
    buf.write(struct.pack("<dd", te.omega_min, te.omega_max))
    buf.write(struct.pack("<BBBB", _ACT_CODES[model.activation],
                          _KIND_CODES[spec.kind],
                          1 if wt is not None else 0,
                          _MODE_CODES[wt.mode] if wt is not None else 0))
    buf.write(struct.pack("<ddd", spec.epsilon, spec.t_min, spec.t_max_forward))
    buf.write(struct.pack("<I", len(model.weights)))
    for w in model.weights:
        buf.write(struct.pack("<II", w.shape[0], w.shape[1]))
    for w, b in zip(model.weights, model.biases):
        buf.write(np.ascontiguousarray(w.data, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(b.data, dtype="<f8").tobytes())
    if wt is not None:
        buf.write(struct.pack("<d", wt.eps))
        buf.write(struct.pack("<I", wt.channels))
        buf.write(np.ascontiguousarray(wt.gamma, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(wt.beta, dtype="<f8").tobytes())
    return buf.getvalue()


def _read(buf: io.BytesIO, fmt: str):
    size = struct.calcsize(fmt)
    raw = buf.read(size)
    if len(raw) != size:
        raise CheckpointError("truncated checkpoint")
    return struct.unpack(fmt, raw)


def _read_f64(buf: io.BytesIO, count: int) -> np.ndarray:
    raw = buf.read(8 * count)
    if len(raw) != 8 * count:
        raise CheckpointError("truncated checkpoint payload")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def deserialize_checkpoint(blob: bytes) -> tuple[VectorFieldModel, WTParams | None, PathSpec]:
    buf = io.BytesIO(blob)
    if buf.read(4) != MAGIC:
        raise CheckpointError("bad checkpoint magic")
    version, dim, embed_dim = _read(buf, "<III")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    omega_min, omega_max = _read(buf, "<dd")
    act_code, kind_code, wt_present, mode_code = _read(buf, "<BBBB")
    if act_code not in _ACT_NAMES or kind_code not in _KIND_NAMES:
        raise CheckpointError("unknown activation or path kind code")
    epsilon, t_min, t_max_forward = _read(buf, "<ddd")
    (n_layers,) = _read(buf, "<I")
    sizes = [_read(buf, "<II") for _ in range(n_layers)]
    if not sizes:
        raise CheckpointError("checkpoint has no layers")

    te = TimeEmbedConfig(dim=embed_dim, omega_min=omega_min, omega_max=omega_max)
    hidden = tuple(fan_out for fan_in, fan_out in sizes[:-1])
    model = VectorFieldModel(dim=dim, hidden=hidden,
                             activation=_ACT_NAMES[act_code], time_embed=te)
    expected = model.layer_sizes
    if expected != [tuple(s) for s in sizes]:
        raise CheckpointError(f"inconsistent layer table: {sizes} vs {expected}")
    for li, (fan_in, fan_out) in enumerate(sizes):
        w = _read_f64(buf, fan_in * fan_out).reshape(fan_in, fan_out)
        b = _read_f64(buf, fan_out)
        model.weights[li] = Tensor(w, requires_grad=True)
        model.biases[li] = Tensor(b, requires_grad=True)

    wt = None
    if wt_present:
        (wt_eps,) = _read(buf, "<d")
        (channels,) = _read(buf, "<I")
        gamma = _read_f64(buf, channels)
        beta = _read_f64(buf, channels)
        wt = WTParams(gamma=gamma, beta=beta, eps=wt_eps, mode=_MODE_NAMES[mode_code])
    if buf.read(1):
        raise CheckpointError("trailing bytes after checkpoint payload")
    spec = PathSpec(_KIND_NAMES[kind_code], epsilon=epsilon, t_min=t_min,
                    t_max_forward=t_max_forward)
    return model, wt, spec


def write_checkpoint(path, model: VectorFieldModel, wt: WTParams | None,
                     spec: PathSpec) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_checkpoint(model, wt, spec))


def read_checkpoint(path) -> tuple[VectorFieldModel, WTParams | None, PathSpec]:
    with open(path, "rb") as fh:
        return deserialize_checkpoint(fh.read())
