"""Seeded toy scenarios and the FTC1 binary tensor container.

Scenarios are 2-D by construction and fully determined by (name, sizes,
seed). The FTC1 container is a little-endian header (magic, version, dtype
code, dims) followed by the raw row-major payload; round trips are bit-exact.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .numcore import RandomStream

__all__ = ["ScenarioData", "gen_scenario", "SCENARIO_NAMES",
           "read_container", "write_container", "ContainerError"]

SCENARIO_NAMES = ("disc_grid", "origin_blob", "intersecting", "disjoint")


@dataclass(frozen=True)
class ScenarioData:
    """Train samples plus a labeled test split (label 1 = anomalous)."""

    name: str
    dim: int
    train: np.ndarray
    test: np.ndarray
    labels: np.ndarray


def _disc_grid_points() -> np.ndarray:
    # 11 x 11 lattice on [-sqrt(2), sqrt(2)]^2 kept strictly inside the
    # radius-sqrt(2) shell of the d=2 standard Gaussian.
    axis = np.linspace(-math.sqrt(2.0), math.sqrt(2.0), 11)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([xx.reshape(-1), yy.reshape(-1)], axis=1)
    return pts[np.linalg.norm(pts, axis=1) < math.sqrt(2.0)]


def _ring(stream: RandomStream, n: int, radius: float) -> np.ndarray:
    theta = stream.uniform(n) * 2.0 * math.pi
    return radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)


def gen_scenario(name: str, n_train: int, n_test: int, seed: int) -> ScenarioData:
    """Deterministic 2-D scenario draws.

    disc_grid     train/test normals on the fixed 11x11 lattice inside the
                  radius-sqrt(2) disc (n_train is ignored; the lattice is part
                  of the scenario definition), anomalies on a radius
                  2*sqrt(2) ring.
    origin_blob   train N(0, I), test normals N(0, 0.01*I); no anomalies.
    intersecting  train N(0, I); test half N(0, I), half N((-1,-1), 0.3*I).
    disjoint      train N(0, 0.25*I); test half normal, half uniform on a
                  radius-4 ring, far outside the normal support.
    """
    if name not in SCENARIO_NAMES:
        raise ValueError(f"unknown scenario {name!r}; choose from {SCENARIO_NAMES}")
    if n_train < 1 or n_test < 1:
        raise ValueError("n_train and n_test must be >= 1")
    stream = RandomStream(seed)

    if name == "disc_grid":
        grid = _disc_grid_points()
        train = grid.copy()
        anomalous = _ring(stream, n_test, 2.0 * math.sqrt(2.0))
        test = np.concatenate([grid, anomalous])
        labels = np.concatenate([np.zeros(len(grid), dtype=np.int64),
                                 np.ones(n_test, dtype=np.int64)])
    elif name == "origin_blob":
        train = stream.normal((n_train, 2))
        test = 0.1 * stream.normal((n_test, 2))
        labels = np.zeros(n_test, dtype=np.int64)
    elif name == "intersecting":
        train = stream.normal((n_train, 2))
        n_norm = n_test // 2
        n_anom = n_test - n_norm
        normal = stream.normal((n_norm, 2))
        anomalous = np.array([-1.0, -1.0]) + math.sqrt(0.3) * stream.normal((n_anom, 2))
        test = np.concatenate([normal, anomalous])
        labels = np.concatenate([np.zeros(n_norm, dtype=np.int64),
                                 np.ones(n_anom, dtype=np.int64)])
    else:  # disjoint
        train = 0.5 * stream.normal((n_train, 2))
        n_norm = n_test // 2
        n_anom = n_test - n_norm
        normal = 0.5 * stream.normal((n_norm, 2))
        anomalous = _ring(stream, n_anom, 4.0)
        test = np.concatenate([normal, anomalous])
        labels = np.concatenate([np.zeros(n_norm, dtype=np.int64),
                                 np.ones(n_anom, dtype=np.int64)])

    return ScenarioData(name=name, dim=2, train=train, test=test, labels=labels)


# ---------------------------------------------------------------------------
# FTC1 container.
# ---------------------------------------------------------------------------

MAGIC = b"FTC1"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_MAX_NDIM = 8


class ContainerError(ValueError):
    """Malformed FTC1 container."""


def write_container(path, tensor) -> None:
    """Write an array as FTC1; float32 stays float32, everything else is f64."""
    arr = np.asarray(getattr(tensor, "data", tensor))
    if arr.dtype == np.float32:
        code, dtype = 0, _DTYPES[0]
    else:
        code, dtype = 1, _DTYPES[1]
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise ContainerError("refusing to write non-finite values")
    if arr.ndim == 0 or arr.ndim > _MAX_NDIM:
        raise ContainerError(f"ndim must lie in [1, {_MAX_NDIM}], got {arr.ndim}")
    if any(s > 0xFFFFFFFF for s in arr.shape):
        raise ContainerError("dimension exceeds u32 range")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def read_container(path) -> np.ndarray:
    """Read an FTC1 container, validating header and payload length."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise ContainerError("bad container magic")
    version, code, ndim = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    if code not in _DTYPES:
        raise ContainerError(f"unknown dtype code {code}")
    if not 1 <= ndim <= _MAX_NDIM:
        raise ContainerError(f"ndim out of range: {ndim}")
    header_end = 16 + 4 * ndim
    if len(blob) < header_end:
        raise ContainerError("truncated container header")
    dims = struct.unpack_from(f"<{ndim}I", blob, 16)
    count = 1
    for dim in dims:
        count *= dim
    dtype = _DTYPES[code]
    expected = header_end + count * dtype.itemsize
    if len(blob) != expected:
        raise ContainerError(
            f"payload length {len(blob) - header_end} does not match dims {dims}")
    arr = np.frombuffer(blob[header_end:], dtype=dtype).reshape(dims)
    return arr.astype(np.float64) if code == 1 else arr.astype(np.float32)
