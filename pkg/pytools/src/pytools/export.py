"""Backbone feature export: images -> FTC1 container + manifest CSV.

Runs an ImageNet-style CNN in eval mode and captures the output of one
residual stage. The default spec (WideResNet-50, stage 2, 512x512 input,
ImageNet normalization) yields a (N, 1024, 32, 32) container. Stage indices
count the four residual stages from 0, so stage 2 is the one whose output is
1/16 of the input resolution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from urllib.error import URLError

import numpy as np

from .ftc import write_ftc

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

BACKBONES = ("wide_resnet50_2", "resnet18", "resnet34")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


class ExportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExportSpec:
    backbone: str = "wide_resnet50_2"
    block: int = 2
    resolution: int = 512
    pretrained: bool = True
    seed: int = 0
    batch_size: int = 8
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ExportError(f"backbone must be one of {BACKBONES}")
        if not 0 <= self.block <= 3:
            raise ExportError("block index must lie in [0, 3]")
        if self.resolution < 32:
            raise ExportError("resolution too small")


def _build_backbone(spec: ExportSpec):
    import torch
    import torchvision.models as models

    ctor = getattr(models, spec.backbone)
    if spec.pretrained:
        try:
            net = ctor(weights="IMAGENET1K_V1")
        except (URLError, OSError, RuntimeError) as exc:
            raise ExportError(
                f"pretrained weights for {spec.backbone} are unavailable "
                f"({exc}); pass pretrained=False for a seeded random "
                f"initialization") from exc
    else:
        torch.manual_seed(spec.seed)
        net = ctor(weights=None)
    net.eval()
    return net


def _stage_forward(net, x, block: int):
    h = net.maxpool(net.relu(net.bn1(net.conv1(x))))
    for i, stage in enumerate([net.layer1, net.layer2, net.layer3, net.layer4]):
        h = stage(h)
        if i == block:
            return h
    raise ExportError(f"stage {block} not reached")


def list_images(images_path) -> list[Path]:
    root = Path(images_path)
    if root.is_file():
        return [root]
    if not root.is_dir():
        raise ExportError(f"no such image path: {root}")
    paths = sorted(p for p in root.iterdir()
                   if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise ExportError(f"no images found under {root}")
    return paths


def _load_batch(paths: list[Path], spec: ExportSpec) -> np.ndarray:
    from PIL import Image

    mean = np.asarray(spec.mean, dtype=np.float32).reshape(3, 1, 1)
    std = np.asarray(spec.std, dtype=np.float32).reshape(3, 1, 1)
    out = np.empty((len(paths), 3, spec.resolution, spec.resolution),
                   dtype=np.float32)
    for i, path in enumerate(paths):
        try:
            with Image.open(path) as img:
                img = img.convert("RGB").resize(
                    (spec.resolution, spec.resolution), Image.BILINEAR)
                arr = np.asarray(img, dtype=np.float32) / 255.0
        except OSError as exc:
            raise ExportError(f"unreadable image {path}: {exc}") from exc
        out[i] = (arr.transpose(2, 0, 1) - mean) / std
    return out


def export_features(images_path, out_dir, spec: ExportSpec = ExportSpec()):
    """Write features.ftc (N, C, H, W) and manifest.csv under ``out_dir``.

    Returns the (N, C, H, W) shape of the exported container.
    """
    import torch

    paths = list_images(images_path)
    net = _build_backbone(spec)
    chunks = []
    with torch.no_grad():
        for start in range(0, len(paths), spec.batch_size):
            batch_paths = paths[start:start + spec.batch_size]
            x = torch.from_numpy(_load_batch(batch_paths, spec))
            feats = _stage_forward(net, x, spec.block)
            chunks.append(feats.numpy().astype(np.float32))
    features = np.concatenate(chunks, axis=0)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_ftc(out / "features.ftc", features)
    with open(out / "manifest.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "path"])
        for i, path in enumerate(paths):
            writer.writerow([i, str(path)])
    return features.shape
