"""CLI: export-features and render.

Exit codes: 0 success, 1 usage error, 2 data or model error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .export import BACKBONES, ExportError, ExportSpec, export_features
from .ftc import FTCError
from .render import (RenderError, render_heatmap, render_normcurves,
                     render_trajectories)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _cmd_export(args) -> int:
    spec = ExportSpec(backbone=args.backbone, block=args.block,
                      resolution=args.resolution,
                      pretrained=not args.no_pretrained, seed=args.seed,
                      batch_size=args.batch)
    shape = export_features(args.images, args.out, spec)
    print(json.dumps({"command": "export-features", "backbone": args.backbone,
                      "block": args.block, "resolution": args.resolution,
                      "pretrained": not args.no_pretrained,
                      "dims": list(shape), "out": str(args.out)},
                     sort_keys=True))
    return 0


def _cmd_render(args) -> int:
    if args.kind == "trajectories":
        out = render_trajectories(args.input, args.out)
    elif args.kind == "normcurves":
        out = render_normcurves(args.input, args.out)
    else:
        out = render_heatmap(args.input, args.out, index=args.index,
                             image_path=args.image)
    print(json.dumps({"command": "render", "kind": args.kind, "out": str(out)},
                     sort_keys=True))
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="pytools", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-features",
                       help="run a backbone and write an FTC1 feature container")
    p.add_argument("--images", required=True,
                   help="image file or directory of images")
    p.add_argument("--out", required=True)
    p.add_argument("--backbone", choices=BACKBONES, default="wide_resnet50_2")
    p.add_argument("--block", type=int, default=2,
                   help="residual stage index, 0-3; 2 is the 1/16-scale stage")
    p.add_argument("--resolution", type=int, default=512)
    p.add_argument("--no-pretrained", action="store_true",
                   help="seeded random backbone init instead of ImageNet weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=8)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("render", help="render a figure from pipeline outputs")
    p.add_argument("kind", choices=("trajectories", "normcurves", "heatmap"))
    p.add_argument("--input", required=True,
                   help="trajectory CSV, norm-table CSV, or maps container")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--index", type=int, default=0, help="map index (heatmap)")
    p.add_argument("--image", default=None, help="background image (heatmap)")
    p.set_defaults(func=_cmd_render)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ExportError, RenderError, FTCError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
