"""Command line for the bundle exporter."""

import argparse
import sys
from pathlib import Path

from .export import ExportJob, run_export
from .formats import ExportError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scene-export",
        description="Run reconstruction and feature extraction on an image "
                    "pair and write a bundle for the change-detection engine")
    parser.add_argument("--img1", required=True, help="query image")
    parser.add_argument("--img2", required=True, help="reference image")
    parser.add_argument("--out", required=True, help="bundle output directory")
    parser.add_argument("--layer", type=int, default=17,
                        help="encoder layer for key features (deep backend)")
    parser.add_argument("--preprocess", default="auto",
                        choices=["auto", "none", "retinex", "color-transfer"],
                        help="illumination handling before reconstruction")
    parser.add_argument("--backend", default="auto",
                        choices=["auto", "classical", "deep"])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExportJob(img1=Path(args.img1), img2=Path(args.img2),
                    out_dir=Path(args.out), layer=args.layer,
                    preprocess=args.preprocess, backend=args.backend)
    try:
        manifest = run_export(job)
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
