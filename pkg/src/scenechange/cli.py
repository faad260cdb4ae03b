"""Command-line interface: synth, priors, preprocess, detect, eval.

Exit codes: 0 on success, 2 on input/validation errors, 3 when a pipeline
stage fails.
"""

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
from PIL import Image

from . import illumination, metrics
from .bundle_io import BundleError, load_bundle, save_bundle, write_tensor
from .geometry import correspondence_field
from .occlusion import occlusion_mask
from .pipeline import (PipelineConfig, StageError, intermediate_arrays,
                       run_detect)
from .synthetic import generate_scene, scene_spec_from_json

EXIT_VALIDATION = 2
EXIT_STAGE = 3


def _load_image(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        from .bundle_io import read_tensor
        arr = read_tensor(path)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
            raise BundleError(f"{path} is not an HxWx3 u8 image tensor")
        return arr
    return np.asarray(Image.open(path).convert("RGB"))


def _save_png(arr: np.ndarray, path: Path) -> None:
    Image.fromarray(arr).save(path)


def _overlay(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = image.astype(np.float64).copy()
    tint = np.array([255.0, 32.0, 32.0])
    out[mask] = 0.45 * out[mask] + 0.55 * tint
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _config_from_args(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    for f in fields(PipelineConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    if getattr(args, "dump_intermediates", False):
        cfg.dump_intermediates = True
    return cfg.validate()


def _cmd_synth(args) -> int:
    spec = scene_spec_from_json(Path(args.spec).read_text())
    bundle, gt = generate_scene(spec)
    out = Path(args.out)
    save_bundle(bundle, out)
    for name in ("change_2", "occlusion_1", "occlusion_2", "overlap_1", "overlap_2"):
        write_tensor(getattr(gt, name), out / f"gt_{name}.npy")
    print(f"wrote bundle and ground truth to {out}")
    return 0


def _cmd_priors(args) -> int:
    bundle = load_bundle(args.bundle)
    cfg = _config_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .pipeline import _camera
    cams = {1: _camera(bundle, 1), 2: _camera(bundle, 2)}
    for src, dst, tag in ((1, 2, "1to2"), (2, 1, "2to1")):
        field = correspondence_field(getattr(bundle, f"depth_{src}"),
                                     cams[src], cams[dst])
        write_tensor(field.target, out / f"field_{tag}_target.npy")
        write_tensor(field.depth_in_target, out / f"field_{tag}_depth.npy")
        write_tensor(field.valid, out / f"field_{tag}_valid.npy")
        occ = occlusion_mask(field, getattr(bundle, f"depth_{dst}"),
                             alpha=cfg.alpha, kappa=cfg.kappa)
        write_tensor(occ.mask, out / f"occlusion_{src}.npy")
        sidecar = {"tau": occ.tau, "delta_median": occ.delta_stats[0],
                   "delta_mad": occ.delta_stats[1]}
        (out / f"occlusion_{src}.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    print(f"wrote geometric priors to {out}")
    return 0


def _cmd_preprocess(args) -> int:
    img1 = _load_image(Path(args.img1))
    img2 = _load_image(Path(args.img2))
    method = args.method.replace("-", "_")
    out_1, out_2, report = illumination.preprocess_pair(
        img1, img2, method=method, sigma_frac=args.sigma_frac)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _save_png(out_1, out / "preprocessed_1.png")
    _save_png(out_2, out / "preprocessed_2.png")
    report_dict = {"gray_gap": report.gray_gap, "hist_gap": report.hist_gap,
                   "triggered": report.triggered, "method": report.method}
    (out / "report.json").write_text(json.dumps(report_dict, indent=2) + "\n")
    print(json.dumps(report_dict))
    return 0


def _cmd_detect(args) -> int:
    bundle = load_bundle(args.bundle)
    cfg = _config_from_args(args)
    result = run_detect(bundle, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(result.final.mask, out / "final_mask.npy")
    write_tensor(result.final.contributions, out / "final_contributions.npy")
    _save_png(_overlay(bundle.image_1, result.final.mask), out / "overlay.png")
    metadata = {
        "config": cfg.to_dict(),
        "fallback_1": result.view1.match.fallback,
        "fallback_2": result.view2.match.fallback,
        "selected_masks_1": result.view1.match.selected,
        "selected_masks_2": result.view2.match.selected,
        "threshold_1": result.view1.initial.threshold_used,
        "threshold_2": result.view2.initial.threshold_used,
        "tau_1": result.view1.occlusion.tau,
        "tau_2": result.view2.occlusion.tau,
        "change_pixels": int(result.final.mask.sum()),
    }
    (out / "metadata.json").write_text(json.dumps(metadata, indent=2) + "\n")
    if cfg.dump_intermediates:
        for name, arr in intermediate_arrays(result).items():
            write_tensor(arr, out / f"{name}.npy")
    print(f"final mask: {metadata['change_pixels']} change pixels -> {out}")
    return 0


def _read_mask(path: Path) -> np.ndarray:
    from .bundle_io import read_tensor
    arr = read_tensor(path)
    if arr.dtype != np.bool_:
        raise BundleError(f"{path} is not a boolean mask tensor")
    return arr


def _cmd_eval(args) -> int:
    pred_dir = Path(args.pred_dir)
    gt_dir = Path(args.gt_dir)
    overlap_dir = Path(args.overlap_dir) if args.overlap_dir else None
    pred_paths = sorted(pred_dir.glob("*.npy"))
    if not pred_paths:
        raise BundleError(f"no predictions found in {pred_dir}")
    scores = []
    for pred_path in pred_paths:
        stem = pred_path.stem
        gt_path = gt_dir / pred_path.name
        if not gt_path.exists():
            raise BundleError(f"missing ground truth for {stem}")
        pred = _read_mask(pred_path)
        gt = _read_mask(gt_path)
        if overlap_dir is not None:
            gt = metrics.mask_gt_outside_overlap(
                gt, _read_mask(overlap_dir / pred_path.name))
        group = None
        if args.group_by:
            meta_path = gt_dir / f"{stem}.json"
            if meta_path.exists():
                group = str(json.loads(meta_path.read_text()).get(args.group_by))
        scores.append(metrics.score_pair(stem, pred, gt, group=group))
    reports = metrics.aggregate_by_group(scores, args.group_by or "group")

    lines = [f"{'pair':<24}{'tp':>10}{'fp':>10}{'fn':>10}{'f1':>9}{'miou':>9}"]
    for s in scores:
        lines.append(f"{s.pair_id:<24}{s.confusion.tp:>10}{s.confusion.fp:>10}"
                     f"{s.confusion.fn:>10}{s.f1:>9.4f}{s.miou:>9.4f}")
    for label, rep in reports.items():
        lines.append(f"{'[' + label + ']':<24}{rep.micro.tp:>10}{rep.micro.fp:>10}"
                     f"{rep.micro.fn:>10}{rep.micro_f1:>9.4f}{rep.micro_miou:>9.4f}")
    table = "\n".join(lines)
    print(table)

    payload = {
        "pairs": [{"id": s.pair_id, "group": s.group, "f1": s.f1, "miou": s.miou,
                   "tp": s.confusion.tp, "fp": s.confusion.fp,
                   "fn": s.confusion.fn, "tn": s.confusion.tn} for s in scores],
        "aggregates": {label: {"micro_f1": rep.micro_f1, "micro_miou": rep.micro_miou,
                               "macro_f1": rep.macro_f1, "macro_miou": rep.macro_miou,
                               "pairs": len(rep.per_pair)}
                       for label, rep in reports.items()},
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
        (out / "table.txt").write_text(table + "\n")
    return 0


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--layer", type=int, default=None)
    p.add_argument("--rho-overlap", dest="rho_overlap", type=float, default=None)
    p.add_argument("--theta-sem", dest="theta_sem", type=float, default=None)
    p.add_argument("--rho-max", dest="rho_max", type=float, default=None)
    p.add_argument("--no-occlusion-filtering", dest="occlusion_filtering",
                   action="store_const", const=False, default=None)
    p.add_argument("--dump-intermediates", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenechange",
        description="Scene change detection for image pairs with unaligned viewpoints")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene bundle")
    p.add_argument("--spec", required=True, help="JSON scene description")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("priors", help="correspondence, overlap, and occlusion maps")
    p.add_argument("--bundle", required=True, help="bundle manifest path")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_priors)

    p = sub.add_parser("preprocess", help="illumination normalization for a pair")
    p.add_argument("--img1", required=True)
    p.add_argument("--img2", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", default="auto",
                   choices=["auto", "none", "retinex", "color-transfer"])
    p.add_argument("--sigma-frac", dest="sigma_frac", type=float, default=0.1)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("detect", help="run the full detection pipeline")
    p.add_argument("--bundle", required=True, help="bundle manifest path")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    p.add_argument("--pred-dir", dest="pred_dir", required=True)
    p.add_argument("--gt-dir", dest="gt_dir", required=True)
    p.add_argument("--overlap-dir", dest="overlap_dir", default=None,
                   help="mask ground truth outside these overlap masks")
    p.add_argument("--group-by", dest="group_by", default=None,
                   help="meta key to aggregate by (e.g. stride)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (BundleError, ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
