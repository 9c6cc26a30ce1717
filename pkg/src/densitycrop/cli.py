"""Command-line front end for the density-guided cropping pipeline.

Every stage reads and writes plain files (DMAP rasters, JSON-lines crop
manifests, COCO JSON), so stages can be run, inspected and resumed
independently; `pipeline --oracle` chains them all and evaluates against
ground truth with the built-in oracle detector.

Exit codes: 0 success, 1 pipeline/data error (single line on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataset_io
from .config import ENV_PROFILE, PROFILES, PipelineConfig, default_profile
from .dataset_io import (
    dataset_stats,
    load_dataset,
    load_density,
    read_coco_detections,
    save_density,
    write_coco_detections,
)
from .density import (
    DEFAULT_BETA,
    DEFAULT_FIXED_SIGMA,
    DEFAULT_KNN,
    DEFAULT_TRUNCATION_SIGMAS,
    KERNEL_MODES,
    render_density,
)
from .evaluation import evaluate
from .fusion import DEFAULT_MAX_DETS, DEFAULT_NMS_IOU, FusionParams, MissPolicy, fuse
from .mask_crop import (
    DEFAULT_MIN_CROP_SIZE,
    MaskParams,
    crops_from_mask,
    density_mask,
    read_crop_manifest,
    window_from_stats,
    write_crop_manifest,
)
from .overlay import render_overlay
from .pipeline import build_kernel_spec, run_pipeline
from .remap import (
    DEFAULT_MIN_VISIBILITY,
    backproject_detections,
    crops_to_coco,
    project_annotations,
)


def _add_kernel_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", choices=KERNEL_MODES, default="classwise")
    p.add_argument("--sigma", type=float, default=DEFAULT_FIXED_SIGMA,
                   help="fixed-kernel spread (also the adaptive fallback)")
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--knn", type=int, default=DEFAULT_KNN)
    p.add_argument("--trunc-sigmas", type=float, default=DEFAULT_TRUNCATION_SIGMAS)


def cmd_stats(args) -> int:
    ds = load_dataset(args.ann)
    print(json.dumps(dataset_stats(ds).to_dict(), indent=1))
    return 0


def cmd_gt_density(args) -> int:
    ds = load_dataset(args.ann)
    cfg = PipelineConfig(
        kernel_mode=args.kernel, sigma=args.sigma, beta=args.beta, knn=args.knn,
        truncation_sigmas=args.trunc_sigmas, jobs=args.jobs,
    )
    spec = build_kernel_spec(cfg, ds)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = sorted(ds.images, key=lambda im: im.id)

    def render(image):
        return render_density((image.height, image.width), ds.annotations_for(image.id), spec)

    if args.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rasters = list(pool.map(render, images))
    else:
        rasters = [render(image) for image in images]
    for image, raster in zip(images, rasters):
        save_density(out_dir / f"{image.id}.dmap", raster)
    print(f"wrote {len(images)} density maps to {out_dir}", file=sys.stderr)
    return 0


def cmd_mask(args) -> int:
    den = load_density(args.density)
    if args.window is not None:
        window = (args.window[0], args.window[1])
    elif args.ann is not None:
        window = window_from_stats(dataset_stats(load_dataset(args.ann)))
    else:
        raise ValueError("provide --window H W or --ann to derive the window size")
    mask = density_mask(den, MaskParams(window[0], window[1], args.threshold))
    crops = crops_from_mask(
        mask, args.min_crop, image_id=args.image_id, threshold=args.threshold
    )
    out_mask = Path(args.out_mask) if args.out_mask else Path(args.density).with_suffix(".mask.dmap")
    manifest = Path(args.manifest) if args.manifest else Path(args.density).with_suffix(".crops.jsonl")
    save_density(out_mask, mask.astype(np.float32))
    manifest.write_text(write_crop_manifest(crops))
    print(f"mask {out_mask}, {len(crops)} crops -> {manifest}", file=sys.stderr)
    return 0


def cmd_crop(args) -> int:
    mask = load_density(args.mask) != 0
    crops = crops_from_mask(
        mask, args.min_crop, image_id=args.image_id, threshold=args.threshold
    )
    Path(args.manifest).write_text(write_crop_manifest(crops))
    if args.image is not None:
        from PIL import Image

        out_dir = Path(args.out_dir or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        with Image.open(args.image) as im:
            for k, crop in enumerate(crops):
                r = crop.rect
                box = (int(r.x), int(r.y), int(r.x + r.w), int(r.y + r.h))
                im.crop(box).save(out_dir / f"{Path(args.image).stem}_crop{k}.png")
    print(f"{len(crops)} crops -> {args.manifest}", file=sys.stderr)
    return 0


def cmd_remap(args) -> int:
    ds = load_dataset(args.ann)
    rows = read_crop_manifest(Path(args.manifest).read_text())
    crop_sets = []
    for crop_index, crop in rows:
        anns = ds.annotations_for(crop.image_id)
        crop_sets.append(
            (crop_index, crop, project_annotations(crop, anns, args.min_visibility))
        )
    Path(args.out).write_bytes(crops_to_coco(ds, crop_sets))
    print(f"{len(crop_sets)} crop records -> {args.out}", file=sys.stderr)
    return 0


def cmd_fuse(args) -> int:
    ds = load_dataset(args.ann)
    global_dets = read_coco_detections(Path(args.global_dets).read_bytes())
    crop_dets_local = read_coco_detections(Path(args.crops).read_bytes())
    rows = read_crop_manifest(Path(args.manifest).read_text())
    restored = []
    for det in crop_dets_local:
        order = det.image_id - 1
        if not (0 <= order < len(rows)):
            raise ValueError(f"crop detection references unknown crop image {det.image_id}")
        crop_index, crop = rows[order]
        image = ds.image_by_id(crop.image_id)
        restored.extend(
            backproject_detections(
                crop,
                [replace(det, image_id=crop.image_id)],
                args.scale,
                image_size=(image.height, image.width),
                crop_index=crop_index,
                drop_border=args.drop_border,
            )
        )
    fused = fuse(
        global_dets,
        restored,
        FusionParams(nms_iou=args.nms, max_dets_per_image=args.max_dets),
    )
    Path(args.out).write_bytes(write_coco_detections(fused))
    print(f"fused {len(fused)} detections -> {args.out}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    ds = load_dataset(args.ann)
    dets = read_coco_detections(Path(args.dets).read_bytes())
    print(json.dumps(evaluate(dets, ds).to_dict(), indent=1))
    return 0


def cmd_render(args) -> int:
    canvas = None
    size = None
    if args.image is not None:
        from PIL import Image

        with Image.open(args.image) as im:
            canvas = np.asarray(im.convert("RGB"))
    elif args.size is not None:
        size = (args.size[0], args.size[1])
    density = load_density(args.density) if args.density else None
    mask = load_density(args.mask) != 0 if args.mask else None
    crops = []
    if args.manifest:
        for _idx, crop in read_crop_manifest(Path(args.manifest).read_text()):
            if args.image_id is None or crop.image_id == args.image_id:
                crops.append(crop)
    annotations = []
    if args.ann:
        ds = load_dataset(args.ann)
        annotations = [
            a for a in ds.annotations
            if args.image_id is None or a.image_id == args.image_id
        ]
    if canvas is None and size is None:
        for layer in (density, mask):
            if layer is not None:
                size = layer.shape
                break
        else:
            raise ValueError("provide --image, --size, --density or --mask")
    png = render_overlay(
        canvas=canvas, size=size, density=density, mask=mask,
        crops=crops, annotations=annotations,
    )
    Path(args.out).write_bytes(png)
    print(f"overlay -> {args.out}", file=sys.stderr)
    return 0


def cmd_pipeline(args) -> int:
    if not args.oracle:
        raise ValueError(
            "pipeline requires --oracle (no trained detector is bundled); "
            "run the individual stages for externally produced detections"
        )
    ds = load_dataset(args.ann)
    miss = None
    if args.miss_small or args.miss_medium or args.miss_large:
        miss = MissPolicy(
            drop_small=args.miss_small, drop_medium=args.miss_medium,
            drop_large=args.miss_large, seed=args.seed,
        )
    cfg = PipelineConfig(
        profile=args.profile,
        kernel_mode=args.kernel,
        sigma=args.sigma,
        beta=args.beta,
        knn=args.knn,
        truncation_sigmas=args.trunc_sigmas,
        threshold=args.threshold,
        window=tuple(args.window) if args.window else None,
        min_crop=args.min_crop,
        nms_iou=args.nms,
        max_dets=args.max_dets,
        min_visibility=args.min_visibility,
        grid=tuple(args.grid) if args.grid else None,
        include_global=not args.no_global,
        miss=miss,
        seed=args.seed,
        jobs=args.jobs,
    )
    result = run_pipeline(ds, cfg)

    if args.out is not None:
        out = Path(args.out)
        (out / "density").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)
        (out / "stats.json").write_text(
            json.dumps(dataset_stats(ds).to_dict(), indent=1)
        )
        all_crops = []
        crop_sets = []
        crop_dets_synthetic = []
        order = 0
        for art in result.per_image:
            if art.density is not None:
                save_density(out / "density" / f"{art.image.id}.dmap", art.density)
            if art.mask is not None:
                save_density(out / "masks" / f"{art.image.id}.dmap", art.mask.astype(np.float32))
            anns = ds.annotations_for(art.image.id)
            for index, (crop, local) in enumerate(zip(art.crops, art.crop_local_dets)):
                all_crops.append(crop)
                crop_sets.append(
                    (index, crop, project_annotations(crop, anns, cfg.min_visibility))
                )
                synthetic = order + 1
                crop_dets_synthetic.extend(replace(d, image_id=synthetic) for d in local)
                order += 1
        (out / "crops.jsonl").write_text(write_crop_manifest(all_crops))
        (out / "crops_coco.json").write_bytes(crops_to_coco(ds, crop_sets))
        all_global = [d for art in result.per_image for d in art.global_dets]
        (out / "global_dets.json").write_bytes(write_coco_detections(all_global))
        (out / "crop_dets.json").write_bytes(write_coco_detections(crop_dets_synthetic))
        (out / "fused.json").write_bytes(write_coco_detections(result.fused))
        (out / "report.json").write_text(
            json.dumps(result.eval_result.to_dict(), indent=1)
        )
    print(json.dumps(result.eval_result.to_dict(), indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densitycrop",
        description="density-map guided cropping pipeline for aerial object detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="per-category and global object scale statistics")
    p.add_argument("--ann", required=True, help="COCO annotation JSON")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gt-density", help="render ground-truth density maps")
    p.add_argument("--ann", required=True)
    p.add_argument("--out", required=True, help="output directory for .dmap files")
    _add_kernel_flags(p)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_gt_density)

    p = sub.add_parser("mask", help="density mask + crop manifest for one density map")
    p.add_argument("--density", required=True, help="input .dmap raster")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--window", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--ann", help="derive window size from these annotations")
    p.add_argument("--min-crop", type=int, default=DEFAULT_MIN_CROP_SIZE)
    p.add_argument("--image-id", type=int, default=0)
    p.add_argument("--out-mask")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("crop", help="extract crop regions from a mask")
    p.add_argument("--mask", required=True, help="mask .dmap (0/1)")
    p.add_argument("--manifest", required=True, help="output JSON-lines manifest")
    p.add_argument("--min-crop", type=int, default=DEFAULT_MIN_CROP_SIZE)
    p.add_argument("--image-id", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.0, help="provenance only")
    p.add_argument("--image", help="optionally cut crop images from this file")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_crop)

    p = sub.add_parser("remap", help="project annotations into crop-local COCO JSON")
    p.add_argument("--ann", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-visibility", type=float, default=DEFAULT_MIN_VISIBILITY)
    p.set_defaults(func=cmd_remap)

    p = sub.add_parser("fuse", help="backproject crop detections and fuse with global ones")
    p.add_argument("--global", dest="global_dets", required=True,
                   help="COCO results JSON of full-image detections")
    p.add_argument("--crops", required=True,
                   help="COCO results JSON of crop-local detections (manifest image ids)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ann", required=True)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--nms", type=float, default=DEFAULT_NMS_IOU)
    p.add_argument("--max-dets", type=int, default=DEFAULT_MAX_DETS)
    p.add_argument("--drop-border", action="store_true",
                   help="discard crop detections touching their crop border")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="COCO-style AP report")
    p.add_argument("--dets", required=True)
    p.add_argument("--ann", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="overlay density/mask/crops/annotations as PNG")
    p.add_argument("--image", help="background image")
    p.add_argument("--size", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--density")
    p.add_argument("--mask")
    p.add_argument("--manifest")
    p.add_argument("--ann")
    p.add_argument("--image-id", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("pipeline", help="full run: density -> crops -> oracle -> fusion -> eval")
    p.add_argument("--ann", required=True)
    p.add_argument("--oracle", action="store_true",
                   help="use the ground-truth oracle as the detector")
    p.add_argument("--out", help="directory for intermediate artifacts")
    p.add_argument("--profile", choices=sorted(PROFILES), default=default_profile(),
                   help=f"dataset preset (env {ENV_PROFILE} overrides the default)")
    _add_kernel_flags(p)
    p.add_argument("--threshold", type=float)
    p.add_argument("--window", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--min-crop", type=int)
    p.add_argument("--nms", type=float, default=DEFAULT_NMS_IOU)
    p.add_argument("--max-dets", type=int, default=DEFAULT_MAX_DETS)
    p.add_argument("--min-visibility", type=float, default=DEFAULT_MIN_VISIBILITY)
    p.add_argument("--grid", type=int, nargs=2, metavar=("R", "C"),
                   help="uniform-grid baseline instead of density crops")
    p.add_argument("--no-global", action="store_true",
                   help="crops-only detection (no full-image pass)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--miss-small", type=float, default=0.0)
    p.add_argument("--miss-medium", type=float, default=0.0)
    p.add_argument("--miss-large", type=float, default=0.0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except Exception as e:  # noqa: BLE001 - single-line machine-parsable errors
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
