"""Command-line interface.

Subcommands: evaluate, fuse, betti-match, persistence, prompts, synth.
All outputs are deterministic given flags and seeds; JSON is byte-stable
(sorted keys, floats at 9 significant digits).  Errors leave a single-line
JSON object on stderr and a nonzero exit code.

Config files are flat ``key = value`` text; command-line flags override
file values.  Loss and matching defaults (alpha 0.6, lambda 0.375,
sublevel filtration, length threshold 0.345, push enabled, augmentation
probability 0.385 / intensity 0.61) are the tuned operating point.
"""

from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

from . import __version__
from .bettiloss import BettiMatchConfig, betti_loss
from .fileio import (
    read_gray_png,
    read_likelihood,
    read_mask_png,
    stable_json_dumps,
    write_f32,
    write_gray_png,
    write_mask_png,
)
from .fusion import FusionConfig, MaskProvider, run_pipeline
from .metrics import esd_errors, pixel_metrics
from .persistence import barcode
from .prompts import PromptConfig, foreground_seed_mask, sample_prompts
from .report import ImageResult, build_report, render_figures, write_csv
from .synth import DefectSpec, SynthConfig, generate, inject_defects


class CliError(RuntimeError):
    pass


def _parse_scalar(text: str):
    t = text.strip()
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    if t.startswith('"') and t.endswith('"') and len(t) >= 2:
        return t[1:-1]
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    if "," in t:
        return tuple(_parse_scalar(part) for part in t.split(","))
    return t


def load_config(path) -> dict:
    """Flat key = value configuration text; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        values[key.strip()] = _parse_scalar(val)
    return values


def _bar_sort_key(bar_dict):
    return (
        bar_dict["dim"],
        bar_dict["birth"],
        bar_dict["death"],
        tuple(bar_dict["birth_pixel"]),
    )


def _write_json(path, obj) -> None:
    Path(path).write_text(stable_json_dumps(obj) + "\n")


def cmd_evaluate(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    pred_files = {p.name: p for p in sorted(pred_dir.glob("*.png"))}
    gt_files = {p.name: p for p in sorted(gt_dir.glob("*.png"))}
    orphans = sorted(set(pred_files) ^ set(gt_files))
    if orphans:
        raise CliError(f"unpaired mask files: {', '.join(orphans)}")
    if not pred_files:
        raise CliError(f"no PNG masks found in {pred_dir}")
    results = []
    for name in sorted(pred_files):
        pred = read_mask_png(pred_files[name])
        gt = read_mask_png(gt_files[name])
        if pred.bits.shape != gt.bits.shape:
            raise CliError(
                f"{name}: prediction is {pred.bits.shape[::-1]}, ground truth is {gt.bits.shape[::-1]}"
            )
        esd = esd_errors(pred, gt, min_overlap=args.min_overlap)
        pm = pixel_metrics(pred, gt)
        tp = int((pred.bits & gt.bits).sum())
        tn = int((~pred.bits & ~gt.bits).sum())
        fp = int((pred.bits & ~gt.bits).sum())
        fn = int((~pred.bits & gt.bits).sum())
        results.append(ImageResult(name, esd, pm, (tp, tn, fp, fn)))
    config_echo = {"min_overlap": args.min_overlap, "pred_dir": str(pred_dir), "gt_dir": str(gt_dir)}
    report = build_report(results, config_echo)
    out = Path(args.out_report)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, report)
    write_csv(out.with_suffix(".csv"), results)
    if not args.no_figures:
        render_figures(out.parent, results)
    return 0


def _fusion_config(values: dict) -> FusionConfig:
    kwargs = {}
    for key in (
        "patch_size",
        "min_overlap_fraction",
        "speckle_max_size",
        "speckle_count_threshold",
        "speckle_count_threshold_b",
        "agreement_threshold",
    ):
        if key in values:
            kwargs[key] = values[key]
    return FusionConfig(**kwargs)


def cmd_fuse(args) -> int:
    image = read_gray_png(args.image)
    values = load_config(args.config) if args.config else {}
    cfg = _fusion_config(values)
    workdir = args.workdir or tempfile.mkdtemp(prefix="metalseg-fuse-")
    with MaskProvider(args.provider_full, timeout=args.timeout, name="provider-full") as pf:
        with MaskProvider(args.provider_patch, timeout=args.timeout, name="provider-patch") as pp:
            result = run_pipeline(image, pf, pp, cfg, seed=args.seed, workdir=workdir)
    write_mask_png(args.out_mask, result.final_mask)
    flags = {
        "flagged_regions": [list(r) for r in result.flagged_regions],
        "decisions": [d.to_dict() for d in result.decisions],
        "seed": args.seed,
        "config": {
            "patch_size": cfg.patch_size,
            "min_overlap_fraction": cfg.min_overlap_fraction,
            "speckle_max_size": cfg.speckle_max_size,
            "speckle_count_threshold": cfg.speckle_count_threshold,
            "agreement_threshold": cfg.agreement_threshold,
        },
    }
    _write_json(args.out_flags, flags)
    return 0


def _betti_config(values: dict, args) -> BettiMatchConfig:
    kwargs = {}
    if "filtration_type" in values:
        kwargs["filtration_type"] = values["filtration_type"]
    if "barcode_length_threshold" in values:
        kwargs["barcode_length_threshold"] = values["barcode_length_threshold"]
    if "push_unmatched_to_1_0" in values:
        kwargs["push_unmatched_to_1_0"] = values["push_unmatched_to_1_0"]
    if args.filtration_type:
        kwargs["filtration_type"] = args.filtration_type
    if args.length_threshold is not None:
        kwargs["barcode_length_threshold"] = args.length_threshold
    if args.push is not None:
        kwargs["push_unmatched_to_1_0"] = args.push
    return BettiMatchConfig(**kwargs)


def _term_sums(result, cfg: BettiMatchConfig) -> dict:
    strength = cfg.filtration_type == "superlevel"
    matched = sum(
        (lb.birth - gb.birth) ** 2 + (lb.death - gb.death) ** 2 for gb, lb in result.matched
    )
    unmatched_pred = 0.0
    for b in result.unmatched_pred:
        if cfg.push_unmatched_to_1_0:
            if strength:
                unmatched_pred += (b.birth - 1.0) ** 2 + b.death**2
            else:
                unmatched_pred += b.birth**2 + (b.death - 1.0) ** 2
        else:
            unmatched_pred += (b.birth - b.death) ** 2 / 2.0
    unmatched_gt = sum((b.birth - b.death) ** 2 for b in result.unmatched_gt)
    return {"matched": matched, "unmatched_pred": unmatched_pred, "unmatched_gt": unmatched_gt}


def cmd_betti_match(args) -> int:
    gt = read_likelihood(args.gt_raster)
    pred = read_likelihood(args.pred_raster)
    values = load_config(args.config) if args.config else {}
    cfg = _betti_config(values, args)
    result = betti_loss(gt, pred, cfg)
    doc = {
        "loss": result.loss,
        "breakdown": _term_sums(result, cfg),
        "filtration_type": cfg.filtration_type,
        "barcode_length_threshold": cfg.barcode_length_threshold,
        "push_unmatched_to_1_0": cfg.push_unmatched_to_1_0,
        "matched": [
            {"gt": gb.to_dict(), "pred": lb.to_dict()}
            for gb, lb in sorted(
                result.matched, key=lambda pair: _bar_sort_key(pair[0].to_dict())
            )
        ],
        "unmatched_pred": sorted(
            (b.to_dict() for b in result.unmatched_pred), key=_bar_sort_key
        ),
        "unmatched_gt": sorted((b.to_dict() for b in result.unmatched_gt), key=_bar_sort_key),
    }
    _write_json(args.out_json, doc)
    if args.grad:
        write_f32(args.grad, result.grad)
    return 0


def cmd_persistence(args) -> int:
    raster = read_likelihood(args.raster)
    bc = barcode(raster.values, args.filtration)
    doc = {
        "filtration": bc.filtration,
        "width": bc.source_dims[0],
        "height": bc.source_dims[1],
        "bars": sorted((b.to_dict() for b in bc.bars), key=_bar_sort_key),
    }
    _write_json(args.out_json, doc)
    return 0


def _prompt_config(values: dict, seed) -> PromptConfig:
    kwargs = {}
    for key in ("quantile", "min_object_size", "morph_radius", "n_points"):
        if key in values:
            kwargs[key] = values[key]
    if seed is not None:
        kwargs["seed"] = seed
    elif "seed" in values:
        kwargs["seed"] = values["seed"]
    return PromptConfig(**kwargs)


def cmd_prompts(args) -> int:
    image = read_gray_png(args.image)
    values = load_config(args.config) if args.config else {}
    cfg = _prompt_config(values, args.seed)
    mask = foreground_seed_mask(image, cfg)
    points = sample_prompts(mask, cfg)
    _write_json(args.out_json, [[x, y] for x, y in points])
    return 0


def _synth_config(values: dict, seed: int) -> SynthConfig:
    kwargs = {"seed": seed}
    for key in (
        "width",
        "height",
        "line_width_range",
        "line_count_range",
        "line_brightness",
        "background_brightness",
        "noise_sigma",
        "blur_sigma",
        "routing",
    ):
        if key in values:
            kwargs[key] = values[key]
    return SynthConfig(**kwargs)


def _parse_defects(text: str, dots: int) -> list[DefectSpec]:
    specs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        kind, _, count = item.partition("=")
        params = {"dots": dots} if kind == "speckle_field" else {}
        specs.append(DefectSpec(kind.strip(), int(count or 1), params))
    return specs


def cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    values = load_config(args.config) if args.config else {}
    specs = _parse_defects(args.defects, args.speckle_dots) if args.defects else []
    entries = []
    for i in range(args.count):
        seed = args.seed + i
        cfg = _synth_config(values, seed)
        image, gt, line_count = generate(cfg)
        delta = None
        if specs:
            image, gt, delta = inject_defects(image, gt, specs, seed=seed)
        image_name = f"image_{i:04d}.png"
        gt_name = f"gt_{i:04d}.png"
        write_gray_png(out_dir / image_name, image)
        write_mask_png(out_dir / gt_name, gt)
        entries.append(
            {
                "image": image_name,
                "gt": gt_name,
                "seed": seed,
                "line_count": line_count,
                "defects": [
                    {"kind": s.kind, "count": s.count, "params": s.params} for s in specs
                ],
                "expected_esd_delta": delta.to_dict() if delta else None,
            }
        )
    manifest = {
        "config": {
            "width": _synth_config(values, 0).width,
            "height": _synth_config(values, 0).height,
            "seed": args.seed,
            "count": args.count,
        },
        "images": entries,
    }
    _write_json(out_dir / "manifest.json", manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metalseg",
        description="Metal-line segmentation evaluation, topology loss, and multi-scale fusion",
    )
    parser.add_argument("--version", action="version", version=f"metalseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score predicted masks against ground truth")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("out_report", help="JSON report path; CSV and figures land beside it")
    p.add_argument("--min-overlap", type=int, default=1,
                   help="pixels of overlap required to connect components (default 1)")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fuse", help="multi-scale fusion with two mask providers")
    p.add_argument("image")
    p.add_argument("out_mask")
    p.add_argument("out_flags")
    p.add_argument("--provider-full", required=True, help="command for the full-image provider")
    p.add_argument("--provider-patch", required=True, help="command for the patch provider")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout", type=float, default=300.0,
                   help="provider request timeout in seconds (default 300)")
    p.add_argument("--workdir", default=None, help="directory for protocol image files")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("betti-match", help="topology matching loss between two rasters")
    p.add_argument("gt_raster", help="PNG (values/255) or MLF1 float raster")
    p.add_argument("pred_raster")
    p.add_argument("out_json")
    p.add_argument("--config", default=None)
    p.add_argument("--grad", default=None, help="write the gradient as an MLF1 raster")
    p.add_argument("--filtration-type", choices=("sublevel", "superlevel", "bothlevels"),
                   default=None, help="tuned default: sublevel")
    p.add_argument("--length-threshold", type=float, default=None,
                   help="barcode length threshold (tuned default: 0.345)")
    push = p.add_mutually_exclusive_group()
    push.add_argument("--push", dest="push", action="store_true", default=None,
                      help="push unmatched births to 1 and deaths to 0 (tuned default)")
    push.add_argument("--no-push", dest="push", action="store_false",
                      help="pull unmatched endpoints together instead")
    p.set_defaults(func=cmd_betti_match)

    p = sub.add_parser("persistence", help="barcode of a scalar raster")
    p.add_argument("raster")
    p.add_argument("out_json")
    p.add_argument("--filtration", choices=("sublevel", "superlevel"), default="sublevel")
    p.set_defaults(func=cmd_persistence)

    p = sub.add_parser("prompts", help="foreground point prompts for an image")
    p.add_argument("image")
    p.add_argument("out_json")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_prompts)

    p = sub.add_parser("synth", help="generate synthetic images with ground truth")
    p.add_argument("out_dir")
    p.add_argument("--config", default=None)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--defects", default=None,
                   help="e.g. 'bridge=2,cut=1,speckle_field=3'")
    p.add_argument("--speckle-dots", type=int, default=5,
                   help="dots per speckle_field defect (default 5)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, RuntimeError) as e:
        sys.stderr.write(stable_json_dumps({"error": str(e)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
