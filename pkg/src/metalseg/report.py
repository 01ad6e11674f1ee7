"""Evaluation report assembly: JSON document, per-image CSV, and figures.

The evaluate command writes three artifacts side by side: the JSON report
(the machine-readable contract), a delimited per-image table, and two
matplotlib figures (per-image error scatter, aggregate error breakdown).
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .metrics import EsdReport, PixelMetrics, _pixel_metrics_from_confusion, combine_esd_reports


@dataclass(frozen=True)
class ImageResult:
    image_id: str
    esd: EsdReport
    pixels: PixelMetrics
    confusion: tuple[int, int, int, int]  # tp, tn, fp, fn


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp for reproducible report bytes.
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else int(time.time())
    return datetime.fromtimestamp(t, tz=timezone.utc).isoformat()


def build_report(results: list[ImageResult], config_echo: dict) -> dict:
    agg_esd = combine_esd_reports([r.esd for r in results])
    tp = sum(r.confusion[0] for r in results)
    tn = sum(r.confusion[1] for r in results)
    fp = sum(r.confusion[2] for r in results)
    fn = sum(r.confusion[3] for r in results)
    pooled = _pixel_metrics_from_confusion(tp, tn, fp, fn) if results else PixelMetrics(1.0, 1.0, 1.0)
    return {
        "per_image": [
            {"image_id": r.image_id, "esd": r.esd.to_dict(), "pixels": r.pixels.to_dict()}
            for r in results
        ],
        "aggregate": {"esd": agg_esd.to_dict(), "pixels": pooled.to_dict()},
        "config": config_echo,
        "tool_version": __version__,
        "timestamp": _timestamp(),
    }


def write_csv(path, results: list[ImageResult]) -> None:
    header = (
        "image_id,opens,shorts,false_positives,false_negatives,total,"
        "gt_line_count,rate_percent,pixel_accuracy,dice,iou"
    )
    lines = [header]
    for r in results:
        rate = "" if r.esd.rate_percent is None else format(r.esd.rate_percent, ".9g")
        lines.append(
            f"{r.image_id},{r.esd.opens},{r.esd.shorts},{r.esd.false_positives},"
            f"{r.esd.false_negatives},{r.esd.total},{r.esd.gt_line_count},{rate},"
            f"{format(r.pixels.pixel_accuracy, '.9g')},{format(r.pixels.dice, '.9g')},"
            f"{format(r.pixels.iou, '.9g')}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def render_figures(out_dir, results: list[ImageResult]) -> list[str]:
    """Write the per-image error scatter and the aggregate breakdown bars."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(7, 4))
    totals = [r.esd.total for r in results]
    ax.plot(range(len(totals)), totals, "o", markersize=4)
    ax.set_xlabel("image index")
    ax.set_ylabel("ESD errors")
    ax.set_title("ESD errors per image")
    fig.tight_layout()
    path = out_dir / "esd_per_image.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(str(path))

    agg = combine_esd_reports([r.esd for r in results])
    fig, ax = plt.subplots(figsize=(5, 4))
    kinds = ["opens", "shorts", "FPs", "FNs"]
    counts = [agg.opens, agg.shorts, agg.false_positives, agg.false_negatives]
    ax.bar(kinds, counts)
    ax.set_ylabel("count")
    ax.set_title("aggregate ESD error breakdown")
    fig.tight_layout()
    path = out_dir / "error_breakdown.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(str(path))
    return written
