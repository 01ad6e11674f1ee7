"""Classical point-prompt generation: find likely-foreground regions by
aggressive brightness thresholding plus cleanup, then sample positive point
prompts from them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import BinaryMask, GrayImage, median_filter, morph, remove_small_objects, threshold


@dataclass(frozen=True)
class PromptConfig:
    quantile: float = 0.95
    min_object_size: int = 32
    morph_radius: int = 1
    n_points: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.quantile < 1.0:
            raise ValueError("quantile must lie in (0,1)")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")


def foreground_seed_mask(img: GrayImage, cfg: PromptConfig | None = None) -> BinaryMask:
    """Conservative bright-structure mask.

    Pipeline: 3x3 median denoise, threshold at the brightness quantile,
    drop small objects, then open and close to smooth boundaries.  If the
    surviving mask covers more than half the image there is no
    distinguishable bright structure and the mask is returned empty.
    """
    cfg = cfg or PromptConfig()
    filtered = median_filter(img, 1)
    t = float(np.quantile(filtered.pixels, cfg.quantile))
    mask = threshold(filtered, t)
    mask = remove_small_objects(mask, cfg.min_object_size)
    if mask.bits.any():
        mask = morph(mask, "open", cfg.morph_radius)
    if mask.bits.any():
        mask = morph(mask, "close", cfg.morph_radius)
    if mask.foreground_count() * 2 > mask.bits.size:
        return BinaryMask(np.zeros_like(mask.bits))
    return mask


def sample_prompts(seed_mask: BinaryMask, cfg: PromptConfig | None = None) -> list[tuple[int, int]]:
    """Sample up to n_points (x, y) positions uniformly without replacement
    from the mask's true pixels; deterministic for a given seed."""
    cfg = cfg or PromptConfig()
    ys, xs = np.nonzero(seed_mask.bits)
    if ys.size == 0:
        return []
    rng = np.random.default_rng(cfg.seed)
    k = min(cfg.n_points, ys.size)
    chosen = rng.choice(ys.size, size=k, replace=False)
    return [(int(xs[i]), int(ys[i])) for i in chosen]
