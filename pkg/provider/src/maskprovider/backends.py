"""Segmentation backends.

``ThresholdBackend`` is the always-available classical reference: Otsu
thresholding plus small-object removal, with patch requests upscaled to the
native model resolution and the mask scaled back.  The mock backends
reproduce the failure classes the fusion stage must handle and are
configured through environment variables (``MASKPROVIDER_GT`` points at the
fixture ground-truth PNG).
"""

from __future__ import annotations

import os

import numpy as np

from .imaging import (
    dilate,
    otsu_threshold,
    patch_origin_from_name,
    read_gray,
    read_mask,
    remove_small,
    resize_bilinear,
    resize_nearest_bool,
)

GT_ENV = "MASKPROVIDER_GT"
SPECKLES_ENV = "MASKPROVIDER_SPECKLES"


class ThresholdBackend:
    """Otsu threshold + cleanup; score is the fraction of mask pixels that
    clear the threshold by a safety margin (a confidence proxy)."""

    def __init__(self, native_size: int = 1024, min_object_size: int = 16, score_margin: int = 10):
        self.native_size = native_size
        self.min_object_size = min_object_size
        self.score_margin = score_margin

    def segment(self, image_path: str, points, scale: str) -> list[tuple[np.ndarray, float]]:
        img = read_gray(image_path)
        h, w = img.shape
        work = img
        if scale == "patch":
            work = resize_bilinear(img, self.native_size, self.native_size)
        t = otsu_threshold(work)
        bits = work > t
        bits = remove_small(bits, self.min_object_size)
        if scale == "patch":
            bits = resize_nearest_bool(bits, h, w)
        n_fg = int(bits.sum())
        if n_fg:
            confident = int((img[bits] > t + self.score_margin).sum())
            score = confident / n_fg
        else:
            score = 0.0
        return [(bits, score)]


class _FixtureBackend:
    def __init__(self, gt_path: str | None = None):
        gt_path = gt_path or os.environ.get(GT_ENV)
        if not gt_path or not os.path.exists(gt_path):
            raise RuntimeError(
                f"mock backend needs a ground-truth fixture: set {GT_ENV} to a PNG path"
            )
        self.gt = read_mask(gt_path)

    def _region(self, image_path: str, scale: str) -> np.ndarray:
        img = read_gray(image_path)
        h, w = img.shape
        if scale == "full":
            if self.gt.shape != (h, w):
                raise RuntimeError(
                    f"fixture is {self.gt.shape}, request image is {(h, w)}"
                )
            return self.gt
        x, y = patch_origin_from_name(image_path)
        region = self.gt[y : y + h, x : x + w]
        if region.shape != (h, w):
            raise RuntimeError(f"patch at ({x},{y}) size {(h, w)} falls outside the fixture")
        return region


class EchoGtBackend(_FixtureBackend):
    """Returns the fixture ground truth (or its patch crop) verbatim."""

    def segment(self, image_path, points, scale):
        return [(self._region(image_path, scale).copy(), 1.0)]


class InjectSpecklesBackend(_FixtureBackend):
    """Ground truth plus exactly N isolated one-pixel speckles."""

    def __init__(self, gt_path=None, speckles: int | None = None):
        super().__init__(gt_path)
        if speckles is None:
            speckles = int(os.environ.get(SPECKLES_ENV, "60"))
        self.speckles = speckles

    def segment(self, image_path, points, scale):
        bits = self._region(image_path, scale).copy()
        blocked = dilate(bits)
        placed = 0
        h, w = bits.shape
        for y in range(1, h - 1, 2):
            for x in range(1, w - 1, 2):
                if placed == self.speckles:
                    break
                if not blocked[y, x]:
                    bits[y, x] = True
                    blocked[max(0, y - 1) : y + 2, max(0, x - 1) : x + 2] = True
                    placed += 1
            if placed == self.speckles:
                break
        if placed < self.speckles:
            raise RuntimeError(f"could only place {placed} of {self.speckles} speckles")
        return [(bits, 0.9)]


class MergeLinesBackend(_FixtureBackend):
    """Dilates the ground truth until two designated lines connect (the
    downscaling failure mode of full-image models on fine structures).
    The designated pair is the fixture's two largest components."""

    def __init__(self, gt_path=None, max_rounds: int = 64):
        super().__init__(gt_path)
        from scipy import ndimage

        labels, n = ndimage.label(self.gt, structure=np.ones((3, 3), bool))
        if n < 2:
            raise RuntimeError("fixture needs at least two lines to merge")
        sizes = np.bincount(labels.ravel())[1:]
        first, second = np.argsort(sizes)[::-1][:2] + 1
        a_mask, b_mask = labels == first, labels == second
        merged = self.gt.copy()
        for _ in range(max_rounds):
            lab2, _ = ndimage.label(merged, structure=np.ones((3, 3), bool))
            joint = set(np.unique(lab2[a_mask])) & set(np.unique(lab2[b_mask]))
            if joint:
                break
            merged = dilate(merged)
        else:
            raise RuntimeError("dilation did not connect the designated lines")
        self.merged = merged

    def segment(self, image_path, points, scale):
        img = read_gray(image_path)
        h, w = img.shape
        if scale == "full":
            return [(self.merged.copy(), 0.9)]
        x, y = patch_origin_from_name(image_path)
        return [(self.merged[y : y + h, x : x + w].copy(), 0.9)]


def make_backend(name: str, native_size: int = 1024):
    if name == "threshold":
        return ThresholdBackend(native_size=native_size)
    if name == "echo_gt":
        return EchoGtBackend()
    if name == "inject_speckles":
        return InjectSpecklesBackend()
    if name == "merge_lines":
        return MergeLinesBackend()
    raise ValueError(f"unknown backend {name!r}")
