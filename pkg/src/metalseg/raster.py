"""Foundational raster types and pixel-level operations.

Everything downstream (metrics, persistence, fusion, prompts) works on the
three raster flavours defined here: grayscale SEM images, binary masks, and
unit-interval likelihood maps.  All operations are pure functions on
immutable inputs; none of them mutates its argument.

Conventions fixed for the whole package:

* foreground connectivity defaults to 8, background/dual connectivity to 4
* morphology treats out-of-bounds pixels as background; ``close`` runs on a
  canvas padded by the structuring radius so a full mask stays full
* component numbering is deterministic: components are ordered by the
  smallest row-major index of their pixels
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class DimensionMismatchError(ValueError):
    """Two rasters that must share a shape do not."""


def _require_same_shape(a, b) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"raster dimensions differ: {a.shape[1]}x{a.shape[0]} vs {b.shape[1]}x{b.shape[0]}"
        )


def connectivity_structure(connectivity: int) -> np.ndarray:
    """3x3 structuring element for 4- or 8-connectivity."""
    if connectivity == 4:
        return np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    if connectivity == 8:
        return np.ones((3, 3), dtype=bool)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


@dataclass(frozen=True)
class GrayImage:
    """Single-channel raster, either uint8 in [0,255] or float in [0,1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise ValueError("GrayImage requires a non-empty 2-D pixel array")
        if px.dtype == np.uint8:
            pass
        elif np.issubdtype(px.dtype, np.floating):
            px = px.astype(np.float64)
            if not np.isfinite(px).all():
                raise ValueError("float GrayImage pixels must be finite")
            if px.min() < 0.0 or px.max() > 1.0:
                raise ValueError("float GrayImage pixels must lie in [0,1]")
        else:
            raise ValueError(f"unsupported GrayImage dtype {px.dtype}")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def is_float(self) -> bool:
        return self.pixels.dtype != np.uint8


@dataclass(frozen=True)
class BinaryMask:
    """Segmentation mask; True marks metal-line foreground."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2 or b.size == 0:
            raise ValueError("BinaryMask requires a non-empty 2-D array")
        b = b.astype(bool).copy()
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def foreground_count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class LikelihoodMap:
    """Per-pixel foreground likelihood, foreground-high, values in [0,1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError("LikelihoodMap requires a non-empty 2-D array")
        if not np.isfinite(v).all():
            raise ValueError("LikelihoodMap values must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("LikelihoodMap values must lie in [0,1]")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_mask(cls, mask: BinaryMask) -> "LikelihoodMap":
        return cls(mask.bits.astype(np.float64))


@dataclass(frozen=True)
class ComponentLabeling:
    """Connected-component decomposition of a binary mask.

    ``labels`` holds 0 for background and 1..component_count for foreground,
    numbered by the smallest row-major pixel index of each component.
    """

    labels: np.ndarray
    component_count: int
    sizes: np.ndarray
    connectivity: int = field(default=8)

    def __post_init__(self):
        lab = np.asarray(self.labels)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "sizes", np.asarray(self.sizes, dtype=np.int64))


def label_components(mask: BinaryMask, connectivity: int = 8) -> ComponentLabeling:
    """Label maximal connected foreground regions deterministically."""
    structure = connectivity_structure(connectivity)
    raw, n = ndimage.label(mask.bits, structure=structure)
    if n == 0:
        return ComponentLabeling(
            labels=np.zeros(mask.bits.shape, dtype=np.int32),
            component_count=0,
            sizes=np.zeros(0, dtype=np.int64),
            connectivity=connectivity,
        )
    # Renumber so component k has the k-th smallest first row-major pixel.
    flat = raw.ravel()
    values, first = np.unique(flat, return_index=True)
    order_values = values[values > 0]
    order_first = first[values > 0]
    rank = np.argsort(order_first, kind="stable")
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[order_values[rank]] = np.arange(1, n + 1, dtype=np.int32)
    labels = remap[raw]
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    return ComponentLabeling(
        labels=labels, component_count=int(n), sizes=sizes, connectivity=connectivity
    )


def threshold(img: GrayImage, t: float) -> BinaryMask:
    """Binarize: a bit is set iff the pixel value is >= t."""
    return BinaryMask(img.pixels >= t)


def morph(mask: BinaryMask, op: str, radius: int = 1) -> BinaryMask:
    """Binary morphology with a square structuring element of side 2*radius+1.

    Out-of-bounds pixels count as background.  ``close`` is evaluated on a
    canvas padded by ``radius`` so dilation may spill over the border before
    the erosion step; the result is cropped back.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    se = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    bits = mask.bits
    if op == "erode":
        out = ndimage.binary_erosion(bits, structure=se, border_value=0)
    elif op == "dilate":
        out = ndimage.binary_dilation(bits, structure=se, border_value=0)
    elif op == "open":
        eroded = ndimage.binary_erosion(bits, structure=se, border_value=0)
        out = ndimage.binary_dilation(eroded, structure=se, border_value=0)
    elif op == "close":
        padded = np.pad(bits, radius, mode="constant", constant_values=False)
        grown = ndimage.binary_dilation(padded, structure=se, border_value=0)
        shrunk = ndimage.binary_erosion(grown, structure=se, border_value=0)
        out = shrunk[radius:-radius, radius:-radius]
    else:
        raise ValueError(f"unknown morphology op {op!r}")
    return BinaryMask(out)


def remove_small_objects(mask: BinaryMask, min_size: int, connectivity: int = 8) -> BinaryMask:
    """Drop connected components smaller than ``min_size`` pixels."""
    if min_size < 1:
        raise ValueError("min_size must be >= 1")
    labeling = label_components(mask, connectivity)
    if labeling.component_count == 0:
        return mask
    keep = np.concatenate(([False], labeling.sizes >= min_size))
    return BinaryMask(keep[labeling.labels])


def median_filter(img: GrayImage, radius: int = 1) -> GrayImage:
    """Median over the (2r+1)^2 neighborhood, border clamped to the edge."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    out = ndimage.median_filter(img.pixels, size=2 * radius + 1, mode="nearest")
    return GrayImage(out)


def _nearest_indices(src: int, dst: int) -> np.ndarray:
    idx = np.floor((np.arange(dst) + 0.5) * (src / dst)).astype(np.int64)
    return np.clip(idx, 0, src - 1)


def resize(img: GrayImage, new_w: int, new_h: int, mode: str = "bilinear") -> GrayImage:
    """Resample with half-pixel-center alignment.

    Nearest replicates pixels exactly for integer scale factors; identity
    resizes are bit-identical in both modes.
    """
    if new_w < 1 or new_h < 1:
        raise ValueError("target dimensions must be >= 1")
    src = img.pixels
    h, w = src.shape
    if mode == "nearest":
        rows = _nearest_indices(h, new_h)
        cols = _nearest_indices(w, new_w)
        return GrayImage(src[np.ix_(rows, cols)])
    if mode != "bilinear":
        raise ValueError(f"unknown resize mode {mode!r}")

    def axis_coords(s: int, d: int):
        c = (np.arange(d) + 0.5) * (s / d) - 0.5
        c = np.clip(c, 0.0, s - 1.0)
        lo = np.floor(c).astype(np.int64)
        hi = np.minimum(lo + 1, s - 1)
        frac = c - lo
        return lo, hi, frac

    r0, r1, fr = axis_coords(h, new_h)
    c0, c1, fc = axis_coords(w, new_w)
    data = src.astype(np.float64)
    top = data[r0][:, c0] * (1 - fc) + data[r0][:, c1] * fc
    bot = data[r1][:, c0] * (1 - fc) + data[r1][:, c1] * fc
    out = top * (1 - fr)[:, None] + bot * fr[:, None]
    if img.is_float:
        return GrayImage(np.clip(out, 0.0, 1.0))
    return GrayImage(np.clip(np.rint(out), 0, 255).astype(np.uint8))
