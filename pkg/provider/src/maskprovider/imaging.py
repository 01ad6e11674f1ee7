"""Self-contained raster helpers for the provider backends."""

from __future__ import annotations

import numpy as np
from PIL import Image
from scipy import ndimage


def read_gray(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def write_mask(path, bits: np.ndarray) -> None:
    Image.fromarray(np.where(bits, 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) >= 128


def otsu_threshold(img: np.ndarray) -> float:
    """Histogram threshold maximizing inter-class variance."""
    hist = np.bincount(img.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    omega = np.cumsum(hist) / total
    mu = np.cumsum(hist * np.arange(256)) / total
    mu_total = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = (mu_total * omega - mu) ** 2 / (omega * (1.0 - omega))
    sigma_b[~np.isfinite(sigma_b)] = 0.0
    return float(np.argmax(sigma_b))


def remove_small(bits: np.ndarray, min_size: int) -> np.ndarray:
    labels, n = ndimage.label(bits, structure=np.ones((3, 3), bool))
    if n == 0:
        return bits
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    keep = sizes >= min_size
    keep[0] = False
    return keep[labels]


def resize_bilinear(img: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Half-pixel-center bilinear resample of a uint8 raster."""
    h, w = img.shape

    def coords(src, dst):
        c = np.clip((np.arange(dst) + 0.5) * (src / dst) - 0.5, 0.0, src - 1.0)
        lo = np.floor(c).astype(np.int64)
        hi = np.minimum(lo + 1, src - 1)
        return lo, hi, c - lo

    r0, r1, fr = coords(h, new_h)
    c0, c1, fc = coords(w, new_w)
    data = img.astype(np.float64)
    top = data[r0][:, c0] * (1 - fc) + data[r0][:, c1] * fc
    bot = data[r1][:, c0] * (1 - fc) + data[r1][:, c1] * fc
    out = top * (1 - fr)[:, None] + bot * fr[:, None]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def resize_nearest_bool(bits: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    h, w = bits.shape
    rows = np.clip(np.floor((np.arange(new_h) + 0.5) * (h / new_h)).astype(int), 0, h - 1)
    cols = np.clip(np.floor((np.arange(new_w) + 0.5) * (w / new_w)).astype(int), 0, w - 1)
    return bits[np.ix_(rows, cols)]


def dilate(bits: np.ndarray) -> np.ndarray:
    return ndimage.binary_dilation(bits, structure=np.ones((3, 3), bool), border_value=0)


def component_count(bits: np.ndarray) -> int:
    _, n = ndimage.label(bits, structure=np.ones((3, 3), bool))
    return int(n)


def patch_origin_from_name(path: str) -> tuple[int, int]:
    """Recover the patch origin from `..._x<X>_y<Y>.png` request names."""
    stem = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    parts = stem.split("_")
    try:
        x = int(parts[-2][1:])
        y = int(parts[-1][1:])
    except (IndexError, ValueError) as e:
        raise ValueError(
            f"cannot recover patch origin from {path!r}; expected ..._x<X>_y<Y>.png"
        ) from e
    return x, y
