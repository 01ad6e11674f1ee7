"""Synthetic metal-layer imagery with exact ground truth, defect injection
with known ESD consequences, and the training-time augmentation transforms.

Generated layouts are Manhattan-routed: axis-aligned line segments placed
with at least one pixel of clearance, so every line is its own 8-connected
ground-truth component.  Brightness levels are clamped to keep line pixels
strictly above and background strictly below the construction midpoint;
with blur and noise disabled, thresholding at the midpoint recovers the
ground truth exactly, which is what makes the injected-defect ESD deltas
verifiable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .metrics import EsdReport
from .raster import BinaryMask, GrayImage, label_components


class PlacementError(RuntimeError):
    """Requested geometry cannot be placed without contact."""


@dataclass(frozen=True)
class SynthConfig:
    width: int = 512
    height: int = 512
    line_width_range: tuple[int, int] = (3, 8)
    line_count_range: tuple[int, int] = (6, 12)
    line_brightness: tuple[float, float] = (220.0, 10.0)
    background_brightness: tuple[float, float] = (40.0, 8.0)
    noise_sigma: float = 6.0
    blur_sigma: float = 1.0
    routing: str = "manhattan"
    seed: int = 0

    def __post_init__(self):
        if self.line_brightness[0] <= self.background_brightness[0]:
            raise ValueError("line brightness mean must exceed background mean")
        for lo, hi in (self.line_width_range, self.line_count_range):
            if lo > hi:
                raise ValueError("ranges must be non-empty")
        if self.routing != "manhattan":
            raise ValueError("only manhattan routing is supported")

    @property
    def midpoint(self) -> float:
        return (self.line_brightness[0] + self.background_brightness[0]) / 2.0


@dataclass(frozen=True)
class DefectSpec:
    kind: str  # bridge | cut | speckle_field | shading_blob | outline_only
    count: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        kinds = ("bridge", "cut", "speckle_field", "shading_blob", "outline_only")
        if self.kind not in kinds:
            raise ValueError(f"kind must be one of {kinds}")
        if self.count < 0:
            raise ValueError("count must be >= 0")


@dataclass(frozen=True)
class AugmentConfig:
    intensity: float = 0.61
    probability: float = 0.385
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.intensity <= 1.0:
            raise ValueError("intensity must lie in (0,1]")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must lie in [0,1]")


def _try_place(rng, gt, width_range, w, h):
    """One placement attempt; returns the line rectangle or None.

    A candidate is valid when its 1-pixel halo is clear of existing lines,
    which keeps components pairwise non-adjacent under 8-connectivity.
    """
    horizontal = bool(rng.integers(0, 2))
    lw = int(rng.integers(width_range[0], width_range[1] + 1))
    if horizontal:
        if h < lw or w < 8:
            return None
        length = int(rng.integers(max(8, w // 4), w + 1))
        y0 = int(rng.integers(0, h - lw + 1))
        x0 = int(rng.integers(0, w - length + 1))
        rect = (y0, x0, lw, length)
    else:
        if w < lw or h < 8:
            return None
        length = int(rng.integers(max(8, h // 4), h + 1))
        x0 = int(rng.integers(0, w - lw + 1))
        y0 = int(rng.integers(0, h - length + 1))
        rect = (y0, x0, length, lw)
    y0, x0, rh, rw = rect
    hy0, hx0 = max(0, y0 - 1), max(0, x0 - 1)
    hy1, hx1 = min(h, y0 + rh + 1), min(w, x0 + rw + 1)
    if gt[hy0:hy1, hx0:hx1].any():
        return None
    return rect


def generate(cfg: SynthConfig) -> tuple[GrayImage, BinaryMask, int]:
    """Render one synthetic metal-layer image with its exact ground truth."""
    rng = np.random.default_rng(cfg.seed)
    h, w = cfg.height, cfg.width
    gt = np.zeros((h, w), dtype=bool)
    target = int(rng.integers(cfg.line_count_range[0], cfg.line_count_range[1] + 1))
    placed = 0
    for _ in range(target):
        rect = None
        for _attempt in range(200):
            rect = _try_place(rng, gt, cfg.line_width_range, w, h)
            if rect is not None:
                break
        if rect is None:
            break
        y0, x0, rh, rw = rect
        gt[y0 : y0 + rh, x0 : x0 + rw] = True
        placed += 1
    if placed < cfg.line_count_range[0]:
        raise PlacementError(
            f"could only place {placed} of the required {cfg.line_count_range[0]} lines"
        )

    mid = cfg.midpoint
    bg = float(np.clip(rng.normal(*cfg.background_brightness), 0.0, mid - 1.0))
    image = np.full((h, w), bg, dtype=np.float64)
    labeling = label_components(BinaryMask(gt))
    for k in range(1, labeling.component_count + 1):
        level = float(np.clip(rng.normal(*cfg.line_brightness), mid + 1.0, 255.0))
        image[labeling.labels == k] = level
    if cfg.blur_sigma > 0:
        image = ndimage.gaussian_filter(image, cfg.blur_sigma, mode="nearest")
    if cfg.noise_sigma > 0:
        image = image + rng.normal(0.0, cfg.noise_sigma, size=image.shape)
    image = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    return GrayImage(image), BinaryMask(gt), labeling.component_count


def _line_level(image: np.ndarray, gt: np.ndarray) -> float:
    return float(np.median(image[gt])) if gt.any() else 255.0


def _background_level(image: np.ndarray, gt: np.ndarray) -> float:
    return float(np.median(image[~gt])) if (~gt).any() else 0.0


class _Injector:
    """Shared state for one defect-injection pass over an image."""

    def __init__(self, image: np.ndarray, gt: np.ndarray, rng):
        self.image = image
        self.gt = gt
        self.rng = rng
        self.labeling = label_components(BinaryMask(gt))
        self.used_lines: set[int] = set()
        self.occupied = gt.copy()  # lines plus already-placed defect pixels
        self.bright = _line_level(image, gt)
        self.dark = _background_level(image, gt)
        self.opens = 0
        self.shorts = 0
        self.fps = 0
        objs = ndimage.find_objects(self.labeling.labels)
        self.boxes = {k + 1: sl for k, sl in enumerate(objs) if sl is not None}

    def _halo_clear(self, ys, xs, allowed_labels=frozenset()):
        h, w = self.gt.shape
        for y, x in zip(ys, xs):
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ny, nx = y + dy, x + dx
                    if not (0 <= ny < h and 0 <= nx < w):
                        continue
                    if self.occupied[ny, nx] and self.labeling.labels[ny, nx] not in allowed_labels:
                        return False
        return True

    def _fresh_line(self, min_len=0):
        candidates = []
        for k, sl in self.boxes.items():
            if k in self.used_lines:
                continue
            rh = sl[0].stop - sl[0].start
            rw = sl[1].stop - sl[1].start
            if max(rh, rw) >= min_len:
                candidates.append(k)
        if not candidates:
            raise PlacementError("no unused line long enough for the defect")
        return int(self.rng.choice(np.array(sorted(candidates))))

    def bridge(self):
        """Bright connector between two distinct unused lines (+1 short)."""
        h, w = self.gt.shape
        labels = self.labeling.labels
        for _ in range(400):
            vertical = bool(self.rng.integers(0, 2))
            if vertical:
                x = int(self.rng.integers(0, w))
                line = labels[:, x]
            else:
                y = int(self.rng.integers(0, h))
                line = labels[y, :]
            hit = np.nonzero(line > 0)[0]
            if hit.size < 2:
                continue
            # consecutive distinct labels along the scan define a candidate gap
            pairs = []
            for i in range(hit.size - 1):
                a, b = int(line[hit[i]]), int(line[hit[i + 1]])
                if a != b and a not in self.used_lines and b not in self.used_lines:
                    pairs.append((hit[i], hit[i + 1], a, b))
            if not pairs:
                continue
            i0, i1, la, lb = pairs[int(self.rng.integers(0, len(pairs)))]
            span = np.arange(i0 + 1, i1)
            if span.size == 0 or span.size > max(h, w) // 2:
                continue
            ys, xs = (span, np.full(span.size, x)) if vertical else (np.full(span.size, y), span)
            if not self._halo_clear(ys, xs, allowed_labels={la, lb}):
                continue
            self.image[ys, xs] = self.bright
            self.occupied[ys, xs] = True
            self.used_lines.update((la, lb))
            self.shorts += 1
            return
        raise PlacementError("bridge placement failed")

    def cut(self):
        """Darkened gap severing one line (+1 open)."""
        for _ in range(400):
            k = self._fresh_line(min_len=10)
            sl = self.boxes[k]
            rh = sl[0].stop - sl[0].start
            rw = sl[1].stop - sl[1].start
            region = (self.labeling.labels == k).copy()
            if rw >= rh:
                pos = int(self.rng.integers(sl[1].start + 3, sl[1].stop - 4))
                region[:, :pos] = False
                region[:, pos + 2 :] = False
            else:
                pos = int(self.rng.integers(sl[0].start + 3, sl[0].stop - 4))
                region[:pos, :] = False
                region[pos + 2 :, :] = False
            if not region.any():
                continue
            self.image[region] = self.dark
            self.occupied |= region
            self.used_lines.add(k)
            self.opens += 1
            return
        raise PlacementError("cut placement failed")

    def speckle_field(self, dots_per_field: int):
        """Isolated bright dots off-line (+1 FP per dot)."""
        h, w = self.gt.shape
        placed = 0
        for _ in range(2000):
            if placed == dots_per_field:
                return
            y = int(self.rng.integers(1, h - 1))
            x = int(self.rng.integers(1, w - 1))
            if not self._halo_clear(np.array([y]), np.array([x])):
                continue
            self.image[y, x] = self.bright
            self.occupied[y, x] = True
            self.fps += 1
            placed += 1
        raise PlacementError("speckle placement failed")

    def shading_blob(self, radius: int | None):
        """Dark disc fully covering a line's cross-section (+1 open)."""
        for _ in range(400):
            k = self._fresh_line(min_len=12)
            sl = self.boxes[k]
            rh = sl[0].stop - sl[0].start
            rw = sl[1].stop - sl[1].start
            r = radius if radius is not None else (min(rh, rw) // 2 + 2)
            if max(rh, rw) < 2 * r + 6:
                continue
            if rw >= rh:
                cx = int(self.rng.integers(sl[1].start + r + 2, sl[1].stop - r - 2))
                cy = (sl[0].start + sl[0].stop) // 2
            else:
                cy = int(self.rng.integers(sl[0].start + r + 2, sl[0].stop - r - 2))
                cx = (sl[1].start + sl[1].stop) // 2
            yy, xx = np.ogrid[: self.gt.shape[0], : self.gt.shape[1]]
            disc = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
            touched = set(np.unique(self.labeling.labels[disc])) - {0}
            if touched != {k}:
                continue
            # the disc must sever: remove a full band across the short axis
            band = disc & (self.labeling.labels == k)
            if rw >= rh:
                cols = np.unique(np.nonzero(band)[1])
                full = (self.labeling.labels[:, cols] == k).sum(axis=0) == rh
                if not full.any():
                    continue
            else:
                rows = np.unique(np.nonzero(band)[0])
                full = (self.labeling.labels[rows, :] == k).sum(axis=1) == rw
                if not full.any():
                    continue
            self.image[disc] = self.dark
            self.occupied |= disc
            self.used_lines.add(k)
            self.opens += 1
            return
        raise PlacementError("shading blob placement failed")

    def outline_only(self):
        """Hollow out a line's interior; the outline stays connected, so a
        pixel-faithful segmentation incurs no ESD delta."""
        for _ in range(400):
            k = self._fresh_line(min_len=6)
            region = self.labeling.labels == k
            interior = ndimage.binary_erosion(region, np.ones((3, 3), bool), border_value=0)
            if not interior.any():
                continue
            self.image[interior] = self.dark
            self.occupied |= interior
            self.used_lines.add(k)
            return
        raise PlacementError("no line thick enough to hollow")


def inject_defects(
    image: GrayImage, gt: BinaryMask, spec: DefectSpec | list[DefectSpec], seed: int = 0
) -> tuple[GrayImage, BinaryMask, EsdReport]:
    """Stamp defects into the image, leaving the ground truth untouched.

    Returns (image', gt, expected_esd_delta): the ESD error delta a
    pixel-faithful segmentation of image' would incur against gt.  Each
    defect uses fresh lines and keeps a clear halo, so the deltas are exact:
    +1 short per bridge, +1 open per cut or shading blob, +1 FP per speckle
    dot, and nothing for hollowed outlines (the ring stays connected).
    """
    specs = spec if isinstance(spec, list) else [spec]
    work = image.pixels.astype(np.float64).copy()
    inj = _Injector(work, gt.bits, np.random.default_rng(seed))
    for s in specs:
        for _ in range(s.count):
            if s.kind == "bridge":
                inj.bridge()
            elif s.kind == "cut":
                inj.cut()
            elif s.kind == "speckle_field":
                inj.speckle_field(int(s.params.get("dots", 1)))
            elif s.kind == "shading_blob":
                inj.shading_blob(s.params.get("radius"))
            elif s.kind == "outline_only":
                inj.outline_only()
    out = GrayImage(np.clip(np.rint(work), 0, 255).astype(np.uint8))
    delta = EsdReport.from_counts(inj.opens, inj.shorts, inj.fps, 0, inj.labeling.component_count)
    return out, gt, delta


def _resize_nearest_bool(bits: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    h, w = bits.shape
    rows = np.clip(np.floor((np.arange(new_h) + 0.5) * (h / new_h)).astype(int), 0, h - 1)
    cols = np.clip(np.floor((np.arange(new_w) + 0.5) * (w / new_w)).astype(int), 0, w - 1)
    return bits[np.ix_(rows, cols)]


def augment(image: GrayImage, gt: BinaryMask, cfg: AugmentConfig) -> tuple[GrayImage, BinaryMask]:
    """Apply the full augmentation stack or nothing at all.

    With probability ``cfg.probability`` the transforms run in a fixed
    order: resized crop, Gaussian blur, brightness/contrast jitter,
    vertical flip, horizontal flip, Gaussian noise.  Geometric transforms
    (crop, flips) hit image and ground truth identically; photometric ones
    touch the image only.  Deterministic for a given seed.
    """
    rng = np.random.default_rng(cfg.seed)
    if rng.random() >= cfg.probability:
        return image, gt
    i = cfg.intensity
    scale = 255.0 if not image.is_float else 1.0
    img = image.pixels.astype(np.float64).copy()
    bits = gt.bits.copy()
    h, w = img.shape

    # resized crop: area fraction in [0.99 - 0.5*i, 0.99], aspect preserved
    area = rng.uniform(0.99 - 0.5 * i, 0.99)
    ch = max(1, int(round(h * np.sqrt(area))))
    cw = max(1, int(round(w * np.sqrt(area))))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    img_c = img[top : top + ch, left : left + cw]
    bits_c = bits[top : top + ch, left : left + cw]
    from .raster import resize as _resize

    img = _resize(GrayImage(np.clip(img_c / scale, 0, 1)), w, h, "bilinear").pixels * scale
    bits = _resize_nearest_bool(bits_c, h, w)

    # Gaussian blur: odd kernel side in [5, 9], sigma 5*i, image only
    k = int(rng.choice(np.array([5, 7, 9])))
    sigma = 5.0 * i
    ax = np.arange(k) - k // 2
    kernel = np.exp(-(ax**2) / (2 * sigma**2))
    kernel /= kernel.sum()
    img = ndimage.convolve1d(img, kernel, axis=0, mode="nearest")
    img = ndimage.convolve1d(img, kernel, axis=1, mode="nearest")

    # brightness then contrast jitter, image only
    img = img * rng.uniform(1 - 0.75 * i, 1 + 0.75 * i)
    cf = rng.uniform(1 - 0.5 * i, 1 + 0.5 * i)
    img = (img - img.mean()) * cf + img.mean()
    img = np.clip(img, 0, scale)

    if rng.random() < 0.5 * i:
        img = img[::-1, :]
        bits = bits[::-1, :]
    if rng.random() < 0.5 * i:
        img = img[:, ::-1]
        bits = bits[:, ::-1]

    # additive Gaussian noise on unit-scaled values, clipped, image only
    img = np.clip(img / scale + rng.normal(0.0, 0.5 * i, size=img.shape), 0.0, 1.0) * scale

    if image.is_float:
        out = GrayImage(np.clip(img, 0.0, 1.0))
    else:
        out = GrayImage(np.clip(np.rint(img), 0, 255).astype(np.uint8))
    return out, BinaryMask(bits)
