"""File formats: 8-bit grayscale PNG for images and masks, the MLF1
float32 raster container for likelihood maps and gradients, and
byte-stable JSON rendering for reports."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .raster import BinaryMask, GrayImage, LikelihoodMap

F32_MAGIC = b"MLF1"


class RasterFormatError(ValueError):
    """Malformed raster file; the message names the offending byte offset."""


def read_gray_png(path) -> GrayImage:
    with Image.open(path) as im:
        return GrayImage(np.asarray(im.convert("L"), dtype=np.uint8))


def write_gray_png(path, img: GrayImage) -> None:
    if img.is_float:
        data = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    else:
        data = img.pixels
    Image.fromarray(data, mode="L").save(path, format="PNG")


def read_mask_png(path) -> BinaryMask:
    with Image.open(path) as im:
        return BinaryMask(np.asarray(im.convert("L")) >= 128)


def write_mask_png(path, mask: BinaryMask) -> None:
    Image.fromarray(np.where(mask.bits, 255, 0).astype(np.uint8), mode="L").save(
        path, format="PNG"
    )


def write_f32(path, values: np.ndarray) -> None:
    arr = np.asarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("F32 rasters are 2-D")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(F32_MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(arr.tobytes(order="C"))


def read_f32(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise RasterFormatError(f"{path}: truncated header at byte {len(raw)}")
    if raw[:4] != F32_MAGIC:
        raise RasterFormatError(f"{path}: bad magic at byte 0")
    w, h = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * w * h
    if len(raw) != expected:
        raise RasterFormatError(
            f"{path}: expected {expected} bytes for {w}x{h}, file ends at byte {len(raw)}"
        )
    return np.frombuffer(raw[12:], dtype="<f4").reshape(h, w).astype(np.float64)


def read_likelihood(path) -> LikelihoodMap:
    """PNG (mapped to [0,1] by /255) or MLF1 float raster."""
    p = Path(path)
    if p.suffix.lower() == ".png":
        with Image.open(p) as im:
            return LikelihoodMap(np.asarray(im.convert("L"), dtype=np.float64) / 255.0)
    return LikelihoodMap(read_f32(p))


def _render_json(obj, out: list) -> None:
    if obj is None or obj is True or obj is False:
        out.append("null" if obj is None else ("true" if obj else "false"))
    elif isinstance(obj, bool):  # pragma: no cover - handled above
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        f = float(obj)
        if f != f or f in (float("inf"), float("-inf")):
            raise ValueError("non-finite float in JSON output")
        out.append(format(f, ".9g"))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if i:
                out.append(",")
            out.append(json.dumps(str(key), ensure_ascii=False))
            out.append(":")
            _render_json(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _render_json(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")


def stable_json_dumps(obj) -> str:
    """Byte-stable JSON: sorted keys, floats at 9 significant digits."""
    out: list[str] = []
    _render_json(obj, out)
    return "".join(out)
