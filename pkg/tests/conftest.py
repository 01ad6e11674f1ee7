"""Shared test helpers: independent brute-force oracles kept deliberately
separate from the library's own code paths, plus the file-backed stub
provider used to exercise the mask-provider subprocess protocol."""

from __future__ import annotations

import sys
from collections import deque
from pathlib import Path

import numpy as np

# Stand-alone stub provider: crops a configured mask file per request.
# Deliberately independent of the library under test.
STUB_PROVIDER_SOURCE = '''
import json, os, sys
import numpy as np
from PIL import Image

mask_path, out_dir, mode, decoy_flag = sys.argv[1:5]
decoy = decoy_flag == "1"

full = np.asarray(Image.open(mask_path).convert("L")) >= 128

def region_for(path, scale):
    if scale == "full":
        return full
    stem = os.path.basename(path).rsplit(".", 1)[0]
    parts = stem.split("_")
    x = int(parts[-2][1:])
    y = int(parts[-1][1:])
    with Image.open(path) as im:
        w, h = im.size
    return full[y:y + h, x:x + w]

serial = 0
for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    if mode == "sleep":
        import time
        time.sleep(30)
    if mode == "garbage":
        print("this is not json", flush=True)
        continue
    req = json.loads(line)
    region = region_for(req["image"], req["scale"])
    masks = []
    if decoy:
        serial += 1
        p = os.path.join(out_dir, f"m{serial:05d}.png")
        Image.fromarray(np.where(~region, 255, 0).astype("uint8")).save(p)
        masks.append({"path": p, "score": 0.1})
    serial += 1
    p = os.path.join(out_dir, f"m{serial:05d}.png")
    Image.fromarray(np.where(region, 255, 0).astype("uint8")).save(p)
    masks.append({"path": p, "score": 0.9})
    print(json.dumps({"id": req["id"], "masks": masks}), flush=True)
'''


def stub_provider_command(tmp_path: Path, name: str, mask_path, decoy=False, mode="ok"):
    """Write the stub script; returns its command line."""
    script = tmp_path / f"stub_{name}.py"
    script.write_text(STUB_PROVIDER_SOURCE)
    out_dir = tmp_path / f"out_{name}"
    out_dir.mkdir(exist_ok=True)
    return [
        sys.executable,
        str(script),
        str(mask_path),
        str(out_dir),
        mode,
        "1" if decoy else "0",
    ]


def spawn_stub(tmp_path: Path, name: str, mask_path, decoy=False, mode="ok", timeout=60.0):
    """MaskProvider wired to a fresh stub process."""
    from metalseg.fusion import MaskProvider

    command = stub_provider_command(tmp_path, name, mask_path, decoy, mode)
    provider = MaskProvider(command, timeout=timeout, name=name)
    provider.start()
    return provider


def flood_fill_label(bits: np.ndarray, connectivity: int = 8):
    """Scan-order BFS labeling; independent of the library's labeling path.

    Returns (labels, count) with components numbered by first pixel reached
    in row-major order.
    """
    h, w = bits.shape
    labels = np.zeros((h, w), dtype=np.int32)
    if connectivity == 8:
        offs = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    else:
        offs = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    nxt = 0
    for sy in range(h):
        for sx in range(w):
            if not bits[sy, sx] or labels[sy, sx]:
                continue
            nxt += 1
            labels[sy, sx] = nxt
            queue = deque([(sy, sx)])
            while queue:
                y, x = queue.popleft()
                for dy, dx in offs:
                    ny, nx_ = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx_ < w and bits[ny, nx_] and not labels[ny, nx_]:
                        labels[ny, nx_] = nxt
                        queue.append((ny, nx_))
    return labels, nxt


def esd_oracle(pred: np.ndarray, gt: np.ndarray, min_overlap: int = 1):
    """Brute-force ESD counts via the explicit bipartite overlap graph."""
    pl, pn = flood_fill_label(pred, 8)
    gl, gn = flood_fill_label(gt, 8)
    overlap: dict[tuple[int, int], int] = {}
    h, w = pred.shape
    for y in range(h):
        for x in range(w):
            p, g = pl[y, x], gl[y, x]
            if p and g:
                overlap[(p, g)] = overlap.get((p, g), 0) + 1
    edges = {k for k, v in overlap.items() if v >= min_overlap}
    pred_degree = {p: 0 for p in range(1, pn + 1)}
    gt_degree = {g: 0 for g in range(1, gn + 1)}
    for p, g in edges:
        pred_degree[p] += 1
        gt_degree[g] += 1
    shorts = sum(d - 1 for d in pred_degree.values() if d >= 2)
    fps = sum(1 for d in pred_degree.values() if d == 0)
    opens = sum(d - 1 for d in gt_degree.values() if d >= 2)
    fns = sum(1 for d in gt_degree.values() if d == 0)
    return {
        "opens": opens,
        "shorts": shorts,
        "false_positives": fps,
        "false_negatives": fns,
        "gt_line_count": gn,
    }


def sweep_counts(values: np.ndarray, eps: float):
    """Direct component/hole counts of the sublevel set {f <= eps}.

    Components use 8-connectivity; holes are 4-connected background regions
    of the padded raster that do not touch the outside frame.  Uses
    scipy.ndimage.label, independent of the union-find barcode engine.
    """
    from scipy import ndimage

    inside = values <= eps
    s8 = np.ones((3, 3), dtype=bool)
    s4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    _, beta0 = ndimage.label(inside, structure=s8)
    bg = np.pad(~inside, 1, mode="constant", constant_values=True)
    lab, n = ndimage.label(bg, structure=s4)
    frame_labels = set(np.unique(lab[0, :])) | set(np.unique(lab[-1, :]))
    frame_labels |= set(np.unique(lab[:, 0])) | set(np.unique(lab[:, -1]))
    frame_labels.discard(0)
    beta1 = sum(1 for k in range(1, n + 1) if k not in frame_labels)
    return beta0, beta1
