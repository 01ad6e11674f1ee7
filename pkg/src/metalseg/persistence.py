"""Persistent homology of 2-D scalar rasters on the pixel grid.

Dimension-0 bars come from a union-find sweep over pixels in filtration
order with the elder rule (on a merge, the component with the smaller
(birth value, row-major index) key survives).  Dimension-1 bars come from
duality: connected components of the complement, swept in the opposite
direction over the grid padded with an outside frame, 4-connected; the
frame component is the outside and yields no bar.

Conventions (fixed for this package):

* pixel-as-vertex cubical model, 8-connected foreground / 4-connected dual
* plateaus: pixels with equal values enter in row-major order; bars of zero
  persistence are emitted and left to the consumer to filter
* sublevel barcodes satisfy birth <= death and essential bars die at 1.0;
  superlevel barcodes are sublevel barcodes of (1 - f) with all values
  mapped back through v -> 1 - v, so their births dominate their deaths and
  essential bars die at 0.0

The module also houses the union-find image-persistence run used by the
topology loss to compute inclusion-induced matchings between barcodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_OFFSETS_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
_OFFSETS_4 = ((-1, 0), (0, -1), (0, 1), (1, 0))

# Frame sentinel for the dual sweep: strictly above any unit-interval value,
# so the outside enters the (descending) dual filtration first.
_FRAME_VALUE = 2.0


@dataclass(frozen=True)
class PersistenceBar:
    dim: int
    birth: float
    death: float
    birth_pixel: tuple[int, int]
    death_pixel: tuple[int, int] | None
    essential: bool

    @property
    def persistence(self) -> float:
        return abs(self.death - self.birth)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "birth": self.birth,
            "death": self.death,
            "birth_pixel": list(self.birth_pixel),
            "death_pixel": None if self.death_pixel is None else list(self.death_pixel),
            "essential": self.essential,
        }


@dataclass(frozen=True)
class Barcode:
    bars: tuple[PersistenceBar, ...]
    filtration: str
    source_dims: tuple[int, int]

    def select(self, dim: int, skip_degenerate: bool = False):
        out = [b for b in self.bars if b.dim == dim]
        if skip_degenerate:
            out = [b for b in out if b.essential or b.persistence > 0.0]
        return out


class _Run:
    """One union-find sweep; optionally tracks a late 'mark' field for image
    persistence (marks arrive per pixel no earlier than the pixel's entry)."""

    __slots__ = ("finite", "essential_px", "pairs", "_root_of_last")

    def __init__(self):
        self.finite: list[tuple[int, int]] = []  # (birth_px, death_px=merge pixel)
        self.essential_px: int = -1
        self.pairs: dict[int, int] = {}  # late birth px -> early bar birth px


def _uf_sweep(
    h: int,
    w: int,
    connectivity: int,
    early_key: np.ndarray,
    late_key: np.ndarray | None = None,
) -> _Run:
    """Sweep pixels in ascending (early_key, index) order.

    With ``late_key`` given, pixels additionally receive a mark at
    (late_key, index); at equal key values all entries precede all marks.
    Emits one finite bar per merge (the younger component dies) and one
    image pair per merge of two marked components (the class with the
    younger mark dies; it is paired with the bar that died at this merge).
    """
    n = h * w
    offsets = _OFFSETS_8 if connectivity == 8 else _OFFSETS_4
    idx = np.arange(n, dtype=np.int64)
    if late_key is None:
        ev_px = idx[np.lexsort((idx, early_key))]
        ev_phase = np.zeros(n, dtype=np.int8)
    else:
        keys = np.concatenate([early_key, late_key])
        phases = np.concatenate([np.zeros(n, dtype=np.int8), np.ones(n, dtype=np.int8)])
        pxs = np.concatenate([idx, idx])
        order = np.lexsort((pxs, phases, keys))
        ev_px = pxs[order]
        ev_phase = phases[order]

    parent = np.full(n, -1, dtype=np.int64)
    birth_pos = np.empty(n, dtype=np.int64)
    birth_px = np.empty(n, dtype=np.int64)
    mark_pos = np.full(n, -1, dtype=np.int64)
    mark_px = np.empty(n, dtype=np.int64)

    run = _Run()
    finite = run.finite
    pairs = run.pairs

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    first_px = -1
    for pos in range(ev_px.shape[0]):
        p = int(ev_px[pos])
        if ev_phase[pos] == 1:
            r = find(p)
            if mark_pos[r] < 0:
                mark_pos[r] = pos
                mark_px[r] = p
            continue
        parent[p] = p
        birth_pos[p] = pos
        birth_px[p] = p
        if first_px < 0:
            first_px = p
        y, x = divmod(p, w)
        for dy, dx in offsets:
            ny, nx = y + dy, x + dx
            if not (0 <= ny < h and 0 <= nx < w):
                continue
            q = ny * w + nx
            if parent[q] < 0:
                continue
            ra, rb = find(p), find(q)
            if ra == rb:
                continue
            if birth_pos[ra] > birth_pos[rb]:
                ra, rb = rb, ra  # ra is now the elder
            # A pixel joining an existing component is not a birth event:
            # suppress the newborn singleton, keep genuine plateau merges.
            if int(birth_px[rb]) != p:
                finite.append((int(birth_px[rb]), p))
            if mark_pos[ra] >= 0 and mark_pos[rb] >= 0:
                if mark_pos[ra] > mark_pos[rb]:
                    dying_mark, surv_pos, surv_px = mark_px[ra], mark_pos[rb], mark_px[rb]
                else:
                    dying_mark, surv_pos, surv_px = mark_px[rb], mark_pos[ra], mark_px[ra]
                pairs[int(dying_mark)] = int(birth_px[rb])
                mark_pos[ra], mark_px[ra] = surv_pos, surv_px
            elif mark_pos[rb] >= 0:
                mark_pos[ra], mark_px[ra] = mark_pos[rb], mark_px[rb]
            parent[rb] = ra

    root = find(first_px)
    run.essential_px = int(birth_px[root])
    if late_key is not None and mark_pos[root] >= 0:
        pairs[int(mark_px[root])] = int(birth_px[root])
    return run


def _pad_dual(values: np.ndarray) -> np.ndarray:
    return np.pad(values, 1, mode="constant", constant_values=_FRAME_VALUE)


def _sublevel_dim0(values: np.ndarray):
    """Finite dim-0 bars and the essential birth for ascending filtration.

    Returns (finite, essential) with finite entries
    (birth_px, birth_val, death_px, death_val) keyed by flat pixel index.
    """
    h, w = values.shape
    flat = values.ravel()
    run = _uf_sweep(h, w, 8, flat)
    finite = [(bp, float(flat[bp]), dp, float(flat[dp])) for bp, dp in run.finite]
    essential = (run.essential_px, float(flat[run.essential_px]))
    return finite, essential


def _sublevel_dim1(values: np.ndarray):
    """Finite dim-1 bars via the descending dual sweep on the padded grid.

    Entries are (birth_px, birth_val, death_px, death_val) in original-grid
    flat coordinates: the bar is born where the complement splits (the dual
    merge pixel) and dies at the vanished piece's maximum (the dual birth
    pixel).  The death pixel is the dual birth pixel and therefore uniquely
    identifies the bar for matching purposes.
    """
    padded = _pad_dual(values)
    ph, pw = padded.shape
    flat = padded.ravel()
    run = _uf_sweep(ph, pw, 4, -flat)
    w = values.shape[1]

    def unpad(px: int) -> int:
        y, x = divmod(px, pw)
        return (y - 1) * w + (x - 1)

    bars = []
    for dual_birth, dual_merge in run.finite:
        bars.append(
            (
                unpad(dual_merge),  # dim-1 birth pixel: where the complement splits
                float(flat[dual_merge]),
                unpad(dual_birth),  # dim-1 death pixel: the vanished piece's maximum
                float(flat[dual_birth]),
            )
        )
    return bars


def _image_pairs_dim0(comparison: np.ndarray, side: np.ndarray) -> dict[int, int]:
    """Induced dim-0 pairing between one side (G or L) and the comparison
    field, which must satisfy comparison <= side pointwise so its sublevel
    sets contain the side's.  Keys are side bar birth pixels, values are
    comparison bar birth pixels (the essential pair included)."""
    h, w = comparison.shape
    run = _uf_sweep(h, w, 8, comparison.ravel(), side.ravel())
    return run.pairs


def _image_pairs_dim1(comparison: np.ndarray, side: np.ndarray) -> dict[int, int]:
    """Induced dim-1 pairing via the duals.  In the descending dual sweep
    the side's complement enters first (side values are larger), so the
    side plays the early role and the comparison the mark role.  Keys are
    comparison dual-birth pixels, values side dual-birth pixels, both in
    original-grid flat coordinates; the frame (outside) pair is dropped."""
    pc = _pad_dual(comparison)
    ps = _pad_dual(side)
    ph, pw = pc.shape
    run = _uf_sweep(ph, pw, 4, -ps.ravel(), -pc.ravel())
    w = comparison.shape[1]

    def unpad(px: int) -> int:
        y, x = divmod(px, pw)
        return (y - 1) * w + (x - 1)

    # Padded pixel 0 is the first frame pixel; the frame class is the dual
    # essential on both sides and never corresponds to a bar.
    return {unpad(k): unpad(v) for k, v in run.pairs.items() if v != 0 and k != 0}


def _px_to_xy(px: int, w: int) -> tuple[int, int]:
    y, x = divmod(px, w)
    return (x, y)


def barcode(map_values: np.ndarray, filtration: str = "sublevel") -> Barcode:
    """Persistence barcode of a unit-interval raster.

    ``filtration`` is "sublevel" (features appear as values increase) or
    "superlevel" (sublevel of 1 - f with values mapped back via v -> 1 - v).
    """
    vals = np.asarray(map_values, dtype=np.float64)
    if vals.ndim != 2 or vals.size == 0:
        raise ValueError("barcode requires a non-empty 2-D raster")
    if not np.isfinite(vals).all():
        raise ValueError("barcode requires finite values")
    if filtration not in ("sublevel", "superlevel"):
        raise ValueError(f"unknown filtration {filtration!r}")
    work = vals if filtration == "sublevel" else 1.0 - vals
    h, w = work.shape

    def back(v: float) -> float:
        return v if filtration == "sublevel" else 1.0 - v

    bars: list[PersistenceBar] = []
    finite0, essential0 = _sublevel_dim0(work)
    for bp, bv, dp, dv in finite0:
        bars.append(
            PersistenceBar(0, back(bv), back(dv), _px_to_xy(bp, w), _px_to_xy(dp, w), False)
        )
    ep, ev = essential0
    bars.append(PersistenceBar(0, back(ev), back(1.0), _px_to_xy(ep, w), None, True))
    for bp, bv, dp, dv in _sublevel_dim1(work):
        bars.append(
            PersistenceBar(1, back(bv), back(dv), _px_to_xy(bp, w), _px_to_xy(dp, w), False)
        )
    return Barcode(bars=tuple(bars), filtration=filtration, source_dims=(w, h))


def betti_numbers(bc: Barcode, eps: float) -> tuple[int, int]:
    """Number of dim-0 and dim-1 features alive at filtration value eps."""
    beta = [0, 0]
    for bar in bc.bars:
        if bc.filtration == "sublevel":
            alive = (eps >= bar.birth) if bar.essential else (bar.birth <= eps < bar.death)
        else:
            alive = (eps <= bar.birth) if bar.essential else (bar.death < eps <= bar.birth)
        if alive:
            beta[bar.dim] += 1
    return beta[0], beta[1]
