"""Topology-matching loss between a ground-truth map and a prediction map,
plus the blended pixel losses it is combined with.

Orientation convention: maps are foreground-high.  The matching engine
always filters on the transformed field u = 1 - value, so high-likelihood
metal is born early, and builds the comparison field as the pointwise
minimum of the two transformed fields; its sublevel sets then contain those
of both inputs, giving the inclusions that induce the matching.  Two bars
(one per side) are matched when the induced maps send them to the same
comparison bar, computed per dimension with the union-find image sweeps
from the persistence module.

Reported coordinates follow the persistence module: ``sublevel`` results
are stated in the transformed (internal) coordinates, ``superlevel``
results are mapped back through v -> 1 - v.  The loss value and gradient
are identical under every filtration_type; ``bothlevels`` averages the two
(equal) single-filtration results and reports bars in the internal
convention.

Loss terms, with (b, d) in internal coordinates:

* matched pair:        (b_L - b_G)^2 + (d_L - d_G)^2
* unmatched prediction, persistence >= barcode_length_threshold:
    push_unmatched_to_1_0 -> b^2 + (d - 1)^2   (full-persistence target)
    otherwise             -> (b - d)^2 / 2     (endpoints pushed together)
* unmatched prediction below the threshold: discarded as noise, no loss
* unmatched ground truth: (b - d)^2, value only, zero gradient

Matched pairs are never length-filtered; only unmatched prediction bars
are, so identical inputs always yield exactly zero loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .persistence import (
    PersistenceBar,
    _image_pairs_dim0,
    _image_pairs_dim1,
    _sublevel_dim0,
    _sublevel_dim1,
)
from .raster import LikelihoodMap, _require_same_shape

_FILTRATION_TYPES = ("sublevel", "superlevel", "bothlevels")


@dataclass(frozen=True)
class BettiMatchConfig:
    """Matching-loss knobs; defaults are the tuned operating point."""

    filtration_type: str = "sublevel"
    barcode_length_threshold: float = 0.345
    push_unmatched_to_1_0: bool = True

    def __post_init__(self):
        if self.filtration_type not in _FILTRATION_TYPES:
            raise ValueError(f"filtration_type must be one of {_FILTRATION_TYPES}")
        if not 0.0 <= self.barcode_length_threshold <= 1.0:
            raise ValueError("barcode_length_threshold must lie in [0,1]")


@dataclass(frozen=True)
class LossConfig:
    """Blend weights for the full segmentation loss.

    value = alpha * bce + (1 - alpha) * dice + lam * betti
    """

    alpha: float = 0.6
    lam: float = 0.375
    betti: BettiMatchConfig = field(default_factory=BettiMatchConfig)
    bce_clamp: float = 1e-7

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0,1)")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0,1]")
        if not 0.0 < self.bce_clamp <= 0.01:
            raise ValueError("bce_clamp must lie in (0, 0.01]")


@dataclass
class BettiMatchResult:
    matched: list[tuple[PersistenceBar, PersistenceBar]]
    unmatched_pred: list[PersistenceBar]
    unmatched_gt: list[PersistenceBar]
    loss: float | None = None
    grad: np.ndarray | None = None


# Internal bar record: (dim, birth, death, birth_px, death_px, essential)
# with flat pixel indices and death_px == -1 for the essential bar.


def _bars_dim0(u: np.ndarray) -> dict:
    finite, (ess_px, ess_val) = _sublevel_dim0(u)
    bars = {bp: (0, bv, dv, bp, dp, False) for bp, bv, dp, dv in finite}
    bars[ess_px] = (0, ess_val, 1.0, ess_px, -1, True)
    return bars


def _bars_dim1(u: np.ndarray) -> dict:
    # Keyed by death pixel (the dual birth pixel), unique per bar.
    return {dp: (1, bv, dv, bp, dp, False) for bp, bv, dp, dv in _sublevel_dim1(u)}


def _degenerate(bar) -> bool:
    return not bar[5] and bar[1] == bar[2]


def _match_internal(u_g: np.ndarray, u_l: np.ndarray):
    """Induced matching between the sublevel barcodes of two internal fields.

    Returns (matched, unmatched_g, unmatched_l) of internal bar records;
    zero-persistence bars are dropped on both sides (a pair containing one
    is dissolved and its other half counted as unmatched).
    """
    u_c = np.minimum(u_g, u_l)
    sides = []
    for dim in (0, 1):
        if dim == 0:
            g_bars, l_bars = _bars_dim0(u_g), _bars_dim0(u_l)
            c2g = {c: g for g, c in _image_pairs_dim0(u_c, u_g).items()}
            c2l = {c: l for l, c in _image_pairs_dim0(u_c, u_l).items()}
        else:
            g_bars, l_bars = _bars_dim1(u_g), _bars_dim1(u_l)
            c2g = _image_pairs_dim1(u_c, u_g)
            c2l = _image_pairs_dim1(u_c, u_l)
        sides.append((g_bars, l_bars, c2g, c2l))

    matched, un_g, un_l = [], [], []
    for g_bars, l_bars, c2g, c2l in sides:
        used_g, used_l = set(), set()
        for ckey in sorted(set(c2g) & set(c2l)):
            gk, lk = c2g[ckey], c2l[ckey]
            gb = g_bars.get(gk)
            lb = l_bars.get(lk)
            if gb is None or lb is None:
                continue
            if _degenerate(gb) or _degenerate(lb):
                continue
            matched.append((gb, lb))
            used_g.add(gk)
            used_l.add(lk)
        un_g.extend(b for k, b in sorted(g_bars.items()) if k not in used_g and not _degenerate(b))
        un_l.extend(b for k, b in sorted(l_bars.items()) if k not in used_l and not _degenerate(b))
    return matched, un_g, un_l


def _score(matched, un_g, un_l, cfg: BettiMatchConfig, shape):
    """Loss value, gradient w.r.t. the internal prediction field, and the
    unmatched prediction bars that survive the length filter."""
    loss = 0.0
    grad = np.zeros(shape, dtype=np.float64).ravel()
    for gb, lb in matched:
        loss += (lb[1] - gb[1]) ** 2 + (lb[2] - gb[2]) ** 2
        grad[lb[3]] += 2.0 * (lb[1] - gb[1])
        if lb[4] >= 0:
            grad[lb[4]] += 2.0 * (lb[2] - gb[2])
    kept = []
    for b in un_l:
        if b[2] - b[1] < cfg.barcode_length_threshold:
            continue
        kept.append(b)
        if cfg.push_unmatched_to_1_0:
            loss += b[1] ** 2 + (b[2] - 1.0) ** 2
            grad[b[3]] += 2.0 * b[1]
            if b[4] >= 0:
                grad[b[4]] += 2.0 * (b[2] - 1.0)
        else:
            loss += (b[1] - b[2]) ** 2 / 2.0
            grad[b[3]] += b[1] - b[2]
            if b[4] >= 0:
                grad[b[4]] += b[2] - b[1]
    for b in un_g:
        loss += (b[1] - b[2]) ** 2
    return loss, grad.reshape(shape), kept


def _to_public(bar, w: int, flip: bool) -> PersistenceBar:
    dim, b, d, bpx, dpx, essential = bar
    if flip:
        b, d = 1.0 - b, 1.0 - d
    return PersistenceBar(
        dim=dim,
        birth=b,
        death=d,
        birth_pixel=(bpx % w, bpx // w),
        death_pixel=None if dpx < 0 else (dpx % w, dpx // w),
        essential=essential,
    )


def comparison_image(G: LikelihoodMap, L: LikelihoodMap, filtration: str) -> LikelihoodMap:
    """Pointwise min (sublevel) or max (superlevel) of the two maps, so the
    filtered spaces of both inputs include into those of the result."""
    _require_same_shape(G.values, L.values)
    if filtration == "sublevel":
        return LikelihoodMap(np.minimum(G.values, L.values))
    if filtration == "superlevel":
        return LikelihoodMap(np.maximum(G.values, L.values))
    raise ValueError(f"comparison_image requires sublevel or superlevel, got {filtration!r}")


def _run_matching(G: LikelihoodMap, L: LikelihoodMap, cfg: BettiMatchConfig, with_loss: bool):
    _require_same_shape(G.values, L.values)
    u_g = 1.0 - G.values
    u_l = 1.0 - L.values
    matched, un_g, un_l = _match_internal(u_g, u_l)
    loss, grad_internal, kept = _score(matched, un_g, un_l, cfg, u_l.shape)
    # The single-filtration computations coincide under the foreground-high
    # convention; bothlevels averages the two equal halves.
    flip = cfg.filtration_type == "superlevel"
    w = G.width
    result = BettiMatchResult(
        matched=[(_to_public(g, w, flip), _to_public(l, w, flip)) for g, l in matched],
        unmatched_pred=[_to_public(b, w, flip) for b in kept],
        unmatched_gt=[_to_public(b, w, flip) for b in un_g],
    )
    if with_loss:
        result.loss = loss
        result.grad = -grad_internal  # chain rule through u = 1 - L
    return result


def induced_matching(G: LikelihoodMap, L: LikelihoodMap, cfg: BettiMatchConfig | None = None) -> BettiMatchResult:
    """Matched and unmatched bars only; loss and gradient left unfilled."""
    return _run_matching(G, L, cfg or BettiMatchConfig(), with_loss=False)


def betti_loss(G: LikelihoodMap, L: LikelihoodMap, cfg: BettiMatchConfig | None = None) -> BettiMatchResult:
    """Betti matching loss with its per-pixel subgradient raster."""
    return _run_matching(G, L, cfg or BettiMatchConfig(), with_loss=True)


def bce_loss(G: LikelihoodMap, L: LikelihoodMap, clamp: float = 1e-7):
    """Mean binary cross entropy with symmetric probability clamping.

    The gradient is zero wherever clamping is active.
    """
    _require_same_shape(G.values, L.values)
    if not 0.0 < clamp <= 0.01:
        raise ValueError("clamp must lie in (0, 0.01]")
    g = G.values
    p = L.values
    p_clamped = np.clip(p, clamp, 1.0 - clamp)
    n = p.size
    value = float(-np.mean(g * np.log(p_clamped) + (1.0 - g) * np.log1p(-p_clamped)))
    grad = -(g / p_clamped - (1.0 - g) / (1.0 - p_clamped)) / n
    grad = np.where((p > clamp) & (p < 1.0 - clamp), grad, 0.0)
    return value, grad


def dice_loss(G: LikelihoodMap, L: LikelihoodMap, smooth: float = 1.0):
    """Soft Dice loss 1 - (2*sum(pg) + s) / (sum(p) + sum(g) + s)."""
    _require_same_shape(G.values, L.values)
    if smooth <= 0:
        raise ValueError("smooth must be > 0")
    g = G.values
    p = L.values
    num = 2.0 * float((p * g).sum()) + smooth
    den = float(p.sum() + g.sum()) + smooth
    value = 1.0 - num / den
    grad = -(2.0 * g * den - num) / den**2
    return value, grad


def seg_loss(G: LikelihoodMap, L: LikelihoodMap, cfg: LossConfig | None = None):
    """Full loss: alpha*BCE + (1-alpha)*Dice + lam*Betti.

    Returns (value, grad, breakdown); the breakdown reports each raw term
    plus the blended pixel loss.
    """
    cfg = cfg or LossConfig()
    bce_v, bce_g = bce_loss(G, L, cfg.bce_clamp)
    dice_v, dice_g = dice_loss(G, L)
    betti = betti_loss(G, L, cfg.betti)
    pixel = cfg.alpha * bce_v + (1.0 - cfg.alpha) * dice_v
    value = pixel + cfg.lam * betti.loss
    grad = cfg.alpha * bce_g + (1.0 - cfg.alpha) * dice_g + cfg.lam * betti.grad
    breakdown = {"bce": bce_v, "dice": dice_v, "pixel": pixel, "betti": betti.loss}
    return value, grad, breakdown
