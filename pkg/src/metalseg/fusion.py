"""Multi-scale segmentation: patch planning, per-patch quality decisions
between the full-image model and the patch model, and final composition.

Model (1) segments the original-size image (good for large structures,
prone to merging fine lines); model (2) segments overlapping patches
(good for fine structures, prone to speckled hallucinations on uniform
patches).  Each grid cell picks one source by the speckle/agreement
decision table; cells where both sources look speckled are flagged for
manual inspection and filled from model (1) so the output mask is total.

Neural inference stays outside the process: mask providers are
subprocesses speaking line-oriented JSON on stdin/stdout (request:
``{"id", "image", "points", "scale"}``; response: ``{"id", "masks":
[{"path", "score"}, ...]}``), with images and masks as 8-bit grayscale
PNG files.  Patch request files are named ``req_<id>_patch_x<X>_y<Y>.png``
so fixture-backed providers can locate the corresponding region.
"""

from __future__ import annotations

import enum
import json
import logging
import select
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fileio import read_mask_png, write_gray_png
from .prompts import PromptConfig, foreground_seed_mask, sample_prompts
from .raster import BinaryMask, GrayImage, label_components

log = logging.getLogger(__name__)


class ProviderError(RuntimeError):
    """A mask provider failed; the message carries provider and request id."""


@dataclass(frozen=True)
class FusionConfig:
    patch_size: int = 512
    min_overlap_fraction: float = 0.10
    speckle_max_size: int = 16
    speckle_count_threshold: int = 50
    # per-model override for the patch side; None means shared threshold
    speckle_count_threshold_b: int | None = None
    agreement_threshold: float = 0.60

    def __post_init__(self):
        if not 0.0 < self.min_overlap_fraction < 1.0:
            raise ValueError("min_overlap_fraction must lie in (0,1)")
        if self.patch_size < 32:
            raise ValueError("patch_size must be >= 32")
        if self.speckle_max_size < 1 or self.speckle_count_threshold < 1:
            raise ValueError("speckle thresholds must be positive")

    @property
    def threshold_a(self) -> int:
        return self.speckle_count_threshold

    @property
    def threshold_b(self) -> int:
        return (
            self.speckle_count_threshold
            if self.speckle_count_threshold_b is None
            else self.speckle_count_threshold_b
        )


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int
    origins: tuple[tuple[int, int], ...]
    stride_x: int
    stride_y: int

    @property
    def xs(self) -> list[int]:
        return sorted({x for x, _ in self.origins})

    @property
    def ys(self) -> list[int]:
        return sorted({y for _, y in self.origins})


class PatchChoice(enum.Enum):
    USE_A = "use_a"
    USE_B = "use_b"
    FLAGGED = "flagged"


@dataclass(frozen=True)
class PatchDecision:
    origin: tuple[int, int]
    choice: PatchChoice
    speckles_a: int
    speckles_b: int
    agreement: float

    def to_dict(self) -> dict:
        return {
            "origin": list(self.origin),
            "choice": self.choice.value,
            "speckles_a": self.speckles_a,
            "speckles_b": self.speckles_b,
            "agreement": self.agreement,
        }


@dataclass(frozen=True)
class FusionResult:
    final_mask: BinaryMask
    decisions: tuple[PatchDecision, ...]
    flagged_regions: tuple[tuple[int, int, int, int], ...]


def _axis_origins(dim: int, patch: int, min_overlap_fraction: float):
    if dim < patch:
        raise ValueError(f"dimension {dim} smaller than patch size {patch}")
    if dim == patch:
        return [0], 0
    max_stride = int(np.floor(patch * (1.0 - min_overlap_fraction)))
    n = int(np.ceil((dim - patch) / max_stride)) + 1
    stride = (dim - patch) // (n - 1)
    origins = [i * stride for i in range(n)]
    origins[-1] = dim - patch
    return origins, stride


def plan_patches(width: int, height: int, cfg: FusionConfig) -> PatchGrid:
    """Grid of patch origins covering the image with the required overlap."""
    xs, stride_x = _axis_origins(width, cfg.patch_size, cfg.min_overlap_fraction)
    ys, stride_y = _axis_origins(height, cfg.patch_size, cfg.min_overlap_fraction)
    origins = tuple((x, y) for y in ys for x in xs)
    return PatchGrid(patch_size=cfg.patch_size, origins=origins, stride_x=stride_x, stride_y=stride_y)


def speckle_count(patch: BinaryMask, max_size: int) -> int:
    """Number of 8-connected components no larger than max_size pixels."""
    labeling = label_components(patch, 8)
    if labeling.component_count == 0:
        return 0
    return int((labeling.sizes <= max_size).sum())


def agreement(a: BinaryMask, b: BinaryMask) -> float:
    """Fraction of positions where the two masks hold the same value."""
    from .raster import _require_same_shape

    _require_same_shape(a.bits, b.bits)
    return float((a.bits == b.bits).mean())


def decide(
    patch_a: BinaryMask,
    patch_b: BinaryMask,
    cfg: FusionConfig,
    origin: tuple[int, int] = (0, 0),
) -> PatchDecision:
    """Pick a source for one grid cell.

    Both sides speckled flags the cell; one speckled side defers to the
    other; otherwise the fine-scale patch wins on agreement, and on
    disagreement whichever side shows fewer speckles (ties to the patch
    model).
    """
    sa = speckle_count(patch_a, cfg.speckle_max_size)
    sb = speckle_count(patch_b, cfg.speckle_max_size)
    agr = agreement(patch_a, patch_b)
    speckled_a = sa >= cfg.threshold_a
    speckled_b = sb >= cfg.threshold_b
    if speckled_a and speckled_b:
        choice = PatchChoice.FLAGGED
    elif speckled_a:
        choice = PatchChoice.USE_B
    elif speckled_b:
        choice = PatchChoice.USE_A
    elif agr >= cfg.agreement_threshold:
        choice = PatchChoice.USE_B
    else:
        choice = PatchChoice.USE_B if sb <= sa else PatchChoice.USE_A
    return PatchDecision(origin=origin, choice=choice, speckles_a=sa, speckles_b=sb, agreement=agr)


def _axis_owner(length: int, origins: list[int], patch: int) -> np.ndarray:
    centers = np.array([o + patch / 2.0 for o in origins])
    coords = np.arange(length) + 0.5
    dists = np.abs(coords[None, :] - centers[:, None])
    return np.argmin(dists, axis=0)  # first minimum: smaller origin wins ties


def compose(
    mask_a_full: BinaryMask,
    patches_b: list[tuple[tuple[int, int], BinaryMask]],
    grid: PatchGrid,
    cfg: FusionConfig,
) -> FusionResult:
    """Assemble the final mask, one nearest-patch-center cell at a time.

    Every output pixel comes from the chosen source of the patch whose
    center is nearest (ties to the smaller origin); flagged cells
    contribute the model-(1) crop and are listed in flagged_regions.
    """
    h, w = mask_a_full.bits.shape
    ps = grid.patch_size
    by_origin = {}
    for origin, mask in patches_b:
        if origin not in set(grid.origins):
            raise ValueError(f"patch origin {origin} not on the planned grid")
        if mask.bits.shape != (ps, ps):
            raise ValueError(f"patch at {origin} is {mask.bits.shape}, expected {(ps, ps)}")
        if origin in by_origin:
            raise ValueError(f"duplicate patch at {origin}")
        by_origin[origin] = mask
    missing = [o for o in grid.origins if o not in by_origin]
    if missing:
        raise ValueError(f"missing patches for origins {missing[:4]}")

    xs, ys = grid.xs, grid.ys
    col_owner = _axis_owner(w, xs, ps)
    row_owner = _axis_owner(h, ys, ps)

    final = np.zeros((h, w), dtype=bool)
    decisions = []
    flagged = []
    for oy in ys:
        for ox in xs:
            crop_a = BinaryMask(mask_a_full.bits[oy : oy + ps, ox : ox + ps])
            patch_b = by_origin[(ox, oy)]
            d = decide(crop_a, patch_b, cfg, origin=(ox, oy))
            decisions.append(d)
            if d.choice == PatchChoice.FLAGGED:
                flagged.append((ox, oy, ps, ps))
            source = patch_b.bits if d.choice == PatchChoice.USE_B else crop_a.bits
            rows = np.nonzero(row_owner == ys.index(oy))[0]
            cols = np.nonzero(col_owner == xs.index(ox))[0]
            if rows.size == 0 or cols.size == 0:
                continue
            r0, r1 = rows[0], rows[-1] + 1
            c0, c1 = cols[0], cols[-1] + 1
            final[r0:r1, c0:c1] = source[r0 - oy : r1 - oy, c0 - ox : c1 - ox]
    return FusionResult(
        final_mask=BinaryMask(final),
        decisions=tuple(decisions),
        flagged_regions=tuple(flagged),
    )


def paste_patches(
    patches: list[tuple[tuple[int, int], BinaryMask]],
    grid: PatchGrid,
    width: int,
    height: int,
) -> BinaryMask:
    """Voronoi-paste a single source's patches into a full-size mask (the
    patch-model-only composition, useful as a comparison baseline)."""
    xs, ys = grid.xs, grid.ys
    ps = grid.patch_size
    by_origin = dict(patches)
    col_owner = _axis_owner(width, xs, ps)
    row_owner = _axis_owner(height, ys, ps)
    out = np.zeros((height, width), dtype=bool)
    for iy, oy in enumerate(ys):
        for ix, ox in enumerate(xs):
            rows = np.nonzero(row_owner == iy)[0]
            cols = np.nonzero(col_owner == ix)[0]
            if rows.size == 0 or cols.size == 0:
                continue
            r0, r1 = rows[0], rows[-1] + 1
            c0, c1 = cols[0], cols[-1] + 1
            src = by_origin[(ox, oy)].bits
            out[r0:r1, c0:c1] = src[r0 - oy : r1 - oy, c0 - ox : c1 - ox]
    return BinaryMask(out)


class MaskProvider:
    """Client for one mask-provider subprocess.

    ``command`` is the provider's command line; requests time out after
    ``timeout`` seconds (protocol default 300).
    """

    def __init__(self, command: str | list[str], timeout: float = 300.0, name: str = "provider"):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self.name = name
        self._proc: subprocess.Popen | None = None
        self._next_id = 0

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.close()

    def start(self) -> None:
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise ProviderError(f"{self.name}: cannot spawn {self.command}: {e}") from e

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
        except Exception:
            self._proc.kill()
        self._proc = None

    def _read_line(self, request_id: int) -> str:
        assert self._proc is not None
        ready, _, _ = select.select([self._proc.stdout], [], [], self.timeout)
        if not ready:
            raise ProviderError(f"{self.name}: request {request_id} timed out after {self.timeout}s")
        line = self._proc.stdout.readline()
        if not line:
            raise ProviderError(f"{self.name}: request {request_id}: provider closed its stdout")
        return line

    def request(self, image_path: str, points: list[tuple[int, int]], scale: str) -> list[tuple[str, float]]:
        """Send one request; returns [(mask_path, score), ...]."""
        if self._proc is None:
            self.start()
        request_id = self._next_id
        self._next_id += 1
        payload = {
            "id": request_id,
            "image": str(image_path),
            "points": [[int(x), int(y)] for x, y in points],
            "scale": scale,
        }
        try:
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise ProviderError(f"{self.name}: request {request_id}: pipe failed: {e}") from e
        line = self._read_line(request_id)
        try:
            response = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProviderError(
                f"{self.name}: request {request_id}: invalid JSON response: {e}"
            ) from e
        if response.get("error"):
            raise ProviderError(f"{self.name}: request {request_id}: {response['error']}")
        if response.get("id") != request_id:
            raise ProviderError(
                f"{self.name}: request {request_id}: response id {response.get('id')} does not echo"
            )
        masks = response.get("masks")
        if not masks:
            raise ProviderError(f"{self.name}: request {request_id}: no masks returned")
        out = []
        for m in masks:
            if "path" not in m or "score" not in m:
                raise ProviderError(
                    f"{self.name}: request {request_id}: mask entry missing path/score"
                )
            out.append((m["path"], float(m["score"])))
        return out


def _best_mask(masks: list[tuple[str, float]]) -> str:
    best_path, best_score = masks[0]
    for path, score in masks[1:]:
        if score > best_score:
            best_path, best_score = path, score
    return best_path


def _prompt_points(image: GrayImage, prompt_cfg: PromptConfig) -> list[tuple[int, int]]:
    seeds = foreground_seed_mask(image, prompt_cfg)
    points = sample_prompts(seeds, prompt_cfg)
    if not points:
        points = [(image.width // 2, image.height // 2)]
    return points


def run_pipeline(
    image: GrayImage,
    provider_full: MaskProvider,
    provider_patch: MaskProvider,
    cfg: FusionConfig | None = None,
    seed: int = 0,
    workdir: str | None = None,
    prompt_cfg: PromptConfig | None = None,
) -> FusionResult:
    """Full multi-scale run: prompts, both providers, decision, composition.

    Deterministic given the seed and deterministic providers.  Images
    smaller than the patch size fall back to the full-image model alone.
    """
    cfg = cfg or FusionConfig()
    base_prompts = prompt_cfg or PromptConfig(seed=seed)
    tmp = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="metalseg-fuse-"))
    tmp.mkdir(parents=True, exist_ok=True)

    full_path = tmp / "req_0000_full.png"
    write_gray_png(full_path, image)
    full_points = _prompt_points(image, base_prompts)
    masks = provider_full.request(str(full_path), full_points, "full")
    mask_a = read_mask_png(_best_mask(masks))
    if mask_a.bits.shape != image.pixels.shape:
        raise ProviderError(
            f"{provider_full.name}: full mask is {mask_a.bits.shape}, image is {image.pixels.shape}"
        )

    if image.width < cfg.patch_size or image.height < cfg.patch_size:
        log.warning(
            "image %dx%d smaller than patch size %d: using the full-image model only",
            image.width,
            image.height,
            cfg.patch_size,
        )
        return FusionResult(final_mask=mask_a, decisions=(), flagged_regions=())

    grid = plan_patches(image.width, image.height, cfg)
    patches_b = []
    for i, (ox, oy) in enumerate(grid.origins, start=1):
        ps = cfg.patch_size
        crop = GrayImage(image.pixels[oy : oy + ps, ox : ox + ps])
        patch_path = tmp / f"req_{i:04d}_patch_x{ox}_y{oy}.png"
        write_gray_png(patch_path, crop)
        patch_prompt_cfg = PromptConfig(
            quantile=base_prompts.quantile,
            min_object_size=base_prompts.min_object_size,
            morph_radius=base_prompts.morph_radius,
            n_points=base_prompts.n_points,
            seed=seed * 1_000_003 + i,
        )
        points = _prompt_points(crop, patch_prompt_cfg)
        masks = provider_patch.request(str(patch_path), points, "patch")
        patch_mask = read_mask_png(_best_mask(masks))
        if patch_mask.bits.shape != (ps, ps):
            raise ProviderError(
                f"{provider_patch.name}: patch mask at ({ox},{oy}) is {patch_mask.bits.shape}, expected {(ps, ps)}"
            )
        patches_b.append(((ox, oy), patch_mask))
    return compose(mask_a, patches_b, grid, cfg)
