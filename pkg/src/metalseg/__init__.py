"""metalseg: evaluation, topology losses, and multi-scale mask fusion for IC metal-line imagery."""

__version__ = "0.1.0"

from .raster import (
    BinaryMask,
    ComponentLabeling,
    DimensionMismatchError,
    GrayImage,
    LikelihoodMap,
    label_components,
    median_filter,
    morph,
    remove_small_objects,
    resize,
    threshold,
)
from .metrics import EsdReport, PixelMetrics, combine_esd_reports, esd_errors, pixel_metrics
from .persistence import Barcode, PersistenceBar, barcode, betti_numbers
from .bettiloss import (
    BettiMatchConfig,
    BettiMatchResult,
    LossConfig,
    bce_loss,
    betti_loss,
    comparison_image,
    dice_loss,
    induced_matching,
    seg_loss,
)
from .fusion import (
    FusionConfig,
    FusionResult,
    MaskProvider,
    PatchChoice,
    PatchDecision,
    PatchGrid,
    ProviderError,
    agreement,
    compose,
    decide,
    plan_patches,
    run_pipeline,
    speckle_count,
)
from .prompts import PromptConfig, foreground_seed_mask, sample_prompts
from .synth import AugmentConfig, DefectSpec, PlacementError, SynthConfig, augment, generate, inject_defects

__all__ = [
    "__version__",
    "BinaryMask",
    "ComponentLabeling",
    "DimensionMismatchError",
    "GrayImage",
    "LikelihoodMap",
    "label_components",
    "median_filter",
    "morph",
    "remove_small_objects",
    "resize",
    "threshold",
    "EsdReport",
    "PixelMetrics",
    "combine_esd_reports",
    "esd_errors",
    "pixel_metrics",
    "Barcode",
    "PersistenceBar",
    "barcode",
    "betti_numbers",
    "BettiMatchConfig",
    "BettiMatchResult",
    "LossConfig",
    "bce_loss",
    "betti_loss",
    "comparison_image",
    "dice_loss",
    "induced_matching",
    "seg_loss",
    "FusionConfig",
    "FusionResult",
    "MaskProvider",
    "PatchChoice",
    "PatchDecision",
    "PatchGrid",
    "ProviderError",
    "agreement",
    "compose",
    "decide",
    "plan_patches",
    "run_pipeline",
    "speckle_count",
    "PromptConfig",
    "foreground_seed_mask",
    "sample_prompts",
    "AugmentConfig",
    "DefectSpec",
    "PlacementError",
    "SynthConfig",
    "augment",
    "generate",
    "inject_defects",
]
