"""LesionForge: synthesize artificial anomalous medical images from a single
annotated sample, plus the ROC/AUC statistics to judge detectors trained on
the result."""

from .augment import AugmentOp, AugmentSpec, apply_random, preset, replay_log
from .ccl import label_components
from .config import ConfigError, RunConfig, load_config, validate_config
from .imgcore import (
    BinaryMask,
    Image,
    PixelDomain,
    RngStream,
    mask_inverse,
    quantize,
    read_image,
    read_mask,
    to_float,
    write_image,
    write_mask,
)
from .lesion_bank import (
    LesionBank,
    LesionPatch,
    LesionType,
    extract_patches,
    load_bank,
    resample_patches,
    sample_paste_count,
    save_bank,
)
from .metrics import ScoredSet, auc, delong_test, roc_curve
from .preprocess import FovMask, WindowSpec, detect_fov, resize_canonical, window_ct
from .synth import (
    CompositionRule,
    CompositionStrategy,
    MixUpMode,
    SyntheticSample,
    choose_position,
    mixup_paste,
    synthesize_dataset,
    synthesize_one,
)

__version__ = "0.1.0"
