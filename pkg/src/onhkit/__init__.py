"""onhkit: optic-nerve-head screening toolkit.

Pipeline pieces: PGM/PPM rasters, superpixel-based ONH auto-cropping,
training-time augmentation, a small differentiable classifier, a hybrid
hill-climber/SGDM trainer, and a Venetian-blind k-fold evaluation harness
with ROC/AUC metrics. A synthetic fundus generator with known ground truth
drives end-to-end testing.
"""

__version__ = "0.1.0"

from .augment import AffineParams, AugmentSpec, apply_affine, random_patch, sample_augment
from .climbers import (
    Climber,
    ClimberConfig,
    EpochReport,
    preset_config,
    random_detection_step,
    random_movement_step,
    run_epoch,
    sgdm_step,
    train,
)
from .evaluation import (
    ConfusionMatrix,
    FoldPlan,
    RocCurve,
    classify_at,
    confusion,
    epoch_split,
    fold_stats,
    metrics,
    roc_auc,
    venetian_kfold,
)
from .network import (
    Network,
    forward,
    freeze_first,
    get_free_params,
    init_network,
    load_network,
    loss_and_grad,
    save_network,
    set_free_params,
    tiny_cnn_arch,
)
from .raster import (
    PixelBox,
    PnmParseError,
    Raster,
    contrast_stretch,
    crop,
    decode_pnm,
    encode_pnm,
    extract_red,
    read_pnm,
    resize_bilinear,
    write_pnm,
)
from .roi import (
    CropResult,
    RoiConfig,
    SuperpixelMap,
    extract_onh,
    largest_region_centroid,
    slic_segment,
    superpixel_mean_image,
    threshold_regions,
)
from .synth import SynthSpec, SynthTruth, generate, write_manifest
