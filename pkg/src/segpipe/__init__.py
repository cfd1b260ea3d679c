"""segpipe: pixel-level scene labeling at desk scale.

K-means color clustering turns RGB images into pseudo-labels, a small
from-scratch CNN (numpy only) trains on them, and the metrics module
scores per-class IOU, mean IOU, and inference throughput.
"""

__version__ = "0.1.0"

from .clustering import (
    ClusterModel,
    kmeans_assign,
    kmeans_fit,
    load_cluster_model,
    recolor,
    save_cluster_model,
)
from .dataset import (
    AUGMENT_OPS,
    DatasetSplit,
    augment,
    generate_synthetic_scene,
    load_split,
    save_split,
    split_dataset,
)
from .imageio import load_image, load_label_map, save_image, save_label_map
from .metrics import (
    ConfusionCounts,
    FpsResult,
    IouReport,
    check_reported_ious,
    confusion_counts,
    format_class_table,
    fps_benchmark,
    iou,
    mean_iou,
    read_report,
    report_from_counts,
    write_iou_comparison,
    write_report,
)
from .network import (
    Network,
    NetworkConfig,
    TrainReport,
    build_network,
    evaluate_samples,
    load_checkpoint,
    param_count,
    param_millions,
    predict,
    save_checkpoint,
    train,
)
from .optim import Adam, AdamConfig, AdamState, SGD, SgdConfig, adam_step, sgd_step
from .palette import (
    Palette,
    PaletteEntry,
    decode_labels,
    default_palette,
    encode_labels,
    load_palette,
    save_palette,
)
from .rng import XorShift64Star
