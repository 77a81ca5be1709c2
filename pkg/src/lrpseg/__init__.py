"""Weakly supervised damage segmentation.

A binary classifier (trained on image-level labels only) is explained by
backward relevance propagation; the resulting pixel relevance map is turned
into a binary segmentation mask by thresholding or by mixture models.
"""

from .errors import (
    ConfigError,
    DataError,
    DegenerateFitError,
    InsufficientDataError,
    LrpsegError,
    ShapeError,
    WeightFormatError,
    WeightValidationError,
)
from .lrp import RelevanceMap, RuleAssignment, RuleConfig, preset, propagate
from .metrics import PixelConfusion, PrCurve, confusion, iou, pr_curve, precision, raw_lrp_scores, recall
from .network import Architecture, ForwardTrace, architecture_for, classify, forward, toy, vgg_a_128n, vgg_a_one_fc
from .segmentation import SegmentationMask, mean_filter_5x5, segment, segment_bmm, segment_gmm, segment_simple
from .synth import SceneSpec, SyntheticDataset, generate, make_dataset
from .training import TrainConfig, balanced_accuracy, train
from .weights import Manifest, WeightContainer, load_weights, random_container, save_weights

__version__ = "0.1.0"
