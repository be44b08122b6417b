"""High-resolution segmentation benchmark toolkit.

Mask evaluation metrics, shape-complexity statistics with a ranked test-set
splitter, and a numerically verified windowed cross-attention grafting
kernel with its supervision losses.
"""

__version__ = "0.1.0"

from .metrics import (  # noqa: F401
    METRIC_NAMES,
    DegenerateGroundTruthError,
    MetricReport,
    aggregate,
    e_measure,
    evaluate_pair,
    f_curve,
    mae,
    max_f,
    mba,
    s_measure,
    weighted_f,
)
from .complexity import (  # noqa: F401
    ComplexityProfile,
    color_contrast,
    contour_count,
    dataset_summary,
    euler_number,
    geometry_stats,
    ipq,
    profile_mask,
    split_subsets,
)
from .graftkern import (  # noqa: F401
    CamStack,
    GraftParams,
    GraftTrace,
    PyramidSchedule,
    finite_diff_check,
    graft_backward,
    graft_forward,
    make_test_instance,
    pyramid_schedule,
    window_merge,
    window_partition,
)
from .losses import (  # noqa: F401
    LossBreakdown,
    agl,
    attention_target,
    bce,
    iou_loss,
    total_loss,
)
