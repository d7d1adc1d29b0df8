"""Aircraft geolocation by coupling relative and absolute image registration."""

from .coupling import (
    CombinedCoeffs,
    ModeParams,
    ModeVerdict,
    ParallelCoeffs,
    Status,
)
from .geodesy import GeoPose, propagate_pose
from .registration import (
    AveragingPolicy,
    DescriptorMatch,
    RigidTransform2D,
    TransformEstimate,
    apply_transform,
    estimate_pairwise,
    estimate_transform,
)
from .timing import TimingParams, TimingSample

__version__ = "0.1.0"
