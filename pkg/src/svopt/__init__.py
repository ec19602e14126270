"""Deconvolution-to-convolution transformation, systolic-array schedule
optimization, and stereo correspondence propagation."""

from .tensor import ConvMode, ShapeError, Tensor, conv_valid, deconv_reference, \
    redundant_mac_fraction, upsample_zero
from .deconv import SubKernel, SubKernelSet, decompose_2d, decompose_nd, gather, \
    transform_multiply_count, transformed_deconv
from .perfmodel import (
    HardwareConfig,
    InfeasibleScheduleError,
    LatencyReport,
    LayerKind,
    LayerSpec,
    RoundPlan,
    TileSchedule,
    check_buffer,
    compute_time,
    dense_equivalent,
    dram_deltas,
    memory_time,
    total_latency,
)
from .scheduler import KnapsackItem, ScheduleMode, build_items, compare_modes, \
    exhaustive, pack_round, solve
from .ism import (
    CameraRig,
    CorrespondenceSet,
    DisparityMap,
    Frame,
    MotionField,
    MotionParams,
    estimate_motion,
    gaussian_blur,
    ism_run,
    propagate,
    reconstruct,
    refine,
    three_pixel_error,
    triangulate,
)

__version__ = "0.1.0"
