"""Wavelet multi-focus image fusion for computed extended depth of field."""

from .defocus_sim import (
    DofMeasurement,
    FocalStackSpec,
    MeasurementError,
    TargetScene,
    beam_sigma,
    default_scene,
    evaluate_dof,
    generate_stack,
    measure_dof,
    measure_lateral_resolution,
    simulate_defocus,
)
from .fusion import FusedResult, FusionConfig, fuse_highpass, fuse_lowpass, fuse_stack, render_depth_coded
from .image_core import load_pgm, normalize, quantize, save_pgm, save_ppm
from .metrics import average_gradient, edge_strength, entropy, mse, report, std_dev
from .wavelet import CoeffPyramid, WaveletSpec, dwt2, get_wavelet, idwt2

__version__ = "0.1.0"
