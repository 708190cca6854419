"""Plug-and-play medical image restoration.

An alternating-update engine couples a data-fidelity step, a pluggable
prior (identity, Gaussian smoothing, or a CNN generator), and an
FFT-based anisotropic total-variation proximal solve. Degradation
models, quality metrics, a deterministic CNN executor, and a
config-driven CLI/service round out the package.
"""

from .config import Config, ConfigError, parse_config, parse_config_text, serialize_config
from .degrade import (
    DegradationOp,
    Kernel,
    NoiseLevelMap,
    add_awgn,
    apply_operator,
    bicubic_resize,
    gaussian_kernel,
)
from .diter import ConvergenceTrace, DiterParams, PriorOperator, run_diamond
from .imagebuf import Image, ImageFormatError, extract_patches, load_image, save_image
from .metrics import InfinitePsnrError, MetricReport, metric_report, psnr, rmse, ssim
from .nnexec import BundleError, build_default_graph, generator_forward, load_bundle, save_bundle
from .tvprox import TvParams, TvProxResult, fft_quad_solve, tv_prox

__version__ = "0.1.0"

__all__ = [
    "Config",
    "ConfigError",
    "parse_config",
    "parse_config_text",
    "serialize_config",
    "DegradationOp",
    "Kernel",
    "NoiseLevelMap",
    "add_awgn",
    "apply_operator",
    "bicubic_resize",
    "gaussian_kernel",
    "ConvergenceTrace",
    "DiterParams",
    "PriorOperator",
    "run_diamond",
    "Image",
    "ImageFormatError",
    "extract_patches",
    "load_image",
    "save_image",
    "InfinitePsnrError",
    "MetricReport",
    "metric_report",
    "psnr",
    "rmse",
    "ssim",
    "BundleError",
    "build_default_graph",
    "generator_forward",
    "load_bundle",
    "save_bundle",
    "TvParams",
    "TvProxResult",
    "fft_quad_solve",
    "tv_prox",
    "__version__",
]
