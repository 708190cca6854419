"""Minimal deterministic CNN inference engine.

Executes encoder-decoder generator graphs from a portable weight bundle
(manifest + little-endian float32 payload + CRC-32) without autodiff or
any training-framework dependency. Tensors are plain numpy float32
arrays of shape (channels, height, width).
"""

from .bundle import BundleError, load_bundle, save_bundle
from .graph import (
    LayerSpec,
    ModelGraph,
    build_default_graph,
    default_widths,
    generator_forward,
    run_graph,
)
from .ops import conv2d, conv_transpose2d, batchnorm_inference, layer_forward

__all__ = [
    "BundleError",
    "LayerSpec",
    "ModelGraph",
    "batchnorm_inference",
    "build_default_graph",
    "conv2d",
    "conv_transpose2d",
    "default_widths",
    "generator_forward",
    "layer_forward",
    "load_bundle",
    "run_graph",
    "save_bundle",
]
