"""Model graphs: ordered layer lists plus their weights.

The canonical generator family is an encoder-decoder with strided-conv
downsampling, transposed-conv upsampling, elementwise-summation fusion
between matching scales (never concatenation), per-scale residual blocks
on both paths, and a residual output head (output = input + net(input)).
The denoise variant replaces each residual block with two plain
conv-batchnorm-ReLU stages.

Graphs execute as a flat list: layer i consumes the output of layer i-1
(layer 0 consumes the graph input); residual_add layers additionally sum
the output of an earlier layer, and input_skip sums the graph input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..imagebuf import Image
from .ops import LayerSpec, layer_forward


def default_widths(depth: int, base_width: int = 64, cap: int = 512) -> list:
    """Per-scale channel widths: double per down-step, capped (64..512)."""
    return [min(base_width * (2 ** i), cap) for i in range(depth + 1)]


@dataclass(frozen=True)
class ModelGraph:
    """Immutable executable network: layers, weights, and metadata."""

    layers: tuple
    weights: dict
    variant: str = "sr"
    depth: int = 0
    res_counts: tuple = ()
    widths: tuple = ()
    residual_output: bool = False
    in_channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "res_counts", tuple(self.res_counts))
        object.__setattr__(self, "widths", tuple(self.widths))
        frozen = {}
        for name, arr in self.weights.items():
            a = np.ascontiguousarray(np.asarray(arr, dtype=np.float32))
            a.flags.writeable = False
            frozen[name] = a
        object.__setattr__(self, "weights", frozen)
        self._validate()

    def _validate(self):
        channels = self.in_channels
        for idx, layer in enumerate(self.layers):
            if layer.kind in ("residual_add",) and not (0 <= layer.skip_source < idx):
                raise ValueError(
                    f"layer {idx} ({layer.name}): skip_source {layer.skip_source} "
                    f"must reference an earlier layer"
                )
            channels = self._out_channels(layer, channels, idx)
        for layer in self.layers:
            for name, shape in layer.tensor_specs():
                if name not in self.weights:
                    raise ValueError(f"missing weight tensor {name}")
                if self.weights[name].shape != shape:
                    raise ValueError(
                        f"tensor {name}: shape {self.weights[name].shape} != declared {shape}"
                    )

    def _out_channels(self, layer: LayerSpec, channels: int, idx: int) -> int:
        if layer.kind in ("conv", "conv_transpose"):
            if layer.in_channels != channels:
                raise ValueError(
                    f"layer {idx} ({layer.name}): expects {layer.in_channels} input "
                    f"channels but receives {channels}"
                )
            return layer.out_channels
        if layer.kind == "batchnorm" and layer.channels != channels:
            raise ValueError(
                f"layer {idx} ({layer.name}): batchnorm over {layer.channels} channels "
                f"but receives {channels}"
            )
        return channels

    def tensor_order(self) -> list:
        """All (name, shape) pairs in payload order (layer order)."""
        out = []
        for layer in self.layers:
            out.extend(layer.tensor_specs())
        return out


def run_graph(model: ModelGraph, x: np.ndarray) -> np.ndarray:
    """Execute the layer list on a (C, H, W) float32 tensor."""
    x = np.asarray(x, dtype=np.float32)
    outputs = []
    cur = x
    for idx, layer in enumerate(model.layers):
        if layer.kind == "residual_add":
            skip = outputs[layer.skip_source]
        elif layer.kind == "input_skip":
            skip = x
        else:
            skip = None
        try:
            cur = layer_forward(layer, cur, model.weights, skip)
        except ValueError as exc:
            raise ValueError(f"layer index {idx}: {exc}") from exc
        outputs.append(cur)
    return cur


def generator_forward(model: ModelGraph, img: Image) -> Image:
    """Run the generator on an image; adds the input back when the
    residual-output flag is set. Dims must divide by 2^depth."""
    scale = 2 ** model.depth
    if img.height % scale or img.width % scale:
        raise ValueError(
            f"image {img.height}x{img.width} not divisible by 2^depth = {scale}"
        )
    y = run_graph(model, img.data[None, :, :])
    if y.shape != (1, img.height, img.width):
        raise ValueError(f"generator produced shape {y.shape}, expected (1, {img.height}, {img.width})")
    out = y[0]
    if model.residual_output:
        out = img.data + out
    return Image(out)


class _GraphBuilder:
    def __init__(self):
        self.layers = []
        self.weights = {}

    @property
    def last(self) -> int:
        return len(self.layers) - 1

    def add(self, layer: LayerSpec, **tensors) -> int:
        self.layers.append(layer)
        for name, shape in layer.tensor_specs():
            self.weights[name] = tensors.get(name, np.zeros(shape, dtype=np.float32))
        return self.last

    def conv(self, name, cin, cout, stride=1, k=3):
        return self.add(LayerSpec("conv", name, out_channels=cout, in_channels=cin,
                                  kh=k, kw=k, stride=stride))

    def conv_t(self, name, cin, cout, k=3):
        return self.add(LayerSpec("conv_transpose", name, out_channels=cout,
                                  in_channels=cin, kh=k, kw=k, stride=2))

    def bn(self, name, c):
        return self.add(LayerSpec("batchnorm", name, channels=c))

    def act(self, name, kind="relu", slope=0.2):
        return self.add(LayerSpec("activation", name, activation=kind, slope=slope))

    def res_add(self, name, source):
        return self.add(LayerSpec("residual_add", name, skip_source=source))


def _emit_stage_blocks(b: _GraphBuilder, prefix: str, width: int, count: int, variant: str):
    """Residual blocks (sr) or conv-bn-relu pairs (denoise) at one scale."""
    for r in range(count):
        name = f"{prefix}.block{r}"
        entry = b.last
        b.conv(f"{name}.conv0", width, width)
        b.bn(f"{name}.bn0", width)
        b.act(f"{name}.act0")
        b.conv(f"{name}.conv1", width, width)
        b.bn(f"{name}.bn1", width)
        if variant == "sr":
            b.res_add(f"{name}.add", entry)
        else:
            b.act(f"{name}.act1")


def build_default_graph(
    variant: str = "sr",
    depth: int = 4,
    res_counts=(4, 4, 6, 2),
    base_width: int = 64,
    in_channels: int = 1,
    residual_output: bool = True,
) -> ModelGraph:
    """Canonical generator graph with zero-initialized weights.

    With all weights zero the graph output is identically zero, so the
    residual output head makes the whole generator an exact identity.
    """
    if variant not in ("sr", "denoise"):
        raise ValueError(f"unknown variant {variant!r}")
    if not 1 <= depth <= 5:
        raise ValueError(f"depth must lie in [1, 5], got {depth}")
    res_counts = tuple(int(c) for c in res_counts)
    if len(res_counts) != depth:
        raise ValueError(f"res_counts length {len(res_counts)} != depth {depth}")
    widths = default_widths(depth, base_width)

    b = _GraphBuilder()
    b.conv("head.conv", in_channels, widths[0])
    b.bn("head.bn", widths[0])
    b.act("head.act")

    encoder_out = {}
    for d in range(depth):
        _emit_stage_blocks(b, f"enc{d}", widths[d], res_counts[d], variant)
        encoder_out[d] = b.last
        b.conv(f"down{d}.conv", widths[d], widths[d + 1], stride=2)
        b.bn(f"down{d}.bn", widths[d + 1])
        b.act(f"down{d}.act")

    for d in reversed(range(depth)):
        b.conv_t(f"up{d}.conv", widths[d + 1], widths[d])
        b.bn(f"up{d}.bn", widths[d])
        b.act(f"up{d}.act")
        b.res_add(f"fuse{d}.add", encoder_out[d])
        _emit_stage_blocks(b, f"dec{d}", widths[d], res_counts[d], variant)

    b.conv("tail.conv", widths[0], in_channels)

    return ModelGraph(
        layers=tuple(b.layers),
        weights=b.weights,
        variant=variant,
        depth=depth,
        res_counts=res_counts,
        widths=tuple(widths),
        residual_output=residual_output,
        in_channels=in_channels,
    )
