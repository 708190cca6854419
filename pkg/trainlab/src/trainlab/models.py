"""Torch models: the encoder-decoder generator family and the critic.

The generator is first laid out as a flat layer plan (kind, name, and
shape metadata per layer) and then materialized into torch modules
keyed by layer name. Forward execution walks the plan, so topology,
layer names, tensor shapes, and payload order stay in one-to-one
correspondence with the exported weight-bundle manifest, and the
inference engine's replay of the bundle computes the same function.

Family layout: a conv-BN-ReLU head to the base width; per scale,
residual blocks then a stride-2 conv doubling the width (capped at
512); the decoder mirrors with stride-2 transposed convs, fuses the
matching encoder output by elementwise summation, and repeats the
blocks; a plain conv maps back to the image band and the input is
added to the output (residual learning). The denoise variant swaps
each residual block for two conv-BN-ReLU stages.

The critic is eight 3x3 convolutions with widths doubling from 32 to
256, a stride-2 step at each doubling, LeakyReLU(0.2) activations, and
a single dense score head. No sigmoid and no normalization layers:
the gradient penalty constrains per-sample critic gradients, which
batch-coupled statistics would contaminate.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

LEAKY_SLOPE = 0.2
BN_EPS = 1e-5

VARIANTS = ("sr", "denoise")
TASK_VARIANTS = {"denoise": "denoise", "sr2x": "sr"}

DISC_WIDTHS = (32, 32, 64, 64, 128, 128, 256, 256)
DISC_STRIDES = (1, 2, 1, 2, 1, 2, 1, 2)


def default_widths(depth: int, base_width: int = 64, cap: int = 512) -> list:
    """Per-scale channel widths: double per down-step, capped."""
    return [min(base_width * (2 ** i), cap) for i in range(depth + 1)]


@dataclass(frozen=True)
class LayerPlan:
    """One node of the flat generator plan; mirrors the bundle manifest."""

    kind: str
    name: str
    out_channels: int = 0
    in_channels: int = 0
    kh: int = 0
    kw: int = 0
    stride: int = 1
    channels: int = 0
    activation: str = "none"
    slope: float = LEAKY_SLOPE
    skip_source: int | None = None


class _PlanBuilder:
    def __init__(self):
        self.plans = []

    @property
    def last(self) -> int:
        return len(self.plans) - 1

    def conv(self, name, cin, cout, stride=1, k=3):
        self.plans.append(LayerPlan("conv", name, out_channels=cout, in_channels=cin,
                                    kh=k, kw=k, stride=stride))

    def conv_t(self, name, cin, cout, k=3):
        self.plans.append(LayerPlan("conv_transpose", name, out_channels=cout,
                                    in_channels=cin, kh=k, kw=k, stride=2))

    def bn(self, name, c):
        self.plans.append(LayerPlan("batchnorm", name, channels=c))

    def act(self, name, kind="relu", slope=LEAKY_SLOPE):
        self.plans.append(LayerPlan("activation", name, activation=kind, slope=slope))

    def res_add(self, name, source):
        self.plans.append(LayerPlan("residual_add", name, skip_source=source))


def _stage_blocks(b: _PlanBuilder, prefix: str, width: int, count: int, variant: str):
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


def build_plans(variant: str, depth: int, res_counts, base_width: int = 64,
                in_channels: int = 1):
    """Flat layer plan of the canonical generator; returns (plans, widths)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if not 1 <= depth <= 5:
        raise ValueError(f"depth must lie in [1, 5], got {depth}")
    res_counts = tuple(int(c) for c in res_counts)
    if len(res_counts) != depth:
        raise ValueError(f"res_counts length {len(res_counts)} != depth {depth}")
    widths = default_widths(depth, base_width)

    b = _PlanBuilder()
    b.conv("head.conv", in_channels, widths[0])
    b.bn("head.bn", widths[0])
    b.act("head.act")

    encoder_out = {}
    for d in range(depth):
        _stage_blocks(b, f"enc{d}", widths[d], res_counts[d], variant)
        encoder_out[d] = b.last
        b.conv(f"down{d}.conv", widths[d], widths[d + 1], stride=2)
        b.bn(f"down{d}.bn", widths[d + 1])
        b.act(f"down{d}.act")

    for d in reversed(range(depth)):
        b.conv_t(f"up{d}.conv", widths[d + 1], widths[d])
        b.bn(f"up{d}.bn", widths[d])
        b.act(f"up{d}.act")
        b.res_add(f"fuse{d}.add", encoder_out[d])
        _stage_blocks(b, f"dec{d}", widths[d], res_counts[d], variant)

    b.conv("tail.conv", widths[0], in_channels)
    return tuple(b.plans), tuple(widths)


def _module_key(name: str) -> str:
    return name.replace(".", "__")


class Generator(nn.Module):
    """Executable generator: walks its layer plan over torch modules."""

    def __init__(self, plans, variant: str, depth: int, res_counts, widths,
                 in_channels: int = 1, residual_output: bool = True):
        super().__init__()
        self.plans = tuple(plans)
        self.variant = variant
        self.depth = depth
        self.res_counts = tuple(res_counts)
        self.widths = tuple(widths)
        self.in_channels = in_channels
        self.residual_output = residual_output
        modules = {}
        for plan in self.plans:
            if plan.kind == "conv":
                modules[_module_key(plan.name)] = nn.Conv2d(
                    plan.in_channels, plan.out_channels, (plan.kh, plan.kw),
                    stride=plan.stride, padding=(plan.kh // 2, plan.kw // 2),
                )
            elif plan.kind == "conv_transpose":
                modules[_module_key(plan.name)] = nn.ConvTranspose2d(
                    plan.in_channels, plan.out_channels, (plan.kh, plan.kw),
                    stride=plan.stride, padding=(plan.kh // 2, plan.kw // 2),
                    output_padding=plan.stride - 1,
                )
            elif plan.kind == "batchnorm":
                modules[_module_key(plan.name)] = nn.BatchNorm2d(plan.channels, eps=BN_EPS)
            elif plan.kind not in ("activation", "residual_add"):
                raise ValueError(f"unsupported layer kind {plan.kind!r} in plan")
        self.blocks = nn.ModuleDict(modules)

    def layer_module(self, name: str) -> nn.Module:
        return self.blocks[_module_key(name)]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        scale = 2 ** self.depth
        if x.shape[-2] % scale or x.shape[-1] % scale:
            raise ValueError(
                f"input {x.shape[-2]}x{x.shape[-1]} not divisible by 2^depth = {scale}"
            )
        outputs = []
        cur = x
        for plan in self.plans:
            if plan.kind in ("conv", "conv_transpose", "batchnorm"):
                cur = self.blocks[_module_key(plan.name)](cur)
            elif plan.kind == "activation":
                if plan.activation == "relu":
                    cur = torch.relu(cur)
                elif plan.activation == "leaky_relu":
                    cur = nn.functional.leaky_relu(cur, plan.slope)
            else:  # residual_add
                cur = cur + outputs[plan.skip_source]
            outputs.append(cur)
        return x + cur if self.residual_output else cur


def build_generator(task: str, depth: int = 4, res_counts=(4, 4, 6, 2),
                    base_width: int = 64, in_channels: int = 1) -> Generator:
    """Canonical generator for a task; the final conv starts at zero so
    the initial model is exactly the identity (residual learning)."""
    if task not in TASK_VARIANTS:
        raise ValueError(f"unknown task {task!r}")
    variant = TASK_VARIANTS[task]
    plans, widths = build_plans(variant, depth, res_counts, base_width, in_channels)
    gen = Generator(plans, variant, depth, res_counts, widths, in_channels)
    tail = gen.layer_module("tail.conv")
    with torch.no_grad():
        tail.weight.zero_()
        tail.bias.zero_()
    return gen


class Discriminator(nn.Module):
    """Critic: conv tower plus one dense layer; raw scores, no sigmoid."""

    def __init__(self, image_size: int = 64, in_channels: int = 1):
        super().__init__()
        down = 2 ** DISC_STRIDES.count(2)
        if image_size % down:
            raise ValueError(f"image size must divide by {down}, got {image_size}")
        self.image_size = image_size
        layers = []
        prev = in_channels
        for width, stride in zip(DISC_WIDTHS, DISC_STRIDES):
            layers.append(nn.Conv2d(prev, width, 3, stride=stride, padding=1))
            layers.append(nn.LeakyReLU(LEAKY_SLOPE))
            prev = width
        self.features = nn.Sequential(*layers)
        side = image_size // down
        self.head = nn.Linear(DISC_WIDTHS[-1] * side * side, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-2] != self.image_size or x.shape[-1] != self.image_size:
            raise ValueError(
                f"critic built for {self.image_size}x{self.image_size} inputs, "
                f"got {x.shape[-2]}x{x.shape[-1]}"
            )
        scores = self.head(self.features(x).flatten(1))
        return scores.squeeze(1)


def build_discriminator(image_size: int = 64, in_channels: int = 1) -> Discriminator:
    return Discriminator(image_size=image_size, in_channels=in_channels)
