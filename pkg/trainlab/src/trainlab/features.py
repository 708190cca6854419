"""Frozen feature extractors for the perceptual content loss.

An extractor maps an image batch to a sequence of feature taps
phi_1..phi_Np (Np = 5 for the pretrained stacks). Weights are frozen:
parameters carry no gradients and the module stays in eval mode, so
the content loss is a fixed measurement, not a trainable head.

Three sources:

* ``vgg16``: the torchvision VGG-16 feature stack when its pretrained
  weights are available locally; taps are the final conv activation
  before each of the five pooling stages. Grayscale inputs are
  replicated to three channels.
* ``seeded``: an offline fallback pyramid of conv-ReLU stages with
  average pooling between taps, initialized from a fixed seed. Used
  automatically when the VGG weights cannot be loaded (for example in
  sandboxes with no model cache); documented so runs remain
  reproducible end to end.
* ``identity``: a single tap returning the image itself, which reduces
  the content loss to plain per-pixel MSE. Diagnostics and tests only.
"""

from __future__ import annotations

import torch
from torch import nn

VGG_TAP_INDICES = (3, 8, 15, 22, 29)
SEEDED_WIDTHS = (16, 24, 32, 48, 64)
SEEDED_SEED = 2024


class FeatureExtractor(nn.Module):
    """Sequence of frozen stages; tap j is the output of stages[0..j]."""

    def __init__(self, stages, source: str, expects_channels: int = 1):
        super().__init__()
        self.stages = nn.ModuleList(stages)
        self.source = source
        self.expects_channels = expects_channels
        for param in self.parameters():
            param.requires_grad_(False)
        self.eval()

    @property
    def tap_count(self) -> int:
        return len(self.stages)

    def forward(self, x: torch.Tensor):
        if x.ndim != 4:
            raise ValueError(f"extractor expects (b, c, h, w) input, got {tuple(x.shape)}")
        if x.shape[1] == 1 and self.expects_channels == 3:
            x = x.expand(-1, 3, -1, -1)
        elif x.shape[1] != self.expects_channels:
            raise ValueError(
                f"extractor expects {self.expects_channels} channels, got {x.shape[1]}"
            )
        taps = []
        cur = x
        for stage in self.stages:
            cur = stage(cur)
            taps.append(cur)
        return taps

    @classmethod
    def identity(cls) -> "FeatureExtractor":
        return cls([nn.Identity()], source="identity")

    @classmethod
    def seeded(cls, seed: int = SEEDED_SEED, in_channels: int = 1) -> "FeatureExtractor":
        gen = torch.Generator().manual_seed(seed)
        stages = []
        prev = in_channels
        for j, width in enumerate(SEEDED_WIDTHS):
            conv = nn.Conv2d(prev, width, 3, padding=1)
            with torch.no_grad():
                fan_in = prev * 9
                conv.weight.copy_(
                    torch.randn(conv.weight.shape, generator=gen) * (2.0 / fan_in) ** 0.5
                )
                conv.bias.zero_()
            blocks = [] if j == 0 else [nn.AvgPool2d(2)]
            blocks += [conv, nn.ReLU()]
            stages.append(nn.Sequential(*blocks))
            prev = width
        return cls(stages, source="seeded", expects_channels=in_channels)

    @classmethod
    def vgg16(cls) -> "FeatureExtractor":
        """Pretrained VGG-16 taps; raises when the weights are unavailable."""
        from torchvision import models

        vgg = models.vgg16(weights=models.VGG16_Weights.IMAGENET1K_V1)
        features = vgg.features
        stages = []
        start = 0
        for tap in VGG_TAP_INDICES:
            stages.append(nn.Sequential(*[features[i] for i in range(start, tap + 1)]))
            start = tap + 1
        return cls(stages, source="vgg16", expects_channels=3)

    @classmethod
    def pretrained(cls, in_channels: int = 1) -> "FeatureExtractor":
        """VGG-16 when its weights load, else the seeded fallback."""
        try:
            return cls.vgg16()
        except Exception:
            return cls.seeded(in_channels=in_channels)
