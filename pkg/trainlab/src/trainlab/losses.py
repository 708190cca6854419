"""Adversarial and perceptual objectives.

Wasserstein critic training with a gradient penalty: no sigmoid on the
critic output and no logarithms anywhere in the losses. The generator
objective is a weighted sum of a content term (feature-space squared
distance summed over extractor taps) and the adversarial term (the
negated mean critic score of the generated batch). The per-pixel MSE
is tracked as a diagnostic only; it is not part of the trained loss
unless the identity extractor is selected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch


class TrainingDiverged(RuntimeError):
    """A loss term left the finite range; the message names the term."""


def check_finite(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite loss term {name}: {value}")
    return value


def gradient_penalty(discriminator, real: torch.Tensor, fake: torch.Tensor,
                     coef: float, eps: torch.Tensor | None = None) -> torch.Tensor:
    """Two-sided gradient penalty on per-item mixes of real and fake.

    Each item is mixed as eps * real + (1 - eps) * fake with its own
    eps ~ Uniform[0, 1]; the penalty is coef * mean((||grad||_2 - 1)^2)
    over the batch. Pass ``eps`` (broadcastable to the batch) to pin
    the mixing points, e.g. for finite-difference checks.
    """
    if real.shape != fake.shape:
        raise ValueError(f"batch shapes differ: {tuple(real.shape)} vs {tuple(fake.shape)}")
    if eps is None:
        eps = torch.rand(real.shape[0], *([1] * (real.ndim - 1)),
                         dtype=real.dtype, device=real.device)
    mixed = (eps * real + (1.0 - eps) * fake.detach()).requires_grad_(True)
    scores = discriminator(mixed)
    grads = torch.autograd.grad(
        outputs=scores.sum(), inputs=mixed, create_graph=True
    )[0]
    norms = grads.flatten(1).norm(2, dim=1)
    return coef * ((norms - 1.0) ** 2).mean()


def perceptual_content_loss(pred: torch.Tensor, target: torch.Tensor,
                            extractor) -> torch.Tensor:
    """Sum over taps of the mean squared feature difference."""
    if pred.shape != target.shape:
        raise ValueError(
            f"prediction shape {tuple(pred.shape)} != target shape {tuple(target.shape)}"
        )
    pred_taps = extractor(pred)
    target_taps = extractor(target)
    if not pred_taps:
        raise ValueError("feature extractor produced no taps")
    loss = torch.zeros((), dtype=pred.dtype, device=pred.device)
    for a, b in zip(pred_taps, target_taps):
        loss = loss + torch.mean((a - b) ** 2)
    return loss


def pixel_mse(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean squared pixel difference over the whole batch."""
    if pred.shape != target.shape:
        raise ValueError(
            f"prediction shape {tuple(pred.shape)} != target shape {tuple(target.shape)}"
        )
    return torch.mean((pred - target) ** 2)


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar record of one generator step plus the last critic loss.

    ``total`` is computed inside the constructor as
    content + adv_weight * adversarial, so the decomposition identity
    holds exactly on the stored floats.
    """

    content: float
    adversarial: float
    adv_weight: float
    mse: float
    d_loss: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "total", self.content + self.adv_weight * self.adversarial
        )
        for name in ("content", "adversarial", "adv_weight", "mse", "d_loss", "total"):
            check_finite(name, getattr(self, name))

    CSV_HEADER = "epoch,content,adversarial,total,mse,d_loss,lr"

    def csv_row(self, epoch: int, lr: float) -> str:
        cells = [str(epoch)] + [
            format(v, ".10g")
            for v in (self.content, self.adversarial, self.total, self.mse, self.d_loss, lr)
        ]
        return ",".join(cells)
