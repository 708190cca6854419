"""The alternating training loop.

One training step runs n_critic critic updates (Wasserstein loss with
gradient penalty, raw scores) followed by one generator update on
content + adv_weight * adversarial, and returns the scalar breakdown.
Any non-finite loss term aborts the run with the term named before
optimizer state is touched.

The epoch loop halves the learning rate every 100 epochs, rewrites the
cumulative per-epoch loss CSV atomically after each epoch, checkpoints
atomically, and exports the final generator as a weight bundle for the
inference engine.
"""

from __future__ import annotations

import io
import os
from dataclasses import asdict, dataclass

import torch

from .bundle import export_bundle
from .data import PairSampler, atomic_write_bytes
from .features import FeatureExtractor
from .hyper import TrainHyper
from .losses import (
    LossBreakdown,
    check_finite,
    gradient_penalty,
    perceptual_content_loss,
    pixel_mse,
)
from .models import build_discriminator, build_generator

EXTRACTOR_SOURCES = ("auto", "vgg16", "seeded", "identity")


@dataclass
class TrainState:
    """Models plus their optimizers; everything a train step needs."""

    generator: torch.nn.Module
    discriminator: torch.nn.Module
    extractor: FeatureExtractor
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer


def make_extractor(source: str) -> FeatureExtractor:
    if source == "auto":
        return FeatureExtractor.pretrained()
    if source == "vgg16":
        return FeatureExtractor.vgg16()
    if source == "seeded":
        return FeatureExtractor.seeded()
    if source == "identity":
        return FeatureExtractor.identity()
    raise ValueError(f"unknown extractor source {source!r}; use one of {EXTRACTOR_SOURCES}")


def build_state(hyper: TrainHyper, image_size: int = 64, extractor: str = "auto",
                depth: int = 4, res_counts=(4, 4, 6, 2), base_width: int = 64,
                seed: int = 0) -> TrainState:
    """Fresh models and optimizers with seeded initialization."""
    torch.manual_seed(seed)
    generator = build_generator(hyper.task, depth=depth, res_counts=res_counts,
                                base_width=base_width)
    discriminator = build_discriminator(image_size=image_size)
    betas = (hyper.beta1, hyper.beta2)
    return TrainState(
        generator=generator,
        discriminator=discriminator,
        extractor=make_extractor(extractor),
        opt_g=torch.optim.Adam(generator.parameters(), lr=hyper.learning_rate, betas=betas),
        opt_d=torch.optim.Adam(discriminator.parameters(), lr=hyper.learning_rate, betas=betas),
    )


def train_step(batch, models: TrainState, hyper: TrainHyper) -> LossBreakdown:
    """n_critic critic updates, then one generator update."""
    low, high = batch
    generator, critic = models.generator, models.discriminator

    d_loss_value = 0.0
    for _ in range(hyper.n_critic):
        with torch.no_grad():
            fake = generator(low)
        penalty = gradient_penalty(critic, high, fake, hyper.penalty_coef)
        check_finite("gradient_penalty", float(penalty.detach()))
        d_loss = critic(fake).mean() - critic(high).mean() + penalty
        check_finite("d_loss", float(d_loss.detach()))
        models.opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        models.opt_d.step()
        d_loss_value = float(d_loss.detach())

    fake = generator(low)
    content = perceptual_content_loss(fake, high, models.extractor)
    check_finite("content", float(content.detach()))
    adversarial = -critic(fake).mean()
    check_finite("adversarial", float(adversarial.detach()))
    total = content + hyper.adv_weight * adversarial
    check_finite("total", float(total.detach()))
    mse = pixel_mse(fake.detach(), high)
    check_finite("mse", float(mse))
    models.opt_g.zero_grad(set_to_none=True)
    total.backward()
    models.opt_g.step()

    return LossBreakdown(content=float(content.detach()), adversarial=float(adversarial.detach()),
                         adv_weight=hyper.adv_weight, mse=float(mse), d_loss=d_loss_value)


def _set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def save_checkpoint(models: TrainState, hyper: TrainHyper, epoch: int, path: str,
                    depth: int, res_counts, base_width: int) -> None:
    """Atomic torch checkpoint carrying everything needed to resume."""
    payload = {
        "epoch": epoch,
        "hyper": asdict(hyper),
        "arch": {"depth": depth, "res_counts": list(res_counts), "base_width": base_width},
        "generator": models.generator.state_dict(),
        "discriminator": models.discriminator.state_dict(),
        "opt_g": models.opt_g.state_dict(),
        "opt_d": models.opt_d.state_dict(),
    }
    buf = io.BytesIO()
    torch.save(payload, buf)
    atomic_write_bytes(path, buf.getvalue())


def restore_generator(path: str):
    """Rebuild the generator recorded in a checkpoint; returns (gen, meta)."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    hyper = TrainHyper(**payload["hyper"])
    arch = payload["arch"]
    generator = build_generator(hyper.task, depth=arch["depth"],
                                res_counts=arch["res_counts"],
                                base_width=arch["base_width"])
    generator.load_state_dict(payload["generator"])
    return generator, payload


def fit(models: TrainState, sampler: PairSampler, hyper: TrainHyper, out_dir: str,
        steps_per_epoch: int, epochs: int | None = None, log=None) -> list:
    """Run the loop; returns the per-epoch mean breakdowns.

    Writes ``losses.csv``, ``checkpoint.pt``, and ``generator.dwb``
    under ``out_dir``; all three are rewritten atomically as training
    progresses, so a killed run never leaves partial files.
    """
    if steps_per_epoch < 1:
        raise ValueError(f"steps_per_epoch must be >= 1, got {steps_per_epoch}")
    epochs = hyper.epochs if epochs is None else epochs
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "losses.csv")
    rows = [LossBreakdown.CSV_HEADER]
    means = []
    step = 0
    for epoch in range(epochs):
        lr = hyper.lr_at(epoch)
        _set_lr(models.opt_g, lr)
        _set_lr(models.opt_d, lr)
        sums = {"content": 0.0, "adversarial": 0.0, "mse": 0.0, "d_loss": 0.0}
        for _ in range(steps_per_epoch):
            breakdown = train_step(sampler.batch(step), models, hyper)
            step += 1
            for key in sums:
                sums[key] += getattr(breakdown, key)
        mean = LossBreakdown(
            content=sums["content"] / steps_per_epoch,
            adversarial=sums["adversarial"] / steps_per_epoch,
            adv_weight=hyper.adv_weight,
            mse=sums["mse"] / steps_per_epoch,
            d_loss=sums["d_loss"] / steps_per_epoch,
        )
        means.append(mean)
        rows.append(mean.csv_row(epoch, lr))
        atomic_write_bytes(csv_path, ("\n".join(rows) + "\n").encode("utf-8"))
        save_checkpoint(models, hyper, epoch, os.path.join(out_dir, "checkpoint.pt"),
                        depth=models.generator.depth,
                        res_counts=models.generator.res_counts,
                        base_width=models.generator.widths[0])
        if log is not None:
            log(f"epoch {epoch}: {mean.csv_row(epoch, lr)}")
    models.generator.eval()
    export_bundle(models.generator, os.path.join(out_dir, "generator.dwb"))
    models.generator.train()
    return means
