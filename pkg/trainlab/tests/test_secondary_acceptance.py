"""End-to-end acceptance checks for the training toolkit.

Each test prints one ACCEPTANCE line so the suite doubles as a sign-off
report: the adversarial penalty term is validated analytically and against
finite differences, the feature-space content loss against plain MSE, the
exported weight bundles against the restoration engine, and the trainer
against a single-pair overfitting run.
"""

import time

import numpy as np
import pytest
import torch
from torch import nn

from trainlab import (
    FeatureExtractor,
    LossBreakdown,
    TrainHyper,
    build_generator,
    export_bundle,
    gradient_penalty,
    make_training_image,
    perceptual_content_loss,
    pixel_mse,
    read_rawf32,
    write_rawf32,
)
from trainlab.train import build_state, train_step

from engine_cli import requires_engine, run_engine


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")


class _ScaledLinearCritic(nn.Module):
    """Critic whose input gradient has a fixed, known L2 norm."""

    def __init__(self, norm: float, numel: int):
        super().__init__()
        w = torch.ones(numel, dtype=torch.float64)
        self.w = nn.Parameter(w * (norm / float(w.norm())))

    def forward(self, x):
        return (x.flatten(1) * self.w).sum(dim=1)


class _TanhConvCritic(nn.Module):
    def __init__(self):
        super().__init__()
        torch.manual_seed(8)
        self.conv = nn.Conv2d(1, 2, 3, padding=1)
        self.lin = nn.Linear(2 * 6 * 6, 1)

    def forward(self, x):
        h = torch.tanh(self.conv(x))
        return self.lin(h.flatten(1)).squeeze(1)


def test_acceptance_gradient_penalty():
    critic = _ScaledLinearCritic(norm=3.0, numel=36)
    gen = torch.Generator().manual_seed(0)
    real = torch.rand(4, 1, 6, 6, dtype=torch.float64, generator=gen)
    fake = torch.rand(4, 1, 6, 6, dtype=torch.float64, generator=gen)
    penalty = float(gradient_penalty(critic, real, fake, 10.0).detach())
    analytic_err = abs(penalty - 40.0)

    fd_critic = _TanhConvCritic().double()
    real = torch.rand(2, 1, 6, 6, dtype=torch.float64, generator=gen)
    fake = torch.rand(2, 1, 6, 6, dtype=torch.float64, generator=gen)
    eps = torch.tensor([0.3, 0.8], dtype=torch.float64).view(2, 1, 1, 1)
    auto = float(gradient_penalty(fd_critic, real, fake, 10.0, eps=eps).detach())

    mixed = eps * real + (1.0 - eps) * fake
    h = 1e-4
    norms = []
    with torch.no_grad():
        for b in range(mixed.shape[0]):
            grad = torch.zeros(mixed[b].numel(), dtype=torch.float64)
            flat = mixed[b].flatten()
            for i in range(flat.numel()):
                bump = torch.zeros_like(flat)
                bump[i] = h
                plus = fd_critic((flat + bump).view(1, 1, 6, 6))
                minus = fd_critic((flat - bump).view(1, 1, 6, 6))
                grad[i] = (plus - minus).item() / (2.0 * h)
            norms.append(float(grad.norm()))
    fd = 10.0 * float(np.mean([(n - 1.0) ** 2 for n in norms]))
    fd_err = abs(auto - fd)

    ok = analytic_err <= 1e-5 and fd_err <= 1e-3
    _report(
        "gradient_penalty",
        ok,
        f"norm-3 critic gives {penalty:.7f} (|err| {analytic_err:.2e}); "
        f"finite-difference gap {fd_err:.2e}",
    )
    assert analytic_err <= 1e-5
    assert fd_err <= 1e-3


def test_acceptance_perceptual_loss():
    extractor = FeatureExtractor.seeded(seed=2024, in_channels=1)
    gen = torch.Generator().manual_seed(1)
    x = torch.rand(2, 1, 64, 64, generator=gen)
    zero = float(perceptual_content_loss(x, x.clone(), extractor).detach())

    identity = FeatureExtractor.identity()
    y = torch.rand(2, 1, 64, 64, generator=gen)
    via_taps = float(perceptual_content_loss(x, y, identity).detach())
    via_mse = float(pixel_mse(x, y).detach())
    gap = abs(via_taps - via_mse)

    ok = zero == 0.0 and gap <= 1e-6
    _report(
        "perceptual_loss",
        ok,
        f"identical inputs -> {zero}; identity-tap vs MSE gap {gap:.2e}",
    )
    assert zero == 0.0
    assert gap <= 1e-6


@requires_engine
def test_acceptance_cross_component_parity(tmp_path):
    torch.manual_seed(0)
    generator = build_generator("sr2x")
    generator.layer_module("tail.conv").reset_parameters()
    generator.eval()
    bundle = tmp_path / "parity.dwb"
    export_bundle(generator, str(bundle))

    worst = 0.0
    for i in range(5):
        img = make_training_image(64, 500 + i)
        src = tmp_path / f"in{i}.rawf32"
        dst = tmp_path / f"out{i}.rawf32"
        write_rawf32(str(src), img)
        run_engine("infer", "--input", str(src), "--bundle", str(bundle),
                   "--output", str(dst))
        with torch.no_grad():
            ours = generator(torch.from_numpy(img)[None, None])[0, 0].numpy()
        theirs = read_rawf32(str(dst))
        worst = max(worst, float(np.max(np.abs(ours - theirs))))

    ok = worst <= 1e-4
    _report(
        "cross_component_parity",
        ok,
        f"max |trainer - engine| over 5 images = {worst:.3e}",
    )
    assert worst <= 1e-4


def test_acceptance_single_pair_overfit():
    started = time.monotonic()
    hyper = TrainHyper(
        task="denoise",
        adv_weight=0.0,
        learning_rate=1.5e-3,
        batch_size=1,
        n_critic=1,
    )
    models = build_state(
        hyper, image_size=64, extractor="identity",
        depth=1, res_counts=(2,), base_width=16, seed=0,
    )

    img = make_training_image(64, 0)
    from trainlab.data import degrade_pair

    low_np, high_np = degrade_pair(img, "denoise", 0)
    low = torch.from_numpy(low_np)[None, None]
    high = torch.from_numpy(high_np)[None, None]

    models.generator.eval()
    with torch.no_grad():
        baseline = float(pixel_mse(models.generator(low), high))
    models.generator.train()

    last: LossBreakdown | None = None
    for _ in range(500):
        last = train_step((low, high), models, hyper)
    assert last is not None
    elapsed = time.monotonic() - started

    ratio = baseline / last.mse if last.mse > 0 else float("inf")
    ok = ratio >= 10.0 and elapsed < 600.0
    _report(
        "single_pair_overfit",
        ok,
        f"MSE {baseline:.3e} -> {last.mse:.3e} ({ratio:.1f}x) "
        f"in 500 steps, {elapsed:.0f}s",
    )
    assert ratio >= 10.0
    assert elapsed < 600.0


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
