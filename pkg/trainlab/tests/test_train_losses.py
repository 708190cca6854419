import math

import pytest
import torch
from torch import nn

from trainlab import (
    FeatureExtractor,
    LossBreakdown,
    TrainingDiverged,
    gradient_penalty,
    perceptual_content_loss,
    pixel_mse,
)


class LinearCritic(nn.Module):
    """D(x) = <w, x>; its gradient is w everywhere."""

    def __init__(self, shape, norm):
        super().__init__()
        w = torch.ones(shape)
        self.w = nn.Parameter(w * (norm / w.norm()))

    def forward(self, x):
        return (x * self.w).flatten(1).sum(dim=1)


def test_unit_gradient_linear_critic_gives_zero():
    critic = LinearCritic((1, 6, 6), norm=1.0)
    real = torch.rand(4, 1, 6, 6)
    fake = torch.rand(4, 1, 6, 6)
    penalty = gradient_penalty(critic, real, fake, coef=10.0)
    assert float(penalty.detach()) == pytest.approx(0.0, abs=1e-9)


def test_norm_three_critic_gives_forty():
    critic = LinearCritic((1, 6, 6), norm=3.0)
    real = torch.rand(4, 1, 6, 6)
    fake = torch.rand(4, 1, 6, 6)
    penalty = gradient_penalty(critic, real, fake, coef=10.0)
    assert float(penalty.detach()) == pytest.approx(40.0, abs=1e-5)


def test_penalty_scales_linearly_with_coefficient():
    critic = LinearCritic((1, 4, 4), norm=2.0)
    real = torch.rand(2, 1, 4, 4)
    fake = torch.rand(2, 1, 4, 4)
    p1 = float(gradient_penalty(critic, real, fake, coef=1.0).detach())
    p7 = float(gradient_penalty(critic, real, fake, coef=7.0).detach())
    assert p7 == pytest.approx(7.0 * p1, rel=1e-6)


def test_penalty_shape_mismatch_rejected():
    critic = LinearCritic((1, 4, 4), norm=1.0)
    with pytest.raises(ValueError, match="shapes"):
        gradient_penalty(critic, torch.rand(2, 1, 4, 4), torch.rand(2, 1, 5, 5), 10.0)


def test_penalty_respects_pinned_mixing_points():
    torch.manual_seed(3)
    critic = nn.Sequential(nn.Flatten(), nn.Linear(16, 8), nn.Tanh(), nn.Linear(8, 1))
    real = torch.rand(3, 1, 4, 4)
    fake = torch.rand(3, 1, 4, 4)
    eps = torch.tensor([0.2, 0.5, 0.9]).view(3, 1, 1, 1)
    a = float(gradient_penalty(critic, real, fake, 10.0, eps=eps).detach())
    b = float(gradient_penalty(critic, real, fake, 10.0, eps=eps).detach())
    c = float(gradient_penalty(critic, real, fake, 10.0, eps=torch.zeros(3, 1, 1, 1)).detach())
    assert a == b
    assert a != c


def test_penalty_is_nonnegative_for_random_critic():
    torch.manual_seed(9)
    critic = nn.Sequential(nn.Conv2d(1, 4, 3, padding=1), nn.Tanh(), nn.Flatten(),
                           nn.Linear(4 * 16, 1))
    for trial in range(5):
        real = torch.randn(4, 1, 4, 4)
        fake = torch.randn(4, 1, 4, 4)
        assert float(gradient_penalty(critic, real, fake, 10.0).detach()) >= 0.0


def test_penalty_backpropagates_into_critic():
    torch.manual_seed(2)
    critic = nn.Sequential(nn.Flatten(), nn.Linear(16, 1))
    penalty = gradient_penalty(critic, torch.rand(2, 1, 4, 4), torch.rand(2, 1, 4, 4), 10.0)
    penalty.backward()
    weight = critic[1].weight
    assert weight.grad is not None
    assert float(weight.grad.abs().sum()) > 0


def test_perceptual_zero_on_identical_inputs():
    extractor = FeatureExtractor.seeded()
    x = torch.rand(2, 1, 32, 32)
    assert float(perceptual_content_loss(x, x.clone(), extractor)) == 0.0


def test_perceptual_nonnegative_and_symmetric_in_magnitude():
    extractor = FeatureExtractor.seeded()
    a = torch.rand(1, 1, 32, 32)
    b = torch.rand(1, 1, 32, 32)
    ab = float(perceptual_content_loss(a, b, extractor))
    ba = float(perceptual_content_loss(b, a, extractor))
    assert ab >= 0.0
    assert ab == pytest.approx(ba, rel=1e-6)


def test_identity_tap_reduces_to_pixel_mse():
    extractor = FeatureExtractor.identity()
    a = torch.rand(2, 1, 16, 16)
    b = torch.rand(2, 1, 16, 16)
    loss = float(perceptual_content_loss(a, b, extractor))
    assert loss == pytest.approx(float(pixel_mse(a, b)), abs=1e-9)


def test_perceptual_equals_manual_tap_sum():
    extractor = FeatureExtractor.seeded()
    a = torch.rand(1, 1, 32, 32)
    b = torch.rand(1, 1, 32, 32)
    manual = sum(
        float(torch.mean((ta - tb) ** 2))
        for ta, tb in zip(extractor(a), extractor(b))
    )
    assert float(perceptual_content_loss(a, b, extractor)) == pytest.approx(
        manual, rel=1e-6)


def test_perceptual_shape_mismatch_rejected():
    extractor = FeatureExtractor.identity()
    with pytest.raises(ValueError, match="shape"):
        perceptual_content_loss(torch.rand(1, 1, 8, 8), torch.rand(1, 1, 8, 4), extractor)


def test_perceptual_empty_extractor_rejected():
    class Empty:
        def __call__(self, x):
            return []

    with pytest.raises(ValueError, match="taps"):
        perceptual_content_loss(torch.rand(1, 1, 8, 8), torch.rand(1, 1, 8, 8), Empty())


def test_extractor_weights_are_frozen():
    for extractor in (FeatureExtractor.seeded(), FeatureExtractor.identity()):
        assert all(not p.requires_grad for p in extractor.parameters())
        assert not extractor.training


def test_seeded_extractor_is_reproducible_and_multiscale():
    a = FeatureExtractor.seeded()
    b = FeatureExtractor.seeded()
    x = torch.rand(1, 1, 32, 32)
    taps_a = a(x)
    taps_b = b(x)
    assert len(taps_a) == 5
    assert all(torch.equal(ta, tb) for ta, tb in zip(taps_a, taps_b))
    sizes = [t.shape[-1] for t in taps_a]
    assert sizes == [32, 16, 8, 4, 2]


def test_loss_breakdown_identity_is_exact():
    bd = LossBreakdown(content=0.123456, adversarial=-7.654321, adv_weight=0.005,
                       mse=0.01, d_loss=1.5)
    assert bd.total == bd.content + bd.adv_weight * bd.adversarial


def test_loss_breakdown_rejects_nonfinite_terms():
    with pytest.raises(TrainingDiverged, match="content"):
        LossBreakdown(content=math.nan, adversarial=0.0, adv_weight=0.0, mse=0.0, d_loss=0.0)
    with pytest.raises(TrainingDiverged, match="d_loss"):
        LossBreakdown(content=0.0, adversarial=0.0, adv_weight=0.0, mse=0.0,
                      d_loss=math.inf)


def test_loss_breakdown_csv_row():
    bd = LossBreakdown(content=0.5, adversarial=2.0, adv_weight=0.1, mse=0.25, d_loss=-1.0)
    row = bd.csv_row(epoch=3, lr=1e-4)
    cells = row.split(",")
    assert len(cells) == len(LossBreakdown.CSV_HEADER.split(","))
    assert cells[0] == "3"
    assert float(cells[3]) == pytest.approx(0.7)
