"""Training hyperparameters.

Defaults are keyed by (task, anatomy profile) and reproduce the
published operating points: the adversarial weight, gradient-penalty
coefficient, learning rate, and batch size of each task. The Adam
moment decays are fixed at (0.5, 0.9); the learning rate halves every
100 epochs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

TASKS = ("denoise", "sr2x")
PROFILES = ("abdominal", "oral")

BETA1 = 0.5
BETA2 = 0.9

# (task, profile) -> adversarial weight, penalty coefficient, learning
# rate, batch size.
PROFILE_DEFAULTS = {
    ("denoise", "abdominal"): (0.005, 10.0, 5e-5, 16),
    ("denoise", "oral"): (0.001, 10.0, 1e-4, 48),
    ("sr2x", "abdominal"): (0.005, 10.0, 2e-5, 16),
    ("sr2x", "oral"): (0.001, 10.0, 2e-5, 48),
}


@dataclass(frozen=True)
class TrainHyper:
    """One training configuration; fields mirror the trainer CLI flags."""

    task: str = "denoise"
    adv_weight: float = 0.005
    penalty_coef: float = 10.0
    learning_rate: float = 5e-5
    batch_size: int = 16
    epochs: int = 300
    n_critic: int = 5
    beta1: float = BETA1
    beta2: float = BETA2

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.adv_weight < 0:
            raise ValueError(f"adversarial weight must be >= 0, got {self.adv_weight}")
        if self.penalty_coef < 0:
            raise ValueError(f"penalty coefficient must be >= 0, got {self.penalty_coef}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.n_critic < 1:
            raise ValueError(f"n_critic must be >= 1, got {self.n_critic}")
        if (self.beta1, self.beta2) != (BETA1, BETA2):
            raise ValueError(
                f"optimizer moments are fixed at ({BETA1}, {BETA2}), "
                f"got ({self.beta1}, {self.beta2})"
            )

    @classmethod
    def for_profile(cls, task: str, profile: str, **overrides) -> "TrainHyper":
        """Published defaults for a (task, anatomy profile) pair."""
        key = (task, profile)
        if key not in PROFILE_DEFAULTS:
            raise ValueError(
                f"no defaults for task {task!r} with profile {profile!r}; "
                f"tasks {TASKS} and profiles {PROFILES}"
            )
        adv, penalty, lr, batch = PROFILE_DEFAULTS[key]
        hyper = cls(task=task, adv_weight=adv, penalty_coef=penalty,
                    learning_rate=lr, batch_size=batch)
        return replace(hyper, **overrides) if overrides else hyper

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a zero-based epoch index (halved every 100)."""
        if epoch < 0:
            raise ValueError(f"epoch must be >= 0, got {epoch}")
        return self.learning_rate * 0.5 ** (epoch // 100)
