import pytest

from trainlab import PROFILE_DEFAULTS, TrainHyper


def test_denoise_abdominal_defaults():
    h = TrainHyper.for_profile("denoise", "abdominal")
    assert (h.adv_weight, h.penalty_coef, h.learning_rate, h.batch_size) == (
        0.005, 10.0, 5e-5, 16)


def test_denoise_oral_defaults():
    h = TrainHyper.for_profile("denoise", "oral")
    assert (h.adv_weight, h.penalty_coef, h.learning_rate, h.batch_size) == (
        0.001, 10.0, 1e-4, 48)


def test_sr2x_abdominal_defaults():
    h = TrainHyper.for_profile("sr2x", "abdominal")
    assert (h.adv_weight, h.penalty_coef, h.learning_rate, h.batch_size) == (
        0.005, 10.0, 2e-5, 16)


def test_sr2x_oral_defaults():
    h = TrainHyper.for_profile("sr2x", "oral")
    assert (h.adv_weight, h.penalty_coef, h.learning_rate, h.batch_size) == (
        0.001, 10.0, 2e-5, 48)


def test_penalty_coefficient_is_ten_everywhere():
    assert all(v[1] == 10.0 for v in PROFILE_DEFAULTS.values())


def test_profile_task_recorded():
    assert TrainHyper.for_profile("sr2x", "oral").task == "sr2x"


def test_profile_overrides_apply():
    h = TrainHyper.for_profile("denoise", "abdominal", learning_rate=1e-3, n_critic=1)
    assert h.learning_rate == 1e-3
    assert h.n_critic == 1
    assert h.batch_size == 16


def test_unknown_profile_rejected():
    with pytest.raises(ValueError, match="cranial"):
        TrainHyper.for_profile("denoise", "cranial")


def test_unknown_task_rejected():
    with pytest.raises(ValueError, match="task"):
        TrainHyper(task="deblur")


def test_optimizer_moments_locked():
    with pytest.raises(ValueError, match="fixed"):
        TrainHyper(beta1=0.9)
    with pytest.raises(ValueError, match="fixed"):
        TrainHyper(beta2=0.999)
    h = TrainHyper()
    assert (h.beta1, h.beta2) == (0.5, 0.9)


@pytest.mark.parametrize(
    "field,value",
    [
        ("adv_weight", -0.1),
        ("penalty_coef", -1.0),
        ("learning_rate", 0.0),
        ("batch_size", 0),
        ("epochs", 0),
        ("n_critic", 0),
    ],
)
def test_invalid_values_rejected(field, value):
    with pytest.raises(ValueError):
        TrainHyper(**{field: value})


def test_learning_rate_halves_every_100_epochs():
    h = TrainHyper(learning_rate=4e-4)
    assert h.lr_at(0) == 4e-4
    assert h.lr_at(99) == 4e-4
    assert h.lr_at(100) == 2e-4
    assert h.lr_at(199) == 2e-4
    assert h.lr_at(200) == 1e-4
    assert h.lr_at(350) == 5e-5


def test_lr_at_negative_epoch_rejected():
    with pytest.raises(ValueError, match="epoch"):
        TrainHyper().lr_at(-1)
