import numpy as np
import pytest

from trainlab import (
    PairSampler,
    add_noise,
    bicubic_resize,
    degrade_pair,
    make_training_image,
    normal_stream,
    read_rawf32,
    uniform_stream,
    write_rawf32,
)
from trainlab.data import cubic_weight, derive_seed

from engine_cli import requires_engine, run_engine
from refimpl import mse_ref, normal_ref, resize_ref, uniform_ref


def test_uniform_stream_matches_integer_reference():
    for seed in (0, 123, (1 << 64) - 1):
        mine = uniform_stream(seed, 40)
        ref = uniform_ref(seed, 40)
        assert np.array_equal(mine, np.array(ref))


def test_uniform_stream_seed_wraps_mod_2_64():
    assert np.array_equal(uniform_stream(5, 16), uniform_stream(5 + (1 << 64), 16))


def test_normal_stream_matches_scalar_reference():
    mine = normal_stream(2024, 50)
    ref = np.array(normal_ref(2024, 50))
    assert np.max(np.abs(mine - ref)) <= 1e-12


def test_normal_stream_moments():
    z = normal_stream(7, 40000)
    assert abs(float(z.mean())) < 0.02
    assert abs(float(z.std()) - 1.0) < 0.02


def test_derive_seed_is_order_sensitive_and_stable():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
    assert derive_seed(1, 2) != derive_seed(2, 2)
    assert 0 <= derive_seed(99, 0) < (1 << 64)


def test_add_noise_determinism_and_level(flat_phantom):
    a = add_noise(flat_phantom, 15.0, 7)
    b = add_noise(flat_phantom, 15.0, 7)
    c = add_noise(flat_phantom, 15.0, 8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert float(np.std(a - flat_phantom)) == pytest.approx(15.0 / 255.0, rel=0.05)


def test_add_noise_zero_sigma_copies_input(flat_phantom):
    out = add_noise(flat_phantom, 0.0, 3)
    assert np.array_equal(out, flat_phantom)
    assert out is not flat_phantom


def test_add_noise_negative_sigma_rejected(flat_phantom):
    with pytest.raises(ValueError, match="sigma255"):
        add_noise(flat_phantom, -1.0, 0)


def test_add_noise_is_unclamped():
    bright = np.full((32, 32), 0.999, dtype=np.float32)
    noisy = add_noise(bright, 40.0, 11)
    assert float(noisy.max()) > 1.0


def test_cubic_weight_anchor_values():
    assert cubic_weight(np.array([0.0]))[0] == 1.0
    assert cubic_weight(np.array([1.0]))[0] == 0.0
    assert cubic_weight(np.array([0.5]))[0] == pytest.approx(0.5625, abs=1e-12)
    assert cubic_weight(np.array([1.5]))[0] == pytest.approx(-0.0625, abs=1e-12)
    assert cubic_weight(np.array([2.5]))[0] == 0.0


def test_cubic_weights_partition_of_unity(rng):
    for frac in rng.uniform(0, 1, size=20):
        taps = cubic_weight(frac - np.array([-1, 0, 1, 2]))
        assert float(taps.sum()) == pytest.approx(1.0, abs=1e-12)


def test_bicubic_matches_loop_reference(rng):
    arr = rng.uniform(0, 1, size=(8, 8)).astype(np.float32)
    for factor in (0.5, 2.0):
        mine = bicubic_resize(arr, factor)
        ref = resize_ref(arr, factor)
        assert mine.shape == ref.shape
        assert float(np.max(np.abs(mine - ref))) <= 1e-6


def test_bicubic_preserves_constants():
    const = np.full((16, 16), 0.37, dtype=np.float32)
    up = bicubic_resize(const, 2.0)
    down = bicubic_resize(const, 0.5)
    assert float(np.max(np.abs(up - 0.37))) <= 1e-6
    assert float(np.max(np.abs(down - 0.37))) <= 1e-6


def test_bicubic_odd_downsample_rejected():
    with pytest.raises(ValueError, match="even"):
        bicubic_resize(np.zeros((9, 8), dtype=np.float32), 0.5)
    with pytest.raises(ValueError, match="factor"):
        bicubic_resize(np.zeros((8, 8), dtype=np.float32), 3.0)


def test_degrade_pair_denoise(flat_phantom):
    low, high = degrade_pair(flat_phantom, "denoise", 9)
    assert np.array_equal(high, flat_phantom)
    assert np.array_equal(low, add_noise(flat_phantom, 15.0, 9))


def test_degrade_pair_sr2x_loses_detail(flat_phantom):
    low, high = degrade_pair(flat_phantom, "sr2x", 0)
    assert low.shape == high.shape == flat_phantom.shape
    assert float(np.abs(low - flat_phantom).max()) > 1e-3


def test_degrade_pair_unknown_task(flat_phantom):
    with pytest.raises(ValueError, match="task"):
        degrade_pair(flat_phantom, "deblur", 0)


def test_make_training_image_properties():
    img = make_training_image(64, 5)
    again = make_training_image(64, 5)
    other = make_training_image(64, 6)
    assert img.shape == (64, 64) and img.dtype == np.float32
    assert np.array_equal(img, again)
    assert not np.array_equal(img, other)
    assert float(img.min()) >= 0.0 and float(img.max()) <= 1.0
    edges = np.abs(np.diff(img.astype(np.float64), axis=0))
    assert float(edges.max()) > 0.1
    with pytest.raises(ValueError, match="size"):
        make_training_image(10, 0)


def test_pair_sampler_batches_replay_exactly():
    images = [make_training_image(96, s) for s in range(3)]
    sampler = PairSampler(images, task="denoise", patch=32, batch_size=4, base_seed=17)
    low_a, high_a = sampler.batch(5)
    low_b, high_b = sampler.batch(5)
    low_c, _ = sampler.batch(6)
    assert low_a.shape == high_a.shape == (4, 1, 32, 32)
    assert bool((low_a == low_b).all()) and bool((high_a == high_b).all())
    assert not bool((low_a == low_c).all())


def test_pair_sampler_sr2x_even_crops():
    images = [make_training_image(96, 1)]
    sampler = PairSampler(images, task="sr2x", patch=32, batch_size=2, base_seed=0)
    low, high = sampler.batch(0)
    assert low.shape == (2, 1, 32, 32)
    assert not bool((low == high).all())


def test_pair_sampler_validation():
    img = make_training_image(64, 2)
    with pytest.raises(ValueError, match="task"):
        PairSampler([img], task="deblur", patch=32, batch_size=1, base_seed=0)
    with pytest.raises(ValueError, match="patch"):
        PairSampler([img], task="denoise", patch=31, batch_size=1, base_seed=0)
    with pytest.raises(ValueError, match="batch"):
        PairSampler([img], task="denoise", patch=32, batch_size=0, base_seed=0)
    with pytest.raises(ValueError, match="at least one"):
        PairSampler([], task="denoise", patch=32, batch_size=1, base_seed=0)
    with pytest.raises(ValueError, match="smaller"):
        PairSampler([img], task="denoise", patch=128, batch_size=1, base_seed=0)


def test_rawf32_round_trip(tmp_path, rng):
    arr = rng.normal(0, 10, size=(5, 7)).astype(np.float32)
    path = str(tmp_path / "img.rawf32")
    write_rawf32(path, arr)
    back = read_rawf32(path)
    assert np.array_equal(arr, back)


def test_rawf32_header_validation(tmp_path):
    path = str(tmp_path / "bad.rawf32")
    with open(path, "wb") as fh:
        fh.write(b"NOPE" + b"\0" * 12)
    with pytest.raises(ValueError, match="magic"):
        read_rawf32(path)
    arr = np.zeros((4, 4), dtype=np.float32)
    write_rawf32(path, arr)
    blob = open(path, "rb").read()
    with open(path, "wb") as fh:
        fh.write(blob[:-8])
    with pytest.raises(ValueError, match="bytes"):
        read_rawf32(path)


def test_load_gray_png_mapping(tmp_path):
    from PIL import Image as PILImage
    from trainlab.data import load_gray

    arr8 = np.arange(64, dtype=np.uint8).reshape(8, 8)
    p8 = str(tmp_path / "a.png")
    PILImage.fromarray(arr8, mode="L").save(p8)
    loaded = load_gray(p8)
    assert loaded.dtype == np.float32
    assert float(np.max(np.abs(loaded - arr8 / 255.0))) <= 1e-7

    arr16 = (np.arange(64, dtype=np.uint16) * 1000).reshape(8, 8)
    p16 = str(tmp_path / "b.png")
    PILImage.fromarray(arr16).save(p16)
    loaded16 = load_gray(p16)
    assert float(np.max(np.abs(loaded16 - arr16 / 65535.0))) <= 1e-7


def test_mse_reference_sanity(flat_phantom):
    noisy = add_noise(flat_phantom, 15.0, 1)
    direct = float(np.mean((noisy.astype(np.float64) - flat_phantom) ** 2))
    assert mse_ref(noisy, flat_phantom) == pytest.approx(direct, rel=1e-12)


@requires_engine
def test_noise_synthesis_matches_engine_bitwise(tmp_path, flat_phantom):
    clean = str(tmp_path / "clean.rawf32")
    noisy = str(tmp_path / "noisy.rawf32")
    write_rawf32(clean, flat_phantom)
    run_engine("degrade", "--input", clean, "--output", noisy,
               "--sigma255", "15", "--seed", "7")
    assert np.array_equal(read_rawf32(noisy), add_noise(flat_phantom, 15.0, 7))


@requires_engine
def test_sr2x_synthesis_matches_engine_bitwise(tmp_path, flat_phantom):
    clean = str(tmp_path / "clean.rawf32")
    lowup = str(tmp_path / "lowup.rawf32")
    write_rawf32(clean, flat_phantom)
    run_engine("degrade", "--input", clean, "--output", lowup,
               "--kind", "sr2x_resample")
    mine, _ = degrade_pair(flat_phantom, "sr2x", 0)
    assert np.array_equal(read_rawf32(lowup), mine)


@requires_engine
def test_rawf32_files_are_readable_by_engine(tmp_path, flat_phantom):
    a = str(tmp_path / "a.rawf32")
    b = str(tmp_path / "b.rawf32")
    write_rawf32(a, flat_phantom)
    write_rawf32(b, flat_phantom)
    result = run_engine("metrics", a, b)
    assert result.stdout.strip() == "0,inf,1"
