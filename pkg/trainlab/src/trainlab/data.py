"""Training-pair synthesis and image file plumbing.

The trainer never imports the restoration package. It talks to it only
through subcommands and files, so the degradation physics is restated
here from its documented definitions and the test suite cross-checks
the two implementations bit for bit through the CLI:

* AWGN drawn from the splitmix64 counter stream: the n-th state is
  seed + n * 0x9E3779B97F4A7C15 (mod 2^64) pushed through the splitmix
  finalizer, uniforms are u = (bits >> 11) * 2^-53, and pairs feed the
  Box-Muller map z = sqrt(-2 ln(1 - u1)) * cos(2 pi u2).
* Separable bicubic resampling with a = -0.5, center-aligned
  coordinates (x + 0.5) / factor - 0.5, four taps clamped to the edge.
  The resolution task degrades by downsampling 2x then upsampling back,
  quantizing to float32 between the two passes exactly like the engine.

Images travel as ``rawf32`` files: a 16-byte little-endian header
(magic ``DIMG``, u32 height, u32 width, u32 reserved) followed by
row-major float32 samples. Round trips are lossless, which the
cross-component checks rely on. 8/16-bit grayscale PNG is accepted as
dataset input and mapped to [0, 1] by s / (2^bits - 1).
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

RAWF32_MAGIC = b"DIMG"
RAWF32_HEADER = struct.Struct("<4sIII")

TASKS = ("denoise", "sr2x")
DENOISE_SIGMA255 = 15.0

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix_finalize(x: np.ndarray) -> np.ndarray:
    z = x.astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def uniform_stream(seed: int, count: int) -> np.ndarray:
    """First ``count`` uniforms in [0, 1) of the splitmix64 stream."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    state = np.uint64(seed & _MASK64) + idx * _GAMMA
    bits = _splitmix_finalize(state)
    return (bits >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def normal_stream(seed: int, count: int) -> np.ndarray:
    """Deterministic N(0,1) samples via Box-Muller on the uniform stream."""
    u = uniform_stream(seed, 2 * count)
    u1 = u[0::2]
    u2 = u[1::2]
    return np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2)


def _finalize_int(x: int) -> int:
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(base: int, *indices: int) -> int:
    """Fold counters into a fresh 64-bit stream seed (order-sensitive)."""
    state = base & _MASK64
    for ix in indices:
        state = _finalize_int((state + ((ix & _MASK64) + 1) * 0x9E3779B97F4A7C15) & _MASK64)
    return state


def add_noise(clean: np.ndarray, sigma255: float, seed: int) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise with std sigma255 / 255, unclamped."""
    if sigma255 < 0:
        raise ValueError(f"sigma255 must be >= 0, got {sigma255}")
    clean = np.asarray(clean, dtype=np.float32)
    if sigma255 == 0:
        return clean.copy()
    level = sigma255 / 255.0
    n = normal_stream(seed, clean.shape[0] * clean.shape[1]).reshape(clean.shape)
    return (clean.astype(np.float64) + level * n).astype(np.float32)


def cubic_weight(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Cubic convolution kernel W(t) with free parameter a."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    w = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    w[near] = (a + 2.0) * t[near] ** 3 - (a + 3.0) * t[near] ** 2 + 1.0
    w[far] = a * t[far] ** 3 - 5.0 * a * t[far] ** 2 + 8.0 * a * t[far] - 4.0 * a
    return w


def _resample_axis_weights(n_in: int, n_out: int, factor: float):
    out = np.arange(n_out, dtype=np.float64)
    coord = (out + 0.5) / factor - 0.5
    base = np.floor(coord).astype(np.int64)
    frac = coord - base
    offsets = np.array([-1, 0, 1, 2], dtype=np.int64)
    idx = np.clip(base[:, None] + offsets[None, :], 0, n_in - 1)
    weights = cubic_weight(frac[:, None] - offsets[None, :])
    return idx, weights


def bicubic_resize(arr: np.ndarray, factor: float) -> np.ndarray:
    """Bicubic resample by 0.5 or 2.0; float64 inside, float32 out."""
    if factor not in (0.5, 2.0):
        raise ValueError(f"resize factor must be 0.5 or 2.0, got {factor}")
    arr = np.asarray(arr, dtype=np.float32)
    if factor == 0.5 and (arr.shape[0] % 2 or arr.shape[1] % 2):
        raise ValueError(
            f"downsample by 2 requires even dimensions, got {arr.shape[0]}x{arr.shape[1]}"
        )
    data = arr.astype(np.float64)
    for axis in (0, 1):
        n_in = data.shape[axis]
        n_out = int(round(factor * n_in))
        idx, w = _resample_axis_weights(n_in, n_out, factor)
        gathered = np.take(data, idx, axis=axis)
        w_b = w[:, :, None] if axis == 0 else w[None, :, :]
        data = np.sum(gathered * w_b, axis=axis + 1)
    return data.astype(np.float32)


def degrade_pair(clean: np.ndarray, task: str, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Synthesize one (low-quality, label) pair for a training task.

    denoise adds AWGN at the fixed training level; sr2x loses the high
    band through a down-2 / up-2 bicubic round trip.
    """
    clean = np.asarray(clean, dtype=np.float32)
    if task == "denoise":
        return add_noise(clean, DENOISE_SIGMA255, seed), clean
    if task == "sr2x":
        return bicubic_resize(bicubic_resize(clean, 0.5), 2.0), clean
    raise ValueError(f"unknown task {task!r}")


def atomic_write_bytes(path: str, blob: bytes) -> None:
    """Write via a temp file in the target directory plus rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_rawf32(path: str, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(np.asarray(arr, dtype=np.float32))
    if arr.ndim != 2:
        raise ValueError(f"rawf32 stores 2-D images, got shape {arr.shape}")
    header = RAWF32_HEADER.pack(RAWF32_MAGIC, arr.shape[0], arr.shape[1], 0)
    atomic_write_bytes(path, header + arr.astype("<f4").tobytes())


def read_rawf32(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < RAWF32_HEADER.size:
        raise ValueError(f"{path}: rawf32 file shorter than its header")
    magic, height, width, _reserved = RAWF32_HEADER.unpack_from(blob)
    if magic != RAWF32_MAGIC:
        raise ValueError(f"{path}: bad rawf32 magic {magic!r}")
    expected = RAWF32_HEADER.size + 4 * height * width
    if len(blob) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=RAWF32_HEADER.size)
    return np.ascontiguousarray(data.reshape(height, width).astype(np.float32))


def load_gray(path: str) -> np.ndarray:
    """Load a dataset image (.rawf32 or grayscale PNG) as float32 HxW."""
    if path.endswith(".rawf32"):
        return read_rawf32(path)
    from PIL import Image as PILImage

    with PILImage.open(path) as pil:
        arr = np.asarray(pil)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    if arr.dtype == np.uint8:
        return (arr.astype(np.float64) / 255.0).astype(np.float32)
    if arr.dtype == np.uint16:
        return (arr.astype(np.float64) / 65535.0).astype(np.float32)
    if np.issubdtype(arr.dtype, np.integer):
        return (arr.astype(np.float64) / 65535.0).astype(np.float32)
    return arr.astype(np.float32)


def make_training_image(size: int, seed: int) -> np.ndarray:
    """Deterministic synthetic clean image: smooth field plus sharp shapes.

    A coarse Gaussian grid is upsampled bicubically to full size to give
    low-frequency texture, then a few constant rectangles and discs are
    stamped on top so the corpus has the edges that restoration training
    needs. Values land in [0, 1].
    """
    if size < 16 or size % 2:
        raise ValueError(f"training images need an even size >= 16, got {size}")
    base = size
    doublings = 0
    while base % 2 == 0 and base // 2 >= 4:
        base //= 2
        doublings += 1
    field = normal_stream(derive_seed(seed, 0), base * base).reshape(base, base)
    field = field.astype(np.float32)
    for _ in range(doublings):
        field = bicubic_resize(field, 2.0)
    spread = float(np.abs(field).max()) or 1.0
    img = 0.5 + 0.2 * field / spread

    u = uniform_stream(derive_seed(seed, 1), 24)
    pos = 0
    for shape in range(3):
        top = int(u[pos] * (size - 8))
        left = int(u[pos + 1] * (size - 8))
        h = 4 + int(u[pos + 2] * (size // 3))
        w = 4 + int(u[pos + 3] * (size // 3))
        value = 0.15 + 0.7 * u[pos + 4]
        pos += 5
        if shape % 2 == 0:
            img[top : min(top + h, size), left : min(left + w, size)] = value
        else:
            radius = max(3, min(h, w) // 2)
            cy = min(max(top, radius), size - radius - 1)
            cx = min(max(left, radius), size - radius - 1)
            yy, xx = np.ogrid[:size, :size]
            img[(yy - cy) ** 2 + (xx - cx) ** 2 <= radius * radius] = value
    return np.clip(img, 0.0, 1.0).astype(np.float32)


class PairSampler:
    """Deterministic on-the-fly batch synthesis from clean images.

    Every batch is a pure function of (base_seed, step): image choice,
    crop position, and the per-item noise seed all come from the counter
    stream, so training runs replay exactly.
    """

    def __init__(self, images: list, task: str, patch: int, batch_size: int, base_seed: int):
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r}")
        if patch < 16 or patch % 2:
            raise ValueError(f"patch size must be even and >= 16, got {patch}")
        if batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {batch_size}")
        self.images = [np.asarray(im, dtype=np.float32) for im in images]
        if not self.images:
            raise ValueError("sampler needs at least one clean image")
        for im in self.images:
            if im.shape[0] < patch or im.shape[1] < patch:
                raise ValueError(
                    f"image {im.shape} smaller than the {patch}x{patch} patch"
                )
        self.task = task
        self.patch = patch
        self.batch_size = batch_size
        self.base_seed = base_seed

    def batch(self, step: int):
        """(low, high) float32 torch tensors of shape (b, 1, patch, patch)."""
        import torch

        u = uniform_stream(derive_seed(self.base_seed, step), 3 * self.batch_size)
        lows, highs = [], []
        for item in range(self.batch_size):
            img = self.images[int(u[3 * item] * len(self.images))]
            max_top = img.shape[0] - self.patch
            max_left = img.shape[1] - self.patch
            top = 2 * int(u[3 * item + 1] * (max_top // 2 + 1)) if max_top else 0
            left = 2 * int(u[3 * item + 2] * (max_left // 2 + 1)) if max_left else 0
            clean = img[top : top + self.patch, left : left + self.patch]
            low, high = degrade_pair(clean, self.task, derive_seed(self.base_seed, step, item))
            lows.append(low)
            highs.append(high)
        low_t = torch.from_numpy(np.stack(lows)[:, None, :, :])
        high_t = torch.from_numpy(np.stack(highs)[:, None, :, :])
        return low_t, high_t
