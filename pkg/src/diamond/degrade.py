"""Degradation operators H and the noise model.

Provides the linear, dimension-preserving measurement operators used
both to synthesize low-quality inputs and to drive the data-fidelity
term of the iterative solver:

* ``identity``
* ``blur``: 2-D correlation with a unit-sum kernel (replicate or
  periodic boundary)
* ``sr2x_resample``: bicubic downsample by 2 followed by bicubic
  upsample by 2 (pre-upsampling super-resolution pipeline), so the
  operator is same-size like the others

AWGN is generated from a documented platform-independent stream:
the 64-bit counter sequence of splitmix64 produces uniforms
u = (x >> 11) * 2^-53, consumed pairwise by the Box-Muller transform
z = sqrt(-2 ln(1 - u1)) * cos(2 pi u2). Same seed, same noise, on any
platform; the numpy Generator stack is deliberately not used here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imagebuf import Image

_SPLITMIX_GAMMA = np.uint64(0x9E3779B97F4A7C15)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    # Finalizer of splitmix64; operates on uint64 with wraparound.
    z = x.astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _uniform_stream(seed: int, count: int) -> np.ndarray:
    """First ``count`` uniforms in [0, 1) of the splitmix64 stream."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + idx * _SPLITMIX_GAMMA
    bits = _splitmix64(state)
    return (bits >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def standard_normal_stream(seed: int, count: int) -> np.ndarray:
    """Deterministic N(0,1) samples via Box-Muller on the uniform stream."""
    u = _uniform_stream(seed, 2 * count)
    u1 = u[0::2]
    u2 = u[1::2]
    # 1 - u1 lies in (0, 1], keeping the log argument strictly positive.
    return np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class Kernel:
    """Odd-sized square correlation kernel with unit-sum taps."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 2 or taps.shape[0] != taps.shape[1]:
            raise ValueError(f"kernel must be square, got shape {taps.shape}")
        if taps.shape[0] % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {taps.shape[0]}")
        if abs(float(taps.sum()) - 1.0) > 1e-6:
            raise ValueError(f"kernel taps must sum to 1 within 1e-6, got {taps.sum()}")
        taps = np.ascontiguousarray(taps)
        taps.flags.writeable = False
        object.__setattr__(self, "taps", taps)

    @property
    def size(self) -> int:
        return self.taps.shape[0]


def gaussian_kernel(size: int, sigma: float) -> Kernel:
    """Sampled 2-D Gaussian, taps[i,j] ~ exp(-((i-c)^2+(j-c)^2)/(2 sigma^2)),
    normalized to unit sum. c is the center index (size-1)/2."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    c = (size - 1) / 2.0
    ii, jj = np.mgrid[0:size, 0:size]
    taps = np.exp(-(((ii - c) ** 2 + (jj - c) ** 2) / (2.0 * sigma * sigma)))
    return Kernel(taps / taps.sum())


@dataclass(frozen=True)
class DegradationOp:
    """Same-size linear degradation: identity, blur(kernel), or sr2x_resample."""

    kind: str
    kernel: Kernel | None = None
    boundary: str = "replicate"

    def __post_init__(self):
        if self.kind not in ("identity", "blur", "sr2x_resample"):
            raise ValueError(f"unknown degradation kind {self.kind!r}")
        if self.kind == "blur" and self.kernel is None:
            raise ValueError("blur degradation requires a kernel")
        if self.boundary not in ("replicate", "periodic"):
            raise ValueError(f"unknown boundary rule {self.boundary!r}")


IDENTITY = DegradationOp(kind="identity")

_BOUNDARY_MODE = {"replicate": "nearest", "periodic": "wrap"}


def correlate2d(data: np.ndarray, taps: np.ndarray, boundary: str) -> np.ndarray:
    """2-D correlation in float64 with the named boundary rule."""
    return ndimage.correlate(
        np.asarray(data, dtype=np.float64), taps, mode=_BOUNDARY_MODE[boundary]
    )


def apply_operator(op: DegradationOp, img: Image) -> Image:
    """Apply a degradation operator; identity returns the input unchanged."""
    if op.kind == "identity":
        return img
    if op.kind == "blur":
        return Image(correlate2d(img.data, op.kernel.taps, op.boundary))
    # sr2x_resample: down by 2 then back up, both bicubic.
    low = bicubic_resize(img, 0.5)
    return bicubic_resize(low, 2.0)


@dataclass(frozen=True)
class NoiseLevelMap:
    """Per-pixel noise sigma in [0,1] intensity units."""

    sigma: np.ndarray

    def __post_init__(self):
        s = np.ascontiguousarray(np.asarray(self.sigma, dtype=np.float32))
        if np.any(s < 0):
            raise ValueError("noise level map entries must be >= 0")
        s.flags.writeable = False
        object.__setattr__(self, "sigma", s)


def add_awgn(img: Image, sigma255: float, seed: int) -> tuple[Image, NoiseLevelMap]:
    """Add i.i.d. zero-mean Gaussian noise with std sigma255/255.

    Output is NOT clamped; clamping is a caller decision (I/O clamps).
    The map is the constant sigma255/255 at every pixel.
    """
    if sigma255 < 0:
        raise ValueError(f"sigma255 must be >= 0, got {sigma255}")
    level = sigma255 / 255.0
    level_map = NoiseLevelMap(np.full(img.shape, level, dtype=np.float32))
    if sigma255 == 0:
        return img, level_map
    n = standard_normal_stream(seed, img.height * img.width).reshape(img.shape)
    return Image(img.data.astype(np.float64) + level * n), level_map


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
    """Gather indices and cubic weights for one axis (center-aligned).

    Output sample x reads input coordinate (x + 0.5)/factor - 0.5; the four
    taps floor(coord)-1 .. floor(coord)+2 are clamped to the valid range
    (replicate boundary).
    """
    out = np.arange(n_out, dtype=np.float64)
    coord = (out + 0.5) / factor - 0.5
    base = np.floor(coord).astype(np.int64)
    frac = coord - base
    offsets = np.array([-1, 0, 1, 2], dtype=np.int64)
    idx = base[:, None] + offsets[None, :]
    weights = cubic_weight(frac[:, None] - offsets[None, :])
    idx = np.clip(idx, 0, n_in - 1)
    return idx, weights


def bicubic_resize(img: Image, factor: float) -> Image:
    """Separable bicubic resample (a = -0.5) by a factor of 0.5 or 2.0."""
    if factor not in (0.5, 2.0):
        raise ValueError(f"resize factor must be 0.5 or 2.0, got {factor}")
    if factor == 0.5 and (img.height % 2 or img.width % 2):
        raise ValueError(
            f"downsample by 2 requires even dimensions, got {img.height}x{img.width}"
        )
    data = img.data.astype(np.float64)
    for axis in (0, 1):
        n_in = data.shape[axis]
        n_out = int(round(factor * n_in))
        idx, w = _resample_axis_weights(n_in, n_out, factor)
        gathered = np.take(data, idx, axis=axis)
        # gathered carries the 4-tap axis right after the resampled axis
        w_b = w[:, :, None] if axis == 0 else w[None, :, :]
        data = np.sum(gathered * w_b, axis=axis + 1)
    return Image(data)
