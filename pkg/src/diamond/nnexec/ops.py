"""Layer math: convolution, transposed convolution, batchnorm, activations.

Convolution is cross-correlation (no kernel flip) with zero padding
floor(k/2), so stride-1 output dims equal input dims and stride-2 halves
even inputs. Transposed convolution realizes the exact stride-2 doubling
rule: output = 2 * input for kernel k, padding floor(k/2), and an output
padding of 1, matching the usual framework semantics. Weight layout is
(out_ch, in_ch, kh, kw) everywhere, including transposed kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BN_EPS = 1e-5
LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class LayerSpec:
    """One executable node of a ModelGraph.

    kind is one of conv | conv_transpose | batchnorm | activation |
    residual_add | input_skip. Convolutions carry (out_channels,
    in_channels, kh, kw) and stride; batchnorm carries channels;
    activation carries the function name and leaky slope; the two skip
    kinds carry the index of the earlier layer (or the graph input)
    whose output is summed with the running tensor.
    """

    kind: str
    name: str
    out_channels: int = 0
    in_channels: int = 0
    kh: int = 0
    kw: int = 0
    stride: int = 1
    channels: int = 0
    activation: str = "none"
    slope: float = LEAKY_SLOPE
    skip_source: int | None = None

    KINDS = ("conv", "conv_transpose", "batchnorm", "activation", "residual_add", "input_skip")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r} (layer {self.name!r})")
        if self.kind in ("conv", "conv_transpose"):
            if self.stride not in (1, 2):
                raise ValueError(f"layer {self.name}: stride must be 1 or 2")
            if min(self.out_channels, self.in_channels, self.kh, self.kw) < 1:
                raise ValueError(f"layer {self.name}: bad kernel dims")
        if self.kind == "activation" and self.activation not in ("relu", "leaky_relu", "none"):
            raise ValueError(f"layer {self.name}: unknown activation {self.activation!r}")
        if self.kind == "residual_add" and self.skip_source is None:
            raise ValueError(f"layer {self.name}: residual_add requires skip_source")

    def tensor_specs(self) -> list:
        """(name, shape) pairs of the weights this layer owns, in payload order."""
        if self.kind in ("conv", "conv_transpose"):
            return [
                (f"{self.name}.weight", (self.out_channels, self.in_channels, self.kh, self.kw)),
                (f"{self.name}.bias", (self.out_channels,)),
            ]
        if self.kind == "batchnorm":
            c = (self.channels,)
            return [
                (f"{self.name}.gamma", c),
                (f"{self.name}.beta", c),
                (f"{self.name}.mean", c),
                (f"{self.name}.var", c),
            ]
        return []


def _check_input(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3:
        raise ValueError(f"layer {layer.name}: input must be (C, H, W), got {x.shape}")
    return x


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> np.ndarray:
    """Strided cross-correlation with zero padding floor(k/2)."""
    c, h, width = x.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise ValueError(f"conv expects {ci} input channels, got {c}")
    ph, pw = kh // 2, kw // 2
    hp = (h + 2 * ph - kh) // stride + 1
    wp = (width + 2 * pw - kw) // stride + 1
    xpad = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(xpad, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    col = win.transpose(1, 2, 0, 3, 4).reshape(hp * wp, c * kh * kw)
    out = col @ w.reshape(o, -1).T + b[None, :]
    return np.ascontiguousarray(out.T.reshape(o, hp, wp), dtype=np.float32)


def conv_transpose2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 2) -> np.ndarray:
    """Transposed convolution with the exact-doubling size rule.

    Equivalent to zero-stuffing the input at the stride rate, padding by
    (k-1-p) before and (k-1-p+output_padding) after with p = floor(k/2)
    and output_padding = stride - 1, then correlating with the spatially
    flipped kernel. Weight layout stays (out_ch, in_ch, kh, kw).
    """
    c, h, width = x.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise ValueError(f"conv_transpose expects {ci} input channels, got {c}")
    ph, pw = kh // 2, kw // 2
    opad = stride - 1
    out_h = (h - 1) * stride - 2 * ph + kh + opad
    out_w = (width - 1) * stride - 2 * pw + kw + opad
    y = np.zeros((c, (h - 1) * stride + 1, (width - 1) * stride + 1), dtype=np.float32)
    y[:, ::stride, ::stride] = x
    y = np.pad(
        y,
        ((0, 0), (kh - 1 - ph, kh - 1 - ph + opad), (kw - 1 - pw, kw - 1 - pw + opad)),
    )
    wf = w[:, :, ::-1, ::-1]
    win = np.lib.stride_tricks.sliding_window_view(y, (kh, kw), axis=(1, 2))
    col = win.transpose(1, 2, 0, 3, 4).reshape(out_h * out_w, c * kh * kw)
    out = col @ wf.reshape(o, -1).T + b[None, :]
    return np.ascontiguousarray(out.T.reshape(o, out_h, out_w), dtype=np.float32)


def batchnorm_inference(
    x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, mean: np.ndarray, var: np.ndarray
) -> np.ndarray:
    """Inference-mode batchnorm y = gamma * (x - mean)/sqrt(var + eps) + beta."""
    inv = (gamma / np.sqrt(var + np.float32(BN_EPS))).astype(np.float32)
    return inv[:, None, None] * (x - mean[:, None, None].astype(np.float32)) + beta[
        :, None, None
    ].astype(np.float32)


def apply_activation(x: np.ndarray, kind: str, slope: float = LEAKY_SLOPE) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, np.float32(0.0))
    if kind == "leaky_relu":
        return np.where(x >= 0, x, np.float32(slope) * x)
    if kind == "none":
        return x
    raise ValueError(f"unknown activation {kind!r}")


def layer_forward(layer: LayerSpec, x: np.ndarray, weights=None, skip: np.ndarray | None = None) -> np.ndarray:
    """Execute one layer on input x; skip supplies the second operand
    for residual_add/input_skip. Raises with the layer name on shape errors."""
    x = _check_input(x, layer)
    try:
        if layer.kind == "conv":
            return conv2d(x, weights[f"{layer.name}.weight"], weights[f"{layer.name}.bias"], layer.stride)
        if layer.kind == "conv_transpose":
            return conv_transpose2d(x, weights[f"{layer.name}.weight"], weights[f"{layer.name}.bias"], layer.stride)
        if layer.kind == "batchnorm":
            return batchnorm_inference(
                x,
                weights[f"{layer.name}.gamma"],
                weights[f"{layer.name}.beta"],
                weights[f"{layer.name}.mean"],
                weights[f"{layer.name}.var"],
            )
        if layer.kind == "activation":
            return apply_activation(x, layer.activation, layer.slope)
        # residual_add / input_skip
        if skip is None:
            raise ValueError("skip tensor required")
        if skip.shape != x.shape:
            raise ValueError(f"skip shape {skip.shape} != input shape {x.shape}")
        return x + skip
    except ValueError as exc:
        raise ValueError(f"layer {layer.name!r}: {exc}") from exc
