"""Weight bundle serialization.

File layout (all integers little-endian):

    bytes 0..3    magic "DWB1"
    bytes 4..7    u32 manifest byte length
    ...           manifest, UTF-8 JSON
    next 4        u32 CRC-32 of the payload
    next 8        u64 payload byte length
    ...           payload: float32 tensors, row-major, concatenated in
                  manifest order; kernel layout (out_ch, in_ch, kh, kw)

The manifest carries the executable layer list, the tensor name/shape
table, and an "arch" block (variant, depth, res_counts, widths,
residual_output) describing the canonical family the graph belongs to.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from ..imagebuf import atomic_write_bytes
from .graph import ModelGraph
from .ops import LayerSpec

MAGIC = b"DWB1"
_HEAD = struct.Struct("<4sI")
_PAYLOAD_HEAD = struct.Struct("<IQ")


class BundleError(ValueError):
    """Malformed, corrupted, or inconsistent weight bundle."""


def _layer_to_json(layer: LayerSpec) -> dict:
    d = {"kind": layer.kind, "name": layer.name}
    if layer.kind in ("conv", "conv_transpose"):
        d.update(out=layer.out_channels, in_=layer.in_channels, kh=layer.kh,
                 kw=layer.kw, stride=layer.stride)
    elif layer.kind == "batchnorm":
        d["channels"] = layer.channels
    elif layer.kind == "activation":
        d["activation"] = layer.activation
        d["slope"] = layer.slope
    elif layer.kind in ("residual_add", "input_skip"):
        if layer.skip_source is not None:
            d["skip"] = layer.skip_source
    return d


def _layer_from_json(d: dict) -> LayerSpec:
    kind = d.get("kind")
    name = d.get("name", "?")
    if kind not in LayerSpec.KINDS:
        raise BundleError(f"unknown layer kind {kind!r} (layer {name!r})")
    if kind in ("conv", "conv_transpose"):
        return LayerSpec(kind, name, out_channels=d["out"], in_channels=d["in_"],
                         kh=d["kh"], kw=d["kw"], stride=d.get("stride", 1))
    if kind == "batchnorm":
        return LayerSpec(kind, name, channels=d["channels"])
    if kind == "activation":
        return LayerSpec(kind, name, activation=d.get("activation", "none"),
                         slope=d.get("slope", 0.2))
    return LayerSpec(kind, name, skip_source=d.get("skip"))


def save_bundle(model: ModelGraph, path: str) -> None:
    """Serialize a model to the bundle format (written atomically)."""
    tensors = model.tensor_order()
    manifest = {
        "format": "diamond-weight-bundle",
        "version": 1,
        "arch": {
            "variant": model.variant,
            "depth": model.depth,
            "res_counts": list(model.res_counts),
            "widths": list(model.widths),
            "in_channels": model.in_channels,
            "residual_output": model.residual_output,
        },
        "layers": [_layer_to_json(l) for l in model.layers],
        "tensors": [{"name": n, "shape": list(s)} for n, s in tensors],
    }
    payload = b"".join(
        np.ascontiguousarray(model.weights[name], dtype="<f4").tobytes()
        for name, _shape in tensors
    )
    mbytes = json.dumps(manifest, separators=(",", ":"), sort_keys=True).encode("utf-8")
    blob = (
        _HEAD.pack(MAGIC, len(mbytes))
        + mbytes
        + _PAYLOAD_HEAD.pack(zlib.crc32(payload) & 0xFFFFFFFF, len(payload))
        + payload
    )
    atomic_write_bytes(path, blob)


def load_bundle(path: str) -> ModelGraph:
    """Load and validate a bundle; returns an immutable ModelGraph."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise BundleError(f"cannot read bundle {path}: {exc}") from exc
    if len(blob) < _HEAD.size or blob[:4] != MAGIC:
        raise BundleError(f"bad bundle magic in {path}")
    _magic, mlen = _HEAD.unpack_from(blob)
    off = _HEAD.size
    try:
        manifest = json.loads(blob[off : off + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleError(f"bad bundle manifest: {exc}") from exc
    off += mlen
    if len(blob) < off + _PAYLOAD_HEAD.size:
        raise BundleError("bundle truncated before payload header")
    crc_stored, plen = _PAYLOAD_HEAD.unpack_from(blob, off)
    payload_off = off + _PAYLOAD_HEAD.size
    payload = blob[payload_off : payload_off + plen]
    if len(payload) != plen:
        raise BundleError(
            f"payload truncated: header says {plen} bytes, file has {len(payload)}"
        )
    crc_actual = zlib.crc32(payload) & 0xFFFFFFFF
    if crc_actual != crc_stored:
        raise BundleError(
            f"payload CRC mismatch at byte offset {payload_off}: "
            f"stored {crc_stored:#010x}, computed {crc_actual:#010x}"
        )

    layers = tuple(_layer_from_json(d) for d in manifest.get("layers", []))
    declared = [(t["name"], tuple(t["shape"])) for t in manifest.get("tensors", [])]
    expected = [(n, s) for layer in layers for n, s in layer.tensor_specs()]
    if declared != expected:
        raise BundleError("tensor table does not match the layer list")
    total = sum(int(np.prod(s)) for _n, s in declared) * 4
    if total != plen:
        raise BundleError(
            f"payload length {plen} does not match declared tensors ({total} bytes)"
        )

    weights = {}
    cursor = 0
    for name, shape in declared:
        n = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=cursor)
        weights[name] = arr.reshape(shape)
        cursor += 4 * n

    arch = manifest.get("arch", {})
    try:
        return ModelGraph(
            layers=layers,
            weights=weights,
            variant=arch.get("variant", "sr"),
            depth=int(arch.get("depth", 0)),
            res_counts=tuple(arch.get("res_counts", ())),
            widths=tuple(arch.get("widths", ())),
            residual_output=bool(arch.get("residual_output", False)),
            in_channels=int(arch.get("in_channels", 1)),
        )
    except ValueError as exc:
        raise BundleError(f"inconsistent bundle: {exc}") from exc
