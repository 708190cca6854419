"""Weight-bundle export for the inference engine.

Byte layout (all integers little-endian):

    bytes 0..3    magic "DWB1"
    bytes 4..7    u32 manifest byte length
    ...           manifest, UTF-8 JSON (sorted keys, compact separators)
    next 4        u32 CRC-32 of the payload
    next 8        u64 payload byte length
    ...           payload: float32 tensors, row-major, in manifest order

The manifest carries the flat layer list, the tensor name/shape table,
and an "arch" block (variant, depth, res_counts, widths, in_channels,
residual_output). Kernel layout in the payload is (out_ch, in_ch, kh,
kw) for every convolution; torch stores transposed-conv kernels as
(in_ch, out_ch, kh, kw), so those are permuted on export. Batchnorm
contributes gamma, beta, running mean, running variance, in that
order.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np
import torch

from .data import atomic_write_bytes
from .models import Generator, LayerPlan

MAGIC = b"DWB1"
_HEAD = struct.Struct("<4sI")
_PAYLOAD_HEAD = struct.Struct("<IQ")


def _layer_json(plan: LayerPlan) -> dict:
    d = {"kind": plan.kind, "name": plan.name}
    if plan.kind in ("conv", "conv_transpose"):
        d.update(out=plan.out_channels, in_=plan.in_channels, kh=plan.kh,
                 kw=plan.kw, stride=plan.stride)
    elif plan.kind == "batchnorm":
        d["channels"] = plan.channels
    elif plan.kind == "activation":
        d["activation"] = plan.activation
        d["slope"] = plan.slope
    elif plan.kind == "residual_add":
        d["skip"] = plan.skip_source
    else:
        raise ValueError(f"unsupported layer kind {plan.kind!r} in model")
    return d


def _tensor_specs(plan: LayerPlan) -> list:
    if plan.kind in ("conv", "conv_transpose"):
        return [
            (f"{plan.name}.weight", (plan.out_channels, plan.in_channels, plan.kh, plan.kw)),
            (f"{plan.name}.bias", (plan.out_channels,)),
        ]
    if plan.kind == "batchnorm":
        c = (plan.channels,)
        return [
            (f"{plan.name}.gamma", c),
            (f"{plan.name}.beta", c),
            (f"{plan.name}.mean", c),
            (f"{plan.name}.var", c),
        ]
    return []


def _layer_tensors(generator: Generator, plan: LayerPlan) -> list:
    """Payload arrays for one layer, already in bundle layout."""
    if plan.kind in ("activation", "residual_add"):
        return []
    module = generator.layer_module(plan.name)
    if plan.kind == "conv":
        return [module.weight, module.bias]
    if plan.kind == "conv_transpose":
        return [module.weight.permute(1, 0, 2, 3), module.bias]
    if plan.kind == "batchnorm":
        return [module.weight, module.bias, module.running_mean, module.running_var]
    raise ValueError(f"unsupported layer kind {plan.kind!r} in model")


def export_bundle(generator: Generator, path: str) -> None:
    """Serialize a generator to the bundle format (written atomically)."""
    tensors = []
    arrays = []
    with torch.no_grad():
        for plan in generator.plans:
            specs = _tensor_specs(plan)
            values = _layer_tensors(generator, plan)
            for (name, shape), value in zip(specs, values):
                arr = value.detach().cpu().to(torch.float32).numpy()
                if arr.shape != shape:
                    raise ValueError(
                        f"tensor {name}: shape {arr.shape} != declared {shape}"
                    )
                tensors.append({"name": name, "shape": list(shape)})
                arrays.append(np.ascontiguousarray(arr, dtype="<f4"))
    manifest = {
        "format": "diamond-weight-bundle",
        "version": 1,
        "arch": {
            "variant": generator.variant,
            "depth": generator.depth,
            "res_counts": list(generator.res_counts),
            "widths": list(generator.widths),
            "in_channels": generator.in_channels,
            "residual_output": generator.residual_output,
        },
        "layers": [_layer_json(p) for p in generator.plans],
        "tensors": tensors,
    }
    payload = b"".join(a.tobytes() for a in arrays)
    mbytes = json.dumps(manifest, separators=(",", ":"), sort_keys=True).encode("utf-8")
    blob = (
        _HEAD.pack(MAGIC, len(mbytes))
        + mbytes
        + _PAYLOAD_HEAD.pack(zlib.crc32(payload) & 0xFFFFFFFF, len(payload))
        + payload
    )
    atomic_write_bytes(path, blob)


def read_manifest(path: str) -> dict:
    """Parse the JSON manifest of a bundle file (no payload decode)."""
    with open(path, "rb") as fh:
        head = fh.read(_HEAD.size)
        if len(head) < _HEAD.size or head[:4] != MAGIC:
            raise ValueError(f"{path}: bad bundle magic")
        _magic, mlen = _HEAD.unpack(head)
        return json.loads(fh.read(mlen).decode("utf-8"))
