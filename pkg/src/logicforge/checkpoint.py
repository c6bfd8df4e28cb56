"""Single-file TrainedModel checkpoints.

Layout::

    magic      8 bytes   b"LFCKPT\\x00\\x01"
    version    u32 LE
    hdr_len    u32 LE
    header     hdr_len bytes of UTF-8 JSON (sorted keys): spec, bn eps/momentum,
               per-layer quantizer bitwidth/signedness, frozen flag, and the
               ordered array manifest [{name, dtype, shape}]
    payload    arrays back to back in manifest order; reals are float64 LE
               (IEEE-754), masks are int64 LE
    checksum   32 bytes  SHA-256 of everything above

Scales are stored as float64 arrays, so round trips are bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .quantizer import QuantizerSpec
from .topology import NetworkSpec, SparsityMask
from .trainer import BatchNormParams, DenseLayerParams, TrainedModel

MAGIC = b"LFCKPT\x00\x01"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _arrays(model: TrainedModel):
    yield "input_ranges", model.input_ranges.astype("<f8")
    for k, (p, m) in enumerate(zip(model.layers, model.masks)):
        yield f"mask{k}", m.indices.astype("<i8")
        yield f"w{k}", p.weights.astype("<f8")
        yield f"gain{k}", p.bn.gain.astype("<f8")
        yield f"bias{k}", p.bn.bias.astype("<f8")
        yield f"running_mean{k}", p.bn.running_mean.astype("<f8")
        yield f"running_var{k}", p.bn.running_var.astype("<f8")
        yield f"scale{k}", np.array([p.act_quant.scale], dtype="<f8")


def to_bytes(model: TrainedModel) -> bytes:
    arrays = list(_arrays(model))
    header = {
        "spec": model.spec.to_dict(),
        "frozen": model.frozen,
        "layers": [
            {
                "bits": p.act_quant.bitwidth,
                "signed": p.act_quant.signed,
                "bn_eps": p.bn.eps,
                "bn_momentum": p.bn.momentum,
            }
            for p in model.layers
        ],
        "arrays": [{"name": n, "dtype": a.dtype.str, "shape": list(a.shape)} for n, a in arrays],
    }
    hdr = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = MAGIC + struct.pack("<II", VERSION, len(hdr)) + hdr + b"".join(a.tobytes() for _, a in arrays)
    return body + hashlib.sha256(body).digest()


def from_bytes(blob: bytes) -> TrainedModel:
    if len(blob) < len(MAGIC) + 8 + 32 or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a logicforge checkpoint")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch (file corrupted)")
    version, hdr_len = struct.unpack_from("<II", body, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = len(MAGIC) + 8
    header = json.loads(body[off : off + hdr_len])
    off += hdr_len
    arrays = {}
    for entry in header["arrays"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        a = np.frombuffer(body, dtype=dt, count=count, offset=off).reshape(entry["shape"])
        arrays[entry["name"]] = a.astype(dt.newbyteorder("="))
        off += count * dt.itemsize
    if off != len(body):
        raise CheckpointError("trailing bytes in checkpoint payload")
    spec = NetworkSpec.from_dict(header["spec"])
    layers, masks = [], []
    for k, meta in enumerate(header["layers"]):
        masks.append(SparsityMask(arrays[f"mask{k}"], spec.layers[k].in_width))
        bn = BatchNormParams(
            arrays[f"gain{k}"],
            arrays[f"bias{k}"],
            arrays[f"running_mean{k}"],
            arrays[f"running_var{k}"],
            meta["bn_eps"],
            meta["bn_momentum"],
        )
        q = QuantizerSpec(meta["bits"], float(arrays[f"scale{k}"][0]), meta["signed"])
        layers.append(DenseLayerParams(arrays[f"w{k}"], bn, q))
    return TrainedModel(spec, masks, layers, arrays["input_ranges"], header["frozen"])


def save_checkpoint(model: TrainedModel, path) -> None:
    Path(path).write_bytes(to_bytes(model))


def load_checkpoint(path) -> TrainedModel:
    return from_bytes(Path(path).read_bytes())
