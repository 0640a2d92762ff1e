"""Checkpoint file: b"HCMKR1", manifest length (u64 LE), UTF-8 JSON manifest,
then raw little-endian float64 arrays in manifest order.

The manifest carries a SHA-256 of the array payload and a SHA-256 of itself
(computed with that field absent), so corruption anywhere in the file is
detected on load.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
import torch

from . import __version__
from .diff import OptimizerState
from .errors import CheckpointError
from .params import ModelParams

MAGIC = b"HCMKR1"
FORMAT = 1


@dataclass
class Checkpoint:
    params: ModelParams
    optimizer: OptimizerState
    config_hash: str
    config: dict
    epoch: int = 0
    state: dict = field(default_factory=dict)  # training bookkeeping (early stopping etc.)


def _arrays(ckpt):
    out = [(f"param.{k}", v) for k, v in ckpt.params.arrays().items()]
    out += [(f"adam.m.{k}", v) for k, v in ckpt.optimizer.m.items()]
    out += [(f"adam.v.{k}", v) for k, v in ckpt.optimizer.v.items()]
    return out


def to_bytes(ckpt):
    arrays = _arrays(ckpt)
    payload = b"".join(
        np.ascontiguousarray(t.detach().numpy(), dtype="<f8").tobytes() for _, t in arrays
    )
    opt = ckpt.optimizer
    manifest = {
        "format": FORMAT,
        "version": __version__,
        "config_hash": ckpt.config_hash,
        "config": ckpt.config,
        "epoch": ckpt.epoch,
        "state": ckpt.state,
        "optimizer": {"step": opt.step, "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps},
        "arrays": [{"name": n, "shape": list(t.shape), "dtype": "<f8"} for n, t in arrays],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    manifest["manifest_sha256"] = _digest(manifest)
    head = _dumps(manifest)
    return MAGIC + struct.pack("<Q", len(head)) + head + payload


def _dumps(manifest):
    return json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _digest(manifest):
    return hashlib.sha256(_dumps({k: v for k, v in manifest.items() if k != "manifest_sha256"})).hexdigest()


def save(ckpt, path):
    data = to_bytes(ckpt)
    with open(path, "wb") as fh:
        fh.write(data)


def from_bytes(data):
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic bytes)")
    off = len(MAGIC)
    if len(data) < off + 8:
        raise CheckpointError("truncated checkpoint header")
    (n,) = struct.unpack("<Q", data[off:off + 8])
    off += 8
    try:
        manifest = json.loads(data[off:off + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupted manifest: {exc}") from None
    if not isinstance(manifest, dict) or manifest.get("manifest_sha256") != _digest(manifest):
        raise CheckpointError("checksum mismatch: checkpoint manifest is corrupted")
    payload = data[off + n:]
    if hashlib.sha256(payload).hexdigest() != manifest.get("payload_sha256"):
        raise CheckpointError("checksum mismatch: checkpoint payload is corrupted")
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format')}")
    try:
        return _build(manifest, payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint manifest: {exc!r}") from None


def _build(manifest, payload):
    arrays, pos = {}, 0
    for spec in manifest["arrays"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        raw = np.frombuffer(payload, dtype="<f8", count=count, offset=pos)
        arrays[spec["name"]] = torch.from_numpy(raw.astype(np.float64).reshape(spec["shape"]))
        pos += 8 * count
    if pos != len(payload):
        raise CheckpointError("payload size disagrees with manifest")
    names = [k[len("param."):] for k in arrays if k.startswith("param.")]
    params = ModelParams(**{k: arrays[f"param.{k}"] for k in names})
    o = manifest["optimizer"]
    opt = OptimizerState(
        o["lr"], o["beta1"], o["beta2"], o["eps"], o["step"],
        {k: arrays[f"adam.m.{k}"] for k in names}, {k: arrays[f"adam.v.{k}"] for k in names},
    )
    return Checkpoint(params, opt, manifest["config_hash"], manifest["config"], manifest["epoch"],
                      manifest.get("state", {}))


def load(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return from_bytes(data)
