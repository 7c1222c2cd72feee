"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"GSEP" | u32 version | u64 header length | UTF-8 JSON header | tensor payloads

The header carries ``arch``, ``stft``, ``meta`` and a tensor manifest of
``{name, shape, dtype, offset, nbytes}`` entries; offsets are relative to the
first payload byte. Normalization statistics and optional Adam moments are
stored as ordinary tensors (``norm.mean``, ``adam.m.<name>`` ...).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from gsep.dsp import NormStats
from gsep.errors import CheckpointError
from gsep.neuralnet.adam import AdamState
from gsep.neuralnet.params import (
    ArchConfig,
    DenseLayerParams,
    LstmLayerParams,
    NetworkParams,
)

MAGIC = b"GSEP"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<4sIQ")


def _le(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))


def save_checkpoint(params: NetworkParams, path, opt: AdamState | None = None) -> None:
    tensors: list[tuple[str, np.ndarray]] = list(params.named_tensors())
    if params.norm_stats is not None:
        tensors += [("norm.mean", params.norm_stats.mean), ("norm.std", params.norm_stats.std)]
    header: dict = {
        "arch": params.arch.to_dict(),
        "activations": [params.hidden_fc.activation, params.output_fc.activation],
        "meta": params.meta,
    }
    if opt is not None:
        header["adam"] = {
            "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2,
            "eps": opt.eps, "step_count": opt.step_count,
        }
        for name in opt.m:
            tensors += [(f"adam.m.{name}", opt.m[name]), (f"adam.v.{name}", opt.v[name])]

    manifest, blobs, offset = [], [], 0
    for name, arr in tensors:
        data = _le(np.asarray(arr)).tobytes()
        manifest.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": _le(np.asarray(arr)).dtype.str,
            "offset": offset,
            "nbytes": len(data),
        })
        blobs.append(data)
        offset += len(data)
    header["tensors"] = manifest
    head = json.dumps(header, sort_keys=True).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(head)))
        fh.write(head)
        for b in blobs:
            fh.write(b)
    tmp.replace(path)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a checkpoint into its JSON header and a name -> array mapping."""
    raw = Path(path).read_bytes()
    if len(raw) < _PREAMBLE.size:
        raise CheckpointError(f"corrupt checkpoint {path}: file too short")
    magic, version, head_len = _PREAMBLE.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"corrupt checkpoint {path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format version {version}, this build reads {FORMAT_VERSION}"
        )
    start = _PREAMBLE.size + head_len
    if len(raw) < start:
        raise CheckpointError(f"corrupt checkpoint {path}: truncated header")
    try:
        header = json.loads(raw[_PREAMBLE.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: unreadable header ({exc})") from exc

    tensors = {}
    for entry in header.get("tensors", []):
        lo = start + entry["offset"]
        hi = lo + entry["nbytes"]
        if hi > len(raw):
            raise CheckpointError(f"corrupt checkpoint {path}: tensor {entry['name']} truncated")
        arr = np.frombuffer(raw[lo:hi], dtype=np.dtype(entry["dtype"]))
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    expected = start + sum(e["nbytes"] for e in header.get("tensors", []))
    if len(raw) != expected:
        raise CheckpointError(f"corrupt checkpoint {path}: {len(raw) - expected} trailing bytes")
    return header, tensors


def load_checkpoint(path, with_optimizer: bool = False):
    header, tensors = read_checkpoint(path)
    try:
        arch = ArchConfig(**header["arch"])
        layers = [
            LstmLayerParams(tensors[f"lstm{k}.W_x"], tensors[f"lstm{k}.W_h"], tensors[f"lstm{k}.b"])
            for k in range(len(arch.lstm_sizes))
        ]
        act_hidden, act_out = header.get("activations", ["relu", "relu"])
        hidden = DenseLayerParams(tensors["fc_hidden.W"], tensors["fc_hidden.b"], act_hidden)
        out = DenseLayerParams(tensors["fc_out.W"], tensors["fc_out.b"], act_out)
    except KeyError as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: missing {exc}") from exc
    stats = None
    if "norm.mean" in tensors:
        stats = NormStats(tensors["norm.mean"], tensors["norm.std"])
    params = NetworkParams(layers, hidden, out, arch, stats, header.get("meta", {}))
    if not with_optimizer:
        return params

    opt = None
    if "adam" in header:
        a = header["adam"]
        opt = AdamState(a["lr"], a["beta1"], a["beta2"], a["eps"], a["step_count"])
        for name, _ in params.named_tensors():
            if f"adam.m.{name}" in tensors:
                opt.m[name] = tensors[f"adam.m.{name}"]
                opt.v[name] = tensors[f"adam.v.{name}"]
    return params, opt
