"""Versioned checkpoint container.

Layout: 8-byte magic ``EVMCKPT\\0``, uint32 LE format version, uint32 LE header
length, UTF-8 JSON header, then every tensor of the state dict as float32
little-endian values in header order.  The header carries the full run config
text and, per tensor, its name, shape and element offset.
"""
import json
import struct

import numpy as np
import torch

from .config import config_from_dict, dump_config, parse_config_text
from .errors import CheckpointError
from .model import MutualNet

MAGIC = b"EVMCKPT\0"
FORMAT_VERSION = 1


def save_checkpoint(path, model, cfg, meta=None):
    entries, blobs, offset = [], [], 0
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().contiguous().numpy().astype("<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "dtype": str(tensor.dtype)})
        blobs.append(arr.tobytes())
        offset += arr.size
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "config": dump_config(cfg), "tensors": entries, "meta": meta or {}},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_checkpoint(path):
    """Return ``(config, header, {name: float32 array})`` without building a model."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if len(data) < 16:
        raise CheckpointError(f"{path}: truncated header")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    try:
        header = json.loads(data[16 : 16 + hlen].decode("utf-8"))
        cfg = config_from_dict(parse_config_text(header["config"]))
    except (ValueError, KeyError) as exc:  # JSON, UTF-8 and config errors are all ValueErrors
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    payload = np.frombuffer(data, dtype="<f4", offset=16 + hlen)
    tensors = {}
    for entry in header["tensors"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        chunk = payload[entry["offset"] : entry["offset"] + n]
        if chunk.size != n:
            raise CheckpointError(f"{path}: truncated tensor {entry['name']}")
        tensors[entry["name"]] = chunk.reshape(entry["shape"])
    return cfg, header, tensors


def load_checkpoint(path):
    """Rebuild the model described by the checkpoint's config and load its weights."""
    cfg, header, tensors = read_checkpoint(path)
    model = MutualNet(cfg.model_config())
    state = model.state_dict()
    if set(state) != set(tensors):
        missing = sorted(set(state) ^ set(tensors))
        raise CheckpointError(f"{path}: parameter names do not match config: {missing[:5]}")
    for name, ref in state.items():
        arr = tensors[name]
        if tuple(arr.shape) != tuple(ref.shape):
            raise CheckpointError(f"{path}: {name} has shape {arr.shape}, config expects {tuple(ref.shape)}")
        state[name] = torch.from_numpy(arr.copy()).to(ref.dtype)
    model.load_state_dict(state)
    model.eval()
    return model, cfg, header.get("meta", {})
