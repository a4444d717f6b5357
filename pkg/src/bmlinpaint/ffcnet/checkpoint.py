"""Checkpoint file: magic, JSON header, raw float32 little-endian parameters.

Layout::

    b"FFCKPT01"                  8 bytes
    header length (uint32 LE)    4 bytes
    header (UTF-8 JSON)          arch, hyperparameters, seed, tensor table
    payload                      tensors back to back as <f4, in table order

Each tensor table entry is ``{"name", "shape", "offset", "count"}`` with
``offset`` and ``count`` in scalars from the start of the payload.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .model import ArchConfig, Inpainter, build_model

MAGIC = b"FFCKPT01"


def save_checkpoint(model: Inpainter, path, hyperparams: dict | None = None, seed: int = 0) -> None:
    tensors, blobs, offset = [], [], 0
    for name, t in model.state_dict().items():
        arr = t.detach().cpu().numpy().astype("<f4")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        blobs.append(arr.tobytes())
        offset += arr.size
    header = {
        "version": 1,
        "arch": model.arch.to_dict(),
        "hyperparams": hyperparams or {},
        "seed": int(seed),
        "dtype": "f32le",
        "tensors": tensors,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    Path(path).write_bytes(MAGIC + struct.pack("<I", len(head)) + head + b"".join(blobs))


def load_checkpoint(path) -> tuple[Inpainter, dict]:
    """Return (model, header); parameters are restored bit-exactly as float32."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not an FFC checkpoint")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    payload = np.frombuffer(raw[12 + hlen :], dtype="<f4")
    model = build_model(ArchConfig.from_dict(header["arch"]), seed=header.get("seed", 0))
    state = {}
    for t in header["tensors"]:
        chunk = payload[t["offset"] : t["offset"] + t["count"]]
        if chunk.size != t["count"]:
            raise ValueError(f"{path}: payload truncated at tensor {t['name']}")
        state[t["name"]] = torch.from_numpy(chunk.astype(np.float32).reshape(t["shape"]))
    model.load_state_dict(state)
    return model, header
