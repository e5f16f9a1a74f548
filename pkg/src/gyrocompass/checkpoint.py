"""Versioned model checkpoints.

One container format for both network kinds: an 8-byte magic, a little-
endian uint64 header length, a JSON header (architecture descriptor,
optional schedule parameters, training-config echo, seeds, parameter
layout, and a SHA-256 of the parameter bytes), then the flat parameter
array as little-endian float64.  Loading rebuilds the network and restores
parameters bit-exactly, so inference after a round trip is identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np
import torch

from .diffusion import DenoiserNetwork, NoiseSchedule, build_schedule
from .errors import ChecksumError, FormatError, MissingCheckpoint
from .heading import HeadingNetwork

MAGIC = b"GYROCKP1"
FORMAT_VERSION = 1


def _flatten_params(net: torch.nn.Module) -> tuple[bytes, list, dict]:
    order = []
    shapes = {}
    chunks = []
    for name, tensor in net.state_dict().items():
        arr = tensor.detach().numpy().astype("<f8")
        order.append(name)
        shapes[name] = list(arr.shape)
        chunks.append(arr.tobytes(order="C"))
    return b"".join(chunks), order, shapes


def save_checkpoint(path, net, schedule: NoiseSchedule | None = None,
                    train_config: dict | None = None, seeds: dict | None = None) -> None:
    params, order, shapes = _flatten_params(net)
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": net.descriptor,
        "schedule": None
        if schedule is None
        else {"T": schedule.T, "beta_min": schedule.beta_min, "beta_max": schedule.beta_max},
        "train_config": train_config,
        "seeds": seeds,
        "param_order": order,
        "param_shapes": shapes,
        "params_sha256": hashlib.sha256(params).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(params)
    os.replace(tmp, path)


def _build_network(arch: dict):
    kind = arch.get("kind")
    if kind == "denoiser":
        return DenoiserNetwork(
            n_channels=arch["n_channels"],
            hidden_size=arch["hidden_size"],
            num_layers=arch["num_layers"],
            embed_dim=arch["embed_dim"],
        )
    if kind == "heading":
        return HeadingNetwork(
            variant=arch["variant"],
            hidden_size=arch["hidden_size"],
            dropout=arch["dropout"],
        )
    raise FormatError(f"unknown architecture kind {kind!r}")


def load_checkpoint(path):
    """Return (network, header dict).  The header's schedule (if any) is
    additionally materialized under the 'schedule_obj' key."""
    if not os.path.exists(path):
        raise MissingCheckpoint(f"no checkpoint at {path}")
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise FormatError(f"{path} is not a checkpoint file")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        try:
            header = json.loads(fh.read(header_len))
        except json.JSONDecodeError as exc:
            raise FormatError(f"corrupt checkpoint header in {path}: {exc}") from exc
        if header.get("format_version") != FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {header.get('format_version')}")
        params = fh.read()
    if hashlib.sha256(params).hexdigest() != header["params_sha256"]:
        raise ChecksumError(f"parameter checksum mismatch in {path}")
    net = _build_network(header["architecture"])
    state = {}
    offset = 0
    for name in header["param_order"]:
        shape = header["param_shapes"][name]
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(params, dtype="<f8", count=count, offset=offset).reshape(shape)
        state[name] = torch.from_numpy(arr.copy())
        offset += count * 8
    if offset != len(params):
        raise FormatError(f"{len(params) - offset} trailing parameter bytes in {path}")
    net.load_state_dict(state)
    net.eval()
    if header.get("schedule"):
        sdict = header["schedule"]
        header["schedule_obj"] = build_schedule(sdict["T"], sdict["beta_min"], sdict["beta_max"])
    return net, header
