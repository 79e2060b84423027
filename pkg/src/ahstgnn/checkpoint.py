"""Binary checkpoints.

Layout: ``b"AHST"``, u32 format version, u64 header length, a UTF-8 JSON
header, then little-endian float64 payloads. The header lists every tensor
as ``{name, shape, offset}`` with offsets counted from the payload start.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Normalizer
from .errors import CheckpointError
from .model import ModelConfig, ModelParams, init_params
from .train import AdamState, TrainState

MAGIC = b"AHST"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


@dataclass
class Checkpoint:
    config: ModelConfig
    params: ModelParams
    normalizer: Normalizer | None
    state: TrainState | None
    meta: dict


def save_checkpoint(
    path,
    params: ModelParams,
    config: ModelConfig,
    normalizer: Normalizer | None = None,
    state: TrainState | None = None,
    meta: dict | None = None,
) -> None:
    tensors: dict[str, np.ndarray] = {k: v.data for k, v in params.named().items()}
    header_state = None
    if state is not None:
        for k, arr in state.adam.m.items():
            tensors[f"adam.m.{k}"] = arr
        for k, arr in state.adam.v.items():
            tensors[f"adam.v.{k}"] = arr
        if state.best_params is not None:
            for k, arr in state.best_params.items():
                tensors[f"best.{k}"] = arr
        header_state = {
            "epoch": state.epoch,
            "adam_step": state.adam.step,
            "rng_state": state.rng_state,
            "best_val": state.best_val if np.isfinite(state.best_val) else None,
            "bad_epochs": state.bad_epochs,
            "stopped": state.stopped,
        }
    entries = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "config": config.to_dict(),
        "config_hash": config.structural_hash(),
        "normalizer": normalizer.to_dict() if normalizer is not None else None,
        "state": header_state,
        "meta": meta or {},
        "tensors": entries,
        "payload_bytes": offset,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    Path(path).write_bytes(_PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + b"".join(chunks))


def load_checkpoint(path, expected: ModelConfig | None = None) -> Checkpoint:
    """Read a checkpoint; with ``expected`` every tensor must match that config's shapes."""
    blob = Path(path).read_bytes()
    if len(blob) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated before the header")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {magic!r})")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    start = _PREFIX.size + hlen
    if len(blob) < start:
        raise CheckpointError(f"{path}: truncated inside the JSON header")
    try:
        header = json.loads(blob[_PREFIX.size : start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    payload = memoryview(blob)[start:]
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(f"{path}: payload has {len(payload)} bytes, header declares {header['payload_bytes']}")

    arrays: dict[str, np.ndarray] = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        end = e["offset"] + 8 * count
        if end > len(payload):
            raise CheckpointError(f"{path}: tensor {e['name']} runs past the end of the file")
        arrays[e["name"]] = np.frombuffer(payload[e["offset"] : end], dtype="<f8").astype(np.float64).reshape(e["shape"])

    config = ModelConfig.from_dict(header["config"])
    params = init_params(expected or config, np.random.default_rng(0))
    for name, t in params.named().items():
        if name not in arrays:
            raise CheckpointError(f"{path}: tensor {name} missing")
        if arrays[name].shape != t.shape:
            raise CheckpointError(f"{path}: tensor {name} has shape {arrays[name].shape}, model needs {t.shape}")
        t.data = arrays[name]
    if expected is not None:
        _check_against(expected, config, path)

    state = None
    hs = header.get("state")
    if hs is not None:
        adam = AdamState(
            m={k[len("adam.m.") :]: v for k, v in arrays.items() if k.startswith("adam.m.")},
            v={k[len("adam.v.") :]: v for k, v in arrays.items() if k.startswith("adam.v.")},
            step=hs["adam_step"],
        )
        best = {k[len("best.") :]: v for k, v in arrays.items() if k.startswith("best.")} or None
        state = TrainState(
            adam=adam,
            rng_state=hs["rng_state"],
            epoch=hs["epoch"],
            best_val=np.inf if hs["best_val"] is None else hs["best_val"],
            best_params=best,
            bad_epochs=hs["bad_epochs"],
            stopped=hs["stopped"],
        )
    norm = Normalizer.from_dict(header["normalizer"]) if header.get("normalizer") else None
    return Checkpoint(config=config, params=params, normalizer=norm, state=state, meta=header.get("meta", {}))


def _check_against(expected: ModelConfig, found: ModelConfig, path) -> None:
    if expected.structural_hash() == found.structural_hash():
        return
    diffs = [
        f"{k}: checkpoint {v!r} vs config {getattr(expected, k)!r}"
        for k, v in found.to_dict().items()
        if k != "seed" and getattr(expected, k) != v
    ]
    raise CheckpointError(f"{path}: checkpoint does not fit the configured model ({'; '.join(diffs)})")
