"""Checkpoint container: a zip of .npy tensors plus a JSON metadata record.

Entry timestamps are pinned so identical parameters give identical bytes.
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .network import NetConfig, NetworkParams, param_shapes

FORMAT = "psmp-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    params: NetworkParams
    meta: dict = field(default_factory=dict)


def _entry(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(path, params: NetworkParams, meta: dict | None = None, train_config=None):
    record = {"format": FORMAT, "version": VERSION, "net_config": asdict(params.config),
              "tensors": {k: list(v.shape) for k, v in params.items()}}
    if train_config is not None:
        record["train_config"] = asdict(train_config)
    record.update(meta or {})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_entry("meta.json"), json.dumps(record, sort_keys=True, indent=1))
        for name, arr in params.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr, dtype=np.float64), allow_pickle=False)
            zf.writestr(_entry(f"tensors/{name}.npy"), buf.getvalue())


def load_checkpoint(path) -> Checkpoint:
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format") != FORMAT:
            raise ValueError(f"{path} is not a {FORMAT} file")
        if meta.get("version", 0) > VERSION:
            raise ValueError(f"{path} has unsupported version {meta['version']}")
        config = NetConfig(**meta["net_config"])
        expected = param_shapes(config)
        if set(meta["tensors"]) != set(expected):
            raise ValueError(f"{path} tensors do not match the network layout")
        params = NetworkParams(config)
        for name in expected:  # canonical order, not the sorted order of the metadata
            shape = meta["tensors"][name]
            arr = np.lib.format.read_array(io.BytesIO(zf.read(f"tensors/{name}.npy")), allow_pickle=False)
            if list(arr.shape) != shape:
                raise ValueError(f"tensor {name} has shape {arr.shape}, expected {shape}")
            params[name] = arr
    return Checkpoint(params, meta)
