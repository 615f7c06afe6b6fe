"""JSON checkpoints for a trained split network.

Layout::

    {
      "format_version": 1,
      "dims": {"N": input width, "M": z width, "H": hidden, "T": steps, "L": LSTM layers},
      "params": {name: {"shape": [...], "values": [... row-major ...]}},
      "adam": {role: {"t": int, "m": {name: array}, "v": {name: array}}},
      "normalizer": {...},
      "config": {...}
    }

Floats are written with ``repr`` precision, so a load reproduces every array
bit for bit and save -> load -> save yields identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Mapping

import numpy as np

from .data import NormStats
from .errors import CheckpointError, StorageError
from .layers import AdamState
from .network import Role, SplitNetwork
from .numeric import DTYPE

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    network: SplitNetwork
    optimizers: dict[Role, AdamState]
    normalizer: NormStats
    steps: int
    config: dict = field(default_factory=dict)

    @property
    def dims(self) -> dict[str, int]:
        net = self.network
        return {
            "N": net.input_size,
            "M": net.hidden,
            "H": net.hidden,
            "T": self.steps,
            "L": len(net.edge) + len(net.drone) + len(net.server),
        }


def _encode(arr: np.ndarray) -> dict:
    arr = np.asarray(arr, dtype=DTYPE)
    return {"shape": list(arr.shape), "values": [float(v) for v in arr.ravel()]}


def _decode(name: str, blob: Mapping, shape: tuple[int, ...]) -> np.ndarray:
    try:
        declared = tuple(int(s) for s in blob["shape"])
        values = np.array(blob["values"], dtype=DTYPE)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"array {name!r} is malformed: {exc}") from None
    if declared != shape:
        raise CheckpointError(f"array {name!r} has shape {declared}, network expects {shape}")
    if values.size != int(np.prod(shape)):
        raise CheckpointError(f"array {name!r} declares {shape} but holds {values.size} values")
    return values.reshape(shape)


def to_dict(ckpt: Checkpoint) -> dict:
    adam = {}
    for role in Role:
        st = ckpt.optimizers[role]
        adam[role.value] = {
            "t": st.t,
            "m": {k: _encode(a) for k, a in sorted(st.m.items())},
            "v": {k: _encode(a) for k, a in sorted(st.v.items())},
        }
    return {
        "format_version": FORMAT_VERSION,
        "dims": ckpt.dims,
        "params": {k: _encode(a) for k, a in sorted(ckpt.network.params().items())},
        "adam": adam,
        "normalizer": ckpt.normalizer.to_dict(),
        "config": ckpt.config,
    }


def from_dict(d: Mapping) -> Checkpoint:
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {version!r}, expected {FORMAT_VERSION}")
    try:
        dims, params, adam = d["dims"], d["params"], d["adam"]
        normalizer = NormStats.from_dict(d["normalizer"])
        config = dict(d["config"])
        net = SplitNetwork.init(0, int(dims["N"]), int(dims["H"]))
        steps = int(dims["T"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint is missing or has a bad field: {exc}") from None

    target = net.params()
    if set(params) != set(target):
        missing, extra = sorted(set(target) - set(params)), sorted(set(params) - set(target))
        raise CheckpointError(f"parameter names differ: missing {missing}, unexpected {extra}")
    for name, arr in target.items():
        arr[...] = _decode(name, params[name], arr.shape)

    optimizers = {}
    for role in Role:
        names = net.role_params(role)
        try:
            blob = adam[role.value]
            t = int(blob["t"])
            m = {k: _decode(f"adam.{role.value}.m.{k}", blob["m"][k], a.shape) for k, a in names.items()}
            v = {k: _decode(f"adam.{role.value}.v.{k}", blob["v"][k], a.shape) for k, a in names.items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"optimizer state for {role.value} is incomplete: {exc}") from None
        optimizers[role] = AdamState(m=m, v=v, t=t)
    return Checkpoint(net, optimizers, normalizer, steps, config)


def dumps(ckpt: Checkpoint) -> str:
    return json.dumps(to_dict(ckpt), sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def save(ckpt: Checkpoint, path) -> None:
    path = FsPath(path)
    try:
        path.write_text(dumps(ckpt), encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write checkpoint {path}: {exc.strerror or exc}") from exc


def load(path) -> Checkpoint:
    path = FsPath(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise StorageError(f"checkpoint not found: {path}") from None
    except OSError as exc:
        raise StorageError(f"cannot read checkpoint {path}: {exc.strerror or exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(d, dict):
        raise CheckpointError(f"{path} does not hold a checkpoint object")
    return from_dict(d)
