"""JSON checkpoints for policy parameters.

Floats are written with ``repr`` precision by the json module, so a save/load
round trip reproduces every tensor bit for bit. The special path
``benchmark`` names the built-in constant 60/40 policy.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, ValidationError
from .ppo.network import MLP, NetworkParams

FORMAT = "allot-rl-checkpoint"
VERSION = 1
BENCHMARK = "benchmark"


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _tensor(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel()]}


def _array(entry: dict, name: str) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in entry["shape"])
        data = np.array(entry["data"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"checkpoint tensor {name!r} is malformed") from exc
    if data.size != int(np.prod(shape)):
        raise ValidationError(f"checkpoint tensor {name!r}: {data.size} values for shape {shape}")
    return data.reshape(shape)


def to_dict(params: NetworkParams, signature_hash: str, meta: dict | None = None) -> dict:
    tensors = {name: _tensor(t) for name, t in params.all_tensors().items()}
    return {
        "format": FORMAT,
        "version": VERSION,
        "signature_hash": signature_hash,
        "architecture": params.architecture,
        "meta": meta or {},
        "tensors": tensors,
    }


def dumps(params: NetworkParams, signature_hash: str, meta: dict | None = None) -> str:
    return json.dumps(to_dict(params, signature_hash, meta), sort_keys=True, indent=1) + "\n"


def save(path: str | os.PathLike, params: NetworkParams, signature_hash: str, meta: dict | None = None) -> None:
    atomic_write_text(path, dumps(params, signature_hash, meta))


def from_dict(doc: dict) -> tuple[NetworkParams, dict]:
    if doc.get("format") != FORMAT:
        raise ValidationError("not an allot-rl checkpoint")
    if doc.get("version") != VERSION:
        raise ValidationError(f"unsupported checkpoint version {doc.get('version')}")
    tensors = doc.get("tensors", {})

    def net(prefix: str) -> MLP:
        ws, bs = [], []
        i = 0
        while f"{prefix}.W{i}" in tensors:
            ws.append(_array(tensors[f"{prefix}.W{i}"], f"{prefix}.W{i}"))
            bs.append(_array(tensors[f"{prefix}.b{i}"], f"{prefix}.b{i}"))
            i += 1
        if not ws:
            raise ValidationError(f"checkpoint has no {prefix} layers")
        return MLP(ws, bs)

    try:
        params = NetworkParams(
            net("actor"),
            net("critic"),
            _array(tensors["log_std"], "log_std"),
            _array(tensors["obs_shift"], "obs_shift"),
            _array(tensors["obs_scale"], "obs_scale"),
        )
    except KeyError as exc:
        raise ValidationError(f"checkpoint is missing tensor {exc}") from exc
    if params.architecture != doc.get("architecture"):
        raise ValidationError("checkpoint architecture field disagrees with its tensors")
    return params, doc


def load(path: str | os.PathLike) -> tuple[NetworkParams, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    return from_dict(doc)


def check_signature(doc: dict[str, Any], expected_hash: str, force: bool = False) -> None:
    found = doc.get("signature_hash")
    if found != expected_hash and not force:
        raise ConfigError(
            f"checkpoint was trained under model signature {found} but the config gives {expected_hash}; "
            "the architecture or feature settings differ (pass --force to evaluate anyway)"
        )
