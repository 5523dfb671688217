"""Parameter checkpoints as versioned JSON.

Layout::

    {"format": "mfbid-params", "version": 1, "meta": {...},
     "params": {"<path>": {"shape": [r, c], "values": [...row-major floats...]}}}

Floats are written with ``repr`` precision so a save/load round trip is exact and
identical parameters always serialize to identical bytes.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from mfbid.errors import ConfigurationError
from mfbid.nn.params import ParamSet

FORMAT = "mfbid-params"
VERSION = 1


def dumps_params(params: ParamSet, meta: dict | None = None) -> str:
    body = {
        "format": FORMAT,
        "version": VERSION,
        "meta": meta or {},
        "params": {
            path: {"shape": list(t.data.shape), "values": t.data.reshape(-1).tolist()}
            for path, t in params.items()
        },
    }
    return json.dumps(body, sort_keys=False, separators=(",", ":")) + "\n"


def save_params(path, params: ParamSet, meta: dict | None = None) -> None:
    Path(path).write_text(dumps_params(params, meta))


def loads_params(text: str) -> tuple[ParamSet, dict]:
    body = json.loads(text)
    if body.get("format") != FORMAT:
        raise ConfigurationError(f"not a parameter checkpoint (format={body.get('format')!r})")
    if body.get("version") != VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {body.get('version')!r}")
    params = ParamSet()
    for path, entry in body["params"].items():
        values = np.asarray(entry["values"], dtype=np.float64)
        params.add(path, values.reshape(entry["shape"]))
    return params, body.get("meta", {})


def load_params(path) -> tuple[ParamSet, dict]:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"missing checkpoint {p}")
    return loads_params(p.read_text())
