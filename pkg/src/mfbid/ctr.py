"""FTRL-proximal logistic regression for click-through-rate prediction.

Features are one-hot categorical ids (one active id per field), so every active
coordinate has value 1 and the per-coordinate gradient is simply ``p - y``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from mfbid.errors import ConfigurationError, InputError

DEFAULT_DIMENSION = 2 ** 18
_LOGIT_CAP = 35.0


@dataclass
class FtrlState:
    dimension: int = DEFAULT_DIMENSION
    alpha: float = 0.05
    beta: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    z: np.ndarray = field(default=None, repr=False)
    n: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.dimension <= 0:
            raise ConfigurationError("dimension must be positive")
        if self.z is None:
            self.z = np.zeros(self.dimension)
        if self.n is None:
            self.n = np.zeros(self.dimension)

    def weights(self, idx: np.ndarray) -> np.ndarray:
        z, n = self.z[idx], self.n[idx]
        w = -(z - np.sign(z) * self.l1) / ((self.beta + np.sqrt(n)) / self.alpha + self.l2)
        return np.where(np.abs(z) <= self.l1, 0.0, w)


def _check(features: Sequence[int], dimension: int) -> np.ndarray:
    idx = np.asarray(features, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= dimension):
        raise InputError(f"feature id out of range [0, {dimension}): {features}")
    return idx


def _sigmoid(x: float) -> float:
    x = min(max(x, -_LOGIT_CAP), _LOGIT_CAP)
    return 1.0 / (1.0 + math.exp(-x))


def predict_ctr(features: Sequence[int], state: FtrlState) -> float:
    idx = _check(features, state.dimension)
    return _sigmoid(float(state.weights(idx).sum()))


def update(features: Sequence[int], label: int, state: FtrlState) -> float:
    """One FTRL-proximal step on the active coordinates; returns the pre-update prediction."""
    if label not in (0, 1):
        raise InputError(f"label must be 0 or 1, got {label!r}")
    idx = _check(features, state.dimension)
    w = state.weights(idx)
    p = _sigmoid(float(w.sum()))
    g = p - label
    n_old = state.n[idx]
    sigma = (np.sqrt(n_old + g * g) - np.sqrt(n_old)) / state.alpha
    state.z[idx] += g - sigma * w
    state.n[idx] = n_old + g * g
    return p


def train_ctr(examples: Iterable[tuple[Sequence[int], int]], state: FtrlState | None = None,
              epochs: int = 1) -> FtrlState:
    state = state or FtrlState()
    examples = list(examples)
    for _ in range(epochs):
        for features, label in examples:
            update(features, label, state)
    return state


def log_loss(examples: Iterable[tuple[Sequence[int], int]], state: FtrlState) -> float:
    total, count = 0.0, 0
    for features, label in examples:
        p = predict_ctr(features, state)
        total -= math.log(p) if label else math.log(1.0 - p)
        count += 1
    return total / max(count, 1)


def save_ftrl(path, state: FtrlState) -> None:
    """Text checkpoint: one header line, then ``feature_id z n`` for touched coordinates."""
    lines = [f"# ftrl v1 dimension={state.dimension} alpha={state.alpha!r} beta={state.beta!r} "
             f"l1={state.l1!r} l2={state.l2!r}"]
    for i in np.flatnonzero((state.z != 0) | (state.n != 0)):
        lines.append(f"{i} {float(state.z[i])!r} {float(state.n[i])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_ftrl(path) -> FtrlState:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"missing CTR checkpoint {p}")
    lines = p.read_text().splitlines()
    if not lines or not lines[0].startswith("# ftrl v1"):
        raise ConfigurationError(f"{p}: not an ftrl v1 checkpoint")
    header = dict(tok.split("=") for tok in lines[0].split()[3:])
    state = FtrlState(dimension=int(header["dimension"]), alpha=float(header["alpha"]),
                      beta=float(header["beta"]), l1=float(header["l1"]), l2=float(header["l2"]))
    for line in lines[1:]:
        i, z, n = line.split()
        state.z[int(i)] = float(z)
        state.n[int(i)] = float(n)
    return state
