from __future__ import annotations

from typing import Iterator

import numpy as np

from mfbid.nn.autodiff import Tensor


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class ParamSet:
    """Ordered map from parameter path (``"actor.l0.W"``) to a leaf Tensor.

    Each tensor's ``grad`` is the accumulator; it always has the parameter's shape.
    """

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}

    def add(self, path: str, value: np.ndarray) -> Tensor:
        if path in self._tensors:
            raise KeyError(f"duplicate parameter path {path!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        t.grad = np.zeros_like(t.data)
        self._tensors[path] = t
        return t

    def __getitem__(self, path: str) -> Tensor:
        return self._tensors[path]

    def __contains__(self, path: str) -> bool:
        return path in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def paths(self) -> list[str]:
        return list(self._tensors)

    def subset(self, prefix: str) -> "ParamSet":
        """View sharing the same tensors for every path under ``prefix``."""
        view = ParamSet()
        for path, t in self._tensors.items():
            if path.startswith(prefix):
                view._tensors[path] = t
        return view

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            else:
                t.grad.fill(0.0)

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for path, t in self._tensors.items():
            out.add(path, t.data.copy())
        return out

    def assign(self, values: dict[str, np.ndarray]) -> None:
        for path, v in values.items():
            t = self._tensors[path]
            if t.data.shape != np.shape(v):
                raise ValueError(f"{path}: shape {np.shape(v)} != {t.data.shape}")
            t.data[...] = v

    def soft_update_from(self, online: "ParamSet", tau: float) -> None:
        """target <- tau * online + (1 - tau) * target, in place."""
        for path, t in self._tensors.items():
            src = online[path].data
            if tau == 1.0:
                t.data[...] = src
            else:
                t.data *= 1.0 - tau
                t.data += tau * src

    def to_dict(self) -> dict[str, np.ndarray]:
        return {p: t.data.copy() for p, t in self._tensors.items()}

    def num_values(self) -> int:
        return int(np.sum([t.data.size for t in self._tensors.values()]))
