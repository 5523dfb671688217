"""Central finite-difference oracle for reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from mfbid.nn.autodiff import Tensor, backward
from mfbid.nn.params import ParamSet


@dataclass
class GradCheckResult:
    path: str
    index: tuple[int, ...]
    analytic: float
    numeric: float

    @property
    def rel_error(self) -> float:
        scale = max(abs(self.analytic), abs(self.numeric))
        # both sides vanish at roundoff level (e.g. shift-invariant softmax biases)
        if scale < 1e-10:
            return 0.0
        return abs(self.analytic - self.numeric) / scale


def check_gradients(loss_fn: Callable[[], Tensor], params: ParamSet, n_coords: int,
                    rng: np.random.Generator, h: float = 1e-5,
                    paths: list[str] | None = None) -> list[GradCheckResult]:
    """Compare analytic gradients of ``loss_fn()`` against central differences.

    ``n_coords`` coordinates are drawn uniformly over all scalar entries of the
    selected parameters (weighted by size).
    """
    paths = paths or params.paths()
    params.zero_grad()
    backward(loss_fn())
    analytic = {p: params[p].grad.copy() for p in paths}
    params.zero_grad()

    sizes = np.array([params[p].data.size for p in paths])
    flat_ids = rng.choice(int(sizes.sum()), size=min(n_coords, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    results = []
    for fid in flat_ids:
        k = int(np.searchsorted(offsets, fid, side="right") - 1)
        path = paths[k]
        t = params[path]
        index = np.unravel_index(int(fid - offsets[k]), t.data.shape)
        orig = t.data[index]
        t.data[index] = orig + h
        f_plus = loss_fn().item()
        t.data[index] = orig - h
        f_minus = loss_fn().item()
        t.data[index] = orig
        results.append(GradCheckResult(path, tuple(int(i) for i in index),
                                       float(analytic[path][index]),
                                       (f_plus - f_minus) / (2.0 * h)))
    return results


def check_input_gradient(fn: Callable[[Tensor], Tensor], x: np.ndarray,
                         h: float = 1e-5) -> list[GradCheckResult]:
    """Gradient of a scalar ``fn(x)`` with respect to every entry of ``x``."""
    xt = Tensor(x.copy(), requires_grad=True)
    backward(fn(xt))
    analytic = xt.grad.copy()
    results = []
    for index in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[index] += h
        xm[index] -= h
        numeric = (fn(Tensor(xp)).item() - fn(Tensor(xm)).item()) / (2.0 * h)
        results.append(GradCheckResult("input", index, float(analytic[index]), numeric))
    return results
