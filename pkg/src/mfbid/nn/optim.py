from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mfbid.errors import ConfigurationError
from mfbid.nn.params import ParamSet


@dataclass
class OptimizerConfig:
    learning_rate: float = 1e-3
    decay_factor: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ConfigurationError("decay_factor must lie in (0, 1]")
        for name in ("beta1", "beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be > 0")


class Adam:
    """Adam with bias correction and a multiplicative per-epoch learning-rate decay."""

    def __init__(self, params: ParamSet, config: OptimizerConfig):
        self.params = params
        self.config = config
        self.steps = 0
        self.decays = 0
        self._m = {p: np.zeros_like(t.data) for p, t in params.items()}
        self._v = {p: np.zeros_like(t.data) for p, t in params.items()}

    @property
    def learning_rate(self) -> float:
        return self.config.learning_rate * self.config.decay_factor ** self.decays

    def decay(self) -> float:
        self.decays += 1
        return self.learning_rate

    def step(self) -> None:
        cfg = self.config
        self.steps += 1
        lr = self.learning_rate
        c1 = 1.0 - cfg.beta1 ** self.steps
        c2 = 1.0 - cfg.beta2 ** self.steps
        for path, t in self.params.items():
            g = t.grad
            m, v = self._m[path], self._v[path]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            t.data -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
            g.fill(0.0)


def step(params: ParamSet, optimizer: Adam) -> None:
    """Apply one optimizer update to ``params`` and zero their gradients."""
    if optimizer.params is not params:
        raise ConfigurationError("optimizer was built for a different ParamSet")
    optimizer.step()
