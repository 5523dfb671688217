from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mfbid.agents.base import AgentState


@dataclass(frozen=True)
class Transition:
    state: AgentState
    action: float
    reward: float
    next_state: AgentState
    terminal: bool
    features: tuple[int, ...] = ()
    next_features: tuple[int, ...] = ()


@dataclass
class TransitionBatch:
    budget: np.ndarray
    pctr: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_budget: np.ndarray
    next_pctr: np.ndarray
    terminal: np.ndarray
    features: list
    next_features: list


class ReplayMemory:
    """Fixed-capacity ring buffer; sampling is uniform without replacement."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._cols = {k: np.zeros(capacity) for k in
                      ("budget", "pctr", "action", "reward", "next_budget", "next_pctr")}
        self._terminal = np.zeros(capacity, dtype=bool)
        self._features: list = [()] * capacity
        self._next_features: list = [()] * capacity
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, t: Transition) -> None:
        i = self._cursor
        c = self._cols
        c["budget"][i] = t.state.budget_left
        c["pctr"][i] = t.state.pctr
        c["action"][i] = t.action
        c["reward"][i] = t.reward
        c["next_budget"][i] = t.next_state.budget_left
        c["next_pctr"][i] = t.next_state.pctr
        self._terminal[i] = t.terminal
        self._features[i] = t.features
        self._next_features[i] = t.next_features
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample_indices(self, m: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(self._size, size=m, replace=False)

    def sample(self, m: int, rng: np.random.Generator) -> TransitionBatch:
        idx = self.sample_indices(m, rng)
        c = self._cols
        return TransitionBatch(
            c["budget"][idx], c["pctr"][idx], c["action"][idx], c["reward"][idx],
            c["next_budget"][idx], c["next_pctr"][idx], self._terminal[idx],
            [self._features[i] for i in idx], [self._next_features[i] for i in idx])

    def get(self, i: int) -> Transition:
        c = self._cols
        return Transition(AgentState(int(c["budget"][i]), float(c["pctr"][i])),
                          float(c["action"][i]), float(c["reward"][i]),
                          AgentState(int(c["next_budget"][i]), float(c["next_pctr"][i])),
                          bool(self._terminal[i]), self._features[i], self._next_features[i])
