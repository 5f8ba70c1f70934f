"""Transition storage: ring buffer with proportional prioritized sampling.

Sampling mass of item j is p_j^alpha maintained in a binary sum tree; new
items enter at the running max raw priority so everything is replayed at
least once. With `prioritized=False` the buffer degrades to uniform
sampling with unit importance weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    s: np.ndarray  # raw feature matrix (n_ops, 10)
    a: int
    r: float
    s_next: np.ndarray
    done: bool


class SumTree:
    """Fixed-capacity binary sum tree over non-negative masses."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.tree = np.zeros(2 * capacity, dtype=np.float64)

    def set(self, idx: int, mass: float) -> None:
        node = idx + self.capacity
        delta = mass - self.tree[node]
        while node >= 1:
            self.tree[node] += delta
            node //= 2

    def get(self, idx: int) -> float:
        return float(self.tree[idx + self.capacity])

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def find(self, mass: float) -> int:
        """Index whose cumulative interval contains `mass` in [0, total)."""
        node = 1
        while node < self.capacity:
            left = 2 * node
            if mass < self.tree[left]:
                node = left
            else:
                mass -= self.tree[left]
                node = left + 1
        return node - self.capacity


class PrioritizedBuffer:
    def __init__(self, capacity: int, alpha: float = 0.6, beta: float = 0.4,
                 prioritized: bool = True):
        self.capacity = capacity
        self.alpha = alpha
        self.beta = beta
        self.prioritized = prioritized
        self.tree = SumTree(capacity)
        self.items: list[Transition | None] = [None] * capacity
        self.raw_priority = np.zeros(capacity, dtype=np.float64)
        self.max_priority = 1.0  # running max of raw priorities ever seen
        self.write = 0
        self.count = 0

    def __len__(self) -> int:
        return self.count

    def store(self, item: Transition) -> None:
        idx = self.write
        self.items[idx] = item
        self.raw_priority[idx] = self.max_priority
        self.tree.set(idx, self.max_priority ** self.alpha)
        self.write = (self.write + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)

    def probabilities(self) -> np.ndarray:
        """Current sampling law over stored items (diagnostics and tests)."""
        masses = np.array([self.tree.get(i) for i in range(self.count)])
        return masses / masses.sum()

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Returns (indices, transitions, normalized importance weights)."""
        if self.count < batch_size:
            raise ValueError(f"buffer holds {self.count} < batch {batch_size}")
        if not self.prioritized:
            idx = rng.integers(0, self.count, size=batch_size)
            weights = np.ones(batch_size)
            return idx, [self.items[i] for i in idx], weights
        total = self.tree.total
        draws = rng.random(batch_size) * total
        idx = np.array([self.tree.find(d) for d in draws], dtype=np.int64)
        # guard the open-interval edge when mass lands on trailing zero slots
        idx = np.minimum(idx, self.count - 1)
        per = np.array([self.tree.get(i) for i in idx]) / total
        weights = (self.count * per) ** (-self.beta)
        weights /= weights.max()
        return idx, [self.items[i] for i in idx], weights

    def update_priorities(self, idx, raw: np.ndarray) -> None:
        if not self.prioritized:
            return
        for i, p in zip(idx, raw):
            p = float(p)
            if p <= 0:
                raise ValueError("priorities must be positive")
            self.raw_priority[i] = p
            self.tree.set(int(i), p ** self.alpha)
            self.max_priority = max(self.max_priority, p)
