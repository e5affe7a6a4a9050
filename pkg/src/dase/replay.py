"""Shared FIFO replay memory tagged by agent, with internal/external batch splitting."""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass
from typing import TextIO

import numpy as np


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    agent_id: int = 0
    step_index: int = 0


@dataclass
class Batch:
    """Column-wise view of a set of transitions; row order is the sampling order."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    agent_ids: np.ndarray
    step_indices: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)

    def subset(self, mask_or_idx: np.ndarray) -> "Batch":
        return Batch(
            self.states[mask_or_idx],
            self.actions[mask_or_idx],
            self.rewards[mask_or_idx],
            self.next_states[mask_or_idx],
            self.dones[mask_or_idx],
            self.agent_ids[mask_or_idx],
            self.step_indices[mask_or_idx],
        )

    def transitions(self) -> list[Transition]:
        return [
            Transition(
                self.states[i].copy(),
                self.actions[i].copy(),
                float(self.rewards[i]),
                self.next_states[i].copy(),
                bool(self.dones[i]),
                int(self.agent_ids[i]),
                int(self.step_indices[i]),
            )
            for i in range(len(self))
        ]

    @classmethod
    def from_transitions(cls, ts: list[Transition]) -> "Batch":
        return cls(
            np.array([t.state for t in ts], dtype=np.float64),
            np.array([t.action for t in ts], dtype=np.float64),
            np.array([t.reward for t in ts], dtype=np.float64),
            np.array([t.next_state for t in ts], dtype=np.float64),
            np.array([t.done for t in ts], dtype=bool),
            np.array([t.agent_id for t in ts], dtype=np.int64),
            np.array([t.step_index for t in ts], dtype=np.int64),
        )


@dataclass
class MixedBatch:
    """A sampled batch plus the mask of rows the querying agent produced itself."""

    batch: Batch
    internal_mask: np.ndarray

    @property
    def internal(self) -> Batch:
        return self.batch.subset(self.internal_mask)

    @property
    def external(self) -> Batch:
        return self.batch.subset(~self.internal_mask)

    @property
    def n_internal(self) -> int:
        return int(self.internal_mask.sum())

    @property
    def n_external(self) -> int:
        return len(self.batch) - self.n_internal

    def sample_weights(self, lam: float) -> np.ndarray:
        """1 for own rows, ``lam`` for external rows, aligned with batch order."""
        return np.where(self.internal_mask, 1.0, lam)


def split(batch: Batch, self_id: int) -> MixedBatch:
    return MixedBatch(batch, batch.agent_ids == self_id)


class SharedReplayBuffer:
    """Bounded ring of transitions shared by every learner.

    A single lock serialises appends and samples, so a sample never sees a
    half-written row.
    """

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.state_dim = state_dim
        self.action_dim = action_dim
        self._s = np.zeros((capacity, state_dim))
        self._a = np.zeros((capacity, action_dim))
        self._r = np.zeros(capacity)
        self._s2 = np.zeros((capacity, state_dim))
        self._d = np.zeros(capacity, dtype=bool)
        self._agent = np.zeros(capacity, dtype=np.int64)
        self._step = np.zeros(capacity, dtype=np.int64)
        self.cursor = 0
        self.size = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self.size

    def append(self, t: Transition) -> None:
        s = np.asarray(t.state, dtype=np.float64)
        a = np.asarray(t.action, dtype=np.float64)
        s2 = np.asarray(t.next_state, dtype=np.float64)
        if s.shape != (self.state_dim,) or s2.shape != (self.state_dim,):
            raise ValueError(f"state must have shape ({self.state_dim},)")
        if a.shape != (self.action_dim,):
            raise ValueError(f"action must have shape ({self.action_dim},)")
        if not np.isfinite(t.reward):
            raise ValueError("reward must be finite")
        with self._lock:
            i = self.cursor
            self._s[i] = s
            self._a[i] = a
            self._r[i] = t.reward
            self._s2[i] = s2
            self._d[i] = t.done
            self._agent[i] = t.agent_id
            self._step[i] = t.step_index
            self.cursor = (i + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)

    def _gather(self, idx: np.ndarray) -> Batch:
        return Batch(
            self._s[idx],
            self._a[idx],
            self._r[idx],
            self._s2[idx],
            self._d[idx],
            self._agent[idx],
            self._step[idx],
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform draws with replacement over the current contents."""
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        with self._lock:
            if self.size == 0:
                raise ValueError("cannot sample from an empty buffer")
            idx = rng.integers(0, self.size, size=batch_size)
            return self._gather(idx)

    def contents(self) -> Batch:
        """Snapshot of stored transitions, oldest first."""
        with self._lock:
            if self.size < self.capacity:
                idx = np.arange(self.size)
            else:
                idx = (np.arange(self.capacity) + self.cursor) % self.capacity
            return self._gather(idx)

    def dump_csv(self, fh: TextIO) -> None:
        snap = self.contents()
        w = csv.writer(fh, lineterminator="\n")
        m, n = self.state_dim, self.action_dim
        w.writerow(
            ["agent_id", "step_index"]
            + [f"s{i}" for i in range(m)]
            + [f"a{i}" for i in range(n)]
            + ["r"]
            + [f"s2_{i}" for i in range(m)]
            + ["done"]
        )
        for i in range(len(snap)):
            w.writerow(
                [int(snap.agent_ids[i]), int(snap.step_indices[i])]
                + [repr(float(v)) for v in snap.states[i]]
                + [repr(float(v)) for v in snap.actions[i]]
                + [repr(float(snap.rewards[i]))]
                + [repr(float(v)) for v in snap.next_states[i]]
                + [int(snap.dones[i])]
            )
