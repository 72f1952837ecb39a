"""
Hard-Deadline Queue Module for the XR scheduler.

Per-user packet ledgers indexed by age. Each slot is served first-come
first-served, then the ledger ages by one slot (the oldest slot leaves and
counts as a dropout if bits remain), then the new arrival is admitted.
Bits are integers, so the per-slot conservation identity is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass
class QueueState:
    """
    Deadline-indexed packet ledger for every user.

    ``bits[k][d]`` and ``remaining[k][d]`` hold the original and remaining
    length of the packet that arrived ``d`` slots ago (index 0 is the
    newest); an empty slot is encoded as 0 / 0.
    """

    bits: list[np.ndarray]
    remaining: list[np.ndarray]

    def __post_init__(self):
        self.bits = [np.asarray(b, dtype=np.int64) for b in self.bits]
        self.remaining = [np.asarray(r, dtype=np.int64) for r in self.remaining]
        if len(self.bits) != len(self.remaining):
            raise ValueError("bits and remaining ledgers must cover the same users")
        for k, (b, r) in enumerate(zip(self.bits, self.remaining)):
            if b.shape != r.shape or b.ndim != 1:
                raise ValueError(f"user {k}: ledger shapes differ ({b.shape} vs {r.shape})")
            if np.any(r < 0) or np.any(r > b):
                raise ValueError(f"user {k}: remaining bits must satisfy 0 <= b_bar <= b")

    @classmethod
    def empty(cls, deadlines: Sequence[int]) -> "QueueState":
        """All-empty ledgers of length D_k."""
        return cls(
            bits=[np.zeros(d, dtype=np.int64) for d in deadlines],
            remaining=[np.zeros(d, dtype=np.int64) for d in deadlines],
        )

    @property
    def num_users(self) -> int:
        return len(self.bits)

    @property
    def deadlines(self) -> list[int]:
        return [len(b) for b in self.bits]

    @property
    def backlog(self) -> np.ndarray:
        """Total remaining bits per user."""
        return np.array([int(r.sum()) for r in self.remaining], dtype=np.int64)

    def copy(self) -> "QueueState":
        return QueueState(
            bits=[b.copy() for b in self.bits],
            remaining=[r.copy() for r in self.remaining],
        )

    def features(self, scale: float = 1.0) -> np.ndarray:
        """vec(B_t): original lengths of every user, then remaining lengths, scaled."""
        return np.concatenate(self.bits + self.remaining).astype(float) * scale


@dataclass
class ServiceReport:
    """Bookkeeping of one queue step, per user."""

    dropout: np.ndarray        # I_drop in {0, 1}
    served_bits: np.ndarray
    dropped_bits: np.ndarray
    remaining_bits: np.ndarray  # left in the ledger, excluding the new arrival
    present_bits: np.ndarray    # before service
    completed: np.ndarray       # packets fully delivered this slot
    arrived: np.ndarray         # packets admitted this slot

    @property
    def resolved(self) -> np.ndarray:
        """Packets that left the queue this slot (delivered or dropped)."""
        return self.completed + self.dropout


def serve_queues(
    q: QueueState,
    rates: np.ndarray,
    arrivals: Sequence[Optional[int]],
    slot_seconds: float,
) -> tuple[QueueState, ServiceReport]:
    """
    Advance every ledger by one slot and report what happened.

    Args:
        q: Current ledger
        rates: Per-user rate in bits/s (>= 0)
        arrivals: Per-user arriving packet length in bits, or None
        slot_seconds: Slot duration tau_0

    Returns:
        (next ledger, service report)
    """
    rates = np.asarray(rates, dtype=float)
    if np.any(rates < 0):
        raise ValueError(f"rates must be nonnegative, got {rates}")
    K = q.num_users
    if rates.shape != (K,) or len(arrivals) != K:
        raise ValueError(f"expected {K} rates and arrivals")

    # Integer service budget: b_bar > tau0 R  <=>  b_bar > floor(tau0 R) for integer b_bar
    capacity = np.floor(rates * slot_seconds).astype(np.int64)

    next_bits, next_remaining = [], []
    dropout = np.zeros(K, dtype=np.int64)
    served = np.zeros(K, dtype=np.int64)
    dropped = np.zeros(K, dtype=np.int64)
    kept = np.zeros(K, dtype=np.int64)
    present = np.zeros(K, dtype=np.int64)
    completed = np.zeros(K, dtype=np.int64)
    arrived = np.zeros(K, dtype=np.int64)

    for k in range(K):
        bits = q.bits[k].copy()
        remaining = q.remaining[k].copy()
        present[k] = remaining.sum()

        budget = int(capacity[k])
        # FCFS: oldest slot (highest age index) first
        for d in range(len(remaining) - 1, -1, -1):
            if budget == 0:
                break
            if remaining[d] == 0:
                continue
            take = min(budget, int(remaining[d]))
            remaining[d] -= take
            budget -= take
            served[k] += take
            if remaining[d] == 0:
                completed[k] += 1

        # Oldest slot leaves at age D_k
        if remaining[-1] > 0:
            dropout[k] = 1
            dropped[k] = remaining[-1]

        bits = np.concatenate([[0], bits[:-1]])
        remaining = np.concatenate([[0], remaining[:-1]])
        kept[k] = remaining.sum()

        packet = arrivals[k]
        if packet is not None and packet > 0:
            bits[0] = packet
            remaining[0] = packet
            arrived[k] = 1

        next_bits.append(bits)
        next_remaining.append(remaining)

    report = ServiceReport(
        dropout=dropout,
        served_bits=served,
        dropped_bits=dropped,
        remaining_bits=kept,
        present_bits=present,
        completed=completed,
        arrived=arrived,
    )
    return QueueState(bits=next_bits, remaining=next_remaining), report


def queue_step(
    q: QueueState,
    rates: np.ndarray,
    arrivals: Sequence[Optional[int]],
    slot_seconds: float,
) -> tuple[QueueState, np.ndarray]:
    """Serve, expire and admit for one slot; returns (next ledger, dropout indicators)."""
    state, report = serve_queues(q, rates, arrivals, slot_seconds)
    return state, report.dropout
