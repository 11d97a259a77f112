"""Per-query attack traces and the oracle wrapper that records them."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EVENTS = ("sample", "binsearch", "init", "jump", "boundary-move")


@dataclass
class AttackTrace:
    """One record per oracle query: index, best adversarial L2 so far, event tag."""

    query: list[int] = field(default_factory=list)
    best_l2: list[float] = field(default_factory=list)
    event: list[str] = field(default_factory=list)
    best_x: np.ndarray | None = None

    def append(self, query: int, best_l2: float, event: str) -> None:
        self.query.append(query)
        self.best_l2.append(best_l2)
        self.event.append(event)

    def __len__(self) -> int:
        return len(self.query)

    @property
    def final_l2(self) -> float:
        return self.best_l2[-1] if self.best_l2 else math.inf

    @property
    def queries_used(self) -> int:
        return self.query[-1] if self.query else 0

    @property
    def succeeded(self) -> bool:
        return self.best_x is not None

    def best_at(self, q: int) -> float:
        """Best L2 among records with query index <= q (carry-forward step function)."""
        idx = np.searchsorted(np.asarray(self.query), q, side="right")
        return self.best_l2[idx - 1] if idx > 0 else math.inf

    def check(self, budget: int | None = None) -> None:
        q = np.asarray(self.query)
        b = np.asarray(self.best_l2)
        if len(q) and (q[0] != 1 or np.any(np.diff(q) != 1)):
            raise AssertionError("query indices must be 1, 2, 3, ...")
        if np.any(b[1:] > b[:-1]):
            raise AssertionError("best-so-far L2 increased")
        if budget is not None and len(q) and q[-1] > budget:
            raise AssertionError(f"trace ends at query {q[-1]} beyond budget {budget}")
        bad = set(self.event) - set(EVENTS)
        if bad:
            raise AssertionError(f"unknown event tags {bad}")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["query", "best_l2", "event"])
            for row in zip(self.query, self.best_l2, self.event):
                writer.writerow([row[0], repr(row[1]), row[2]])

    @classmethod
    def from_csv(cls, path: str | Path) -> "AttackTrace":
        trace = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                trace.append(int(row["query"]), float(row["best_l2"]), row["event"])
        return trace


class QueryLog:
    """Oracle wrapper that tags every query and keeps the best adversarial point.

    The first query is expected to classify the original image; after
    :attr:`original_label` is set, any differently labelled query counts as an
    adversarial example.
    """

    def __init__(self, oracle, x_orig: np.ndarray):
        self.oracle = oracle
        self.shape = x_orig.shape
        self.x_orig = x_orig
        self._x_flat = x_orig.reshape(-1)
        self.original_label: int | None = None
        self.event = "init"
        self.trace = AttackTrace()
        self._best = math.inf

    @property
    def used(self) -> int:
        return self.oracle.budget.used

    def classify(self, x: np.ndarray) -> int:
        label = self.oracle.classify(x)
        if self.original_label is not None and label != self.original_label:
            d = float(np.linalg.norm(x.reshape(-1) - self._x_flat))
            if d < self._best:
                self._best = d
                self.trace.best_x = np.array(x, dtype=np.float64).reshape(self.shape)
        self.trace.append(self.oracle.budget.used, self._best, self.event)
        return label
