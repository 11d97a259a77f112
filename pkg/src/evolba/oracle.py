"""Hard-label oracles with strict query accounting.

An oracle only ever answers with the top-1 label of an image. Every call to
:meth:`Oracle.classify` is charged against the oracle's :class:`QueryBudget`;
analytic ground-truth helpers such as :func:`minimal_adversarial_l2` are test
instrumentation and never touch the budget.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral
from .tensor import check_image


class BudgetExhausted(Exception):
    """Raised by ``classify`` once the query budget is spent."""


class OracleError(RuntimeError):
    """Transport or protocol failure talking to an oracle (never a budget issue)."""


@dataclass
class QueryBudget:
    max_queries: int | None = None
    used: int = 0

    def charge(self) -> None:
        if self.max_queries is not None and self.used >= self.max_queries:
            raise BudgetExhausted(f"query budget of {self.max_queries} exhausted")
        self.used += 1

    @property
    def remaining(self) -> float:
        if self.max_queries is None:
            return float("inf")
        return self.max_queries - self.used


class Oracle:
    """Base class; subclasses implement ``_label`` on a validated image."""

    n_classes = 2

    def __init__(self, shape: tuple[int, int, int] | None = None):
        self.shape = shape
        self.budget = QueryBudget()

    def reset_budget(self, max_queries: int | None) -> QueryBudget:
        self.budget = QueryBudget(max_queries)
        return self.budget

    def classify(self, x: np.ndarray) -> int:
        x = check_image(x)
        if self.shape is not None and x.shape != self.shape:
            raise ValueError(f"oracle expects images of shape {self.shape}, got {x.shape}")
        self.budget.charge()
        return int(self._label(x))

    def _label(self, x: np.ndarray) -> int:
        raise NotImplementedError


def is_adversarial(oracle, x: np.ndarray, original_label: int) -> bool:
    return oracle.classify(x) != original_label


class LinearOracle(Oracle):
    """Label 1 on the positive side of the hyperplane ``w.x + b = 0``, else 0."""

    def __init__(self, w, b: float, shape: tuple[int, int, int] | None = None):
        w = np.asarray(w, dtype=np.float64).reshape(-1)
        if not np.linalg.norm(w) > 0:
            raise ValueError("LinearOracle needs a nonzero normal vector")
        super().__init__(shape)
        self.w = w
        self.b = float(b)

    def margin(self, x: np.ndarray) -> float:
        return float(self.w @ np.asarray(x, dtype=np.float64).reshape(-1) + self.b)

    def _label(self, x):
        return 1 if self.margin(x) > 0.0 else 0

    @classmethod
    def around(cls, x: np.ndarray, distance: float, seed: int = 0) -> "LinearOracle":
        """Hyperplane at ``distance`` from ``x`` along a random nonnegative unit normal.

        ``x`` lands on the label-0 side; the closest adversarial point is
        ``x + distance * w``, which stays inside the unit box for moderately
        bright images and small distances.
        """
        x = check_image(x)
        rng = np.random.default_rng(seed)
        w = np.abs(rng.standard_normal(x.size))
        w /= np.linalg.norm(w)
        b = -(w @ x.reshape(-1)) - distance
        return cls(w, b, shape=x.shape)


INSIDE, OUTSIDE = 0, 1


class SphereOracle(Oracle):
    """Label :data:`INSIDE` strictly within ``radius`` of ``center``, else :data:`OUTSIDE`."""

    def __init__(self, center, radius: float, shape: tuple[int, int, int] | None = None):
        if not radius > 0:
            raise ValueError("SphereOracle radius must be positive")
        super().__init__(shape)
        self.center = np.asarray(center, dtype=np.float64).reshape(-1)
        self.radius = float(radius)

    def _label(self, x):
        d = np.linalg.norm(x.reshape(-1) - self.center)
        return INSIDE if d < self.radius else OUTSIDE

    @classmethod
    def around(cls, x: np.ndarray, distance: float, offset: float = 8.0, seed: int = 0) -> "SphereOracle":
        """Ball whose surface is ``distance`` away from ``x``, with ``x`` inside at ``offset`` from the center."""
        x = check_image(x)
        rng = np.random.default_rng(seed)
        u = rng.standard_normal(x.size)
        u /= np.linalg.norm(u)
        return cls(x.reshape(-1) + offset * u, offset + distance, shape=x.shape)


class HighFreqOracle(Oracle):
    """Label 1 iff the spectral energy above ``cutoff`` exceeds ``threshold`` of the total."""

    def __init__(self, cutoff: int, threshold: float, shape: tuple[int, int, int] | None = None):
        if not 0.0 < threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if shape is not None and not 0 < cutoff < min(shape[0], shape[1]) / 2:
            raise ValueError(f"cutoff {cutoff} out of range for image shape {shape}")
        super().__init__(shape)
        self.cutoff = int(cutoff)
        self.threshold = float(threshold)

    def _label(self, x):
        return 1 if spectral.highpass_energy_ratio(x, self.cutoff) > self.threshold else 0


class Float32View(Oracle):
    """Wrap an oracle so it sees images rounded to float32, as a remote server does."""

    def __init__(self, inner: Oracle):
        super().__init__(inner.shape)
        self.inner = inner
        self.n_classes = inner.n_classes

    def _label(self, x):
        return self.inner._label(x.astype(np.float32).astype(np.float64))


def minimal_adversarial_l2(oracle, x: np.ndarray) -> float:
    """Exact distance from ``x`` to the decision boundary (box constraints ignored)."""
    flat = np.asarray(x, dtype=np.float64).reshape(-1)
    if isinstance(oracle, LinearOracle):
        return abs(oracle.w @ flat + oracle.b) / float(np.linalg.norm(oracle.w))
    if isinstance(oracle, SphereOracle):
        return abs(float(np.linalg.norm(flat - oracle.center)) - oracle.radius)
    raise TypeError(f"no analytic minimal perturbation for {type(oracle).__name__}")
