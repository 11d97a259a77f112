"""Boundary Attack baseline: random orthogonal steps on a sphere plus small steps toward the original."""
from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from .attack import AttackConfig, MisclassifiedOriginal, binary_search, initial_point
from .oracle import BudgetExhausted
from .tensor import check_image
from .trace import AttackTrace, QueryLog


@dataclass
class BaConfig:
    delta: float = 0.01  # orthogonal step, relative to the current distance
    epsilon: float = 0.01  # fraction of the distance removed per step toward the original
    window: int = 30
    orthogonal_target: float = 0.5
    toward_target: float = 0.25
    binsearch_iters: int = 26
    noise_init_tries: int = 100

    def __post_init__(self):
        if self.delta < 0 or self.epsilon < 0:
            raise ValueError("step sizes must be nonnegative")
        if not (0 < self.orthogonal_target < 1 and 0 < self.toward_target < 1):
            raise ValueError("success-rate targets must lie in (0, 1)")

    @classmethod
    def from_dict(cls, data: dict) -> "BaConfig":
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def _adapt(step: float, history: deque, target: float) -> float:
    rate = sum(history) / len(history)
    if rate > target:
        return step * 1.1
    if rate < target:
        return step * 0.9
    return step


def run_ba(x_orig: np.ndarray, oracle, budget: int = 30_000, config: BaConfig | None = None, seed: int = 0,
           expected_label: int | None = None) -> tuple[np.ndarray | None, AttackTrace]:
    config = config or BaConfig()
    x_orig = check_image(x_orig)
    shape = x_orig.shape
    x_flat = x_orig.reshape(-1)
    rng = np.random.default_rng(seed)
    oracle.reset_budget(budget)
    qlog = QueryLog(oracle, x_orig)
    try:
        label = qlog.classify(x_orig)
    except BudgetExhausted:
        return None, qlog.trace
    if expected_label is not None and label != expected_label:
        raise MisclassifiedOriginal(f"original classified as {label}, expected {expected_label}")
    qlog.original_label = label

    init_cfg = AttackConfig(binsearch_iters=config.binsearch_iters, noise_init_tries=config.noise_init_tries)
    try:
        x0 = initial_point(qlog, x_orig, label, init_cfg, rng)
        if x0 is None:
            return None, qlog.trace
        qlog.event = "binsearch"
        x = binary_search(x0, x_orig, qlog, label, config.binsearch_iters).reshape(-1)
        _walk(qlog, x, x_flat, shape, label, config, rng)
    except BudgetExhausted:
        pass
    return qlog.trace.best_x, qlog.trace


def _walk(qlog: QueryLog, x, x_flat, shape, label, config: BaConfig, rng) -> None:
    delta, epsilon = config.delta, config.epsilon
    orth_hist: deque = deque(maxlen=config.window)
    toward_hist: deque = deque(maxlen=config.window)
    while True:
        diff = x - x_flat
        dist = float(np.linalg.norm(diff))
        eta = rng.standard_normal(x.size)
        norm = np.linalg.norm(eta)
        eta *= delta * dist / norm if norm > 0 else 0.0
        # project the perturbed point back onto the sphere of radius `dist` around the original
        sphere = x + eta - x_flat
        s_norm = np.linalg.norm(sphere)
        if s_norm > 0:
            sphere *= dist / s_norm
        orth = np.clip(x_flat + sphere, 0.0, 1.0)
        qlog.event = "sample"
        orth_ok = qlog.classify(orth.reshape(shape)) != label
        orth_hist.append(orth_ok)
        if orth_ok:
            toward = np.clip(orth + epsilon * (x_flat - orth), 0.0, 1.0)
            qlog.event = "boundary-move"
            toward_ok = qlog.classify(toward.reshape(shape)) != label
            toward_hist.append(toward_ok)
            if toward_ok:
                x = toward
        if len(orth_hist) == config.window:
            delta = _adapt(delta, orth_hist, config.orthogonal_target)
            orth_hist.clear()
        if len(toward_hist) == config.window:
            epsilon = min(_adapt(epsilon, toward_hist, config.toward_target), 0.5)
            toward_hist.clear()
