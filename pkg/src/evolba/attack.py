"""EvolBA: Sep-CMA-ES driven walk along the decision boundary of a hard-label oracle."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import fractal as fractal_mod
from .oracle import BudgetExhausted
from .sepcma import DegenerateDirection, default_params, direction, sample_offspring, update_covariance
from .spectral import InitFailed, init_candidate, jump
from .tensor import blend, check_image, l2_distance
from .trace import AttackTrace, QueryLog

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

# aliases accepted in config files
_ALIASES = {"lambda": "popsize", "seed": "rng_seed"}


class MisclassifiedOriginal(ValueError):
    """The oracle does not assign the expected label to the original image."""


@dataclass
class AttackConfig:
    budget: int = 30_000
    sigma: float = 1e-3
    c_mu: float | None = 0.1
    popsize: int | None = 117
    c_pen: float = 1_000.0
    tau: int = 3
    binsearch_iters: int = 26
    r_init: int = 25
    r_jump: int = 50
    jump_query_threshold: int = 1_000
    use_init_operator: bool = False
    use_jump_operator: bool = False
    fractal_source: int | str = 5
    jump_fractal_source: int | str | None = None
    fractal_n_maps: int = 3
    rng_seed: int = 0
    max_halvings: int = 30
    noise_init_tries: int = 100

    def __post_init__(self):
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.binsearch_iters < 1:
            raise ValueError("binsearch_iters must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "AttackConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            key = _ALIASES.get(key, key)
            if key not in known:
                raise ValueError(f"unknown attack config field {key!r}")
            kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "AttackConfig":
        return cls.from_dict(load_config_file(path))

    def to_dict(self) -> dict:
        return asdict(self)


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if path.suffix.lower() == ".toml":
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    return json.loads(path.read_text())


def objective(x_tilde: np.ndarray, x_orig: np.ndarray, adversarial: bool, c_pen: float) -> float:
    """Perturbation size plus a flat penalty for candidates that keep the original label."""
    return l2_distance(x_tilde, x_orig) + (0.0 if adversarial else c_pen)


def bisect_segment(x_adv, x_nonadv, oracle, original_label: int, iters: int) -> tuple[float, float]:
    """Shrink ``[alpha_l, alpha_u]`` around the label change on the segment ``x_nonadv -> x_adv``.

    ``alpha_u`` always indexes an adversarial point. Uses exactly ``iters``
    queries unless the budget runs out, in which case the bracket reached so
    far is returned.
    """
    if iters < 1:
        raise ValueError("iters must be at least 1")
    lo, hi = 0.0, 1.0
    try:
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if oracle.classify(blend(x_nonadv, x_adv, mid)) != original_label:
                hi = mid
            else:
                lo = mid
    except BudgetExhausted:
        pass
    return lo, hi


def binary_search(x_adv, x_nonadv, oracle, original_label: int, iters: int) -> np.ndarray:
    _, hi = bisect_segment(x_adv, x_nonadv, oracle, original_label, iters)
    return blend(x_nonadv, x_adv, hi)


def step_size(m: np.ndarray, x_orig: np.ndarray, t: int) -> float:
    if t < 1:
        raise ValueError("generations are counted from 1 for the step size")
    return l2_distance(m, x_orig) / math.sqrt(t)


def resolve_fractal(source, width: int, height: int, n_maps: int = 3) -> np.ndarray:
    if isinstance(source, (int, np.integer)):
        img, _ = fractal_mod.generate(int(source), width, height, n_maps=n_maps)
        return img
    return fractal_mod.load_fractal(source, width, height)


def initial_point(log_: QueryLog, x_orig, label, config: AttackConfig, rng, fractal=None):
    """Adversarial starting point: fractal merge if enabled, else uniform noise.

    Returns ``None`` if no adversarial start was found.
    """
    log_.event = "init"
    if fractal is not None:
        try:
            x0, r = init_candidate(x_orig, fractal, config.r_init, log_, label)
            log.debug("fractal init succeeded at cutoff %d", r)
            return x0
        except InitFailed:
            log.info("fractal init failed, falling back to uniform noise")
    for _ in range(config.noise_init_tries):
        u = rng.uniform(0.0, 1.0, size=x_orig.shape)
        if log_.classify(u) != label:
            return u
    return None


def run(x_orig: np.ndarray, oracle, config: AttackConfig | None = None, expected_label: int | None = None,
        fractal_init: np.ndarray | None = None, fractal_jump: np.ndarray | None = None,
        ) -> tuple[np.ndarray | None, AttackTrace]:
    """Run EvolBA against ``oracle`` and return ``(best adversarial image or None, trace)``.

    The oracle's budget is reset to ``config.budget``. Fractal donors default
    to the images described by ``config.fractal_source`` /
    ``config.jump_fractal_source`` when the corresponding operator is enabled.
    """
    config = config or AttackConfig()
    x_orig = check_image(x_orig)
    shape = x_orig.shape
    n = x_orig.size
    if not config.c_pen > math.sqrt(n):
        raise ValueError(f"c_pen={config.c_pen} must exceed sqrt(N)={math.sqrt(n):.1f}")
    h, w, _ = shape
    if config.use_init_operator and fractal_init is None:
        fractal_init = resolve_fractal(config.fractal_source, w, h, config.fractal_n_maps)
    if config.use_jump_operator and fractal_jump is None:
        if config.jump_fractal_source is not None:
            fractal_jump = resolve_fractal(config.jump_fractal_source, w, h, config.fractal_n_maps)
        elif fractal_init is not None:
            fractal_jump = fractal_init
        else:
            fractal_jump = resolve_fractal(config.fractal_source, w, h, config.fractal_n_maps)

    rng = np.random.default_rng(config.rng_seed)
    oracle.reset_budget(config.budget)
    qlog = QueryLog(oracle, x_orig)
    try:
        label = qlog.classify(x_orig)
    except BudgetExhausted:
        return None, qlog.trace
    if expected_label is not None and label != expected_label:
        raise MisclassifiedOriginal(f"original classified as {label}, expected {expected_label}")
    qlog.original_label = label

    try:
        _evolve(qlog, x_orig, label, config, rng,
                fractal_init if config.use_init_operator else None,
                fractal_jump if config.use_jump_operator else None)
    except BudgetExhausted:
        pass
    trace = qlog.trace
    return trace.best_x, trace


def _evolve(qlog: QueryLog, x_orig, label, config: AttackConfig, rng, fractal_init, fractal_jump) -> None:
    shape = x_orig.shape
    x_flat = x_orig.reshape(-1)
    iters = config.binsearch_iters

    x0 = initial_point(qlog, x_orig, label, config, rng, fractal_init)
    if x0 is None:
        log.warning("no adversarial starting point found")
        return
    qlog.event = "binsearch"
    m = binary_search(x0, x_orig, qlog, label, iters).reshape(-1)

    state = default_params(x_orig.size, mean=m, popsize=config.popsize, sigma=config.sigma, c_mu=config.c_mu)
    jumped = False
    t = 0
    while True:
        if fractal_jump is not None and not jumped and qlog.used >= config.jump_query_threshold:
            jumped = True
            m_jump = jump(m, fractal_jump, config.r_jump)
            qlog.event = "jump"
            # a non-adversarial jump target is discarded to keep the mean admissible
            if qlog.classify(np.clip(m_jump, 0.0, 1.0).reshape(shape)) != label:
                m = m_jump

        state.m = m
        z, x_raw = sample_offspring(state, rng)
        np.clip(x_raw, 0.0, 1.0, out=x_raw)
        adversarial = np.empty(state.lam, dtype=bool)
        qlog.event = "sample"
        for k in range(state.lam):
            adversarial[k] = qlog.classify(x_raw[k].reshape(shape)) != label
        f = np.linalg.norm(x_raw - x_flat, axis=1) + np.where(adversarial, 0.0, config.c_pen)
        order = np.argsort(f, kind="stable")
        update_covariance(state, z[order])
        t += 1
        try:
            v = direction(z[order], adversarial[order], state.weights)
        except DegenerateDirection:
            continue

        m = _boundary_step(qlog, m, v, x_orig, label, config, t)


def _boundary_step(qlog: QueryLog, m, v, x_orig, label, config: AttackConfig, t: int) -> np.ndarray:
    """Move the mean along ``v``, project back toward the original, keep it only if closer."""
    shape = x_orig.shape
    m_img = np.clip(m, 0.0, 1.0).reshape(shape)
    d_old = l2_distance(m_img, x_orig)
    xi = step_size(m_img, x_orig, t)

    qlog.event = "boundary-move"
    for _ in range(config.max_halvings):
        probe = np.clip(m + xi * v, 0.0, 1.0).reshape(shape)
        if qlog.classify(probe) != label:
            break
        xi *= 0.5
    else:
        return m

    qlog.event = "binsearch"
    candidate = binary_search(probe, x_orig, qlog, label, config.binsearch_iters)
    backtracks = 0
    while l2_distance(candidate, x_orig) > d_old and backtracks < config.tau:
        backtracks += 1
        xi *= 0.5
        probe = np.clip(m + xi * v, 0.0, 1.0).reshape(shape)
        qlog.event = "boundary-move"
        if qlog.classify(probe) == label:
            continue
        qlog.event = "binsearch"
        candidate = binary_search(probe, x_orig, qlog, label, config.binsearch_iters)
    if l2_distance(candidate, x_orig) > d_old:
        return m
    return candidate.reshape(-1)
