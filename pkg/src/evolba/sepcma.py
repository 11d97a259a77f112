"""Separable (diagonal) CMA-ES core.

Two consumers share this module. The attack keeps sigma fixed and moves the
mean itself along a partitioned direction (:func:`direction`); it only uses
sampling and the covariance update from here. :class:`SepCMAES` is a plain
ask/tell minimizer with cumulative step-size adaptation, used to sanity check
the numeric core on ordinary test functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DIAG_FLOOR = 1e-20
DEFAULT_POPSIZE = 117
DEFAULT_SIGMA = 1e-3
DEFAULT_C_MU = 0.1


class DegenerateDirection(ArithmeticError):
    """The signed weighted sum of offspring steps vanished."""


def log_weights(mu: int) -> np.ndarray:
    """Positive, strictly decreasing log-rank weights summing to one."""
    w = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    return w / w.sum()


def formula_popsize(n: int) -> int:
    return 4 + int(math.floor(3 * math.log(n)))


def learning_rates(n: int, mu_w: float) -> tuple[float, float]:
    """Rank-one and rank-mu rates, each scaled by (n + 2) / 3 for the diagonal model."""
    c_1 = 2.0 / ((n + 1.3) ** 2 + mu_w)
    c_mu = min(1.0 - c_1, 2.0 * (mu_w - 2.0 + 1.0 / mu_w) / ((n + 2) ** 2 + mu_w))
    scale = (n + 2) / 3.0
    return c_1 * scale, c_mu * scale


@dataclass
class CmaState:
    m: np.ndarray
    sigma: float
    lam: int
    mu: int
    weights: np.ndarray
    c_1: float
    c_mu: float
    c_c: float
    diag_c: np.ndarray = None
    p_c: np.ndarray = None
    t: int = 0
    mu_w: float = field(init=False)

    def __post_init__(self):
        n = self.m.size
        if self.diag_c is None:
            self.diag_c = np.ones(n)
        if self.p_c is None:
            self.p_c = np.zeros(n)
        if len(self.weights) != self.mu:
            raise ValueError("need one weight per parent")
        self.mu_w = 1.0 / float(np.sum(self.weights ** 2))

    @property
    def n(self) -> int:
        return self.m.size


def default_params(n: int, mean: np.ndarray | None = None, popsize: int | None = DEFAULT_POPSIZE,
                   sigma: float = DEFAULT_SIGMA, c_mu: float | None = DEFAULT_C_MU) -> CmaState:
    """Attack settings: every offspring is a parent (mu == lambda) and sigma stays fixed.

    ``popsize=None`` falls back to ``4 + floor(3 ln n)``; ``c_mu=None`` keeps
    the scaled textbook rank-mu rate instead of the tuned override.
    """
    if n < 1:
        raise ValueError("dimension must be positive")
    lam = formula_popsize(n) if popsize is None else int(popsize)
    weights = log_weights(lam)
    mu_w = 1.0 / float(np.sum(weights ** 2))
    c_1, c_mu_formula = learning_rates(n, mu_w)
    m = np.zeros(n) if mean is None else np.asarray(mean, dtype=np.float64).reshape(-1).copy()
    return CmaState(
        m=m, sigma=sigma, lam=lam, mu=lam, weights=weights,
        c_1=c_1, c_mu=c_mu_formula if c_mu is None else float(c_mu),
        c_c=4.0 / (n + 4.0),
    )


def sample_offspring(state: CmaState, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(z, x_raw)``, each of shape ``(lam, n)``; ``x_raw = m + sigma * sqrt(C) * z``."""
    z = rng.standard_normal((state.lam, state.n))
    x_raw = state.m + state.sigma * np.sqrt(state.diag_c) * z
    return z, x_raw


def direction(z_ranked: np.ndarray, adversarial_ranked: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Unit mean-move direction from a ranked population.

    Adversarial samples (best first) pull with weights ``w_1..w_l``; the
    remaining samples push with the sign flipped, the worst of them paired
    with ``w_{l+1}``, the best with ``w_mu``.
    """
    z_ranked = np.asarray(z_ranked, dtype=np.float64)
    adv = np.asarray(adversarial_ranked, dtype=bool)
    if len(z_ranked) == 0:
        raise DegenerateDirection("empty population")
    weights = np.asarray(weights)[: len(z_ranked)]
    z_adv = z_ranked[adv]
    z_non = z_ranked[~adv]
    l = len(z_adv)
    numerator = weights[:l] @ z_adv - weights[l:] @ z_non[::-1]
    norm = float(np.linalg.norm(numerator))
    if not norm > 0.0:
        raise DegenerateDirection("zero numerator")
    return numerator / norm


def update_covariance(state: CmaState, z_ranked: np.ndarray) -> CmaState:
    """Rank-one plus rank-mu update of the diagonal covariance, in place.

    ``z_ranked`` holds the standard-normal draws of the best ``mu`` offspring
    in rank order. Both the evolution path and the rank-mu term are built
    from these draws directly.
    """
    z_ranked = np.asarray(z_ranked, dtype=np.float64)[: state.mu]
    w = state.weights[: len(z_ranked)]
    c_c = state.c_c
    state.p_c = (1.0 - c_c) * state.p_c + math.sqrt(c_c * (2.0 - c_c) * state.mu_w) * (w @ z_ranked)
    rank_mu = w @ (z_ranked * z_ranked)
    state.diag_c = (1.0 - state.c_1 - state.c_mu) * state.diag_c + state.c_1 * state.p_c ** 2 + state.c_mu * rank_mu
    np.maximum(state.diag_c, DIAG_FLOOR, out=state.diag_c)
    return state


class SepCMAES:
    """Conventional Sep-CMA-ES minimizer (mu = lambda / 2, CSA step size).

    >>> es = SepCMAES(np.ones(3), 0.5, seed=1)
    >>> while es.evaluations < 2000:
    ...     z, x = es.ask()
    ...     es.tell(z, (x ** 2).sum(axis=1))
    >>> bool(es.best_f < 1e-8)
    True
    """

    def __init__(self, x0, sigma0: float, popsize: int | None = None, seed: int | None = None):
        x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
        n = x0.size
        lam = formula_popsize(n) if popsize is None else popsize
        mu = lam // 2
        weights = log_weights(mu)
        mu_w = 1.0 / float(np.sum(weights ** 2))
        c_1, c_mu = learning_rates(n, mu_w)
        self.state = CmaState(m=x0.copy(), sigma=sigma0, lam=lam, mu=mu, weights=weights,
                              c_1=c_1, c_mu=c_mu, c_c=4.0 / (n + 4.0))
        self.c_sigma = (mu_w + 2.0) / (n + mu_w + 5.0)
        self.d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_w - 1.0) / (n + 1.0)) - 1.0) + self.c_sigma
        self.chi_n = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))
        self.p_sigma = np.zeros(n)
        self.rng = np.random.default_rng(seed)
        self.evaluations = 0
        self.best_x = x0.copy()
        self.best_f = math.inf

    def ask(self) -> tuple[np.ndarray, np.ndarray]:
        return sample_offspring(self.state, self.rng)

    def tell(self, z: np.ndarray, f: np.ndarray) -> None:
        s = self.state
        f = np.asarray(f, dtype=np.float64)
        self.evaluations += len(f)
        order = np.argsort(f, kind="stable")
        if f[order[0]] < self.best_f:
            self.best_f = float(f[order[0]])
            self.best_x = s.m + s.sigma * np.sqrt(s.diag_c) * z[order[0]]
        z_sel = z[order[: s.mu]]
        z_w = s.weights @ z_sel
        s.m = s.m + s.sigma * np.sqrt(s.diag_c) * z_w
        cs = self.c_sigma
        self.p_sigma = (1.0 - cs) * self.p_sigma + math.sqrt(cs * (2.0 - cs) * s.mu_w) * z_w
        update_covariance(s, z_sel)
        s.sigma *= math.exp((cs / self.d_sigma) * (np.linalg.norm(self.p_sigma) / self.chi_n - 1.0))
        s.t += 1


def fmin(func, x0, sigma0: float, max_evals: int = 200_000, ftarget: float = -math.inf,
         seed: int | None = None) -> tuple[np.ndarray, float, int]:
    """Minimize a vectorized ``func(X) -> f`` (rows are candidates)."""
    es = SepCMAES(x0, sigma0, seed=seed)
    while es.evaluations < max_evals and es.best_f >= ftarget:
        z, x = es.ask()
        es.tell(z, func(x))
    return es.best_x, es.best_f, es.evaluations
