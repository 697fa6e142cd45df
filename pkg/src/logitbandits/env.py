"""Simulated logistic and MNL bandit environments.

Randomness comes from independent counter-based streams, one per
``(seed, purpose)`` pair, so the arm sets and reward draws of a seed do not
depend on which agent is playing or on how much logging happens.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .glm_core import MNLParam, dsigmoid, softmax_probs

STREAMS = {"arms": 0, "rewards": 1, "agent": 2, "kappa": 3, "lemma": 4}


def stream(seed: int, purpose: str) -> np.random.Generator:
    """Philox generator for ``(seed, purpose)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[purpose],))
    return np.random.Generator(np.random.Philox(ss))


def uniform_ball(rng: np.random.Generator, n: int, d: int, radius: float = 1.0) -> np.ndarray:
    """``n`` points uniform in the ``d``-ball: Gaussian direction times ``U^(1/d)``."""
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(n) ** (1.0 / d)
    return radius * g * r[:, None]


@dataclass(frozen=True)
class LogisticEnvSpec:
    theta_star: np.ndarray
    S: float
    n_arms: int = 20
    horizon: int = 4000
    fixed_arms: np.ndarray | None = None

    def __post_init__(self):
        th = np.asarray(self.theta_star, dtype=float).ravel()
        object.__setattr__(self, "theta_star", th)
        if np.linalg.norm(th) > self.S * (1 + 1e-12):
            raise ValueError("||theta_star|| exceeds S")
        _check_arms(self, th.size)

    @property
    def d(self) -> int:
        return self.theta_star.size

    @property
    def model(self) -> str:
        return "logistic"

    def means(self, arms) -> np.ndarray:
        return expit(np.atleast_2d(arms) @ self.theta_star)


@dataclass(frozen=True)
class MNLEnvSpec:
    theta_star: np.ndarray
    rho: np.ndarray
    S: float
    R: float
    n_arms: int = 20
    horizon: int = 1000
    fixed_arms: np.ndarray | None = None

    def __post_init__(self):
        mat = self.theta_star.matrix if isinstance(self.theta_star, MNLParam) else self.theta_star
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        MNLParam(mat, self.S, tol=1e-12 * self.S)
        rho = np.asarray(self.rho, dtype=float).ravel()
        if rho.size != mat.shape[0]:
            raise ValueError("rho must have one entry per non-default category")
        if np.linalg.norm(rho) > self.R * (1 + 1e-12):
            raise ValueError("||rho|| exceeds R")
        object.__setattr__(self, "theta_star", mat)
        object.__setattr__(self, "rho", rho)
        _check_arms(self, mat.shape[1])

    @property
    def d(self) -> int:
        return self.theta_star.shape[1]

    @property
    def K(self) -> int:
        return self.theta_star.shape[0]

    @property
    def model(self) -> str:
        return "mnl"

    def means(self, arms) -> np.ndarray:
        """Expected reward ``rho^T mu(x, Theta_star)`` of every arm."""
        arms = np.atleast_2d(arms)
        return np.array([self.rho @ softmax_probs(x, self.theta_star)[1:] for x in arms])


def _check_arms(spec, d):
    if spec.n_arms < 1:
        raise ValueError("n_arms must be positive")
    if spec.fixed_arms is not None:
        arms = np.atleast_2d(np.asarray(spec.fixed_arms, dtype=float))
        if arms.shape[1] != d:
            raise ValueError("fixed arm dimension mismatch")
        if np.any(np.linalg.norm(arms, axis=1) > 1 + 1e-12):
            raise ValueError("fixed arms must lie in the unit ball")
        object.__setattr__(spec, "fixed_arms", arms)


def sample_reward(spec, arm, rng: np.random.Generator) -> int:
    """One Bernoulli or categorical outcome, consuming a single uniform draw."""
    u = rng.random()
    if spec.model == "logistic":
        return int(u < expit(float(np.dot(arm, spec.theta_star))))
    cdf = np.cumsum(softmax_probs(arm, spec.theta_star))
    return int(min(np.searchsorted(cdf, u, side="right"), spec.K))


def instant_regret(spec, arm_set, chosen: int) -> float:
    """Best expected reward in ``arm_set`` minus that of arm ``chosen``."""
    means = spec.means(arm_set)
    return float(max(means.max() - means[chosen], 0.0))


class Environment:
    """Round-by-round arm sets and outcomes for one seed.

    Agents only ever receive arm sets and outcomes; the true parameter stays here.
    """

    def __init__(self, spec, seed: int):
        self.spec = spec
        self.seed = int(seed)
        self._arm_rng = stream(seed, "arms")
        self._reward_rng = stream(seed, "rewards")

    def arm_set(self) -> np.ndarray:
        if self.spec.fixed_arms is not None:
            return self.spec.fixed_arms.copy()
        return uniform_ball(self._arm_rng, self.spec.n_arms, self.spec.d)

    def pull(self, arm) -> int:
        return sample_reward(self.spec, arm, self._reward_rng)

    def regret(self, arm_set, chosen: int) -> float:
        return instant_regret(self.spec, arm_set, chosen)


class KappaReport(NamedTuple):
    kappa_star: float
    kappa_x: float
    kappa: float
    kappa_is_estimate: bool = True


def _inv_curvature(model: str, z):
    """``1 / mu'(z)`` (logistic) or ``1 / lambda_min(A)`` at logits ``z`` (MNL, rows of ``z``)."""
    if model == "logistic":
        return 1.0 / dsigmoid(z)
    z = np.atleast_2d(z)
    mu = np.exp(z - np.logaddexp.reduce(np.concatenate((np.zeros((z.shape[0], 1)), z), axis=1),
                                        axis=1, keepdims=True))
    A = -mu[:, :, None] * mu[:, None, :]
    A[:, np.arange(z.shape[1]), np.arange(z.shape[1])] += mu
    return 1.0 / np.linalg.eigvalsh(A)[:, 0]


def _logits(spec, arms):
    arms = np.atleast_2d(arms)
    return arms @ spec.theta_star if spec.model == "logistic" else arms @ spec.theta_star.T


def kappa_report(spec, arm_sets, n_samples: int = 10_000, seed: int = 0) -> KappaReport:
    """Curvature constants over realised arm sets.

    ``kappa_star`` and ``kappa_x`` are exact. ``kappa`` maximises the inverse
    curvature over ``n_samples`` logits drawn uniformly from the image of the
    parameter ball, ``{Theta x : ||Theta|| <= S}``, which is the ball of radius
    ``S ||x||``; the image grows with ``||x||`` so only the longest arm matters.
    The sampled value is a lower bound on the true constant.
    """
    arm_sets = [np.atleast_2d(a) for a in arm_sets]
    best_curv = []
    worst = 0.0
    for arms in arm_sets:
        z = _logits(spec, arms)
        inv = np.atleast_1d(_inv_curvature(spec.model, z))
        worst = max(worst, float(inv.max()))
        opt = int(np.argmax(spec.means(arms)))
        best_curv.append(1.0 / inv[opt])
    kappa_star = 1.0 / float(np.mean(best_curv))
    rmax = max(float(np.linalg.norm(a, axis=1).max()) for a in arm_sets)
    rng = stream(seed, "kappa")
    k = 1 if spec.model == "logistic" else spec.K
    zs = uniform_ball(rng, n_samples, k, spec.S * rmax)
    inv = _inv_curvature(spec.model, zs[:, 0] if spec.model == "logistic" else zs)
    return KappaReport(kappa_star, worst, float(np.max(inv)), True)


def kappa_logistic_exact(S: float, arm_sets) -> float:
    """Closed form for the logistic model: ``1 / mu'(S max ||x||)``."""
    rmax = max(float(np.linalg.norm(np.atleast_2d(a), axis=1).max()) for a in arm_sets)
    return float(1.0 / dsigmoid(S * rmax))


def benchmark_instance(S: float) -> LogisticEnvSpec:
    """Two-dimensional benchmark: ``theta_star = (S - 1)/sqrt(2) (1, 1)``, 20 fresh arms per round."""
    if S not in (5, 10):
        raise ValueError("the benchmark instance is defined for S in {5, 10}")
    d = 2
    return LogisticEnvSpec(theta_star=np.full(d, (S - 1) / np.sqrt(d)), S=float(S),
                           n_arms=20, horizon=4000)


def mnl_smoke_instance(S: float = 3.0, K: int = 3, horizon: int = 1000) -> MNLEnvSpec:
    """Planar MNL instance: rows of ``Theta_star`` are evenly spread directions of equal length."""
    angles = 2.0 * np.pi * np.arange(K) / K
    rows = np.column_stack((np.cos(angles), np.sin(angles))) * (S - 1.0) / np.sqrt(K)
    rho = np.full(K, 1.0 / np.sqrt(K))
    return MNLEnvSpec(theta_star=rows, rho=rho, S=float(S), R=1.0, n_arms=20, horizon=horizon)


def default_mnl_kappa(K: int, S: float, n_samples: int = 10_000, seed: int = 0,
                      safety: float = 1.5) -> float:
    """Agent-side curvature constant: sampled ``max 1/lambda_min(A)`` over ``||z|| <= S``, inflated.

    Uses only ``K`` and ``S`` (arms lie in the unit ball), never the true parameter.
    """
    zs = uniform_ball(stream(seed, "kappa"), n_samples, K, S)
    return safety * float(np.max(_inv_curvature("mnl", zs)))

