"""Link functions, losses and divergences for the Bernoulli and multinomial logit models.

Category 0 of the multinomial model ("no choice") carries an implicit logit of
zero, so an MNL parameter is a ``K x d`` matrix whose row ``k - 1`` drives
category ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, logsumexp, rel_entr, softmax

ARM_NORM_TOL = 1e-12


@dataclass(frozen=True)
class LogisticObservation:
    arm: np.ndarray
    reward: int

    def __post_init__(self):
        arm = np.asarray(self.arm, dtype=float)
        if self.reward not in (0, 1):
            raise ValueError(f"reward must be 0 or 1, got {self.reward!r}")
        if np.linalg.norm(arm) > 1.0 + ARM_NORM_TOL:
            raise ValueError("arm norm exceeds 1")
        object.__setattr__(self, "arm", arm)


@dataclass(frozen=True)
class MNLObservation:
    arm: np.ndarray
    outcome: int
    n_categories: int

    def __post_init__(self):
        arm = np.asarray(self.arm, dtype=float)
        if not 0 <= self.outcome <= self.n_categories:
            raise ValueError(f"outcome must lie in [0, {self.n_categories}]")
        if np.linalg.norm(arm) > 1.0 + ARM_NORM_TOL:
            raise ValueError("arm norm exceeds 1")
        object.__setattr__(self, "arm", arm)


@dataclass(frozen=True)
class MNLParam:
    """Parameter matrix ``Theta`` (K x d) with its Frobenius-norm bound ``S``."""

    matrix: np.ndarray
    bound: float
    tol: float = 1e-8

    def __post_init__(self):
        mat = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if self.bound <= 0:
            raise ValueError("bound must be positive")
        if np.linalg.norm(mat) > self.bound + self.tol:
            raise ValueError("Frobenius norm exceeds the bound")
        object.__setattr__(self, "matrix", mat)

    @property
    def n_categories(self) -> int:
        return self.matrix.shape[0]


def _matrix(params) -> np.ndarray:
    if isinstance(params, MNLParam):
        return params.matrix
    return np.atleast_2d(np.asarray(params, dtype=float))


# -- Bernoulli model ---------------------------------------------------------

def sigmoid(z):
    """Logistic function, stable for large ``|z|``."""
    return expit(z)


def dsigmoid(z):
    """Derivative of the logistic function, ``mu(z) (1 - mu(z))``."""
    return expit(z) * expit(-np.asarray(z, dtype=float))


def softplus(z):
    """Log-partition function of the Bernoulli model, ``log(1 + e^z)``."""
    return np.logaddexp(0.0, z)


def logistic_loss(obs: LogisticObservation, theta) -> float:
    z = float(np.dot(obs.arm, theta))
    return float(-obs.reward * log_expit(z) - (1 - obs.reward) * log_expit(-z))


def logistic_loss_grad(obs: LogisticObservation, theta) -> np.ndarray:
    z = float(np.dot(obs.arm, theta))
    return (expit(z) - obs.reward) * obs.arm


def _check_open_unit(*ps):
    for p in ps:
        p = np.asarray(p, dtype=float)
        if np.any(~np.isfinite(p)) or np.any(p <= 0.0) or np.any(p >= 1.0):
            raise ValueError("probabilities must lie strictly inside (0, 1)")


def kl_bernoulli(p, q):
    """KL divergence from Bernoulli(p) to Bernoulli(q)."""
    _check_open_unit(p, q)
    return rel_entr(p, q) + rel_entr(1.0 - np.asarray(p), 1.0 - np.asarray(q))


def bregman_logpartition(z1, z2):
    """Bregman divergence ``D_m(z1, z2)`` of ``m(z) = log(1 + e^z)``.

    Equals ``kl_bernoulli(sigmoid(z2), sigmoid(z1))``.
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    return softplus(z1) - softplus(z2) - expit(z2) * (z1 - z2)


# -- multinomial logit model ------------------------------------------------

def mnl_logits(arm, params) -> np.ndarray:
    """Logits ``(0, <x, theta_1>, ..., <x, theta_K>)`` including the implicit category 0."""
    z = _matrix(params) @ np.asarray(arm, dtype=float)
    return np.concatenate(([0.0], z))


def softmax_probs(arm, params) -> np.ndarray:
    """Choice probabilities over categories ``0..K``."""
    return softmax(mnl_logits(arm, params))


def mnl_loss(obs: MNLObservation, params) -> float:
    z = mnl_logits(obs.arm, params)
    return float(logsumexp(z) - z[obs.outcome])


def mnl_loss_grad(obs: MNLObservation, params) -> np.ndarray:
    """Gradient with respect to ``Theta``; row ``k`` is ``(mu_k - y_k) x``."""
    mu = softmax_probs(obs.arm, params)[1:]
    y = np.zeros_like(mu)
    if obs.outcome > 0:
        y[obs.outcome - 1] = 1.0
    return np.outer(mu - y, obs.arm)


def a_matrix(arm, params) -> np.ndarray:
    """Categorical covariance ``diag(mu) - mu mu^T`` over categories ``1..K``."""
    mu = softmax_probs(arm, params)[1:]
    return np.diag(mu) - np.outer(mu, mu)


def _check_simplex(p, tol=1e-9):
    p = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0):
        raise ValueError("categorical probabilities must be strictly positive")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError("categorical probabilities must sum to one")
    return p


def kl_categorical(p, q) -> float:
    """KL divergence from Categorical(p) to Categorical(q); both over ``K + 1`` categories."""
    p = _check_simplex(p)
    q = _check_simplex(q)
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    return float(np.sum(rel_entr(p, q)))


def logexpsum(z):
    """``log(1 + sum_k e^{z_k})``, the log-partition function of the categorical model."""
    z = np.asarray(z, dtype=float)
    zero = np.zeros(z.shape[:-1] + (1,))
    return logsumexp(np.concatenate((zero, z), axis=-1), axis=-1)


def bregman_logexpsum(z1, z2) -> float:
    """Bregman divergence of :func:`logexpsum`; equals the categorical KL of the swapped pair."""
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    mu2 = softmax(np.concatenate(([0.0], z2)))[1:]
    return float(logexpsum(z1) - logexpsum(z2) - mu2 @ (z1 - z2))


def logexpsum_hessian(z) -> np.ndarray:
    mu = softmax(np.concatenate(([0.0], np.asarray(z, dtype=float))))[1:]
    return np.diag(mu) - np.outer(mu, mu)


def softmax_invert(p, arm, bound: float | None = None) -> MNLParam:
    """Parameter reproducing category probabilities ``p`` (categories ``1..K``) at ``arm``.

    With ``alpha_k = p_k / p_0`` every row is ``log(alpha_k) x / ||x||^2``, so that
    ``<x, theta_k> = log(alpha_k)``.
    """
    p = np.asarray(p, dtype=float)
    x = np.asarray(arm, dtype=float)
    if np.any(p <= 0.0):
        raise ValueError("category probabilities must be positive")
    p0 = 1.0 - p.sum()
    if p0 <= 0.0:
        raise ValueError("category probabilities must sum to less than one")
    nx2 = float(x @ x)
    if nx2 == 0.0:
        raise ValueError("arm must be nonzero")
    log_alpha = np.log(p) - np.log(p0)
    theta = np.outer(log_alpha, x) / nx2
    norm = float(np.linalg.norm(theta))
    return MNLParam(theta, bound if bound is not None else max(norm, 1e-300))
