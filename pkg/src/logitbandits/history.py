"""Observation histories with vectorised cumulative-loss evaluators.

Both history types expose the same flattened-parameter interface used by the
solvers: a parameter is a vector of length ``dim`` (``d`` for the logistic
model, ``K * d`` for the MNL model with rows stacked), and the batched
evaluators accept an ``(A, dim)`` array of parameters.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit, logsumexp, softmax


# Below this logit magnitude exp(z) cannot overflow and log(1 + e^z) is accurate
# to a few ulps, so the cheaper unguarded formulas are used.
_FAST_LOGIT = 30.0


class _Buffer:
    """Append-only row buffer with amortised doubling."""

    def __init__(self, width, dtype=float, capacity=64):
        self._data = np.zeros((capacity, width) if width else (capacity,), dtype=dtype)
        self.n = 0

    def append(self, row):
        if self.n == self._data.shape[0]:
            grown = np.zeros((2 * self.n,) + self._data.shape[1:], dtype=self._data.dtype)
            grown[: self.n] = self._data
            self._data = grown
        self._data[self.n] = row
        self.n += 1

    @property
    def view(self):
        return self._data[: self.n]


class LogisticHistory:
    """Time-ordered ``(arm, reward)`` pairs for the Bernoulli model.

    Caches ``sum_s r_s x_s``, the Gram matrix ``sum_s x_s x_s^T`` and the
    per-observation outer products used for batched Hessians.
    """

    model = "logistic"

    def __init__(self, d: int):
        self.d = int(d)
        self._arms = _Buffer(self.d)
        self._rewards = _Buffer(0)
        self._outer = _Buffer(self.d * self.d)
        self.sum_rx = np.zeros(self.d)
        self.gram = np.zeros((self.d, self.d))

    @property
    def dim(self) -> int:
        return self.d

    def __len__(self):
        return self._arms.n

    @property
    def arms(self) -> np.ndarray:
        return self._arms.view

    @property
    def rewards(self) -> np.ndarray:
        return self._rewards.view

    def append(self, arm, reward):
        x = np.asarray(arm, dtype=float).reshape(self.d)
        if reward not in (0, 1):
            raise ValueError("reward must be 0 or 1")
        self._arms.append(x)
        self._rewards.append(float(reward))
        xx = np.outer(x, x)
        self._outer.append(xx.ravel())
        self.sum_rx = self.sum_rx + reward * x
        self.gram = self.gram + xx

    def snapshot(self) -> "LogisticHistory":
        h = LogisticHistory(self.d)
        for buf_name in ("_arms", "_rewards", "_outer"):
            src = getattr(self, buf_name)
            dst = getattr(h, buf_name)
            dst._data = src.view.copy()
            dst.n = src.n
        h.sum_rx = self.sum_rx.copy()
        h.gram = self.gram.copy()
        return h

    # -- cumulative loss --------------------------------------------------

    def loss(self, theta) -> float:
        return float(self.loss_batch(np.asarray(theta, dtype=float)[None, :])[0])

    def loss_batch(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(thetas)
        if len(self) == 0:
            return np.zeros(thetas.shape[0])
        z = self.arms @ thetas.T
        if np.max(np.abs(z)) <= _FAST_LOGIT:
            sp = np.log(1.0 + np.exp(z))
        else:
            sp = np.logaddexp(0.0, z)
        return sp.sum(axis=0) - thetas @ self.sum_rx

    def grad(self, theta) -> np.ndarray:
        return self.derivatives(np.asarray(theta, dtype=float)[None, :], hess=False)[1][0]

    def hess(self, theta) -> np.ndarray:
        return self.derivatives(np.asarray(theta, dtype=float)[None, :])[2][0]

    def derivatives(self, thetas, hess=True):
        """Loss values, gradients and (optionally) Hessians for a batch of parameters."""
        thetas = np.atleast_2d(thetas)
        a = thetas.shape[0]
        if len(self) == 0:
            zeros = np.zeros((a, self.d))
            return np.zeros(a), zeros, (np.zeros((a, self.d, self.d)) if hess else None)
        X = self.arms
        z = X @ thetas.T
        if np.max(np.abs(z)) <= _FAST_LOGIT:
            e = np.exp(z)
            one_e = 1.0 + e
            sp = np.log(one_e)
            inv = 1.0 / one_e
            p = e * inv
            w = p * inv if hess else None
        else:
            sp = np.logaddexp(0.0, z)
            p = expit(z)
            w = p * expit(-z) if hess else None
        val = sp.sum(axis=0) - thetas @ self.sum_rx
        grad = (p.T @ X) - self.sum_rx
        H = None
        if hess:
            H = (w.T @ self._outer.view).reshape(a, self.d, self.d)
        return val, grad, H


class MNLHistory:
    """Time-ordered ``(arm, outcome)`` pairs for the multinomial logit model.

    Outcomes are category indices in ``0..K`` with 0 meaning no choice.
    """

    model = "mnl"

    def __init__(self, d: int, K: int):
        self.d = int(d)
        self.K = int(K)
        self._arms = _Buffer(self.d)
        self._outcomes = _Buffer(0, dtype=np.int64)
        self.sum_yx = np.zeros((self.K, self.d))
        self.gram = np.zeros((self.d, self.d))

    @property
    def dim(self) -> int:
        return self.K * self.d

    def __len__(self):
        return self._arms.n

    @property
    def arms(self) -> np.ndarray:
        return self._arms.view

    @property
    def outcomes(self) -> np.ndarray:
        return self._outcomes.view

    def append(self, arm, outcome):
        x = np.asarray(arm, dtype=float).reshape(self.d)
        outcome = int(outcome)
        if not 0 <= outcome <= self.K:
            raise ValueError("outcome out of range")
        self._arms.append(x)
        self._outcomes.append(outcome)
        if outcome > 0:
            self.sum_yx = self.sum_yx.copy()
            self.sum_yx[outcome - 1] += x
        self.gram = self.gram + np.outer(x, x)

    def snapshot(self) -> "MNLHistory":
        h = MNLHistory(self.d, self.K)
        for buf_name in ("_arms", "_outcomes"):
            src = getattr(self, buf_name)
            dst = getattr(h, buf_name)
            dst._data = src.view.copy()
            dst.n = src.n
        h.sum_yx = self.sum_yx.copy()
        h.gram = self.gram.copy()
        return h

    def _logits(self, thetas):
        mats = thetas.reshape(-1, self.K, self.d)
        z = np.einsum("sd,akd->sak", self.arms, mats)
        zero = np.zeros(z.shape[:2] + (1,))
        return np.concatenate((zero, z), axis=2), mats

    def loss(self, theta) -> float:
        return float(self.loss_batch(np.asarray(theta, dtype=float).reshape(1, -1))[0])

    def loss_batch(self, thetas) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float).reshape(-1, self.dim)
        if len(self) == 0:
            return np.zeros(thetas.shape[0])
        z, mats = self._logits(thetas)
        lin = np.einsum("akd,kd->a", mats, self.sum_yx)
        return logsumexp(z, axis=2).sum(axis=0) - lin

    def grad(self, theta) -> np.ndarray:
        return self.derivatives(np.asarray(theta, dtype=float).reshape(1, -1), hess=False)[1][0]

    def hess(self, theta) -> np.ndarray:
        return self.derivatives(np.asarray(theta, dtype=float).reshape(1, -1))[2][0]

    def derivatives(self, thetas, hess=True):
        thetas = np.asarray(thetas, dtype=float).reshape(-1, self.dim)
        a = thetas.shape[0]
        if len(self) == 0:
            return (np.zeros(a), np.zeros((a, self.dim)),
                    np.zeros((a, self.dim, self.dim)) if hess else None)
        z, mats = self._logits(thetas)
        lin = np.einsum("akd,kd->a", mats, self.sum_yx)
        val = logsumexp(z, axis=2).sum(axis=0) - lin
        mu = softmax(z, axis=2)[:, :, 1:]
        grad = np.einsum("sak,sd->akd", mu, self.arms) - self.sum_yx
        H = None
        if hess:
            # sum_s A_s (x) x_s x_s^T with A_s = diag(mu_s) - mu_s mu_s^T
            K, d = self.K, self.d
            amat = -mu[..., :, None] * mu[..., None, :]
            amat[..., np.arange(K), np.arange(K)] += mu
            xx = (self.arms[:, :, None] * self.arms[:, None, :]).reshape(-1, d * d)
            blocks = amat.reshape(len(self), a * K * K).T @ xx
            H = (blocks.reshape(a, K, K, d, d).transpose(0, 1, 3, 2, 4)
                 .reshape(a, self.dim, self.dim))
        return val, grad.reshape(a, self.dim), H
