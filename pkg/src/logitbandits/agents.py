"""Bandit policies behind a common contract: ``choose(arm_set) -> index``, ``update(arm, outcome)``.

Every agent keeps its own observation history and the norm-constrained MLE,
refreshed after each update. Ties between arms go to the lowest index.
"""
from __future__ import annotations

import numpy as np
from scipy.special import softmax

from .confidence import ConfidenceSpec, gamma_mnl, radius_logistic, radius_mnl
from .env import stream
from .errors import ConfigurationError, SolverError
from .history import LogisticHistory, MNLHistory
from .optim import SolveReport, mle_ball, ucb_max_batch


class BanditAgent:
    """History, MLE and round counter shared by all policies."""

    kind = "base"

    def __init__(self, model: str, d: int, S: float, delta: float, K: int | None = None,
                 solver_config=None):
        if model not in ("logistic", "mnl"):
            raise ConfigurationError(f"unknown model {model!r}")
        if model == "mnl" and not K:
            raise ConfigurationError("the MNL model needs K")
        if not 0 < delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        if not S > 0:
            raise ConfigurationError("S must be positive")
        self.model = model
        self.d = int(d)
        self.K = int(K) if K else None
        self.S = float(S)
        self.delta = float(delta)
        self.solver_config = solver_config
        self.history = LogisticHistory(d) if model == "logistic" else MNLHistory(d, K)
        self.mle = SolveReport(np.zeros(self.history.dim), 0.0, 0, True, 0.0)
        self.t = 1
        self.last_record: dict = {}

    @property
    def theta_hat(self) -> np.ndarray:
        if self.model == "mnl":
            return self.mle.solution.reshape(self.K, self.d)
        return self.mle.solution

    def radius_sq(self) -> float:
        if self.model == "logistic":
            return radius_logistic(self.d, self.S, self.t, self.delta)
        return radius_mnl(self.d, self.K, self.S, self.t, self.delta)

    def confidence_set(self, radius_sq: float | None = None) -> ConfidenceSpec:
        """Loss-based set around the current MLE; unscaled radius by default."""
        h = self.history.snapshot()
        center = self.mle.solution
        return ConfidenceSpec(h, center, h.loss(center),
                              self.radius_sq() if radius_sq is None else radius_sq, self.S)

    def choose(self, arm_set) -> int:
        raise NotImplementedError

    def update(self, arm, outcome) -> None:
        self.history.append(arm, outcome)
        report = mle_ball(self.history, self.S, self.solver_config, init=self.mle.solution)
        if not report.converged:
            raise SolverError(f"MLE did not converge after round {self.t} "
                              f"(residual {report.kkt_residual:.3g})")
        self.mle = report
        self.t += 1

    def _mean_scores(self, arms) -> np.ndarray:
        """Plug-in expected reward ordering under the MLE."""
        if self.model == "logistic":
            return arms @ self.mle.solution
        z = arms @ self.theta_hat.T
        mu = softmax(np.concatenate((np.zeros((z.shape[0], 1)), z), axis=1), axis=1)[:, 1:]
        return mu @ self.rho


class OFULogPlus(BanditAgent):
    """Optimistic logistic policy: largest ``max <x, theta>`` over the loss-based set."""

    kind = "ofulogplus"
    radius_scale = 1.0

    def __init__(self, d: int, S: float, delta: float = 0.05, solver_config=None):
        super().__init__("logistic", d, S, delta, solver_config=solver_config)

    def choose(self, arm_set) -> int:
        arms = np.atleast_2d(np.asarray(arm_set, dtype=float))
        spec = self.confidence_set(self.radius_scale * self.radius_sq())
        values, thetas, ok, _ = ucb_max_batch(spec, arms, self.solver_config)
        if not ok.all():
            bad = int(np.flatnonzero(~ok)[0])
            raise SolverError(f"optimistic value did not converge at round {self.t}, arm {bad}")
        self.last_record = {"ucb": values, "radius_sq": spec.radius_sq}
        return int(np.argmax(values))


class RadiusScaledOFULog(OFULogPlus):
    """Same policy with the squared radius inflated by ``radius_scale`` (default ``S``)."""

    kind = "radius_scaled"

    def __init__(self, d: int, S: float, delta: float = 0.05, radius_scale: float | None = None,
                 solver_config=None):
        super().__init__(d, S, delta, solver_config)
        scale = S if radius_scale is None else radius_scale
        if not scale > 0:
            raise ConfigurationError("radius_scale must be positive")
        self.radius_scale = float(scale)


class EpsGreedy(BanditAgent):
    """Uniform exploration with probability ``eps``, greedy on the MLE otherwise."""

    kind = "eps_greedy"

    def __init__(self, model: str, d: int, S: float, delta: float = 0.05, eps: float = 0.1,
                 seed: int = 0, K: int | None = None, rho=None, solver_config=None):
        super().__init__(model, d, S, delta, K, solver_config)
        if not 0 <= eps <= 1:
            raise ConfigurationError("eps must lie in [0, 1]")
        if model == "mnl":
            if rho is None:
                raise ConfigurationError("the MNL model needs rho")
            self.rho = np.asarray(rho, dtype=float)
        self.eps = float(eps)
        self._rng = stream(seed, "agent")

    def choose(self, arm_set) -> int:
        arms = np.atleast_2d(np.asarray(arm_set, dtype=float))
        if self._rng.random() < self.eps:
            self.last_record = {"explore": True}
            return int(self._rng.integers(arms.shape[0]))
        self.last_record = {"explore": False}
        return int(np.argmax(self._mean_scores(arms)))


class UniformRandom(BanditAgent):
    """Uniformly random arm each round; still maintains the MLE for coverage tracking."""

    kind = "uniform"

    def __init__(self, model: str, d: int, S: float, delta: float = 0.05, seed: int = 0,
                 K: int | None = None, solver_config=None):
        super().__init__(model, d, S, delta, K, solver_config)
        self._rng = stream(seed, "agent")

    def choose(self, arm_set) -> int:
        return int(self._rng.integers(len(arm_set)))


class MNLUCBPlus(BanditAgent):
    """Mean plus elliptical bonus for the multinomial logit model.

    The bonus is ``sqrt(2 kappa) R L gamma_t ||x||_{V_t^-1}`` with
    ``V_t = 2 kappa lam I + sum x x^T`` and ``lam = K / (4 S^2)``.
    """

    kind = "mnl_ucb_plus"

    def __init__(self, d: int, K: int, S: float, rho, delta: float = 0.05, kappa: float | None = None,
                 R: float | None = None, L: float | None = 0.5, c_gamma: float = 1.0,
                 solver_config=None):
        super().__init__("mnl", d, S, delta, K, solver_config)
        self.rho = np.asarray(rho, dtype=float).ravel()
        if self.rho.size != K:
            raise ConfigurationError("rho must have K entries")
        if kappa is None or R is None or L is None:
            raise ConfigurationError("kappa, R and L must all be set")
        if not kappa > 0:
            raise ConfigurationError("kappa must be positive")
        if R < np.linalg.norm(self.rho) * (1 - 1e-12):
            raise ConfigurationError("R must bound ||rho||")
        if not 0 < L <= 0.5:
            raise ConfigurationError("L must lie in (0, 1/2]")
        if not c_gamma > 0:
            raise ConfigurationError("c_gamma must be positive")
        self.kappa, self.R, self.L, self.c_gamma = float(kappa), float(R), float(L), float(c_gamma)
        self.lam = K / (4.0 * S**2)
        reg = 2.0 * self.kappa * self.lam
        self.V = reg * np.eye(d)
        self.V_inv = np.eye(d) / reg

    def bonus(self, arms) -> np.ndarray:
        arms = np.atleast_2d(arms)
        gamma = gamma_mnl(self.d, self.K, self.S, self.t, self.delta, self.c_gamma)
        norms = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", arms, self.V_inv, arms), 0.0))
        return np.sqrt(2.0 * self.kappa) * self.R * self.L * gamma * norms

    def choose(self, arm_set) -> int:
        arms = np.atleast_2d(np.asarray(arm_set, dtype=float))
        means = self._mean_scores(arms)
        bonus = self.bonus(arms)
        self.last_record = {"mean": means, "bonus": bonus}
        return int(np.argmax(means + bonus))

    def update(self, arm, outcome) -> None:
        x = np.asarray(arm, dtype=float)
        vx = self.V_inv @ x
        self.V_inv = self.V_inv - np.outer(vx, vx) / (1.0 + x @ vx)
        self.V = self.V + np.outer(x, x)
        super().update(arm, outcome)


AGENT_KINDS = ("ofulogplus", "radius_scaled", "eps_greedy", "mnl_ucb_plus", "uniform")


def make_agent(kind: str, **kw) -> BanditAgent:
    """Factory keyed by policy name; unknown names raise :class:`ConfigurationError`."""
    if kind == "ofulogplus":
        return OFULogPlus(kw["d"], kw["S"], kw.get("delta", 0.05), kw.get("solver_config"))
    if kind == "radius_scaled":
        return RadiusScaledOFULog(kw["d"], kw["S"], kw.get("delta", 0.05), kw.get("radius_scale"),
                                  kw.get("solver_config"))
    if kind == "eps_greedy":
        return EpsGreedy(kw.get("model", "logistic"), kw["d"], kw["S"], kw.get("delta", 0.05),
                         kw.get("eps", 0.1), kw.get("seed", 0), kw.get("K"), kw.get("rho"),
                         kw.get("solver_config"))
    if kind == "uniform":
        return UniformRandom(kw.get("model", "logistic"), kw["d"], kw["S"], kw.get("delta", 0.05),
                             kw.get("seed", 0), kw.get("K"), kw.get("solver_config"))
    if kind == "mnl_ucb_plus":
        return MNLUCBPlus(kw["d"], kw["K"], kw["S"], kw["rho"], kw.get("delta", 0.05),
                          kw.get("kappa"), kw.get("R"), kw.get("L", 0.5), kw.get("c_gamma", 1.0),
                          kw.get("solver_config"))
    raise ConfigurationError(f"unknown agent kind {kind!r}")
