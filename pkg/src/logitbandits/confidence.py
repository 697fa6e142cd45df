"""Loss-based confidence sets: closed-form radii, membership and 2-D boundary traces.

A confidence set is the intersection of the radius-``S`` ball with a sublevel set
of the cumulative loss gap ``L_t(theta) - L_t(theta_hat)``. All thresholds are
stored squared.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")


def _check_positive(**kwargs):
    for name, value in kwargs.items():
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value!r}")


def radius_logistic(d: int, S: float, t: int, delta: float) -> float:
    """Squared radius for the logistic loss set after ``t - 1`` observations.

    ``10 d log(S t / (4 d) + e) + 2 ((e - 2) + S) log(1 / delta)``
    """
    _check_delta(delta)
    _check_positive(d=d, S=S, t=t)
    return (10.0 * d * math.log(S * t / (4.0 * d) + math.e)
            + 2.0 * ((math.e - 2.0) + S) * math.log(1.0 / delta))


def radius_mnl(d: int, K: int, S: float, t: int, delta: float) -> float:
    """Squared radius for the multinomial logit loss set (``K + 1`` categories)."""
    _check_delta(delta)
    _check_positive(d=d, K=K, S=S, t=t)
    kp = K + 1
    return (5.0 * d * kp * math.log(math.e + S * t / (d * kp))
            + 2.0 * ((math.e - 2.0) + math.sqrt(6.0 * K) * S) * math.log(1.0 / delta))


def gamma_mnl(d: int, K: int, S: float, t: int, delta: float, c_gamma: float = 1.0) -> float:
    """Hessian-distance radius used by the MNL bonus, scaled by ``c_gamma``."""
    _check_delta(delta)
    _check_positive(d=d, K=K, S=S, t=t, c_gamma=c_gamma)
    inner = (d * K * S * math.log(math.e + S * t / (d * K))
             + math.sqrt(K) * S * math.log(1.0 / delta))
    return math.sqrt(c_gamma * inner)


@dataclass(frozen=True)
class ConfidenceSpec:
    """``{theta : ||theta|| <= S, L_t(theta) - L_t(theta_hat) <= radius_sq}``.

    Parameters are flattened vectors (rows stacked for the MNL model).
    ``history`` should be a snapshot that is not appended to afterwards.
    """

    history: object
    center: np.ndarray
    mle_loss: float
    radius_sq: float
    norm_bound: float

    def __post_init__(self):
        if self.radius_sq < 0:
            raise ValueError("radius_sq must be nonnegative")
        if self.norm_bound <= 0:
            raise ValueError("norm_bound must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).ravel())

    @property
    def dim(self) -> int:
        return self.history.dim

    @property
    def tol_norm(self) -> float:
        return 1e-9 * self.norm_bound

    @property
    def tol_gap(self) -> float:
        return 1e-7 * max(1.0, self.radius_sq)

    def loss_gap(self, theta) -> float:
        return float(self.loss_gap_batch(np.asarray(theta, dtype=float).reshape(1, -1))[0])

    def loss_gap_batch(self, thetas) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float).reshape(-1, self.dim)
        return self.history.loss_batch(thetas) - self.mle_loss

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float).ravel()
        if np.linalg.norm(theta) > self.norm_bound + self.tol_norm:
            return False
        return self.loss_gap(theta) <= self.radius_sq + self.tol_gap

    def contains_batch(self, thetas) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float).reshape(-1, self.dim)
        inside = np.linalg.norm(thetas, axis=1) <= self.norm_bound + self.tol_norm
        out = np.zeros(thetas.shape[0], dtype=bool)
        if inside.any():
            gaps = self.loss_gap_batch(thetas[inside])
            out[inside] = gaps <= self.radius_sq + self.tol_gap
        return out

    def rescaled(self, factor: float) -> "ConfidenceSpec":
        """Same set with ``radius_sq`` multiplied by ``factor``."""
        return ConfidenceSpec(self.history, self.center, self.mle_loss,
                              self.radius_sq * factor, self.norm_bound)


def build_spec(history, S: float, radius_sq: float, center=None, config=None,
               snapshot: bool = True) -> ConfidenceSpec:
    """Confidence set around the constrained MLE of ``history``.

    When ``center`` is omitted the MLE is computed here.
    """
    from .optim import mle_ball

    h = history.snapshot() if snapshot else history
    if center is None:
        center = mle_ball(h, S, config).solution
    center = np.asarray(center, dtype=float).ravel()
    return ConfidenceSpec(h, center, h.loss(center), float(radius_sq), float(S))


def boundary_trace_2d(spec: ConfidenceSpec, n_rays: int = 256, iters: int = 50) -> np.ndarray:
    """Boundary polygon of a 2-D confidence set, traced along rays from the center.

    Along each ray the ball limit is found in closed form and the loss limit by
    bisection; whichever binds first is returned.
    """
    if spec.dim != 2:
        raise ValueError(f"boundary_trace_2d needs d = 2, got {spec.dim}")
    if n_rays < 8:
        raise ValueError("n_rays must be at least 8")
    angles = 2.0 * np.pi * np.arange(n_rays) / n_rays
    u = np.column_stack((np.cos(angles), np.sin(angles)))
    c = spec.center
    S = spec.norm_bound
    cu = u @ c
    # ||c + s u|| = S
    disc = np.maximum(cu**2 - (c @ c - S**2), 0.0)
    s_ball = np.maximum(-cu + np.sqrt(disc), 0.0)

    gap_at_ball = spec.loss_gap_batch(c + s_ball[:, None] * u)
    hit_loss = gap_at_ball > spec.radius_sq
    s = s_ball.copy()
    if hit_loss.any():
        lo = np.zeros(hit_loss.sum())
        hi = s_ball[hit_loss]
        uu = u[hit_loss]
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            inside = spec.loss_gap_batch(c + mid[:, None] * uu) <= spec.radius_sq
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        s[hit_loss] = lo
    return c + s[:, None] * u


def polygon_contains(polygon, points, tol: float = 1e-9) -> np.ndarray:
    """Point-in-polygon for a convex polygon with vertices in counter-clockwise order.

    A point on an edge counts as inside when within ``tol``.
    """
    poly = np.asarray(polygon, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = poly
    b = np.roll(poly, -1, axis=0)
    edge = b - a
    rel = pts[:, None, :] - a[None, :, :]
    cross = edge[None, :, 0] * rel[..., 1] - edge[None, :, 1] * rel[..., 0]
    lengths = np.linalg.norm(edge, axis=1)
    lengths = np.where(lengths > 0, lengths, 1.0)
    return np.all(cross / lengths >= -tol, axis=1)


@dataclass
class CoverageLedger:
    """Per-round membership flags of the true parameter across runs."""

    runs: list = field(default_factory=list)

    def add_run(self, flags):
        self.runs.append(np.asarray(flags, dtype=bool))

    @property
    def run_count(self) -> int:
        return len(self.runs)

    @property
    def failure_count(self) -> int:
        return int(sum(not f.all() for f in self.runs))

    @property
    def failure_rate(self) -> float:
        return self.failure_count / self.run_count if self.runs else 0.0

    def round_coverage(self) -> np.ndarray:
        """Fraction of runs covering the true parameter at each round."""
        return np.mean(np.vstack(self.runs), axis=0)
