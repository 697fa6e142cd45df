"""Constrained convex solvers over the radius-``S`` ball.

* :func:`mle_ball` -- norm-constrained maximum likelihood. The default path is a
  projected Newton method whose steps solve the ball-constrained quadratic model
  exactly; ``method="pgd"`` is plain projected gradient descent.
* :func:`ucb_max` / :func:`ucb_max_batch` -- ``max <x, theta>`` over a
  confidence set. The default ``"sqp"`` path maximises over the ball intersected
  with a second-order model of the loss gap, pulling each step back onto the
  true level set. ``"dual"`` follows the Lagrangian path
  ``theta(w) = argmin_ball L(theta) - w <x, theta>`` until the loss gap meets the
  radius; ``"penalty"`` is quadratic-penalty continuation with projected
  gradient ascent.
* :func:`grid_oracle_ucb` -- brute force over a uniform grid, used as an
  independent check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

_TINY = 1e-300


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 2000
    grad_tol: float = 1e-8
    backtrack: float = 0.5
    armijo: float = 1e-4
    penalty_growth: float = 10.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be positive")
        if not self.grad_tol > 0:
            raise ConfigurationError("grad_tol must be positive")
        if not 0 < self.backtrack < 1:
            raise ConfigurationError("backtrack must lie in (0, 1)")
        if not 0 < self.armijo < 1:
            raise ConfigurationError("armijo must lie in (0, 1)")
        if not self.penalty_growth > 1:
            raise ConfigurationError("penalty_growth must exceed 1")


DEFAULT_CONFIG = SolverConfig()


@dataclass(frozen=True)
class SolveReport:
    solution: np.ndarray
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float


@dataclass(frozen=True)
class UCBResult:
    value: float
    theta: np.ndarray
    converged: bool
    iterations: int


def project_ball(theta, S):
    """Euclidean projection of each row of ``theta`` onto the radius-``S`` ball."""
    theta = np.asarray(theta, dtype=float)
    norms = np.linalg.norm(theta, axis=-1, keepdims=True)
    scale = np.where(norms > S, S / np.maximum(norms, _TINY), 1.0)
    return theta * scale


def gradient_mapping_norm(theta, grad, S):
    """``||theta - P(theta - grad)||``, zero exactly at constrained stationary points."""
    return np.linalg.norm(theta - project_ball(theta - grad, S), axis=-1)


# -- ball-constrained quadratic models -----------------------------------------

def trs_ball(H, b, S, max_iters=100):
    """Minimise ``y^T H y / 2 + b^T y`` subject to ``||y|| <= S`` for PSD ``H``.

    Batched over the leading axis. Returns ``(y, nu)`` with ``nu >= 0`` the
    multiplier of the ball constraint, ``(H + nu I) y = -b``. Where ``H`` is
    singular and the model is bounded, the minimum-norm minimiser is returned.
    """
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    lam, Q = np.linalg.eigh(H)
    lam = np.maximum(lam, 0.0)
    bt = np.einsum("mji,mj->mi", Q, b)
    yt, nu = _trs_eig(lam, bt, S, max_iters)
    return np.einsum("mij,mj->mi", Q, yt), nu


def _trs_eig(lam, bt, S, max_iters=100):
    """:func:`trs_ball` in the eigenbasis: ``lam`` ascending eigenvalues, ``bt`` rotated linear term."""
    bnorm = np.linalg.norm(bt, axis=1)
    lam_max = lam[:, -1]
    pos = lam > 1e-13 * np.maximum(lam_max, bnorm / S)[:, None] + _TINY
    with np.errstate(divide="ignore", invalid="ignore"):
        yt = np.where(pos, -bt / np.where(pos, lam, 1.0), 0.0)
    null_res = np.max(np.where(pos, 0.0, np.abs(bt)), axis=1)
    interior = (np.linalg.norm(yt, axis=1) <= S) & (null_res <= 1e-12 * (bnorm + _TINY))
    nu = np.zeros(lam.shape[0])

    todo = np.flatnonzero(~interior)
    if todo.size:
        lt, btt = lam[todo], bt[todo]
        bn = bnorm[todo]
        lo = np.maximum(0.0, bn / S - lt[:, -1])
        hi = bn / S - lt[:, 0]
        v = lo.copy()
        active = np.ones(todo.size, dtype=bool)
        for _ in range(max_iters):
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                den = lt + v[:, None]
                ynorm = np.sqrt(np.sum((btt / den) ** 2, axis=1))
                psi = 1.0 / ynorm - 1.0 / S
                dpsi = np.sum(btt**2 / den**3, axis=1) / ynorm**3
                step = v - psi / dpsi
            lo = np.where(psi < 0, v, lo)
            hi = np.where(psi > 0, v, hi)
            done = (np.abs(ynorm - S) <= 1e-14 * S) | (hi - lo <= 1e-15 * np.maximum(hi, _TINY))
            active &= ~done
            if not active.any():
                break
            ok = np.isfinite(step) & (step > lo) & (step < hi)
            nxt = np.where(ok, step, 0.5 * (lo + hi))
            v = np.where(active, nxt, v)
        nu[todo] = v
        with np.errstate(divide="ignore", invalid="ignore"):
            yb = -btt / (lt + v[:, None])
        yb = np.where(np.isfinite(yb), yb, 0.0)
        yn = np.linalg.norm(yb, axis=1, keepdims=True)
        yt[todo] = yb * (S / np.maximum(yn, _TINY))
    return yt, nu


def _newton_ball(fun, theta, S, tol, max_iters, armijo=1e-4, backtrack=0.5):
    """Batched projected Newton minimisation of a convex function over the ball.

    ``fun(thetas, hess, rows)`` returns ``(values, grads, hessians)`` for the
    batch members ``rows``. Each step moves
    toward the exact minimiser of the local quadratic model inside the ball and
    is globalised by Armijo backtracking. Returns
    ``(theta, values, grads, hessians, nu, iterations, residual)``.
    """
    theta = project_ball(theta, S)
    m = theta.shape[0]
    val, grad, H = fun(theta, True, np.arange(m))
    nu = np.zeros(m)
    iters = np.zeros(m, dtype=int)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), (m,))
    res = gradient_mapping_norm(theta, grad, S)
    active = res > tol
    for _ in range(max_iters):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        th, g, h = theta[idx], grad[idx], H[idx]
        y, nu_i = trs_ball(h, g - np.einsum("mij,mj->mi", h, th), S)
        p = y - th
        slope = np.einsum("mi,mi->m", g, p)
        alpha = np.ones(idx.size)
        f0 = val[idx]
        trial = th + p
        ft, gt, ht = fun(trial, True, idx)
        # Once the predicted decrease is below round-off in f, take the full step.
        precise = np.abs(slope) <= 1e-13 * (1.0 + np.abs(f0))
        accept = precise | (ft <= f0 + armijo * alpha * slope)
        for _ in range(60):
            if accept.all():
                break
            bad = np.flatnonzero(~accept)
            alpha[bad] *= backtrack
            tb = th[bad] + alpha[bad, None] * p[bad]
            fb, gb, hb = fun(tb, True, idx[bad])
            trial[bad], ft[bad], gt[bad], ht[bad] = tb, fb, gb, hb
            accept[bad] = fb <= f0[bad] + armijo * alpha[bad] * slope[bad]
        stalled = ~accept
        theta[idx] = np.where(stalled[:, None], th, trial)
        val[idx] = np.where(stalled, f0, ft)
        grad[idx] = np.where(stalled[:, None], g, gt)
        H[idx] = np.where(stalled[:, None, None], h, ht)
        nu[idx] = np.where(alpha == 1.0, nu_i, nu[idx])
        iters[idx] += 1
        res[idx] = gradient_mapping_norm(theta[idx], grad[idx], S)
        small_step = np.linalg.norm(p, axis=1) * alpha <= 1e-14 * (1.0 + S)
        active[idx] = (res[idx] > tol[idx]) & ~stalled & ~small_step
    return theta, val, grad, H, nu, iters, res


# -- maximum likelihood ------------------------------------------------------

def _global_lipschitz(history):
    lam = np.linalg.eigvalsh(history.gram)[-1] if len(history) else 0.0
    return max(lam * (0.25 if history.model == "logistic" else 0.5), 1e-12)


def _mle_pgd(history, S, config, theta):
    def f(th):
        return history.loss(th)

    # 1/L always satisfies the sufficient-decrease test, so backtracking stops there;
    # otherwise rounding in the loss values stalls the search near the optimum
    floor = 1.0 / _global_lipschitz(history)
    step = floor
    val = f(theta)
    grad = history.grad(theta)
    res = float(gradient_mapping_norm(theta, grad, S))
    it = 0
    while res > config.grad_tol and it < config.max_iters:
        it += 1
        eta = step * 2.0
        while True:
            new = project_ball(theta - eta * grad, S)
            diff = new - theta
            fnew = f(new)
            if eta <= floor or fnew <= val + grad @ diff + (diff @ diff) / (2.0 * eta):
                break
            eta = max(eta * config.backtrack, floor)
        step = eta
        theta, val = new, fnew
        grad = history.grad(theta)
        res = float(gradient_mapping_norm(theta, grad, S))
    return theta, val, it, res


def mle_ball(history, S: float, config: SolverConfig | None = None, init=None,
             method: str = "newton") -> SolveReport:
    """Minimise the cumulative loss of ``history`` over ``||theta|| <= S``.

    ``init`` warm-starts the iteration (default: zero). Never reports
    ``converged=True`` unless the gradient-mapping norm meets ``grad_tol``.
    """
    config = config or DEFAULT_CONFIG
    dim = history.dim
    if len(history) == 0:
        return SolveReport(np.zeros(dim), 0.0, 0, True, 0.0)
    theta = np.zeros(dim) if init is None else np.asarray(init, dtype=float).reshape(dim).copy()
    theta = project_ball(theta, S)
    if method == "pgd":
        theta, val, it, res = _mle_pgd(history, S, config, theta)
    elif method == "newton":
        out = _newton_ball(lambda th, h, rows: history.derivatives(th, h), theta[None, :], S,
                           config.grad_tol, config.max_iters, config.armijo, config.backtrack)
        theta, val, it, res = out[0][0], float(out[1][0]), int(out[5][0]), float(out[6][0])
    else:
        raise ConfigurationError(f"unknown MLE method {method!r}")
    return SolveReport(theta, float(val), int(it), bool(res <= config.grad_tol), float(res))


# -- optimistic value over the confidence set --------------------------------

def _check_arms(spec, arms):
    arms = np.asarray(arms, dtype=float)
    if arms.ndim == 1:
        arms = arms[None, :]
    if arms.shape[1] != spec.dim:
        raise ValueError(f"arm dimension {arms.shape[1]} does not match parameter dimension {spec.dim}")
    return arms


def _model_ucb(lam, tht, Gt, ct, v, b, S, max_iters=100):
    """Solve ``max c^T y`` s.t. ``m(y) <= b``, ``||y|| <= S`` for quadratic models of the loss gap.

    Everything is expressed in the eigenbasis of the model Hessian:
    ``m(y) = v + Gt.(y - tht) + sum(lam (y - tht)^2) / 2``. Batched over rows.
    """
    floor = 1e-12 * (lam[:, -1:] + 1.0)
    lf = np.maximum(lam, floor)
    p = Gt - lf * tht

    def model(y):
        dy = y - tht
        return v + np.sum(Gt * dy, axis=1) + 0.5 * np.sum(lf * dy * dy, axis=1)

    # Unconstrained by the ball the answer is closed form.
    mmin = v - 0.5 * np.sum(Gt * Gt / lf, axis=1)
    qc = np.sum(ct * ct / lf, axis=1)
    w0 = np.sqrt(np.maximum(2.0 * (b - mmin), 0.0) / np.maximum(qc, _TINY))
    y = (w0[:, None] * ct - p) / lf
    rest = np.flatnonzero(np.linalg.norm(y, axis=1) > S)
    if rest.size == 0:
        return y

    c, pr, lr, w = ct[rest], p[rest], lf[rest], w0[rest]
    sub = slice(None)
    tht_r, Gt_r, v_r = tht[rest], Gt[rest], v[rest]

    def model_r(yy, rows=sub):
        dy = yy - tht_r[rows]
        return v_r[rows] + np.sum(Gt_r[rows] * dy, axis=1) + 0.5 * np.sum(lr[rows] * dy * dy, axis=1)

    corner = S * c / np.linalg.norm(c, axis=1, keepdims=True)
    y_rest = corner.copy()
    at_corner = model_r(corner) <= b
    y_min, _ = _trs_eig(lr, pr, S)
    infeasible = ~at_corner & (model_r(y_min) >= b)
    y_rest[infeasible] = y_min[infeasible]

    idx = np.flatnonzero(~at_corner & ~infeasible)
    if idx.size:
        y2, ok2 = _corner_newton(lr[idx], pr[idx], c[idx], tht_r[idx], Gt_r[idx], v_r[idx], w[idx], b, S)
        y_rest[idx[ok2]] = y2[ok2]
        idx = idx[~ok2]
    if idx.size:
        ci, pi, li, wi = c[idx], pr[idx], lr[idx], w[idx]
        lo = np.zeros(idx.size)
        hi = np.full(idx.size, np.inf)
        yi = y_min[idx].copy()
        active = np.ones(idx.size, dtype=bool)
        tol = 1e-12 * max(1.0, b)
        for _ in range(max_iters):
            a = np.flatnonzero(active)
            if a.size == 0:
                break
            ya, nua = _trs_eig(li[a], pi[a] - wi[a, None] * ci[a], S)
            ma = model_r(ya, idx[a])
            yi[a] = ya
            conv = np.abs(ma - b) <= tol
            den = li[a] + nua[:, None]
            on_ball = nua > 0
            kap = np.where(on_ball,
                           np.sum(ya * ci[a] / den, axis=1) / np.maximum(np.sum(ya * ya / den, axis=1), _TINY),
                           0.0)
            dy = (ci[a] - kap[:, None] * ya) / den
            dm = wi[a] * np.sum(ci[a] * dy, axis=1)
            below = ma < b
            lo[a] = np.where(below, np.maximum(lo[a], wi[a]), lo[a])
            hi[a] = np.where(~below, np.minimum(hi[a], wi[a]), hi[a])
            ms = np.maximum(ma, _TINY)
            with np.errstate(divide="ignore", invalid="ignore"):
                wn = wi[a] - (np.sqrt(ms) - np.sqrt(b)) * 2.0 * np.sqrt(ms) / dm
            grow = 4.0 * np.maximum(wi[a], lo[a]) + 1e-12
            upper = np.where(np.isfinite(hi[a]), hi[a], grow)
            ok = np.isfinite(wn) & (wn > lo[a]) & (wn < upper)
            wn = np.where(ok, wn, np.where(np.isfinite(hi[a]), 0.5 * (lo[a] + hi[a]), grow))
            collapsed = np.isfinite(hi[a]) & (hi[a] - lo[a] <= 1e-15 * hi[a])
            wi[a] = np.where(conv | collapsed, wi[a], wn)
            active[a] = ~(conv | collapsed)
        y_rest[idx] = yi
    y[rest] = y_rest
    return y


def _corner_newton(lf, p, c, tht, Gt, v, w, b, S, max_iters=30):
    """Newton on the two multipliers when both the model bound and the sphere are active.

    With ``y(w, nu) = (w c - p) / (lf + nu)`` solves ``||y|| = S`` and ``m(y) = b``.
    Returns ``(y, converged)``; rows that fail are left to the caller.
    """
    _, nu = _trs_eig(lf, p - w[:, None] * c, S)
    nu = np.maximum(nu, 0.0)
    tol_m = 1e-12 * max(1.0, b)
    ok = np.zeros(w.size, dtype=bool)
    y = np.zeros_like(c)
    for _ in range(max_iters):
        den = lf + nu[:, None]
        y = (w[:, None] * c - p) / den
        ny = np.linalg.norm(y, axis=1)
        dy = y - tht
        m = v + np.sum(Gt * dy, axis=1) + 0.5 * np.sum(lf * dy * dy, axis=1)
        f1 = 1.0 / ny - 1.0 / S
        f2 = m - b
        ok = (np.abs(ny - S) <= 1e-13 * S) & (np.abs(f2) <= tol_m)
        if ok.all():
            break
        yw = c / den
        yn = -y / den
        g = w[:, None] * c - nu[:, None] * y
        j11 = -np.sum(y * yw, axis=1) / ny**3
        j12 = -np.sum(y * yn, axis=1) / ny**3
        j21 = np.sum(g * yw, axis=1)
        j22 = np.sum(g * yn, axis=1)
        det = j11 * j22 - j12 * j21
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            dw = -(j22 * f1 - j12 * f2) / det
            dnu = -(-j21 * f1 + j11 * f2) / det
        good = np.isfinite(dw) & np.isfinite(dnu)
        dw = np.where(good, dw, 0.0)
        dnu = np.where(good, dnu, 0.0)
        w = np.where(ok, w, np.maximum(w + dw, 0.1 * w))
        nu = np.where(ok, nu, np.maximum(nu + dnu, 0.1 * nu))
    y = y * (S / np.linalg.norm(y, axis=1, keepdims=True))
    return y, ok & (w > 0) & (nu > 0)


def _pull_back(spec, C, theta, y, b, tol_gap, max_iters=30):
    """Shorten steps ``theta -> y`` that leave the loss level set back to its boundary.

    Along the segment the loss gap is convex and ``theta`` is feasible, so Newton
    started from the infeasible end decreases monotonically onto the crossing.
    The objective never drops below its value at ``theta``.
    """
    gap = spec.loss_gap_batch(y)
    out = np.flatnonzero(gap > b + tol_gap)
    if out.size == 0:
        return y
    th, d = theta[out], y[out] - theta[out]
    s = np.ones(out.size)
    phi = gap[out] - b
    hist = spec.history
    for _ in range(max_iters):
        live = phi > tol_gap
        if not live.any():
            break
        pts = th[live] + s[live, None] * d[live]
        _, g, _ = hist.derivatives(pts, hess=False)
        slope = np.einsum("ij,ij->i", g, d[live])
        with np.errstate(divide="ignore", invalid="ignore"):
            s_new = s[live] - phi[live] / slope
        s_new = np.where(np.isfinite(s_new) & (slope > 0), np.clip(s_new, 0.0, s[live]), 0.5 * s[live])
        s[live] = s_new
        phi[live] = spec.loss_gap_batch(th[live] + s_new[:, None] * d[live]) - b
    y = y.copy()
    y[out] = th + s[:, None] * d
    return y


def _ucb_sqp(spec, C, tol_gap, max_iter=40):
    """Sequential quadratic-model iteration for arms ``C`` whose loss bound binds.

    Each step maximises ``<c, theta>`` over the ball intersected with the
    second-order model of the loss gap at the current iterate, then moves there.
    A fixed point satisfies the first-order optimality conditions of the exact
    problem. Returns ``(values, thetas, converged, iterations)``.
    """
    hist = spec.history
    S = spec.norm_bound
    b = spec.radius_sq
    m, n = C.shape
    theta = np.tile(spec.center, (m, 1))
    val0, g0, h0 = hist.derivatives(spec.center[None, :])
    val = np.repeat(val0, m)
    G = np.repeat(g0, m, axis=0)
    H = np.repeat(h0, m, axis=0)
    done = np.zeros(m, dtype=bool)
    iters = np.zeros(m, dtype=int)
    step_tol = 1e-10 * (1.0 + S)
    for k in range(max_iter):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        if k > 0:
            val[idx], G[idx], H[idx] = hist.derivatives(theta[idx])
        v = val[idx] - spec.mle_loss
        lam, Q = np.linalg.eigh(H[idx])
        lam = np.maximum(lam, 0.0)
        rot = lambda a: np.einsum("mji,mj->mi", Q, a)
        yt = _model_ucb(lam, rot(theta[idx]), rot(G[idx]), rot(C[idx]), v, b, S)
        y = project_ball(np.einsum("mij,mj->mi", Q, yt), S)
        y = _pull_back(spec, C[idx], theta[idx], y, b, tol_gap)
        step = np.linalg.norm(y - theta[idx], axis=1)
        conv = (step <= step_tol) & (np.abs(v - b) <= tol_gap)
        done[idx[conv]] = True
        move = idx[~conv]
        theta[move] = y[~conv]
        iters[move] += 1
    values = np.einsum("mi,mi->m", C, theta)
    return values, theta, done, iters


def _ucb_dual(spec, C, tol_gap, max_outer=100, max_inner=50):
    """Path-following on ``w`` for arms ``C`` (rows, all nonzero, loss-bound binding)."""
    hist = spec.history
    S = spec.norm_bound
    b = spec.radius_sq
    L0 = spec.mle_loss
    m = C.shape[0]
    fail = np.zeros(m, dtype=bool)
    iters = np.zeros(m, dtype=int)

    H0 = hist.hess(spec.center)
    reg = 1e-10 * (np.trace(H0) + 1.0)
    sol = np.linalg.solve(H0 + reg * np.eye(spec.dim), C.T).T
    q = np.einsum("mi,mi->m", C, sol)
    w = np.sqrt(2.0 * b / np.maximum(q, _TINY))
    theta = project_ball(spec.center + w[:, None] * sol, S)
    w_lo = np.zeros(m)
    w_hi = np.full(m, np.inf)
    done = np.zeros(m, dtype=bool)

    for _ in range(max_outer):
        idx = np.flatnonzero(~done & ~fail)
        if idx.size == 0:
            break
        Ci, wi = C[idx], w[idx]

        def fun(th, hess, rows, Ci=Ci, wi=wi):
            c, ww = Ci[rows], wi[rows]
            val, grad, H = hist.derivatives(th, hess)
            return val - ww * np.einsum("mi,mi->m", c, th), grad - ww[:, None] * c, H

        th, _, gF, H, nu, it, res = _newton_ball(fun, theta[idx], S, 1e-11 * (1.0 + wi), max_inner)
        iters[idx] += it
        theta[idx] = th
        v = hist.loss_batch(th) - L0
        conv = np.abs(v - b) <= tol_gap
        done[idx[conv]] = True
        # Sensitivity of theta(w): interior (H) or on the sphere (bordered system).
        n = spec.dim
        on_ball = nu > 0
        K = np.zeros((idx.size, n + 1, n + 1))
        K[:, :n, :n] = H + nu[:, None, None] * np.eye(n) + 1e-14 * (1.0 + np.trace(H, axis1=1, axis2=2))[:, None, None] * np.eye(n)
        K[:, :n, n] = np.where(on_ball[:, None], th, 0.0)
        K[:, n, :n] = np.where(on_ball[:, None], th, 0.0)
        K[:, n, n] = np.where(on_ball, 0.0, 1.0)
        rhs = np.concatenate((Ci, np.zeros((idx.size, 1))), axis=1)
        try:
            dth = np.linalg.solve(K, rhs[..., None])[..., 0][:, :n]
        except np.linalg.LinAlgError:
            dth = np.zeros_like(Ci)
        dv = wi * np.einsum("mi,mi->m", Ci, dth)

        below = v < b
        w_lo[idx] = np.where(below, np.maximum(w_lo[idx], wi), w_lo[idx])
        w_hi[idx] = np.where(~below, np.minimum(w_hi[idx], wi), w_hi[idx])
        vs = np.maximum(v, _TINY)
        with np.errstate(divide="ignore", invalid="ignore"):
            w_new = wi - (np.sqrt(vs) - np.sqrt(b)) * 2.0 * np.sqrt(vs) / dv
        lo, hi = w_lo[idx], w_hi[idx]
        upper = np.where(np.isfinite(hi), hi, 4.0 * np.maximum(wi, lo) + 1.0)
        ok = np.isfinite(w_new) & (w_new > lo) & (w_new < upper)
        fallback = np.where(np.isfinite(hi), 0.5 * (lo + hi), 4.0 * np.maximum(wi, lo) + 1.0)
        w_new = np.where(ok, w_new, fallback)
        stuck = np.isfinite(hi) & (hi - lo <= 1e-15 * hi) & ~conv
        fail[idx[stuck]] = True
        upd = ~conv & ~stuck
        theta[idx[upd]] = project_ball(th[upd] + (w_new - wi)[upd, None] * dth[upd], S)
        w[idx[upd]] = w_new[upd]

    values = np.einsum("mi,mi->m", C, theta)
    return values, theta, done & ~fail, iters


def _ucb_penalty(spec, c, config):
    """Quadratic-penalty continuation for a single arm ``c``."""
    S = spec.norm_bound
    b = spec.radius_sq
    viol_tol = 1e-6 * max(1.0, b)
    hist = spec.history
    theta = spec.center.copy()
    rho = 1.0 / max(1.0, b)
    total = 0

    def obj_grad(th, rho):
        gap = hist.loss(th) - spec.mle_loss
        ex = max(0.0, gap - b)
        f = c @ th - rho * ex**2
        g = c - 2.0 * rho * ex * hist.grad(th)
        return f, g, gap

    for _stage in range(40):
        f, g, gap = obj_grad(theta, rho)
        step = 1.0
        for _ in range(config.max_iters):
            total += 1
            res = gradient_mapping_norm(theta, -g, S)
            if res <= config.grad_tol:
                break
            eta = step * 2.0
            while True:
                new = project_ball(theta + eta * g, S)
                diff = new - theta
                fn, gn, gapn = obj_grad(new, rho)
                if fn >= f + g @ diff - (diff @ diff) / (2.0 * eta) - 1e-15 * (abs(f) + 1.0) or eta < 1e-20:
                    break
                eta *= config.backtrack
            if np.array_equal(new, theta):
                break
            step = eta
            theta, f, g, gap = new, fn, gn, gapn
        if gap - b <= viol_tol:
            return float(c @ theta), theta, True, total
        rho *= config.penalty_growth
    return float(c @ theta), theta, False, total


UCB_METHODS = ("sqp", "dual", "penalty")


def ucb_max_batch(spec, arms, config: SolverConfig | None = None, method: str = "sqp"):
    """Optimistic values ``max_{theta in C} <x, theta>`` for every row ``x`` of ``arms``.

    Returns ``(values, thetas, converged, iterations)`` as arrays. Identical arms
    receive bit-identical results.
    """
    if method not in UCB_METHODS:
        raise ConfigurationError(f"unknown UCB method {method!r}")
    config = config or DEFAULT_CONFIG
    arms = _check_arms(spec, arms)
    uniq, inverse = np.unique(arms, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    m = uniq.shape[0]
    S = spec.norm_bound
    values = np.empty(m)
    thetas = np.tile(spec.center, (m, 1))
    converged = np.ones(m, dtype=bool)
    iters = np.zeros(m, dtype=int)

    norms = np.linalg.norm(uniq, axis=1)
    nonzero = norms > 0
    values[~nonzero] = 0.0
    corner = S * uniq / np.where(nonzero, norms, 1.0)[:, None]
    ball_ok = nonzero & (spec.loss_gap_batch(corner) <= spec.radius_sq)
    values[ball_ok] = S * norms[ball_ok]
    thetas[ball_ok] = corner[ball_ok]

    rest = np.flatnonzero(nonzero & ~ball_ok)
    if rest.size:
        if spec.radius_sq <= 0.0:
            values[rest] = uniq[rest] @ spec.center
        else:
            tol_gap = 1e-9 * max(1.0, spec.radius_sq)
            if method == "sqp":
                v, th, ok, it = _ucb_sqp(spec, uniq[rest], tol_gap)
                retry = np.flatnonzero(~ok)
                if retry.size:
                    v2, th2, ok2, it2 = _ucb_dual(spec, uniq[rest[retry]], tol_gap)
                    v[retry], th[retry], ok[retry] = v2, th2, ok2
                    it[retry] += it2
            elif method == "dual":
                v, th, ok, it = _ucb_dual(spec, uniq[rest], tol_gap)
            else:
                v = np.empty(rest.size)
                th = np.empty((rest.size, spec.dim))
                ok = np.zeros(rest.size, dtype=bool)
                it = np.zeros(rest.size, dtype=int)
            for j in np.flatnonzero(~ok):
                v[j], th[j], ok[j], extra = _ucb_penalty(spec, uniq[rest[j]], config)
                it[j] += extra
            values[rest], thetas[rest], converged[rest], iters[rest] = v, th, ok, it
    return values[inverse], thetas[inverse], converged[inverse], iters[inverse]


def ucb_max(spec, arm, config: SolverConfig | None = None, method: str = "sqp") -> UCBResult:
    """Optimistic value of a single arm; see :func:`ucb_max_batch`."""
    arm = np.asarray(arm, dtype=float)
    if arm.ndim != 1:
        raise ValueError("ucb_max expects a single arm vector")
    v, th, ok, it = ucb_max_batch(spec, arm[None, :], config, method)
    return UCBResult(float(v[0]), th[0], bool(ok[0]), int(it[0]))


# -- brute-force oracle --------------------------------------------------------

def grid_points(S: float, d: int, resolution: int) -> np.ndarray:
    """Points of the uniform ``resolution^d`` grid on ``[-S, S]^d`` lying in the ball."""
    axis = np.linspace(-S, S, resolution)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return mesh[np.linalg.norm(mesh, axis=1) <= S]


def grid_feasible(spec, resolution: int = 801, chunk: int = 20000) -> np.ndarray:
    """Grid points that pass the confidence-set membership test."""
    if spec.dim > 3:
        raise ValueError(f"grid oracle supports d <= 3, got {spec.dim}")
    pts = grid_points(spec.norm_bound, spec.dim, resolution)
    keep = np.zeros(pts.shape[0], dtype=bool)
    for start in range(0, pts.shape[0], chunk):
        keep[start:start + chunk] = spec.contains_batch(pts[start:start + chunk])
    return pts[keep]


def grid_oracle_ucb(spec, arm, resolution: int = 801, feasible=None):
    """Largest ``<x, theta>`` over feasible grid points; vectorised over rows of ``arm``.

    ``feasible`` may carry a precomputed :func:`grid_feasible` result.
    """
    if spec.dim > 3:
        raise ValueError(f"grid oracle supports d <= 3, got {spec.dim}")
    pts = grid_feasible(spec, resolution) if feasible is None else feasible
    arm = np.asarray(arm, dtype=float)
    vals = pts @ np.atleast_2d(arm).T
    best = vals.max(axis=0) if pts.shape[0] else np.full(vals.shape[1], -np.inf)
    return float(best[0]) if arm.ndim == 1 else best
