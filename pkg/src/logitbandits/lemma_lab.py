"""Executable numerical checks of the inequalities and identities behind the confidence sets.

Each checker samples instances, evaluates both sides independently and returns a
:class:`CheckReport`. ``max_violation`` is signed: for identities it is the
largest absolute residual, for inequalities the largest amount by which the
claimed bound is exceeded (negative when every instance holds with room to
spare), and for the Freedman check it is the empirical failure rate.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, softmax

from .env import STREAMS, uniform_ball
from .glm_core import (
    LogisticObservation,
    MNLObservation,
    bregman_logexpsum,
    bregman_logpartition,
    dsigmoid,
    kl_bernoulli,
    kl_categorical,
    logistic_loss,
    mnl_loss,
    softmax_probs,
)

LEMMA2_NOTE = ("note: the online-regret decomposition is not checked directly; it needs the "
               "iterates of an online learner that is never run. Its algebra reduces to the "
               "per-round loss decomposition (decomposition_*) summed over rounds.")

SQRT6 = math.sqrt(6.0)


@dataclass
class CheckReport:
    name: str
    trials: int
    max_violation: float
    passed: bool
    tolerance: float
    worst_instance: dict = field(default_factory=dict)
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name:<26s} trials={self.trials:<6d} "
                f"max_violation={self.max_violation:.3e} tol={self.tolerance:.1e}")

    def to_json(self) -> dict:
        out = asdict(self)
        out["max_violation"] = float(self.max_violation)
        return out

    def __str__(self):
        return self.line()


def _report(name, trials, violations, tolerance, instances, note=""):
    violations = np.asarray(violations, dtype=float)
    worst = int(np.argmax(violations))
    vmax = float(violations[worst])
    return CheckReport(name, int(trials), vmax, bool(vmax <= tolerance), float(tolerance),
                       _jsonable(instances(worst)), note)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _check_trials(trials):
    if int(trials) < 1:
        raise ValueError("trials must be at least 1")
    return int(trials)


# -- loss decompositions -------------------------------------------------------

def decomposition_logistic_residual(x, theta, theta_star, r, kl=None) -> float:
    """``|l(theta_star) - [l(theta) + xi <x, theta - theta_star> - KL(mu_star, mu_theta)]|``."""
    x = np.asarray(x, dtype=float)
    z, z_star = float(x @ theta), float(x @ theta_star)
    xi = r - expit(z_star)
    if kl is None:
        kl = kl_bernoulli(expit(z_star), expit(z))
    lhs = logistic_loss(LogisticObservation(x, r), theta_star)
    rhs = logistic_loss(LogisticObservation(x, r), theta) + xi * (z - z_star) - kl
    return abs(lhs - rhs)


def check_decomposition_logistic(trials: int, rng: np.random.Generator, norm: float = 5.0,
                                 d: int = 3) -> CheckReport:
    """Per-round logistic loss split into a noise term and a Bernoulli KL.

    For ``norm <= 5`` the KL is evaluated from the two means; beyond that the
    means saturate in double precision and the equivalent Bregman form is used,
    with the looser ``1e-8`` tolerance.
    """
    trials = _check_trials(trials)
    xs = uniform_ball(rng, trials, d)
    thetas = uniform_ball(rng, trials, d, norm)
    stars = uniform_ball(rng, trials, d, norm)
    rs = rng.integers(0, 2, trials)
    precise = norm <= 5.0
    res = np.empty(trials)
    for i in range(trials):
        kl = None if precise else float(bregman_logpartition(xs[i] @ thetas[i], xs[i] @ stars[i]))
        res[i] = decomposition_logistic_residual(xs[i], thetas[i], stars[i], int(rs[i]), kl)
    tol = 1e-10 if precise else 1e-8
    return _report("decomposition_logistic", trials, res, tol,
                   lambda i: {"x": xs[i], "theta": thetas[i], "theta_star": stars[i],
                              "r": int(rs[i])})


def decomposition_mnl_residual(x, Theta, Theta_star, outcome) -> float:
    """Multinomial analogue with ``xi = y - mu(x, Theta_star)`` over categories ``1..K``."""
    Theta = np.atleast_2d(Theta)
    Theta_star = np.atleast_2d(Theta_star)
    K = Theta.shape[0]
    mu_star = softmax_probs(x, Theta_star)
    mu = softmax_probs(x, Theta)
    y = np.zeros(K)
    if outcome > 0:
        y[outcome - 1] = 1.0
    xi = y - mu_star[1:]
    obs = MNLObservation(x, int(outcome), K)
    lhs = mnl_loss(obs, Theta_star)
    rhs = mnl_loss(obs, Theta) - kl_categorical(mu_star, mu) + xi @ ((Theta - Theta_star) @ x)
    return abs(lhs - rhs)


def check_decomposition_mnl(trials: int, rng: np.random.Generator, K: int = 3, d: int = 3,
                            norm: float = 5.0) -> CheckReport:
    trials = _check_trials(trials)
    if not 1 <= K <= 5:
        raise ValueError("K must lie in [1, 5]")
    xs = uniform_ball(rng, trials, d)
    thetas = uniform_ball(rng, trials, K * d, norm).reshape(trials, K, d)
    stars = uniform_ball(rng, trials, K * d, norm).reshape(trials, K, d)
    outcomes = rng.integers(0, K + 1, trials)
    res = np.array([decomposition_mnl_residual(xs[i], thetas[i], stars[i], int(outcomes[i]))
                    for i in range(trials)])
    return _report("decomposition_mnl", trials, res, 1e-9,
                   lambda i: {"x": xs[i], "Theta": thetas[i], "Theta_star": stars[i],
                              "outcome": int(outcomes[i]), "K": K})


# -- self-concordance ----------------------------------------------------------

def simpson_weights(nodes: int):
    """Nodes and weights of composite Simpson on ``[0, 1]``; ``nodes`` is rounded up to odd."""
    n = int(nodes) + (1 - int(nodes) % 2)
    v = np.linspace(0.0, 1.0, n)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return v, w / (3.0 * (n - 1))


def segment_integral_scalar(z1, z2, nodes: int = 1001) -> np.ndarray:
    """``int_0^1 (1 - v) mu'(z1 + v (z2 - z1)) dv`` for arrays of endpoints."""
    v, w = simpson_weights(nodes)
    z1 = np.asarray(z1, dtype=float)[..., None]
    z2 = np.asarray(z2, dtype=float)[..., None]
    return np.sum(w * (1.0 - v) * dsigmoid(z1 + v * (z2 - z1)), axis=-1)


def segment_integral_matrix(z1, z2, nodes: int = 1001) -> np.ndarray:
    """``int_0^1 (1 - v) Hess m(z1 + v (z2 - z1)) dv`` for the log-exp-sum ``m``."""
    v, w = simpson_weights(nodes)
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    z = z1[None, :] + v[:, None] * (z2 - z1)[None, :]
    mu = softmax(np.concatenate((np.zeros((v.size, 1)), z), axis=1), axis=1)[:, 1:]
    c = w * (1.0 - v)
    return np.diag(c @ mu) - (mu * c[:, None]).T @ mu


def check_self_concordance(trials: int, rng: np.random.Generator, nodes: int = 1001,
                           matrix: int | None = None, box: float = 10.0) -> CheckReport:
    """Lower bound on the segment integral of the curvature.

    Scalar case (``matrix=None``): the logistic link on ``z1, z2`` uniform in
    ``[-box, box]``. Matrix case (``matrix=K``): the log-exp-sum in ``K``
    dimensions with the constant ``sqrt(6)``, compared in the Loewner order.
    Simpson's rule with ``nodes >= 1000`` keeps the discretisation error
    several orders below the tolerance.
    """
    trials = _check_trials(trials)
    if nodes < 1000:
        raise ValueError("use at least 1000 quadrature nodes")
    if matrix is None:
        z = rng.uniform(-box, box, (trials, 2))
        lhs = segment_integral_scalar(z[:, 0], z[:, 1], nodes)
        rhs = dsigmoid(z[:, 0]) / (2.0 + np.abs(z[:, 0] - z[:, 1]))
        return _report("self_concordance", trials, rhs - lhs, 1e-10,
                       lambda i: {"z1": z[i, 0], "z2": z[i, 1], "lhs": lhs[i], "rhs": rhs[i]})
    K = int(matrix)
    z1 = rng.uniform(-box, box, (trials, K))
    z2 = rng.uniform(-box, box, (trials, K))
    viol = np.empty(trials)
    for i in range(trials):
        lhs = segment_integral_matrix(z1[i], z2[i], nodes)
        mu = softmax(np.concatenate(([0.0], z1[i])))[1:]
        hess = np.diag(mu) - np.outer(mu, mu)
        rhs = hess / (2.0 + SQRT6 * np.linalg.norm(z1[i] - z2[i]))
        viol[i] = -np.linalg.eigvalsh(lhs - rhs)[0]
    return _report("self_concordance_matrix", trials, viol, 1e-8,
                   lambda i: {"K": K, "z1": z1[i], "z2": z2[i]})


# -- elliptical potential ------------------------------------------------------

ELLIPTICAL_KINDS = ("potential", "count", "gen_potential", "gen_count")
PRESETS = ("random", "repeated_basis", "near_duplicate")


def elliptical_bound(kind: str, T: int, d: int, K: int, lam: float) -> float:
    if kind == "potential":
        return 2.0 * d * math.log(1.0 + T / (d * lam))
    if kind == "count":
        return 2.0 * d / math.log(2.0) * math.log(1.0 + 1.0 / (lam * math.log(2.0)))
    if kind == "gen_potential":
        return 2.0 * d * math.log(1.0 + K * T / (d * lam))
    if kind == "gen_count":
        return 2.0 * d / math.log(2.0) * math.log(1.0 + K / (lam * math.log(2.0)))
    raise ValueError(f"unknown elliptical kind {kind!r}")


def elliptical_sequences(preset: str, n: int, T: int, K: int, d: int,
                         rng: np.random.Generator) -> np.ndarray:
    """``(n, T, K, d)`` vectors in the unit ball.

    ``repeated_basis`` cycles through signed coordinate vectors; ``near_duplicate``
    perturbs one unit direction per sequence by ``1e-6`` and renormalises.
    """
    if preset == "random":
        return uniform_ball(rng, n * T * K, d).reshape(n, T, K, d)
    if preset == "repeated_basis":
        idx = (np.arange(T * K) % d).reshape(T, K)
        out = np.zeros((n, T, K, d))
        signs = rng.choice((-1.0, 1.0), (n, T, K))
        perm = np.array([rng.permutation(d) for _ in range(n)])
        for j in range(n):
            np.put_along_axis(out[j], perm[j][idx][..., None], signs[j][..., None], axis=2)
        return out
    if preset == "near_duplicate":
        base = uniform_ball(rng, n, d)
        base /= np.linalg.norm(base, axis=1, keepdims=True)
        x = base[:, None, None, :] + 1e-6 * rng.standard_normal((n, T, K, d))
        return x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), 1.0)
    raise ValueError(f"unknown preset {preset!r}")


def elliptical_lhs(kind: str, xs, lam: float) -> np.ndarray:
    """Exact left-hand side for a batch of sequences ``xs`` of shape ``(n, T, K, d)``.

    ``V_t`` accumulates every vector of rounds ``1..t-1`` on top of ``lam I`` and is
    solved directly each round.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 3:
        xs = xs[:, :, None, :]
    n, T, K, d = xs.shape
    V = np.broadcast_to(lam * np.eye(d), (n, d, d)).copy()
    total = np.zeros(n)
    for t in range(T):
        X = xs[:, t]  # (n, K, d)
        sol = np.linalg.solve(V, np.swapaxes(X, 1, 2))  # (n, d, K)
        score = np.einsum("nkd,ndk->n", X, sol)
        if kind in ("count", "gen_count"):
            total += score > 1.0
        else:
            total += np.minimum(1.0, score)
        V += np.einsum("nkd,nke->nde", X, X)
    return total


def check_elliptical(kind: str, T: int, d: int, K: int, lam: float, rng: np.random.Generator,
                     preset: str = "random", trials: int = 1) -> CheckReport:
    """Potential (sum of capped leverages) or count (rounds with leverage above 1) bound.

    The plain kinds use one vector per round (``K`` is ignored); the generalised
    kinds sum the leverages of ``K`` vectors per round.
    """
    trials = _check_trials(trials)
    bound = elliptical_bound(kind, T, d, K, lam)
    k_eff = K if kind.startswith("gen_") else 1
    xs = elliptical_sequences(preset, trials, T, k_eff, d, rng)
    lhs = elliptical_lhs(kind, xs, lam)
    return _report(f"elliptical_{kind}", trials, lhs - bound, 1e-9,
                   lambda i: {"preset": preset, "T": T, "d": d, "K": k_eff, "lam": lam,
                              "lhs": lhs[i], "bound": bound})


def check_elliptical_suite(kind: str, trials: int, rng: np.random.Generator,
                           T: int = 500) -> CheckReport:
    """All presets over ``d in {1, 3, 5}``, ``K in {2, 4}`` and ``lam in {0.1, 1}``.

    ``trials`` sequences are split evenly across the configurations.
    """
    trials = _check_trials(trials)
    configs = [(p, d, K, lam) for p in PRESETS for d in (1, 3, 5)
               for K in ((1,) if not kind.startswith("gen_") else (2, 4)) for lam in (0.1, 1.0)]
    per = max(1, trials // len(configs))
    reports = [check_elliptical(kind, T, d, K, lam, rng, p, per) for p, d, K, lam in configs]
    worst = max(reports, key=lambda r: r.max_violation)
    return CheckReport(f"elliptical_{kind}", per * len(configs), worst.max_violation,
                       all(r.passed for r in reports), worst.tolerance, worst.worst_instance)


# -- Freedman ------------------------------------------------------------------

FREEDMAN_PRESETS = ("rademacher", "bernoulli", "zero")


def freedman_paths(preset: str, trials: int, T: int, R: float, rng: np.random.Generator):
    """Increments and conditional variances, each ``(trials, T)``, with ``X <= R``."""
    if preset == "rademacher":
        x = R * rng.choice((-1.0, 1.0), (trials, T))
        return x, np.full((trials, T), R * R)
    if preset == "bernoulli":
        # centred Bernoulli(p) scaled by R; p varies across paths
        p = rng.uniform(0.05, 0.95, (trials, 1))
        b = (rng.random((trials, T)) < p).astype(float)
        return R * (b - p), np.broadcast_to(R * R * p * (1.0 - p), (trials, T))
    if preset == "zero":
        return np.zeros((trials, T)), np.zeros((trials, T))
    raise ValueError(f"unknown preset {preset!r}")


def check_freedman(trials: int, T: int, eta: float, R: float, delta: float,
                   rng: np.random.Generator, preset: str = "rademacher") -> CheckReport:
    """Anytime Bernstein-type bound ``sum X <= (e - 2) eta sum Var + log(1/delta) / eta``.

    A path fails if the bound is crossed at any ``t <= T``. The failure rate must
    stay inside ``delta + 3 sqrt(delta / trials)``.
    """
    trials = _check_trials(trials)
    if not 0.0 < eta <= 1.0 / R:
        raise ValueError(f"eta must lie in (0, 1/R] = (0, {1.0 / R}], got {eta}")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    x, var = freedman_paths(preset, trials, T, R, rng)
    lhs = np.cumsum(x, axis=1)
    rhs = (math.e - 2.0) * eta * np.cumsum(var, axis=1) + math.log(1.0 / delta) / eta
    failed = np.any(lhs > rhs, axis=1)
    rate = float(failed.mean())
    tol = delta + 3.0 * math.sqrt(delta / trials)
    margin = np.max(lhs - rhs, axis=1)
    worst = int(np.argmax(margin))
    return CheckReport(f"freedman_{preset}", trials, rate, rate <= tol, tol,
                       {"preset": preset, "T": T, "eta": eta, "R": R, "delta": delta,
                        "worst_margin": float(margin[worst])},
                       "probabilistic: certifies a rate inside a 3-sigma binomial band")


# -- polynomial inequality -----------------------------------------------------

def check_poly_inequality(trials: int, rng: np.random.Generator) -> CheckReport:
    """``x^2 <= b x + c`` with ``b, c >= 0`` implies ``x^2 <= 2 (b^2 + c)``.

    ``x`` is drawn up to the largest root of the premise, a quarter of the draws
    sitting exactly on it. Violations are relative to ``max(1, 2 (b^2 + c))``.
    """
    trials = _check_trials(trials)
    b = 10.0 ** rng.uniform(-3, 3, trials)
    c = 10.0 ** rng.uniform(-3, 3, trials)
    b[rng.random(trials) < 0.1] = 0.0
    c[rng.random(trials) < 0.1] = 0.0
    root = 0.5 * (b + np.sqrt(b * b + 4.0 * c))
    x = root * np.where(rng.random(trials) < 0.25, 1.0, rng.random(trials))
    bound = 2.0 * (b * b + c)
    viol = (x * x - bound) / np.maximum(1.0, bound)
    return _report("poly_inequality", trials, viol, 1e-12,
                   lambda i: {"b": b[i], "c": c[i], "x": x[i]})


# -- KL / Bregman identities ---------------------------------------------------

def check_kl_bregman_logistic(trials: int, rng: np.random.Generator, box: float = 10.0) -> CheckReport:
    trials = _check_trials(trials)
    z = rng.uniform(-box, box, (trials, 2))
    kl = kl_bernoulli(expit(z[:, 1]), expit(z[:, 0]))
    breg = bregman_logpartition(z[:, 0], z[:, 1])
    res = np.abs(kl - breg)
    return _report("kl_bregman_logistic", trials, res, 1e-11,
                   lambda i: {"z1": z[i, 0], "z2": z[i, 1]})


def check_kl_bregman_mnl(trials: int, rng: np.random.Generator, box: float = 5.0,
                         max_K: int = 5) -> CheckReport:
    trials = _check_trials(trials)
    Ks = rng.integers(1, max_K + 1, trials)
    res = np.empty(trials)
    pairs = []
    for i, K in enumerate(Ks):
        z1, z2 = rng.uniform(-box, box, (2, K))
        p2 = softmax(np.concatenate(([0.0], z2)))
        p1 = softmax(np.concatenate(([0.0], z1)))
        res[i] = abs(kl_categorical(p2, p1) - bregman_logexpsum(z1, z2))
        pairs.append((z1, z2))
    return _report("kl_bregman_mnl", trials, res, 1e-10,
                   lambda i: {"z1": pairs[i][0], "z2": pairs[i][1]})


# -- registry ------------------------------------------------------------------

CHECKS = {
    "decomposition_logistic": lambda n, rng: check_decomposition_logistic(n, rng),
    "decomposition_logistic_wide": lambda n, rng: _renamed(
        check_decomposition_logistic(n, rng, norm=20.0), "decomposition_logistic_wide"),
    "decomposition_mnl": lambda n, rng: check_decomposition_mnl(n, rng, K=3),
    "self_concordance": lambda n, rng: check_self_concordance(n, rng),
    "self_concordance_matrix": lambda n, rng: check_self_concordance(n, rng, matrix=3),
    "elliptical_potential": lambda n, rng: check_elliptical_suite("potential", n, rng),
    "elliptical_count": lambda n, rng: check_elliptical_suite("count", n, rng),
    "elliptical_gen_potential": lambda n, rng: check_elliptical_suite("gen_potential", n, rng),
    "elliptical_gen_count": lambda n, rng: check_elliptical_suite("gen_count", n, rng),
    "freedman_rademacher": lambda n, rng: check_freedman(n, 100, 1.0, 1.0, 0.05, rng, "rademacher"),
    "freedman_bernoulli": lambda n, rng: check_freedman(n, 100, 1.0, 1.0, 0.05, rng, "bernoulli"),
    "poly_inequality": lambda n, rng: check_poly_inequality(n, rng),
    "kl_bregman_logistic": lambda n, rng: check_kl_bregman_logistic(n, rng),
    "kl_bregman_mnl": lambda n, rng: check_kl_bregman_mnl(n, rng),
}


def _renamed(report, name):
    report.name = name
    return report


def check_rng(seed: int, name: str) -> np.random.Generator:
    """Independent stream per check, keyed by its position in :data:`CHECKS`."""
    key = (STREAMS["lemma"], list(CHECKS).index(name))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


def run_checks(names=None, trials: int = 10_000, seed: int = 0) -> list[CheckReport]:
    """Run the named checks (all by default) in registry order.

    Each check draws from its own stream, so a report does not depend on which
    other checks ran alongside it.
    """
    names = list(CHECKS) if names is None else list(names)
    order = [n for n in CHECKS if n in names]
    unknown = set(names) - set(CHECKS)
    if unknown:
        raise KeyError(f"unknown checks {sorted(unknown)}")
    out = []
    for name in order:
        out.append(CHECKS[name](int(trials), check_rng(seed, name)))
    return out


def dump_reports(reports, path) -> None:
    with open(path, "w") as fh:
        json.dump([r.to_json() for r in reports], fh, indent=1)
        fh.write("\n")
