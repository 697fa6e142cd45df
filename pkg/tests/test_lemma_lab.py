import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logitbandits import lemma_lab as lab
from logitbandits.lemma_lab import (
    CHECKS,
    check_decomposition_logistic,
    check_decomposition_mnl,
    check_elliptical,
    check_freedman,
    check_poly_inequality,
    check_self_concordance,
    decomposition_logistic_residual,
    decomposition_mnl_residual,
    elliptical_bound,
    elliptical_lhs,
    run_checks,
    segment_integral_matrix,
    segment_integral_scalar,
)

import oracles


def rng(seed=0):
    return np.random.default_rng(seed)


class TestDecomposition:
    def test_equal_parameters(self):
        x = np.array([0.3, -0.2, 0.5])
        th = np.array([1.0, 2.0, -1.0])
        assert decomposition_logistic_residual(x, th, th, 1) == 0.0
        Th = rng(1).uniform(-1, 1, (3, 3))
        assert decomposition_mnl_residual(x, Th, Th, 2) <= 1e-15

    def test_unit_example(self):
        e1 = np.array([1.0, 0.0])
        assert decomposition_logistic_residual(e1, e1, np.zeros(2), 1) <= 1e-12

    def test_binary_mnl_matches_logistic(self):
        g = rng(2)
        for _ in range(50):
            x = g.uniform(-0.5, 0.5, 3)
            th, ts = g.uniform(-2, 2, (2, 3))
            r = int(g.integers(2))
            assert decomposition_mnl_residual(x, th[None], ts[None], r) == pytest.approx(
                decomposition_logistic_residual(x, th, ts, r), abs=1e-13)

    def test_random_trials(self):
        rep = check_decomposition_logistic(10_000, rng(3))
        assert rep.passed and rep.max_violation <= 1e-10
        rep = check_decomposition_logistic(2000, rng(4), norm=20.0)
        assert rep.passed and rep.tolerance == 1e-8
        rep = check_decomposition_mnl(10_000, rng(5), K=3)
        assert rep.passed and rep.max_violation <= 1e-9

    def test_mnl_rejects_large_K(self):
        with pytest.raises(ValueError):
            check_decomposition_mnl(10, rng(), K=6)

    def test_trials_validated(self):
        with pytest.raises(ValueError):
            check_poly_inequality(0, rng())


class TestSelfConcordance:
    def test_equal_endpoints(self):
        z = np.array([-3.0, 0.0, 2.5])
        mu_dot = np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))) ** 2
        np.testing.assert_allclose(segment_integral_scalar(z, z), mu_dot / 2, rtol=1e-14)

    def test_reference_segment(self):
        lhs = float(segment_integral_scalar(0.0, 4.0, 1001))
        assert lhs == pytest.approx(float(oracles.segment_integral(0, 4)), abs=1e-12)
        assert lhs == pytest.approx(0.0828, abs=1e-4)
        assert lhs >= 0.25 / 6

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_quadrature_against_mpmath(self, z1, z2):
        assert float(segment_integral_scalar(z1, z2)) == pytest.approx(
            float(oracles.segment_integral(z1, z2)), abs=1e-12)

    def test_matrix_equal_endpoints(self):
        z = np.array([0.5, -1.0, 2.0])
        mu = np.exp(z) / (1 + np.exp(z).sum())
        np.testing.assert_allclose(segment_integral_matrix(z, z),
                                   (np.diag(mu) - np.outer(mu, mu)) / 2, atol=1e-15)

    def test_checks_pass(self):
        assert check_self_concordance(10_000, rng(6)).passed
        rep = check_self_concordance(1000, rng(7), matrix=3)
        assert rep.passed and rep.name == "self_concordance_matrix"

    def test_needs_nodes(self):
        with pytest.raises(ValueError):
            check_self_concordance(10, rng(), nodes=999)


class TestElliptical:
    def test_constant_sequence(self):
        xs = np.ones((1, 3, 1))
        assert elliptical_lhs("potential", xs, 1.0)[0] == pytest.approx(1 + 1 / 2 + 1 / 3, rel=1e-14)
        assert elliptical_bound("potential", 3, 1, 1, 1.0) == pytest.approx(2 * math.log(4))

    def test_count_boundary_not_counted(self):
        xs = np.tile(np.array([1.0, 0.0]), (1, 10, 1))
        assert elliptical_lhs("count", xs, 1.0)[0] == 0

    def test_count_small_lambda(self):
        xs = np.ones((1, 20, 1))
        lhs = elliptical_lhs("count", xs, 0.5)[0]
        bound = elliptical_bound("count", 20, 1, 1, 0.5)
        assert lhs >= 1
        assert bound == pytest.approx(3.9161, abs=1e-4)
        assert lhs <= bound

    def test_generalised_reduces(self):
        xs = rng(8).uniform(-0.5, 0.5, (3, 40, 1, 2))
        np.testing.assert_allclose(elliptical_lhs("gen_potential", xs, 0.3),
                                   elliptical_lhs("potential", xs, 0.3), rtol=1e-14)

    def test_naive_loop(self):
        xs = rng(9).uniform(-0.5, 0.5, (30, 2, 3))
        V = 0.5 * np.eye(3)
        total = 0.0
        for X in xs:
            total += min(1.0, sum(x @ np.linalg.inv(V) @ x for x in X))
            V += X.T @ X
        assert elliptical_lhs("gen_potential", xs[None], 0.5)[0] == pytest.approx(total, rel=1e-12)

    @pytest.mark.parametrize("kind", lab.ELLIPTICAL_KINDS)
    @pytest.mark.parametrize("preset", lab.PRESETS)
    def test_presets_pass(self, kind, preset):
        assert check_elliptical(kind, 200, 3, 4, 0.1, rng(10), preset, trials=5).passed

    def test_unknown(self):
        with pytest.raises(ValueError):
            elliptical_bound("volume", 10, 2, 1, 1.0)


class TestFreedman:
    def test_eta_above_limit_rejected(self):
        with pytest.raises(ValueError):
            check_freedman(10, 10, 1.0 + 1e-9, 1.0, 0.05, rng())
        with pytest.raises(ValueError):
            check_freedman(10, 10, 0.6, 2.0, 0.05, rng())

    def test_zero_increments(self):
        rep = check_freedman(1000, 50, 1.0, 1.0, 0.05, rng(), "zero")
        assert rep.max_violation == 0.0 and rep.passed

    def test_rademacher(self):
        rep = check_freedman(10_000, 100, 1.0, 1.0, 0.05, rng(11))
        assert rep.passed and rep.tolerance == pytest.approx(0.05 + 3 * math.sqrt(0.05 / 10_000))

    def test_half_confidence(self):
        rep = check_freedman(4000, 100, 0.5, 1.0, 0.5, rng(12), "bernoulli")
        assert rep.passed
        assert math.log(2.0) / 0.5 > 0


class TestPoly:
    def test_examples(self):
        x = (1 + math.sqrt(5)) / 2
        assert x * x <= x + 1 + 1e-12
        assert x * x <= 4
        assert check_poly_inequality(10_000, rng(13)).max_violation <= 0.0


class TestRegistry:
    def test_deterministic(self):
        a = run_checks(["poly_inequality", "kl_bregman_logistic"], trials=500, seed=3)
        b = run_checks(["kl_bregman_logistic", "poly_inequality"], trials=500, seed=3)
        assert [r.to_json() for r in a] == [r.to_json() for r in b]
        c = run_checks(["kl_bregman_logistic"], trials=500, seed=3)
        assert c[0].to_json() == a[1].to_json()

    def test_unknown(self):
        with pytest.raises(KeyError):
            run_checks(["nope"], trials=10)

    def test_all_pass_small(self, tmp_path):
        reports = run_checks(trials=300, seed=1)
        assert [r.name for r in reports] == list(CHECKS)
        assert all(r.passed for r in reports), [r.line() for r in reports if not r.passed]
        lab.dump_reports(reports, tmp_path / "r.json")
        data = json.loads((tmp_path / "r.json").read_text())
        assert len(data) == len(CHECKS) and all("worst_instance" in d for d in data)

    def test_report_invariant(self):
        for rep in run_checks(trials=100, seed=2):
            assert rep.passed == (rep.max_violation <= rep.tolerance)
            assert rep.line().split()[0] == ("PASS" if rep.passed else "FAIL")
