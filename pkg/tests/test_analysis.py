import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kaczmarz_approx import analysis
from kaczmarz_approx.analysis import (
    IdentityCheckResult,
    lemma1_exact_check,
    rank_bound_check,
    residual_sqrt_k_profile,
    singular_direction_expectation_check,
    strohmer_vershynin_rate_check,
    theorem1_bound,
    theorem2_diagnostic,
    theorem2_ensemble,
)
from kaczmarz_approx.engine import LinearSystem, MaxSteps, RunHistory, run
from kaczmarz_approx.matrix import SpectralSummary, hilbert, svd_small

# tools/derive_oracles.py: ceil(2 ln(10) * 2 / 0.01)
THEOREM1_EXAMPLE_K = 922


def summary(norm, fro2, smin=None):
    return SpectralSummary(frobenius_norm=math.sqrt(fro2), operator_norm=norm, sigma_min=smin)


class TestIterationBound:
    def test_arithmetic_example(self):
        r = theorem1_bound(summary(1.0, 2.0), 0.1)
        assert r.k_theorem1 == THEOREM1_EXAMPLE_K == r.k
        assert r.k_sigma_min is None and r.which_regime is None

    def test_eps_equal_norm(self):
        r = theorem1_bound(summary(1.0, 2.0), 1.0)
        assert r.k_theorem1 == 0 and r.eps_at_least_operator_norm

    def test_eps_above_norm(self):
        r = theorem1_bound(summary(1.0, 2.0, 0.5), 3.0)
        assert r.k == 0 and r.eps_at_least_operator_norm

    @pytest.mark.parametrize("n", [1, 4, 10])
    def test_identity(self, n):
        r = theorem1_bound(svd_small(np.eye(n)), 0.5)
        assert r.k_theorem1 == math.ceil(2 * math.log(2) * n / 0.25)
        # the sigma_min variant divides by sigma_min^2 = 1 instead of eps^2
        assert r.k_sigma_min == math.ceil(2 * math.log(2) * n)
        assert r.k == r.k_sigma_min and r.which_regime == "eps<sigma_min"

    def test_variants_coincide_at_sigma_min(self):
        s = svd_small(np.diag([2.0, 1.0, 1.0]))
        r = theorem1_bound(s, 1.0)
        assert r.k_theorem1 == r.k_sigma_min == math.ceil(2 * math.log(2) * 6)

    def test_sigma_min_regime(self):
        s = svd_small(hilbert(4))
        r = theorem1_bound(s, 0.5 * s.sigma_min)
        assert r.which_regime == "eps<sigma_min"
        assert r.k == r.k_sigma_min < r.k_theorem1

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            theorem1_bound(summary(1.0, 2.0), 0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-4, 2.0), st.floats(1e-4, 2.0))
    def test_monotone_in_eps(self, e1, e2):
        s = svd_small(hilbert(5))
        lo, hi = sorted((e1, e2))
        assert theorem1_bound(s, lo).k_theorem1 >= theorem1_bound(s, hi).k_theorem1

    def test_hilbert_100_against_numpy_norms(self):
        sv = np.linalg.svd(hilbert(100), compute_uv=False)
        fro2 = float(np.sum(hilbert(100) ** 2))
        expected = math.ceil(2 * math.log(sv[0] / 0.5) * fro2 / 0.25)
        assert theorem1_bound(svd_small(hilbert(100)), 0.5).k_theorem1 == expected

    def test_to_dict_is_json(self):
        d = theorem1_bound(svd_small(hilbert(3)), 0.1).to_dict()
        assert set(d) == {"epsilon", "k_theorem1", "k_sigma_min", "k", "norms_used",
                          "which_regime", "eps_at_least_operator_norm"}
        json.dumps(d)


class TestIdentityCheckResult:
    def test_errors(self):
        r = IdentityCheckResult("x", 1.5, 2.0, "exact_enumeration", True)
        assert r.abs_err == 0.5 and r.rel_err == 0.25
        d = r.to_dict()
        assert d["abs_err"] == abs(d["lhs"] - d["rhs"])
        assert d["method"] == {"kind": "exact_enumeration"}

    def test_monte_carlo_method(self):
        r = IdentityCheckResult("x", 1.0, 1.0, "monte_carlo", True, trials=10, std_err=0.1)
        assert r.to_dict()["method"] == {"kind": "monte_carlo", "trials": 10, "std_err": 0.1}


class TestOneStepExpectation:
    def test_identity_example(self):
        s = LinearSystem.from_truth(np.eye(2), np.zeros(2))
        r = lemma1_exact_check(s, [1.0, 1.0])
        assert r.lhs == pytest.approx(1.0, rel=1e-15) and r.rhs == pytest.approx(1.0, rel=1e-15)
        assert r.passed

    @pytest.mark.parametrize("ell", [0, 1])
    def test_singular_vector_direction(self, ell):
        A = np.diag([1.0, 2.0])
        s = LinearSystem.from_truth(A, np.zeros(2))
        sv = svd_small(A)
        v, sigma = sv.right_singular_vectors[:, ell], sv.singular_values[ell]
        r = lemma1_exact_check(s, 3.0 * v)
        assert r.rhs == pytest.approx((1 - sigma ** 2 / 5.0) * 9.0, rel=1e-15)
        assert r.passed and r.rel_err <= 1e-10

    def test_at_truth_rejected(self):
        s = LinearSystem.from_truth(np.eye(2), np.ones(2))
        with pytest.raises(ValueError):
            lemma1_exact_check(s, np.ones(2))

    def test_random_systems(self, random_system, rng):
        for _ in range(100):
            s = random_system(8, 5)
            for _ in range(10):
                assert lemma1_exact_check(s, rng.standard_normal(5)).rel_err <= 1e-10

    def test_needs_truth(self):
        with pytest.raises(ValueError):
            lemma1_exact_check(LinearSystem(np.eye(2), np.ones(2)), np.zeros(2))


class TestSingularDirection:
    def test_diag_example(self):
        s = LinearSystem.from_truth(np.diag([1.0, 2.0]), np.zeros(2))
        r = singular_direction_expectation_check(s, np.array([1.0, 1.0]), 1, 1)
        assert r.method == "exact_enumeration"
        assert r.details["sigma"] == pytest.approx(1.0)
        assert abs(r.lhs) == pytest.approx(0.8, rel=1e-15) and abs(r.rhs) == pytest.approx(0.8, rel=1e-15)
        assert r.passed

    def test_zero_initial_projection(self):
        s = LinearSystem.from_truth(np.diag([1.0, 2.0]), np.zeros(2))
        r = singular_direction_expectation_check(s, np.array([0.0, 1.0]), 1, 1)
        assert r.lhs == 0.0 and r.rhs == 0.0 and r.passed

    def test_random_6x4_every_ell(self, random_system, rng):
        for _ in range(10):
            s = random_system(6, 4)
            x0 = rng.standard_normal(4)
            for ell in range(4):
                r = singular_direction_expectation_check(s, x0, ell, 1)
                assert r.rel_err <= 1e-8

    def test_hilbert_6_monte_carlo(self):
        s = LinearSystem.from_truth(hilbert(6), np.ones(6))
        r = singular_direction_expectation_check(s, np.zeros(6), 1, 50, trials=100_000, seed=3)
        assert r.method == "monte_carlo" and r.trials == 100_000
        assert r.passed and r.abs_err <= 4 * r.std_err

    def test_ell_out_of_range(self):
        s = LinearSystem.from_truth(np.eye(2), np.zeros(2))
        with pytest.raises(IndexError):
            singular_direction_expectation_check(s, np.ones(2), 2, 1)


class TestExpectedErrorRate:
    def test_k_zero(self):
        s = LinearSystem.from_truth(hilbert(3), np.ones(3))
        r = strohmer_vershynin_rate_check(s, np.zeros(3), 0)
        assert r.lhs == r.rhs == 3.0 and r.passed

    def test_identity_equality(self):
        n, k = 5, 8
        s = LinearSystem.from_truth(np.eye(n), np.zeros(n))
        x0 = np.array([1.0, -1.0, 1.0, -1.0, 1.0])
        r = strohmer_vershynin_rate_check(s, x0, k, trials=20_000, seed=1, two_sided=True)
        assert r.rhs == pytest.approx((1 - 1 / n) ** k * n, rel=1e-14)
        assert r.passed

    def test_hilbert_5(self):
        s = LinearSystem.from_truth(hilbert(5), np.ones(5))
        r = strohmer_vershynin_rate_check(s, np.zeros(5), 100, trials=10_000, seed=0)
        assert r.passed and r.lhs <= r.rhs


@pytest.fixture(scope="module")
def ensemble():
    s = LinearSystem.from_truth(hilbert(6), np.ones(6))
    return s, theorem2_ensemble(s, np.zeros(6), 100, 2000, seed=5)


class TestLogDecayDiagnostic:
    def test_sigma_min_rewritten_form(self, ensemble):
        s, hist = ensemble
        smin = svd_small(s.A).sigma_min
        r = theorem2_diagnostic(hist, smin)
        assert r.details["all_probabilities_one"]
        assert r.rhs == pytest.approx(50 * math.log(1 - smin ** 2 / s.frobenius_sq), rel=1e-14)
        assert r.passed

    def test_eps_to_zero(self, ensemble):
        _, hist = ensemble
        r = theorem2_diagnostic(hist, 1e-300)
        assert r.rhs == 0.0 or abs(r.rhs) < 1e-300
        assert r.lhs <= 0 and r.passed

    def test_two_sigma_min(self, ensemble):
        s, hist = ensemble
        r = theorem2_diagnostic(hist, 2 * svd_small(s.A).sigma_min)
        assert r.passed and r.details["excluded_runs"] == 0

    def test_exact_hits_excluded(self):
        s = LinearSystem.from_truth(np.eye(2), np.zeros(2))
        hist = theorem2_ensemble(s, np.ones(2), 3, 400, seed=0)
        r = theorem2_diagnostic(hist, 0.5)
        assert 0 < r.details["excluded_runs"] < 400
        assert r.trials == 400 - r.details["excluded_runs"]

    def test_needs_every_step(self):
        s = LinearSystem.from_truth(hilbert(4), np.ones(4))
        h = run(s, np.zeros(4), MaxSteps(20), seed=0, stride=5)
        with pytest.raises(ValueError):
            theorem2_diagnostic([h, h], 0.1)


class TestProfile:
    def _history(self, residuals):
        n = len(residuals)
        z = np.zeros(n)
        return RunHistory(np.arange(n), np.full(n, -1), np.asarray(residuals, float), z, np.empty(0),
                          None, z, np.zeros(1), "max_steps")

    def test_constant_residual(self):
        r = 0.7
        prof = residual_sqrt_k_profile(self._history([r] * 5))
        assert prof[0] == (0, 0.0)
        for k in range(1, 5):
            assert prof[k] == (k, pytest.approx(math.sqrt(k) * r, rel=1e-15))

    def test_empty(self):
        with pytest.raises(ValueError):
            residual_sqrt_k_profile(self._history([]))


class TestRankBound:
    def test_identity_equality(self):
        r = rank_bound_check(svd_small(np.eye(4)), 1.0)
        assert r.lhs == 4.0 and r.rhs == pytest.approx(4.0, rel=1e-15) and r.passed

    def test_bound_report_cross_check(self):
        s = svd_small(hilbert(8))
        for eps in (1e-3, 0.01, 0.1, 1.0):
            r = rank_bound_check(s, eps)
            assert r.passed
            assert r.rhs == pytest.approx(theorem1_bound(s, eps).norms_used.frobenius_norm ** 2 / eps ** 2)


def test_monte_carlo_width():
    assert analysis.MC_SIGMAS == 4.0
