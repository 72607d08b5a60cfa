"""Built-in fixture suites behind ``kaczmarz verify``.

Each suite returns a list of :class:`~.analysis.IdentityCheckResult`.  When a
matrix is supplied it replaces the built-in fixtures (truth all ones, start
at zero).
"""
import math

import numpy as np

from . import analysis
from .engine import LinearSystem, run_batch
from .matrix import hilbert, svd_small

SUITES = ("lemma1", "svd-direction", "sv-rate", "theorem2")


def _random_system(rng, m, n):
    return LinearSystem.from_truth(rng.standard_normal((m, n)), rng.standard_normal(n))


def _worst(results, name):
    """Collapse many exact checks into the one with the largest relative error."""
    worst = max(results, key=lambda r: r.rel_err)
    worst.check = f"{name} (worst of {len(results)})"
    worst.passed = all(r.passed for r in results)
    worst.details = dict(worst.details, cases=len(results))
    return worst


def lemma1_suite(seed=0, matrix=None):
    rng = np.random.default_rng(seed)
    out = []
    if matrix is not None:
        system = LinearSystem.from_truth(matrix, np.ones(matrix.shape[1]))
        cases = [analysis.lemma1_exact_check(system, system.truth + rng.standard_normal(matrix.shape[1]))
                 for _ in range(10)]
        return [_worst(cases, "lemma1[given matrix]")]
    cases = []
    for _ in range(100):
        system = _random_system(rng, 8, 5)
        for _ in range(10):
            cases.append(analysis.lemma1_exact_check(system, rng.standard_normal(5)))
    out.append(_worst(cases, "lemma1[random 8x5]"))
    H = LinearSystem.from_truth(hilbert(6), np.ones(6))
    out.append(_worst([analysis.lemma1_exact_check(H, rng.standard_normal(6)) for _ in range(10)],
                      "lemma1[hilbert(6)]"))
    return out


def svd_direction_suite(seed=0, trials=10_000, matrix=None, ks=(10, 50)):
    rng = np.random.default_rng(seed)
    out = []
    if matrix is None:
        cases = []
        for _ in range(20):
            system = _random_system(rng, 6, 4)
            summary = svd_small(system.A)
            x0 = rng.standard_normal(4)
            for ell in range(4):
                cases.append(analysis.singular_direction_expectation_check(
                    system, x0, ell, 1, summary=summary))
        out.append(_worst(cases, "svd_direction[random 6x4, k=1]"))
        A = hilbert(6)
    else:
        A = matrix
    system = LinearSystem.from_truth(A, np.ones(A.shape[1]))
    summary = svd_small(system.A)
    x0 = np.zeros(A.shape[1])
    for k in ks:
        batch = run_batch(system, x0, k, trials, seed=(seed, k))
        for ell in range(A.shape[1]):
            out.append(analysis.singular_direction_expectation_check(
                system, x0, ell, k, trials, seed, summary=summary, batch=batch))
    return out


def sv_rate_suite(seed=0, trials=10_000, matrix=None):
    rng = np.random.default_rng(seed)
    out = []
    if matrix is None:
        systems = [("hilbert(5)", LinearSystem.from_truth(hilbert(5), np.ones(5)))]
        A = rng.standard_normal((10, 5))
        systems.append(("random 10x5", LinearSystem.from_truth(A, rng.standard_normal(5))))
    else:
        systems = [("given", LinearSystem.from_truth(matrix, np.ones(matrix.shape[1])))]
    for label, system in systems:
        smin = svd_small(system.A).sigma_min
        x0 = np.zeros(system.A.shape[1])
        for k in (10, 100):
            r = analysis.strohmer_vershynin_rate_check(system, x0, k, trials, (seed, k), sigma_min=smin)
            r.check = f"sv_rate[{label},k={k}]"
            out.append(r)
    if matrix is None:
        # identity: every step contracts by exactly (1 - 1/n), so the bound is an equality
        n = 4
        system = LinearSystem.from_truth(np.eye(n), np.zeros(n))
        r = analysis.strohmer_vershynin_rate_check(system, np.ones(n), 5, trials, seed, sigma_min=1.0,
                                                   two_sided=True)
        r.check = "sv_rate[identity(4),k=5,two-sided]"
        out.append(r)
    return out


def theorem2_suite(seed=0, trials=10_000, matrix=None, k=200):
    A = hilbert(6) if matrix is None else matrix
    system = LinearSystem.from_truth(A, np.ones(A.shape[1]))
    smin = svd_small(system.A).sigma_min
    hist = analysis.theorem2_ensemble(system, np.zeros(A.shape[1]), k, trials, seed)
    out = []
    r = analysis.theorem2_diagnostic(hist, 2.0 * smin)
    r.check = "theorem2[eps=2*sigma_min]"
    out.append(r)
    r = analysis.theorem2_diagnostic(hist, smin)
    rewritten = k / 2.0 * math.log(1.0 - smin ** 2 / system.frobenius_sq)
    r.check = "theorem2[eps=sigma_min]"
    r.details["rewritten_rhs"] = rewritten
    r.passed = r.passed and r.details["all_probabilities_one"] and math.isclose(r.rhs, rewritten, rel_tol=1e-14)
    out.append(r)
    return out


def run_suite(name, seed=0, trials=10_000, matrix=None):
    if name == "lemma1":
        return lemma1_suite(seed, matrix)
    if name == "svd-direction":
        return svd_direction_suite(seed, trials, matrix)
    if name == "sv-rate":
        return sv_rate_suite(seed, trials, matrix)
    if name == "theorem2":
        return theorem2_suite(seed, trials, matrix)
    if name == "all":
        return [r for s in SUITES for r in run_suite(s, seed, trials, matrix)]
    raise ValueError(f"unknown suite {name!r}")
