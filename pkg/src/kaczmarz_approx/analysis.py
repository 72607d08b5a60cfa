"""Iteration bounds and checks of the expectation identities.

Monte Carlo checks pass when the estimate is within ``MC_SIGMAS`` standard
errors of the claim (one-sided for inequalities).
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .engine import LinearSystem, RunHistory, project_onto_row, run_batch
from .matrix import SpectralSummary, numerical_rank, svd_small

MC_SIGMAS = 4.0
LEMMA1_RTOL = 1e-10
ENUMERATION_RTOL = 1e-8


@dataclass(frozen=True)
class BoundReport:
    """Projection counts that suffice for ``||A x_k - b|| <= eps * ||x_0 - x||``.

    ``k_theorem1`` depends only on ``||A||`` and ``||A||_F``; ``k_sigma_min``
    uses the smallest singular value and is ``None`` when that is unknown.
    ``k`` is the smaller of the two.
    """

    epsilon: float
    k_theorem1: int
    k_sigma_min: Optional[int]
    norms_used: SpectralSummary
    which_regime: Optional[str]
    eps_at_least_operator_norm: bool = False

    @property
    def k(self) -> int:
        if self.k_sigma_min is None:
            return self.k_theorem1
        return min(self.k_theorem1, self.k_sigma_min)

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "k_theorem1": self.k_theorem1,
            "k_sigma_min": self.k_sigma_min,
            "k": self.k,
            "norms_used": self.norms_used.to_dict(),
            "which_regime": self.which_regime,
            "eps_at_least_operator_norm": self.eps_at_least_operator_norm,
        }


def _ceil_count(value: float) -> int:
    return int(math.ceil(value)) if value > 0 else 0


def theorem1_bound(summary: SpectralSummary, eps: float) -> BoundReport:
    """``ceil(2 log(||A|| / eps) ||A||_F^2 / eps^2)`` and the sigma_min variant."""
    norm, fro = summary.operator_norm, summary.frobenius_norm
    if eps <= 0:
        raise ValueError("eps must be positive")
    if norm <= 0 or fro <= 0:
        raise ValueError("norms must be positive")
    smin = summary.sigma_min
    regime = None if smin is None else ("eps>=sigma_min" if eps >= smin else "eps<sigma_min")
    if eps >= norm:
        return BoundReport(eps, 0, 0 if smin else None, summary, regime, True)
    log_term = 2.0 * math.log(norm / eps) * fro * fro
    k1 = _ceil_count(log_term / (eps * eps))
    k2 = _ceil_count(log_term / (smin * smin)) if smin else None
    return BoundReport(eps, k1, k2, summary, regime)


@dataclass
class IdentityCheckResult:
    check: str
    lhs: float
    rhs: float
    method: str
    passed: bool
    trials: Optional[int] = None
    std_err: Optional[float] = None
    details: dict = field(default_factory=dict)

    @property
    def abs_err(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def rel_err(self) -> float:
        scale = self.details.get("scale", abs(self.rhs))
        if scale == 0:
            return 0.0 if self.abs_err == 0 else math.inf
        return self.abs_err / scale

    def to_dict(self):
        if self.method == "monte_carlo":
            method = {"kind": "monte_carlo", "trials": self.trials, "std_err": self.std_err}
        else:
            method = {"kind": self.method}
        return {
            "check": self.check,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "abs_err": self.abs_err,
            "rel_err": self.rel_err,
            "method": method,
            "passed": bool(self.passed),
            "details": self.details,
        }


def _needs_truth(system):
    if system.truth is None:
        raise ValueError("check needs a system with known truth")


def _relative_scale(rhs, fallback):
    # tiny right-hand sides (a vanishing projection) are compared on the natural scale
    return abs(rhs) if abs(rhs) > 1e-12 * fallback else fallback


def lemma1_exact_check(system: LinearSystem, xk) -> IdentityCheckResult:
    """One-step expectation of the squared error, enumerated over every row.

    lhs = sum_i p_i ||pi_i x_k - x||^2,
    rhs = (1 - ||A d||^2 / (||A||_F^2 ||d||^2)) ||d||^2 with d = x_k - x.
    """
    _needs_truth(system)
    xk = np.asarray(xk, dtype=np.float64)
    d = xk - system.truth
    dd = float(d @ d)
    if dd == 0.0:
        raise ValueError("x_k equals the solution; the normalized form is undefined")
    fro2 = system.frobenius_sq
    p = system.row_norms_sq / fro2
    after = np.array([project_onto_row(xk, system, i) - system.truth for i in range(system.A.shape[0])])
    lhs = math.fsum(p * np.einsum("ij,ij->i", after, after))
    Ad = system.A @ d
    rhs = (1.0 - float(Ad @ Ad) / (fro2 * dd)) * dd
    res = IdentityCheckResult("lemma1", lhs, rhs, "exact_enumeration", False)
    res.passed = res.rel_err <= LEMMA1_RTOL
    return res


def _direction(summary, ell):
    V = summary.right_singular_vectors
    if not 0 <= ell < V.shape[1]:
        raise IndexError(f"ell={ell} out of range for {V.shape[1]} singular vectors")
    return float(summary.singular_values[ell]), V[:, ell]


def singular_direction_expectation_check(system: LinearSystem, x0, ell: int, k: int,
                                         trials: int = 10_000, seed=0,
                                         summary: Optional[SpectralSummary] = None,
                                         batch=None) -> IdentityCheckResult:
    """E<x_k - x, v_ell> against (1 - sigma_ell^2 / ||A||_F^2)^k <x_0 - x, v_ell>.

    ``k == 1`` is checked by exact enumeration over rows; larger ``k`` by Monte
    Carlo.  ``ell`` indexes the singular values in descending order, from 0.
    A precomputed ``batch`` (from :func:`run_batch`) can be shared between
    several ``ell``.
    """
    _needs_truth(system)
    summary = summary or svd_small(system.A)
    sigma, v = _direction(summary, ell)
    x0 = np.asarray(x0, dtype=np.float64)
    d0 = float((x0 - system.truth) @ v)
    fro2 = system.frobenius_sq
    rhs = (1.0 - sigma * sigma / fro2) ** k * d0
    scale = _relative_scale(rhs, float(np.linalg.norm(x0 - system.truth)))
    name = f"svd_direction[ell={ell},k={k}]"

    if k == 1:
        p = system.row_norms_sq / fro2
        terms = [(project_onto_row(x0, system, i) - system.truth) @ v for i in range(system.A.shape[0])]
        lhs = math.fsum(p * np.asarray(terms))
        res = IdentityCheckResult(name, lhs, rhs, "exact_enumeration", False,
                                  details={"scale": scale, "sigma": sigma})
        res.passed = res.rel_err <= ENUMERATION_RTOL
        return res

    if batch is None:
        batch = run_batch(system, x0, k, trials, seed)
    proj = (batch.x - system.truth) @ v
    n = proj.shape[0]
    lhs = float(np.mean(proj))
    se = float(np.std(proj, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    res = IdentityCheckResult(name, lhs, rhs, "monte_carlo", False, n, se,
                              details={"scale": scale, "sigma": sigma, "seed": seed})
    res.passed = res.abs_err <= MC_SIGMAS * se or res.abs_err <= 1e-14 * scale
    return res


def strohmer_vershynin_rate_check(system: LinearSystem, x0, k: int, trials: int = 10_000,
                                  seed=0, sigma_min: Optional[float] = None,
                                  two_sided: bool = False) -> IdentityCheckResult:
    """Monte Carlo E||x_k - x||^2 against (1 - sigma_min^2 / ||A||_F^2)^k ||x_0 - x||^2.

    Passes if the estimate does not exceed the bound by more than four
    standard errors; with ``two_sided`` the bound must also be within four
    standard errors from below (for systems where it is an equality).
    """
    _needs_truth(system)
    if sigma_min is None:
        sigma_min = svd_small(system.A).sigma_min
    x0 = np.asarray(x0, dtype=np.float64)
    d0 = x0 - system.truth
    rhs = (1.0 - sigma_min ** 2 / system.frobenius_sq) ** k * float(d0 @ d0)
    name = f"sv_rate[k={k}]"
    if k == 0:
        return IdentityCheckResult(name, float(d0 @ d0), rhs, "exact_enumeration", True)
    batch = run_batch(system, x0, k, trials, seed)
    sq = batch.final_errors ** 2
    lhs = float(np.mean(sq))
    se = float(np.std(sq, ddof=1) / math.sqrt(sq.shape[0]))
    res = IdentityCheckResult(name, lhs, rhs, "monte_carlo", False, trials, se,
                              details={"sigma_min": sigma_min, "seed": seed, "two_sided": two_sided})
    # estimate <= bound * (1 + 4 * relative std error)
    res.passed = lhs <= rhs * (1.0 + MC_SIGMAS * se / lhs) if lhs > 0 else True
    if two_sided:
        res.passed = res.abs_err <= MC_SIGMAS * se
    return res


def theorem2_diagnostic(histories, eps: float) -> IdentityCheckResult:
    """Empirical check of the logarithmic decay estimate.

    lhs = mean log(||x_k - x|| / ||x_0 - x||),
    rhs = 1/2 log(1 - eps^2 / ||A||_F^2) * sum_{i<k} P_i, where P_i is the
    fraction of runs with ||A x_i - b|| / ||x_i - x|| >= eps.  Runs that hit
    the solution are excluded and counted.  Every history must be recorded
    at every step up to a common ``k``.
    """
    histories = list(histories)
    if not histories:
        raise ValueError("empty ensemble")
    excluded = [h for h in histories if h.exact_hit or np.any(h.error_norms == 0)]
    kept = [h for h in histories if not (h.exact_hit or np.any(h.error_norms == 0))]
    if not kept:
        raise ValueError("every run reached the solution")
    k = kept[0].final_step
    for h in kept:
        if h.final_step != k or len(h.steps) != k + 1 or np.any(np.diff(h.steps) != 1):
            raise ValueError("theorem2_diagnostic needs runs recorded at every step to a common k")
    fro2 = kept[0].frobenius_sq
    if eps * eps >= fro2:
        raise ValueError("eps must be below ||A||_F")

    err = np.array([h.error_norms for h in kept])
    res = np.array([h.residual_norms for h in kept])
    logs = np.log(err[:, -1] / err[:, 0])
    lhs = float(np.mean(logs))
    se = float(np.std(logs, ddof=1) / math.sqrt(len(kept))) if len(kept) > 1 else math.inf
    p_hat = np.mean(res[:, :k] >= eps * err[:, :k], axis=0)
    rhs = 0.5 * math.log(1.0 - eps * eps / fro2) * math.fsum(p_hat)
    out = IdentityCheckResult("theorem2", lhs, rhs, "monte_carlo", False, len(kept), se,
                              details={"eps": eps, "k": k, "excluded_runs": len(excluded),
                                       "all_probabilities_one": bool(np.all(p_hat == 1.0)),
                                       "min_probability": float(p_hat.min()) if k else 1.0})
    out.passed = lhs <= rhs + MC_SIGMAS * se
    return out


def theorem2_ensemble(system: LinearSystem, x0, k: int, trials: int, seed=0):
    """Every-step histories for :func:`theorem2_diagnostic`."""
    return run_batch(system, x0, k, trials, seed, residuals=True, keep_traces=True).to_histories()


def residual_sqrt_k_profile(history: RunHistory):
    """``(step, sqrt(step) * residual)`` for every recorded step."""
    if len(history) == 0:
        raise ValueError("empty history")
    return [(int(s), math.sqrt(s) * float(r)) for s, r in zip(history.steps, history.residual_norms)]


def rank_bound_check(summary: SpectralSummary, eps: float) -> IdentityCheckResult:
    """``#{sigma_i >= eps} <= ||A||_F^2 / eps^2``."""
    count = numerical_rank(summary, eps)
    bound = summary.frobenius_norm ** 2 / eps ** 2
    # allow rounding in ||A||_F^2 when the bound is attained
    ok = count <= bound * (1.0 + 1e-12)
    return IdentityCheckResult("numerical_rank", float(count), bound, "exact_enumeration", ok,
                               details={"eps": eps, "scale": max(bound, 1.0)})
