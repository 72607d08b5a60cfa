"""Randomized Kaczmarz iteration.

Rows are drawn with probability ``||a_i||^2 / ||A||_F^2`` and the iterate is
orthogonally projected onto the hyperplane ``<a_i, x> = b_i``.

Random streams
--------------
A single run with integer ``seed`` uses ``numpy.random.default_rng(seed)``
and consumes one uniform double per step.  Trial ``t`` of an ensemble seeded
with ``base`` uses :func:`trial_seed` ``(base, t)``, a ``SeedSequence`` with
spawn key ``(t,)``.  Batched Monte Carlo (:func:`run_batch`) draws one
``(trials, k)`` block of uniforms, row by row, from ``default_rng(seed)``.

Arithmetic
----------
The kernels keep the iterate as an unevaluated sum ``x + x_lo`` and form
``b_i - <a_i, x>`` with error-free transformations, so rounding does not
accumulate in the iterate.  When the ground truth is known, a run stops as
an exact hit once the error falls to the system's ``exact_tol``: below that
level the rounding already present in ``b`` can make a projection move away
from the truth, so the Pythagorean decrease is no longer observable.
"""
import math
import threading
from dataclasses import dataclass, field
from typing import ClassVar, Optional, Union

import numpy as np

from . import _backend
from .matrix import as_matrix

MONOTONE_SLACK = 1e-12
STABILITY_SLACK = 1e-9
EXACT_RESIDUAL = 1e-13
DEFAULT_STEP_CAP = 1_000_000
BATCH_CHUNK_ELEMS = 2_000_000


class ZeroRowError(ValueError):
    pass


class InconsistentSystemError(ValueError):
    pass


class InvariantViolation(AssertionError):
    pass


def _vector(v, length, what):
    v = np.array(v, dtype=np.float64, copy=True).ravel()
    if v.shape[0] != length:
        raise ValueError(f"{what} has length {v.shape[0]}, expected {length}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{what} has non-finite entries")
    v.flags.writeable = False
    return v


@dataclass(frozen=True)
class LinearSystem:
    """``A x = b`` with optional known solution ``truth``.

    Prefer :meth:`from_truth`, which builds ``b = A @ truth``.
    """

    A: np.ndarray
    b: np.ndarray
    truth: Optional[np.ndarray] = None
    row_norms_sq: np.ndarray = field(init=False, repr=False)
    exact_tol: float = field(init=False, repr=False)

    def __post_init__(self):
        A = as_matrix(self.A)
        m, n = A.shape
        b = _vector(self.b, m, "b")
        rn = np.einsum("ij,ij->i", A, A)
        zero = np.flatnonzero(rn == 0.0)
        if zero.size:
            raise ZeroRowError(f"row {int(zero[0])} of A is zero; the projection is undefined")
        rn.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "row_norms_sq", rn)

        tol = 0.0
        if self.truth is not None:
            x = _vector(self.truth, n, "truth")
            object.__setattr__(self, "truth", x)
            defect = self.kernels().row_defects(A, b, np.ascontiguousarray(x))
            if np.linalg.norm(defect) > 1e-10 * (1.0 + np.linalg.norm(b)):
                raise InconsistentSystemError("b is not A @ truth")
            # smallest error at which a projection can still increase it by more than
            # MONOTONE_SLACK relative, given the defect of truth on each hyperplane
            worst = float(np.max(np.abs(defect) / np.sqrt(rn)))
            tol = 2.0 * worst / math.sqrt(2.0 * MONOTONE_SLACK)
        object.__setattr__(self, "exact_tol", tol)

    @classmethod
    def from_truth(cls, A, truth):
        A = as_matrix(A)
        x = np.asarray(truth, dtype=np.float64)
        return cls(A, A @ x, x)

    @property
    def shape(self):
        return self.A.shape

    @property
    def frobenius_sq(self) -> float:
        return float(np.sum(self.row_norms_sq))

    def residual_norm(self, x) -> float:
        return float(np.linalg.norm(self.A @ x - self.b))

    def error_norm(self, x) -> float:
        if self.truth is None:
            return math.nan
        return float(np.linalg.norm(x - self.truth))

    @staticmethod
    def kernels(backend=None):
        return _backend.get(backend)


@dataclass(frozen=True)
class SamplingDistribution:
    """Cumulative row weights; row ``i`` has probability ``||a_i||^2 / ||A||_F^2``."""

    cumulative: np.ndarray

    @property
    def total(self) -> float:
        return float(self.cumulative[-1])

    @property
    def probabilities(self) -> np.ndarray:
        return np.diff(self.cumulative, prepend=0.0) / self.total

    def index(self, u):
        """Row for uniform draw(s) ``u`` in [0, 1)."""
        c = self.cumulative
        return np.minimum(np.searchsorted(c, np.asarray(u) * c[-1], side="right"), c.shape[0] - 1)


def build_distribution(system: LinearSystem) -> SamplingDistribution:
    rn = np.asarray(system.row_norms_sq, dtype=np.float64)
    if not np.any(rn):
        raise ValueError("all-zero matrix has no sampling distribution")
    cum = np.cumsum(rn)
    cum.flags.writeable = False
    return SamplingDistribution(cum)


@dataclass
class IterateState:
    """Current iterate of one run.  ``x_lo`` is the rounding tail of ``x``."""

    x: np.ndarray
    step: int
    rng: np.random.Generator
    last_row: Optional[int] = None
    x_lo: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = np.array(self.x, dtype=np.float64, copy=True)
        if self.x_lo is None:
            self.x_lo = np.zeros_like(self.x)

    @classmethod
    def start(cls, x0, seed=0):
        return cls(np.asarray(x0, dtype=np.float64), 0, np.random.default_rng(seed))


def project_onto_row(w, system: LinearSystem, i: int) -> np.ndarray:
    """``w + (b_i - <a_i, w>) / ||a_i||^2 * a_i``."""
    m = system.A.shape[0]
    if not 0 <= i < m:
        raise IndexError(f"row {i} out of range for {m} rows")
    rn = system.row_norms_sq[i]
    if rn == 0.0:
        raise ZeroRowError(f"row {i} is zero")
    a = system.A[i]
    w = np.asarray(w, dtype=np.float64)
    return w + ((system.b[i] - a @ w) / rn) * a


def sample_row(dist: SamplingDistribution, state: IterateState) -> int:
    return int(dist.index(state.rng.random()))


def kaczmarz_step(state: IterateState, system: LinearSystem, dist: SamplingDistribution,
                  backend=None) -> IterateState:
    """One sampled projection.  Returns a new state; the generator is shared and advanced."""
    k = _backend.get(backend)
    hi = np.array(state.x, dtype=np.float64)
    lo = np.array(state.x_lo, dtype=np.float64)
    u = state.rng.random(1)
    rows = np.empty(1, dtype=np.int64)
    err = np.empty(1)
    xn = np.empty(1)
    truth = system.truth if system.truth is not None else np.empty(0)
    k.advance(system.A, system.b, system.row_norms_sq, dist.cumulative, hi, lo, u,
              truth, -1.0, rows, err, xn)
    return IterateState(hi, state.step + 1, state.rng, int(rows[0]), lo)


# -- stopping rules ---------------------------------------------------------


@dataclass(frozen=True)
class MaxSteps:
    k: int
    name: ClassVar[str] = "max_steps"

    @property
    def max_steps(self):
        return self.k

    def reached(self, residual, ratio_base):
        return False


@dataclass(frozen=True)
class ResidualBelow:
    tol: float
    max_steps: int = DEFAULT_STEP_CAP
    name: ClassVar[str] = "residual_below"

    def reached(self, residual, ratio_base):
        return residual <= self.tol


@dataclass(frozen=True)
class TargetRatio:
    """Stop once ``||A x_k - b|| <= eps * ||x_0 - x||`` (needs the truth)."""

    eps: float
    max_steps: int = DEFAULT_STEP_CAP
    name: ClassVar[str] = "target_ratio"

    def reached(self, residual, ratio_base):
        return residual <= self.eps * ratio_base


StoppingRule = Union[MaxSteps, ResidualBelow, TargetRatio]


def default_stride(max_steps: int) -> int:
    return max(1, max_steps // 2000)


# -- invariant bookkeeping ----------------------------------------------------


class InvariantAudit:
    """Process-wide tally of invariant checks over every step of every run."""

    def __init__(self):
        self._lock = threading.Lock()
        self.reset()

    def reset(self):
        self.runs = 0
        self.steps = 0
        self.monotonicity_violations = 0
        self.stability_violations = 0

    def add(self, runs, steps, mono, stab):
        with self._lock:
            self.runs += runs
            self.steps += steps
            self.monotonicity_violations += mono
            self.stability_violations += stab

    @property
    def violations(self):
        return self.monotonicity_violations + self.stability_violations

    def as_dict(self):
        return {
            "runs": self.runs,
            "steps": self.steps,
            "monotonicity_violations": self.monotonicity_violations,
            "stability_violations": self.stability_violations,
        }


AUDIT = InvariantAudit()


def monotonicity_violations(errors) -> int:
    e = np.asarray(errors)
    if e.ndim == 1:
        e = e[None, :]
    return int(np.count_nonzero(e[:, 1:] > e[:, :-1] * (1.0 + MONOTONE_SLACK)))


def stability_violations(x_norms, truth_norm, x0_norm) -> int:
    bound = 2.0 * truth_norm + np.asarray(x0_norm) + STABILITY_SLACK
    xn = np.asarray(x_norms)
    if xn.ndim == 2:
        bound = np.broadcast_to(np.asarray(bound).reshape(-1, 1), xn.shape)
    return int(np.count_nonzero(xn > bound))


# -- single runs --------------------------------------------------------------


@dataclass
class RunHistory:
    """Trace of one run.

    ``steps``/``rows``/``residual_norms``/``error_norms`` are the recorded
    points (every ``stride`` steps, plus start and end); ``rows[j]`` is the
    row used to reach ``steps[j]`` (-1 at the start).  ``row_sequence``,
    ``step_errors`` and ``step_x_norms`` cover every step.
    """

    steps: np.ndarray
    rows: np.ndarray
    residual_norms: np.ndarray
    error_norms: np.ndarray
    row_sequence: np.ndarray
    step_errors: Optional[np.ndarray]
    step_x_norms: np.ndarray
    x: np.ndarray
    status: str
    seed: object = None
    stride: int = 1
    frobenius_sq: float = math.nan
    truth_norm: Optional[float] = None
    x0_norm: float = 0.0

    def __len__(self):
        return len(self.steps)

    def records(self):
        for j in range(len(self.steps)):
            yield (int(self.steps[j]), int(self.rows[j]), float(self.residual_norms[j]),
                   float(self.error_norms[j]))

    @property
    def final_step(self) -> int:
        return int(self.steps[-1]) if len(self.steps) else 0

    @property
    def exact_hit(self) -> bool:
        return self.status == "exact"

    def monotonicity_violations(self) -> int:
        if self.step_errors is None:
            return 0
        return monotonicity_violations(self.step_errors)

    def stability_violations(self) -> int:
        if self.truth_norm is None:
            return 0
        return stability_violations(self.step_x_norms, self.truth_norm, self.x0_norm)


def _make_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def trial_seed(base_seed, trial):
    """Seed for trial ``trial`` of an ensemble seeded with ``base_seed``."""
    return np.random.SeedSequence(base_seed, spawn_key=(trial,))


def run(system: LinearSystem, x0, stop: StoppingRule, seed=0, stride=None,
        backend=None) -> RunHistory:
    """Iterate from ``x0`` until ``stop`` holds, the step cap is hit or the truth is reached.

    Residuals are recorded, and residual-based stopping rules checked, every
    ``stride`` steps (default ``max(1, max_steps // 2000)``) and at the end.
    ``status`` is one of ``max_steps``, ``residual_below``, ``target_ratio``,
    ``exact`` or ``step_cap``.
    """
    kern = _backend.get(backend)
    A, b = system.A, system.b
    m, n = A.shape
    has_truth = system.truth is not None
    if isinstance(stop, TargetRatio) and not has_truth:
        raise ValueError("target_ratio stopping needs a known truth")
    k_max = int(stop.max_steps)
    if k_max < 0:
        raise ValueError("max_steps must be >= 0")
    stride = default_stride(k_max) if stride is None else int(stride)
    if stride < 1:
        raise ValueError("stride must be >= 1")

    rng = _make_rng(seed)
    dist = build_distribution(system)
    truth = system.truth if has_truth else np.empty(0)
    hi = _vector(x0, n, "x0").copy()
    lo = np.zeros(n)
    floor = system.exact_tol if has_truth else -1.0
    exact_res = EXACT_RESIDUAL * (1.0 + float(np.linalg.norm(b)))

    err0 = system.error_norm(hi)
    x0_norm = float(np.linalg.norm(hi))
    res0 = system.residual_norm(hi)
    rec_steps, rec_rows, rec_res, rec_err = [0], [-1], [res0], [err0]
    row_chunks, err_chunks, xn_chunks = [], [], []

    status = None
    if (has_truth and err0 <= floor) or res0 <= exact_res:
        status = "exact"
    elif stop.reached(res0, err0):
        status = stop.name
    step = 0
    buf_rows = np.empty(stride, dtype=np.int64)
    buf_err = np.empty(stride)
    buf_xn = np.empty(stride)
    while status is None and step < k_max:
        todo = min(stride - step % stride, k_max - step)
        u = rng.random(todo)
        done = kern.advance(A, b, system.row_norms_sq, dist.cumulative, hi, lo, u, truth,
                            floor, buf_rows[:todo], buf_err[:todo], buf_xn[:todo])
        row_chunks.append(buf_rows[:done].copy())
        xn_chunks.append(buf_xn[:done].copy())
        if has_truth:
            err_chunks.append(buf_err[:done].copy())
        step += done
        x = hi + lo
        res = system.residual_norm(x)
        rec_steps.append(step)
        rec_rows.append(int(buf_rows[done - 1]))
        rec_res.append(res)
        rec_err.append(float(buf_err[done - 1]) if has_truth else math.nan)
        if done < todo or res <= exact_res:
            status = "exact"
        elif stop.reached(res, err0):
            status = stop.name

    if status is None:
        status = "max_steps" if isinstance(stop, MaxSteps) else "step_cap"

    row_seq = np.concatenate(row_chunks) if row_chunks else np.empty(0, dtype=np.int64)
    xns = np.concatenate([[x0_norm]] + xn_chunks)
    errs = np.concatenate([[err0]] + err_chunks) if has_truth else None
    hist = RunHistory(
        steps=np.asarray(rec_steps, dtype=np.int64),
        rows=np.asarray(rec_rows, dtype=np.int64),
        residual_norms=np.asarray(rec_res),
        error_norms=np.asarray(rec_err),
        row_sequence=row_seq,
        step_errors=errs,
        step_x_norms=xns,
        x=hi + lo,
        status=status,
        seed=seed,
        stride=stride,
        frobenius_sq=system.frobenius_sq,
        truth_norm=float(np.linalg.norm(system.truth)) if has_truth else None,
        x0_norm=x0_norm,
    )
    if has_truth:
        AUDIT.add(1, len(row_seq), hist.monotonicity_violations(), hist.stability_violations())
    return hist


# -- batched Monte Carlo ----------------------------------------------------------


@dataclass
class BatchResult:
    """Final iterates of independent fixed-length runs.

    ``errors``/``x_norms``/``residuals`` are ``(trials, k + 1)`` traces and
    only kept when requested.  ``hit_step`` is -1 for runs that never reached
    the truth, otherwise the step at which they stopped.
    """

    x: np.ndarray
    final_errors: np.ndarray
    hit_step: np.ndarray
    k: int
    errors: Optional[np.ndarray] = None
    x_norms: Optional[np.ndarray] = None
    residuals: Optional[np.ndarray] = None
    frobenius_sq: float = math.nan

    def to_histories(self):
        """One :class:`RunHistory` per trial, recorded at every step (needs kept traces)."""
        if self.errors is None or self.residuals is None:
            raise ValueError("run_batch(..., keep_traces=True, residuals=True) required")
        steps = np.arange(self.k + 1)
        out = []
        for t in range(self.x.shape[0]):
            hit = int(self.hit_step[t])
            last = self.k if hit < 0 else hit
            out.append(RunHistory(
                steps=steps[: last + 1],
                rows=np.full(last + 1, -1),
                residual_norms=self.residuals[t, : last + 1],
                error_norms=self.errors[t, : last + 1],
                row_sequence=np.empty(0, dtype=np.int64),
                step_errors=self.errors[t, : last + 1],
                step_x_norms=self.x_norms[t, : last + 1],
                x=self.x[t],
                status="exact" if hit >= 0 else "max_steps",
                frobenius_sq=self.frobenius_sq,
            ))
        return out


def run_batch(system: LinearSystem, x0, k: int, trials: int, seed=0, *, residuals=False,
              keep_traces=False, backend=None) -> BatchResult:
    """``trials`` independent runs of exactly ``k`` steps from the same ``x0``.

    Needs the truth (used for the error traces and the invariant audit).
    """
    if system.truth is None:
        raise ValueError("run_batch needs a known truth")
    if trials < 1 or k < 0:
        raise ValueError("need trials >= 1 and k >= 0")
    kern = _backend.get(backend)
    A, b = system.A, system.b
    m, n = A.shape
    x0 = _vector(x0, n, "x0")
    dist = build_distribution(system)
    rng = _make_rng(seed)
    chunk = max(1, min(trials, BATCH_CHUNK_ELEMS // max(1, (k + 1) * max(n, 8))))
    truth_norm = float(np.linalg.norm(system.truth))
    x0_norm = float(np.linalg.norm(x0))

    X = np.empty((trials, n))
    final = np.empty(trials)
    hits = np.empty(trials, dtype=np.int64)
    keep = {"errors": [], "x_norms": [], "residuals": []}
    for start in range(0, trials, chunk):
        c = min(chunk, trials - start)
        U = rng.random((c, k))
        Hi = np.repeat(x0[None, :], c, axis=0)
        Lo = np.zeros((c, n))
        err = np.empty((c, k + 1))
        xn = np.empty((c, k + 1))
        res = np.empty((c, k + 1)) if residuals else np.empty((0, 0))
        hit = np.empty(c, dtype=np.int64)
        kern.advance_batch(A, b, system.row_norms_sq, dist.cumulative, Hi, Lo, U,
                           system.truth, system.exact_tol, err, xn, res, hit)
        AUDIT.add(c, c * k, monotonicity_violations(err),
                  stability_violations(xn, truth_norm, np.full(c, x0_norm)))
        X[start:start + c] = Hi + Lo
        final[start:start + c] = err[:, -1]
        hits[start:start + c] = hit
        if keep_traces:
            keep["errors"].append(err)
            keep["x_norms"].append(xn)
            if residuals:
                keep["residuals"].append(res)

    def cat(key):
        return np.concatenate(keep[key]) if keep[key] else None

    return BatchResult(X, final, hits, k, cat("errors"), cat("x_norms"), cat("residuals"),
                       system.frobenius_sq)
