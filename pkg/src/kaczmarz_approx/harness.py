"""Config-driven ensembles of Kaczmarz runs and their CSV/JSON outputs.

A config is a JSON object with the fields of :class:`ExperimentConfig`::

    {
      "matrix_source": {"kind": "hilbert", "n": 1000},
      "truth_spec": {"kind": "ones"},
      "x0_spec": {"kind": "zeros"},
      "stop": {"kind": "max_steps", "k": 10000},
      "trials": 1,
      "base_seed": 0,
      "record_stride": 5,
      "output_dir": "hilbert_demo",
      "workers": 1,
      "bound_eps": []
    }

Matrix sources: ``hilbert`` (``n``), ``matrix_market`` (``path``) and
``random_gaussian`` (``m``, ``n``, ``seed``; a fixture generator only).
Vector specs: ``ones``, ``zeros``, ``given`` (``values`` or ``path``),
``random`` (``seed``).  Stopping rules: ``max_steps`` (``k``),
``residual_below`` (``tol``, ``max_steps``), ``target_ratio`` (``eps``,
``max_steps``).  ``b`` is always computed as ``A @ truth``.
"""
import csv
import json
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, _backend, analysis, engine, matrix, mmio

HISTORY_COLUMNS = ["step", "row_index", "residual_norm", "error_norm", "sqrt_k_residual"]
SUMMARY_COLUMNS = [
    "step", "trials",
    "residual_mean", "residual_median", "residual_q10", "residual_q90",
    "error_mean", "error_median", "error_q10", "error_q90",
]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    matrix_source: dict
    truth_spec: dict = field(default_factory=lambda: {"kind": "ones"})
    x0_spec: dict = field(default_factory=lambda: {"kind": "zeros"})
    stop: dict = field(default_factory=lambda: {"kind": "max_steps", "k": 10_000})
    trials: int = 1
    base_seed: int = 0
    record_stride: Optional[int] = None
    output_dir: str = "results"
    workers: int = 1
    bound_eps: list = field(default_factory=list)

    def __post_init__(self):
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if self.record_stride is not None and int(self.record_stride) < 1:
            raise ConfigError("record_stride must be >= 1")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        for key in ("matrix_source", "truth_spec", "x0_spec", "stop"):
            spec = getattr(self, key)
            if not isinstance(spec, dict) or "kind" not in spec:
                raise ConfigError(f"{key} must be an object with a 'kind'")

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def hilbert_demo(cls, output_dir="hilbert_demo", trials=1, base_seed=0, record_stride=5, workers=1):
        """H_1000, truth all ones, start at zero, 10^4 steps."""
        return cls(
            matrix_source={"kind": "hilbert", "n": 1000},
            truth_spec={"kind": "ones"},
            x0_spec={"kind": "zeros"},
            stop={"kind": "max_steps", "k": 10_000},
            trials=trials,
            base_seed=base_seed,
            record_stride=record_stride,
            output_dir=str(output_dir),
            workers=workers,
        )


def load_matrix(spec) -> np.ndarray:
    kind = spec.get("kind")
    if kind == "hilbert":
        return matrix.hilbert(int(spec["n"]))
    if kind == "matrix_market":
        return mmio.read_matrix(spec["path"])
    if kind == "random_gaussian":
        return matrix.random_gaussian(int(spec["m"]), int(spec["n"]), spec.get("seed", 0))
    raise ConfigError(f"unknown matrix source {kind!r}")


def make_vector(spec, n) -> np.ndarray:
    kind = spec.get("kind")
    if kind == "ones":
        v = np.ones(n)
    elif kind == "zeros":
        v = np.zeros(n)
    elif kind == "given":
        v = mmio.read_vector(spec["path"]) if "path" in spec else np.asarray(spec["values"], dtype=float)
    elif kind == "random":
        v = np.random.default_rng(spec.get("seed", 0)).standard_normal(n)
    else:
        raise ConfigError(f"unknown vector spec {kind!r}")
    if v.shape != (n,):
        raise ConfigError(f"vector spec {kind!r} gives length {v.size}, need {n}")
    return v


def make_stop(spec) -> engine.StoppingRule:
    kind = spec.get("kind")
    cap = int(spec.get("max_steps", engine.DEFAULT_STEP_CAP))
    if kind == "max_steps":
        return engine.MaxSteps(int(spec["k"]))
    if kind == "residual_below":
        return engine.ResidualBelow(float(spec["tol"]), cap)
    if kind == "target_ratio":
        return engine.TargetRatio(float(spec["eps"]), cap)
    raise ConfigError(f"unknown stopping rule {kind!r}")


def build_system(cfg: ExperimentConfig):
    A = load_matrix(cfg.matrix_source)
    truth = make_vector(cfg.truth_spec, A.shape[1])
    x0 = make_vector(cfg.x0_spec, A.shape[1])
    return engine.LinearSystem.from_truth(A, truth), x0


# -- summaries ---------------------------------------------------------------------


@dataclass
class EnsembleSummary:
    steps: np.ndarray
    counts: np.ndarray
    residual: dict
    error: dict
    terminal: list
    bounds: list = field(default_factory=list)

    def to_dict(self):
        return {
            "steps": self.steps.tolist(),
            "trials_per_step": self.counts.tolist(),
            "residual": {k: v.tolist() for k, v in self.residual.items()},
            "error": {k: v.tolist() for k, v in self.error.items()},
            "terminal": self.terminal,
            "bounds": self.bounds,
        }


def _stats(values_by_step, steps):
    keys = ("mean", "median", "q10", "q90", "min", "max")
    out = {k: np.empty(len(steps)) for k in keys}
    for j, s in enumerate(steps):
        v = np.asarray(values_by_step[s])
        out["mean"][j] = math.fsum(v) / len(v)
        out["median"][j] = np.median(v)
        q10, q90 = np.quantile(v, [0.1, 0.9])
        out["q10"][j], out["q90"][j] = q10, q90
        out["min"][j], out["max"][j] = v.min(), v.max()
    return out


def summarize(histories, system, x0) -> EnsembleSummary:
    res_by, err_by = {}, {}
    for h in histories:
        for s, r, e in zip(h.steps.tolist(), h.residual_norms, h.error_norms):
            res_by.setdefault(s, []).append(r)
            err_by.setdefault(s, []).append(e)
    steps = np.array(sorted(res_by), dtype=np.int64)
    counts = np.array([len(res_by[s]) for s in steps], dtype=np.int64)
    terminal = []
    for t, h in enumerate(histories):
        r = system.A @ h.x - system.b
        terminal.append({
            "trial": t,
            "status": h.status,
            "steps": h.final_step,
            "residual_norm": float(h.residual_norms[-1]),
            "residual_inf_norm": float(np.max(np.abs(r))),
            "residual_inf_argmax": int(np.argmax(np.abs(r))),
            "error_norm": float(h.error_norms[-1]),
            "ratio_to_initial_error": float(h.residual_norms[-1] / h.error_norms[0]),
        })
    return EnsembleSummary(steps, counts, _stats(res_by, steps), _stats(err_by, steps), terminal)


def validate(histories, seeds):
    """Re-check monotonicity and stability trial by trial; raise on the first violation."""
    for t, h in enumerate(histories):
        mono, stab = h.monotonicity_violations(), h.stability_violations()
        if mono or stab:
            raise engine.InvariantViolation(
                f"trial {t} (seed {seeds[t]}): {mono} monotonicity and {stab} stability violations")


# -- files -----------------------------------------------------------------------------


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def emit_csv(obj, path) -> Path:
    """Write a :class:`RunHistory` or :class:`EnsembleSummary` as CSV (17 significant digits)."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if isinstance(obj, EnsembleSummary):
                w.writerow(SUMMARY_COLUMNS)
                for j, s in enumerate(obj.steps):
                    w.writerow([_fmt(int(s)), _fmt(int(obj.counts[j]))]
                               + [_fmt(float(obj.residual[k][j])) for k in ("mean", "median", "q10", "q90")]
                               + [_fmt(float(obj.error[k][j])) for k in ("mean", "median", "q10", "q90")])
            else:
                w.writerow(HISTORY_COLUMNS)
                for s, row, r, e in obj.records():
                    w.writerow([_fmt(s), "" if row < 0 else _fmt(row), _fmt(r), _fmt(e),
                                _fmt(math.sqrt(s) * r)])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_history_csv(path) -> dict:
    """Parse a file written by :func:`emit_csv` for a history; blanks become NaN / -1."""
    cols = {c: [] for c in HISTORY_COLUMNS}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != HISTORY_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            cols["step"].append(int(rec["step"]))
            cols["row_index"].append(int(rec["row_index"]) if rec["row_index"] else -1)
            for c in HISTORY_COLUMNS[2:]:
                cols[c].append(float(rec[c]) if rec[c] else math.nan)
    return {
        "step": np.array(cols["step"], dtype=np.int64),
        "row_index": np.array(cols["row_index"], dtype=np.int64),
        **{c: np.array(cols[c], dtype=np.float64) for c in HISTORY_COLUMNS[2:]},
    }


def coordinates_snapshot(state, path) -> Path:
    """CSV of ``(index, value)`` for a final iterate (an array, IterateState or RunHistory)."""
    x = state.x if hasattr(state, "x") else state
    x = np.asarray(x, dtype=np.float64)
    if hasattr(state, "x_lo") and state.x_lo is not None:
        x = x + state.x_lo
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "value"])
            for i, v in enumerate(x.tolist()):
                w.writerow([i, _fmt(v)])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def bound_reports(system, x0, histories, extra_eps=()):
    summary = matrix.spectral_summary(system.A)
    err0 = float(np.linalg.norm(x0 - system.truth))
    reports = []
    if err0 > 0:
        achieved = float(np.median([h.residual_norms[-1] for h in histories])) / err0
        if achieved > 0:
            d = analysis.theorem1_bound(summary, achieved).to_dict()
            d["label"] = "achieved_median_ratio"
            d["steps_used"] = int(max(h.final_step for h in histories))
            reports.append(d)
    for eps in extra_eps:
        d = analysis.theorem1_bound(summary, float(eps)).to_dict()
        d["label"] = "configured"
        reports.append(d)
    return reports


def run_trials(system, x0, stop, seeds, stride, workers=1, backend=None):
    """Run one trial per seed; results come back in seed order whatever the worker count."""

    def one(seed):
        return engine.run(system, x0, stop, seed=seed, stride=stride, backend=backend)

    if workers <= 1 or len(seeds) == 1:
        return [one(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, seeds))


def run_experiment(cfg: ExperimentConfig, workers=None, write=True, backend=None) -> EnsembleSummary:
    """Execute every trial of ``cfg``, validate, aggregate and (optionally) write the outputs.

    Files in ``cfg.output_dir``: ``trial_<t>.csv``, ``final_iterate.csv``
    (trial 0), ``summary.json``, ``bounds.json`` and ``metadata.json``; only
    the last one carries timestamps.
    """
    started = time.time()
    system, x0 = build_system(cfg)
    stop = make_stop(cfg.stop)
    stride = cfg.record_stride or engine.default_stride(stop.max_steps)
    workers = int(workers or cfg.workers)
    seeds = [engine.trial_seed(cfg.base_seed, t) for t in range(cfg.trials)]
    histories = run_trials(system, x0, stop, seeds, stride, workers, backend)
    validate(histories, [f"{cfg.base_seed}/{t}" for t in range(cfg.trials)])

    summary = summarize(histories, system, x0)
    summary.bounds = bound_reports(system, x0, histories, cfg.bound_eps)
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        for t, h in enumerate(histories):
            emit_csv(h, out / f"trial_{t}.csv")
        coordinates_snapshot(histories[0].x, out / "final_iterate.csv")
        _dump_json(summary.to_dict(), out / "summary.json")
        _dump_json(summary.bounds, out / "bounds.json")
        _dump_json({
            "config": cfg.to_dict(),
            "seeds": [f"SeedSequence({cfg.base_seed}, spawn_key=({t},))" for t in range(cfg.trials)],
            "backend": _backend.get(backend).name,
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
            "elapsed_seconds": time.time() - started,
            "pid": os.getpid(),
        }, out / "metadata.json")
    return summary
