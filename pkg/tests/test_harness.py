import json
import math

import numpy as np
import pytest

from kaczmarz_approx import engine, harness, mmio
from kaczmarz_approx.engine import InvariantViolation, LinearSystem, MaxSteps, run
from kaczmarz_approx.harness import (
    ConfigError,
    EnsembleSummary,
    ExperimentConfig,
    coordinates_snapshot,
    emit_csv,
    read_history_csv,
    run_experiment,
)
from kaczmarz_approx.matrix import hilbert

# tools/derive_oracles.py
H1000_ONES_RESIDUAL = 50.964253864293879204


def small_config(tmp_path, **kw):
    base = dict(
        matrix_source={"kind": "hilbert", "n": 12},
        stop={"kind": "max_steps", "k": 400},
        trials=3,
        base_seed=7,
        record_stride=10,
        output_dir=str(tmp_path / "out"),
    )
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def hilbert_demo(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo")
    cfg = ExperimentConfig.hilbert_demo(output_dir=out, trials=1, base_seed=0)
    return cfg, run_experiment(cfg)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig(matrix_source={"kind": "hilbert", "n": 3})
        assert cfg.truth_spec == {"kind": "ones"} and cfg.x0_spec == {"kind": "zeros"}

    def test_json_round_trip(self, tmp_path):
        cfg = small_config(tmp_path, bound_eps=[0.1])
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(cfg.to_dict()))
        assert ExperimentConfig.from_json(p) == cfg

    @pytest.mark.parametrize("bad", [
        {"matrix_source": {"kind": "hilbert", "n": 3}, "trials": 0},
        {"matrix_source": {"kind": "hilbert", "n": 3}, "record_stride": 0},
        {"matrix_source": {"kind": "hilbert", "n": 3}, "surprise": 1},
        {"matrix_source": "hilbert"},
        {},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(bad)

    def test_bad_json(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(p)

    def test_hilbert_demo(self):
        cfg = ExperimentConfig.hilbert_demo()
        assert cfg.matrix_source == {"kind": "hilbert", "n": 1000}
        assert cfg.stop == {"kind": "max_steps", "k": 10_000} and cfg.record_stride == 5


class TestBuilders:
    def test_matrix_sources(self, tmp_path):
        mmio.write_matrix(tmp_path / "a.mtx", hilbert(4))
        np.testing.assert_array_equal(harness.load_matrix({"kind": "matrix_market", "path": str(tmp_path / "a.mtx")}),
                                      hilbert(4))
        g = harness.load_matrix({"kind": "random_gaussian", "m": 5, "n": 3, "seed": 2})
        np.testing.assert_array_equal(g, np.random.default_rng(2).standard_normal((5, 3)))
        with pytest.raises(ConfigError):
            harness.load_matrix({"kind": "magic"})

    def test_vectors(self):
        np.testing.assert_array_equal(harness.make_vector({"kind": "given", "values": [1, 2]}, 2), [1.0, 2.0])
        np.testing.assert_array_equal(harness.make_vector({"kind": "random", "seed": 1}, 3),
                                      np.random.default_rng(1).standard_normal(3))
        with pytest.raises(ConfigError):
            harness.make_vector({"kind": "given", "values": [1, 2]}, 3)
        with pytest.raises(ConfigError):
            harness.make_vector({"kind": "nope"}, 3)

    def test_stops(self):
        assert harness.make_stop({"kind": "max_steps", "k": 5}) == MaxSteps(5)
        assert harness.make_stop({"kind": "target_ratio", "eps": 0.1, "max_steps": 9}) == engine.TargetRatio(0.1, 9)
        assert harness.make_stop({"kind": "residual_below", "tol": 0.5}).tol == 0.5
        with pytest.raises(ConfigError):
            harness.make_stop({"kind": "forever"})

    def test_truth_first(self, tmp_path):
        system, x0 = harness.build_system(small_config(tmp_path, truth_spec={"kind": "random", "seed": 4}))
        np.testing.assert_array_equal(system.b, system.A @ system.truth)
        np.testing.assert_array_equal(x0, np.zeros(12))


class TestRunExperiment:
    def test_files(self, tmp_path):
        cfg = small_config(tmp_path, bound_eps=[0.05])
        s = run_experiment(cfg)
        out = tmp_path / "out"
        names = {p.name for p in out.iterdir()}
        assert names == {"trial_0.csv", "trial_1.csv", "trial_2.csv", "final_iterate.csv",
                         "summary.json", "bounds.json", "metadata.json"}
        summary = json.loads((out / "summary.json").read_text())
        assert summary["steps"][0] == 0 and summary["steps"][-1] == 400
        bounds = json.loads((out / "bounds.json").read_text())
        assert [b["label"] for b in bounds] == ["achieved_median_ratio", "configured"]
        assert bounds[1]["epsilon"] == 0.05 and bounds[1]["k"] == s.bounds[1]["k"]

    def test_deterministic_bytes(self, tmp_path):
        a = small_config(tmp_path / "a")
        b = small_config(tmp_path / "b")
        sa, sb = run_experiment(a), run_experiment(b)
        assert json.dumps(sa.to_dict()) == json.dumps(sb.to_dict())
        for name in ("trial_0.csv", "trial_2.csv", "final_iterate.csv", "summary.json", "bounds.json"):
            assert (tmp_path / "a/out" / name).read_bytes() == (tmp_path / "b/out" / name).read_bytes()

    def test_parallel_equals_sequential(self, tmp_path):
        cfg = small_config(tmp_path, trials=8)
        seq = run_experiment(cfg, workers=1, write=False)
        par = run_experiment(cfg, workers=4, write=False)
        assert json.dumps(seq.to_dict()) == json.dumps(par.to_dict())

    def test_seed_changes_results(self, tmp_path):
        a = run_experiment(small_config(tmp_path, base_seed=1), write=False)
        b = run_experiment(small_config(tmp_path, base_seed=2), write=False)
        assert a.terminal != b.terminal

    def test_quantiles_ordered(self, tmp_path):
        s = run_experiment(small_config(tmp_path, trials=10), write=False)
        for stats in (s.residual, s.error):
            assert np.all(stats["min"] <= stats["q10"]) and np.all(stats["q10"] <= stats["median"])
            assert np.all(stats["median"] <= stats["q90"]) and np.all(stats["q90"] <= stats["max"])

    def test_target_ratio_trials_differ_in_length(self, tmp_path):
        cfg = small_config(tmp_path, stop={"kind": "target_ratio", "eps": 0.01, "max_steps": 100_000},
                           record_stride=1, trials=4)
        s = run_experiment(cfg, write=False)
        assert all(t["status"] == "target_ratio" for t in s.terminal)
        assert s.counts[0] == 4 and s.counts[-1] <= 4

    def test_violation_aborts_with_trial(self, monkeypatch, tmp_path):
        real = engine.run

        def broken(*args, **kw):
            h = real(*args, **kw)
            h.step_errors = h.step_errors.copy()
            h.step_errors[-1] = 2 * h.step_errors[0]
            return h

        monkeypatch.setattr(engine, "run", broken)
        with pytest.raises(InvariantViolation, match="trial 0 \\(seed 7/0\\)"):
            run_experiment(small_config(tmp_path), write=False)

    def test_hilbert_1000_initial_residual(self, hilbert_demo):
        _, s = hilbert_demo
        # ||H 1|| from the harmonic-number oracle; the initial error is sqrt(1000)
        assert s.residual["mean"][0] == pytest.approx(H1000_ONES_RESIDUAL, rel=1e-13)
        assert s.error["mean"][0] == pytest.approx(math.sqrt(1000), rel=1e-15)

    def test_hilbert_1000_terminal_max_norm(self, hilbert_demo):
        _, s = hilbert_demo
        assert s.terminal[0]["steps"] == 10_000
        assert 0.005 <= s.terminal[0]["residual_inf_norm"] <= 0.05

    def test_hilbert_1000_snapshot(self, hilbert_demo):
        cfg, _ = hilbert_demo
        rows = np.loadtxt(f"{cfg.output_dir}/final_iterate.csv", delimiter=",", skiprows=1)
        assert rows.shape == (1000, 2)
        dev = np.abs(rows[:, 1] - 1.0)
        assert np.median(dev) < 0.2
        assert np.argmax(dev) < 10
        trial = read_history_csv(f"{cfg.output_dir}/trial_0.csv")
        assert len(trial["step"]) == 2001 and trial["step"][1] == 5


class TestCsv:
    def _history(self, n=6, k=30, stride=3):
        s = LinearSystem.from_truth(hilbert(n), np.ones(n))
        return run(s, np.zeros(n), MaxSteps(k), seed=1, stride=stride)

    def test_header_only_for_empty(self, tmp_path):
        h = self._history()
        empty = engine.RunHistory(h.steps[:0], h.rows[:0], h.residual_norms[:0], h.error_norms[:0],
                                  h.row_sequence[:0], None, h.step_x_norms[:0], h.x, "max_steps")
        emit_csv(empty, tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_text() == "step,row_index,residual_norm,error_norm,sqrt_k_residual\n"

    def test_single_record(self, tmp_path):
        s = LinearSystem.from_truth(hilbert(1000), np.ones(1000))
        emit_csv(run(s, np.zeros(1000), MaxSteps(0)), tmp_path / "h.csv")
        lines = (tmp_path / "h.csv").read_text().splitlines()
        assert len(lines) == 2
        step, row, res, err, sk = lines[1].split(",")
        assert (step, row, sk) == ("0", "", "0")
        assert float(res) == pytest.approx(H1000_ONES_RESIDUAL, rel=1e-13)
        assert float(err) == pytest.approx(math.sqrt(1000), rel=1e-15)

    def test_round_trip_bitwise(self, tmp_path):
        h = self._history()
        emit_csv(h, tmp_path / "h.csv")
        back = read_history_csv(tmp_path / "h.csv")
        np.testing.assert_array_equal(back["step"], h.steps)
        np.testing.assert_array_equal(back["row_index"], h.rows)
        np.testing.assert_array_equal(back["residual_norm"], h.residual_norms)
        np.testing.assert_array_equal(back["error_norm"], h.error_norms)
        np.testing.assert_array_equal(back["sqrt_k_residual"], np.sqrt(h.steps) * h.residual_norms)

    def test_summary_csv(self, tmp_path):
        s = run_experiment(small_config(tmp_path), write=False)
        assert isinstance(s, EnsembleSummary)
        emit_csv(s, tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0].split(",") == harness.SUMMARY_COLUMNS
        assert len(lines) == 1 + len(s.steps)

    def test_io_error_names_path(self, tmp_path):
        with pytest.raises(OSError, match="missing"):
            emit_csv(self._history(), tmp_path / "missing" / "h.csv")


class TestSnapshot:
    def test_truth_reached(self, tmp_path):
        s = LinearSystem.from_truth(np.eye(3), np.array([1.0, -2.0, 0.5]))
        h = run(s, np.zeros(3), MaxSteps(200), seed=0, stride=1)
        assert h.status == "exact"
        coordinates_snapshot(h, tmp_path / "x.csv")
        rows = np.loadtxt(tmp_path / "x.csv", delimiter=",", skiprows=1)
        np.testing.assert_array_equal(rows[:, 1], [1.0, -2.0, 0.5])

    def test_zero_steps(self, tmp_path):
        s = LinearSystem.from_truth(hilbert(4), np.ones(4))
        coordinates_snapshot(run(s, np.zeros(4), MaxSteps(0)), tmp_path / "x.csv")
        lines = (tmp_path / "x.csv").read_text().splitlines()
        assert lines == ["index,value", "0,0", "1,0", "2,0", "3,0"]

    def test_iterate_state(self, tmp_path):
        st = engine.IterateState(np.array([1.0, 2.0]), 0, np.random.default_rng(0), x_lo=np.array([1e-17, 0.0]))
        coordinates_snapshot(st, tmp_path / "x.csv")
        assert (tmp_path / "x.csv").read_text().splitlines()[1] == "0,1"
