import numpy as np
import pytest
from numpy.testing import assert_allclose

from edgecache.core import ConfigError, DataError
from edgecache.experiments import (ALL_MODELS, METRICS, ExperimentConfig,
                                   MetricsTable, run_experiment, run_sweep,
                                   emit_outputs, write_metrics_csv,
                                   write_sweep_csv)


def quick_tv(**over):
    base = dict(scenario="time-varying", models=("op-ppm", "ol-ppm"),
                slots=13, window=4, order=2, runs=3, seed=11,
                events_per_slot=50)
    base.update(over)
    return ExperimentConfig(**base)


def write_constant_ratings(tmp_path, days=12):
    """Every slot carries the same 3:1 rating split between items 1 and 2."""
    lines = []
    for day in range(days):
        ts = day * 86_400 + 100
        lines.append(f"1\t1\t3.0\t{ts}")
        lines.append(f"1\t2\t1.0\t{ts}")
    f = tmp_path / "const.tsv"
    f.write_text("\n".join(lines) + "\n")
    return f


class TestExperimentConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        assert cfg.scenario == "time-varying"
        assert cfg.active_models() == ALL_MODELS[:5] + ("ol-ppm", "ol-gpm",
                                                        "ol-rpm", "ol-ipm")

    def test_scenario_default_model_sets(self):
        quasi = ExperimentConfig(scenario="quasi")
        assert quasi.active_models() == ("ol-ppm", "ol-gpm", "ol-rpm",
                                         "ol-ipm", "kwik-ppm")
        ml = ExperimentConfig(scenario="movielens", ratings_path="r.tsv")
        assert ml.active_models()[-1] == "kwik-ppm"
        assert len(ml.active_models()) == 10

    def test_explicit_models_win(self):
        cfg = ExperimentConfig(models=("op-gpm",))
        assert cfg.active_models() == ("op-gpm",)

    @pytest.mark.parametrize("kwargs", [
        {"scenario": "nope"}, {"tv_mode": "nope"}, {"models": ("bogus",)},
        {"n_files": 1}, {"cache_size": 5}, {"slots": 5},
        {"runs": 0}, {"workers": 0}, {"count_scale": 0.0},
        {"scenario": "movielens"},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kwargs)

    def test_component_config_errors_surface(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(window=3, order=4, slots=20)
        with pytest.raises(ConfigError):
            ExperimentConfig(alpha=1.5)

    def test_from_toml(self, tmp_path):
        f = tmp_path / "exp.toml"
        f.write_text('scenario = "quasi"\nmodels = ["ol-ppm", "kwik-ppm"]\n'
                     "slots = 20\nseed = 3\nzipf_s = 0.9\n")
        cfg = ExperimentConfig.from_toml(f)
        assert cfg.scenario == "quasi"
        assert cfg.models == ("ol-ppm", "kwik-ppm")
        assert cfg.zipf_s == 0.9

    def test_from_toml_unknown_key(self, tmp_path):
        f = tmp_path / "exp.toml"
        f.write_text("slotz = 20\n")
        with pytest.raises(ConfigError, match="unknown config keys"):
            ExperimentConfig.from_toml(f)

    def test_from_toml_parse_error(self, tmp_path):
        f = tmp_path / "exp.toml"
        f.write_text("slots = = 20\n")
        with pytest.raises(ConfigError, match="cannot parse"):
            ExperimentConfig.from_toml(f)


class TestRunExperiment:
    def test_table_shape(self):
        cfg = quick_tv()
        table = run_experiment(cfg)
        assert table.models == ("op-ppm", "ol-ppm")
        assert table.slots.tolist() == list(range(5, 14))
        for m in table.models:
            assert table.mean[m].shape == (9, len(METRICS))
            assert table.stderr[m].shape == (9, len(METRICS))

    def test_same_seed_reproduces_bytes(self, tmp_path):
        t1 = run_experiment(quick_tv())
        t2 = run_experiment(quick_tv())
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_metrics_csv(t1, a)
        write_metrics_csv(t2, b)
        assert a.read_bytes() == b.read_bytes()

    def test_different_seed_differs(self):
        t1 = run_experiment(quick_tv())
        t2 = run_experiment(quick_tv(seed=12))
        assert not np.allclose(t1.mean["op-ppm"], t2.mean["op-ppm"])

    def test_worker_pool_matches_serial(self):
        serial = run_experiment(quick_tv(runs=2))
        pooled = run_experiment(quick_tv(runs=2, workers=2))
        for m in serial.models:
            assert_allclose(serial.mean[m], pooled.mean[m], atol=1e-15)

    def test_true_eval_gap_nonnegative(self):
        # placing by the true profile is optimal, so evaluating any
        # predicted placement against it can never win
        table = run_experiment(quick_tv(models=("op-ppm", "op-rpm", "ol-gpm")))
        for m in table.models:
            assert table.mean[m][:, 2].min() >= -1e-12

    def test_constant_stream_is_learned_exactly(self, tmp_path):
        ratings = write_constant_ratings(tmp_path)
        cfg = ExperimentConfig(
            scenario="movielens", ratings_path=str(ratings),
            models=("op-ppm", "op-gpm", "op-ipm", "op-asp", "op-rpm",
                    "ol-ppm", "ol-ipm", "ol-rpm", "kwik-ppm"),
            n_files=2, id_lo=1, id_hi=2, cache_size=1,
            order=2, window=4, slots=8, runs=1, kwik_alpha1=0.6)
        table = run_experiment(cfg)
        tight = dict.fromkeys(("op-ppm", "op-ipm", "op-asp", "ol-ppm",
                               "ol-ipm", "kwik-ppm"), 1e-9)
        tight["op-gpm"] = 1e-7
        tight["op-rpm"] = 1e-6      # floor readout wobbles the counts by one
        tight["ol-rpm"] = 1e-6
        for m, tol in tight.items():
            assert table.mean[m][:, 0].max() < tol, m
            assert table.mean[m][:, 1].max() < 10 * tol, m

    def test_movielens_forces_single_run(self, tmp_path):
        ratings = write_constant_ratings(tmp_path)
        cfg = ExperimentConfig(scenario="movielens", ratings_path=str(ratings),
                               models=("ol-ppm",), n_files=2, id_lo=1, id_hi=2,
                               cache_size=1, order=2, window=4, slots=8, runs=5)
        table = run_experiment(cfg)
        assert table.runs == 1
        assert np.all(table.stderr["ol-ppm"] == 0.0)

    def test_short_trace_rejected(self, tmp_path):
        ratings = write_constant_ratings(tmp_path, days=4)
        cfg = ExperimentConfig(scenario="movielens", ratings_path=str(ratings),
                               models=("ol-ppm",), n_files=2, id_lo=1, id_hi=2,
                               cache_size=1, order=2, window=4, slots=8, runs=1)
        with pytest.raises(DataError, match="usable slots"):
            run_experiment(cfg)


class TestSummary:
    def test_pooling_formulas(self):
        slots = np.array([5, 6])
        mean = {"m": np.array([[1.0, 2.0, 3.0], [3.0, 4.0, 5.0]])}
        stderr = {"m": np.array([[0.3, 0.0, 0.0], [0.4, 0.0, 0.0]])}
        table = MetricsTable("time-varying", ("m",), slots, mean, stderr, 4)
        rows = table.summary()
        assert_allclose(rows["m"]["mse"][0], 2.0)
        assert_allclose(rows["m"]["asp_diff"][0], 3.0)
        # pooled se: sqrt(mean(se^2) / n_slots)
        assert_allclose(rows["m"]["mse"][1], np.sqrt((0.09 + 0.16) / 2 / 2))


class TestOutputs:
    def test_emit_writes_all_files(self, tmp_path):
        table = run_experiment(quick_tv(runs=2))
        out = tmp_path / "out"
        emit_outputs(table, out)
        names = {p.name for p in out.iterdir()}
        assert {"metrics.csv", "summary.txt", "mse.svg", "asp_diff.svg",
                "asp_diff_true_eval.svg"} <= names
        header = (out / "metrics.csv").read_text().splitlines()[0]
        assert header == "scenario,model,slot,metric,value,stderr"


class TestSweep:
    def test_axis_validation(self):
        cfg = quick_tv()
        with pytest.raises(ConfigError, match="unknown sweep axis"):
            run_sweep(cfg, "bogus", [1])
        with pytest.raises(ConfigError, match="at least one"):
            run_sweep(cfg, "tau", [])

    def test_tau_axis_coerces_to_int(self):
        cfg = quick_tv(runs=1)
        results = run_sweep(cfg, "tau", ["5", "6"])
        assert [v for v, _ in results] == [5, 6]
        # a longer window leaves fewer scored slots
        assert results[0][1].slots.size > results[1][1].slots.size

    def test_s_axis_floats(self):
        cfg = quick_tv(runs=1, models=("ol-ppm",))
        results = run_sweep(cfg, "s", ["0.5", "1.5"])
        assert [v for v, _ in results] == [0.5, 1.5]

    def test_sweep_csv(self, tmp_path):
        cfg = quick_tv(runs=1, models=("ol-ppm",))
        results = run_sweep(cfg, "s", [0.5, 1.5])
        f = tmp_path / "sweep.csv"
        write_sweep_csv(results, "s", f)
        lines = f.read_text().splitlines()
        assert lines[0] == "axis,value,model,metric,mean,stderr"
        # one row per (value, model, metric)
        assert len(lines) == 1 + 2 * 1 * len(METRICS)
        assert lines[1].startswith("s,0.5,ol-ppm,mse,")
