import csv
import io
import math

import numpy as np
import pytest

from rmt_select import harness
from rmt_select.harness import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    RunRecord,
    bench_runtime,
    derive_seed,
    emit_csv,
    parse_config_file,
    read_csv,
    resolve_threads,
    run_experiment,
)


def _small(**kw):
    base = dict(scenario="mimo-d2", n=30, m=6, k=12, realizations=3, algorithms=("greedy-blind", "greedy-aware", "random"))
    base.update(kw)
    return ExperimentConfig(**base)


def _csv_bytes(records):
    buf = io.StringIO()
    emit_csv(records, buf)
    return buf.getvalue()


class TestSeeds:
    def test_frozen_values(self):
        assert derive_seed(0, 0, 0, 0) == 2094613214458313471
        assert derive_seed(7, 1, 2, 3) == 5168399538067399530

    def test_streams_distinct(self):
        seeds = {derive_seed(1, i, s, r) for i in range(3) for s in range(7) for r in range(5)}
        assert len(seeds) == 3 * 7 * 5


class TestConfig:
    def test_k_out_of_range(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(sweep_values=(20, 50))

    def test_unknown_algorithm(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(algorithms=("greedy",))

    def test_sweep_param_per_scenario(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(scenario="mimo-d2", sweep_param="decay_rho", sweep_values=(0.1,))
        with pytest.raises(ConfigError):
            ExperimentConfig(scenario="wsn", sweep_param="d", sweep_values=(1.0,))

    def test_realizations(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(realizations=0)

    def test_points_default_to_preset(self):
        assert ExperimentConfig().points() == (50.0,)
        assert ExperimentConfig(sweep_param="d").points() == (2.0,)

    def test_d_override(self):
        cfg = ExperimentConfig(scenario="mimo-d2", d=4.0)
        assert cfg.scenario_at(None).d == 4.0


class TestRunExperiment:
    def test_records_keyed_and_complete(self):
        cfg = _small(sweep_values=(10, 14))
        recs = run_experiment(cfg)
        assert len(recs) == 3 * 2 * 3
        assert len({r.key for r in recs}) == len(recs)
        assert all(math.isfinite(r.value) and r.wall_seconds >= 0 for r in recs)

    def test_blind_selected_once(self):
        recs = run_experiment(_small())
        blind = [r for r in recs if r.algorithm == "greedy-blind"]
        assert len({r.seed for r in blind}) == 1
        assert [r.oracle_evals > 0 for r in blind] == [True, False, False]

    def test_byte_identical_reruns(self):
        cfg = _small(realizations=1)
        assert _csv_bytes(run_experiment(cfg)) == _csv_bytes(run_experiment(cfg))

    def test_parallel_equals_serial(self):
        serial = run_experiment(_small(threads=1, realizations=4))
        parallel = run_experiment(_small(threads=4, realizations=4))
        assert _csv_bytes(serial) == _csv_bytes(parallel)

    def test_paired_channels(self):
        recs = run_experiment(_small(algorithms=("greedy-aware", "exhaustive"), n=12, m=3, k=5, realizations=2))
        by = {(r.algorithm, r.realization): r.value for r in recs}
        for r in range(2):
            assert by[("exhaustive", r)] <= by[("greedy-aware", r)] + 1e-12

    def test_failure_row(self, monkeypatch):
        real = harness.sample_channel

        def flaky(R, m, seed):
            ch = real(R, m, seed)
            if seed == derive_seed(0, 0, harness.CHANNEL_STREAM, 1):
                H = ch.H.copy()
                H[:, 1] = H[:, 0]
                return type(ch)(H=H, W=ch.W, seed=ch.seed)
            return ch

        monkeypatch.setattr(harness, "sample_channel", flaky)
        recs = run_experiment(_small(algorithms=("greedy-blind", "random")))
        failed = [r for r in recs if r.failed]
        assert {(r.algorithm, r.realization) for r in failed} == {("greedy-blind", 1), ("random", 1)}
        assert len(recs) == 6

    def test_snr_and_db_transforms(self):
        base = run_experiment(_small(algorithms=("random",)))
        scaled = run_experiment(_small(algorithms=("random",), snr_db=20.0))
        np.testing.assert_allclose([r.value for r in scaled], [r.value / 100 for r in base], rtol=1e-12)
        wev = run_experiment(_small(algorithms=("random",), metric="WEV"))
        wev_db = run_experiment(_small(algorithms=("random",), metric="WEV", db=True))
        np.testing.assert_allclose([r.value for r in wev_db], [10 * np.log10(r.value) for r in wev], rtol=1e-12)

    def test_wsn_decay_sweep(self):
        cfg = ExperimentConfig(
            scenario="wsn", n=40, m=8, k=16, sweep_param="decay_rho", sweep_values=(0.05, 0.2),
            algorithms=("convex-blind", "random"), realizations=2, metric="LCE",
        )
        recs = run_experiment(cfg)
        assert len(recs) == 8
        assert {r.sweep_value for r in recs} == {0.05, 0.2}


class TestBench:
    def test_evals_follow_k_times_n_minus_k(self):
        cfg = ExperimentConfig(
            scenario="mimo-d4", algorithms=("greedy-blind",), sweep_values=(40, 50, 60), realizations=1, K=1,
            record_timing=True,
        )
        rows = bench_runtime(cfg)
        assert [r.oracle_evals for r in rows] == [2400, 2500, 2400]

    def test_extrapolation_column(self):
        rows = bench_runtime(_small(algorithms=("greedy-blind", "greedy-aware"), n_changes=10, realizations=2))
        blind, aware = rows
        assert blind.extrapolated_seconds == pytest.approx(blind.wall_seconds)
        assert aware.extrapolated_seconds == pytest.approx(10 * aware.wall_seconds)
        assert "extrapolated_seconds" in _csv_bytes(rows).splitlines()[0]


class TestCsv:
    def _record(self, **kw):
        base = dict(
            scenario="mimo-d2", algorithm="random", metric="MSE", sweep_param="k", sweep_value=50.0,
            realization=0, value=1 / 3, wall_seconds=0.0, oracle_evals=0, seed=123,
        )
        base.update(kw)
        return RunRecord(**base)

    def test_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        emit_csv([], path)
        assert path.read_text(encoding="utf-8") == ",".join(CSV_HEADER) + "\n"

    def test_one_record(self, tmp_path):
        path = tmp_path / "one.csv"
        emit_csv([self._record()], path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2
        row = next(csv.DictReader(io.StringIO("\n".join(lines))))
        assert row["value"] == "0.333333333333"
        assert row["seed"] == "123"

    def test_round_trip(self, tmp_path):
        recs = run_experiment(_small(realizations=2))
        path = tmp_path / "rt.csv"
        emit_csv(recs, path)
        back = read_csv(path)
        assert len(back) == len(recs)
        for a, b in zip(recs, back):
            assert a.key == b.key and a.seed == b.seed and a.oracle_evals == b.oracle_evals
            assert b.value == pytest.approx(a.value, rel=1e-11)

    def test_nan_round_trip(self, tmp_path):
        path = tmp_path / "nan.csv"
        emit_csv([self._record(value=float("nan"))], path)
        assert read_csv(path)[0].failed


class TestConfigFile:
    def test_parse(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nscenario = mimo-d4\nrealizations = 5  # inline\n\ndecay_rho = 0.2\n")
        assert parse_config_file(path) == {"scenario": "mimo-d4", "realizations": "5", "decay-rho": "0.2"}

    def test_malformed(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("scenario mimo-d4\n")
        with pytest.raises(ConfigError):
            parse_config_file(path)

    def test_threads(self, monkeypatch):
        monkeypatch.setenv("RMT_SELECT_THREADS", "3")
        assert resolve_threads(None) == 3
        assert resolve_threads(2) == 2


def test_blind_greedy_beats_random_at_d2():
    from scipy import stats

    recs = run_experiment(ExperimentConfig(scenario="mimo-d2", algorithms=("greedy-blind", "random"), realizations=100))
    greedy = np.array([r.value for r in recs if r.algorithm == "greedy-blind"])
    rand = np.array([r.value for r in recs if r.algorithm == "random"])
    assert greedy.mean() < rand.mean()
    assert stats.ttest_ind(greedy, rand, alternative="less").pvalue < 0.05
