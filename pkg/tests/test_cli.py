import json

import numpy as np
import pytest
from click.testing import CliRunner

from hrtfgp.cli import main


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def container(tmp_path_factory, runner):
    """Small synthetic container shared by the data-consuming commands."""
    base = tmp_path_factory.mktemp("data")
    out = base / "set.json"
    r = runner.invoke(main, ["synth", "--grid", "fibonacci:48", "--bins", "16",
                             "--out", str(out)])
    assert r.exit_code == 0, r.output
    return out


class TestSynthImport:
    def test_synth_and_import_summary(self, runner, container):
        r = runner.invoke(main, ["import", "--data", str(container)])
        assert r.exit_code == 0
        summary = json.loads(r.output)
        assert summary["n"] == 48
        assert summary["d"] == 16
        assert summary["sample_rate_hz"] == 44100.0

    def test_synth_usage_error_exit_2(self, runner, tmp_path):
        r = runner.invoke(main, ["synth", "--grid", "dodecahedron",
                                 "--out", str(tmp_path / "x.json")])
        assert r.exit_code == 2

    def test_synth_runtime_error_exit_1(self, runner, tmp_path):
        r = runner.invoke(main, ["synth", "--grid", "fibonacci:16",
                                 "--radius", "0.5",
                                 "--out", str(tmp_path / "x.json")])
        assert r.exit_code == 1
        assert "error:" in r.output

    def test_import_corrupt_container_exit_1(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        r = runner.invoke(main, ["import", "--data", str(bad)])
        assert r.exit_code == 1

    def test_missing_required_option_exit_2(self, runner):
        assert runner.invoke(main, ["synth"]).exit_code == 2


class TestFeatures:
    def test_features_csv_shape(self, runner, container, tmp_path):
        out = tmp_path / "f.csv"
        r = runner.invoke(main, ["features", "--data", str(container),
                                 "--kind", "LMR", "--out", str(out)])
        assert r.exit_code == 0, r.output
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("x,y,z,f0,")
        assert len(lines) == 49
        assert len(lines[1].split(",")) == 3 + 16

    def test_unknown_kind_exit_2(self, runner, container, tmp_path):
        r = runner.invoke(main, ["features", "--data", str(container),
                                 "--kind", "ITD", "--out", str(tmp_path / "f.csv")])
        assert r.exit_code == 2


class TestTrainCrossval:
    def test_train_writes_hyperparameters(self, runner, container, tmp_path):
        out = tmp_path / "model.json"
        r = runner.invoke(main, ["train", "--data", str(container),
                                 "--kind", "MP", "--iters", "3",
                                 "--out", str(out)])
        assert r.exit_code == 0, r.output
        doc = json.loads(out.read_text())
        assert len(doc["length_scales"]) == 32  # MP width = 2 x 16
        assert doc["signal_scale"] > 0
        assert np.isfinite(doc["lmh"])

    def test_crossval_csv(self, runner, container, tmp_path):
        out = tmp_path / "cv.csv"
        r = runner.invoke(main, ["crossval", "--data", str(container),
                                 "--kinds", "MP", "--kernels", "rbf",
                                 "--iters", "3", "--out", str(out)])
        assert r.exit_code == 0, r.output
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "kind,method,mean_angular_error_deg"
        methods = {ln.split(",")[1] for ln in lines[1:]}
        assert methods == {"ols", "nn", "gp_inf"}
        for ln in lines[1:]:
            assert float(ln.split(",")[2]) >= 0

    def test_crossval_seed_determinism(self, runner, container, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            r = runner.invoke(main, ["crossval", "--data", str(container),
                                     "--kernels", "rbf", "--iters", "2",
                                     "--seed", "5", "--out", str(out)])
            assert r.exit_code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_crossval_unknown_kernel_exit_2(self, runner, container, tmp_path):
        r = runner.invoke(main, ["crossval", "--data", str(container),
                                 "--kernels", "m52",
                                 "--out", str(tmp_path / "cv.csv")])
        assert r.exit_code == 2


class TestEigenSelect:
    def test_eigen_cumulative_energy(self, runner, container, tmp_path):
        out = tmp_path / "e.csv"
        r = runner.invoke(main, ["eigen", "--data", str(container),
                                 "--kinds", "MP", "--iters", "2",
                                 "--out", str(out)])
        assert r.exit_code == 0, r.output
        rows = [ln.split(",") for ln in out.read_text().strip().splitlines()[1:]]
        energy = [float(r[2]) for r in rows]
        assert len(energy) == 48
        assert all(b >= a - 1e-9 for a, b in zip(energy, energy[1:]))
        assert energy[-1] == pytest.approx(1.0, abs=1e-6)

    def test_select_order_and_curve(self, runner, container, tmp_path):
        out = tmp_path / "s.csv"
        r = runner.invoke(main, ["select", "--data", str(container),
                                 "--kind", "MP", "--risk", "pred",
                                 "--subset-size", "6", "--iters", "2",
                                 "--out", str(out)])
        assert r.exit_code == 0, r.output
        rows = [ln.split(",") for ln in out.read_text().strip().splitlines()[1:]]
        assert len(rows) == 6
        picked = [int(r[1]) for r in rows]
        assert len(set(picked)) == 6


class TestMogTrial:
    def test_mog_fits_and_saves(self, runner, container, tmp_path):
        out = tmp_path / "mog.json"
        r = runner.invoke(main, ["mog", "--data", str(container),
                                 "--q", "4", "--components", "2",
                                 "--out", str(out)])
        assert r.exit_code == 0, r.output
        from hrtfgp.mog import load_mog
        model, codec = load_mog(str(out))
        assert model.m == 2
        assert codec.q == 4

    def test_trial_report(self, runner, tmp_path):
        from hrtfgp.cli import run_simulated_trial
        report = run_simulated_trial(1, 3, 30, seed=0, n_dirs=48, d=16,
                                     q=4, m=2)
        assert len(report["targets"]) == 1
        t = report["targets"][0]
        assert t["best_error_deg"] <= t["initial_error_deg"] + 1e-9
        eta = t["eta_trace"]
        assert all(b <= a + 1e-12 for a, b in zip(eta, eta[1:]))
