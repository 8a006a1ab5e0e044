import csv
import io

import numpy as np
import pytest
import tomli

from emecs_rl.approximator import ReluNet, save_checkpoint
from emecs_rl.harness import cli
from emecs_rl.harness.config import ConfigError, config_from_dict, dump_config, load_config, load_preset, preset_names
from emecs_rl.harness.heatmap import read_pgm, write_pgm
from emecs_rl.harness.report import ReportError, collect, report
from emecs_rl.harness.runner import build_oracle, execute_run, read_csv, run_experiment, run_sweep


def _small_pred(tmp_path, **changes):
    cfg = load_preset("desk/mc-pred-tcj").replace(
        num_runs=2, episodes=4, output_dir=str(tmp_path / "out"),
        oracle={"path": str(tmp_path / "o.evalset"), "total_steps": 3000, "sample_count": 40},
    )
    return cfg.replace(**changes) if changes else cfg


def _small_synth(tmp_path):
    return load_preset("desk/synth-collision-tcs").replace(
        num_runs=1, steps=300, eval_every=100, model={"hidden": 4},
        oracle={"path": str(tmp_path / "s.evalset"), "pair_count": 5},
    )


def _write(cfg, path):
    dump_config(cfg, path)
    return str(path)


class TestConfig:
    def test_all_presets_load(self):
        names = preset_names()
        assert len(names) == 52
        for name in names:
            cfg = load_preset(name)
            assert cfg.alpha in cfg.alpha_grid or cfg.alpha > 0

    @pytest.mark.parametrize("change,msg", [
        ({"num_runs": 0}, "num_runs"),
        ({"kind": "offline"}, "kind"),
        ({"episodes": 0}, "episode"),
        ({"agent": {"alpha_grid": [0.2, 0.1]}}, "increasing"),
    ])
    def test_invalid(self, tmp_path, change, msg):
        with pytest.raises(ConfigError, match=msg):
            _small_pred(tmp_path, **change)

    def test_prediction_needs_oracle(self):
        d = load_preset("desk/mc-pred-nn").to_dict()
        del d["oracle"]
        with pytest.raises(ConfigError):
            config_from_dict(d)

    def test_toml_roundtrip(self, tmp_path):
        cfg = _small_pred(tmp_path)
        path = _write(cfg, tmp_path / "c.toml")
        assert load_config(path).config_hash() == cfg.config_hash()
        with open(path, "rb") as fh:
            assert tomli.load(fh)["experiment"]["num_runs"] == 2

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.toml")
        (tmp_path / "bad.toml").write_text("[experiment\n")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "bad.toml")

    def test_paper_scale_presets(self):
        assert load_preset("mc-pred-tcj").model["hidden"] == 5
        assert load_preset("mc-pred-tcj").num_runs == 30
        assert load_preset("mc-pred-tcj").episodes == 2000
        assert load_preset("acrobot-tcj").model["hidden"] == 4000
        assert load_preset("acrobot-nn").model["hidden"] == 2000
        assert load_preset("acrobot-lpj").model["hidden"] == 2000


class TestRuns:
    def test_reproducible_bytes(self, tmp_path):
        cfg = _small_pred(tmp_path)
        D = build_oracle(cfg)
        run_experiment(cfg, tmp_path / "a", oracle=D)
        run_experiment(cfg, tmp_path / "b", oracle=D)
        for name in ("run_000.csv", "run_001.csv", "aggregate.csv", "summary.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_run_independence(self, tmp_path):
        cfg = _small_pred(tmp_path, num_runs=3)
        D = build_oracle(cfg)
        alone = execute_run(cfg, 2, cfg.alpha, D)
        batch = run_experiment(cfg, tmp_path / "r", oracle=D)
        assert np.array_equal(alone.curve, batch[2].curve)
        assert np.array_equal(alone.weights, batch[2].weights)

    def test_csv_self_describing(self, tmp_path):
        cfg = _small_pred(tmp_path)
        run_experiment(cfg, tmp_path / "r", oracle=build_oracle(cfg))
        for name in ("run_000.csv", "aggregate.csv", "summary.csv"):
            text = (tmp_path / "r" / name).read_text()
            first, header = text.splitlines()[:2]
            assert first == f"# config_sha256={cfg.config_hash()}"
            assert "," in header and not header[0].isdigit()
        _, rows = read_csv(tmp_path / "r" / "aggregate.csv")
        assert list(rows[0]) == ["episode", "mean", "std", "stderr"] and len(rows) == 4

    def test_zero_alpha_flat_curve(self, tmp_path):
        cfg = _small_pred(tmp_path, num_runs=1, episodes=6)
        (r,) = run_experiment(cfg, tmp_path / "r", alpha=0.0, oracle=build_oracle(cfg))
        assert np.all(r.curve == r.curve[0])

    def test_continuing_curve(self, tmp_path):
        cfg = _small_synth(tmp_path)
        (r,) = run_experiment(cfg, tmp_path / "r", oracle=build_oracle(cfg))
        assert len(r.curve) == 4 and np.all(np.isfinite(r.curve))
        _, rows = read_csv(tmp_path / "r" / "run_000.csv")
        assert [row["step"] for row in rows] == ["0", "100", "200", "300"]

    def test_control_run(self, tmp_path):
        cfg = load_preset("desk/mc-ctrl-tcj").replace(num_runs=1, episodes=2, model={"hidden": 8})
        (r,) = run_experiment(cfg, tmp_path / "r")
        assert np.all(r.curve <= 1000) and np.array_equal(r.curve, r.steps)


class TestSweep:
    def test_single_alpha_matches_run(self, tmp_path):
        cfg = _small_pred(tmp_path, agent={"alpha_grid": [0.01], "alpha": 0.01})
        D = build_oracle(cfg)
        run_experiment(cfg, tmp_path / "run", oracle=D)
        res = run_sweep(cfg, tmp_path / "sweep", oracle=D)
        assert res.selected_alpha == 0.01
        _, a = read_csv(tmp_path / "run" / "summary.csv")
        _, b = read_csv(tmp_path / "sweep" / "summary.csv")
        assert a == b

    def test_divergent_largest_alpha_excluded(self, tmp_path):
        cfg = load_preset("desk/mc-pred-nn").replace(
            num_runs=2, episodes=3,
            oracle={"path": str(tmp_path / "o.evalset"), "total_steps": 3000, "sample_count": 40},
            agent={"alpha_grid": [1e-4, 1e6]},
        )
        res = run_sweep(cfg, tmp_path / "sweep", oracle=build_oracle(cfg))
        big = res.cells[-1]
        assert big.failures == big.num_runs == 2
        assert res.selected_alpha == 1e-4 and not res.flagged
        _, rows = read_csv(tmp_path / "sweep" / "sweep.csv")
        assert rows[-1]["failures"] == "2" and rows[-1]["selected"] == "0"


class TestCli:
    def test_oracle_deterministic(self, tmp_path, capsys):
        path = _write(_small_pred(tmp_path), tmp_path / "c.toml")
        assert cli.main(["oracle", path, "--out", str(tmp_path / "x1")]) == 0
        assert cli.main(["oracle", path, "--out", str(tmp_path / "x2")]) == 0
        assert (tmp_path / "x1").read_bytes() == (tmp_path / "x2").read_bytes()
        assert "40 probes" in capsys.readouterr().out

    def test_oracle_sample_count_too_large(self, tmp_path, capsys):
        cfg = _small_pred(tmp_path).replace(oracle={"total_steps": 10, "sample_count": 500})
        assert cli.main(["oracle", _write(cfg, tmp_path / "c.toml")]) != 0
        assert "cannot sample" in capsys.readouterr().err

    def test_bad_config(self, tmp_path):
        (tmp_path / "bad.toml").write_text("[experiment]\nname = 'x'\n")
        assert cli.main(["run", str(tmp_path / "bad.toml")]) != 0
        assert cli.main(["run", "--preset", "no-such-preset"]) != 0
        assert cli.main(["run"]) != 0

    def test_run_and_sweep(self, tmp_path, capsys):
        cfg = _small_pred(tmp_path, agent={"alpha_grid": [0.001, 0.01]})
        path = _write(cfg, tmp_path / "c.toml")
        assert cli.main(["run", path, "--build-oracle", "--out", str(tmp_path / "r"), "--seed", "3"]) == 0
        assert (tmp_path / "r" / "summary.csv").exists()
        assert cli.main(["sweep", path, "--out", str(tmp_path / "s")]) == 0
        assert "selected alpha=" in capsys.readouterr().out

    def test_missing_oracle(self, tmp_path):
        path = _write(_small_pred(tmp_path), tmp_path / "c.toml")
        assert cli.main(["run", path, "--out", str(tmp_path / "r")]) != 0


class TestHeatmap:
    def _config(self, tmp_path):
        cfg = load_preset("desk/mc-pred-lpj").replace(output_dir=str(tmp_path / "out"))
        return _write(cfg, tmp_path / "c.toml")

    def test_all_zero_checkpoint(self, tmp_path):
        save_checkpoint(tmp_path / "z.npz", ReluNet(3, 4, 1))
        out = tmp_path / "maps"
        assert cli.main(["heatmap", self._config(tmp_path), "--checkpoint", str(tmp_path / "z.npz"),
                         "--out", str(out)]) == 0
        for k in range(4):
            m = np.loadtxt(out / f"node_{k:04d}.csv", delimiter=",")
            assert m.shape == (100, 100) and not m.any()
            assert not read_pgm(out / f"node_{k:04d}.pgm").any()
        rows = list(csv.DictReader(io.StringIO((out / "components.csv").read_text())))
        assert [r["components"] for r in rows] == ["0"] * 4

    def test_grid_size_and_node_list(self, tmp_path):
        net = ReluNet(3, 5, 1, w=np.random.default_rng(0).normal(size=ReluNet(3, 5, 1).num_params()))
        save_checkpoint(tmp_path / "n.npz", net)
        out = tmp_path / "maps"
        assert cli.main(["heatmap", self._config(tmp_path), "--checkpoint", str(tmp_path / "n.npz"),
                         "--nodes", "1,3", "--grid", "20", "--out", str(out)]) == 0
        assert sorted(p.name for p in out.glob("*.csv")) == ["components.csv", "node_0001.csv", "node_0003.csv"]
        assert np.loadtxt(out / "node_0001.csv", delimiter=",").shape == (20, 20)

    def test_non_2d_rejected(self, tmp_path):
        cfg = load_preset("desk/acrobot-lpj")
        save_checkpoint(tmp_path / "n.npz", ReluNet(5, 4, 3))
        assert cli.main(["heatmap", _write(cfg, tmp_path / "a.toml"),
                         "--checkpoint", str(tmp_path / "n.npz")]) != 0

    def test_shape_mismatch_rejected(self, tmp_path):
        save_checkpoint(tmp_path / "n.npz", ReluNet(7, 4, 1))
        assert cli.main(["heatmap", self._config(tmp_path), "--checkpoint", str(tmp_path / "n.npz")]) != 0

    def test_pgm_roundtrip(self, tmp_path):
        img = np.random.default_rng(0).integers(0, 256, size=(13, 17)).astype(np.uint8)
        write_pgm(tmp_path / "i.pgm", img)
        assert (tmp_path / "i.pgm").read_bytes().startswith(b"P5\n17 13\n255\n")
        assert np.array_equal(read_pgm(tmp_path / "i.pgm"), img)


class TestReport:
    @pytest.fixture
    def dirs(self, tmp_path):
        out = {}
        cfg = _small_pred(tmp_path)
        D = build_oracle(cfg)
        for method, alpha in (("tcj", 0.01), ("tcj-lin", 0.0), ("lpj", 0.001)):
            c = cfg.replace(method=method)
            run_experiment(c, tmp_path / method, alpha=alpha, oracle=D)
            out[method] = tmp_path / method
        return out

    def test_passthrough(self, dirs):
        (row,) = collect([dirs["tcj"]])
        _, summary = read_csv(dirs["tcj"] / "summary.csv")
        assert all(row[k] == summary[0][k] for k in summary[0])

    def test_sorted(self, dirs, tmp_path):
        table = report(list(dirs.values()), tmp_path / "t.csv")
        rows = list(csv.DictReader(io.StringIO(table)))
        means = [float(r["final_mean"]) for r in rows]
        assert means == sorted(means) and len(rows) == 3
        assert (tmp_path / "t.csv").read_text() == table

    def test_mixed_refused(self, dirs, tmp_path, capsys):
        cfg = _small_synth(tmp_path)
        run_experiment(cfg, tmp_path / "synth", oracle=build_oracle(cfg))
        with pytest.raises(ReportError):
            collect([dirs["tcj"], tmp_path / "synth"])
        assert cli.main(["report", str(dirs["tcj"]), str(tmp_path / "synth")]) != 0
        assert "episodic and continuing" in capsys.readouterr().err

    def test_missing_summary(self, tmp_path):
        with pytest.raises(ReportError):
            collect([tmp_path])


def test_report_flags_off_policy_runs(tmp_path):
    cfg = _small_synth(tmp_path)
    run_experiment(cfg, tmp_path / "synth", oracle=build_oracle(cfg))
    table = report([tmp_path / "synth"])
    assert table.startswith("# note:") and "uncorrected" in table.splitlines()[0]
