import json

import numpy as np
import pytest

from boundedmcmc.harness import ConfigError, compare_runs, load_config, run_experiment, run_sweep
from boundedmcmc.harness.cli import main
from boundedmcmc.harness.config import parse_config
from boundedmcmc.reservoir import (
    log_likelihood,
    read_model,
    read_observations,
)

BASE = {
    "target": "rosenbrock",
    "algorithm": "SOLHMC",
    "boundary_mode": "bounce",
    "delta": 0.1,
    "i_param": 0.6,
    "n_samples": 400,
    "burn_in": 100,
    "seeds": [1, 2],
    "target_options": {"a": 1.0},
    "workers": 1,
}


def failing_target():
    raise RuntimeError("target construction failed")


def write_config(path, **kw):
    path.write_text(json.dumps({**BASE, **kw}))
    return path


def data_rows(path):
    return [ln.split(",") for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]


class TestConfig:
    def test_minimal(self):
        cfg = parse_config(BASE)
        assert cfg.seeds == (1, 2)
        assert cfg.reflection_rule == "reflect"

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config({**BASE, "step_size": 0.1})

    @pytest.mark.parametrize("key", ["target", "algorithm", "boundary_mode", "delta", "n_samples", "seeds"])
    def test_missing_key(self, key):
        raw = {k: v for k, v in BASE.items() if k != key}
        with pytest.raises(ConfigError, match=key):
            parse_config(raw)

    @pytest.mark.parametrize("kw", [
        {"target": "banana"}, {"algorithm": "MALA"}, {"boundary_mode": "wrap"},
        {"delta": -0.1}, {"seeds": []}, {"seeds": [1, 1]}, {"i_param": 1.5},
        {"target_options": {"b": 1}}, {"box_sizes": []}, {"box_sizes": [0.5, -1]},
        {"variants": [{"algorithm": "HMC", "boundary_mode": "bounce", "extra": 1}]},
        {"target": "reservoir-full-a", "target_options": {}}, {"x0": "middle"},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            parse_config({**BASE, **kw})

    def test_json_round_trip(self, tmp_path):
        cfg = load_config(write_config(tmp_path / "c.json", x0=[0.1, 0.2]))
        assert parse_config(json.loads(cfg.to_json())) == cfg

    def test_bad_files(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "bad.json")


class TestRun:
    def test_outputs(self, tmp_path):
        cfg = load_config(write_config(tmp_path / "c.json", seeds=list(range(1, 11))))
        res = run_experiment(cfg, tmp_path / "out")
        out = tmp_path / "out"
        assert len(list(out.glob("chain_seed*.csv"))) == 10
        assert len(data_rows(out / "ness_per_seed.csv")) == 11
        summary = data_rows(out / "summary.csv")
        assert summary[0] == ["coordinate", "P10", "P50", "P90", "mean_acceptance"]
        assert [r[0] for r in summary[1:]] == [f"x{j}" for j in range(5)]
        p10, p50, p90 = (np.array([float(r[k]) for r in summary[1:]]) for k in (1, 2, 3))
        assert np.all(p10 <= p50) and np.all(p50 <= p90)
        assert p50[0] == pytest.approx(np.median([r.ness[0] for r in res]))
        chain = out / "chain_seed3.csv"
        head = chain.read_text().splitlines()[:4]
        assert head[0].startswith("# config:") and head[1] == "# seed: 3"
        assert len(data_rows(chain)) == 401
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["seeds"] == list(range(1, 11))
        assert len(manifest["runs"]) == 10

    def test_byte_determinism_and_workers(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        par = write_config(tmp_path / "p.json", workers=2)
        run_experiment(load_config(cfg), tmp_path / "a")
        run_experiment(load_config(cfg), tmp_path / "b")
        run_experiment(load_config(par), tmp_path / "c")
        for name in ("chain_seed1.csv", "chain_seed2.csv", "ness_per_seed.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            a_rows = data_rows(tmp_path / "a" / name)
            assert a_rows == data_rows(tmp_path / "c" / name)

    def test_no_chains(self, tmp_path):
        run_experiment(load_config(write_config(tmp_path / "c.json", save_chains=False)), tmp_path / "o")
        assert not list((tmp_path / "o").glob("chain_*"))


class TestSweep:
    def test_rows(self, tmp_path):
        sizes = [0.1 * k for k in range(1, 15)]
        raw = dict(n_samples=60, burn_in=20, seeds=[1, 2, 3, 4, 5], box_sizes=sizes, save_chains=False,
                   variants=[{"label": "bounce", "algorithm": "SOLHMC", "boundary_mode": "bounce"},
                             {"label": "reject", "algorithm": "SOLHMC", "boundary_mode": "reject"}])
        out = run_sweep(load_config(write_config(tmp_path / "s.json", **raw)), tmp_path / "o")
        rows = data_rows(tmp_path / "o" / "sweep.csv")
        assert rows[0] == ["box_size", "coordinate", "P10", "P50", "P90", "algorithm", "median_acceptance"]
        assert len(rows) - 1 == 14 * 2 * 5
        assert len(out["results"]) == 14 * 2 * 5
        assert (tmp_path / "o" / "sweep_bounce.dat").exists()
        assert out["overlap_check"] is None

    def test_overlap_check_recorded(self, tmp_path):
        raw = dict(n_samples=200, seeds=[1, 2, 3], box_sizes=[1.0], overlap_from=1.0,
                   variants=[{"label": "b", "algorithm": "SOLHMC", "boundary_mode": "bounce"},
                             {"label": "r", "algorithm": "SOLHMC", "boundary_mode": "reject"}])
        out = run_sweep(load_config(write_config(tmp_path / "s.json", **raw)), tmp_path / "o")
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["overlap_check"]["passed"] == out["overlap_check"]["passed"]
        assert list(manifest["overlap_check"]["overlap"]) == ["1.0"]

    def test_requires_box_sizes(self, tmp_path):
        with pytest.raises(ConfigError):
            run_sweep(load_config(write_config(tmp_path / "s.json")), tmp_path / "o")


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    run_experiment(load_config(write_config(base / "a.json", save_chains=False)), base / "a")
    run_experiment(load_config(write_config(base / "b.json", save_chains=False, algorithm="HMC")),
                   base / "b")
    return base


class TestCompare:
    def test_histogram(self, runs, tmp_path):
        out = compare_runs(runs / "a", runs / "b", tmp_path / "h.csv", bins=5)
        rows = data_rows(tmp_path / "h.csv")
        assert len(rows) == 6
        assert sum(int(r[2]) for r in rows[1:]) == 5
        ratios = data_rows(tmp_path / "h.ratios.csv")
        frac = float(np.mean([float(r[3]) > 1 for r in ratios[1:]]))
        assert out["report"].fraction_greater == frac
        assert f"# fraction_greater: {frac!r}" in (tmp_path / "h.csv").read_text()

    def test_identical_runs(self, runs, tmp_path):
        out = compare_runs(runs / "a", runs / "a", tmp_path / "h.csv")
        assert np.all(out["report"].ratios == 1.0)
        assert out["report"].fraction_greater == 0.0
        assert out["report"].counts.sum() == 5

    def test_mismatch(self, runs, tmp_path):
        other = tmp_path / "g"
        run_experiment(load_config(write_config(tmp_path / "g.json", save_chains=False, target="gaussian",
                                                target_options={"dim": 2})), other)
        with pytest.raises(ConfigError, match="mismatch"):
            compare_runs(runs / "a", other, tmp_path / "h.csv")

    def test_missing(self, tmp_path):
        with pytest.raises(ConfigError):
            compare_runs(tmp_path, tmp_path, tmp_path / "h.csv")


class TestCli:
    def test_generate_model_and_data(self, tmp_path):
        m1, m2 = tmp_path / "m1.txt", tmp_path / "m2.txt"
        assert main(["generate-model", "--preset", "desk", "--seed", "4", "-o", str(m1),
                     "--truth", str(tmp_path / "t.txt")]) == 0
        assert main(["generate-model", "--preset", "desk", "--seed", "4", "-o", str(m2)]) == 0
        assert m1.read_bytes() == m2.read_bytes()
        model = read_model(m1)
        np.testing.assert_array_equal(np.loadtxt(tmp_path / "t.txt"), model.parameters())

        obs = tmp_path / "obs.txt"
        assert main(["generate-data", "--model", str(m1), "--no-noise", "-o", str(obs)]) == 0
        assert log_likelihood(model, read_observations(obs)) == 0.0
        noisy = tmp_path / "noisy.txt"
        assert main(["generate-data", "--model", str(m1), "--seed", "2", "-o", str(noisy)]) == 0
        assert log_likelihood(model, read_observations(noisy)) < 0.0

    def test_bad_spec_counts(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"n_blocks": 10, "n_connections": 3}))
        assert main(["generate-model", "--spec", str(spec), "-o", str(tmp_path / "m.txt")]) == 1

    def test_truth_size_mismatch(self, tmp_path):
        m = tmp_path / "m.txt"
        main(["generate-model", "--preset", "desk", "-o", str(m)])
        np.savetxt(tmp_path / "t.txt", np.ones(3))
        assert main(["generate-data", "--model", str(m), "--truth", str(tmp_path / "t.txt"),
                     "-o", str(tmp_path / "o.txt")]) == 1

    def test_run_and_compare(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json")
        assert main(["run", str(cfg), "-o", str(tmp_path / "a")]) == 0
        assert main(["compare", str(tmp_path / "a"), str(tmp_path / "a"), "-o", str(tmp_path / "h.csv")]) == 0
        assert "fraction of nESS ratios > 1: 0.000" in capsys.readouterr().out

    def test_config_errors_exit_one(self, tmp_path):
        assert main(["run", str(tmp_path / "none.json"), "-o", str(tmp_path / "o")]) == 1
        bad = write_config(tmp_path / "c.json", mystery=1)
        assert main(["run", str(bad), "-o", str(tmp_path / "o")]) == 1

    def test_unreadable_model_exits_one(self, tmp_path):
        m = tmp_path / "m.txt"
        main(["generate-model", "--preset", "desk", "-o", str(m)])
        obs = tmp_path / "o.txt"
        main(["generate-data", "--model", str(m), "-o", str(obs)])
        broken = tmp_path / "broken.txt"
        broken.write_text(m.read_text().replace("[wells]", "[well]"))
        cfg = write_config(tmp_path / "c.json", target="reservoir-full-a", target_options={
            "model_file": str(broken), "obs_file": str(obs)}, n_samples=5)
        assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == 1

    def test_runtime_error_exits_two(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", target="custom",
                           target_options={"factory": "test_harness:failing_target"})
        assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == 2

    def test_check_quick(self, capsys):
        assert main(["check", "adjoint", "--quick"]) == 0
        assert "PASS" in capsys.readouterr().out
