import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from proposal_programs import cli, linreg
from proposal_programs.trainer import load_checkpoint

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_config(tmp_path, name="cfg.json", **sections):
    cfg = {"seed": 7, "dataset": {"N": 20}, "output": {"dir": str(tmp_path / "out")}}
    for key, val in sections.items():
        if isinstance(val, dict):
            cfg.setdefault(key, {}).update(val)
        else:
            cfg[key] = val
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


class TestConfig:
    @pytest.mark.parametrize("name", ["desk_scale.json", "paper_scale.json"])
    def test_committed_configs_validate(self, name):
        cfg = cli.load_config(CONFIGS / name)
        assert cfg["training"]["M"] == 8 and cfg["inference"]["N_particles"] == 6

    def test_full_scale_values(self):
        tr = cli.load_config(CONFIGS / "paper_scale.json")["training"]
        assert (tr["K"], tr["M"], tr["iterations"]) == (100, 8, 3000)

    @pytest.mark.parametrize(
        "bad",
        [
            {"dataset": {"N": 1}},
            {"dataset": {"bogus": 1}},
            {"mystery": 0},
            {"training": {"K": 1}},
            {"training": {"optimizer": "rmsprop"}},
            {"training": {"adam": {"beta1": 1.0}}},
            {"proposal": {"kind": "prior"}},
            {"inference": {"N_particles": 0}},
            {"inference": {"target_scale": -1.0}},
            {"seed": 1.5},
        ],
    )
    def test_rejected(self, bad):
        with pytest.raises(cli.ConfigError):
            cli.validate_config(bad)

    def test_hash_depends_on_content(self):
        a = cli.validate_config({"seed": 1})
        b = cli.validate_config({"seed": 2})
        assert cli.config_hash(a) != cli.config_hash(b) and cli.config_hash(a) == cli.config_hash(dict(a))

    def test_thread_cap(self):
        assert cli.thread_cap({}) is None
        assert cli.thread_cap({cli.THREADS_ENV: "3"}) == 3
        for bad in ("0", "-2", "many"):
            with pytest.raises(cli.ConfigError):
                cli.thread_cap({cli.THREADS_ENV: bad})

    def test_bad_thread_env_exit_code(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.THREADS_ENV, "zero")
        assert run("generate-data", "--config", write_config(tmp_path)) == cli.EXIT_VALIDATION


class TestGenerateData:
    def test_rows_and_determinism(self, tmp_path):
        cfg = write_config(tmp_path)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run("generate-data", "--config", cfg, "--out", a) == 0
        assert run("generate-data", "--config", cfg, "--out", b) == 0
        lines = a.read_text().splitlines()
        assert lines[0].startswith("# config_hash=") and lines[1] == "x,y" and len(lines) == 22
        assert a.read_bytes() == b.read_bytes()
        la, lb = (p.with_name(p.stem + ".latents.json") for p in (a, b))
        assert la.read_bytes() == lb.read_bytes()
        assert len(json.loads(la.read_text())["latents"]["choices"]) == 22

    def test_small_N_rejected(self, tmp_path):
        assert run("generate-data", "--config", write_config(tmp_path, dataset={"N": 1})) == cli.EXIT_VALIDATION

    def test_unknown_key_rejected(self, tmp_path):
        assert run("generate-data", "--config", write_config(tmp_path, extra=1)) == cli.EXIT_VALIDATION

    def test_missing_config(self, tmp_path):
        assert run("generate-data", "--config", tmp_path / "nope.json") == cli.EXIT_RUNTIME

    def test_default_output_dir(self, tmp_path):
        assert run("generate-data", "--config", write_config(tmp_path)) == 0
        assert (tmp_path / "out" / "data.csv").exists()


class TestTrain:
    @pytest.mark.parametrize("kind", ["ransac_nn", "nn"])
    def test_zero_iterations_is_initialization(self, tmp_path, kind):
        cfg = write_config(tmp_path, proposal={"kind": kind}, training={"iterations": 0})
        out = tmp_path / "ck.json"
        assert run("train", "--config", cfg, "--out", out) == 0
        ck = load_checkpoint(out)
        init = linreg.init_params(kind, 20, seed=cli._int_seed(7))
        assert ck["iteration"] == 0 and ck["proposal_kind"] == kind and ck["N"] == 20
        assert all(np.array_equal(ck["params"][n], init[n]) for n in init)
        assert out.with_name("ck.objective.csv").read_text().splitlines() == [
            f"# config_hash={ck['config_hash']}",
            "iteration,mean_log_xi_hat",
        ]

    def test_short_run_deterministic(self, tmp_path):
        cfg = write_config(tmp_path, training={"iterations": 3, "K": 3, "M": 2})
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run("train", "--config", cfg, "--out", a) == 0
        assert run("train", "--config", cfg, "--out", b) == 0
        assert a.read_bytes() == b.read_bytes()
        assert a.with_name("a.objective.csv").read_bytes() == b.with_name("b.objective.csv").read_bytes()

    def test_full_scale_runnable(self, tmp_path):
        raw = json.loads((CONFIGS / "paper_scale.json").read_text())
        raw["training"]["iterations"] = 1
        raw["output"]["dir"] = str(tmp_path)
        cfg = tmp_path / "full.json"
        cfg.write_text(json.dumps(raw))
        assert run("train", "--config", cfg) == 0
        assert load_checkpoint(tmp_path / "checkpoint.json")["opt_state"].t == 1


@pytest.fixture
def dataset(tmp_path):
    cfg = write_config(tmp_path)
    path = tmp_path / "data.csv"
    assert run("generate-data", "--config", cfg, "--out", path) == 0
    return path


class TestInferIS:
    def test_prior_mode(self, tmp_path, dataset):
        cfg = write_config(tmp_path, inference={"use_prior_proposal": True})
        out = tmp_path / "s.json"
        assert run("infer-is", "--config", cfg, "--data", dataset, "--out", out) == 0
        res = json.loads(out.read_text())
        assert res["proposal_kind"] == "prior" and len(res["samples"]) == 6
        assert sum(s["normalized_weight"] for s in res["samples"]) == pytest.approx(1.0, abs=1e-12)
        assert all(len(s["outliers"]) == 20 for s in res["samples"])
        assert set(res["summary"]) == {"posterior_mean_slope", "posterior_mean_intercept"}
        diag = out.with_name("s.diagnostics.csv").read_text().splitlines()
        assert diag[0] == f"# config_hash={res['config_hash']}" and len(diag) == 8

    def test_rescaled_target_same_weights(self, tmp_path, dataset):
        outs = []
        for scale in (1.0, 10.0):
            cfg = write_config(tmp_path, f"c{scale}.json", inference={"use_prior_proposal": True, "target_scale": scale})
            out = tmp_path / f"s{scale}.json"
            assert run("infer-is", "--config", cfg, "--data", dataset, "--out", out) == 0
            outs.append([s["normalized_weight"] for s in json.loads(out.read_text())["samples"]])
        assert np.allclose(outs[0], outs[1], rtol=1e-12, atol=0)

    def test_with_checkpoint(self, tmp_path, dataset):
        cfg = write_config(tmp_path, training={"iterations": 2, "K": 2, "M": 1})
        ck = tmp_path / "ck.json"
        assert run("train", "--config", cfg, "--out", ck) == 0
        out = tmp_path / "s.json"
        assert run("infer-is", "--config", cfg, "--checkpoint", ck, "--data", dataset, "--out", out) == 0
        assert json.loads(out.read_text())["proposal_kind"] == "ransac_nn"

    def test_kind_mismatch(self, tmp_path, dataset):
        ck = tmp_path / "ck.json"
        assert run("train", "--config", write_config(tmp_path, training={"iterations": 0}), "--out", ck) == 0
        other = write_config(tmp_path, "nn.json", proposal={"kind": "nn"})
        assert run("infer-is", "--config", other, "--checkpoint", ck, "--data", dataset) == cli.EXIT_VALIDATION

    def test_missing_checkpoint(self, tmp_path, dataset):
        assert run("infer-is", "--config", write_config(tmp_path), "--data", dataset) == cli.EXIT_VALIDATION


class TestOracleCheck:
    def test_single_suite(self, capsys):
        assert run("oracle-check", "--suite", "appendix-a1") == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith(("PASS", "FAIL"))]
        assert lines and all("appendix-a1" in l for l in lines)

    def test_corrupted_fixture(self, tmp_path, capsys):
        fixtures_dir = tmp_path / "fixtures"
        shutil.copytree(cli.DEFAULT_FIXTURES_DIR, fixtures_dir)
        victim = sorted(fixtures_dir.glob("coin-pair__*.json"))[0]
        rec = json.loads(victim.read_text())
        rec["exact_marginal"] += 0.01
        victim.write_text(json.dumps(rec))
        assert run("oracle-check", "--suite", "fixtures", "--fixtures-dir", fixtures_dir) == cli.EXIT_CHECK
        out = capsys.readouterr()
        assert "FAIL" in out.out and "coin-pair" in out.err

    def test_full_suite_passes(self):
        assert run("oracle-check", "--suite", "all") == 0


class TestMHDemo:
    def test_writes_outputs(self, tmp_path, capsys):
        out = tmp_path / "mh.csv"
        assert run("mh-demo", "--fixture", "four-state", "--steps", 5000, "--K", 2, "--seed", 3, "--out", out) == 0
        summary = json.loads(out.with_name("mh.summary.json").read_text())
        assert summary["steps"] == 5000 and len(summary["exact"]) == 4
        assert sum(summary["empirical"]) == pytest.approx(1.0)
        lines = out.read_text().splitlines()
        assert lines[0] == f"# config_hash={summary['config_hash']}" and len(lines) == 5002
        assert json.loads(capsys.readouterr().out) == summary

    def test_bad_steps(self):
        assert run("mh-demo", "--steps", 0) == cli.EXIT_VALIDATION


def test_unknown_command():
    assert run("frobnicate") == cli.EXIT_VALIDATION
