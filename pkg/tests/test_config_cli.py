"""Config validation, canonical serialization, CLI plumbing, determinism."""

import json
import subprocess
import sys

import numpy as np
import pytest

from genscl import cli, experiments
from genscl.config import (
    canonical_json,
    config_from_dict,
    config_hash,
    load_config,
)
from genscl.errors import ConfigError


def minimal_gauss(seed=7, **extra):
    cfg = {"experiment": "gauss", "seed": seed}
    cfg.update(extra)
    return cfg


class TestConfigValidation:
    def test_gauss_defaults_fill_published_settings(self):
        cfg = config_from_dict(minimal_gauss())
        assert cfg.train["learning_rate"] == 1e-5
        assert cfg.net["hidden"] == 32
        assert cfg.train["batch_size"] == 256
        assert cfg.train["epochs"] == 300
        assert cfg.data["n_triplets"] == 10000

    def test_draw_defaults(self):
        cfg = config_from_dict({"experiment": "draw", "seed": 1})
        assert cfg.train["batch_size"] == 128
        assert cfg.train["learning_rate"] == 1e-3
        assert cfg.process["raster_size"] == 64
        paper = config_from_dict({"experiment": "draw", "seed": 1, "paper_scale": True})
        assert paper.process["raster_size"] == 128
        assert paper.data["n_train_per_grammar"] == 20000

    def test_quad_objective_learning_rates(self):
        gensim = config_from_dict({"experiment": "quad", "seed": 0})
        sup = config_from_dict({"experiment": "quad", "seed": 0, "objective": "supervised"})
        assert gensim.train["learning_rate"] == 5e-4
        assert sup.train["learning_rate"] == 5e-6

    def test_unknown_key_rejected_with_name(self):
        with pytest.raises(ConfigError, match="learningrate"):
            config_from_dict(minimal_gauss(train={"learningrate": 1e-3}))

    def test_unknown_top_key(self):
        with pytest.raises(ConfigError, match="optimiser"):
            config_from_dict(minimal_gauss(optimiser="adam"))

    def test_seed_mandatory(self):
        with pytest.raises(ConfigError, match="seed"):
            config_from_dict({"experiment": "gauss"})

    def test_gauss_restricted_to_gensim(self):
        with pytest.raises(ConfigError):
            config_from_dict(minimal_gauss(objective="simclr"))

    def test_vector_input_quad_only(self):
        with pytest.raises(ConfigError):
            config_from_dict(minimal_gauss(vector_input=True))

    def test_parse_error_carries_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n "experiment": "gauss",\n broken\n}')
        with pytest.raises(ConfigError, match="line 3"):
            load_config(path)

    def test_load_roundtrip(self, tmp_path):
        path = tmp_path / "ok.json"
        path.write_text(json.dumps(minimal_gauss()))
        cfg = load_config(path)
        assert cfg.experiment == "gauss" and cfg.seed == 7


class TestCanonicalJson:
    def test_sorted_keys_and_float_format(self):
        s = canonical_json({"b": 0.1 + 0.2, "a": 1})
        assert s == '{"a":1,"b":0.3}'

    def test_nine_significant_digits(self):
        assert canonical_json(1.2345678949) == "1.23456789"

    def test_reserialization_stable(self):
        obj = {"x": [1.5, 2.25], "y": {"k": True, "j": None}}
        once = canonical_json(obj)
        again = canonical_json(json.loads(once))
        assert once == again

    def test_hash_ignores_out_dir(self):
        a = config_from_dict(minimal_gauss(out_dir="runs/a"))
        b = config_from_dict(minimal_gauss(out_dir="runs/b"))
        assert config_hash(a) == config_hash(b)
        c = config_from_dict(minimal_gauss(seed=8))
        assert config_hash(a) != config_hash(c)


def tiny_gauss_config(tmp_path, seed=3):
    cfg = {
        "experiment": "gauss",
        "seed": seed,
        "out_dir": str(tmp_path / "out"),
        "process": {"means": [[2.5, 2.5], [-2.5, -2.5]], "variance": 1.0},
        "net": {"hidden": 8, "embed_dim": 1},
        "train": {"learning_rate": 1e-3, "batch_size": 128, "epochs": 8},
        "data": {"n_triplets": 600, "n_eval": 500, "n_pairs_binned": 800, "n_bins": 20},
    }
    path = tmp_path / "gauss.json"
    path.write_text(json.dumps(cfg))
    return path


class TestRunExperiment:
    def test_gauss_end_to_end_artifacts(self, tmp_path):
        path = tiny_gauss_config(tmp_path)
        config = load_config(path)
        metrics = experiments.run_experiment(config)
        out = tmp_path / "out"
        assert (out / "eval.json").exists()
        assert (out / "epochs.csv").exists()
        assert (out / "manifest.json").exists()
        assert (out / "binned_gen_sim.csv").exists()
        assert (out / "checkpoints" / "epoch_0007.ckpt").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["partial"] is False
        assert manifest["config_hash"] == config_hash(config)
        assert metrics["accuracy"] >= 0.9  # well-separated two-Gaussian toy task

    def test_rerun_byte_identical(self, tmp_path):
        path = tiny_gauss_config(tmp_path)
        config = load_config(path)
        experiments.run_experiment(config)
        first = (tmp_path / "out" / "eval.json").read_bytes()
        experiments.run_experiment(config)
        second = (tmp_path / "out" / "eval.json").read_bytes()
        assert first == second

    def test_report_includes_config_hash(self, tmp_path):
        path = tiny_gauss_config(tmp_path, seed=5)
        config = load_config(path)
        metrics = experiments.run_experiment(config)
        report = json.loads((tmp_path / "out" / "eval.json").read_text())
        assert report["config_hash"] == config_hash(config)
        assert metrics["config_hash"] == config_hash(config)

    def test_write_report_empty(self, tmp_path):
        path = experiments.write_report({}, tmp_path)
        assert path.read_text() == "{}\n"


class TestCli:
    def test_gradcheck_exit_zero(self, capsys):
        code = cli.main(["gradcheck", "--seed", "0"])
        out = capsys.readouterr().out
        assert code == 0
        assert "FAIL" not in out

    def test_config_error_exit_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"experiment": "gauss"}')
        code = cli.main(["run", "--config", str(bad)])
        assert code == 2
        assert "seed" in capsys.readouterr().err

    def test_run_gauss_cli(self, tmp_path, capsys):
        path = tiny_gauss_config(tmp_path)
        code = cli.main(["run", "--config", str(path)])
        assert code == 0
        assert (tmp_path / "out" / "eval.json").exists()

    def test_seed_and_out_overrides(self, tmp_path):
        path = tiny_gauss_config(tmp_path)
        out2 = tmp_path / "elsewhere"
        code = cli.main(["eval", "--config", str(path), "--seed", "11", "--out", str(out2)])
        assert code == 0
        report = json.loads((out2 / "eval.json").read_text())
        assert report["seed"] == 11

    def test_probe_subcommand(self, tmp_path):
        path = tiny_gauss_config(tmp_path)
        assert cli.main(["train", "--config", str(path)]) == 0
        ckpt = tmp_path / "out" / "checkpoints" / "epoch_0007.ckpt"
        out2 = tmp_path / "probe_out"
        code = cli.main(
            ["probe", "--config", str(path), "--checkpoint", str(ckpt), "--out", str(out2)]
        )
        assert code == 0
        assert (out2 / "eval.json").exists()

    def test_console_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "genscl.cli", "--version"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "genscl" in proc.stdout
