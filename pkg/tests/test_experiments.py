"""Experiment pipeline integration at toy sizes (fast paths of each stage)."""

import json

import numpy as np
import pytest

from genscl import experiments, quads
from genscl.config import config_from_dict
from genscl.errors import ConfigError


def quad_config(tmp_path, objective="gensim", seed=1, vector_input=False, **train_extra):
    train = {"learning_rate": 1e-3, "batch_size": 32, "epochs": 2}
    train.update(train_extra)
    return config_from_dict(
        {
            "experiment": "quad",
            "objective": objective,
            "seed": seed,
            "vector_input": vector_input,
            "out_dir": str(tmp_path / f"quad-{objective}"),
            "process": {"raster_size": 32},
            "net": {"blocks": 2, "filters": 4, "embed_dim": 8},
            "train": train,
            "data": {
                "n_exemplars_per_category": 3,
                "n_transforms": 2,
                "n_pairs_per_epoch": 120,
                "n_trials_per_category": 3,
            },
        }
    )


def draw_config(tmp_path, objective="gensim", seed=2):
    return config_from_dict(
        {
            "experiment": "draw",
            "objective": objective,
            "seed": seed,
            "out_dir": str(tmp_path / f"draw-{objective}"),
            "process": {"raster_size": 32, "depth_cap": 4},
            "net": {"blocks": 2, "filters": 4, "embed_dim": 8},
            "train": {"learning_rate": 1e-3, "batch_size": 16, "epochs": 1},
            "data": {"n_train_per_grammar": 30, "n_test_per_grammar": 15},
        }
    )


class TestQuadPipeline:
    def test_gensim_objective_end_to_end(self, tmp_path):
        config = quad_config(tmp_path)
        metrics = experiments.run_experiment(config)
        assert set(metrics["error_rates"]) == set(quads.CATEGORY_NAMES)
        assert all(0.0 <= v <= 1.0 for v in metrics["error_rates"].values())
        assert -1.0 <= metrics["rho_error_vs_irregularity"] <= 1.0
        out = tmp_path / "quad-gensim"
        assert (out / "trials.jsonl").exists()
        rows = [json.loads(l) for l in (out / "trials.jsonl").read_text().splitlines()]
        assert {r["category"] for r in rows} == set(quads.CATEGORY_NAMES)
        assert all(0 <= r["oddball_index"] < 6 and "seed" in r for r in rows)

    def test_supervised_objective(self, tmp_path):
        config = quad_config(tmp_path, objective="supervised")
        metrics = experiments.run_experiment(config)
        assert "rho_error_vs_irregularity" in metrics
        assert (tmp_path / "quad-supervised" / "checkpoints" / "final.ckpt").exists()

    def test_simclr_objective(self, tmp_path):
        config = quad_config(tmp_path, objective="simclr")
        metrics = experiments.run_experiment(config)
        assert "rho_error_vs_irregularity" in metrics

    def test_vector_input_mode(self, tmp_path):
        config = quad_config(tmp_path, vector_input=True)
        metrics = experiments.run_experiment(config)
        assert "rho_error_vs_irregularity" in metrics

    def test_shared_data_across_objectives(self, tmp_path):
        # Controlled-comparison contract: with one seed, all objectives see
        # the same training pool and the same trials.
        a = experiments.gen_data(quad_config(tmp_path, objective="gensim"))
        b = experiments.gen_data(quad_config(tmp_path, objective="supervised"))
        assert np.array_equal(a["inputs"], b["inputs"])
        assert [t.oddball_index for t in a["trials"]] == [t.oddball_index for t in b["trials"]]


class TestDrawPipeline:
    def test_gensim_end_to_end(self, tmp_path):
        config = draw_config(tmp_path)
        metrics = experiments.run_experiment(config)
        assert 0.0 <= metrics["style_accuracy_mean"] <= 1.0
        assert len(metrics["style_accuracy_folds"]) == 5
        assert (tmp_path / "draw-gensim" / "pca_coords.csv").exists()

    def test_dataset_cache_reused(self, tmp_path, monkeypatch):
        cache = tmp_path / "shared_cache"
        monkeypatch.setenv("GENSIM_CACHE_DIR", str(cache))
        config = draw_config(tmp_path)
        experiments.gen_data(config)
        manifests = list(cache.rglob("manifest.jsonl"))
        assert len(manifests) == 1
        stamp = manifests[0].stat().st_mtime_ns
        experiments.gen_data(config)  # second call loads, does not regenerate
        assert manifests[0].stat().st_mtime_ns == stamp
        # Objective does not affect the dataset key; simclr shares the cache.
        experiments.gen_data(draw_config(tmp_path, objective="simclr"))
        assert len(list(cache.rglob("manifest.jsonl"))) == 1

    def test_manifest_schema(self, tmp_path, monkeypatch):
        cache = tmp_path / "cache2"
        monkeypatch.setenv("GENSIM_CACHE_DIR", str(cache))
        experiments.gen_data(draw_config(tmp_path, seed=5))
        manifest = next(cache.rglob("manifest.jsonl"))
        rows = [json.loads(l) for l in manifest.read_text().splitlines()]
        assert {"program", "style_label", "motor_count", "control_count", "seed", "raster_path"} <= set(
            rows[0]
        )
        from genscl import drawing

        prog = drawing.parse_sexpr(rows[0]["program"])
        motor, control = drawing.count_primitives(prog)
        assert (motor, control) == (rows[0]["motor_count"], rows[0]["control_count"])
        pgm = manifest.parent / rows[0]["raster_path"]
        assert pgm.exists()

    def test_no_blank_stimuli(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GENSIM_CACHE_DIR", str(tmp_path / "cache3"))
        data = experiments.gen_data(draw_config(tmp_path, seed=7))
        assert data["train"]["images"].sum(axis=(1, 2)).min() > 0


class TestStageError:
    def test_failure_names_stage_and_flags_manifest(self, tmp_path):
        config = quad_config(tmp_path, objective="gensim", learning_rate=float("nan"))
        with pytest.raises((experiments.StageError, ConfigError, ValueError)):
            experiments.run_experiment(config)
