"""Experiment configuration: JSON loading, schema validation, defaults.

Configs are plain JSON.  Unknown keys are rejected with the offending path,
the seed is mandatory, and every unset field is filled with the defaults of
the chosen experiment and objective (the published training settings where
they exist, desk-scale sizes otherwise).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError

__all__ = ["ExperimentConfig", "load_config", "config_from_dict", "config_hash"]

EXPERIMENTS = ("gauss", "quad", "draw")
OBJECTIVES = ("gensim", "supervised", "simclr")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    objective: str
    seed: int
    out_dir: str
    process: dict
    net: dict
    train: dict
    augment: dict
    data: dict
    paper_scale: bool = False
    vector_input: bool = False

    def resolved_dict(self, include_out_dir: bool = True) -> dict:
        d = {
            "experiment": self.experiment,
            "objective": self.objective,
            "seed": self.seed,
            "process": self.process,
            "net": self.net,
            "train": self.train,
            "augment": self.augment,
            "data": self.data,
            "paper_scale": self.paper_scale,
            "vector_input": self.vector_input,
        }
        if include_out_dir:
            d["out_dir"] = self.out_dir
        return d


def _gauss_defaults() -> dict:
    # Published two-Gaussian settings: lr 1e-5, hidden 32, batch 256,
    # 300 epochs, 10,000 triplets.
    return {
        "process": {"means": [[5.0, 5.0], [1.0, 1.0]], "variance": 1.0},
        "net": {"hidden": 32, "embed_dim": 1},
        "train": {
            "learning_rate": 1e-5,
            "batch_size": 256,
            "epochs": 300,
            "optimizer": "adam",
        },
        "augment": {},
        "data": {"n_triplets": 10000, "n_eval": 4000, "n_pairs_binned": 10000, "n_bins": 100},
    }


def _quad_defaults(objective: str, paper_scale: bool) -> dict:
    # Published quad settings: Adam, 13 epochs, lr 5e-4 for the similarity
    # objective and 5e-6 for supervised classification.  Desk scale shrinks
    # the net and dataset; paper scale restores dataset sizes only (the
    # reference architecture is out of reach without pretraining).
    lr = {"gensim": 5e-4, "supervised": 5e-6, "simclr": 5e-4}[objective]
    return {
        "process": {"raster_size": 64},
        "net": {"blocks": 3, "filters": 12, "embed_dim": 24},
        "train": {
            "learning_rate": lr,
            "batch_size": 64,
            "epochs": 13,
            "optimizer": "adam",
        },
        "augment": {
            "crop_scale_range": [0.6, 1.0],
            "flip_prob": 0.5,
            "blur_sigma_range": [0.0, 1.0],
        },
        "data": {
            "n_exemplars_per_category": 40 if paper_scale else 15,
            "n_transforms": 6 if paper_scale else 4,
            "n_pairs_per_epoch": 4000 if paper_scale else 1500,
            "n_trials_per_category": 50 if paper_scale else 40,
        },
    }


def _draw_defaults(objective: str, paper_scale: bool) -> dict:
    # Published drawing settings: Adam, lr 1e-3, batch 128, 128x128 rasters,
    # 20,000 train and 800 test programs per grammar.  Desk scale: 64x64,
    # 2,000 train and 400 test per grammar, small conv net.
    return {
        "process": {
            "styles": ["greek", "celtic"],
            "depth_cap": 6,
            "raster_size": 128 if paper_scale else 64,
        },
        "net": {
            "blocks": 6 if paper_scale else 3,
            "filters": 64 if paper_scale else 12,
            "embed_dim": 256 if paper_scale else 32,
        },
        "train": {
            "learning_rate": 1e-3,
            "batch_size": 128,
            "epochs": 5,
            "optimizer": "adam",
        },
        "augment": {
            "crop_scale_range": [0.6, 1.0],
            "flip_prob": 0.5,
            "blur_sigma_range": [0.0, 1.0],
        },
        "data": {
            "n_train_per_grammar": 20000 if paper_scale else 2000,
            "n_test_per_grammar": 800 if paper_scale else 400,
            "infonce_temperature": 0.5,
        },
    }


_SECTION_KEYS = {
    "gauss": {
        "process": {"means", "variance", "weights"},
        "net": {"hidden", "embed_dim"},
        "data": {"n_triplets", "n_eval", "n_pairs_binned", "n_bins"},
    },
    "quad": {
        "process": {"raster_size"},
        "net": {"blocks", "filters", "embed_dim"},
        "data": {
            "n_exemplars_per_category",
            "n_transforms",
            "n_pairs_per_epoch",
            "n_trials_per_category",
        },
    },
    "draw": {
        "process": {"styles", "depth_cap", "raster_size"},
        "net": {"blocks", "filters", "embed_dim"},
        "data": {"n_train_per_grammar", "n_test_per_grammar", "infonce_temperature"},
    },
}
_TRAIN_KEYS = {
    "learning_rate",
    "batch_size",
    "epochs",
    "optimizer",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
}
_AUGMENT_KEYS = {"crop_scale_range", "flip_prob", "blur_sigma_range"}
_TOP_KEYS = {
    "experiment",
    "objective",
    "seed",
    "out_dir",
    "process",
    "net",
    "train",
    "augment",
    "data",
    "paper_scale",
    "vector_input",
}


def _reject_unknown(given: dict, allowed: set, path: str) -> None:
    for key in given:
        if key not in allowed:
            raise ConfigError(f"unknown config key {path}{key!r}")


def _merge_section(defaults: dict, given: Any, allowed: set, path: str) -> dict:
    if given is None:
        return dict(defaults)
    if not isinstance(given, dict):
        raise ConfigError(f"config section {path.rstrip('.')} must be an object")
    _reject_unknown(given, allowed, path)
    merged = dict(defaults)
    merged.update(given)
    return merged


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a raw config mapping: types, unknown keys, cross-field rules."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "")
    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"field 'experiment' must be one of {EXPERIMENTS}, got {experiment!r}")
    if "seed" not in raw:
        raise ConfigError("field 'seed' is mandatory")
    seed = raw["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"field 'seed' must be an integer, got {seed!r}")
    objective = raw.get("objective", "gensim")
    if objective not in OBJECTIVES:
        raise ConfigError(f"field 'objective' must be one of {OBJECTIVES}, got {objective!r}")
    if experiment == "gauss" and objective != "gensim":
        raise ConfigError("the gauss experiment supports only the gensim objective")
    paper_scale = bool(raw.get("paper_scale", False))
    vector_input = bool(raw.get("vector_input", False))
    if vector_input and experiment != "quad":
        raise ConfigError("vector_input applies only to the quad experiment")

    if experiment == "gauss":
        defaults = _gauss_defaults()
    elif experiment == "quad":
        defaults = _quad_defaults(objective, paper_scale)
    else:
        defaults = _draw_defaults(objective, paper_scale)

    sections = _SECTION_KEYS[experiment]
    process = _merge_section(defaults["process"], raw.get("process"), sections["process"], "process.")
    net = _merge_section(defaults["net"], raw.get("net"), sections["net"], "net.")
    train = _merge_section(defaults["train"], raw.get("train"), _TRAIN_KEYS, "train.")
    augment = _merge_section(defaults["augment"], raw.get("augment"), _AUGMENT_KEYS, "augment.")
    data = _merge_section(defaults["data"], raw.get("data"), sections["data"], "data.")

    if train["optimizer"] not in ("sgd", "adam"):
        raise ConfigError(f"train.optimizer must be 'sgd' or 'adam', got {train['optimizer']!r}")
    for key in ("learning_rate",):
        if not isinstance(train[key], (int, float)) or not train[key] > 0:
            raise ConfigError(f"train.{key} must be a positive number")
    for key in ("batch_size", "epochs"):
        if not isinstance(train[key], int) or train[key] < 0 or (key == "batch_size" and train[key] < 1):
            raise ConfigError(f"train.{key} must be a nonnegative integer")

    out_dir = raw.get("out_dir", f"runs/{experiment}-{objective}-seed{seed}")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("out_dir must be a nonempty string")
    return ExperimentConfig(
        experiment=experiment,
        objective=objective,
        seed=seed,
        out_dir=out_dir,
        process=process,
        net=net,
        train=train,
        augment=augment,
        data=data,
        paper_scale=paper_scale,
        vector_input=vector_input,
    )


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config parse error in {path} at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return config_from_dict(raw)


def canonical_json(obj: Any) -> str:
    """Deterministic JSON: sorted keys, 9 significant digits for floats."""

    def render(x: Any) -> str:
        if isinstance(x, dict):
            items = sorted(x.items())
            return "{" + ",".join(f"{json.dumps(str(k))}:{render(v)}" for k, v in items) + "}"
        if isinstance(x, (list, tuple)):
            return "[" + ",".join(render(v) for v in x) + "]"
        if isinstance(x, bool) or x is None:
            return json.dumps(x)
        if isinstance(x, int):
            return str(x)
        if isinstance(x, float):
            if x != x or x in (float("inf"), float("-inf")):
                return json.dumps(str(x))
            return f"{x:.9g}"
        return json.dumps(x)

    return render(obj)


def config_hash(config: ExperimentConfig) -> str:
    """Stable hash of the resolved config (output directory excluded)."""
    blob = canonical_json(config.resolved_dict(include_out_dir=False))
    return hashlib.sha256(blob.encode("ascii")).hexdigest()
