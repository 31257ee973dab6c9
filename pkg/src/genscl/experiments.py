"""End-to-end experiment pipelines: dataset generation (with on-disk cache),
training per objective, evaluation, and deterministic report emission.

Three experiments are wired here.  ``gauss`` trains the small perceptron on
mixture triplets and reports threshold accuracy, the binned similarity-vs-
distance curve, and same/different pair separation.  ``quad`` trains the
small conv net on quadrilateral rasters under one of three objectives
(feature-distance regression, 11-way supervised classification, or the
augmentation-contrastive baseline) and reports per-category oddball error
rates with their regularity correlation.  ``draw`` trains on grammar-sampled
drawings (triplet contrast vs. the augmentation baseline) and reports style
and primitive-count probes plus a 2-component PCA projection.

All randomness is derived from the config seed, so a rerun with the same
config writes byte-identical metric files.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from . import __version__, core, drawing, evaluation, gaussian, nets, quads, raster, training
from .config import ExperimentConfig, canonical_json, config_hash
from .errors import GensclError
from .nets import EmbeddingNet, NetSpec, ParamVector

__all__ = [
    "run_experiment",
    "write_report",
    "StageError",
    "cache_root",
    "gen_data",
    "train_model",
    "evaluate_model",
]

# Desk-scale transform ranges for quadrilateral stimuli: modest size changes,
# bounded orientation jitter.  Full-circle rotation needs far more training
# than 13 epochs from scratch can deliver.
QUAD_SCALE_RANGE = (0.85, 1.15)
QUAD_ROTATION_RANGE = (-0.5, 0.5)

_QUAD_COMPUTE_DTYPE = "float32"


class StageError(GensclError):
    """Wraps a failure with the pipeline stage it occurred in."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


def cache_root(config: ExperimentConfig) -> Path:
    env = os.environ.get("GENSIM_CACHE_DIR")
    return Path(env) if env else Path(config.out_dir) / "cache"


def _dataset_key(config: ExperimentConfig) -> str:
    payload = {
        "experiment": config.experiment,
        "seed": config.seed,
        "process": config.process,
        "data": config.data,
        "paper_scale": config.paper_scale,
        "vector_input": config.vector_input,
        "format": 1,
    }
    return hashlib.sha256(canonical_json(payload).encode("ascii")).hexdigest()[:16]


def _net_spec(config: ExperimentConfig) -> NetSpec:
    if config.experiment == "gauss":
        means = np.asarray(config.process["means"], dtype=float)
        return NetSpec.mlp(
            (means.shape[1], int(config.net["hidden"]), int(config.net["embed_dim"]))
        )
    if config.experiment == "quad" and config.vector_input:
        return NetSpec.mlp((8, 64, 64, int(config.net["embed_dim"])))
    return NetSpec.conv(
        input_side=int(config.process["raster_size"]),
        blocks=int(config.net["blocks"]),
        filters=int(config.net["filters"]),
        embed_dim=int(config.net["embed_dim"]),
    )


def _train_config(config: ExperimentConfig, loss, dtype: str = "float64") -> training.TrainConfig:
    return training.TrainConfig(
        loss=loss,
        learning_rate=float(config.train["learning_rate"]),
        batch_size=int(config.train["batch_size"]),
        epochs=int(config.train["epochs"]),
        seed=config.seed,
        optimizer=config.train["optimizer"],
        adam_beta1=float(config.train.get("adam_beta1", 0.9)),
        adam_beta2=float(config.train.get("adam_beta2", 0.999)),
        adam_eps=float(config.train.get("adam_eps", 1e-8)),
        compute_dtype=dtype,
    )


def _augment_spec(config: ExperimentConfig) -> training.AugmentSpec:
    a = config.augment
    return training.AugmentSpec(
        crop_scale_range=tuple(a["crop_scale_range"]),
        flip_prob=float(a["flip_prob"]),
        blur_sigma_range=tuple(a["blur_sigma_range"]),
    )


# ---------------------------------------------------------------------------
# gauss experiment
# ---------------------------------------------------------------------------


def _gauss_mixture(config: ExperimentConfig) -> gaussian.GaussianMixture:
    weights = config.process.get("weights")
    return gaussian.GaussianMixture(
        means=np.asarray(config.process["means"], dtype=float),
        variance=float(config.process["variance"]),
        weights=None if weights is None else np.asarray(weights, dtype=float),
    )


def _gauss_gen(config: ExperimentConfig) -> dict:
    mix = _gauss_mixture(config)
    process = gaussian.as_process(mix)
    data_seed = np.random.SeedSequence(config.seed).spawn(4)[0]
    trips = core.sample_triplet_batch(
        process, np.random.default_rng(data_seed), int(config.data["n_triplets"])
    )
    return {
        "mix": mix,
        "process": process,
        "anchors": np.stack([t.anchor for t in trips]),
        "positives": np.stack([t.positive for t in trips]),
        "negatives": np.stack([t.negative for t in trips]),
    }


def _gauss_train(config: ExperimentConfig, data: dict, out: Path):
    src = training.TripletSource(data["anchors"], data["positives"], data["negatives"])
    spec = _net_spec(config)
    cfg = _train_config(config, training.QuadraticTriplet())
    ckpt = out / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)
    result = training.train_run(spec, cfg, src, checkpoint_dir=str(ckpt))
    training.write_epoch_csv(result.log, out / "epochs.csv")
    return spec, result.params


def _gauss_eval(config: ExperimentConfig, data: dict, spec, params, out: Path) -> dict:
    mix: gaussian.GaussianMixture = data["mix"]
    net = EmbeddingNet(spec, params)
    _, eval_seed, pair_seed, sep_seed = np.random.SeedSequence(config.seed).spawn(4)
    erng = np.random.default_rng(eval_seed)
    n_eval = int(config.data["n_eval"])

    def draw_labeled(n):
        labels = erng.integers(0, mix.n_components, n)
        points = mix.means[labels] + mix.sigma * erng.standard_normal((n, mix.dim))
        return labels, points

    fit_labels, fit_points = draw_labeled(n_eval)
    test_labels, test_points = draw_labeled(n_eval)
    emb_fit = net.embed_batch(fit_points)[:, 0]
    emb_test = net.embed_batch(test_points)[:, 0]
    m0 = float(np.mean(emb_fit[fit_labels == 0]))
    m1 = float(np.mean(emb_fit[fit_labels == 1]))
    threshold = 0.5 * (m0 + m1)
    predicted = (emb_test > threshold) if m1 > m0 else (emb_test <= threshold)
    accuracy = float(np.mean(predicted.astype(int) == test_labels))

    # Binned mean log-odds vs. embedding distance over random pairs.
    prng = np.random.default_rng(pair_seed)
    n_pairs = int(config.data["n_pairs_binned"])
    n_bins = int(config.data["n_bins"])
    lab1 = prng.integers(0, mix.n_components, n_pairs)
    lab2 = prng.integers(0, mix.n_components, n_pairs)
    x1 = mix.means[lab1] + mix.sigma * prng.standard_normal((n_pairs, mix.dim))
    x2 = mix.means[lab2] + mix.sigma * prng.standard_normal((n_pairs, mix.dim))
    sims = np.array([gaussian.closed_form_log_gen_sim(mix, a, b) for a, b in zip(x1, x2)])
    dists = np.abs(net.embed_batch(x1)[:, 0] - net.embed_batch(x2)[:, 0])
    edges = np.quantile(dists, np.linspace(0.0, 1.0, n_bins + 1))
    bin_idx = np.clip(np.searchsorted(edges, dists, side="right") - 1, 0, n_bins - 1)
    bin_dist = np.array([dists[bin_idx == b].mean() for b in range(n_bins)])
    bin_sim = np.array([sims[bin_idx == b].mean() for b in range(n_bins)])
    rho, p_value = evaluation.spearman_rho(bin_dist, bin_sim)
    with open(out / "binned_gen_sim.csv", "w", encoding="ascii") as fh:
        fh.write("bin,mean_embedding_distance,mean_log_gen_sim\n")
        for b in range(n_bins):
            fh.write(f"{b},{bin_dist[b]:.9g},{bin_sim[b]:.9g}\n")

    stats = core.expected_pair_distances(
        net, data["process"], np.random.default_rng(sep_seed), n_eval
    )
    return {
        "accuracy": accuracy,
        "binned_spearman_rho": rho,
        "binned_spearman_p": p_value,
        "mean_same": stats.mean_same,
        "mean_diff": stats.mean_diff,
        "ci_same": list(stats.ci_same),
        "ci_diff": list(stats.ci_diff),
    }


# ---------------------------------------------------------------------------
# quad experiment
# ---------------------------------------------------------------------------


def _perturb_vertex(quad: quads.Quadrilateral, rng: np.random.Generator) -> quads.Quadrilateral:
    """Oddball-style displacement of the lowest-rightmost vertex (any outcome)."""
    arr = quad.as_array()
    diag = quad.bbox_diagonal()
    idx = min(range(4), key=lambda i: (arr[i, 1], -arr[i, 0]))
    for _ in range(64):
        mag = rng.uniform(0.05, 0.25) * diag
        ang = rng.uniform(0.0, 2.0 * math.pi)
        verts = [list(v) for v in quad.vertices]
        verts[idx][0] += mag * math.cos(ang)
        verts[idx][1] += mag * math.sin(ang)
        try:
            return quads.Quadrilateral(tuple(map(tuple, verts)))
        except ValueError:
            continue
    return quad


def _quad_input(item: quads.Quadrilateral, config: ExperimentConfig) -> np.ndarray:
    if config.vector_input:
        return item.as_array().reshape(-1)
    return quads.rasterize_quad(item, int(config.process["raster_size"]))


def _quad_gen(config: ExperimentConfig) -> dict:
    """Training pool (exemplars + perturbed variants, several transforms each)
    plus held-out oddball trials from a disjoint seed branch."""
    master = np.random.SeedSequence(config.seed)
    data_seed, trial_seed = master.spawn(2)
    rng = np.random.default_rng(data_seed)
    n_ex = int(config.data["n_exemplars_per_category"])
    n_tr = int(config.data["n_transforms"])

    inputs, feats, labels, kinds = [], [], [], []
    for ci, name in enumerate(quads.CATEGORY_NAMES):
        for _ in range(n_ex):
            exemplar = quads.generate_exemplar(name, rng)
            for shape, kind in ((exemplar, 0), (_perturb_vertex(exemplar, rng), 1)):
                f = quads.extract_features(shape).to_array()
                for _ in range(n_tr):
                    t = quads.apply_transform(
                        shape, rng.uniform(*QUAD_SCALE_RANGE), rng.uniform(*QUAD_ROTATION_RANGE)
                    )
                    inputs.append(_quad_input(t, config))
                    feats.append(f)
                    labels.append(ci)
                    kinds.append(kind)

    n_trials = int(config.data["n_trials_per_category"])
    trial_children = trial_seed.spawn(len(quads.CATEGORY_NAMES) * n_trials)
    trials = []
    trial_records = []
    k = 0
    for name in quads.CATEGORY_NAMES:
        for _ in range(n_trials):
            child = trial_children[k]
            trial = quads.make_oddball_trial(
                name,
                np.random.default_rng(child),
                scale_range=QUAD_SCALE_RANGE,
                rotation_range=QUAD_ROTATION_RANGE,
            )
            trials.append(trial)
            trial_records.append(
                {
                    "category": name,
                    "oddball_index": trial.oddball_index,
                    "seed": int(child.generate_state(1)[0]),
                }
            )
            k += 1
    return {
        "inputs": np.stack(inputs),
        "features": np.stack(feats),
        "labels": np.array(labels),
        "kinds": np.array(kinds),
        "trials": trials,
        "trial_records": trial_records,
    }


def _quad_pair_indices(config: ExperimentConfig, labels, kinds, n_pairs, rng):
    """Pair mix: 40% same-category, 30% exemplar-vs-perturbation, 30% free."""
    n = len(labels)
    i1 = np.empty(n_pairs, dtype=int)
    i2 = np.empty(n_pairs, dtype=int)
    n_same = int(0.4 * n_pairs)
    n_pert = int(0.3 * n_pairs)
    for j in range(n_same):
        c = rng.integers(0, len(quads.CATEGORY_NAMES))
        pool = np.flatnonzero((labels == c) & (kinds == 0))
        i1[j], i2[j] = rng.choice(pool, 2, replace=True)
    for j in range(n_same, n_same + n_pert):
        c = rng.integers(0, len(quads.CATEGORY_NAMES))
        i1[j] = rng.choice(np.flatnonzero((labels == c) & (kinds == 0)))
        i2[j] = rng.choice(np.flatnonzero((labels == c) & (kinds == 1)))
    for j in range(n_same + n_pert, n_pairs):
        i1[j] = rng.integers(0, n)
        i2[j] = rng.integers(0, n)
    return i1, i2


def _train_supervised(config: ExperimentConfig, spec, inputs, labels, out: Path):
    """11-way cross-entropy with a linear head on the shared embedding net."""
    n_classes = len(quads.CATEGORY_NAMES)
    cfg = _train_config(config, training.QuadraticTriplet(), dtype=_QUAD_COMPUTE_DTYPE)
    master = np.random.SeedSequence(config.seed)
    init_seed, epochs_seed = master.spawn(2)
    params = nets.init(spec, np.random.default_rng(init_seed))
    dtype = np.float32 if cfg.compute_dtype == "float32" else float
    params = ParamVector(params.values.astype(dtype), params.layout)
    hrng = np.random.default_rng(init_seed)
    embed_dim = spec.output_dim
    bound = math.sqrt(6.0 / embed_dim)
    head_w = hrng.uniform(-bound, bound, (n_classes, embed_dim)).astype(dtype)
    head_b = np.zeros(n_classes, dtype=dtype)
    state = training.AdamState.zeros(params.values.size, dtype=dtype)
    state_w = training.AdamState.zeros(head_w.size, dtype=dtype)
    state_b = training.AdamState.zeros(head_b.size, dtype=dtype)
    w_layout = (("w", head_w.shape),)
    b_layout = (("b", head_b.shape),)
    log = []
    epoch_streams = epochs_seed.spawn(max(cfg.epochs, 1))
    import time as _time

    for epoch in range(cfg.epochs):
        erng = np.random.default_rng(epoch_streams[epoch])
        order = erng.permutation(len(inputs))
        losses = []
        t0 = _time.perf_counter()
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            emb, cache = nets.forward(spec, params, inputs[idx])
            logits = emb @ head_w.T + head_b
            logits = logits - logits.max(axis=1, keepdims=True)
            probs = np.exp(logits)
            probs /= probs.sum(axis=1, keepdims=True)
            y = labels[idx]
            losses.append(float(-np.mean(np.log(probs[np.arange(len(idx)), y] + 1e-30))))
            dlogits = probs
            dlogits[np.arange(len(idx)), y] -= 1.0
            dlogits /= len(idx)
            grads = nets.backward(spec, params, cache, dlogits @ head_w)
            params, state = training.adam_step(params, grads, state, cfg)
            pw, state_w = training.adam_step(
                ParamVector(head_w.reshape(-1), w_layout),
                ParamVector((dlogits.T @ emb).reshape(-1), w_layout),
                state_w,
                cfg,
            )
            head_w = pw.values.reshape(head_w.shape)
            pb, state_b = training.adam_step(
                ParamVector(head_b, b_layout),
                ParamVector(dlogits.sum(axis=0), b_layout),
                state_b,
                cfg,
            )
            head_b = pb.values
        wall = (_time.perf_counter() - t0) * 1000.0
        log.append(training.EpochStats(epoch, float(np.mean(losses)), wall))
    training.write_epoch_csv(log, out / "epochs.csv")
    return params


def _quad_train(config: ExperimentConfig, data: dict, out: Path):
    spec = _net_spec(config)
    ckpt = out / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)
    dtype = "float64" if config.vector_input else _QUAD_COMPUTE_DTYPE
    if config.objective == "gensim":
        pair_seed = np.random.SeedSequence(config.seed).spawn(3)[2]
        prng = np.random.default_rng(pair_seed)
        i1, i2 = _quad_pair_indices(
            config, data["labels"], data["kinds"], int(config.data["n_pairs_per_epoch"]), prng
        )
        targets = np.sqrt(np.sum((data["features"][i1] - data["features"][i2]) ** 2, axis=1))
        src = training.PairTargetSource(data["inputs"][i1], data["inputs"][i2], targets)
        cfg = _train_config(config, training.GenSimRegression(), dtype=dtype)
        result = training.train_run(spec, cfg, src, checkpoint_dir=str(ckpt))
        training.write_epoch_csv(result.log, out / "epochs.csv")
        params = result.params
    elif config.objective == "supervised":
        params = _train_supervised(config, spec, data["inputs"], data["labels"], out)
        nets.save_checkpoint(ckpt / "final.ckpt", spec, params)
    else:  # simclr
        src = training.AugmentedPairSource(data["inputs"], _augment_spec(config))
        cfg = _train_config(config, training.InfoNce(temperature=0.5), dtype=dtype)
        result = training.train_run(spec, cfg, src, checkpoint_dir=str(ckpt))
        training.write_epoch_csv(result.log, out / "epochs.csv")
        params = result.params
    return spec, params


def _quad_eval(config: ExperimentConfig, data: dict, spec, params, out: Path) -> dict:
    net = EmbeddingNet(spec, params)
    trials = data["trials"]
    with open(out / "trials.jsonl", "w", encoding="ascii") as fh:
        for rec in data["trial_records"]:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    # Embed every trial item in large batches, then score trial by trial.
    stack = np.stack([_quad_input(q, config) for trial in trials for q in trial.items])
    emb = np.concatenate(
        [net.embed_batch(stack[i : i + 240]) for i in range(0, len(stack), 240)]
    )
    errors: dict[str, int] = {}
    counts: dict[str, int] = {}
    for t_idx, trial in enumerate(trials):
        predicted, _ = evaluation.predict_oddball_index(emb[6 * t_idx : 6 * t_idx + 6])
        name = trial.category.name
        counts[name] = counts.get(name, 0) + 1
        errors[name] = errors.get(name, 0) + int(predicted != trial.oddball_index)
    result = evaluation.OddballResult(
        error_rates={k: errors[k] / counts[k] for k in counts}, n_trials=counts
    )
    errs = np.array([result.error_rates[n] for n in quads.CATEGORY_NAMES])
    ranks = np.arange(len(quads.CATEGORY_NAMES), dtype=float)
    rho, p_value = evaluation.spearman_rho(errs, ranks)
    return {
        "error_rates": {n: result.error_rates[n] for n in quads.CATEGORY_NAMES},
        "n_trials_per_category": {n: result.n_trials[n] for n in quads.CATEGORY_NAMES},
        "rho_error_vs_irregularity": rho,
        "rho_p_value": p_value,
    }


# ---------------------------------------------------------------------------
# draw experiment
# ---------------------------------------------------------------------------


def _draw_gen(config: ExperimentConfig, cache_dir: Path) -> dict:
    """Sample programs per grammar, render, and persist PGM + JSONL manifest."""
    size = int(config.process["raster_size"])
    styles = list(config.process["styles"])
    grammars = {}
    for s in styles:
        g = drawing.builtin_grammar(s)
        if int(config.process["depth_cap"]) != g.depth_cap:
            g = drawing.Grammar(
                production_weights=g.production_weights,
                line_lengths=g.line_lengths,
                arc_radii=g.arc_radii,
                arc_sweeps=g.arc_sweeps,
                turn_angles=g.turn_angles,
                depth_cap=int(config.process["depth_cap"]),
            )
        grammars[s] = g

    manifest_path = cache_dir / "manifest.jsonl"
    if manifest_path.exists():
        return _draw_load(cache_dir, size)

    cache_dir.mkdir(parents=True, exist_ok=True)
    master = np.random.SeedSequence(config.seed)
    data_seed = master.spawn(1)[0]
    counts = {"train": int(config.data["n_train_per_grammar"]), "test": int(config.data["n_test_per_grammar"])}
    records = []
    item_seeds = data_seed.spawn(sum(counts.values()) * len(styles))
    k = 0
    for split, n_items in counts.items():
        for style_idx, style in enumerate(styles):
            for j in range(n_items):
                seed = item_seeds[k]
                k += 1
                rng = np.random.default_rng(seed)
                # Resample turn-only programs: a blank stimulus has no ink to
                # embed or augment.
                for _ in range(64):
                    program = drawing.sample_program(grammars[style], rng)
                    if drawing.interpret(program).segments:
                        break
                img = drawing.rasterize_path(drawing.interpret(program), size)
                motor, control = drawing.count_primitives(program)
                rel = f"{split}_{style}_{j:05d}.pgm"
                raster.to_pgm(img, cache_dir / rel)
                records.append(
                    {
                        "program": drawing.to_sexpr(program),
                        "style_label": style_idx,
                        "style": style,
                        "motor_count": motor,
                        "control_count": control,
                        "seed": int(seed.generate_state(1)[0]),
                        "raster_path": rel,
                        "split": split,
                    }
                )
    with open(manifest_path, "w", encoding="ascii") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return _draw_load(cache_dir, size)


def _draw_load(cache_dir: Path, size: int) -> dict:
    records = []
    with open(cache_dir / "manifest.jsonl", encoding="ascii") as fh:
        for line in fh:
            records.append(json.loads(line))
    out: dict = {}
    for split in ("train", "test"):
        rows = [r for r in records if r["split"] == split]
        imgs = np.stack([raster.from_pgm(cache_dir / r["raster_path"]) for r in rows])
        if imgs.shape[1] != size:
            raise GensclError(f"cached rasters are {imgs.shape[1]}px, config wants {size}px")
        out[split] = {
            "images": imgs,
            "styles": np.array([r["style_label"] for r in rows]),
            "counts": np.array([r["motor_count"] + r["control_count"] for r in rows], float),
            "greys": np.array([drawing.mean_grey(i) for i in imgs]),
        }
    return out


def _draw_train(config: ExperimentConfig, data: dict, out: Path):
    spec = _net_spec(config)
    ckpt = out / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)
    train = data["train"]
    if config.objective == "gensim":
        # Anchor grammar uniform; positive from the same grammar; negative
        # from either grammar with equal probability.
        trip_seed = np.random.SeedSequence(config.seed).spawn(3)[2]
        trng = np.random.default_rng(trip_seed)
        by_style = [np.flatnonzero(train["styles"] == g) for g in (0, 1)]
        n_triplets = len(train["images"])
        a = np.empty(n_triplets, dtype=int)
        p = np.empty(n_triplets, dtype=int)
        n_idx = np.empty(n_triplets, dtype=int)
        for j in range(n_triplets):
            g = int(trng.integers(0, 2))
            a[j] = trng.choice(by_style[g])
            p[j] = trng.choice(by_style[g])
            n_idx[j] = trng.choice(by_style[int(trng.integers(0, 2))])
        src = training.TripletSource(train["images"][a], train["images"][p], train["images"][n_idx])
        cfg = _train_config(config, training.LinearTriplet(), dtype="float32")
    else:  # simclr
        src = training.AugmentedPairSource(train["images"], _augment_spec(config))
        cfg = _train_config(
            config,
            training.InfoNce(temperature=float(config.data["infonce_temperature"])),
            dtype="float32",
        )
    result = training.train_run(spec, cfg, src, checkpoint_dir=str(ckpt))
    training.write_epoch_csv(result.log, out / "epochs.csv")
    return spec, result.params


def _draw_eval(config: ExperimentConfig, data: dict, spec, params, out: Path) -> dict:
    net = EmbeddingNet(spec, params)
    test = data["test"]
    emb = np.concatenate(
        [net.embed_batch(test["images"][i : i + 256]) for i in range(0, len(test["images"]), 256)]
    )
    cls = evaluation.logistic_probe(emb, test["styles"])
    reg = evaluation.ridge_probe(emb, test["counts"], confound=test["greys"])
    pca = evaluation.pca_project(emb, k=2)
    with open(out / "pca_coords.csv", "w", encoding="ascii") as fh:
        fh.write("pc1,pc2,style_label\n")
        for (c1, c2), s in zip(pca.coordinates, test["styles"]):
            fh.write(f"{c1:.9g},{c2:.9g},{int(s)}\n")
    return {
        "style_accuracy_mean": cls.mean,
        "style_accuracy_folds": list(cls.fold_values),
        "style_accuracy_ci": list(cls.ci),
        "count_r2_mean": reg.mean,
        "count_r2_folds": list(reg.fold_values),
        "count_r2_ci": list(reg.ci),
        "pca_explained_variance": [float(v) for v in pca.explained_variance],
    }


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


def gen_data(config: ExperimentConfig):
    """Dataset generation stage (cached for the draw experiment)."""
    if config.experiment == "gauss":
        return _gauss_gen(config)
    if config.experiment == "quad":
        return _quad_gen(config)
    return _draw_gen(config, cache_root(config) / _dataset_key(config))


def train_model(config: ExperimentConfig, data, out: Path):
    if config.experiment == "gauss":
        return _gauss_train(config, data, out)
    if config.experiment == "quad":
        return _quad_train(config, data, out)
    return _draw_train(config, data, out)


def evaluate_model(config: ExperimentConfig, data, spec, params, out: Path) -> dict:
    if config.experiment == "gauss":
        return _gauss_eval(config, data, spec, params, out)
    if config.experiment == "quad":
        return _quad_eval(config, data, spec, params, out)
    return _draw_eval(config, data, spec, params, out)


def write_report(results: dict, out_dir) -> Path:
    """Byte-stable JSON report: sorted keys, floats at 9 significant digits."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "eval.json"
    with open(path, "w", encoding="ascii") as fh:
        fh.write(canonical_json(results))
        fh.write("\n")
    return path


def _write_manifest(out: Path, config: ExperimentConfig, stages: dict, partial: bool) -> None:
    manifest = {
        "config_hash": config_hash(config),
        "code_version": __version__,
        "stages": stages,
        "partial": partial,
    }
    with open(out / "manifest.json", "w", encoding="ascii") as fh:
        fh.write(canonical_json(manifest))
        fh.write("\n")


def run_experiment(config: ExperimentConfig) -> dict:
    """Generate data, train, evaluate; write checkpoints, CSVs, eval.json,
    and a manifest recording the config hash.  Reruns with an identical
    config and seed reproduce identical metric files."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stages: dict[str, str] = {}
    try:
        stage = "gen_data"
        data = gen_data(config)
        stages[stage] = "ok"
        stage = "train"
        spec, params = train_model(config, data, out)
        stages[stage] = "ok"
        stage = "eval"
        metrics = evaluate_model(config, data, spec, params, out)
        metrics = {"experiment": config.experiment, "objective": config.objective,
                   "seed": config.seed, "config_hash": config_hash(config), **metrics}
        write_report(metrics, out)
        stages[stage] = "ok"
    except Exception as exc:
        stages[stage] = f"failed: {exc}"
        _write_manifest(out, config, stages, partial=True)
        raise StageError(stage, exc) from exc
    _write_manifest(out, config, stages, partial=False)
    return metrics
