"""Command-line pipeline driver.

Subcommands cover the full experiment chain: preprocess, train-lbae,
grid-search-lbae, train-rbm, segment, evaluate, baseline-kmeans. Every
command takes --config (TOML) and a --run-dir holding that run's artifacts:

    <run>/manifest.toml      preprocessing provenance
    <run>/splits/            persisted pixel splits (.npy) + stats.json
    <run>/models/            .lbae.json and .rbm.json model files
    <run>/checkpoints/       <epoch>.rbm.json training checkpoints
    <run>/metrics/           CSV tables with matching .png figures
    <run>/maps/              SEGM label rasters and PNG renders

All artifact bytes are deterministic for a fixed config and seed; only the
default run-directory name carries a timestamp.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import clustering, hsi_data, lbae, metrics, rbm, render
from .config import (
    ConfigError,
    PipelineConfig,
    load_config,
    require_paths,
    stage_seed,
    write_toml,
)
from .remote import RemoteSampler, RemoteSamplerError
from .samplers import ExactSampler, SaSampler

SPLIT_PARTS = ("train", "validation", "test")


def _run_dir(args, config: PipelineConfig, create: bool) -> str:
    if args.run_dir:
        path = args.run_dir
    elif create:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        path = os.path.join(config.run.output_dir, f"{stamp}-{config.run.tag}")
    else:
        raise ConfigError("this command needs --run-dir of an existing run")
    if create:
        os.makedirs(path, exist_ok=True)
        for sub in ("splits", "models", "checkpoints", "metrics", "maps"):
            os.makedirs(os.path.join(path, sub), exist_ok=True)
    elif not os.path.isdir(path):
        raise ConfigError(f"run directory does not exist: {path}")
    return path


def _save_split(run_dir: str, split: hsi_data.SplitDataset, stats_doc: dict) -> None:
    base = os.path.join(run_dir, "splits")
    for name in SPLIT_PARTS:
        part: hsi_data.PixelDataset = getattr(split, name)
        np.save(os.path.join(base, f"{name}_pixels.npy"), part.pixels)
        np.save(os.path.join(base, f"{name}_labels.npy"), part.labels)
        np.save(os.path.join(base, f"{name}_coords.npy"), part.coords)
    with open(os.path.join(base, "stats.json"), "w", encoding="utf-8") as fh:
        json.dump(stats_doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _load_split(run_dir: str) -> Tuple[hsi_data.SplitDataset, dict]:
    base = os.path.join(run_dir, "splits")
    stats_path = os.path.join(base, "stats.json")
    if not os.path.exists(stats_path):
        raise ConfigError(
            f"no preprocess artifacts in {run_dir}; run `hsiseg preprocess` first"
        )
    with open(stats_path, "r", encoding="utf-8") as fh:
        stats_doc = json.load(fh)
    parts = {}
    for name in SPLIT_PARTS:
        parts[name] = hsi_data.PixelDataset(
            pixels=np.load(os.path.join(base, f"{name}_pixels.npy")),
            labels=np.load(os.path.join(base, f"{name}_labels.npy")),
            coords=np.load(os.path.join(base, f"{name}_coords.npy")),
        )
    split = hsi_data.SplitDataset(
        train=parts["train"],
        validation=parts["validation"],
        test=parts["test"],
        seed=int(stats_doc["seed"]),
    )
    return split, stats_doc


def _full_dataset(split: hsi_data.SplitDataset) -> hsi_data.PixelDataset:
    """Union of the three parts: every masked foreground pixel once."""
    return hsi_data.PixelDataset(
        pixels=np.concatenate(
            [split.train.pixels, split.validation.pixels, split.test.pixels]
        ),
        labels=np.concatenate(
            [split.train.labels, split.validation.labels, split.test.labels]
        ),
        coords=np.concatenate(
            [split.train.coords, split.validation.coords, split.test.coords]
        ),
    )


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [repr(float(v)) if isinstance(v, float) else v for v in row]
            )


def _load_lbae(run_dir: str, override: Optional[str]):
    path = override or os.path.join(run_dir, "models", "lbae.lbae.json")
    if not os.path.exists(path):
        raise ConfigError(
            f"no autoencoder model at {path}; run `hsiseg train-lbae` first"
        )
    return lbae.load_lbae(path)


def _encode_binary(encoder, pixels: np.ndarray, chunk: int = 4096) -> np.ndarray:
    parts = [
        lbae.encode(encoder, pixels[k : k + chunk])
        for k in range(0, pixels.shape[0], chunk)
    ]
    return np.concatenate(parts, axis=0)


def _make_sampler(kind: str, config: PipelineConfig):
    if kind in ("cd", "cd1"):
        return "cd1", None
    if kind == "sa":
        return "sa", SaSampler()
    if kind == "exact":
        return "exact", ExactSampler()
    if kind == "remote":
        endpoint = config.remote_endpoint()
        if not endpoint:
            raise ConfigError(
                "remote sampler needs [remote].endpoint in the config or the "
                "ANNEAL_ENDPOINT environment variable"
            )
        return "remote", RemoteSampler(endpoint, timeout=config.remote.timeout)
    raise ConfigError(f"unknown sampler kind {kind!r}")


# ---------------------------------------------------------------- commands


def cmd_preprocess(args) -> int:
    config = load_config(args.config)
    require_paths(config)
    run_dir = _run_dir(args, config, create=True)
    cube = hsi_data.load_envi(config.data.cube)
    truth = hsi_data.load_ground_truth(config.data.ground_truth)
    noisy = [b for b in config.noisy_bands() if b < cube.bands]
    reduced = hsi_data.remove_bands(cube, noisy)
    dataset = hsi_data.mask_background(reduced, truth)
    split_seed = stage_seed(config.run.seed, "preprocess")
    split = hsi_data.shuffle_split(dataset, split_seed)
    normalized_train, stats = hsi_data.normalize_minmax(split.train)
    normalized_val, _ = hsi_data.normalize_minmax(split.validation, stats)
    normalized_test, _ = hsi_data.normalize_minmax(split.test, stats)
    split = hsi_data.SplitDataset(
        train=normalized_train,
        validation=normalized_val,
        test=normalized_test,
        seed=split.seed,
    )
    classes = sorted(int(c) for c in np.unique(dataset.labels))
    kept = [b for b in range(cube.bands) if b not in set(noisy)]
    stats_doc = {
        "band_min": [float(v) for v in stats.band_min],
        "band_max": [float(v) for v in stats.band_max],
        "kept_bands": kept,
        "width": cube.width,
        "height": cube.height,
        "seed": split_seed,
        "classes": classes,
    }
    _save_split(run_dir, split, stats_doc)
    manifest = {
        "dataset": {
            "cube": config.data.cube,
            "ground_truth": config.data.ground_truth,
            "width": cube.width,
            "height": cube.height,
            "source_bands": cube.bands,
            "kept_bands": len(kept),
            "noisy_bands": noisy,
            "classes": classes,
        },
        "split": {
            "seed": split_seed,
            "train": split.train.n,
            "validation": split.validation.n,
            "test": split.test.n,
        },
        "run": {
            "master_seed": config.run.seed,
            "tag": config.run.tag,
        },
    }
    write_toml(manifest, os.path.join(run_dir, "manifest.toml"))
    print(
        f"preprocess: {cube.bands} -> {len(kept)} bands, "
        f"{dataset.n} foreground pixels, {len(classes)} classes, "
        f"split {split.train.n}/{split.validation.n}/{split.test.n}"
    )
    print(f"artifacts in {run_dir}")
    return 0


def cmd_train_lbae(args) -> int:
    config = load_config(args.config)
    run_dir = _run_dir(args, config, create=False)
    split, _ = _load_split(run_dir)
    epochs = config.lbae.epochs if args.epochs is None else args.epochs
    train_config = lbae.LbaeTrainConfig(
        batch_size=config.lbae.batch_size,
        learning_rate=config.lbae.learning_rate,
        epochs=epochs,
        seed=stage_seed(config.run.seed, "lbae"),
    )
    encoder, decoder, history = lbae.train_lbae(split, train_config)
    model_path = os.path.join(run_dir, "models", "lbae.lbae.json")
    lbae.save_lbae(
        encoder,
        decoder,
        model_path,
        provenance={
            "epochs": epochs,
            "batch_size": train_config.batch_size,
            "learning_rate": train_config.learning_rate,
            "seed": train_config.seed,
            "trained": epochs > 0,
        },
    )
    loss_csv = os.path.join(run_dir, "metrics", "lbae-loss.csv")
    lbae.write_loss_csv(history, loss_csv)
    if history:
        render.loss_curve_figure(
            history,
            os.path.join(run_dir, "metrics", "lbae-loss.png"),
            "autoencoder reconstruction loss",
        )
        print(
            f"train-lbae: {epochs} epochs, final train loss "
            f"{history[-1]['train_loss']:.6f}"
        )
    else:
        print("train-lbae: wrote initialized model (0 epochs)")
    print(f"model: {model_path}")
    return 0


def cmd_grid_search_lbae(args) -> int:
    config = load_config(args.config)
    run_dir = _run_dir(args, config, create=False)
    split, _ = _load_split(run_dir)
    epochs = config.lbae.grid_epochs if args.epochs is None else args.epochs
    seed = stage_seed(config.run.seed, "lbae")
    models_dir = os.path.join(run_dir, "models")

    def save_cell(row, cell_encoder, cell_decoder):
        batch, rate = int(row["batch_size"]), row["learning_rate"]
        lbae.save_lbae(
            cell_encoder,
            cell_decoder,
            os.path.join(models_dir, f"lbae-b{batch}-lr{rate:g}.lbae.json"),
            provenance={
                "epochs": epochs,
                "batch_size": batch,
                "learning_rate": rate,
                "seed": seed,
                "euclidean": row["euclidean"],
                "sad": row["sad"],
            },
        )

    rows, (encoder, decoder), best = lbae.grid_search_lbae(
        split, epochs, seed, on_cell=save_cell
    )
    lbae.save_lbae(
        encoder,
        decoder,
        os.path.join(models_dir, "lbae.lbae.json"),
        provenance={
            "epochs": epochs,
            "batch_size": int(best["batch_size"]),
            "learning_rate": best["learning_rate"],
            "seed": seed,
            "winner": True,
            "euclidean": best["euclidean"],
            "sad": best["sad"],
        },
    )
    grid_csv = os.path.join(run_dir, "metrics", "lbae-grid.csv")
    _write_csv(
        grid_csv,
        ["batch_size", "learning_rate", "euclidean", "sad", "winner"],
        [
            [
                int(row["batch_size"]),
                row["learning_rate"],
                row["euclidean"],
                row["sad"],
                int(
                    row["batch_size"] == best["batch_size"]
                    and row["learning_rate"] == best["learning_rate"]
                ),
            ]
            for row in rows
        ],
    )
    render.grid_search_figure(
        rows, os.path.join(run_dir, "metrics", "lbae-grid.png")
    )
    print(
        f"grid-search-lbae: winner batch {int(best['batch_size'])}, "
        f"rate {best['learning_rate']:g} "
        f"(euclidean {best['euclidean']:.4f}, sad {best['sad']:.4f})"
    )
    print(f"table: {grid_csv}")
    return 0


def _parse_scan(text: str) -> List[int]:
    try:
        low, high = text.split("..", 1)
        low_i, high_i = int(low), int(high)
    except ValueError as exc:
        raise ConfigError(f"--scan expects LOW..HIGH, got {text!r}") from exc
    if not 1 <= low_i <= high_i:
        raise ConfigError(f"--scan range {text!r} is not an ascending range")
    return list(range(low_i, high_i + 1))


def _checkpoint_candidates(
    checkpoint_dir: str, final_epoch: int, final_model
) -> List[Tuple[int, object]]:
    """Saved checkpoints plus the final model, ordered by epoch."""
    found: Dict[int, object] = {}
    if os.path.isdir(checkpoint_dir):
        for name in os.listdir(checkpoint_dir):
            if name.endswith(".rbm.json"):
                try:
                    epoch = int(name.split(".", 1)[0])
                except ValueError:
                    continue
                found[epoch] = rbm.load_rbm(os.path.join(checkpoint_dir, name))
    found.setdefault(final_epoch, final_model)
    return sorted(found.items())


def _best_threshold_v(model, bits: np.ndarray, truth: np.ndarray) -> Tuple[float, float]:
    """Best (threshold, V-measure) over the decision-threshold grid."""
    probs = rbm.hidden_probs(model, bits)
    best_v, best_th = -1.0, rbm.THRESHOLD_GRID[0]
    for th in rbm.THRESHOLD_GRID:
        ids = rbm.binary_labels_to_ids((probs >= th).astype(np.uint8))
        table = metrics.contingency(truth, ids)
        v = metrics.v_measure(metrics.homogeneity(table), metrics.completeness(table))
        if v > best_v:
            best_v, best_th = v, th
    return best_th, best_v


def cmd_train_rbm(args) -> int:
    config = load_config(args.config)
    run_dir = _run_dir(args, config, create=False)
    split, _ = _load_split(run_dir)
    encoder, _ = _load_lbae(run_dir, args.lbae)
    train_bits = _encode_binary(encoder, split.train.pixels)
    val_bits = _encode_binary(encoder, split.validation.pixels)
    kind, sampler = _make_sampler(args.sampler or config.rbm.sampler, config)
    epochs = config.rbm.epochs if args.epochs is None else args.epochs
    base_seed = stage_seed(config.run.seed, "rbm")
    train_config = rbm.RbmTrainConfig(
        learning_rate=config.rbm.learning_rate,
        epochs=epochs,
        batch_size=config.rbm.batch_size,
        sampler=kind,
        num_reads=config.rbm.num_reads,
        checkpoint_every=config.rbm.checkpoint_every,
        seed=base_seed,
    )
    metrics_dir = os.path.join(run_dir, "metrics")

    if args.scan:
        hidden_range = _parse_scan(args.scan)
        sampler_factory = None
        if sampler is not None:
            sampler_factory = lambda: _make_sampler(kind, config)[1]  # noqa: E731

        def save_history(n_hidden, rep, history):
            run_sub = os.path.join(run_dir, "checkpoints", f"h{n_hidden}-r{rep}")
            os.makedirs(run_sub, exist_ok=True)
            lbae.write_loss_csv(history, os.path.join(run_sub, "loss.csv"))

        best_h, rows = rbm.select_architecture(
            train_bits,
            split.train.labels,
            train_config,
            hidden_range=hidden_range,
            repeats=args.repeats,
            sampler_factory=sampler_factory,
            val_data=val_bits,
            run_root=os.path.join(run_dir, "checkpoints"),
            on_run=save_history,
        )
        scan_csv = os.path.join(metrics_dir, "rbm-scan.csv")
        _write_csv(
            scan_csv,
            [
                "n_hidden",
                "repeat",
                "threshold",
                "beta",
                "v_measure",
                "homogeneity",
                "completeness",
                "wins",
            ],
            [
                [
                    int(row["n_hidden"]),
                    int(row["repeat"]),
                    row["threshold"],
                    row["beta"],
                    row["v_measure"],
                    row["homogeneity"],
                    row["completeness"],
                    int(row["wins"]),
                ]
                for row in rows
            ],
        )
        print(f"train-rbm scan: winner H = {best_h}; table: {scan_csv}")
        hidden = best_h
        repeats = 1
    else:
        hidden = args.hidden or config.rbm.hidden
        repeats = args.repeats

    for rep in range(repeats):
        rep_seed = base_seed + rep
        rep_config = rbm.RbmTrainConfig(
            learning_rate=train_config.learning_rate,
            epochs=epochs,
            batch_size=train_config.batch_size,
            sampler=kind,
            num_reads=train_config.num_reads,
            checkpoint_every=train_config.checkpoint_every,
            seed=rep_seed,
        )
        model0 = rbm.init_rbm(train_bits.shape[1], hidden, rep_seed)
        checkpoint_dir = os.path.join(run_dir, "checkpoints", f"h{hidden}-r{rep}")
        if os.path.isdir(checkpoint_dir):
            for name in os.listdir(checkpoint_dir):
                if name.endswith(".rbm.json"):
                    os.remove(os.path.join(checkpoint_dir, name))
        model, history = rbm.train_rbm(
            model0,
            train_bits,
            rep_config,
            sampler=sampler,
            val_data=val_bits,
            checkpoint_dir=checkpoint_dir,
        )
        loss_csv = os.path.join(metrics_dir, f"rbm-loss-h{hidden}-r{rep}.csv")
        lbae.write_loss_csv(history, loss_csv)
        if history:
            render.loss_curve_figure(
                history,
                os.path.join(metrics_dir, f"rbm-loss-h{hidden}-r{rep}.png"),
                f"RBM reconstruction loss (H={hidden}, repeat {rep})",
            )
        provenance = {
            "sampler": kind,
            "seed": rep_seed,
            "epochs": epochs,
            "hidden": hidden,
            "repeat": rep,
        }
        rbm.save_rbm(
            model,
            os.path.join(run_dir, "models", f"rbm-h{hidden}-r{rep}.rbm.json"),
            provenance=provenance,
        )
        if rep == 0:
            # Pick the checkpoint with the best validation V-measure; the
            # final model competes as the last candidate.
            candidates = _checkpoint_candidates(checkpoint_dir, epochs, model)
            selected_epoch, selected = candidates[-1]
            selected_th = None
            if epochs > 0 and val_bits.shape[0] > 0:
                report = []
                best_v = -1.0
                for epoch, candidate in candidates:
                    th, v = _best_threshold_v(
                        candidate, val_bits, split.validation.labels
                    )
                    report.append([epoch, th, v])
                    if v > best_v:
                        best_v, selected_epoch, selected = v, epoch, candidate
                        selected_th = th
                _write_csv(
                    os.path.join(metrics_dir, f"rbm-checkpoints-h{hidden}-r{rep}.csv"),
                    ["epoch", "threshold", "v_measure"],
                    report,
                )
            extra = {"selected_epoch": selected_epoch}
            if selected_th is not None:
                extra["selected_threshold"] = selected_th
            rbm.save_rbm(
                selected,
                os.path.join(run_dir, "models", "rbm.rbm.json"),
                provenance=dict(provenance, **extra),
            )
        if history:
            print(
                f"train-rbm: H={hidden} repeat {rep} final train loss "
                f"{history[-1]['train_loss']:.6f}"
            )
        else:
            print(f"train-rbm: H={hidden} repeat {rep} wrote initialized model")
    print(f"model: {os.path.join(run_dir, 'models', 'rbm.rbm.json')}")
    return 0


def cmd_segment(args) -> int:
    config = load_config(args.config)
    run_dir = _run_dir(args, config, create=False)
    split, stats_doc = _load_split(run_dir)
    encoder, _ = _load_lbae(run_dir, args.lbae)
    model_path = args.model or os.path.join(run_dir, "models", "rbm.rbm.json")
    if not os.path.exists(model_path):
        raise ConfigError(f"no RBM model at {model_path}; run `hsiseg train-rbm` first")
    model = rbm.load_rbm(model_path)
    dataset = _full_dataset(split)
    latents = _encode_binary(encoder, dataset.pixels)
    if args.threshold is not None:
        threshold = args.threshold
    else:
        with open(model_path, "r", encoding="utf-8") as fh:
            stored = json.load(fh).get("provenance", {}).get("selected_threshold")
        if stored is not None:
            threshold = float(stored)
        else:
            # Validation rows sit between train and test in the union.
            val_bits = latents[split.train.n : split.train.n + split.validation.n]
            threshold, _ = rbm.select_threshold(
                model, val_bits, split.validation.labels
            )
    bit_labels = (rbm.hidden_probs(model, latents) >= threshold).astype(np.uint8)
    distinct = int(np.unique(bit_labels, axis=0).shape[0])
    # Any AHC flag requests merging; the others fall back to config values.
    merge = args.ahc is not None or args.k is not None or args.distance is not None
    linkage = (args.ahc or config.ahc.linkage) if merge else None
    if merge:
        mode = {
            "hamming": "hamming_labels",
            "euclidean": "centroid_euclidean",
            "sad": "centroid_sad",
        }[args.distance or config.ahc.distance]
        target_k = args.k or config.ahc.target_k
        if distinct < 2:
            final = np.zeros(dataset.n, dtype=np.int64)
        else:
            dist, label_map = clustering.rbm_cluster_distance(
                bit_labels, dataset.pixels, mode=mode
            )
            final, _ = clustering.merge_rbm_clusters(
                bit_labels, dist, label_map, linkage=linkage, target_k=target_k
            )
    else:
        final = rbm.binary_labels_to_ids(bit_labels)
    width, height = int(stats_doc["width"]), int(stats_doc["height"])
    grid = np.zeros((width, height), dtype=np.int64)
    grid[dataset.coords[:, 0], dataset.coords[:, 1]] = final + 1
    seg = render.SegmentationMap(grid)
    truth_grid = np.zeros((width, height), dtype=np.int64)
    truth_grid[dataset.coords[:, 0], dataset.coords[:, 1]] = dataset.labels
    seg.assert_partitions(truth_grid)
    maps_dir = os.path.join(run_dir, "maps")
    raster_path = os.path.join(maps_dir, "segmentation.segm")
    render.write_segm(seg, raster_path)
    render.render_label_png(seg, os.path.join(maps_dir, "segmentation.png"))
    render.segmentation_figure(
        seg,
        os.path.join(maps_dir, "segmentation-figure.png"),
        f"segmentation ({'AHC ' + linkage if linkage else 'raw labels'})",
    )
    in_run = os.path.commonpath(
        [os.path.abspath(model_path), os.path.abspath(run_dir)]
    ) == os.path.abspath(run_dir)
    info = {
        "threshold": float(threshold),
        "distinct_rbm_labels": distinct,
        "final_labels": int(np.unique(final).shape[0]),
        "linkage": linkage or "",
        "model": os.path.relpath(model_path, run_dir) if in_run else model_path,
    }
    with open(
        os.path.join(maps_dir, "segmentation-info.json"), "w", encoding="utf-8"
    ) as fh:
        json.dump(info, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(
        f"segment: threshold {threshold:g}, "
        f"{info['distinct_rbm_labels']} RBM labels -> "
        f"{info['final_labels']} final clusters"
    )
    print(f"raster: {raster_path}")
    return 0


def _read_raster(path: str) -> np.ndarray:
    """Label grid from a SEGM raster, ENVI header, or palette image."""
    if path.endswith(".segm"):
        return render.read_segm(path).astype(np.int64)
    return hsi_data.load_ground_truth(path).labels


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    run_dir = _run_dir(args, config, create=False)
    pred = _read_raster(args.pred)
    truth = _read_raster(args.truth)
    if truth.shape != pred.shape:
        raise ConfigError(
            f"prediction {pred.shape} and truth {truth.shape} shapes differ"
        )
    mask = truth != 0
    if not mask.any():
        raise ConfigError("truth raster labels every pixel as background")
    table = metrics.contingency(truth[mask], pred[mask])
    report = {
        "homogeneity": metrics.homogeneity(table),
        "completeness": metrics.completeness(table),
        "adjusted_rand": metrics.adjusted_rand(table),
        "rand_score": metrics.rand_score(table),
    }
    metrics_dir = os.path.join(run_dir, "metrics")
    _write_csv(
        os.path.join(metrics_dir, "evaluate.csv"),
        list(report.keys()),
        [[report[k] for k in report]],
    )
    with open(
        os.path.join(metrics_dir, "evaluate.json"), "w", encoding="utf-8"
    ) as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    render.metric_bar_figure(
        {k: (v, 0.0) for k, v in report.items()},
        os.path.join(metrics_dir, "evaluate.png"),
        "segmentation metrics",
    )
    render.contingency_figure(
        table,
        os.path.join(metrics_dir, "evaluate-contingency.png"),
        "class vs cluster contingency",
    )
    for key, value in report.items():
        print(f"{key}: {value:.4f}")
    return 0


def cmd_baseline_kmeans(args) -> int:
    config = load_config(args.config)
    run_dir = _run_dir(args, config, create=False)
    split, _ = _load_split(run_dir)
    dataset = _full_dataset(split)
    if args.latent:
        encoder, _ = _load_lbae(run_dir, args.lbae)
        data = _encode_binary(encoder, dataset.pixels).astype(np.float64)
        variant = "latent"
    else:
        data = dataset.pixels
        variant = "raw"
    k = args.k or config.ahc.target_k
    base = stage_seed(config.run.seed, "kmeans")
    seeds = [base + i for i in range(args.seeds)]
    rows, summary = clustering.kmeans_repeated(data, dataset.labels, k, seeds)
    names = ["homogeneity", "completeness", "adjusted_rand", "rand_score"]
    metrics_dir = os.path.join(run_dir, "metrics")
    _write_csv(
        os.path.join(metrics_dir, f"kmeans-{variant}.csv"),
        ["seed"] + names,
        [[int(row["seed"])] + [row[name] for name in names] for row in rows],
    )
    _write_csv(
        os.path.join(metrics_dir, f"kmeans-{variant}-summary.csv"),
        ["metric", "mean", "std"],
        [[name, summary[name][0], summary[name][1]] for name in names],
    )
    render.metric_bar_figure(
        {name: summary[name] for name in names},
        os.path.join(metrics_dir, f"kmeans-{variant}.png"),
        f"k-means baseline ({variant} pixels, k={k}, {len(seeds)} seeds)",
    )
    for name in names:
        mean, std = summary[name]
        print(f"{name}: {mean:.4f} +/- {std:.4f}")
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsiseg",
        description="Hyperspectral segmentation pipeline: binarizing "
        "autoencoder, RBM pixel labeling, hierarchical cluster merging.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--run-dir", default=None, help="run directory")

    p = sub.add_parser("preprocess", help="load, mask, scale and split a scene")
    common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train-lbae", help="train the binarizing autoencoder")
    common(p)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_train_lbae)

    p = sub.add_parser(
        "grid-search-lbae", help="train the 3x3 batch/rate grid and pick a winner"
    )
    common(p)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_grid_search_lbae)

    p = sub.add_parser("train-rbm", help="train the RBM on encoded pixels")
    common(p)
    p.add_argument(
        "--sampler",
        choices=["cd", "cd1", "sa", "exact", "remote"],
        default=None,
        help="negative-phase sampler (default from config)",
    )
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--scan", default=None, help="hidden-size range LOW..HIGH")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lbae", default=None, help="path to a .lbae.json model")
    p.set_defaults(func=cmd_train_rbm)

    p = sub.add_parser("segment", help="label a scene with a trained RBM")
    common(p)
    p.add_argument("--model", default=None, help="path to a .rbm.json model")
    p.add_argument("--lbae", default=None, help="path to a .lbae.json model")
    p.add_argument(
        "--ahc",
        choices=["complete", "average"],
        default=None,
        help="merge RBM labels with this AHC linkage",
    )
    p.add_argument(
        "--distance", choices=["hamming", "euclidean", "sad"], default=None
    )
    p.add_argument("--k", type=int, default=None, help="target cluster count")
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", help="score a segmentation against ground truth")
    common(p)
    p.add_argument("--pred", required=True, help="SEGM raster to score")
    p.add_argument(
        "--truth", required=True, help="SEGM raster, ENVI header, or palette PNG"
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline-kmeans", help="repeated-seed k-means baseline")
    common(p)
    p.add_argument("--latent", action="store_true", help="cluster encoded pixels")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--lbae", default=None, help="path to a .lbae.json model")
    p.set_defaults(func=cmd_baseline_kmeans)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RemoteSamplerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError, rbm.TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
