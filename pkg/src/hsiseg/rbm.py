"""Bernoulli-Bernoulli restricted Boltzmann machine.

Energy convention: E(v, h) = -a't v - b't h - v't W h with binary layers.
Training follows CD-1 by default; the negative phase can instead come from
any sampler that draws joint (v, h) configurations from the model's QUBO
form. Includes the pixel-labeling step and the threshold / architecture
selection procedures used by the segmentation pipeline.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import metrics
from .samplers import MAX_EXACT_VARS, negative_phase, rbm_to_qubo

__all__ = [
    "RbmModel",
    "RbmTrainConfig",
    "TrainingDiverged",
    "init_rbm",
    "energy",
    "hidden_probs",
    "visible_probs",
    "cd1_update",
    "train_rbm",
    "exact_log_likelihood",
    "label_pixel",
    "binary_labels_to_ids",
    "select_threshold",
    "select_architecture",
    "save_rbm",
    "load_rbm",
    "THRESHOLD_GRID",
    "BETA_GRID",
]

# selection grids: i/10 and i/100 give the correctly rounded decimal values
THRESHOLD_GRID = tuple(i / 10 for i in range(1, 10))
BETA_GRID = tuple(i / 100 for i in range(0, 101))

RBM_FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Raised when model parameters stop being finite during training."""


@dataclass(frozen=True)
class RbmModel:
    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        a = np.asarray(self.visible_bias, dtype=np.float64)
        b = np.asarray(self.hidden_bias, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError("weights must be a visible x hidden matrix")
        if a.shape != (w.shape[0],) or b.shape != (w.shape[1],):
            raise ValueError("bias lengths must match the weight matrix")
        if not (np.isfinite(w).all() and np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "visible_bias", a)
        object.__setattr__(self, "hidden_bias", b)

    @property
    def n_visible(self) -> int:
        return int(self.weights.shape[0])

    @property
    def n_hidden(self) -> int:
        return int(self.weights.shape[1])


@dataclass(frozen=True)
class RbmTrainConfig:
    learning_rate: float = 0.01
    epochs: int = 1000
    batch_size: int = 64
    sampler: str = "cd1"
    num_reads: int = 100
    checkpoint_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1 or self.num_reads < 1 or self.checkpoint_every < 1:
            raise ValueError("batch_size, num_reads, checkpoint_every must be positive")
        if self.sampler not in ("cd1", "sa", "exact", "remote"):
            raise ValueError(f"unknown sampler kind {self.sampler!r}")


def init_rbm(n_visible: int, n_hidden: int, seed: int, sigma: float = 0.01) -> RbmModel:
    """Gaussian(0, sigma) weights, zero biases."""
    if n_visible < 1 or n_hidden < 1:
        raise ValueError("layer sizes must be positive")
    rng = np.random.default_rng(seed)
    return RbmModel(
        weights=rng.normal(0.0, sigma, size=(n_visible, n_hidden)),
        visible_bias=np.zeros(n_visible),
        hidden_bias=np.zeros(n_hidden),
    )


def _check_binary(x: np.ndarray, length: int, what: str) -> np.ndarray:
    arr = np.asarray(x)
    if arr.shape != (length,):
        raise ValueError(f"{what} has shape {arr.shape}, expected ({length},)")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{what} must be binary")
    return arr


def energy(model: RbmModel, v: Sequence[int], h: Sequence[int]) -> float:
    """E(v, h) = -a't v - b't h - v't W h.

    Terms accumulate in the same canonical order as the QUBO objective
    (visible linear, hidden linear, then weight terms row-major) so the
    bridge in samplers.rbm_to_qubo reproduces this value bit for bit.
    """
    v = _check_binary(v, model.n_visible, "v")
    h = _check_binary(h, model.n_hidden, "h")
    acc = 0.0
    a, b, w = model.visible_bias, model.hidden_bias, model.weights
    for i in range(model.n_visible):
        if v[i]:
            acc += -a[i]
    for j in range(model.n_hidden):
        if h[j]:
            acc += -b[j]
    for i in range(model.n_visible):
        if v[i]:
            for j in range(model.n_hidden):
                if h[j]:
                    acc += -w[i, j]
    return float(acc)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def hidden_probs(model: RbmModel, v: np.ndarray) -> np.ndarray:
    """P(h_j = 1 | v) = sigmoid(b_j + sum_i v_i W_ij); accepts a batch."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != model.n_visible:
        raise ValueError(
            f"visible input has length {v.shape[-1]}, expected {model.n_visible}"
        )
    return _sigmoid(model.hidden_bias + v @ model.weights)


def visible_probs(model: RbmModel, h: np.ndarray) -> np.ndarray:
    """P(v_i = 1 | h) = sigmoid(a_i + sum_j W_ij h_j); accepts a batch."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != model.n_hidden:
        raise ValueError(
            f"hidden input has length {h.shape[-1]}, expected {model.n_hidden}"
        )
    return _sigmoid(model.visible_bias + h @ model.weights.T)


def cd1_update(
    model: RbmModel, batch: np.ndarray, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-step contrastive-divergence gradient estimate (dW, da, db).

    Positive statistics pair the data with p(h|v); the reconstruction v' is
    reached through a sampled hidden state, and its statistics again use
    hidden probabilities rather than samples.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise ValueError("batch must not be empty")
    if batch.shape[1] != model.n_visible:
        raise ValueError(
            f"batch width {batch.shape[1]} does not match n_visible {model.n_visible}"
        )
    n = batch.shape[0]
    p_h = hidden_probs(model, batch)
    h_sample = (rng.random(p_h.shape) < p_h).astype(np.float64)
    p_v = visible_probs(model, h_sample)
    v_recon = (rng.random(p_v.shape) < p_v).astype(np.float64)
    p_h_recon = hidden_probs(model, v_recon)
    d_w = (batch.T @ p_h - v_recon.T @ p_h_recon) / n
    d_a = (batch - v_recon).mean(axis=0)
    d_b = (p_h - p_h_recon).mean(axis=0)
    return d_w, d_a, d_b


def reconstruction_loss(model: RbmModel, data: np.ndarray) -> float:
    """Mean per-bit cross-entropy of the one-step mean-field reconstruction."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    recon = visible_probs(model, hidden_probs(model, data))
    recon = np.clip(recon, 1e-12, 1.0 - 1e-12)
    ce = -(data * np.log(recon) + (1.0 - data) * np.log(1.0 - recon))
    return float(ce.mean())


def exact_log_likelihood(model: RbmModel, data: np.ndarray) -> float:
    """Average log p(v) over data by brute-force partition function.

    Only viable for small models: both layers are enumerated.
    """
    if model.n_visible + model.n_hidden > MAX_EXACT_VARS + 4:
        raise ValueError("model too large for brute-force likelihood")
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    w, a, b = model.weights, model.visible_bias, model.hidden_bias

    def neg_free_energy(v: np.ndarray) -> np.ndarray:
        act = b[None, :] + v @ w
        return v @ a + np.logaddexp(0.0, act).sum(axis=1)

    all_v = (
        (np.arange(1 << model.n_visible)[:, None] >> np.arange(model.n_visible)) & 1
    ).astype(np.float64)
    log_z = float(np.logaddexp.reduce(neg_free_energy(all_v)))
    return float(np.mean(neg_free_energy(data)) - log_z)


def _epoch_batches(
    n_rows: int, batch_size: int, rng: np.random.Generator
) -> List[np.ndarray]:
    order = rng.permutation(n_rows)
    return [order[k : k + batch_size] for k in range(0, n_rows, batch_size)]


def train_rbm(
    model: RbmModel,
    data: np.ndarray,
    config: RbmTrainConfig,
    sampler=None,
    val_data: Optional[np.ndarray] = None,
    checkpoint_dir: Optional[str] = None,
    on_epoch: Optional[Callable[[int, RbmModel, float, float], None]] = None,
) -> Tuple[RbmModel, List[Dict[str, float]]]:
    """Train by lr * (positive phase - negative phase) updates.

    sampler=None runs CD-1. Otherwise each batch's negative statistics are
    occurrence-weighted averages over num_reads joint samples drawn from the
    current model's QUBO form. Checkpoints land at every checkpoint_every-th
    epoch as <checkpoint_dir>/<epoch>.rbm.json. Returns the trained model
    and one history row per epoch with train and validation loss.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[0] == 0:
        raise ValueError("training data must not be empty")
    if data.shape[1] != model.n_visible:
        raise ValueError(
            f"data width {data.shape[1]} does not match n_visible {model.n_visible}"
        )
    if not np.isin(data, (0, 1)).all():
        raise ValueError("training data must be binary")
    rng = np.random.default_rng(config.seed)
    weights = model.weights.copy()
    a = model.visible_bias.copy()
    b = model.hidden_bias.copy()
    lr = config.learning_rate
    history: List[Dict[str, float]] = []
    if checkpoint_dir is not None:
        os.makedirs(checkpoint_dir, exist_ok=True)

    current = RbmModel(weights.copy(), a.copy(), b.copy())
    for epoch in range(1, config.epochs + 1):
        for idx in _epoch_batches(data.shape[0], config.batch_size, rng):
            batch = data[idx]
            if sampler is None:
                d_w, d_a, d_b = cd1_update(current, batch, rng)
            else:
                p_h = hidden_probs(current, batch)
                pos_w = batch.T @ p_h / batch.shape[0]
                pos_a = batch.mean(axis=0)
                pos_b = p_h.mean(axis=0)
                problem = rbm_to_qubo(current)
                read_seed = int(rng.integers(0, 2**63))
                samples = sampler.sample(problem, config.num_reads, read_seed)
                neg_w, neg_a, neg_b = negative_phase(
                    samples, current.n_visible, current.n_hidden
                )
                d_w, d_a, d_b = pos_w - neg_w, pos_a - neg_a, pos_b - neg_b
            weights += lr * d_w
            a += lr * d_a
            b += lr * d_b
            if not (
                np.isfinite(weights).all()
                and np.isfinite(a).all()
                and np.isfinite(b).all()
            ):
                raise TrainingDiverged(
                    f"non-finite parameters after epoch {epoch} update"
                )
            current = RbmModel(weights.copy(), a.copy(), b.copy())
        train_loss = reconstruction_loss(current, data)
        val_loss = (
            reconstruction_loss(current, val_data)
            if val_data is not None and len(val_data)
            else float("nan")
        )
        history.append(
            {"epoch": float(epoch), "train_loss": train_loss, "val_loss": val_loss}
        )
        if checkpoint_dir is not None and epoch % config.checkpoint_every == 0:
            save_rbm(
                current,
                os.path.join(checkpoint_dir, f"{epoch}.rbm.json"),
                provenance={
                    "sampler": config.sampler if sampler is None else getattr(
                        sampler, "name", type(sampler).__name__
                    ),
                    "seed": config.seed,
                    "epochs": epoch,
                },
            )
        if on_epoch is not None:
            on_epoch(epoch, current, train_loss, val_loss)
    return current, history


def label_pixel(model: RbmModel, v: Sequence[int], threshold: float) -> np.ndarray:
    """Binary label: bit_j = 1 iff P(h_j = 1 | v) >= threshold."""
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie strictly between 0 and 1")
    probs = hidden_probs(model, _check_binary(v, model.n_visible, "v"))
    return (probs >= threshold).astype(np.uint8)


def _label_matrix(model: RbmModel, data: np.ndarray, threshold: float) -> np.ndarray:
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie strictly between 0 and 1")
    probs = hidden_probs(model, np.atleast_2d(np.asarray(data, dtype=np.float64)))
    return (probs >= threshold).astype(np.uint8)


def binary_labels_to_ids(labels: np.ndarray) -> np.ndarray:
    """Collapse binary label rows to integer cluster ids (order-free)."""
    labels = np.atleast_2d(np.asarray(labels))
    _, inverse = np.unique(labels, axis=0, return_inverse=True)
    return inverse.astype(np.int64)


def select_threshold(
    model: RbmModel, data: np.ndarray, truth: np.ndarray
) -> Tuple[float, List[Dict[str, float]]]:
    """Scan thresholds 0.1..0.9, return the ARS argmax (ties take the lower)."""
    truth = np.asarray(truth)
    if truth.shape[0] == 0:
        raise ValueError("dataset must not be empty")
    table: List[Dict[str, float]] = []
    best_th, best_ars = None, -np.inf
    for th in THRESHOLD_GRID:
        ids = binary_labels_to_ids(_label_matrix(model, data, th))
        ars = metrics.adjusted_rand(metrics.contingency(truth, ids))
        table.append({"threshold": th, "ars": ars})
        if ars > best_ars:
            best_th, best_ars = th, ars
    return float(best_th), table


def _best_beta_v(h_score: float, c_score: float) -> Tuple[float, float]:
    best_beta, best_v = 0.0, -np.inf
    for beta in BETA_GRID:
        v = metrics.v_measure(h_score, c_score, beta=beta)
        if v > best_v:
            best_beta, best_v = beta, v
    return best_beta, best_v


def select_architecture(
    data: np.ndarray,
    truth: np.ndarray,
    config: RbmTrainConfig,
    hidden_range: Sequence[int] = tuple(range(3, 29)),
    repeats: int = 10,
    sampler_factory: Optional[Callable[[], object]] = None,
    val_data: Optional[np.ndarray] = None,
    run_root: Optional[str] = None,
    on_run: Optional[Callable[[int, int, List[Dict[str, float]]], None]] = None,
) -> Tuple[int, List[Dict[str, float]]]:
    """Pick the hidden-layer size that most often wins on V-measure.

    For every architecture and repeat: train, choose the ARS-best threshold,
    then choose beta in {0, 0.01, ..., 1} maximizing V (ties take the
    smallest beta). A repeat's first place goes to every architecture tying
    the repeat's best V. Overall winner has the most first places; ties go
    to the smaller hidden layer.

    With run_root, each training run checkpoints into
    `<run_root>/h<H>-r<rep>/`. on_run(n_hidden, repeat, history) fires after
    each run.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    hidden_range = sorted(set(int(h) for h in hidden_range))
    if not hidden_range or repeats < 1:
        raise ValueError("need at least one architecture and one repeat")
    rows: List[Dict[str, float]] = []
    scores = np.zeros((len(hidden_range), repeats))
    for hi, n_hidden in enumerate(hidden_range):
        for rep in range(repeats):
            seed = config.seed + rep
            run_config = replace(config, seed=seed)
            model0 = init_rbm(data.shape[1], n_hidden, seed)
            sampler = sampler_factory() if sampler_factory is not None else None
            checkpoint_dir = None
            if run_root is not None:
                checkpoint_dir = os.path.join(run_root, f"h{n_hidden}-r{rep}")
            model, history = train_rbm(
                model0,
                data,
                run_config,
                sampler=sampler,
                val_data=val_data,
                checkpoint_dir=checkpoint_dir,
            )
            if on_run is not None:
                on_run(n_hidden, rep, history)
            threshold, _ = select_threshold(model, data, truth)
            ids = binary_labels_to_ids(_label_matrix(model, data, threshold))
            table = metrics.contingency(truth, ids)
            h_score = metrics.homogeneity(table)
            c_score = metrics.completeness(table)
            beta, v_best = _best_beta_v(h_score, c_score)
            scores[hi, rep] = v_best
            rows.append(
                {
                    "n_hidden": float(n_hidden),
                    "repeat": float(rep),
                    "threshold": threshold,
                    "beta": beta,
                    "v_measure": v_best,
                    "homogeneity": h_score,
                    "completeness": c_score,
                }
            )
    wins = (scores == scores.max(axis=0, keepdims=True)).sum(axis=1)
    best_index = int(np.argmax(wins))  # argmax takes the first, so smaller H
    for row in rows:
        row["wins"] = float(wins[hidden_range.index(int(row["n_hidden"]))])
    return hidden_range[best_index], rows


def save_rbm(model: RbmModel, path: str, provenance: Optional[dict] = None) -> None:
    payload = {
        "format": "rbm",
        "version": RBM_FORMAT_VERSION,
        "n_visible": model.n_visible,
        "n_hidden": model.n_hidden,
        "weights": model.weights.tolist(),
        "visible_bias": model.visible_bias.tolist(),
        "hidden_bias": model.hidden_bias.tolist(),
        "provenance": provenance or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_rbm(path: str) -> RbmModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "rbm":
        raise ValueError(f"{path} is not an RBM model file")
    if payload.get("version") != RBM_FORMAT_VERSION:
        raise ValueError(
            f"unsupported RBM file version {payload.get('version')!r}"
        )
    model = RbmModel(
        weights=np.array(payload["weights"], dtype=np.float64),
        visible_bias=np.array(payload["visible_bias"], dtype=np.float64),
        hidden_bias=np.array(payload["hidden_bias"], dtype=np.float64),
    )
    if model.n_visible != payload["n_visible"] or model.n_hidden != payload["n_hidden"]:
        raise ValueError(f"dimension metadata in {path} disagrees with arrays")
    return model
