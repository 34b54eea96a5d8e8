"""Segmentation rendering and report figures.

Label rasters use a 16-byte header (magic SEGM, little-endian uint32 width
and height, 4 reserved zero bytes) followed by row-major uint8 labels
(y outer, x inner). Label 0 is background. PNG renders use the packaged
8-color palette, extended deterministically when a map holds more labels.

Figures are rendered with the Agg backend so report generation works
headless; every figure lands next to its CSV counterpart.
"""

from __future__ import annotations

import colorsys
import json
import struct
from dataclasses import dataclass
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from .metrics import ContingencyTable

__all__ = [
    "SegmentationMap",
    "load_palette",
    "palette_color",
    "write_segm",
    "read_segm",
    "render_label_png",
    "loss_curve_figure",
    "metric_bar_figure",
    "segmentation_figure",
    "contingency_figure",
    "grid_search_figure",
]

SEGM_MAGIC = b"SEGM"
SEGM_HEADER = struct.Struct("<4sII4s")


def load_palette() -> Dict[int, Tuple[int, int, int]]:
    payload = resources.files("hsiseg").joinpath("data/palette.json")
    raw = json.loads(payload.read_text(encoding="utf-8"))["colors"]
    return {int(k): tuple(int(c) for c in v) for k, v in raw.items()}


def palette_color(
    label: int, palette: Dict[int, Tuple[int, int, int]]
) -> Tuple[int, int, int]:
    """Palette lookup with a deterministic extension beyond the fixed table.

    Extra labels walk the hue circle by the golden ratio so nearby label
    ids stay visually distinct run over run.
    """
    if label in palette:
        return palette[label]
    hue = (label * 0.6180339887498949) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.9)
    return (int(r * 255), int(g * 255), int(b * 255))


@dataclass(frozen=True)
class SegmentationMap:
    """Per-pixel labels indexed [x, y]; 0 marks masked background."""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2:
            raise ValueError("segmentation labels must be a (width, height) grid")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("segmentation labels must be integers")
        if (arr < 0).any() or (arr > 255).any():
            raise ValueError(
                "segmentation labels must fit uint8 (0..255); merge clusters "
                "with the AHC step to reduce label count"
            )
        object.__setattr__(self, "labels", arr.astype(np.uint8))

    @property
    def width(self) -> int:
        return int(self.labels.shape[0])

    @property
    def height(self) -> int:
        return int(self.labels.shape[1])

    def assert_partitions(self, truth_labels: np.ndarray) -> None:
        """Foreground coverage check: labeled exactly where truth is non-zero."""
        truth_labels = np.asarray(truth_labels)
        if truth_labels.shape != self.labels.shape:
            raise ValueError("truth grid shape differs from segmentation grid")
        pred_fg = self.labels != 0
        true_fg = truth_labels != 0
        if not np.array_equal(pred_fg, true_fg):
            raise ValueError(
                "segmentation foreground does not match the masked ground truth"
            )


def write_segm(labels: np.ndarray, path: str) -> None:
    """Write a (width, height) label grid as a SEGM raster."""
    seg = labels if isinstance(labels, SegmentationMap) else SegmentationMap(labels)
    header = SEGM_HEADER.pack(SEGM_MAGIC, seg.width, seg.height, b"\x00" * 4)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(seg.labels.T).tobytes())


def read_segm(path: str) -> np.ndarray:
    """Read a SEGM raster back into a (width, height) uint8 grid."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < SEGM_HEADER.size:
        raise ValueError(f"{path} is too short to be a SEGM raster")
    magic, width, height, reserved = SEGM_HEADER.unpack_from(blob)
    if magic != SEGM_MAGIC:
        raise ValueError(f"{path} lacks the SEGM magic")
    if reserved != b"\x00" * 4:
        raise ValueError(f"{path} has a non-zero reserved header block")
    body = blob[SEGM_HEADER.size :]
    if len(body) != width * height:
        raise ValueError(
            f"{path} payload holds {len(body)} bytes for {width}x{height} labels"
        )
    grid = np.frombuffer(body, dtype=np.uint8).reshape(height, width)
    return grid.T.copy()


def render_label_png(
    labels: np.ndarray,
    path: str,
    palette: Optional[Dict[int, Tuple[int, int, int]]] = None,
) -> None:
    """Render a label grid to a palette-mode PNG using the fixed palette.

    Pixel values keep the raw label ids, so the file doubles as a label
    raster that load_ground_truth can read back.
    """
    seg = labels if isinstance(labels, SegmentationMap) else SegmentationMap(labels)
    palette = palette or load_palette()
    lut = np.zeros((256, 3), dtype=np.uint8)
    for label in np.unique(seg.labels):
        lut[label] = palette_color(int(label), palette)
    # fromarray with an explicit mode corrupts pixel data on some Pillow
    # versions; build an L image and let putpalette switch it to P.
    image = Image.fromarray(np.ascontiguousarray(seg.labels.T).astype(np.uint8))
    image.putpalette(lut.reshape(-1).tolist())
    image.save(path)


def _finish(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def loss_curve_figure(history: Sequence[Dict[str, float]], path: str, title: str) -> None:
    """Train/validation loss per epoch."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    epochs = [row["epoch"] for row in history]
    ax.plot(epochs, [row["train_loss"] for row in history], label="train")
    vals = [row["val_loss"] for row in history]
    if any(v == v for v in vals):
        ax.plot(epochs, vals, label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend()
    _finish(fig, path)


def metric_bar_figure(
    summary: Dict[str, Tuple[float, float]], path: str, title: str
) -> None:
    """Bar chart of metric means with std error bars."""
    names = list(summary.keys())
    means = [summary[name][0] for name in names]
    stds = [summary[name][1] for name in names]
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.bar(range(len(names)), means, yerr=stds, capsize=4, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(title)
    _finish(fig, path)


def segmentation_figure(
    labels: np.ndarray,
    path: str,
    title: str,
    palette: Optional[Dict[int, Tuple[int, int, int]]] = None,
) -> None:
    """Segmentation image with a legend naming each label."""
    seg = labels if isinstance(labels, SegmentationMap) else SegmentationMap(labels)
    palette = palette or load_palette()
    present = [int(v) for v in np.unique(seg.labels)]
    lut = np.zeros((256, 3), dtype=np.uint8)
    for label in present:
        lut[label] = palette_color(label, palette)
    rgb = lut[seg.labels.T]
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    ax.imshow(rgb, interpolation="nearest")
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    handles = [
        plt.Rectangle(
            (0, 0), 1, 1, color=np.array(palette_color(label, palette)) / 255.0
        )
        for label in present
    ]
    names = ["background" if label == 0 else f"cluster {label}" for label in present]
    ax.legend(
        handles,
        names,
        loc="center left",
        bbox_to_anchor=(1.02, 0.5),
        fontsize="small",
    )
    _finish(fig, path)


def contingency_figure(table: ContingencyTable, path: str, title: str) -> None:
    """Heatmap of the true-class x predicted-cluster contingency counts."""
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    im = ax.imshow(table.counts, cmap="viridis", aspect="auto")
    ax.set_xlabel("predicted cluster")
    ax.set_ylabel("true class")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="pixels")
    _finish(fig, path)


def grid_search_figure(rows: Sequence[Dict[str, float]], path: str) -> None:
    """Heatmap of mean reconstruction distance per (batch size, rate) cell."""
    batches = sorted({row["batch_size"] for row in rows})
    rates = sorted({row["learning_rate"] for row in rows}, reverse=True)
    grid = np.full((len(batches), len(rates)), np.nan)
    for row in rows:
        i = batches.index(row["batch_size"])
        j = rates.index(row["learning_rate"])
        grid[i, j] = row["euclidean"]
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    im = ax.imshow(grid, cmap="magma")
    ax.set_xticks(range(len(rates)))
    ax.set_xticklabels([f"{r:g}" for r in rates])
    ax.set_yticks(range(len(batches)))
    ax.set_yticklabels([f"{int(b)}" for b in batches])
    ax.set_xlabel("learning rate")
    ax.set_ylabel("batch size")
    ax.set_title("reconstruction distance by grid cell")
    for i in range(len(batches)):
        for j in range(len(rates)):
            if grid[i, j] == grid[i, j]:
                ax.text(
                    j, i, f"{grid[i, j]:.3f}", ha="center", va="center",
                    color="white", fontsize="small",
                )
    fig.colorbar(im, ax=ax, label="euclidean")
    _finish(fig, path)
