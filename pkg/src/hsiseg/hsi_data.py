"""Hyperspectral cube ingestion and preprocessing.

Cubes are dense (x, y, band) float arrays loaded from ENVI-style rasters
(text header plus little-endian binary payload, BSQ/BIL/BIP interleaves).
Preprocessing follows: drop listed noisy bands, keep only pixels with a
non-background ground-truth label, min-max scale per band with statistics
from the training split, and split shuffled pixels 0.64 : 0.16 : 0.20.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

__all__ = [
    "HyperCube",
    "GroundTruth",
    "PixelDataset",
    "SplitDataset",
    "NormalizationStats",
    "load_envi",
    "write_envi",
    "load_ground_truth",
    "remove_bands",
    "mask_background",
    "normalize_minmax",
    "shuffle_split",
]

# ENVI numeric codes for the supported sample types
_ENVI_DTYPES = {4: np.float32, 5: np.float64, 12: np.uint16}
_DTYPE_TO_ENVI = {np.dtype(v): k for k, v in _ENVI_DTYPES.items()}
_INTERLEAVES = ("bsq", "bil", "bip")


@dataclass(frozen=True)
class HyperCube:
    """Dense radiance cube indexed data[x, y, band]."""

    data: np.ndarray
    wavelengths: Optional[np.ndarray] = None

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError("cube data must be (width, height, bands)")
        if not np.isfinite(arr).all():
            raise ValueError("cube contains non-finite values")
        object.__setattr__(self, "data", arr)
        if self.wavelengths is not None:
            w = np.asarray(self.wavelengths, dtype=np.float64)
            if w.shape != (arr.shape[2],):
                raise ValueError("wavelength list must have one entry per band")
            object.__setattr__(self, "wavelengths", w)

    @property
    def width(self) -> int:
        return int(self.data.shape[0])

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def bands(self) -> int:
        return int(self.data.shape[2])


@dataclass(frozen=True)
class GroundTruth:
    """Per-pixel integer class ids; 0 is reserved for background."""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2:
            raise ValueError("labels must be a (width, height) grid")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("labels must be integers")
        if (arr < 0).any():
            raise ValueError("class ids must be non-negative")
        object.__setattr__(self, "labels", arr.astype(np.int64))

    @property
    def width(self) -> int:
        return int(self.labels.shape[0])

    @property
    def height(self) -> int:
        return int(self.labels.shape[1])


@dataclass(frozen=True)
class PixelDataset:
    """Masked pixels as rows, aligned with labels and source coordinates."""

    pixels: np.ndarray
    labels: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        px = np.atleast_2d(np.asarray(self.pixels, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64)
        coords = np.asarray(self.coords, dtype=np.int64)
        n = px.shape[0]
        if labels.shape != (n,) or coords.shape != (n, 2):
            raise ValueError("pixels, labels and coords must be index-aligned")
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def band_count(self) -> int:
        return int(self.pixels.shape[1])

    def take(self, index: np.ndarray) -> "PixelDataset":
        return PixelDataset(self.pixels[index], self.labels[index], self.coords[index])


@dataclass(frozen=True)
class SplitDataset:
    train: PixelDataset
    validation: PixelDataset
    test: PixelDataset
    seed: int


@dataclass(frozen=True)
class NormalizationStats:
    band_min: np.ndarray
    band_max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.band_min, dtype=np.float64)
        hi = np.asarray(self.band_max, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("per-band stats must be aligned vectors")
        if (hi < lo).any():
            raise ValueError("band max must not fall below band min")
        object.__setattr__(self, "band_min", lo)
        object.__setattr__(self, "band_max", hi)


def _parse_envi_header(path: str) -> Dict[str, str]:
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        text = fh.read()
    if not text.lstrip().lower().startswith("envi"):
        raise ValueError(f"{path} does not start with an ENVI signature")
    fields: Dict[str, str] = {}
    # values in braces may span lines; consume until the closing brace
    pattern = re.compile(r"^\s*([\w ]+?)\s*=\s*(\{.*?\}|[^\n]*)\s*$", re.M | re.S)
    pos = 0
    body = text[text.lower().index("envi") + 4 :]
    while True:
        match = pattern.search(body, pos)
        if match is None:
            break
        key = " ".join(match.group(1).lower().split())
        value = match.group(2).strip()
        if value.startswith("{") and not value.endswith("}"):
            end = body.find("}", match.start(2))
            if end == -1:
                raise ValueError(f"unterminated brace value for {key!r} in {path}")
            value = body[match.start(2) : end + 1]
            pos = end + 1
        else:
            pos = match.end()
        fields[key] = value
    return fields


def _require_int(fields: Dict[str, str], key: str, path: str) -> int:
    if key not in fields:
        raise ValueError(f"header {path} is missing required field {key!r}")
    try:
        return int(fields[key])
    except ValueError as exc:
        raise ValueError(f"header field {key!r} in {path} is not an integer") from exc


def _payload_path(header_path: str) -> str:
    base, ext = os.path.splitext(header_path)
    stem = base if ext.lower() == ".hdr" else header_path
    for suffix in ("", ".img", ".dat", ".raw"):
        candidate = stem + suffix
        if candidate != header_path and os.path.exists(candidate):
            return candidate
    raise FileNotFoundError(f"no payload file found next to header {header_path}")


def load_envi(header_path: str) -> HyperCube:
    """Load an ENVI raster into (x, y, band) order.

    Supports data types float32 (4), float64 (5), uint16 (12), byte order 0
    and the three standard interleaves. The payload sits in the sibling file
    named by dropping .hdr (optionally with .img/.dat/.raw appended).
    """
    fields = _parse_envi_header(header_path)
    samples = _require_int(fields, "samples", header_path)
    lines = _require_int(fields, "lines", header_path)
    bands = _require_int(fields, "bands", header_path)
    dtype_code = _require_int(fields, "data type", header_path)
    if samples < 1 or lines < 1 or bands < 1:
        raise ValueError(f"header {header_path} declares an empty raster")
    if "interleave" not in fields:
        raise ValueError(f"header {header_path} is missing required field 'interleave'")
    interleave = fields["interleave"].strip().lower()
    if interleave not in _INTERLEAVES:
        raise ValueError(f"unsupported interleave {interleave!r} in {header_path}")
    if dtype_code not in _ENVI_DTYPES:
        raise ValueError(f"unsupported data type {dtype_code} in {header_path}")
    byte_order = int(fields.get("byte order", "0"))
    if byte_order != 0:
        raise ValueError("only little-endian (byte order 0) payloads are supported")
    offset = int(fields.get("header offset", "0"))
    dtype = np.dtype(_ENVI_DTYPES[dtype_code]).newbyteorder("<")
    count = samples * lines * bands
    payload = _payload_path(header_path)
    available = os.path.getsize(payload) - offset
    if available < count * dtype.itemsize:
        raise ValueError(
            f"{payload} holds {available} bytes, expected at least "
            f"{count * dtype.itemsize} for {samples}x{lines}x{bands}"
        )
    raw = np.fromfile(payload, dtype=dtype, count=count, offset=offset)
    if interleave == "bsq":
        cube = raw.reshape(bands, lines, samples).transpose(2, 1, 0)
    elif interleave == "bil":
        cube = raw.reshape(lines, bands, samples).transpose(2, 0, 1)
    else:
        cube = raw.reshape(lines, samples, bands).transpose(1, 0, 2)
    wavelengths = None
    if "wavelength" in fields:
        inner = fields["wavelength"].strip().lstrip("{").rstrip("}")
        values = [float(v) for v in inner.replace("\n", " ").split(",") if v.strip()]
        if len(values) != bands:
            raise ValueError(
                f"header {header_path} lists {len(values)} wavelengths "
                f"for {bands} bands"
            )
        wavelengths = np.array(values)
    return HyperCube(data=cube.astype(np.float64), wavelengths=wavelengths)


def write_envi(
    data: np.ndarray,
    header_path: str,
    interleave: str = "bsq",
    dtype_code: int = 5,
    wavelengths: Optional[Sequence[float]] = None,
) -> str:
    """Write an (x, y, band) array or HyperCube as an ENVI header + payload pair.

    Returns the payload path (header path without its .hdr suffix).
    """
    data = np.asarray(getattr(data, "data", data))
    if data.ndim != 3:
        raise ValueError("expected (width, height, bands) data")
    interleave = interleave.lower()
    if interleave not in _INTERLEAVES:
        raise ValueError(f"unsupported interleave {interleave!r}")
    if dtype_code not in _ENVI_DTYPES:
        raise ValueError(f"unsupported data type {dtype_code}")
    if not header_path.endswith(".hdr"):
        raise ValueError("header path must end in .hdr")
    width, height, bands = data.shape
    dtype = np.dtype(_ENVI_DTYPES[dtype_code]).newbyteorder("<")
    if interleave == "bsq":
        ordered = data.transpose(2, 1, 0)
    elif interleave == "bil":
        ordered = data.transpose(1, 2, 0)
    else:
        ordered = data.transpose(1, 0, 2)
    payload_path = header_path[: -len(".hdr")]
    ordered.astype(dtype).tofile(payload_path)
    lines = [
        "ENVI",
        f"samples = {width}",
        f"lines = {height}",
        f"bands = {bands}",
        "header offset = 0",
        f"data type = {dtype_code}",
        f"interleave = {interleave}",
        "byte order = 0",
    ]
    if wavelengths is not None:
        joined = ", ".join(repr(float(w)) for w in wavelengths)
        lines.append(f"wavelength = {{ {joined} }}")
    with open(header_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return payload_path


def load_ground_truth(path: str) -> GroundTruth:
    """Ground truth from a single-band ENVI raster or a palette/gray PNG."""
    if path.lower().endswith(".hdr"):
        cube = load_envi(path)
        if cube.bands != 1:
            raise ValueError(f"ground truth {path} must have exactly one band")
        labels = cube.data[:, :, 0]
        rounded = np.rint(labels)
        if not np.array_equal(labels, rounded):
            raise ValueError(f"ground truth {path} holds non-integer labels")
        return GroundTruth(labels=rounded.astype(np.int64))
    with Image.open(path) as img:
        if img.mode not in ("P", "L", "I", "I;16"):
            raise ValueError(
                f"ground-truth image mode {img.mode!r} does not carry class ids"
            )
        arr = np.asarray(img)
    # image rows are y; cube indexing wants labels[x, y]
    return GroundTruth(labels=arr.astype(np.int64).T)


def remove_bands(cube: HyperCube, drop: Iterable[int]) -> HyperCube:
    """Drop the listed band indices, preserving the order of the rest."""
    drop_set = set(int(b) for b in drop)
    for band in drop_set:
        if not 0 <= band < cube.bands:
            raise ValueError(f"band index {band} out of range 0..{cube.bands - 1}")
    keep = [b for b in range(cube.bands) if b not in drop_set]
    if not keep:
        raise ValueError("cannot drop every band")
    wavelengths = (
        cube.wavelengths[keep] if cube.wavelengths is not None else None
    )
    return HyperCube(data=cube.data[:, :, keep], wavelengths=wavelengths)


def mask_background(cube: HyperCube, gt: GroundTruth) -> PixelDataset:
    """Keep exactly the pixels whose ground-truth label is non-zero."""
    if (gt.width, gt.height) != (cube.width, cube.height):
        raise ValueError(
            f"ground truth {gt.width}x{gt.height} does not match cube "
            f"{cube.width}x{cube.height}"
        )
    mask = gt.labels != 0
    if not mask.any():
        raise ValueError("ground truth labels every pixel as background")
    xs, ys = np.nonzero(mask)
    return PixelDataset(
        pixels=cube.data[xs, ys, :],
        labels=gt.labels[xs, ys],
        coords=np.stack([xs, ys], axis=1),
    )


def normalize_minmax(
    dataset: PixelDataset, stats: Optional[NormalizationStats] = None
) -> Tuple[PixelDataset, NormalizationStats]:
    """Affinely map each band to [0,1]; out-of-range values clamp.

    Without precomputed stats the dataset's own per-band min/max are used
    (and returned, so other splits can reuse them). A constant band maps
    to all zeros.
    """
    if stats is None:
        stats = NormalizationStats(
            band_min=dataset.pixels.min(axis=0), band_max=dataset.pixels.max(axis=0)
        )
    if stats.band_min.shape[0] != dataset.band_count:
        raise ValueError("stats band count does not match the dataset")
    span = stats.band_max - stats.band_min
    safe = np.where(span > 0, span, 1.0)
    scaled = (dataset.pixels - stats.band_min) / safe
    scaled[:, span == 0] = 0.0
    scaled = np.clip(scaled, 0.0, 1.0)
    return (
        PixelDataset(pixels=scaled, labels=dataset.labels, coords=dataset.coords),
        stats,
    )


def shuffle_split(dataset: PixelDataset, seed: int) -> SplitDataset:
    """Shuffle once, cut 80/20 into rest/test, cut the rest 80/20 again.

    Rounding sends remainders to the training part; every part stays
    non-empty, which needs at least 5 pixels.
    """
    n = dataset.n
    if n < 5:
        raise ValueError(f"need at least 5 pixels to split, got {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_test = max(1, n // 5)
    rest = n - n_test
    n_val = max(1, rest // 5)
    n_train = rest - n_val
    train_idx = order[:n_train]
    val_idx = order[n_train : n_train + n_val]
    test_idx = order[n_train + n_val :]
    return SplitDataset(
        train=dataset.take(train_idx),
        validation=dataset.take(val_idx),
        test=dataset.take(test_idx),
        seed=int(seed),
    )
