"""Pipeline configuration: TOML parsing, validation, seed derivation.

One master seed drives every stage; each stage's RNG seed is derived as
(master XOR first-8-bytes-of-sha256(stage-name)), masked to 63 bits, so
stages stay decorrelated while the whole pipeline remains a single knob.

Manifests are written with a small deterministic TOML emitter: fixed key
order, repr-exact floats, no timestamps, so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, List, Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "PipelineConfig",
    "load_config",
    "stage_seed",
    "write_toml",
    "default_noisy_bands",
]

SAMPLER_KINDS = ("cd1", "sa", "exact", "remote")
LINKAGES = ("complete", "average")
SEGMENT_DISTANCES = ("hamming", "euclidean", "sad")


class ConfigError(ValueError):
    """Configuration file failed validation; message names the field."""


def default_noisy_bands() -> List[int]:
    """Packaged noisy-band list for the blood-stain dataset (config wins)."""
    payload = resources.files("hsiseg").joinpath("data/hyperblood_bands.json")
    return list(json.loads(payload.read_text(encoding="utf-8"))["noisy_bands"])


@dataclass(frozen=True)
class DataSection:
    cube: str = ""
    ground_truth: str = ""
    noisy_bands: Optional[List[int]] = None


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    output_dir: str = "runs"
    tag: str = "run"


@dataclass(frozen=True)
class LbaeSection:
    epochs: int = 100
    grid_epochs: int = 30
    batch_size: int = 4
    learning_rate: float = 1e-3


@dataclass(frozen=True)
class RbmSection:
    hidden: int = 23
    sampler: str = "cd1"
    epochs: int = 200
    learning_rate: float = 0.01
    batch_size: int = 64
    num_reads: int = 100
    checkpoint_every: int = 100


@dataclass(frozen=True)
class AhcSection:
    linkage: str = "complete"
    distance: str = "hamming"
    target_k: int = 7


@dataclass(frozen=True)
class RemoteSection:
    endpoint: str = ""
    timeout: float = 30.0


@dataclass(frozen=True)
class PipelineConfig:
    data: DataSection = field(default_factory=DataSection)
    run: RunSection = field(default_factory=RunSection)
    lbae: LbaeSection = field(default_factory=LbaeSection)
    rbm: RbmSection = field(default_factory=RbmSection)
    ahc: AhcSection = field(default_factory=AhcSection)
    remote: RemoteSection = field(default_factory=RemoteSection)

    def noisy_bands(self) -> List[int]:
        if self.data.noisy_bands is not None:
            return list(self.data.noisy_bands)
        return default_noisy_bands()

    def remote_endpoint(self) -> str:
        """Configured endpoint, else the ANNEAL_ENDPOINT environment fallback."""
        if self.remote.endpoint:
            return self.remote.endpoint
        return os.environ.get("ANNEAL_ENDPOINT", "")


_SECTION_TYPES = {
    "data": DataSection,
    "run": RunSection,
    "lbae": LbaeSection,
    "rbm": RbmSection,
    "ahc": AhcSection,
    "remote": RemoteSection,
}

_FIELD_TYPES = {
    ("data", "cube"): str,
    ("data", "ground_truth"): str,
    ("data", "noisy_bands"): list,
    ("run", "seed"): int,
    ("run", "output_dir"): str,
    ("run", "tag"): str,
    ("lbae", "epochs"): int,
    ("lbae", "grid_epochs"): int,
    ("lbae", "batch_size"): int,
    ("lbae", "learning_rate"): float,
    ("rbm", "hidden"): int,
    ("rbm", "sampler"): str,
    ("rbm", "epochs"): int,
    ("rbm", "learning_rate"): float,
    ("rbm", "batch_size"): int,
    ("rbm", "num_reads"): int,
    ("rbm", "checkpoint_every"): int,
    ("ahc", "linkage"): str,
    ("ahc", "distance"): str,
    ("ahc", "target_k"): int,
    ("remote", "endpoint"): str,
    ("remote", "timeout"): float,
}


def _check_field(section: str, key: str, value):
    expected = _FIELD_TYPES.get((section, key))
    if expected is None:
        raise ConfigError(f"unknown field '{section}.{key}'")
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"field '{section}.{key}' must be a number")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"field '{section}.{key}' must be an integer")
        return int(value)
    if expected is str:
        if not isinstance(value, str):
            raise ConfigError(f"field '{section}.{key}' must be a string")
        return value
    if expected is list:
        if not isinstance(value, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(f"field '{section}.{key}' must be a list of integers")
        return list(value)
    raise ConfigError(f"unhandled field '{section}.{key}'")


def load_config(path: str) -> PipelineConfig:
    """Parse and validate a TOML pipeline configuration."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    sections: Dict[str, object] = {}
    for section, content in raw.items():
        if section not in _SECTION_TYPES:
            raise ConfigError(f"unknown section '[{section}]'")
        if not isinstance(content, dict):
            raise ConfigError(f"section '[{section}]' must be a table")
        kwargs = {
            key: _check_field(section, key, value) for key, value in content.items()
        }
        sections[section] = _SECTION_TYPES[section](**kwargs)
    config = PipelineConfig(**sections)
    _validate(config)
    return config


def _validate(config: PipelineConfig) -> None:
    if config.rbm.sampler not in SAMPLER_KINDS:
        raise ConfigError(
            f"field 'rbm.sampler' must be one of {SAMPLER_KINDS}, "
            f"got {config.rbm.sampler!r}"
        )
    if config.ahc.linkage not in LINKAGES:
        raise ConfigError(
            f"field 'ahc.linkage' must be one of {LINKAGES}, "
            f"got {config.ahc.linkage!r}"
        )
    if config.ahc.distance not in SEGMENT_DISTANCES:
        raise ConfigError(
            f"field 'ahc.distance' must be one of {SEGMENT_DISTANCES}, "
            f"got {config.ahc.distance!r}"
        )
    if config.ahc.target_k < 1:
        raise ConfigError("field 'ahc.target_k' must be at least 1")
    if not 3 <= config.rbm.hidden:
        raise ConfigError("field 'rbm.hidden' must be at least 3")
    for name, value in (
        ("lbae.epochs", config.lbae.epochs),
        ("lbae.grid_epochs", config.lbae.grid_epochs),
        ("rbm.epochs", config.rbm.epochs),
    ):
        if value < 0:
            raise ConfigError(f"field '{name}' must be non-negative")
    for name, value in (
        ("lbae.batch_size", config.lbae.batch_size),
        ("lbae.learning_rate", config.lbae.learning_rate),
        ("rbm.learning_rate", config.rbm.learning_rate),
        ("rbm.batch_size", config.rbm.batch_size),
        ("rbm.num_reads", config.rbm.num_reads),
        ("rbm.checkpoint_every", config.rbm.checkpoint_every),
        ("remote.timeout", config.remote.timeout),
    ):
        if value <= 0:
            raise ConfigError(f"field '{name}' must be positive")
    if config.data.noisy_bands is not None and any(
        b < 0 for b in config.data.noisy_bands
    ):
        raise ConfigError("field 'data.noisy_bands' must hold non-negative indices")


def require_paths(config: PipelineConfig) -> None:
    """Check dataset paths exist; used by commands that read the raw scene."""
    if not config.data.cube:
        raise ConfigError("field 'data.cube' is required for this command")
    if not os.path.exists(config.data.cube):
        raise ConfigError(f"field 'data.cube' points to a missing file: {config.data.cube}")
    if not config.data.ground_truth:
        raise ConfigError("field 'data.ground_truth' is required for this command")
    if not os.path.exists(config.data.ground_truth):
        raise ConfigError(
            f"field 'data.ground_truth' points to a missing file: "
            f"{config.data.ground_truth}"
        )


def stage_seed(master: int, stage: str) -> int:
    """Derive a stage RNG seed: master XOR sha256(stage)[:8], 63-bit."""
    digest = hashlib.sha256(stage.encode("utf-8")).digest()
    stage_bits = int.from_bytes(digest[:8], "big")
    return (int(master) ^ stage_bits) & ((1 << 63) - 1)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError("non-finite floats are not allowed in manifests")
        text = repr(value)
        return text if ("." in text or "e" in text or "E" in text) else text + ".0"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ValueError(f"cannot serialize {type(value).__name__} to TOML")


def write_toml(document: dict, path: str) -> None:
    """Emit a two-level dict as TOML with deterministic bytes."""
    lines: List[str] = []
    scalars = {k: v for k, v in document.items() if not isinstance(v, dict)}
    tables = {k: v for k, v in document.items() if isinstance(v, dict)}
    for key, value in scalars.items():
        lines.append(f"{key} = {_toml_value(value)}")
    for name, table in tables.items():
        if lines:
            lines.append("")
        lines.append(f"[{name}]")
        for key, value in table.items():
            if isinstance(value, dict):
                raise ValueError("manifest nesting deeper than two levels")
            lines.append(f"{key} = {_toml_value(value)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
