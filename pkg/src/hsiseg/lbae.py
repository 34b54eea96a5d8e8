"""Latent-binarizing 1D-convolutional autoencoder.

Encoder: four Conv1d layers, tanh after each, then a sign binarizer on the
latent vector. Decoder mirrors the encoder with transposed convolutions and
a sigmoid output. Training backpropagates through the binarizer with a
straight-through estimator whose surrogate is hardtanh.

Everything runs in float64 on CPU; weights come from a seeded numpy RNG so
models are reproducible independent of torch's global state.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from . import metrics

__all__ = [
    "Conv1dSpec",
    "ENCODER_SPECS",
    "LbaeTrainConfig",
    "Encoder",
    "Decoder",
    "build_models",
    "encode",
    "decode",
    "train_lbae",
    "grid_search_lbae",
    "reconstruction_metrics",
    "save_lbae",
    "load_lbae",
]

BATCH_GRID = (4, 8, 16)
LEARNING_RATE_GRID = (1e-2, 1e-3, 1e-4)
LBAE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Conv1dSpec:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    dilation: int = 1

    def output_length(self, length_in: int) -> int:
        out = (
            length_in
            + 2 * self.padding
            - self.dilation * (self.kernel - 1)
            - 1
        ) // self.stride + 1
        if out < 1:
            raise ValueError(f"layer {self} collapses length {length_in} to {out}")
        return out


# kernels (3, 4, 4, 3), strides (1, 2, 2, 1), padding 1 throughout: maps an
# input of length 112 through 112 -> 56 -> 28 -> 28, one channel at the end
ENCODER_SPECS: Tuple[Conv1dSpec, ...] = (
    Conv1dSpec(1, 16, kernel=3, stride=1, padding=1),
    Conv1dSpec(16, 32, kernel=4, stride=2, padding=1),
    Conv1dSpec(32, 16, kernel=4, stride=2, padding=1),
    Conv1dSpec(16, 1, kernel=3, stride=1, padding=1),
)


@dataclass(frozen=True)
class LbaeTrainConfig:
    batch_size: int = 4
    learning_rate: float = 1e-3
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.learning_rate <= 0 or self.epochs < 0:
            raise ValueError("batch_size, learning_rate must be positive; epochs >= 0")


class _BinarizeSte(torch.autograd.Function):
    """Forward sign threshold (>= 0 maps to 1); backward passes the gradient
    through unchanged wherever |input| <= 1 and blocks it elsewhere."""

    @staticmethod
    def forward(ctx, t):
        ctx.save_for_backward(t)
        return (t >= 0).to(t.dtype)

    @staticmethod
    def backward(ctx, grad_output):
        (t,) = ctx.saved_tensors
        return grad_output * (t.abs() <= 1).to(t.dtype)


def _init_conv(layer: nn.Module, fan_in: int, rng: np.random.Generator) -> None:
    bound = 1.0 / math.sqrt(fan_in)
    with torch.no_grad():
        layer.weight.copy_(
            torch.from_numpy(rng.uniform(-bound, bound, size=tuple(layer.weight.shape)))
        )
        layer.bias.copy_(
            torch.from_numpy(rng.uniform(-bound, bound, size=tuple(layer.bias.shape)))
        )


class Encoder(nn.Module):
    """Conv stack with tanh activations and a binarized latent code."""

    def __init__(
        self,
        specs: Sequence[Conv1dSpec] = ENCODER_SPECS,
        input_length: int = 112,
        rng: Optional[np.random.Generator] = None,
    ):
        super().__init__()
        if not specs:
            raise ValueError("encoder needs at least one layer")
        if specs[0].in_channels != 1:
            raise ValueError("first encoder layer must take a single channel")
        self.specs = tuple(specs)
        self.input_length = int(input_length)
        lengths = [self.input_length]
        for spec in self.specs:
            lengths.append(spec.output_length(lengths[-1]))
        self.lengths = tuple(lengths)
        self.latent_channels = self.specs[-1].out_channels
        self.latent_length = lengths[-1]
        self.latent_dim = self.latent_channels * self.latent_length
        self.convs = nn.ModuleList(
            nn.Conv1d(
                s.in_channels,
                s.out_channels,
                s.kernel,
                stride=s.stride,
                padding=s.padding,
                dilation=s.dilation,
            )
            for s in self.specs
        )
        self.double()
        if rng is not None:
            for spec, conv in zip(self.specs, self.convs):
                _init_conv(conv, spec.in_channels * spec.kernel, rng)

    def forward(
        self, x: torch.Tensor, binarize: bool = True, surrogate: bool = False
    ) -> torch.Tensor:
        if x.shape[-1] != self.input_length:
            raise ValueError(
                f"input length {x.shape[-1]}, expected {self.input_length}"
            )
        h = x.reshape(-1, 1, self.input_length)
        for conv in self.convs:
            h = torch.tanh(conv(h))
        t = h.reshape(h.shape[0], self.latent_dim)
        if surrogate:
            return torch.clamp(t, -1.0, 1.0)
        if binarize:
            return _BinarizeSte.apply(t)
        return t


class Decoder(nn.Module):
    """Transposed-conv mirror of an encoder; sigmoid keeps output in (0,1)."""

    def __init__(
        self,
        specs: Sequence[Conv1dSpec],
        output_paddings: Sequence[int],
        latent_channels: int,
        latent_length: int,
        rng: Optional[np.random.Generator] = None,
    ):
        super().__init__()
        self.specs = tuple(specs)
        self.output_paddings = tuple(int(p) for p in output_paddings)
        self.latent_channels = int(latent_channels)
        self.latent_length = int(latent_length)
        self.latent_dim = self.latent_channels * self.latent_length
        self.convs = nn.ModuleList(
            nn.ConvTranspose1d(
                s.in_channels,
                s.out_channels,
                s.kernel,
                stride=s.stride,
                padding=s.padding,
                dilation=s.dilation,
                output_padding=op,
            )
            for s, op in zip(self.specs, self.output_paddings)
        )
        self.output_length = self._trace_length()
        self.double()
        if rng is not None:
            for spec, conv in zip(self.specs, self.convs):
                _init_conv(conv, spec.in_channels * spec.kernel, rng)

    def _trace_length(self) -> int:
        length = self.latent_length
        for spec, op in zip(self.specs, self.output_paddings):
            length = (
                (length - 1) * spec.stride
                - 2 * spec.padding
                + spec.dilation * (spec.kernel - 1)
                + op
                + 1
            )
        return length

    @classmethod
    def mirror_of(cls, encoder: Encoder, rng: Optional[np.random.Generator] = None):
        """Reverse the encoder's layers, swapping channel directions.

        output_padding recovers the exact intermediate lengths the encoder
        saw, which strided layers alone cannot always reproduce.
        """
        specs: List[Conv1dSpec] = []
        paddings: List[int] = []
        length = encoder.latent_length
        for spec, target in zip(
            reversed(encoder.specs), reversed(encoder.lengths[:-1])
        ):
            mirrored = Conv1dSpec(
                in_channels=spec.out_channels,
                out_channels=spec.in_channels,
                kernel=spec.kernel,
                stride=spec.stride,
                padding=spec.padding,
                dilation=spec.dilation,
            )
            bare = (
                (length - 1) * spec.stride
                - 2 * spec.padding
                + spec.dilation * (spec.kernel - 1)
                + 1
            )
            output_padding = target - bare
            if not 0 <= output_padding < spec.stride:
                raise ValueError(
                    f"cannot mirror layer {spec}: needs output_padding "
                    f"{output_padding}"
                )
            specs.append(mirrored)
            paddings.append(output_padding)
            length = target
        return cls(
            specs,
            paddings,
            encoder.latent_channels,
            encoder.latent_length,
            rng=rng,
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.latent_dim:
            raise ValueError(f"latent length {z.shape[-1]}, expected {self.latent_dim}")
        h = z.reshape(-1, self.latent_channels, self.latent_length)
        for conv in self.convs[:-1]:
            h = torch.tanh(conv(h))
        h = torch.sigmoid(self.convs[-1](h))
        return h.reshape(h.shape[0], -1)


def build_models(
    input_length: int = 112,
    specs: Sequence[Conv1dSpec] = ENCODER_SPECS,
    seed: int = 0,
) -> Tuple[Encoder, Decoder]:
    rng = np.random.default_rng(seed)
    encoder = Encoder(specs, input_length, rng=rng)
    decoder = Decoder.mirror_of(encoder, rng=rng)
    return encoder, decoder


def _as_batch(x: np.ndarray, width: int, what: str) -> Tuple[torch.Tensor, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != width:
        raise ValueError(f"{what} has length {arr.shape[1]}, expected {width}")
    return torch.from_numpy(arr), single


def encode(model: Encoder, pixel: np.ndarray) -> np.ndarray:
    """Binary latent code for one pixel or a batch of pixels."""
    batch, single = _as_batch(pixel, model.input_length, "pixel")
    with torch.no_grad():
        z = model(batch, binarize=True).numpy().astype(np.uint8)
    return z[0] if single else z


def decode(model: Decoder, latent: np.ndarray) -> np.ndarray:
    """Reconstruction in (0,1) for one latent code or a batch."""
    batch, single = _as_batch(latent, model.latent_dim, "latent")
    with torch.no_grad():
        x = model(batch).numpy()
    return x[0] if single else x


def _full_pass_loss(encoder: Encoder, decoder: Decoder, data: torch.Tensor) -> float:
    with torch.no_grad():
        recon = decoder(encoder(data, binarize=True))
        return float(torch.mean((recon - data) ** 2))


def train_lbae(
    data,
    config: LbaeTrainConfig,
    specs: Sequence[Conv1dSpec] = ENCODER_SPECS,
    input_length: Optional[int] = None,
) -> Tuple[Encoder, Decoder, List[Dict[str, float]]]:
    """SGD on mean squared reconstruction error.

    data provides .train and .validation parts: float matrices in [0,1], or
    objects with a .pixels matrix. The loss history holds one row per epoch
    with full-pass train and validation MSE.
    """
    train = np.asarray(getattr(data.train, "pixels", data.train), dtype=np.float64)
    if train.ndim != 2 or train.shape[0] == 0:
        raise ValueError("training split must be a non-empty matrix")
    validation = getattr(data, "validation", None)
    if validation is not None:
        validation = getattr(validation, "pixels", validation)
    width = train.shape[1] if input_length is None else int(input_length)
    encoder, decoder = build_models(width, specs, seed=config.seed)
    train_t = torch.from_numpy(train)
    val_t = (
        torch.from_numpy(np.asarray(validation, dtype=np.float64))
        if validation is not None and len(validation)
        else None
    )
    optimizer = torch.optim.SGD(
        list(encoder.parameters()) + list(decoder.parameters()),
        lr=config.learning_rate,
    )
    rng = np.random.default_rng(config.seed)
    history: List[Dict[str, float]] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(train.shape[0])
        for start in range(0, train.shape[0], config.batch_size):
            batch = train_t[order[start : start + config.batch_size]]
            optimizer.zero_grad()
            recon = decoder(encoder(batch, binarize=True))
            loss = torch.mean((recon - batch) ** 2)
            loss.backward()
            optimizer.step()
        history.append(
            {
                "epoch": float(epoch),
                "train_loss": _full_pass_loss(encoder, decoder, train_t),
                "val_loss": (
                    _full_pass_loss(encoder, decoder, val_t)
                    if val_t is not None
                    else float("nan")
                ),
            }
        )
    return encoder, decoder, history


def reconstruction_metrics(
    encoder: Encoder, decoder: Decoder, dataset: np.ndarray
) -> Tuple[float, float]:
    """Mean Euclidean distance and mean spectral angle over reconstructions."""
    dataset = np.atleast_2d(np.asarray(dataset, dtype=np.float64))
    if dataset.shape[0] == 0:
        raise ValueError("empty dataset")
    recon = decode(decoder, encode(encoder, dataset).astype(np.float64))
    euclids = [metrics.euclidean(x, r) for x, r in zip(dataset, recon)]
    angles = [metrics.spectral_angle(x, r) for x, r in zip(dataset, recon)]
    return float(np.mean(euclids)), float(np.mean(angles))


def grid_search_lbae(
    data,
    epochs: int,
    seed: int,
    batch_grid: Sequence[int] = BATCH_GRID,
    lr_grid: Sequence[float] = LEARNING_RATE_GRID,
    on_cell=None,
) -> Tuple[List[Dict[str, float]], Tuple[Encoder, Decoder], Dict[str, float]]:
    """Train one model per (batch size, learning rate) cell; score on test.

    The winner minimizes mean Euclidean reconstruction distance, with ties
    broken by spectral angle, then smaller batch, then smaller rate. A model
    that dominates both metrics is therefore always selected.
    on_cell(row, encoder, decoder) fires after each cell trains.
    """
    test = np.asarray(getattr(data.test, "pixels", data.test), dtype=np.float64)
    if test.ndim != 2 or test.shape[0] == 0:
        raise ValueError("grid search needs a non-empty test split")
    rows: List[Dict[str, float]] = []
    best_key = None
    best_models: Optional[Tuple[Encoder, Decoder]] = None
    best_row: Optional[Dict[str, float]] = None
    for batch_size in batch_grid:
        for lr in lr_grid:
            config = LbaeTrainConfig(
                batch_size=batch_size, learning_rate=lr, epochs=epochs, seed=seed
            )
            encoder, decoder, _ = train_lbae(data, config)
            euclid, sad = reconstruction_metrics(encoder, decoder, test)
            row = {
                "batch_size": float(batch_size),
                "learning_rate": lr,
                "euclidean": euclid,
                "sad": sad,
            }
            rows.append(row)
            if on_cell is not None:
                on_cell(dict(row), encoder, decoder)
            key = (euclid, sad, batch_size, lr)
            if best_key is None or key < best_key:
                best_key = key
                best_models = (encoder, decoder)
                best_row = row
    return rows, best_models, dict(best_row)


def write_loss_csv(history: List[Dict[str, float]], path: str) -> None:
    """Loss history as epoch,train_loss,val_loss rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for row in history:
            writer.writerow(
                [
                    int(row["epoch"]),
                    repr(float(row["train_loss"])),
                    repr(float(row["val_loss"])),
                ]
            )


def _layer_payload(spec: Conv1dSpec, layer: nn.Module, extra: Dict) -> Dict:
    payload = {"spec": asdict(spec), **extra}
    payload["weight"] = layer.weight.detach().numpy().tolist()
    payload["bias"] = layer.bias.detach().numpy().tolist()
    return payload


def save_lbae(
    encoder: Encoder, decoder: Decoder, path: str, provenance: Optional[dict] = None
) -> None:
    payload = {
        "format": "lbae",
        "version": LBAE_FORMAT_VERSION,
        "input_length": encoder.input_length,
        "latent_channels": encoder.latent_channels,
        "latent_length": encoder.latent_length,
        "encoder": [
            _layer_payload(spec, conv, {})
            for spec, conv in zip(encoder.specs, encoder.convs)
        ],
        "decoder": [
            _layer_payload(spec, conv, {"output_padding": op})
            for spec, conv, op in zip(
                decoder.specs, decoder.convs, decoder.output_paddings
            )
        ],
        "provenance": provenance or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_lbae(path: str) -> Tuple[Encoder, Decoder]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "lbae":
        raise ValueError(f"{path} is not an autoencoder model file")
    if payload.get("version") != LBAE_FORMAT_VERSION:
        raise ValueError(f"unsupported model file version {payload.get('version')!r}")
    enc_specs = [Conv1dSpec(**layer["spec"]) for layer in payload["encoder"]]
    encoder = Encoder(enc_specs, payload["input_length"])
    dec_specs = [Conv1dSpec(**layer["spec"]) for layer in payload["decoder"]]
    decoder = Decoder(
        dec_specs,
        [layer["output_padding"] for layer in payload["decoder"]],
        payload["latent_channels"],
        payload["latent_length"],
    )
    for module, layers in ((encoder, payload["encoder"]), (decoder, payload["decoder"])):
        with torch.no_grad():
            for conv, layer in zip(module.convs, layers):
                conv.weight.copy_(torch.tensor(layer["weight"], dtype=torch.float64))
                conv.bias.copy_(torch.tensor(layer["bias"], dtype=torch.float64))
    return encoder, decoder
