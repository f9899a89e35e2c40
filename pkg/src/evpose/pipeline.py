"""Training loop, configuration, and checkpoint serialization.

Training is per-image SGD (gradients optionally accumulated over a small
batch), fully deterministic given the seed: epoch shuffles and per-sample
dropout masks all derive from one seeded generator.

Checkpoints are a one-line JSON header (format version, model config,
parameter manifest, optimizer hyperparameters, epoch, loss history)
followed by the raw little-endian float64 parameter arrays in manifest
order, then the velocity arrays in the same order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import model as _model
from .errors import CheckpointError, InsufficientDataError, NumericError
from .event_image import image_from_window
from .events import EventWindow
from .model import ModelConfig, ModelParams, param_manifest

_CHECKPOINT_FORMAT = "evpose-checkpoint"
_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    lr: float = 1e-5
    momentum: float = 0.9
    weight_decay: float = 1e-6
    epochs: int = 200
    batch_size: int = 1
    seed: int = 0
    split: str = "random"
    split_fraction: float = 0.7

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError(f"split_fraction must be in (0, 1), got {self.split_fraction}")
        if self.split not in ("random", "novel"):
            raise ValueError(f"split must be 'random' or 'novel', got {self.split!r}")

    def to_json(self) -> str:
        d = {
            "model": self.model.to_dict(),
            "lr": self.lr,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "split": self.split,
            "split_fraction": self.split_fraction,
        }
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        d = json.loads(text)
        kwargs = dict(d)
        if "model" in kwargs:
            kwargs["model"] = ModelConfig.from_dict(kwargs["model"])
        return cls(**kwargs)


@dataclass(eq=False)
class Checkpoint:
    params: ModelParams
    opt_state: ad.OptState
    epoch: int
    loss_history: list[float]


def train(config: TrainConfig, windows: Sequence[EventWindow]) -> Checkpoint:
    """Train from scratch on the given windows; returns the final checkpoint.

    Per epoch the windows are visited in a freshly shuffled order; each
    visit runs the forward pass in training mode (dropout active), the
    position+quaternion loss, backprop and one momentum-SGD step (or a
    gradient-accumulating step every ``batch_size`` samples).
    """
    if len(windows) == 0:
        raise InsufficientDataError("train: no training windows")
    cfg = config.model
    params = _model.init_params(cfg, seed=config.seed)
    tensors = params.ordered()
    opt = ad.make_opt_state(tensors, config.lr, config.momentum, config.weight_decay)
    rng = np.random.default_rng(config.seed)

    images = [image_from_window(w, cfg.input_h, cfg.input_w) for w in windows]
    labels = [w.label for w in windows]

    acc: dict[ad.Tensor, np.ndarray] | None = None
    acc_count = 0

    def flush():
        nonlocal acc, acc_count
        if acc is None or acc_count == 0:
            return
        if acc_count > 1:
            for g in acc.values():
                g /= acc_count
        ad.sgd_step(tensors, acc, opt)
        acc = None
        acc_count = 0

    history: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(windows))
        total = 0.0
        for idx in order.tolist():
            drop_seed = int(rng.integers(0, 2**63))
            out = _model.forward(images[idx], params, training=True, rng_seed=drop_seed)
            loss = _model.pose_loss(out, labels[idx])
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericError(
                    f"non-finite loss at epoch {epoch + 1}, window index {idx}"
                )
            total += value
            grads = ad.backward(loss, params=tensors)
            if config.batch_size == 1:
                ad.sgd_step(tensors, grads, opt)
            else:
                if acc is None:
                    acc = {t: np.array(grads[t]) for t in tensors}
                else:
                    for t in tensors:
                        acc[t] += grads[t]
                acc_count += 1
                if acc_count == config.batch_size:
                    flush()
        flush()  # partial batch at epoch end
        history.append(total / len(order))
    return Checkpoint(params, opt, config.epochs, history)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    manifest = param_manifest(ckpt.params.config)
    header = {
        "format": _CHECKPOINT_FORMAT,
        "version": _CHECKPOINT_VERSION,
        "model": ckpt.params.config.to_dict(),
        "params": [{"name": name, "shape": list(shape)} for name, shape in manifest],
        "optimizer": {
            "lr": ckpt.opt_state.lr,
            "momentum": ckpt.opt_state.momentum,
            "weight_decay": ckpt.opt_state.weight_decay,
        },
        "epoch": ckpt.epoch,
        "loss_history": ckpt.loss_history,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8") + b"\n")
        for name, shape in manifest:
            arr = ckpt.params.tensors[name].data
            if arr.shape != shape:
                raise CheckpointError(f"parameter {name} has shape {arr.shape}, manifest says {shape}")
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for v in ckpt.opt_state.velocity:
            f.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    """Load a checkpoint; reloaded parameters reproduce predictions bit-exactly."""
    with open(path, "rb") as f:
        header_line = f.readline()
        if not header_line.endswith(b"\n"):
            raise CheckpointError("truncated checkpoint header")
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"unreadable checkpoint header: {exc}") from None
        if header.get("format") != _CHECKPOINT_FORMAT:
            raise CheckpointError("not an evpose checkpoint")
        if header.get("version") != _CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {header.get('version')!r}"
            )
        config = ModelConfig.from_dict(header["model"])
        manifest = param_manifest(config)
        stored = [(e["name"], tuple(e["shape"])) for e in header["params"]]
        if stored != manifest:
            raise CheckpointError("checkpoint manifest does not match its model config")

        def read_array(shape):
            count = math.prod(shape)
            raw = f.read(count * 8)
            if len(raw) != count * 8:
                raise CheckpointError("truncated checkpoint data")
            return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()

        tensors = {name: ad.parameter(read_array(shape)) for name, shape in manifest}
        velocity = [read_array(shape) for _, shape in manifest]
        if f.read(1):
            raise CheckpointError("trailing data after checkpoint arrays")
    opt = ad.OptState(
        lr=float(header["optimizer"]["lr"]),
        momentum=float(header["optimizer"]["momentum"]),
        weight_decay=float(header["optimizer"]["weight_decay"]),
        velocity=velocity,
    )
    return Checkpoint(
        params=ModelParams(config, tensors),
        opt_state=opt,
        epoch=int(header["epoch"]),
        loss_history=[float(v) for v in header["loss_history"]],
    )
