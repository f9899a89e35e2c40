"""Pose-regression network: CNN features -> dropout -> spatial reshape ->
stacked LSTM -> fully connected heads, plus the position+quaternion loss.

The CNN ends in a fully connected layer of width F = S*S; that vector is
read row-major as S steps of S-dimensional LSTM inputs. Each LSTM layer
consumes the full hidden sequence of the previous layer, and the final
hidden state of the top layer feeds the head. The loss is the sum of the
Euclidean position error and the Euclidean distance between the raw
predicted quaternion and the unit groundtruth quaternion; the prediction
quaternion is normalized only at inference time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DegenerateOutputError, NumericError, ShapeError
from .event_image import EventImage
from .events import PoseLabel


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``conv_blocks`` entries are (out_channels, kernel, stride, pool); each
    block is conv (zero-padded to keep dims at stride 1) -> relu -> maxpool.
    ``feature_dim`` must be a perfect square S*S; the LSTM runs over S steps
    of width S.
    """

    input_h: int = 64
    input_w: int = 64
    conv_blocks: tuple[tuple[int, int, int, int], ...] = ((8, 3, 1, 2), (16, 3, 1, 2))
    feature_dim: int = 256
    lstm_hidden: int = 64
    lstm_layers: int = 2
    fc_hidden: int = 128
    dropout_rate: float = 0.5

    def __post_init__(self):
        s = math.isqrt(self.feature_dim)
        if s * s != self.feature_dim:
            raise ValueError(f"feature_dim must be a perfect square, got {self.feature_dim}")
        if self.lstm_layers < 1:
            raise ValueError(f"lstm_layers must be >= 1, got {self.lstm_layers}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        object.__setattr__(self, "conv_blocks", tuple(tuple(b) for b in self.conv_blocks))

    @property
    def seq_len(self) -> int:
        """S: both the number of LSTM steps and their input width."""
        return math.isqrt(self.feature_dim)

    def conv_output_shape(self) -> tuple[int, int, int]:
        """(channels, h, w) after the conv/pool stack."""
        c, h, w = 1, self.input_h, self.input_w
        for out_ch, kernel, stride, pool in self.conv_blocks:
            pad = kernel // 2
            h = (h + 2 * pad - kernel) // stride + 1
            w = (w + 2 * pad - kernel) // stride + 1
            if pool > 1:
                if h % pool or w % pool:
                    raise ValueError(f"pool {pool} does not tile {h}x{w} feature map")
                h //= pool
                w //= pool
            c = out_ch
        if h < 1 or w < 1:
            raise ValueError("conv stack shrinks the input to nothing")
        return c, h, w

    def to_dict(self) -> dict:
        return {
            "input_h": self.input_h,
            "input_w": self.input_w,
            "conv_blocks": [list(b) for b in self.conv_blocks],
            "feature_dim": self.feature_dim,
            "lstm_hidden": self.lstm_hidden,
            "lstm_layers": self.lstm_layers,
            "fc_hidden": self.fc_hidden,
            "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            input_h=int(d["input_h"]),
            input_w=int(d["input_w"]),
            conv_blocks=tuple(tuple(int(v) for v in b) for b in d["conv_blocks"]),
            feature_dim=int(d["feature_dim"]),
            lstm_hidden=int(d["lstm_hidden"]),
            lstm_layers=int(d["lstm_layers"]),
            fc_hidden=int(d["fc_hidden"]),
            dropout_rate=float(d["dropout_rate"]),
        )


def toy_config() -> ModelConfig:
    """A minutes-free configuration for gradient checks: 8x8 input, F=16."""
    return ModelConfig(
        input_h=8,
        input_w=8,
        conv_blocks=((4, 3, 1, 2),),
        feature_dim=16,
        lstm_hidden=8,
        lstm_layers=2,
        fc_hidden=8,
        dropout_rate=0.5,
    )


def desk_config() -> ModelConfig:
    """The default desk-scale configuration (64x64 input, F=256)."""
    return ModelConfig()


@dataclass(eq=False)
class ModelParams:
    """Every learnable tensor, keyed by canonical name, with its config."""

    config: ModelConfig
    tensors: dict[str, Tensor]

    def ordered(self) -> list[Tensor]:
        return [self.tensors[name] for name, _ in param_manifest(self.config)]


@dataclass(eq=False)
class LstmLayerParams:
    """Per-gate weights of one LSTM layer (i, f, o, g gate order)."""

    w_xi: Tensor
    w_hi: Tensor
    b_i: Tensor
    w_xf: Tensor
    w_hf: Tensor
    b_f: Tensor
    w_xo: Tensor
    w_ho: Tensor
    b_o: Tensor
    w_xg: Tensor
    w_hg: Tensor
    b_g: Tensor


@dataclass(eq=False)
class LstmState:
    h: Tensor
    c: Tensor


@dataclass(eq=False)
class PosePrediction:
    """Predicted position, raw quaternion head output, and its unit version."""

    p_hat: np.ndarray
    q_hat_raw: np.ndarray
    q_hat: np.ndarray


_GATES = ("i", "f", "o", "g")


def param_manifest(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) list defining parameter and checkpoint order."""
    manifest: list[tuple[str, tuple[int, ...]]] = []
    cin = 1
    for i, (cout, kernel, _stride, _pool) in enumerate(config.conv_blocks):
        manifest.append((f"conv{i}.w", (cout, cin, kernel, kernel)))
        manifest.append((f"conv{i}.b", (cout,)))
        cin = cout
    c, h, w = config.conv_output_shape()
    manifest.append(("feat.w", (c * h * w, config.feature_dim)))
    manifest.append(("feat.b", (1, config.feature_dim)))
    s = config.seq_len
    for layer in range(config.lstm_layers):
        in_dim = s if layer == 0 else config.lstm_hidden
        for gate in _GATES:
            manifest.append((f"lstm{layer}.w_x{gate}", (in_dim, config.lstm_hidden)))
            manifest.append((f"lstm{layer}.w_h{gate}", (config.lstm_hidden, config.lstm_hidden)))
            manifest.append((f"lstm{layer}.b_{gate}", (1, config.lstm_hidden)))
    manifest.append(("head.fc1.w", (config.lstm_hidden, config.fc_hidden)))
    manifest.append(("head.fc1.b", (1, config.fc_hidden)))
    manifest.append(("head.out.w", (config.fc_hidden, 7)))
    manifest.append(("head.out.b", (1, 7)))
    return manifest


def _fans(name: str, shape: tuple[int, ...]) -> tuple[int, int]:
    if name.startswith("conv"):
        cout, cin, kh, kw = shape
        return cin * kh * kw, cout * kh * kw
    return shape[0], shape[1]


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Glorot-uniform weights (a = sqrt(6 / (fan_in + fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    for name, shape in param_manifest(config):
        if name.endswith(".b") or ".b_" in name:
            tensors[name] = ad.parameter(np.zeros(shape))
        else:
            a = math.sqrt(6.0 / sum(_fans(name, shape)))
            tensors[name] = ad.parameter(rng.uniform(-a, a, size=shape))
    return ModelParams(config, tensors)


def cnn_forward(
    image: EventImage,
    params: ModelParams,
    training: bool = False,
    rng_seed: int | None = None,
) -> Tensor:
    """Conv/pool/relu blocks, flatten, FC to width F, dropout (training only)."""
    cfg = params.config
    if (image.h, image.w) != (cfg.input_h, cfg.input_w):
        raise ShapeError(
            f"image {image.h}x{image.w} does not match configured input "
            f"{cfg.input_h}x{cfg.input_w}"
        )
    t = ad.tensor(image.pixels.reshape(1, cfg.input_h, cfg.input_w))
    for i, (_cout, kernel, stride, pool) in enumerate(cfg.conv_blocks):
        t = ad.conv2d(
            t,
            params.tensors[f"conv{i}.w"],
            params.tensors[f"conv{i}.b"],
            stride=stride,
            padding=kernel // 2,
        )
        t = ad.relu(t)
        if pool > 1:
            t = ad.maxpool2d(t, pool)
    t = ad.reshape(t, (1, t.data.size))
    t = ad.add(ad.matmul(t, params.tensors["feat.w"]), params.tensors["feat.b"])
    return ad.dropout(t, cfg.dropout_rate, training=training, seed=rng_seed)


def reshape_features(v: Tensor) -> list[Tensor]:
    """Row-major view of a length-S*S vector as S inputs of width S."""
    n = v.data.size
    s = math.isqrt(n)
    if s * s != n:
        raise ShapeError(f"feature length {n} is not a perfect square")
    grid = ad.reshape(v, (s, s))
    return [ad.slice_along(grid, axis=0, start=j, stop=j + 1) for j in range(s)]


def lstm_layer(params: ModelParams, layer: int) -> LstmLayerParams:
    """View of one layer's gate tensors."""
    t = params.tensors
    kwargs = {}
    for gate in _GATES:
        kwargs[f"w_x{gate}"] = t[f"lstm{layer}.w_x{gate}"]
        kwargs[f"w_h{gate}"] = t[f"lstm{layer}.w_h{gate}"]
        kwargs[f"b_{gate}"] = t[f"lstm{layer}.b_{gate}"]
    return LstmLayerParams(**kwargs)


def zero_state(hidden: int) -> LstmState:
    return LstmState(ad.tensor(np.zeros((1, hidden))), ad.tensor(np.zeros((1, hidden))))


def _gate(x: Tensor, h: Tensor, w_x: Tensor, w_h: Tensor, b: Tensor) -> Tensor:
    return ad.linear_pair(x, w_x, h, w_h, b)


def lstm_step(x: Tensor, state: LstmState, layer: LstmLayerParams) -> LstmState:
    """One LSTM cell update.

    i = sigmoid(x W_xi + h W_hi + b_i), f/o likewise, g = tanh(...),
    c' = f * c + i * g, h' = o * tanh(c').
    """
    i = ad.sigmoid(_gate(x, state.h, layer.w_xi, layer.w_hi, layer.b_i))
    f = ad.sigmoid(_gate(x, state.h, layer.w_xf, layer.w_hf, layer.b_f))
    o = ad.sigmoid(_gate(x, state.h, layer.w_xo, layer.w_ho, layer.b_o))
    g = ad.tanh(_gate(x, state.h, layer.w_xg, layer.w_hg, layer.b_g))
    c = ad.add(ad.mul(f, state.c), ad.mul(i, g))
    h = ad.mul(o, ad.tanh(c))
    return LstmState(h, c)


def stacked_lstm_forward(seq: Sequence[Tensor], layers: Sequence[LstmLayerParams]) -> Tensor:
    """Run the layer stack over the sequence; return the top layer's final h.

    Layer 0 consumes ``seq``; every later layer consumes the full hidden
    sequence of the layer below. States start at zero.
    """
    if len(seq) == 0:
        raise ShapeError("stacked_lstm_forward: empty input sequence")
    if len(layers) == 0:
        raise ShapeError("stacked_lstm_forward: need at least one layer")
    hidden = layers[0].w_hi.data.shape[0]
    outputs = list(seq)
    state = None
    for layer in layers:
        state = zero_state(hidden)
        hs = []
        for x in outputs:
            state = lstm_step(x, state, layer)
            hs.append(state.h)
        outputs = hs
    return state.h


def pose_head(h: Tensor, params: ModelParams, training: bool = False) -> Tensor:
    """FC(relu) then linear FC to the 7-vector (p1, p2, p3, qx, qy, qz, qw).

    ``training`` is accepted for interface symmetry; the head has no
    stochastic layers.
    """
    t = ad.relu(ad.add(ad.matmul(h, params.tensors["head.fc1.w"]), params.tensors["head.fc1.b"]))
    return ad.add(ad.matmul(t, params.tensors["head.out.w"]), params.tensors["head.out.b"])


def forward(
    image: EventImage,
    params: ModelParams,
    training: bool = False,
    rng_seed: int | None = None,
) -> Tensor:
    """Full network: CNN features -> reshape -> stacked LSTM -> head."""
    features = cnn_forward(image, params, training=training, rng_seed=rng_seed)
    seq = reshape_features(features)
    layers = [lstm_layer(params, i) for i in range(params.config.lstm_layers)]
    h = stacked_lstm_forward(seq, layers)
    return pose_head(h, params, training=training)


def pose_loss(pred: Tensor, label: PoseLabel) -> Tensor:
    """||p_hat - p||_2 + ||q_hat - q||_2 with the raw (unnormalized) q_hat."""
    if pred.data.shape != (1, 7):
        raise ShapeError(f"pose_loss expects a (1, 7) prediction, got {pred.data.shape}")
    if not np.all(np.isfinite(pred.data)):
        raise NumericError("non-finite prediction in pose_loss")
    if not (np.all(np.isfinite(label.p)) and np.all(np.isfinite(label.q))):
        raise NumericError("non-finite label in pose_loss")
    p_hat = ad.slice_along(pred, axis=1, start=0, stop=3)
    q_hat = ad.slice_along(pred, axis=1, start=3, stop=7)
    p = ad.tensor(label.p.reshape(1, 3))
    q = ad.tensor(label.q.reshape(1, 4))
    return ad.add(ad.l2norm(ad.sub(p_hat, p)), ad.l2norm(ad.sub(q_hat, q)))


def unit_quaternion(q_raw: np.ndarray) -> np.ndarray:
    """Scale a raw quaternion output to unit length."""
    n = float(np.linalg.norm(q_raw))
    if n == 0.0:
        raise DegenerateOutputError("network produced a zero-norm quaternion")
    if not math.isfinite(n):
        raise DegenerateOutputError("network produced a non-finite quaternion")
    return q_raw / n


def predict(image: EventImage, params: ModelParams) -> PosePrediction:
    """Deterministic inference; the quaternion is normalized here only."""
    with ad.no_grad():
        out = forward(image, params, training=False)
    vec = out.data[0]
    p_hat = vec[:3].copy()
    q_raw = vec[3:7].copy()
    return PosePrediction(p_hat, q_raw, unit_quaternion(q_raw))
