"""Dense float64 tensors with reverse-mode differentiation and momentum SGD.

The op catalogue is the minimum needed to express the pose-regression
network and its loss: elementwise arithmetic, matmul, conv2d, maxpool2d,
sigmoid/tanh/relu, reshape/concat/slice, sum/mean, an L2 norm and seeded
inverted dropout. Gradients are accumulated within a single ``backward``
call; tensors are treated as immutable once they enter a graph.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.linalg.blas import daxpy as blas_daxpy

from .errors import NumericError, ShapeError

Array = np.ndarray

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording (inference mode) within the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A float64 array plus optional provenance for differentiation."""

    __slots__ = ("data", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[Array], tuple] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{grad})"


def tensor(data) -> Tensor:
    """Wrap data as a constant (non-differentiable) tensor."""
    return Tensor(data)


def parameter(data) -> Tensor:
    """Wrap data as a trainable leaf tensor."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _node(data: Array, parents: tuple[Tensor, ...], vjp: Callable[[Array], tuple]) -> Tensor:
    if not (_grad_enabled and any(p.requires_grad for p in parents)):
        return Tensor(data)
    out = Tensor(data, requires_grad=True)
    out._parents = parents
    out._vjp = vjp
    return out


def _check_same_shape(kind: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{kind}: shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    return _node(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    _check_same_shape("mul", a, b)
    ad, bd = a.data, b.data
    need_a, need_b = a.requires_grad, b.requires_grad
    return _node(
        ad * bd,
        (a, b),
        lambda g: (g * bd if need_a else None, g * ad if need_b else None),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {ad.shape} and {bd.shape}")
    need_a, need_b = a.requires_grad, b.requires_grad

    def vjp(g: Array) -> tuple:
        # (1, n) x (n, m) is the hot path; its weight gradient is the outer
        # product ad.T * g, which is cheaper than a k=1 dgemm and bit-equal.
        ga = g @ bd.T if need_a else None
        gb = (ad.T * g if ad.shape[0] == 1 else ad.T @ g) if need_b else None
        return ga, gb

    return _node(ad @ bd, (a, b), vjp)


def linear_pair(x: Tensor, w_x: Tensor, h: Tensor, w_h: Tensor, b: Tensor) -> Tensor:
    """Fused x @ w_x + h @ w_h + b (one graph node for the LSTM gate hot path).

    Bit-identical to composing matmul/add in that order.
    """
    xd, wxd, hd, whd, bd = x.data, w_x.data, h.data, w_h.data, b.data
    if (
        xd.ndim != 2
        or hd.ndim != 2
        or xd.shape[1] != wxd.shape[0]
        or hd.shape[1] != whd.shape[0]
        or wxd.shape[1] != whd.shape[1]
        or bd.shape != (xd.shape[0], wxd.shape[1])
    ):
        raise ShapeError(
            f"linear_pair: incompatible shapes {xd.shape}@{wxd.shape} + "
            f"{hd.shape}@{whd.shape} + {bd.shape}"
        )
    out = xd @ wxd + hd @ whd
    out += bd
    needs = (x.requires_grad, w_x.requires_grad, h.requires_grad, w_h.requires_grad)

    def vjp(g: Array) -> tuple:
        return (
            g @ wxd.T if needs[0] else None,
            (xd.T * g if xd.shape[0] == 1 else xd.T @ g) if needs[1] else None,
            g @ whd.T if needs[2] else None,
            (hd.T * g if hd.shape[0] == 1 else hd.T @ g) if needs[3] else None,
            g,
        )

    return _node(out, (x, w_x, h, w_h, b), vjp)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation over a (C_in, H, W) input with zero padding.

    ``w`` has shape (C_out, C_in, kh, kw) and ``b`` shape (C_out,).
    """
    xd, wd, bd = x.data, w.data, b.data
    if xd.ndim != 3 or wd.ndim != 4 or bd.ndim != 1:
        raise ShapeError(
            f"conv2d: need input (C,H,W), kernel (O,C,kh,kw), bias (O,), "
            f"got {xd.shape}, {wd.shape}, {bd.shape}"
        )
    cin, h_in, w_in = xd.shape
    cout, cin_k, kh, kw = wd.shape
    if cin_k != cin or bd.shape[0] != cout:
        raise ShapeError(f"conv2d: channel mismatch input {xd.shape}, kernel {wd.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: bad stride {stride} or padding {padding}")
    xp = np.pad(xd, ((0, 0), (padding, padding), (padding, padding))) if padding else xd
    hp, wp = xp.shape[1], xp.shape[2]
    h_out = (hp - kh) // stride + 1
    w_out = (wp - kw) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"conv2d: kernel {wd.shape} does not fit input {xd.shape}")
    s0, s1, s2 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, (cin, h_out, w_out, kh, kw), (s0, s1 * stride, s2 * stride, s1, s2)
    )
    out = np.tensordot(wd, windows, axes=((1, 2, 3), (0, 3, 4)))
    out += bd[:, None, None]

    need_x, need_w = x.requires_grad, w.requires_grad

    def vjp(g: Array) -> tuple:
        gb = g.sum(axis=(1, 2))
        gw = np.empty_like(wd) if need_w else None
        gxp = np.zeros_like(xp) if need_x else None
        for ky in range(kh):
            for kx in range(kw):
                if need_w:
                    xs = xp[
                        :, ky : ky + h_out * stride : stride, kx : kx + w_out * stride : stride
                    ]
                    gw[:, :, ky, kx] = np.tensordot(g, xs, axes=((1, 2), (1, 2)))
                if need_x:
                    gxp[
                        :, ky : ky + h_out * stride : stride, kx : kx + w_out * stride : stride
                    ] += np.tensordot(wd[:, :, ky, kx], g, axes=(0, 0))
        if not need_x:
            return None, gw, gb
        gx = gxp[:, padding : padding + h_in, padding : padding + w_in] if padding else gxp
        return gx, gw, gb

    return _node(out, (x, w, b), vjp)


def maxpool2d(x: Tensor, window: int) -> Tensor:
    """Non-overlapping max pooling; spatial dims must be divisible by ``window``."""
    xd = x.data
    if xd.ndim != 3:
        raise ShapeError(f"maxpool2d: need (C,H,W) input, got {xd.shape}")
    c, h, w = xd.shape
    if window < 1 or h % window or w % window:
        raise ShapeError(f"maxpool2d: window {window} does not tile input {xd.shape}")
    ho, wo = h // window, w // window
    patches = (
        xd.reshape(c, ho, window, wo, window)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, ho, wo, window * window)
    )
    idx = patches.argmax(axis=3)
    out = np.take_along_axis(patches, idx[..., None], axis=3)[..., 0]

    def vjp(g: Array) -> tuple:
        gp = np.zeros((c, ho, wo, window * window))
        np.put_along_axis(gp, idx[..., None], g[..., None], axis=3)
        gx = (
            gp.reshape(c, ho, wo, window, window)
            .transpose(0, 1, 3, 2, 4)
            .reshape(c, h, w)
        )
        return (gx,)

    return _node(out, (x,), vjp)


def sigmoid(x: Tensor) -> Tensor:
    y = 0.5 * (np.tanh(0.5 * x.data) + 1.0)  # overflow-free logistic
    return _node(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),))


def relu(x: Tensor) -> Tensor:
    xd = x.data
    return _node(np.maximum(xd, 0.0), (x,), lambda g: (g * (xd > 0.0),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    orig = x.data.shape
    shape = tuple(shape)
    if math.prod(shape) != x.data.size:
        raise ShapeError(f"reshape: cannot view {orig} as {shape}")
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    datas = [t.data for t in tensors]
    ndim = datas[0].ndim
    if any(d.ndim != ndim for d in datas):
        raise ShapeError(f"concat: rank mismatch {[d.shape for d in datas]}")
    try:
        out = np.concatenate(datas, axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    offsets = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def vjp(g: Array) -> tuple:
        return tuple(np.split(g, offsets, axis=axis))

    return _node(out, tuple(tensors), vjp)


def slice_along(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    xd = x.data
    if not 0 <= axis < xd.ndim:
        raise ShapeError(f"slice: axis {axis} out of range for shape {xd.shape}")
    if not 0 <= start < stop <= xd.shape[axis]:
        raise ShapeError(f"slice: [{start}:{stop}] invalid for shape {xd.shape} axis {axis}")
    key = tuple(slice(start, stop) if d == axis else slice(None) for d in range(xd.ndim))

    def vjp(g: Array) -> tuple:
        gx = np.zeros_like(xd)
        gx[key] = g
        return (gx,)

    return _node(xd[key], (x,), vjp)


def sum_all(x: Tensor) -> Tensor:
    xd = x.data
    return _node(np.asarray(xd.sum()), (x,), lambda g: (np.full_like(xd, float(g)),))


def mean_all(x: Tensor) -> Tensor:
    xd = x.data
    return _node(
        np.asarray(xd.mean()), (x,), lambda g: (np.full_like(xd, float(g) / xd.size),)
    )


def l2norm(x: Tensor) -> Tensor:
    """Euclidean norm of all elements; subgradient at 0 is defined as 0."""
    xd = x.data
    n = math.sqrt(float((xd * xd).sum()))

    def vjp(g: Array) -> tuple:
        if n == 0.0:
            return (np.zeros_like(xd),)
        return (float(g) / n * xd,)

    return _node(np.asarray(n), (x,), vjp)


def dropout(x: Tensor, rate: float, training: bool, seed: int | None = None) -> Tensor:
    """Inverted dropout: zero elements with probability ``rate`` and scale
    survivors by 1/(1-rate) in training mode; identity at inference.

    The mask is a pure function of (shape, rate, seed).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return _node(x.data, (x,), lambda g: (g,))
    mask = (np.random.default_rng(seed).random(x.data.shape) >= rate) / (1.0 - rate)
    return _node(x.data * mask, (x,), lambda g: (g * mask,))


def backward(output: Tensor, params: Sequence[Tensor] | None = None) -> dict[Tensor, Array]:
    """Reverse-mode gradients of a scalar output.

    Returns a map from leaf tensor to gradient array. When ``params`` is
    given, the map covers exactly those tensors, with zeros for leaves the
    graph does not reach. Returned arrays may share memory with graph
    internals; treat them as read-only.
    """
    if output.data.shape not in ((), (1,)):
        raise ShapeError(f"backward needs a scalar output, got shape {output.data.shape}")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))

    grads: dict[int, Array] = {id(output): np.ones_like(output.data)}
    owned: set[int] = {id(output)}
    for node in reversed(topo):
        if node._vjp is None:
            continue  # leaf: keep its accumulated gradient
        g = grads.pop(id(node), None)
        owned.discard(id(node))
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            pid = id(parent)
            acc = grads.get(pid)
            if acc is None:
                grads[pid] = pg
            else:
                if pid not in owned:
                    acc = acc.copy()  # never mutate an array a vjp may alias
                    grads[pid] = acc
                    owned.add(pid)
                acc += pg

    if params is None:
        leaves = [n for n in topo if n._vjp is None]
    else:
        leaves = list(params)
    result: dict[Tensor, Array] = {}
    for leaf in leaves:
        g = grads.get(id(leaf))
        result[leaf] = g if g is not None else np.zeros_like(leaf.data)
    return result


def grad_check(
    f: Callable[[Sequence[Tensor]], Tensor], params: Sequence[Tensor], eps: float = 1e-4
) -> float:
    """Worst relative error between backward and central finite differences.

    Relative error per coordinate is |a - n| / max(1e-8, |a| + |n|).
    ``f`` must be a deterministic scalar function of ``params``.
    """
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    analytic = backward(f(params), params=list(params))
    worst = 0.0
    for p in params:
        a_flat = np.asarray(analytic[p]).reshape(-1)
        data = p.data.reshape(-1)
        for i in range(data.size):
            orig = data[i]
            data[i] = orig + eps
            with no_grad():
                f_plus = float(f(params).data)
            data[i] = orig - eps
            with no_grad():
                f_minus = float(f(params).data)
            data[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(float(a_flat[i]) - numeric) / max(1e-8, abs(float(a_flat[i])) + abs(numeric))
            worst = max(worst, rel)
    return worst


@dataclass
class OptState:
    """Momentum-SGD state; velocity arrays mirror parameter shapes."""

    lr: float
    momentum: float
    weight_decay: float
    velocity: list[Array]


def make_opt_state(
    params: Sequence[Tensor], lr: float, momentum: float, weight_decay: float
) -> OptState:
    return OptState(lr, momentum, weight_decay, [np.zeros_like(p.data) for p in params])


def _axpy(alpha: float, x: Array, y: Array) -> None:
    """y += alpha * x in place, single pass, no temporary."""
    blas_daxpy(x.reshape(-1), y.reshape(-1), a=alpha)


def sgd_step(
    params: Sequence[Tensor], grads: Mapping[Tensor, Array], state: OptState
) -> tuple[Sequence[Tensor], OptState]:
    """Classical momentum update, in place:

    g' = g + weight_decay * theta;  v = momentum * v + g';  theta -= lr * v
    """
    for p, v in zip(params, state.velocity):
        g = grads[p]
        if g.shape != p.data.shape:
            raise ShapeError(f"sgd_step: gradient shape {g.shape} vs parameter {p.data.shape}")
        # cheap gate: a finite sum implies all elements finite
        if not np.isfinite(g.sum()) and not np.isfinite(g).all():
            raise NumericError("non-finite gradient; optimizer step aborted")
        v *= state.momentum
        v += g
        if state.weight_decay != 0.0:
            _axpy(state.weight_decay, p.data, v)
        _axpy(-state.lr, v, p.data)
    return params, state
