"""Dense feedforward networks with explicit forward/backward passes.

All tensors are float64 numpy arrays.  A network is a list of LayerSpec
plus a parallel list of LayerState holding flat parameter vectors.
Affine parameters are packed weight-then-bias: W.ravel() (row-major,
shape (out_dim, in_dim)) followed by the bias (out_dim,).

Inputs may be a single sample of shape (in_dim,) or a batch of shape
(batch, in_dim).  Loss values and loss gradients are means over the
batch rows, so gradient sums over a batch carry a 1/batch factor.

Everything here is deterministic: fixed loop order, no reassociating
reductions, so repeated evaluation of the same inputs is bit-identical.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

AFFINE = "affine"
TANH = "tanh"
RELU = "relu"
IDENTITY = "identity"
LAYER_KINDS = (AFFINE, TANH, RELU, IDENTITY)

MSE = "mse"
SOFTMAX_CE = "softmax_ce"
LOSS_KINDS = (MSE, SOFTMAX_CE)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise DimensionError(f"unknown layer kind {self.kind!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise DimensionError("layer dimensions must be positive")
        if self.kind != AFFINE and self.in_dim != self.out_dim:
            raise DimensionError(f"{self.kind} layer must preserve dimension")

    @property
    def param_count(self) -> int:
        if self.kind == AFFINE:
            return self.out_dim * self.in_dim + self.out_dim
        return 0


def affine(in_dim: int, out_dim: int) -> LayerSpec:
    return LayerSpec(AFFINE, in_dim, out_dim)


def tanh(dim: int) -> LayerSpec:
    return LayerSpec(TANH, dim, dim)


def relu(dim: int) -> LayerSpec:
    return LayerSpec(RELU, dim, dim)


def identity(dim: int) -> LayerSpec:
    return LayerSpec(IDENTITY, dim, dim)


@dataclass
class LayerState:
    """Flat float64 parameter vector for one layer (empty if parameterless)."""

    params: np.ndarray

    def copy(self) -> "LayerState":
        return LayerState(self.params.copy())


def state_for(spec: LayerSpec, params=None) -> LayerState:
    if params is None:
        params = np.zeros(spec.param_count)
    params = np.asarray(params, dtype=np.float64).ravel()
    if params.size != spec.param_count:
        raise DimensionError(
            f"{spec.kind} {spec.in_dim}->{spec.out_dim} needs "
            f"{spec.param_count} parameters, got {params.size}")
    return LayerState(params)


def affine_state(spec: LayerSpec, weight, bias=None) -> LayerState:
    """Pack an explicit weight matrix (out_dim, in_dim) and bias."""
    w = np.asarray(weight, dtype=np.float64).reshape(spec.out_dim, spec.in_dim)
    b = np.zeros(spec.out_dim) if bias is None else np.asarray(bias, dtype=np.float64)
    return state_for(spec, np.concatenate([w.ravel(), b.ravel()]))


def init_states(specs, seed: int, scale: float = 1.0) -> list:
    """Deterministic parameter init: affine weights ~ N(0, (scale/sqrt(in_dim))^2),
    biases zero.  Same (specs, seed, scale) always yields identical states."""
    rng = np.random.default_rng(seed)
    states = []
    for spec in specs:
        if spec.kind == AFFINE:
            w = rng.normal(0.0, scale / np.sqrt(spec.in_dim),
                           size=(spec.out_dim, spec.in_dim))
            b = np.zeros(spec.out_dim)
            states.append(LayerState(np.concatenate([w.ravel(), b])))
        else:
            states.append(LayerState(np.zeros(0)))
    return states


def _unpack_affine(spec: LayerSpec, state: LayerState):
    nw = spec.out_dim * spec.in_dim
    w = state.params[:nw].reshape(spec.out_dim, spec.in_dim)
    b = state.params[nw:]
    return w, b


def _check_input(spec: LayerSpec, x: np.ndarray):
    if x.ndim not in (1, 2) or x.shape[-1] != spec.in_dim:
        raise DimensionError(
            f"{spec.kind} expects last axis {spec.in_dim}, got shape {x.shape}")


def layer_forward(spec: LayerSpec, state: LayerState, x: np.ndarray):
    """Return (output, intermediate).  The intermediate is whatever the
    backward pass needs so forward never has to be re-run."""
    _check_input(spec, x)
    if spec.kind == AFFINE:
        w, b = _unpack_affine(spec, state)
        return x @ w.T + b, x
    if spec.kind == TANH:
        y = np.tanh(x)
        return y, y
    if spec.kind == RELU:
        return np.maximum(x, 0.0), x
    return x, x  # identity


def layer_backward(spec: LayerSpec, state: LayerState, intermediate, gout):
    """Return (param_grad, input_grad) given the upstream gradient gout.

    param_grad uses the same flat packing as LayerState.params.  The relu
    derivative at exactly 0 is taken to be 0.
    """
    if spec.kind == AFFINE:
        w, _ = _unpack_affine(spec, state)
        x = intermediate
        if gout.ndim == 1:
            gw = np.outer(gout, x)
            gb = gout
        else:
            gw = gout.T @ x
            gb = gout.sum(axis=0)
        gx = gout @ w
        return np.concatenate([gw.ravel(), gb.ravel()]), gx
    if spec.kind == TANH:
        y = intermediate
        return np.zeros(0), gout * (1.0 - y * y)
    if spec.kind == RELU:
        return np.zeros(0), gout * (intermediate > 0.0)
    return np.zeros(0), gout  # identity


def loss_and_grad(kind: str, pred: np.ndarray, target):
    """Return (loss, dloss/dpred), both means over the batch rows."""
    if kind == MSE:
        target = np.asarray(target, dtype=np.float64)
        if target.shape != pred.shape:
            raise DimensionError(
                f"mse target shape {target.shape} != prediction {pred.shape}")
        r = pred - target
        if pred.ndim == 1:
            return float(np.dot(r, r)), 2.0 * r
        batch = pred.shape[0]
        return float(np.sum(r * r) / batch), (2.0 / batch) * r
    if kind == SOFTMAX_CE:
        labels = np.asarray(target)
        if not np.issubdtype(labels.dtype, np.integer):
            raise DimensionError("softmax_ce expects integer class labels")
        if pred.ndim == 1:
            z = pred - pred.max()
            lse = np.log(np.sum(np.exp(z)))
            p = np.exp(z - lse)
            label = int(labels)
            loss = float(lse - z[label])
            g = p.copy()
            g[label] -= 1.0
            return loss, g
        batch = pred.shape[0]
        if labels.shape != (batch,):
            raise DimensionError("softmax_ce labels must be one per batch row")
        z = pred - pred.max(axis=1, keepdims=True)
        lse = np.log(np.sum(np.exp(z), axis=1))
        rows = np.arange(batch)
        loss = float(np.mean(lse - z[rows, labels]))
        p = np.exp(z - lse[:, None])
        p[rows, labels] -= 1.0
        return loss, p / batch
    raise DimensionError(f"unknown loss kind {kind!r}")


@dataclass
class NetContext:
    """Everything a backward pass needs from one forward pass."""

    intermediates: list
    output: np.ndarray


def net_forward(specs, states, x, loss_kind: str, target):
    """Run the whole network forward; return (loss, NetContext)."""
    intermediates = []
    h = x
    for spec, state in zip(specs, states):
        h, inter = layer_forward(spec, state, h)
        intermediates.append(inter)
    loss, _ = loss_and_grad(loss_kind, h, target)
    return loss, NetContext(intermediates, h)


def net_backward(specs, states, ctx: NetContext, loss_kind: str, target):
    """Backpropagate through the whole network.

    Returns (param_grads, input_grad) where param_grads is one flat array
    per layer, in layer order.
    """
    _, g = loss_and_grad(loss_kind, ctx.output, target)
    param_grads = [None] * len(specs)
    for i in range(len(specs) - 1, -1, -1):
        param_grads[i], g = layer_backward(specs[i], states[i],
                                           ctx.intermediates[i], g)
    return param_grads, g


def finite_diff_grad(specs, states, x, loss_kind: str, target,
                     step: float = 1e-6):
    """Central-difference gradient of the loss w.r.t. every parameter.

    Independent of the analytic backward pass; O(param_count) forward
    evaluations, intended as a test oracle on small networks.
    """
    grads = []
    for li, (spec, state) in enumerate(zip(specs, states)):
        g = np.zeros_like(state.params)
        for pi in range(state.params.size):
            bumped = [s.copy() if i == li else s for i, s in enumerate(states)]
            bumped[li].params[pi] += step
            lo_states = [s.copy() if i == li else s for i, s in enumerate(states)]
            lo_states[li].params[pi] -= step
            f_hi, _ = net_forward(specs, bumped, x, loss_kind, target)
            f_lo, _ = net_forward(specs, lo_states, x, loss_kind, target)
            g[pi] = (f_hi - f_lo) / (2.0 * step)
        grads.append(g)
    return grads
