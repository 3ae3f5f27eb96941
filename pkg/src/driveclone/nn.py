"""Small dense-network core.

Plain numpy MLPs (tanh / relu / identity), manual backprop, Adam, a
central-finite-difference gradient checker and a versioned text checkpoint
format. Everything runs in float64; networks are plain values and all
operations here are pure (they return new arrays instead of mutating).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = "DCNN1"
LOG_2PI = float(np.log(2.0 * np.pi))

ACTIVATIONS = ("tanh", "relu", "identity")


class ShapeMismatch(ValueError):
    """Raised when an array does not have the shape an operation requires."""


@dataclass
class Layer:
    weights: np.ndarray  # (fan_in, fan_out)
    biases: np.ndarray   # (fan_out,)
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation: {self.activation!r}")


@dataclass
class Mlp:
    layers: list[Layer]

    @property
    def in_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weights.shape[1]


def init_mlp(sizes, rng, hidden_activation="tanh", out_activation="identity") -> Mlp:
    """Build an MLP with weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.

    `sizes` lists layer widths input-first, e.g. [14, 64, 64, 2].
    """
    if len(sizes) < 2:
        raise ValueError("need at least input and output widths")
    layers = []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = int(sizes[i]), int(sizes[i + 1])
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        act = out_activation if i == len(sizes) - 2 else hidden_activation
        layers.append(Layer(w, b, act))
    return Mlp(layers)


def _activate(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(0.0, z)
    return z


def _activation_grad(name, z, a):
    # derivative of the activation evaluated at pre-activation z (a = act(z))
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(float)
    return np.ones_like(z)


@dataclass
class ForwardCache:
    steps: list  # per layer: (input, pre_activation, activation)
    single: bool


def forward(net: Mlp, x) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on a single vector or a (batch, in_dim) matrix.

    Returns the output plus a cache sufficient for `backward`.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    h = arr[None, :] if single else arr
    if h.ndim != 2 or h.shape[1] != net.in_dim:
        raise ShapeMismatch(f"input width {arr.shape} does not match net input {net.in_dim}")
    steps = []
    for layer in net.layers:
        z = h @ layer.weights + layer.biases
        a = _activate(layer.activation, z)
        steps.append((h, z, a))
        h = a
    return (h[0] if single else h), ForwardCache(steps, single)


def backward(net: Mlp, cache: ForwardCache, grad_output) -> tuple[list[np.ndarray], np.ndarray]:
    """Backpropagate `grad_output` (d loss / d output) through the network.

    Returns (param_grads, d_input) where param_grads matches the layout of
    `parameters(net)`: [dW0, db0, dW1, db1, ...]. Parameter gradients are
    summed over the batch; d_input keeps the batch dimension.
    """
    g = np.asarray(grad_output, dtype=float)
    if cache.single:
        g = g[None, :]
    if g.shape[1] != net.out_dim or g.shape[0] != cache.steps[0][0].shape[0]:
        raise ShapeMismatch("grad_output does not match the cached forward pass")
    param_grads: list = [None] * (2 * len(net.layers))
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        h_in, z, a = cache.steps[i]
        g = g * _activation_grad(layer.activation, z, a)
        param_grads[2 * i] = h_in.T @ g
        param_grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weights.T
    d_input = g[0] if cache.single else g
    return param_grads, d_input


def parameters(net: Mlp) -> list[np.ndarray]:
    """Flat parameter list [W0, b0, W1, b1, ...] (references, not copies)."""
    out = []
    for layer in net.layers:
        out.append(layer.weights)
        out.append(layer.biases)
    return out


def with_parameters(net: Mlp, params: list[np.ndarray]) -> Mlp:
    """A new Mlp with the same wiring but the given parameter arrays."""
    if len(params) != 2 * len(net.layers):
        raise ShapeMismatch("parameter list length does not match the network")
    layers = []
    for i, layer in enumerate(net.layers):
        w, b = params[2 * i], params[2 * i + 1]
        if w.shape != layer.weights.shape or b.shape != layer.biases.shape:
            raise ShapeMismatch(f"layer {i} parameter shapes do not match")
        layers.append(Layer(w, b, layer.activation))
    return Mlp(layers)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        step=0,
        lr=lr, beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(params, grads, state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """One Adam update. Pure: returns fresh parameter and state arrays."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("params / grads / state lengths disagree")
    t = state.step + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m2 = state.beta1 * m + (1.0 - state.beta1) * g
        v2 = state.beta2 * v + (1.0 - state.beta2) * g * g
        m_hat = m2 / (1.0 - state.beta1 ** t)
        v_hat = v2 / (1.0 - state.beta2 ** t)
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m2)
        new_v.append(v2)
    new_state = AdamState(new_m, new_v, t, state.lr, state.beta1, state.beta2, state.eps)
    return new_params, new_state


# ---------------------------------------------------------------------------
# Numerics
# ---------------------------------------------------------------------------

def log_sum_exp(values) -> float:
    """Max-shifted log(sum(exp(values))) for a non-empty vector."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty vector")
    m = np.max(v)
    if not np.isfinite(m):
        # all -inf, or an explicit +inf/-nan input dominates
        return float(m)
    return float(m + np.log(np.sum(np.exp(v - m))))


def grad_check(loss_fn, params, eps=1e-5, max_coords=None, rng=None) -> float:
    """Max relative error between analytic gradients and central differences.

    `loss_fn(params) -> (loss, grads)` must be pure in `params`. When
    `max_coords` is given, at most that many coordinates per parameter array
    are probed (chosen with `rng`, default seed 0).
    """
    _, grads = loss_fn(params)
    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for pi, p in enumerate(params):
        n = p.size
        if max_coords is not None and n > max_coords:
            coords = rng.choice(n, size=max_coords, replace=False)
        else:
            coords = range(n)
        for idx in coords:
            orig = p.flat[idx]
            p.flat[idx] = orig + eps
            loss_plus, _ = loss_fn(params)
            p.flat[idx] = orig - eps
            loss_minus, _ = loss_fn(params)
            p.flat[idx] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            analytic = grads[pi].flat[idx]
            rel = abs(numeric - analytic) / max(abs(numeric) + abs(analytic), 1e-6)
            worst = max(worst, rel)
    return worst


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, header: dict, arrays: list[tuple[str, np.ndarray]]) -> None:
    """Write a text checkpoint: magic line, key=value header, flat parameters.

    `arrays` is an ordered list of (name, array); shapes are recorded in the
    header so `load_checkpoint` can rebuild them. Values are written with
    repr() so float64 round-trips exactly.
    """
    lines = [CHECKPOINT_MAGIC]
    for key, value in header.items():
        if "=" in str(key) or "\n" in str(value):
            raise ValueError(f"invalid header entry: {key!r}")
        lines.append(f"{key}={value}")
    spec = ",".join(f"{name}:{'x'.join(str(d) for d in arr.shape)}" for name, arr in arrays)
    lines.append(f"arrays={spec}")
    lines.append("---")
    for _, arr in arrays:
        for value in np.asarray(arr, dtype=float).ravel():
            lines.append(repr(float(value)))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[dict, dict]:
    """Read a checkpoint written by `save_checkpoint`.

    Returns (header, arrays) where arrays maps name -> float64 ndarray in the
    order they were saved.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    header: dict = {}
    spec = None
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        if line == "---":
            body_start = i + 1
            break
        key, _, value = line.partition("=")
        if key == "arrays":
            spec = value
        else:
            header[key] = value
    if spec is None or body_start is None:
        raise ValueError(f"{path}: malformed checkpoint header")
    values = np.array([float(v) for v in lines[body_start:] if v], dtype=float)
    arrays: dict = {}
    offset = 0
    if spec:
        for entry in spec.split(","):
            name, _, dims = entry.partition(":")
            shape = tuple(int(d) for d in dims.split("x")) if dims else ()
            size = int(np.prod(shape)) if shape else 1
            arrays[name] = values[offset:offset + size].reshape(shape)
            offset += size
    if offset != values.size:
        raise ValueError(f"{path}: parameter count does not match header shapes")
    return header, arrays


def mlp_to_arrays(net: Mlp, prefix="") -> list[tuple[str, np.ndarray]]:
    out = []
    for i, layer in enumerate(net.layers):
        out.append((f"{prefix}W{i}", layer.weights))
        out.append((f"{prefix}b{i}", layer.biases))
    return out


def mlp_from_arrays(arrays: dict, activations: list[str], prefix="") -> Mlp:
    layers = []
    for i, act in enumerate(activations):
        layers.append(Layer(np.array(arrays[f"{prefix}W{i}"]), np.array(arrays[f"{prefix}b{i}"]), act))
    return Mlp(layers)
