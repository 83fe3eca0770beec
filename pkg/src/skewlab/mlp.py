"""Small dense softmax classifier with handwritten forward and backward passes.

The network is input(2) -> tanh hidden layers -> linear output, float64
throughout.  Parameters are treated as immutable values: every update builds
new arrays, which keeps trainer states trivially snapshottable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ioutil import fmt


@dataclass(frozen=True, eq=False)
class MlpParams:
    """Per-layer weight matrices (fan_in, fan_out) and bias vectors.

    Gradients use the same container: backward returns an MlpParams-shaped
    object whose arrays hold per-parameter partial derivatives.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must pair up layer by layer")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError("bias length must match weight fan-out")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def to_flat(self) -> np.ndarray:
        """Concatenate all parameters into one float64 vector (w then b per layer)."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)


def from_flat(template: MlpParams, flat: np.ndarray) -> MlpParams:
    """Rebuild parameters shaped like ``template`` from a flat vector."""
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != (template.n_params,):
        raise ValueError(f"expected {template.n_params} values, got {flat.shape}")
    weights = []
    biases = []
    pos = 0
    for w, b in zip(template.weights, template.biases):
        weights.append(flat[pos:pos + w.size].reshape(w.shape).copy())
        pos += w.size
        biases.append(flat[pos:pos + b.size].copy())
        pos += b.size
    return MlpParams(tuple(weights), tuple(biases))


def param_map(fn: Callable[..., np.ndarray], *params: MlpParams) -> MlpParams:
    weights = tuple(fn(*arrays) for arrays in zip(*(p.weights for p in params)))
    biases = tuple(fn(*arrays) for arrays in zip(*(p.biases for p in params)))
    return MlpParams(weights, biases)


def param_zeros_like(params: MlpParams) -> MlpParams:
    return param_map(np.zeros_like, params)


def param_add(a: MlpParams, b: MlpParams) -> MlpParams:
    return param_map(np.add, a, b)


def param_sub(a: MlpParams, b: MlpParams) -> MlpParams:
    return param_map(np.subtract, a, b)


def param_scale(params: MlpParams, factor: float) -> MlpParams:
    return param_map(lambda arr: arr * factor, params)


def param_combine(a: MlpParams, ca: float, b: MlpParams, cb: float) -> MlpParams:
    """ca * a + cb * b, elementwise over every layer."""
    return param_map(lambda x, y: ca * x + cb * y, a, b)


def params_equal(a: MlpParams, b: MlpParams) -> bool:
    return (len(a.weights) == len(b.weights)
            and all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
            and all(np.array_equal(x, y) for x, y in zip(a.biases, b.biases)))


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    """Everything backward needs: parameters, input, per-layer activations."""

    params: MlpParams
    inputs: np.ndarray
    pre_activations: tuple[np.ndarray, ...]
    activations: tuple[np.ndarray, ...]

    @property
    def logits(self) -> np.ndarray:
        return self.pre_activations[-1]


def init_params(hidden_width: int, n_classes: int, seed: int, *,
                n_inputs: int = 2, hidden_layers: int = 2) -> MlpParams:
    """Fan-in-scaled normal weights (std 1/sqrt(fan_in)), zero biases."""
    if hidden_width < 1 or hidden_layers < 1 or n_classes < 2:
        raise ValueError("hidden_width and hidden_layers must be positive, n_classes >= 2")
    sizes = [n_inputs] + [hidden_width] * hidden_layers + [n_classes]
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, 1.0 / math.sqrt(fan_in), (fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return MlpParams(tuple(weights), tuple(biases))


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    """Compute logits for a batch of points; returns the trace for backward."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"input must have shape (batch, {params.weights[0].shape[0]})")
    if x.shape[0] == 0:
        raise ValueError("input batch must be nonempty")
    if not np.all(np.isfinite(x)):
        raise ValueError("input must be finite")
    pre = []
    act = []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = np.tanh(z)
            act.append(h)
    return pre[-1], ForwardTrace(params, x, tuple(pre), tuple(act))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def backward(trace: ForwardTrace, d_logits: np.ndarray) -> MlpParams:
    """Backpropagate a loss gradient taken with respect to the logits.

    Returns a parameter-shaped gradient.  d_logits must already include any
    batch averaging constant (the losses here fold in the 1/batch term).
    """
    d_logits = np.asarray(d_logits, dtype=np.float64)
    if d_logits.shape != trace.logits.shape:
        raise ValueError("d_logits must match the logits shape")
    n_layers = len(trace.params.weights)
    grad_w: list[np.ndarray | None] = [None] * n_layers
    grad_b: list[np.ndarray | None] = [None] * n_layers
    layer_inputs = (trace.inputs,) + trace.activations
    delta = d_logits
    for i in range(n_layers - 1, -1, -1):
        grad_w[i] = layer_inputs[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            # tanh'(z) expressed through the stored activation: 1 - tanh(z)^2.
            delta = (delta @ trace.params.weights[i].T) * (1.0 - trace.activations[i - 1] ** 2)
    return MlpParams(tuple(grad_w), tuple(grad_b))  # type: ignore[arg-type]


def grad_check(params: MlpParams, loss_fn: Callable[[MlpParams], tuple[float, MlpParams]],
               eps: float = 1e-6, *, max_coords: int = 200, seed: int = 0) -> float:
    """Compare an analytic gradient against central finite differences.

    loss_fn maps parameters to (scalar loss, parameter-shaped gradient).  A
    subset of at most max_coords coordinates is probed; returns the maximum
    relative error |analytic - fd| / max(|analytic|, |fd|, 1e-8).
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    _, analytic = loss_fn(params)
    analytic_flat = analytic.to_flat()
    flat = params.to_flat()
    n = flat.size
    if n <= max_coords:
        coords = np.arange(n)
    else:
        coords = np.random.default_rng(seed).choice(n, size=max_coords, replace=False)
    worst = 0.0
    for idx in coords:
        probe = flat.copy()
        probe[idx] = flat[idx] + eps
        up, _ = loss_fn(from_flat(params, probe))
        probe[idx] = flat[idx] - eps
        down, _ = loss_fn(from_flat(params, probe))
        fd = (up - down) / (2.0 * eps)
        denom = max(abs(analytic_flat[idx]), abs(fd), 1e-8)
        worst = max(worst, abs(analytic_flat[idx] - fd) / denom)
    return worst


def save_params(params: MlpParams, path: str) -> None:
    """Write parameters as a text snapshot: a shape header then one value per line."""
    sizes = ",".join(str(s) for s in params.layer_sizes)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"layers={sizes}\n")
        for value in params.to_flat():
            fh.write(fmt(value) + "\n")


def load_params(path: str) -> MlpParams:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("layers="):
            raise ValueError(f"{path}: missing layer header")
        sizes = [int(s) for s in header[len("layers="):].split(",")]
        values = np.array([float(line) for line in fh if line.strip()], dtype=np.float64)
    weights = []
    biases = []
    pos = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(values[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out))
        pos += fan_in * fan_out
        biases.append(values[pos:pos + fan_out])
        pos += fan_out
    if pos != values.size:
        raise ValueError(f"{path}: value count does not match the layer header")
    return MlpParams(tuple(weights), tuple(biases))
