"""Small numpy MLP with hand-written reverse-mode gradients and Adam.

Every network in the package (policy, value, Q and reward nets) is a
:class:`Network`: ``tanh`` on hidden layers, identity on the output layer,
double precision throughout.

Gradients are plain lists of arrays ordered like ``Network.params``:
``[W0, b0, W1, b1, ...]`` with ``W_k`` of shape ``(n_in, n_out)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from hairl.errors import ConfigError, ShapeError, StateError

Grads = list  # list[np.ndarray], same order as Network.params

CHECKPOINT_FORMAT = "hairl-net"
CHECKPOINT_VERSION = 1


class Network:
    """Multi-layer perceptron parameter container.

    ``forward`` records the activations of the most recent call so that
    ``backward`` can return parameter gradients for it.
    """

    def __init__(self, layer_sizes: Sequence[int], weights: list, biases: list):
        self.layer_sizes = [int(n) for n in layer_sizes]
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_sizes[k], self.layer_sizes[k + 1])
            if w.shape != expect or b.shape != (expect[1],):
                raise ShapeError(f"layer {k}: got W{w.shape} b{b.shape}, expected W{expect}")
        self._cache = None

    @property
    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def clone(self) -> "Network":
        return Network(self.layer_sizes, [w.copy() for w in self.weights],
                       [b.copy() for b in self.biases])

    def copy_from(self, other: "Network") -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ShapeError(f"expected {self.n_params} parameters, got {flat.size}")
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    def zero_grads(self) -> Grads:
        return [np.zeros_like(p) for p in self.params]

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.in_dim:
            raise ShapeError(f"input has shape {x.shape}, network expects last dim {self.in_dim}")
        acts = [h]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                h = np.tanh(h)
            acts.append(h)
        self._cache = (acts, single)
        return h[0] if single else h

    def backward(self, upstream) -> Grads:
        if self._cache is None:
            raise StateError("backward called before forward")
        acts, single = self._cache
        g = np.asarray(upstream, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != acts[-1].shape:
            raise ShapeError(f"upstream gradient {g.shape} does not match output {acts[-1].shape}")
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            if k < len(self.weights) - 1:
                g = g * (1.0 - acts[k + 1] ** 2)
            grads[2 * k] = acts[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            if k > 0:
                g = g @ self.weights[k].T
        return grads

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)

    def __repr__(self) -> str:
        return f"Network(layer_sizes={self.layer_sizes})"


def _validate_layer_sizes(layer_sizes) -> list:
    try:
        sizes = [int(n) for n in layer_sizes]
    except (TypeError, ValueError):
        raise ConfigError(f"layer_sizes must be a list of integers, got {layer_sizes!r}")
    if len(sizes) < 2:
        raise ConfigError(f"need at least 2 layer sizes, got {sizes}")
    if any(n <= 0 for n in sizes):
        raise ConfigError(f"layer sizes must be positive, got {sizes}")
    return sizes


def init_network(layer_sizes: Sequence[int], seed) -> Network:
    """Glorot-uniform weights, zero biases; deterministic given ``seed``.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    sizes = _validate_layer_sizes(layer_sizes)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-limit, limit, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return Network(sizes, weights, biases)


def forward(net: Network, x) -> np.ndarray:
    return net.forward(x)


def backward(net: Network, upstream_grad) -> Grads:
    """Gradient of ``sum(upstream_grad * output)`` w.r.t. every parameter."""
    return net.backward(upstream_grad)


def add_grads(a: Grads, b: Grads, scale_a: float = 1.0, scale_b: float = 1.0) -> Grads:
    return [scale_a * x + scale_b * y for x, y in zip(a, b)]


def scale_grads(grads: Grads, c: float) -> Grads:
    return [c * g for g in grads]


def global_norm(grads: Grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_grads(grads: Grads, max_norm: float | None) -> Grads:
    if max_norm is None or max_norm <= 0:
        return grads
    norm = global_norm(grads)
    if norm > max_norm:
        return [g * (max_norm / (norm + 1e-12)) for g in grads]
    return grads


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def copy(self) -> "AdamState":
        return AdamState([x.copy() for x in self.m], [x.copy() for x in self.v],
                         self.t, self.lr, self.beta1, self.beta2, self.eps)


def adam_init(net: Network, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState([np.zeros_like(p) for p in net.params],
                     [np.zeros_like(p) for p in net.params], 0, lr, beta1, beta2, eps)


def adam_step(net: Network, grads: Grads, state: AdamState):
    """Apply one bias-corrected Adam update in place; returns ``(net, state)``."""
    params = net.params
    if len(grads) != len(params) or len(state.m) != len(params):
        raise ShapeError("gradient list does not match network parameters")
    for p, g, m in zip(params, grads, state.m):
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} vs parameter shape {p.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return net, state


def finite_diff_check(net: Network, loss_fn: Callable, eps: float = 1e-5,
                      floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(net)`` must return ``(loss, grads)``; it is re-evaluated with
    each parameter nudged by ``±eps``. The error per coordinate is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    if not eps > 0:
        raise ValueError(f"finite-difference step must be positive, got {eps}")
    _, analytic = loss_fn(net)
    analytic = [np.array(g, dtype=np.float64, copy=True) for g in analytic]
    worst = 0.0
    for p, a in zip(net.params, analytic):
        flat = p.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(loss_fn(net)[0])
            flat[i] = orig - eps
            down = float(loss_fn(net)[0])
            flat[i] = orig
            num = (up - down) / (2.0 * eps)
            err = abs(a_flat[i] - num) / max(abs(a_flat[i]), abs(num), floor)
            worst = max(worst, err)
    return worst


def save_network(net: Network, path, meta: dict | None = None) -> None:
    """Write a JSON header line followed by little-endian float64 parameters."""
    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
              "layer_sizes": net.layer_sizes, "meta": meta or {}}
    data = net.get_flat().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(data)


def load_network(path) -> tuple[Network, dict]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError(f"{path}: missing checkpoint header")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint header {header}")
    sizes = _validate_layer_sizes(header["layer_sizes"])
    flat = np.frombuffer(raw[nl + 1:], dtype="<f8").astype(np.float64)
    net = init_network(sizes, 0)
    net.set_flat(flat)
    return net, header.get("meta", {})
