"""Deep fully-connected ReLU network: forward pass, quadratic loss, flattening.

The network is ``f(x, w) = a^T x^(H)`` with ``x^(h) = relu(W^(h) x^(h-1))`` and
``x^(0) = x``. The output vector ``a`` is held fixed and is not part of the
flattened weight vector ``w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class InvalidInputError(ValueError):
    """Raised when shapes, indices or parameters are inconsistent."""


@dataclass(frozen=True)
class Network:
    layers: tuple[np.ndarray, ...]
    output_vector: np.ndarray

    def __post_init__(self):
        layers = tuple(np.array(W, dtype=np.float64) for W in self.layers)
        a = np.array(self.output_vector, dtype=np.float64).reshape(-1)
        if not layers:
            raise InvalidInputError("network needs at least one layer")
        m = layers[0].shape[0]
        if a.shape[0] != m:
            raise InvalidInputError(f"output vector has length {a.shape[0]}, expected width {m}")
        for h, W in enumerate(layers, start=1):
            if W.ndim != 2 or W.shape[0] != m:
                raise InvalidInputError(f"layer {h} has shape {W.shape}, expected {m} rows")
            if h > 1 and W.shape[1] != m:
                raise InvalidInputError(f"layer {h} has {W.shape[1]} columns, expected {m}")
        for arr in (*layers, a):
            arr.setflags(write=False)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "output_vector", a)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def width(self) -> int:
        return self.layers[0].shape[0]

    @property
    def input_dim(self) -> int:
        return self.layers[0].shape[1]

    @property
    def shape(self) -> "NetShape":
        return NetShape(self.depth, self.width, self.input_dim)

    @property
    def n_params(self) -> int:
        return self.shape.n_params

    def with_output_vector(self, a) -> "Network":
        return Network(self.layers, a)


@dataclass(frozen=True)
class NetShape:
    depth: int
    width: int
    input_dim: int

    def layer_shape(self, h: int) -> tuple[int, int]:
        """Shape of W^(h), 1-based."""
        if not 1 <= h <= self.depth:
            raise InvalidInputError(f"layer index {h} outside 1..{self.depth}")
        return (self.width, self.input_dim if h == 1 else self.width)

    def layer_slice(self, h: int) -> slice:
        """Slice of the flat weight vector occupied by layer h."""
        self.layer_shape(h)
        start = 0 if h == 1 else self.width * self.input_dim + (h - 2) * self.width**2
        rows, cols = self.layer_shape(h)
        return slice(start, start + rows * cols)

    @property
    def n_params(self) -> int:
        return self.width * self.input_dim + (self.depth - 1) * self.width**2


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.y, dtype=np.float64).reshape(-1)
        if X.ndim != 2 or X.shape[0] == 0:
            raise InvalidInputError("dataset needs a nonempty 2-D feature array")
        if y.shape[0] != X.shape[0]:
            raise InvalidInputError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def with_features(self, X) -> "Dataset":
        return Dataset(X, self.y)


@dataclass(frozen=True)
class ForwardResult:
    output: np.ndarray  # (n,) or scalar for a single input
    masks: list[np.ndarray] = field(repr=False)  # per layer, 1.0 where pre-activation > 0
    hidden: list[np.ndarray] = field(repr=False)  # x^(0)..x^(H)
    preacts: list[np.ndarray] = field(repr=False)


def _check_input(net: Network, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != net.input_dim:
        raise InvalidInputError(f"input has dimension {X.shape[-1]}, network expects {net.input_dim}")
    return X


def forward(net: Network, x) -> ForwardResult:
    """Run the network on one input (shape ``(d,)``) or a batch (shape ``(n, d)``).

    Masks use strict positivity, so a pre-activation of exactly zero is
    treated as inactive.
    """
    x = _check_input(net, x)
    single = x.ndim == 1
    h_act = x[None, :] if single else x
    hidden, masks, preacts = [h_act], [], []
    for W in net.layers:
        z = h_act @ W.T
        mask = (z > 0).astype(np.float64)
        h_act = z * mask
        preacts.append(z)
        masks.append(mask)
        hidden.append(h_act)
    out = h_act @ net.output_vector
    if single:
        return ForwardResult(out[0], [m[0] for m in masks], [h[0] for h in hidden], [z[0] for z in preacts])
    return ForwardResult(out, masks, hidden, preacts)


def predict(net: Network, X) -> np.ndarray:
    return forward(net, X).output


def quadratic_loss(net: Network, x, y) -> float | np.ndarray:
    """Pointwise loss ``0.5 * (f(x, w) - y)**2``; vectorised over a batch."""
    r = forward(net, x).output - np.asarray(y, dtype=np.float64)
    return 0.5 * r * r


def mean_loss(net: Network, data: Dataset, indices: Sequence[int] | None = None) -> float:
    idx = np.arange(data.n) if indices is None else np.asarray(indices, dtype=int)
    if idx.size == 0:
        raise InvalidInputError("empty index set")
    return float(np.mean(quadratic_loss(net, data.X[idx], data.y[idx])))


def flatten(net: Network) -> np.ndarray:
    """Row-major concatenation of W^(1), ..., W^(H)."""
    return np.concatenate([W.reshape(-1) for W in net.layers])


def unflatten(w, shape: NetShape, output_vector) -> Network:
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.size != shape.n_params:
        raise InvalidInputError(f"flat vector has {w.size} entries, shape needs {shape.n_params}")
    layers = [w[shape.layer_slice(h)].reshape(shape.layer_shape(h)) for h in range(1, shape.depth + 1)]
    return Network(tuple(layers), output_vector)


def with_weights(net: Network, w) -> Network:
    return unflatten(w, net.shape, net.output_vector)


def random_network(depth: int, width: int, input_dim: int, rng: np.random.Generator,
                   scale: float | None = None) -> Network:
    """He-style Gaussian initialisation; ``a`` drawn as N(0, 1/width)."""
    layers = []
    for h in range(1, depth + 1):
        cols = input_dim if h == 1 else width
        s = np.sqrt(2.0 / cols) if scale is None else scale
        layers.append(rng.normal(0.0, s, size=(width, cols)))
    a = rng.normal(0.0, 1.0 / np.sqrt(width), size=width)
    return Network(tuple(layers), a)
