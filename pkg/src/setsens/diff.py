"""Exact first- and second-order derivatives of the mean quadratic loss.

Everything is hand-rolled backprop. Second-order products are obtained by
pushing a tangent (a weight direction, a data direction, or both) through the
same forward and backward sweeps, i.e. forward-over-reverse differentiation
with the ReLU masks held fixed. No Hessian is ever materialised except by the
explicit ``dense_*`` helpers meant for tiny instances and tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .net import Dataset, InvalidInputError, Network, forward


def _index_array(data: Dataset, indices) -> np.ndarray:
    idx = np.arange(data.n) if indices is None else np.asarray(indices, dtype=int).reshape(-1)
    if idx.size == 0:
        raise InvalidInputError("empty index set")
    if idx.min() < 0 or idx.max() >= data.n:
        raise InvalidInputError(f"indices must lie in 0..{data.n - 1}")
    if np.unique(idx).size != idx.size:
        raise InvalidInputError("duplicate indices")
    return idx


def _weights_for(data: Dataset, idx: np.ndarray) -> np.ndarray:
    c = np.zeros(data.n)
    c[idx] = 1.0 / idx.size
    return c


def grad_and_tangent(net: Network, X: np.ndarray, y: np.ndarray, c: np.ndarray,
                     dlayers: Sequence[np.ndarray] | None = None,
                     dX: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Gradient of ``sum_i c_i * L(x_i, y_i, w)`` w.r.t. the flat weights.

    If a weight tangent ``dlayers`` and/or a data tangent ``dX`` is given, the
    directional derivative of that gradient along the tangent is returned as
    the second element, otherwise ``None``.
    """
    fw = forward(net, X)
    Ws = net.layers
    a = net.output_vector
    H = net.depth
    tangent = dlayers is not None or dX is not None

    if tangent:
        dh = np.zeros_like(X) if dX is None else np.asarray(dX, dtype=np.float64)
        dhidden = [dh]
        for k, W in enumerate(Ws):
            dz = dh @ W.T
            if dlayers is not None:
                dz = dz + fw.hidden[k] @ dlayers[k].T
            dh = dz * fw.masks[k]
            dhidden.append(dh)
        dout = dh @ a

    r = fw.output - y
    gA = np.outer(c * r, a)
    dgA = np.outer(c * dout, a) if tangent else None

    grads = [None] * H
    dgrads = [None] * H
    for k in range(H - 1, -1, -1):
        gZ = gA * fw.masks[k]
        grads[k] = gZ.T @ fw.hidden[k]
        if tangent:
            dgZ = dgA * fw.masks[k]
            dgrads[k] = dgZ.T @ fw.hidden[k] + gZ.T @ dhidden[k]
        if k > 0:
            if tangent:
                dgA = dgZ @ Ws[k]
                if dlayers is not None:
                    dgA = dgA + gZ @ dlayers[k]
            gA = gZ @ Ws[k]

    g = np.concatenate([G.reshape(-1) for G in grads])
    if not tangent:
        return g, None
    return g, np.concatenate([G.reshape(-1) for G in dgrads])


def _split(net: Network, v: np.ndarray) -> list[np.ndarray]:
    shape = net.shape
    return [v[shape.layer_slice(h)].reshape(shape.layer_shape(h)) for h in range(1, net.depth + 1)]


def grad_w_mean_loss(net: Network, data: Dataset, indices=None) -> np.ndarray:
    """Gradient of the mean loss over ``indices`` (all points by default)."""
    idx = _index_array(data, indices)
    g, _ = grad_and_tangent(net, data.X, data.y, _weights_for(data, idx))
    return g


def per_point_grads(net: Network, data: Dataset) -> np.ndarray:
    """Row i is the gradient of L(x_i, y_i, w); shape (n, p)."""
    fw = forward(net, data.X)
    r = fw.output - data.y
    return r[:, None] * weight_jacobian_batch(net, data.X, fw)


def layer_jacobian(net: Network, x, h: int) -> np.ndarray:
    """df/dW^(h) for a single input, same shape as W^(h)."""
    if not 1 <= h <= net.depth:
        raise InvalidInputError(f"layer index {h} outside 1..{net.depth}")
    fw = forward(net, x)
    # back-propagated sensitivity of f to x^(h): prod_{k>h} W^(k)^T diag(mask_k) a
    s = net.output_vector.copy()
    for k in range(net.depth - 1, h - 1, -1):
        s = net.layers[k].T @ (fw.masks[k] * s)
    return np.outer(fw.masks[h - 1] * s, fw.hidden[h - 1])


def weight_jacobian(net: Network, x) -> np.ndarray:
    """df/dw for one input, flattened in the same order as ``flatten``."""
    return np.concatenate([layer_jacobian(net, x, h).reshape(-1) for h in range(1, net.depth + 1)])


def weight_jacobian_batch(net: Network, X, fw=None) -> np.ndarray:
    """Row i is df(x_i)/dw; shape (n, p)."""
    fw = forward(net, X) if fw is None else fw
    n = fw.output.shape[0]
    gA = np.broadcast_to(net.output_vector, (n, net.width))
    rows = [None] * net.depth
    for k in range(net.depth - 1, -1, -1):
        gZ = gA * fw.masks[k]
        rows[k] = (gZ[:, :, None] * fw.hidden[k][:, None, :]).reshape(n, -1)
        gA = gZ @ net.layers[k]
    return np.concatenate(rows, axis=1)


def input_jacobian(net: Network, x) -> np.ndarray:
    """df/dx for a single input."""
    fw = forward(net, x)
    s = net.output_vector.copy()
    for k in range(net.depth - 1, -1, -1):
        s = net.layers[k].T @ (fw.masks[k] * s)
    return s


@dataclass(frozen=True)
class HvpOperator:
    """v -> (Hessian of the mean loss over ``indices``) @ v, matrix free."""

    net: Network
    data: Dataset
    indices: tuple[int, ...] | None = None

    @property
    def dim(self) -> int:
        return self.net.n_params

    def _c(self) -> np.ndarray:
        return _weights_for(self.data, _index_array(self.data, self.indices))

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        if v.size != self.dim:
            raise InvalidInputError(f"vector has {v.size} entries, expected {self.dim}")
        _, hv = grad_and_tangent(self.net, self.data.X, self.data.y, self._c(), dlayers=_split(self.net, v))
        return hv

    def dense(self) -> np.ndarray:
        """Assemble the full Hessian column by column (tiny instances only)."""
        eye = np.eye(self.dim)
        Hm = np.column_stack([self(e) for e in eye])
        return 0.5 * (Hm + Hm.T)


def hvp(op: HvpOperator, v) -> np.ndarray:
    return op(v)


def _full_displacement(data: Dataset, idx: np.ndarray, dX) -> np.ndarray:
    dX = np.asarray(dX, dtype=np.float64)
    if dX.ndim == 1:
        dX = dX[:, None] if data.dim == 1 and dX.size == idx.size else dX[None, :]
    if dX.shape != (idx.size, data.dim):
        raise InvalidInputError(f"displacements have shape {dX.shape}, expected {(idx.size, data.dim)}")
    full = np.zeros_like(data.X)
    full[idx] = dX
    return full


def mixed_jvp(net: Network, data: Dataset, K, dX) -> np.ndarray:
    """Directional derivative of grad_w of the mean loss over K along data moves.

    ``dX`` holds one displacement row per index in ``K`` (any magnitude
    already folded in). Returns a vector in R^p.
    """
    idx = _index_array(data, K)
    full = _full_displacement(data, idx, dX)
    _, d = grad_and_tangent(net, data.X, data.y, _weights_for(data, idx), dX=full)
    return d


def mixed_matrix_point(net: Network, data: Dataset, k: int, normalization: float | None = None) -> np.ndarray:
    """Dense d/dx_k of grad_w of the mean loss over all points; shape (p, d).

    Assembled from d directional products. ``normalization`` defaults to
    ``1 / n``, matching the first-order condition over the whole dataset.
    """
    c = np.full(data.n, 1.0 / data.n if normalization is None else normalization)
    cols = []
    for j in range(data.dim):
        full = np.zeros_like(data.X)
        full[k, j] = 1.0
        cols.append(grad_and_tangent(net, data.X, data.y, c, dX=full)[1])
    return np.column_stack(cols)


def dense_hessian(net: Network, data: Dataset, indices=None) -> np.ndarray:
    return HvpOperator(net, data, None if indices is None else tuple(int(i) for i in indices)).dense()
