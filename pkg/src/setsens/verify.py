"""Finite-difference oracles for the analytic derivatives in ``setsens.diff``.

These are deliberately naive: central differences on the forward pass and the
mean loss, sharing no code with the backprop routines apart from ``forward``.
"""

from __future__ import annotations

import numpy as np

from .net import Dataset, Network, flatten, forward, mean_loss, with_weights

KINK_GUARD = 1e-6


def _step(wj: float, rel: float) -> float:
    return rel * (1.0 + abs(wj))


def min_preactivation_gap(net: Network, X) -> float:
    """Smallest |pre-activation| over all units and inputs."""
    fw = forward(net, np.atleast_2d(X))
    return float(min(np.min(np.abs(z)) for z in fw.preacts))


def away_from_kinks(net: Network, X, guard: float = KINK_GUARD) -> bool:
    return min_preactivation_gap(net, X) > guard


def fd_grad(net: Network, data: Dataset, indices=None, rel: float = 1e-5) -> np.ndarray:
    w = flatten(net)
    g = np.empty_like(w)
    for j in range(w.size):
        e = _step(w[j], rel)
        wp, wm = w.copy(), w.copy()
        wp[j] += e
        wm[j] -= e
        g[j] = (mean_loss(with_weights(net, wp), data, indices) - mean_loss(with_weights(net, wm), data, indices)) / (2 * e)
    return g


def fd_weight_jacobian(net: Network, x, rel: float = 1e-5) -> np.ndarray:
    w = flatten(net)
    J = np.empty_like(w)
    for j in range(w.size):
        e = _step(w[j], rel)
        wp, wm = w.copy(), w.copy()
        wp[j] += e
        wm[j] -= e
        J[j] = (forward(with_weights(net, wp), x).output - forward(with_weights(net, wm), x).output) / (2 * e)
    return J


def fd_layer_jacobian(net: Network, x, h: int, rel: float = 1e-5) -> np.ndarray:
    sl = net.shape.layer_slice(h)
    return fd_weight_jacobian(net, x, rel)[sl].reshape(net.shape.layer_shape(h))


def fd_input_jacobian(net: Network, x, rel: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    J = np.empty_like(x)
    for j in range(x.size):
        e = _step(x[j], rel)
        xp, xm = x.copy(), x.copy()
        xp[j] += e
        xm[j] -= e
        J[j] = (forward(net, xp).output - forward(net, xm).output) / (2 * e)
    return J


def fd_hvp(net: Network, data: Dataset, v, indices=None, eps: float = 1e-5) -> np.ndarray:
    """Central difference of the (finite-difference-free) analytic gradient along v."""
    from .diff import grad_w_mean_loss

    w = flatten(net)
    v = np.asarray(v, dtype=np.float64)
    gp = grad_w_mean_loss(with_weights(net, w + eps * v), data, indices)
    gm = grad_w_mean_loss(with_weights(net, w - eps * v), data, indices)
    return (gp - gm) / (2 * eps)


def fd_hvp_from_loss(net: Network, data: Dataset, v, indices=None, rel: float = 1e-4) -> np.ndarray:
    """Hessian-vector product using only loss evaluations (second differences)."""
    w = flatten(net)
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(w)
    t = rel * (1.0 + np.linalg.norm(w)) / max(np.linalg.norm(v), 1e-300)
    for j in range(w.size):
        e = _step(w[j], rel)
        ej = np.zeros_like(w)
        ej[j] = e

        def L(u):
            return mean_loss(with_weights(net, u), data, indices)

        out[j] = (L(w + ej + t * v) - L(w + ej - t * v) - L(w - ej + t * v) + L(w - ej - t * v)) / (4 * e * t)
    return out


def fd_mixed_jvp(net: Network, data: Dataset, K, dX, eps: float = 1e-5) -> np.ndarray:
    """One-sided difference (grad at x + eps*dX minus grad at x) / eps."""
    from .diff import grad_w_mean_loss

    K = np.asarray(K, dtype=int).reshape(-1)
    dX = np.asarray(dX, dtype=np.float64).reshape(K.size, data.dim)
    Xp = np.array(data.X)
    Xp[K] += eps * dX
    g0 = grad_w_mean_loss(net, data, K)
    g1 = grad_w_mean_loss(net, data.with_features(Xp), K)
    return (g1 - g0) / eps


def fd_mixed_jvp_central(net: Network, data: Dataset, K, dX, eps: float = 1e-5) -> np.ndarray:
    from .diff import grad_w_mean_loss

    K = np.asarray(K, dtype=int).reshape(-1)
    dX = np.asarray(dX, dtype=np.float64).reshape(K.size, data.dim)
    Xp, Xm = np.array(data.X), np.array(data.X)
    Xp[K] += eps * dX
    Xm[K] -= eps * dX
    return (grad_w_mean_loss(net, data.with_features(Xp), K) - grad_w_mean_loss(net, data.with_features(Xm), K)) / (2 * eps)


def rel_err(a, b, floor: float = 1e-300) -> float:
    """||a - b|| / max(||b||, floor); a floor of 1 gives an absolute error near zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))
