"""Gradient-descent training, warm-start retraining and loss-landscape slices."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diff import grad_w_mean_loss
from .net import Dataset, InvalidInputError, Network, flatten, mean_loss, with_weights

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    max_epochs: int = 200_000
    batch_size: int | None = None  # None means full batch
    tol: float = 1e-8
    seed: int = 0
    divergence_loss: float = 1e6

    def __post_init__(self):
        if self.lr < 0:
            raise InvalidInputError("learning rate must be nonnegative")
        if self.tol <= 0:
            raise InvalidInputError("gradient tolerance must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidInputError("batch size must be positive")


@dataclass(frozen=True)
class TrainResult:
    net: Network
    epochs: int
    grad_norm: float
    loss: float
    converged: bool

    @property
    def hit_max_epochs(self) -> bool:
        return not self.converged


def sgd_train(net_init: Network, data: Dataset, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Train on the mean quadratic loss until ||grad|| <= cfg.tol.

    Full-batch gradient descent unless ``cfg.batch_size`` is set, in which case
    each epoch is one seeded shuffle of mini-batches.
    """
    rng = np.random.default_rng(cfg.seed)
    net = net_init
    w = flatten(net)
    g = grad_w_mean_loss(net, data)
    gnorm = float(np.linalg.norm(g))
    epoch = 0
    # overflow is caught below as a non-finite gradient
    with np.errstate(over="ignore", invalid="ignore"):
        while epoch < cfg.max_epochs and gnorm > cfg.tol:
            if cfg.batch_size is None or cfg.batch_size >= data.n:
                w = w - cfg.lr * g
            else:
                order = rng.permutation(data.n)
                for start in range(0, data.n, cfg.batch_size):
                    batch = order[start:start + cfg.batch_size]
                    w = w - cfg.lr * grad_w_mean_loss(with_weights(net, w), data, batch)
            net = with_weights(net, w)
            epoch += 1
            g = grad_w_mean_loss(net, data)
            gnorm = float(np.linalg.norm(g))
            if not np.isfinite(gnorm):
                raise DivergenceError(f"non-finite gradient at epoch {epoch}")
            if epoch % 1000 == 0:
                loss = mean_loss(net, data)
                if loss > cfg.divergence_loss:
                    raise DivergenceError(f"loss {loss:.3g} exceeded {cfg.divergence_loss:.3g} at epoch {epoch}")
    loss = mean_loss(net, data)
    if loss > cfg.divergence_loss:
        raise DivergenceError(f"loss {loss:.3g} exceeded {cfg.divergence_loss:.3g}")
    converged = gnorm <= cfg.tol
    if not converged:
        log.warning("training stopped at max_epochs=%d with grad norm %.3g", cfg.max_epochs, gnorm)
    return TrainResult(net, epoch, gnorm, loss, converged)


def retrain_from(net_bar: Network, data_perturbed: Dataset, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Warm-start training from an existing solution on (perturbed) data."""
    return sgd_train(net_bar, data_perturbed, cfg)


def relative_difference(w1, w2) -> float:
    """|w1 - w2| / |w1|."""
    w1 = np.asarray(w1, dtype=np.float64)
    return float(np.linalg.norm(w1 - np.asarray(w2)) / np.linalg.norm(w1))


def filter_normalize(net: Network, direction: np.ndarray) -> np.ndarray:
    """Rescale each row of each layer of ``direction`` to the norm of the matching weight row."""
    shape = net.shape
    out = np.array(direction, dtype=np.float64)
    for h in range(1, net.depth + 1):
        sl = shape.layer_slice(h)
        D = out[sl].reshape(shape.layer_shape(h))
        W = net.layers[h - 1]
        dn = np.linalg.norm(D, axis=1, keepdims=True)
        D *= np.linalg.norm(W, axis=1, keepdims=True) / np.where(dn > 0, dn, 1.0)
        out[sl] = D.reshape(-1)
    return out


def random_directions(net: Network, rng: np.random.Generator, normalize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Two random plotting directions, made orthogonal, optionally filter-normalised."""
    p = net.n_params
    d1, d2 = rng.normal(size=p), rng.normal(size=p)
    if normalize:
        d1, d2 = filter_normalize(net, d1), filter_normalize(net, d2)
    else:
        d1 /= np.linalg.norm(d1)
        d2 /= np.linalg.norm(d2)
    n2 = np.linalg.norm(d2)
    d2 = d2 - (d2 @ d1) / (d1 @ d1) * d1
    d2 *= n2 / np.linalg.norm(d2)
    return d1, d2


def landscape_slice(net_center: Network, data: Dataset, dir1, dir2, alphas, betas) -> np.ndarray:
    """Mean loss at center + alpha*dir1 + beta*dir2; rows follow betas, columns alphas."""
    w0 = flatten(net_center)
    dir1 = np.asarray(dir1, dtype=np.float64)
    dir2 = np.asarray(dir2, dtype=np.float64)
    if dir1.shape != w0.shape or dir2.shape != w0.shape:
        raise InvalidInputError("directions must match the flat weight dimension")
    alphas = np.asarray(alphas, dtype=np.float64)
    betas = np.asarray(betas, dtype=np.float64)
    Z = np.empty((betas.size, alphas.size))
    for i, b in enumerate(betas):
        for j, a in enumerate(alphas):
            Z[i, j] = mean_loss(with_weights(net_center, w0 + a * dir1 + b * dir2), data)
    return Z


def write_landscape(path, alphas, betas, Z) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta\\alpha", *(repr(float(a)) for a in alphas)])
        for b, row in zip(betas, Z):
            writer.writerow([repr(float(b)), *(repr(float(z)) for z in row)])


def read_landscape(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    alphas = np.array([float(a) for a in rows[0][1:]])
    betas = np.array([float(r[0]) for r in rows[1:]])
    Z = np.array([[float(z) for z in r[1:]] for r in rows[1:]])
    return alphas, betas, Z


