"""Graphical-derivative sensitivity of the training solution set to data moves.

Given a stationary point ``w_bar`` of the mean loss on pristine data and a
perturbation ``x_i -> x_i + delta * dx_i`` of the points in ``K``, the
graphical derivative of the solution map is the (affine) solution set of

    H v + b = 0,   H = Hessian of the mean loss over all points,
                   b = d/dx of the same mean-loss gradient, applied to delta*dx.

Estimated post-perturbation solutions are ``w_bar + v`` for v in that set.
When H is nonsingular the set is a single point and coincides with the
classical influence-function step ``-H^{-1} b``.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .diff import HvpOperator, grad_w_mean_loss, mixed_jvp, mixed_matrix_point
from .net import Dataset, InvalidInputError, Network, flatten, quadratic_loss, with_weights
from .sets import SolutionSet, hausdorff
from .solvers import cgls

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6
STATIONARITY_TOL = 1e-6
UNIT_TOL = 1e-12


class NonStationaryError(ValueError):
    pass


class SingularHessianError(np.linalg.LinAlgError):
    pass


def default_workers() -> int:
    return max(1, int(os.environ.get("SETSENS_THREADS", "1")))


@dataclass(frozen=True)
class PerturbationSpec:
    """x_i^p = x_i + delta * directions[j] for the j-th index i in ``indices``.

    With ``normalization="point"`` every direction is a unit vector. With
    ``"stacked"`` only the concatenation of all directions has unit norm, which
    allows different points to move by different amounts.
    """

    indices: tuple[int, ...]
    directions: np.ndarray
    delta: float
    normalization: Literal["point", "stacked"] = "point"

    def __post_init__(self):
        idx = tuple(int(i) for i in np.asarray(self.indices).reshape(-1))
        D = np.array(self.directions, dtype=np.float64)
        if D.ndim == 1:
            D = D.reshape(len(idx), -1)
        if not idx:
            raise InvalidInputError("perturbation needs a nonempty index set")
        if len(set(idx)) != len(idx):
            raise InvalidInputError("duplicate perturbation indices")
        if D.shape[0] != len(idx):
            raise InvalidInputError(f"{D.shape[0]} directions for {len(idx)} indices")
        if self.delta < 0:
            raise InvalidInputError("delta must be nonnegative")
        if self.normalization == "point":
            norms = np.linalg.norm(D, axis=1)
            if np.any(np.abs(norms - 1.0) > UNIT_TOL):
                raise InvalidInputError("directions must be unit vectors")
        elif self.normalization == "stacked":
            if abs(np.linalg.norm(D) - 1.0) > UNIT_TOL:
                raise InvalidInputError("stacked directions must have unit norm")
        else:
            raise InvalidInputError(f"unknown normalization {self.normalization!r}")
        D.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "directions", D)
        object.__setattr__(self, "delta", float(self.delta))

    @classmethod
    def from_displacements(cls, indices: Sequence[int], displacements) -> "PerturbationSpec":
        D = np.array(displacements, dtype=np.float64).reshape(len(indices), -1)
        size = float(np.linalg.norm(D))
        if size == 0.0:
            D = np.zeros_like(D)
            D.flat[0] = 1.0
            return cls(tuple(indices), D, 0.0, "stacked")
        return cls(tuple(indices), D / size, size, "stacked")

    @property
    def displacements(self) -> np.ndarray:
        return self.delta * self.directions

    @property
    def size(self) -> float:
        """Euclidean norm of the stacked data move, i.e. ||x - x^p||."""
        return float(np.linalg.norm(self.displacements))

    def scaled(self, delta: float) -> "PerturbationSpec":
        return PerturbationSpec(self.indices, self.directions, delta, self.normalization)

    def apply(self, data: Dataset) -> Dataset:
        if max(self.indices) >= data.n or self.directions.shape[1] != data.dim:
            raise InvalidInputError("perturbation does not fit the dataset")
        X = np.array(data.X)
        X[list(self.indices)] += self.displacements
        return data.with_features(X)

    def to_dict(self) -> dict:
        return {
            "indices": list(self.indices),
            "directions": self.directions.tolist(),
            "delta": self.delta,
            "normalization": self.normalization,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PerturbationSpec":
        return cls(tuple(d["indices"]), np.asarray(d["directions"], dtype=np.float64),
                   float(d["delta"]), d.get("normalization", "point"))


@dataclass(frozen=True)
class GraphicalDerivativeResult:
    v_samples: np.ndarray  # (k, p); row 0 is the minimum-norm solution
    residuals: np.ndarray  # ||H v + b|| per sample
    iterations: np.ndarray
    converged: np.ndarray
    min_norm_flag: np.ndarray
    rhs_norm: float  # ||b||
    seed: int

    @property
    def min_norm(self) -> np.ndarray:
        return self.v_samples[0]

    def within_bound(self, tol: float = RESIDUAL_TOL) -> np.ndarray:
        return self.residuals <= tol * (1.0 + self.rhs_norm)


def check_stationary(net: Network, data: Dataset, tol: float = STATIONARITY_TOL) -> float:
    g = np.linalg.norm(grad_w_mean_loss(net, data))
    bound = tol * (1.0 + np.linalg.norm(flatten(net)))
    if g > bound:
        raise NonStationaryError(f"||grad|| = {g:.3e} exceeds stationarity bound {bound:.3e}")
    return float(g)


MixedNormalization = Literal["dataset", "subset"]


def rhs(net: Network, data: Dataset, spec: PerturbationSpec, normalization: MixedNormalization = "dataset") -> np.ndarray:
    """Mixed derivative term b for the perturbation (delta folded in).

    ``"dataset"`` differentiates the first-order condition itself, i.e. the
    mixed term carries the same 1/n as the Hessian. ``"subset"`` averages it
    over the perturbed points only (1/|K|), which scales b, and hence every
    solution v, by n/|K|.
    """
    b = mixed_jvp(net, data, spec.indices, spec.displacements)
    if normalization == "dataset":
        return b * (len(spec.indices) / data.n)
    if normalization == "subset":
        return b
    raise InvalidInputError(f"unknown mixed-term normalization {normalization!r}")


def _max_iter(p: int) -> int:
    return int(np.ceil(50 * np.sqrt(p)))


def graphical_derivative(net: Network, data: Dataset, spec: PerturbationSpec, n_samples: int = 1, *,
                         seed: int = 0, tol: float = 1e-6, max_iter: int | None = None,
                         init_scale: float | None = None, require_stationary: bool = True,
                         normalization: MixedNormalization = "dataset",
                         workers: int | None = None) -> GraphicalDerivativeResult:
    """Sample solutions v of H v + b = 0 by matrix-free least squares.

    Sample 0 starts from zero and is the minimum-norm solution. The others
    start from random vectors of norm ``init_scale`` (default: half the norm of
    the minimum-norm solution) and differ from sample 0 only by the null-space
    part of their start, so they coincide with it when H is nonsingular.
    """
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    if require_stationary:
        check_stationary(net, data)
    H = HvpOperator(net, data)
    b = rhs(net, data, spec, normalization)
    p = b.size
    max_iter = _max_iter(p) if max_iter is None else max_iter

    first = cgls(H, -b, tol=tol, max_iter=max_iter)
    scale = 0.5 * np.linalg.norm(first.x) if init_scale is None else init_scale
    rng = np.random.default_rng(seed)
    starts = []
    for _ in range(n_samples - 1):
        u = rng.normal(size=p)
        starts.append(scale * u / np.linalg.norm(u))

    def solve(x0):
        return cgls(H, -b, x0, tol=tol, max_iter=max_iter)

    workers = default_workers() if workers is None else workers
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(workers) as pool:
            rest = list(pool.map(solve, starts))
    else:
        rest = [solve(x0) for x0 in starts]
    results = [first, *rest]
    for i, r in enumerate(results):
        if not r.converged:
            log.warning("graphical derivative sample %d stopped after %d iterations (residual %.3e)",
                        i, r.iterations, r.residual)
    return GraphicalDerivativeResult(
        v_samples=np.array([r.x for r in results]),
        residuals=np.array([r.residual for r in results]),
        iterations=np.array([r.iterations for r in results]),
        converged=np.array([r.converged for r in results]),
        min_norm_flag=np.array([i == 0 for i in range(len(results))]),
        rhs_norm=float(np.linalg.norm(b)),
        seed=seed,
    )


def estimate_solution_set(w_bar, gd: GraphicalDerivativeResult) -> SolutionSet:
    w_bar = np.asarray(w_bar, dtype=np.float64).reshape(-1)
    if w_bar.size != gd.v_samples.shape[1]:
        raise InvalidInputError("weight vector and graphical derivative differ in dimension")
    return SolutionSet(w_bar[None, :] + gd.v_samples, "estimated")


def influence_function(net: Network, data: Dataset, spec: PerturbationSpec, max_params: int = 200,
                       min_singular: float = 1e-8, normalization: MixedNormalization = "dataset") -> np.ndarray:
    """Classical step -H^{-1} b via a dense solve; isolated minima only."""
    if net.n_params > max_params:
        raise InvalidInputError(f"dense influence function limited to p <= {max_params}")
    Hd = HvpOperator(net, data).dense()
    smin = np.linalg.svd(Hd, compute_uv=False).min()
    if smin < min_singular:
        raise SingularHessianError(
            f"Hessian is numerically singular (smallest singular value {smin:.3e}); "
            "use graphical_derivative for non-isolated minima")
    return -np.linalg.solve(Hd, rhs(net, data, spec, normalization))


@dataclass(frozen=True)
class CoderivativeResult:
    q_samples: np.ndarray  # empty (0, d) when the adjoint system is inconsistent
    y_samples: np.ndarray
    residual: float
    consistent: bool


def _embed(net: Network, p_vec, layer: int | None) -> np.ndarray:
    p_vec = np.asarray(p_vec, dtype=np.float64).reshape(-1)
    if layer is None:
        if p_vec.size != net.n_params:
            raise InvalidInputError(f"p_vec has {p_vec.size} entries, expected {net.n_params}")
        return p_vec
    sl = net.shape.layer_slice(layer)
    if p_vec.size != sl.stop - sl.start:
        raise InvalidInputError(f"p_vec has {p_vec.size} entries, layer {layer} has {sl.stop - sl.start}")
    full = np.zeros(net.n_params)
    full[sl] = p_vec
    return full


def coderivative_apply(net: Network, data: Dataset, k: int, p_vec, *, layer: int | None = None,
                       n_samples: int = 1, seed: int = 0, tol: float = 1e-6,
                       init_scale: float = 1.0, max_iter: int | None = None) -> CoderivativeResult:
    """Sample {M_k^T y : H^T y = -p_vec}, M_k = d/dx_k of the first-order condition.

    The first y is the minimum-norm adjoint solution; further samples add the
    null-space part of random starts of norm ``init_scale``. With ``layer``
    set, ``p_vec`` lives on that layer's weights and is zero elsewhere.
    """
    if not 0 <= k < data.n:
        raise InvalidInputError(f"point index {k} outside 0..{data.n - 1}")
    target = -_embed(net, p_vec, layer)
    H = HvpOperator(net, data)
    max_iter = _max_iter(net.n_params) if max_iter is None else max_iter
    rng = np.random.default_rng(seed)
    starts = [None]
    for _ in range(n_samples - 1):
        u = rng.normal(size=net.n_params)
        starts.append(init_scale * u / np.linalg.norm(u))
    sols = [cgls(H, target, x0, tol=tol, max_iter=max_iter) for x0 in starts]
    residual = max(s.residual for s in sols)
    consistent = residual <= RESIDUAL_TOL * (1.0 + np.linalg.norm(target))
    Y = np.array([s.x for s in sols])
    if not consistent:
        return CoderivativeResult(np.empty((0, data.dim)), Y, residual, False)
    M = mixed_matrix_point(net, data, k)
    return CoderivativeResult(Y @ M, Y, residual, True)


def aubin_criterion(net: Network, data: Dataset, k: int, rtol: float = 1e-10) -> tuple[bool, float]:
    """Dense check that the coderivative at zero is {0} (tiny instances).

    Returns the verdict and ``max ||M_k^T y||`` over unit y in the numerical
    null space of H, relative to ``||M_k||``.
    """
    Hd = HvpOperator(net, data).dense()
    U, s, _ = np.linalg.svd(Hd)
    null = U[:, s <= rtol * max(s.max(), 1e-300)]
    M = mixed_matrix_point(net, data, k)
    if null.shape[1] == 0:
        return True, 0.0
    worst = float(np.linalg.norm(M.T @ null, 2) / max(np.linalg.norm(M, 2), 1e-300))
    return worst <= 1e-8, worst


Reduction = Literal["mean", "sum"]


def perturbed_loss(net: Network, data_perturbed: Dataset, indices: Sequence[int], reduction: Reduction = "mean") -> float:
    idx = list(indices)
    losses = quadratic_loss(net, data_perturbed.X[idx], data_perturbed.y[idx])
    return float(np.sum(losses) if reduction == "sum" else np.mean(losses))


@dataclass
class SensitivityReport:
    seed: int
    spec: PerturbationSpec
    hausdorff_to_wbar: float
    loss_before: float
    loss_after: np.ndarray
    residuals: np.ndarray
    norms: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    estimated: SolutionSet = field(repr=False)
    reduction: str = "mean"
    kappa: float | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "seed": self.seed,
            "spec": self.spec.to_dict(),
            "config": self.config,
            "loss_reduction": self.reduction,
            "hausdorff_to_wbar": self.hausdorff_to_wbar,
            "loss_before": self.loss_before,
            "per_sample": [
                {
                    "residual": float(r),
                    "norm": float(nm),
                    "loss_before": self.loss_before,
                    "loss_after": float(la),
                    "iterations": int(it),
                    "converged": bool(c),
                }
                for r, nm, la, it, c in zip(self.residuals, self.norms, self.loss_after, self.iterations, self.converged)
            ],
        }
        if self.kappa is not None:
            out["kappa"] = self.kappa
        return out


def algorithm1(net: Network, data: Dataset, spec: PerturbationSpec, n_samples: int = 1, *, seed: int = 0,
               reduction: Reduction = "mean", **solver_kw) -> SensitivityReport:
    """Graphical derivative, estimated set, and its Hausdorff distance to {w_bar}.

    Also records the loss on the perturbed points at w_bar and at each
    estimated solution.
    """
    gd = graphical_derivative(net, data, spec, n_samples, seed=seed, **solver_kw)
    w_bar = flatten(net)
    est = estimate_solution_set(w_bar, gd)
    dist = hausdorff(SolutionSet(w_bar, "original"), est)
    perturbed = spec.apply(data)
    before = perturbed_loss(net, perturbed, spec.indices, reduction)
    after = np.array([perturbed_loss(with_weights(net, w), perturbed, spec.indices, reduction) for w in est.samples])
    return SensitivityReport(
        seed=seed,
        spec=spec,
        hausdorff_to_wbar=dist,
        loss_before=before,
        loss_after=after,
        residuals=gd.residuals,
        norms=np.linalg.norm(gd.v_samples, axis=1),
        iterations=gd.iterations,
        converged=gd.converged,
        estimated=est,
        reduction=reduction,
        config={"n_samples": n_samples, **{k: v for k, v in solver_kw.items() if k != "workers"}},
    )
