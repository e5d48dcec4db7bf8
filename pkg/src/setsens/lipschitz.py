"""Closed-form Lipschitz-like moduli and an empirical check of the inclusion.

For one data point x_k and layer h the modulus is

    kappa_h = ||df/dx (x_k)|| / ||df/dW^(h) (x_k)||_F

and for the whole dataset kappa = sqrt(n) * max_i kappa_i.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .diff import input_jacobian, layer_jacobian
from .net import Dataset, InvalidInputError, Network, flatten, forward
from .sensitivity import PerturbationSpec, default_workers
from .sets import SolutionSet, point_to_set
from .trainer import DivergenceError, TrainConfig, retrain_from

log = logging.getLogger(__name__)


class DegeneratePointError(ValueError):
    def __init__(self, msg: str, layer: int | None = None, index: int | None = None):
        super().__init__(msg)
        self.layer = layer
        self.index = index


def _dead_layer(net: Network, x, h: int) -> int | None:
    fw = forward(net, x)
    if not np.any(fw.hidden[h - 1]):
        return h - 1 if h > 1 else 0
    for k in range(h, net.depth + 1):
        if not np.any(fw.masks[k - 1]):
            return k
    return None


def kappa_layer(net: Network, x_k, h: int) -> float:
    J = layer_jacobian(net, x_k, h)
    den = np.linalg.norm(J)
    if den == 0.0:
        dead = _dead_layer(net, x_k, h)
        where = "input is zero" if dead == 0 else f"layer {dead} has no active unit" if dead else "df/dW vanishes"
        raise DegeneratePointError(f"kappa for layer {h} undefined: {where}", layer=dead)
    return float(np.linalg.norm(input_jacobian(net, x_k)) / den)


@dataclass(frozen=True)
class LipschitzCertificate:
    layer: int
    per_point: np.ndarray  # kappa_i for every data point
    indices: tuple[int, ...]

    @property
    def aggregate(self) -> float:
        return float(np.sqrt(self.per_point.size) * self.per_point.max())

    @property
    def argmax(self) -> int:
        return self.indices[int(np.argmax(self.per_point))]

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "kappa_per_point": self.per_point.tolist(),
            "kappa_global": self.aggregate,
            "argmax_index": self.argmax,
        }


def kappa_global(net: Network, data: Dataset, layer: int = 1) -> LipschitzCertificate:
    vals = []
    for i in range(data.n):
        try:
            vals.append(kappa_layer(net, data.X[i], layer))
        except DegeneratePointError as e:
            raise DegeneratePointError(f"point {i}: {e}", layer=e.layer, index=i) from None
    return LipschitzCertificate(layer, np.array(vals), tuple(range(data.n)))


def kappa_table(net: Network, data: Dataset) -> dict[int, LipschitzCertificate]:
    return {h: kappa_global(net, data, h) for h in range(1, net.depth + 1)}


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    indices: tuple[int, ...]
    delta: float
    size: float  # ||x - x'||
    converged: bool
    grad_norm: float
    distance: float  # ||w_retrained - w_bar||
    in_region: bool
    radius: dict[int, float]
    layer_distance: dict[int, float]

    def margin(self, h: int) -> float:
        return self.radius[h] - self.layer_distance[h]

    def passed(self, h: int) -> bool:
        return self.layer_distance[h] <= self.radius[h] + 1e-9

    def to_dict(self) -> dict:
        layers = sorted(self.radius)
        return {
            "trial": self.trial,
            "indices": list(self.indices),
            "delta": self.delta,
            "size": self.size,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "distance": self.distance,
            "in_region": self.in_region,
            "passed": {str(h): self.passed(h) for h in layers},
            "margin": {str(h): self.margin(h) for h in layers},
        }


@dataclass
class InclusionReport:
    kappa_per_layer: dict[int, float]
    trials: list[TrialRecord]
    rho_factor: float
    seed: int
    notes: list[str] = field(default_factory=list)

    def counted(self) -> list[TrialRecord]:
        return [t for t in self.trials if t.converged and t.in_region]

    def pass_fraction(self, h: int | None = None) -> float:
        """Fraction of counted trials passing for layer h (all layers if None)."""
        counted = self.counted()
        if not counted:
            return float("nan")
        layers = sorted(self.kappa_per_layer) if h is None else [h]
        return sum(all(t.passed(k) for k in layers) for t in counted) / len(counted)

    def worst_margin(self, h: int) -> float:
        counted = self.counted()
        return min((t.margin(h) for t in counted), default=float("nan"))

    def to_dict(self) -> dict:
        layers = sorted(self.kappa_per_layer)
        return {
            "seed": self.seed,
            "rho_factor": self.rho_factor,
            "kappa_per_layer": {str(h): self.kappa_per_layer[h] for h in layers},
            "kappa_global": max(self.kappa_per_layer.values()),
            "pass_fraction": {str(h): self.pass_fraction(h) for h in layers},
            "worst_margin": {str(h): self.worst_margin(h) for h in layers},
            "n_counted": len(self.counted()),
            "n_trials": len(self.trials),
            "trials": [t.to_dict() for t in self.trials],
            "notes": list(self.notes),
        }


def _random_spec(rng: np.random.Generator, n: int, d: int, n_points: int, delta: float) -> PerturbationSpec:
    idx = np.sort(rng.choice(n, size=n_points, replace=False))
    D = rng.normal(size=(n_points, d))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    return PerturbationSpec(tuple(int(i) for i in idx), D, delta)


def inclusion_radius(net: Network, data: Dataset, spec: PerturbationSpec, h: int,
                     table: dict[int, LipschitzCertificate] | None = None) -> tuple[float, float]:
    """(kappa, kappa * ||x - x'||) for the given move, per-point or aggregate."""
    if len(spec.indices) == 1:
        k = kappa_layer(net, data.X[spec.indices[0]], h)
    else:
        cert = table[h] if table is not None else kappa_global(net, data, h)
        k = cert.aggregate
    return k, k * spec.size


def verify_inclusion(net: Network, data: Dataset, cfg: TrainConfig = TrainConfig(), *, trials: int = 20,
                     delta: float = 1e-3, n_points: int = 1, layers=None, seed: int = 0,
                     rho_factor: float = 10.0, original: SolutionSet | None = None,
                     specs: list[PerturbationSpec] | None = None, workers: int | None = None) -> InclusionReport:
    """Retrain on perturbed data and test F_h(x') within F_h(x) + kappa_h ||x - x'|| B.

    ``original`` holds samples of the unperturbed solution set (defaults to
    {w_bar}). A trial counts only if retraining converged and the retrained
    weights stay in the trust region ||w - w_bar|| <= rho_factor * kappa * ||x - x'||.
    """
    if trials < 1 and specs is None:
        raise InvalidInputError("need at least one trial")
    w_bar = flatten(net)
    original = SolutionSet(w_bar, "original") if original is None else original
    layers = list(range(1, net.depth + 1)) if layers is None else [int(h) for h in layers]
    table = {h: kappa_global(net, data, h) for h in layers}
    if specs is None:
        rng = np.random.default_rng(seed)
        specs = [_random_spec(rng, data.n, data.dim, n_points, delta) for _ in range(trials)]

    def run(t: int) -> TrialRecord:
        spec = specs[t]
        radius, kappas = {}, {}
        for h in layers:
            kappas[h], radius[h] = inclusion_radius(net, data, spec, h, table)
        try:
            res = retrain_from(net, spec.apply(data), cfg)
            w, conv, gn = flatten(res.net), res.converged, res.grad_norm
        except DivergenceError:
            w, conv, gn = w_bar, False, float("inf")
        dist = float(np.linalg.norm(w - w_bar))
        rho = rho_factor * max(kappas.values()) * spec.size
        layer_dist = {h: point_to_set(w[net.shape.layer_slice(h)], original.restrict(net.shape.layer_slice(h)))
                      for h in layers}
        return TrialRecord(t, spec.indices, spec.delta, spec.size, conv, gn, dist, dist <= rho + 1e-12,
                           radius, layer_dist)

    workers = default_workers() if workers is None else workers
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            records = list(pool.map(run, range(len(specs))))
    else:
        records = [run(t) for t in range(len(specs))]
    for r in records:
        if not r.converged:
            log.warning("trial %d: retraining did not converge (grad norm %.3e)", r.trial, r.grad_norm)
    return InclusionReport({h: table[h].aggregate for h in layers}, records, rho_factor, seed)
