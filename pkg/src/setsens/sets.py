"""Distances between finite samples of solution sets.

Solution sets are manifolds in general; here they are always represented by
finitely many sample points, so inf/sup become min/max.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import InvalidInputError

CONTAINMENT_TOL = 1e-9


@dataclass(frozen=True)
class SolutionSet:
    samples: np.ndarray  # (k, p)
    provenance: str = ""

    def __post_init__(self):
        S = np.array(self.samples, dtype=np.float64)
        if S.ndim == 1:
            S = S[None, :]
        if S.ndim != 2 or S.shape[0] == 0:
            raise InvalidInputError("a solution set needs at least one sample")
        S.setflags(write=False)
        object.__setattr__(self, "samples", S)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return self.samples.shape[0]

    def restrict(self, sl: slice, provenance: str | None = None) -> "SolutionSet":
        """Coordinate projection, e.g. onto one layer's weights."""
        return SolutionSet(self.samples[:, sl], self.provenance if provenance is None else provenance)


def _as_set(C) -> SolutionSet:
    return C if isinstance(C, SolutionSet) else SolutionSet(C)


def _pairwise(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if A.shape[1] != B.shape[1]:
        raise InvalidInputError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    # direct differences rather than the |a|^2 + |b|^2 - 2ab expansion, which
    # loses the exact zeros the metric identities rely on
    return np.linalg.norm(A[:, None, :] - B[None, :, :], axis=-1)


def point_to_set(w, C) -> float:
    C = _as_set(C)
    w = np.asarray(w, dtype=np.float64).reshape(1, -1)
    return float(_pairwise(w, C.samples).min())


def excess(C, D) -> float:
    """e(C, D): how far C sticks out beyond D."""
    C, D = _as_set(C), _as_set(D)
    return float(_pairwise(C.samples, D.samples).min(axis=1).max())


def hausdorff(C, D) -> float:
    C, D = _as_set(C), _as_set(D)
    dist = _pairwise(C.samples, D.samples)
    return float(max(dist.min(axis=1).max(), dist.min(axis=0).max()))


def contained_in_expansion(C, D, r: float, tol: float = CONTAINMENT_TOL) -> bool:
    """Whether every sample of C lies within r (+tol) of D."""
    if r < 0:
        raise InvalidInputError("expansion radius must be nonnegative")
    return excess(C, D) <= r + tol
