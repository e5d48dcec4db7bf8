"""The two-parameter toy problem: f = w2 * relu(w1 * x), data (1, 2) and (2, 4).

With positive weights and inputs this is f = w1 * w2 * x, so the pristine
solution set is the hyperbola w1 * w2 = 2 and moving both inputs by
0.2 * (-1, -2) shifts it to w1 * w2 = 2.5.
"""

from __future__ import annotations

import numpy as np

from .net import Dataset, Network
from .sensitivity import PerturbationSpec
from .sets import SolutionSet

W_BAR = (1.0, 2.0)
X_BAR = (1.0, 2.0)
Y_BAR = (2.0, 4.0)
PERTURBATION = (-0.2, -0.4)  # 0.2 * (-1, -2)

# values printed for the toy in the source write-up; they do not follow from
# the closed-form modulus and are carried only for side-by-side reporting
REPORTED_KAPPA = 0.2
REPORTED_RADIUS = 0.178
REPORTED_LOSS_BEFORE = 0.4
REPORTED_LOSS_AFTER = 0.01


def toy_network(w1: float = W_BAR[0], w2: float = W_BAR[1]) -> Network:
    return Network((np.array([[w1]]), np.array([[w2]])), np.array([1.0]))


def toy_dataset() -> Dataset:
    return Dataset(np.array(X_BAR)[:, None], np.array(Y_BAR))


def toy_perturbation(scale: float = 1.0) -> PerturbationSpec:
    return PerturbationSpec.from_displacements((0, 1), scale * np.array(PERTURBATION)[:, None])


def hyperbola_product(data: Dataset) -> float:
    """Least-squares optimal value of w1 * w2 for the toy data."""
    x, y = data.X[:, 0], data.y
    return float(x @ y / (x @ x))


def hyperbola_samples(product: float, w1_values) -> SolutionSet:
    w1 = np.asarray(w1_values, dtype=np.float64)
    return SolutionSet(np.column_stack([w1, product / w1]), f"w1*w2={product:g}")
