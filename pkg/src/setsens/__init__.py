"""Set-valued sensitivity analysis for deep fully-connected ReLU networks."""

from .net import Dataset, InvalidInputError, Network, flatten, forward, quadratic_loss, unflatten
from .sensitivity import PerturbationSpec, algorithm1, estimate_solution_set, graphical_derivative
from .sets import SolutionSet, hausdorff

__all__ = [
    "Dataset", "InvalidInputError", "Network", "PerturbationSpec", "SolutionSet", "algorithm1",
    "estimate_solution_set", "flatten", "forward", "graphical_derivative", "hausdorff",
    "quadratic_loss", "unflatten",
]
