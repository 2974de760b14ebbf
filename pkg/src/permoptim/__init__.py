"""Differentiable permutation learning by unrolled optimisation over soft permutations."""

from .assignment import apply, brute_force_assignment, compose, hungarian, invert, round_soft
from .autodiff import Tape, Tensor, finite_diff_check
from .ordering import ComparisonNet, dump_comparison_grid, pairwise_costs
from .perm_optim import (
    POConfig, PositionStructure, cost_gradient, grid_structure, init_pre_permutation,
    optimise, position_structure, qp_cost, sequence_structure, total_cost,
)
from .sinkhorn import SoftPermutation, doubly_stochastic_residual, row_entropy, sinkhorn

__all__ = [
    "ComparisonNet", "POConfig", "PositionStructure", "SoftPermutation", "Tape", "Tensor",
    "apply", "brute_force_assignment", "compose", "cost_gradient", "doubly_stochastic_residual",
    "dump_comparison_grid", "finite_diff_check", "grid_structure", "hungarian",
    "init_pre_permutation", "invert", "optimise", "pairwise_costs", "position_structure",
    "qp_cost", "round_soft", "row_entropy", "sequence_structure", "sinkhorn", "total_cost",
]
