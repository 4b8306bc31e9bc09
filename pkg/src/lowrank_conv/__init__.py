"""Closed-form low-rank factorization of convolution kernels.

A ``(C, d, d, N)`` kernel is replaced by ``K`` vertical ``d x 1`` filters
followed by ``N`` horizontal ``1 x d`` filters.  The optimal factors come from
one SVD of the matricized kernel; see :mod:`lowrank_conv.decompose`.
"""

from .conv import ConvConfig, MacCounter, conv_direct, conv_separable
from .cost import CostReport, LayerSpec, layer_cost
from .decompose import (
    FactorPair,
    decompose_als,
    decompose_closed_form,
    objective_e1,
    reconstruct,
    select_rank,
    tail_energy,
)
from .errors import (
    ArgumentError,
    DimensionError,
    FormatError,
    LowRankError,
    NumericError,
    RankError,
    StateError,
    TrainingError,
)
from .tensor import SvdResult, dematricize, frobenius_norm_sq, jacobi_svd, matricize, svd

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "ConvConfig",
    "CostReport",
    "DimensionError",
    "FactorPair",
    "FormatError",
    "LayerSpec",
    "LowRankError",
    "MacCounter",
    "NumericError",
    "RankError",
    "StateError",
    "SvdResult",
    "TrainingError",
    "conv_direct",
    "conv_separable",
    "decompose_als",
    "decompose_closed_form",
    "dematricize",
    "frobenius_norm_sq",
    "jacobi_svd",
    "layer_cost",
    "matricize",
    "objective_e1",
    "reconstruct",
    "select_rank",
    "svd",
    "tail_energy",
]
