"""Operation and parameter counts for direct vs. factorized convolution layers."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .errors import DimensionError

__all__ = ["LayerSpec", "CostReport", "layer_cost", "REDUCTION_TABLE"]


@dataclass(frozen=True)
class LayerSpec:
    N: int
    C: int
    d: int
    stride: int = 1
    padding: int = 0
    K: int | None = None

    def __post_init__(self):
        if min(self.N, self.C, self.d) < 1:
            raise DimensionError(f"N, C, d must be >= 1, got N={self.N} C={self.C} d={self.d}")
        if self.stride < 1 or self.padding < 0:
            raise DimensionError(f"need stride >= 1 and padding >= 0, got {self.stride}, {self.padding}")
        if self.K is not None and self.K < 1:
            raise DimensionError(f"K must be >= 1, got {self.K}")


@dataclass(frozen=True)
class CostReport:
    N: int
    C: int
    d: int
    K: int
    direct_flops_per_pixel: int
    separable_flops_per_pixel: int
    theoretical_speedup: float
    direct_params: int
    lowrank_params: int
    weight_reduction: float
    break_even_rank: int
    include_bias: bool = True

    def to_dict(self):
        return asdict(self)


def layer_cost(spec, K=None, include_bias=True):
    """Per-output-pixel multiply counts and parameter counts for one layer.

    Direct: ``d^2 N C`` per pixel and ``d^2 N C + N`` parameters.
    Factorized: ``d K (N + C)`` per pixel and ``d K C + d N K + K + N``
    parameters (the ``K`` intermediate maps carry their own bias).
    ``include_bias=False`` drops every bias term from the parameter counts.
    """
    K = spec.K if K is None else K
    if K is None or K < 1:
        raise DimensionError(f"rank K must be given and >= 1, got {K}")
    N, C, d = spec.N, spec.C, spec.d
    direct = d * d * N * C
    separable = d * K * (N + C)
    direct_params = direct + (N if include_bias else 0)
    lowrank_params = d * K * C + d * N * K + ((K + N) if include_bias else 0)
    return CostReport(
        N=N,
        C=C,
        d=d,
        K=int(K),
        direct_flops_per_pixel=direct,
        separable_flops_per_pixel=separable,
        theoretical_speedup=direct / separable,
        direct_params=direct_params,
        lowrank_params=lowrank_params,
        weight_reduction=direct_params / lowrank_params,
        break_even_rank=(d * N * C) // (N + C),
        include_bias=include_bias,
    )


# (layer, d, C, N, K, printed weight reduction) for the three 5x5 layers of the
# CIFAR-10 reference network (conv1 3->192, conv2 192->128, conv3 128->256).
REDUCTION_TABLE = (
    ("first", 5, 3, 192, 4, 3.5),
    ("first", 5, 3, 192, 8, 1.8),
    ("first", 5, 3, 192, 12, 1.2),
    ("second", 5, 192, 128, 8, 47.5),
    ("second", 5, 192, 128, 16, 23.8),
    ("second", 5, 192, 128, 32, 12.0),
    ("second", 5, 192, 128, 64, 6.0),
    ("second", 5, 192, 128, 128, 3.0),
    ("second", 5, 192, 128, 256, 1.5),
    ("third", 5, 128, 256, 8, 52.5),
    ("third", 5, 128, 256, 16, 26.4),
    ("third", 5, 128, 256, 32, 13.3),
    ("third", 5, 128, 256, 64, 6.7),
    ("third", 5, 128, 256, 128, 3.3),
    ("third", 5, 128, 256, 256, 1.7),
)
