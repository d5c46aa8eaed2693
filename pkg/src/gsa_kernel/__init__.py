"""Group-equivariant self-attention forward engine and equivariance audit harness."""

from __future__ import annotations

from .attention import (
    AttentionWeights,
    FeatureMap,
    NeighborhoodSpec,
    attention_scores,
    init_attention_weights,
    self_attend,
    self_attend_absolute,
    self_attend_relative,
)
from .encoding import (
    EncodingFunction,
    PositionTable,
    encode_group,
    encode_spatial,
    fourier_encoding,
    invariance_residual,
    relative_offset,
    transform_encoding,
    transform_group_encoding,
)
from .groups import AffineElement, GroupSpec, StabilizerElement, parse_designation
from .gsa import (
    GroupFeatureMap,
    GroupNeighborhoodSpec,
    express_convolution,
    group_attend,
    group_attend_haar,
    lift_attend,
    lift_attend_fast,
    lift_attend_haar,
)

__version__ = "0.1.0"
