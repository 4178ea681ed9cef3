"""Injectivity analysis for ReLU layers and networks.

The most used entry points are re-exported here; submodules hold the rest.
"""

from .conv import ConvSpec, Kernel, check_conv, conv_matrix, cross_check_full, search_padding
from .dense import DenseLayer, check_dense, construct_expanded, construct_minimal, reduce_bias
from .dss import (
    InjectivityCertificate,
    Verdict,
    WedgeCell,
    active_rows,
    certify_dss_all,
    certify_dss_orthant,
    enumerate_wedges,
    falsify_random,
    has_dss_at,
)
from .network import ReluNetwork, build_cascade, certify_exact, certify_layerwise, forward
from .numeric import Prng, sample_gaussian_matrix
from .stability import StabilityReport, inverse_lipschitz_exact

__version__ = "0.1.0"

__all__ = [
    "ConvSpec", "Kernel", "check_conv", "conv_matrix", "cross_check_full", "search_padding",
    "DenseLayer", "check_dense", "construct_expanded", "construct_minimal", "reduce_bias",
    "InjectivityCertificate", "Verdict", "WedgeCell", "active_rows", "certify_dss_all",
    "certify_dss_orthant", "enumerate_wedges", "falsify_random", "has_dss_at",
    "ReluNetwork", "build_cascade", "certify_exact", "certify_layerwise", "forward",
    "Prng", "sample_gaussian_matrix", "StabilityReport", "inverse_lipschitz_exact",
]
