"""Chirp-multicarrier (AFDM) anti-interference link simulation."""

from .daft import DaftParams, DimensionError, append_cpp, daft, idaft, quadratic_sum_L, strip_cpp
from .detectors import CddConfig, cdd_despread, cdd_equalize, mmse_detect
from .spreading import ConfigError, EccParams, SpreadingSequence, gen_mseq, spreading_sequence
from .throughput import AnalyticContext, LinkBudget, optimize_nd, packet_throughput

__all__ = [
    "AnalyticContext",
    "CddConfig",
    "ConfigError",
    "DaftParams",
    "DimensionError",
    "EccParams",
    "LinkBudget",
    "SpreadingSequence",
    "append_cpp",
    "cdd_despread",
    "cdd_equalize",
    "daft",
    "gen_mseq",
    "idaft",
    "mmse_detect",
    "optimize_nd",
    "packet_throughput",
    "quadratic_sum_L",
    "spreading_sequence",
    "strip_cpp",
]
