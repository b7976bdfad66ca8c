"""Conformal welding of random circle homeomorphisms.

Pipeline: sample a log-correlated field on the circle, exponentiate it into
a multiplicative chaos measure, read off a circle homeomorphism, extend it
quasiconformally to the disk, solve the associated degenerate Beltrami
equation globally, and trace the welded Jordan curve.  Side modules estimate
Lehto integrals and their small-value statistics for the same random fields.

The stages are importable individually; this namespace re-exports the
common entry points.
"""

from .chaos import ChaosParams, build_measure
from .errors import ConfigError, NonConvergenceError, NumericsError
from .extension import beurling_ahlfors_extend
from .field import sample_trace
from .homeo import build_homeo
from .lehto import lehto_integral, lk_statistics, octave_values, tail_probability
from .welding import verify_welding, weld

__version__ = "0.1.0"

__all__ = [
    "ChaosParams",
    "ConfigError",
    "NonConvergenceError",
    "NumericsError",
    "__version__",
    "beurling_ahlfors_extend",
    "build_homeo",
    "build_measure",
    "lehto_integral",
    "lk_statistics",
    "octave_values",
    "sample_trace",
    "tail_probability",
    "verify_welding",
    "weld",
]
