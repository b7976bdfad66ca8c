"""Circle homeomorphisms read off chaos measures.

The homeomorphism is the normalized cumulative mass h(t) = mass([0,t)) /
total, stored as strictly increasing piecewise-linear knots on a uniform
grid and treated as a lift: h(t + 1) = h(t) + 1 everywhere.  Measure-built
maps pin h(0) = 0; a rotated variant carries its offset in the first knot.

Regularity is probed by dyadic increments: at level j the largest value of
|h((i+1) 2^-j) - h(i 2^-j)| scales like 2^(-j alpha) when h is alpha-Holder,
so slopes of log2 increments against level estimate alpha from above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chaos import ChaosMeasure
from .errors import ConfigError

__all__ = [
    "CircleHomeomorphism",
    "build_homeo",
    "holder_exponent",
    "max_dyadic_increments",
    "increment_exponent",
]


@dataclass(frozen=True)
class CircleHomeomorphism:
    """Piecewise-linear circle homeomorphism given by knots at i/M.

    Knots are strictly increasing and span exactly one period:
    knots[-1] = knots[0] + 1.  Off-grid arguments interpolate linearly,
    arguments outside [0, 1] reduce by the lift rule.
    """

    knots: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if k.ndim != 1 or len(k) < 3:
            raise ConfigError("need a 1-d array of at least 3 knots")
        if not np.all(np.diff(k) > 0.0):
            raise ConfigError("knot values must be strictly increasing")
        if abs((k[-1] - k[0]) - 1.0) > 1e-12:
            raise ConfigError("knots must span exactly one period")
        object.__setattr__(self, "knots", k)

    @property
    def grid_size(self) -> int:
        return len(self.knots) - 1

    @classmethod
    def identity(cls, grid_size: int) -> "CircleHomeomorphism":
        return cls(np.linspace(0.0, 1.0, grid_size + 1))

    @classmethod
    def from_callable(cls, fn, grid_size: int) -> "CircleHomeomorphism":
        """Sample a monotone lift fn with fn(1) = fn(0) + 1 at the knots."""
        t = np.linspace(0.0, 1.0, grid_size + 1)
        return cls(np.asarray([float(fn(x)) for x in t]))

    def rotated(self, offset: float) -> "CircleHomeomorphism":
        """Post-compose with the rotation t -> t + offset."""
        return CircleHomeomorphism(self.knots + offset)

    def evaluate(self, t) -> np.ndarray:
        """Lift value h(t) for any real t."""
        t = np.asarray(t, dtype=float)
        winding = np.floor(t)
        u = t - winding
        m = self.grid_size
        scaled = u * m
        idx = np.minimum(scaled.astype(int), m - 1)
        frac = scaled - idx
        seg = self.knots[idx + 1] - self.knots[idx]
        return self.knots[idx] + frac * seg + winding

    def invert(self, s) -> np.ndarray:
        """Exact piecewise-linear inverse of the lift."""
        s = np.asarray(s, dtype=float)
        winding = np.floor(s - self.knots[0])
        v = s - winding
        # v sits in [knots[0], knots[0] + 1); locate its segment
        idx = np.clip(np.searchsorted(self.knots, v, side="right") - 1, 0, self.grid_size - 1)
        seg = self.knots[idx + 1] - self.knots[idx]
        t = (idx + (v - self.knots[idx]) / seg) / self.grid_size
        return t + winding


def build_homeo(measure: ChaosMeasure) -> CircleHomeomorphism:
    """Normalized cumulative mass as a homeomorphism fixing the base point.

    A zero-mass cell anywhere would break strict monotonicity and is
    rejected rather than patched.
    """
    if measure.total_mass <= 0.0 or not np.isfinite(measure.total_mass):
        raise ConfigError("measure has degenerate total mass")
    knots = measure.cumulative / measure.total_mass
    if not np.all(np.diff(knots) > 0.0):
        raise ConfigError("measure has a zero-mass cell; homeomorphism degenerate")
    return CircleHomeomorphism(knots)


def max_dyadic_increments(values: np.ndarray, depth: int) -> np.ndarray:
    """Largest level-j increment of a sampled path, j = 1..depth.

    The input holds samples at i 2^-L for i = 0..2^L (endpoint included),
    real or complex; increments use absolute values.
    """
    n = len(values) - 1
    if n < 2 or (n & (n - 1)) != 0:
        raise ConfigError("need 2^L + 1 samples at dyadic parameters")
    max_depth = n.bit_length() - 1
    if not 1 <= depth <= max_depth:
        raise ConfigError(f"depth must lie in [1, {max_depth}]")
    out = np.empty(depth)
    for j in range(1, depth + 1):
        step = n >> j
        level_vals = values[::step]
        out[j - 1] = np.max(np.abs(np.diff(level_vals)))
    return out


def increment_exponent(increments: np.ndarray) -> float:
    """Regularity exponent from dyadic max increments.

    Negated least-squares slope of log2 increment against level.  Exact on
    power laws: an alpha-Holder cusp yields alpha at any depth.  A single
    rough scale flattens the fit and pulls the estimate down, so this reads
    the worst measured behavior, not an average of good scales.
    """
    d = np.log2(np.asarray(increments, dtype=float))
    if len(d) < 2:
        raise ConfigError("need at least two levels to fit an exponent")
    levels = np.arange(1, len(d) + 1, dtype=float)
    x = levels - levels.mean()
    return float(-(x @ d) / (x @ x))


def holder_exponent(h: CircleHomeomorphism, depth: int = 12) -> float:
    """Dyadic-increment regularity estimate for a circle homeomorphism."""
    m = h.grid_size
    if m & (m - 1) != 0:
        raise ConfigError("knot grid must be a power of two")
    if (m >> depth) < 1:
        raise ConfigError(f"depth {depth} exceeds knot resolution {m}")
    return increment_exponent(max_dyadic_increments(h.knots, depth))
