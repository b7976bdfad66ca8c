"""Multiplicative chaos measures on the circle.

Exponentiating a trace field realization cell by cell,

    mass_i = (1/M) * exp(beta * X(t_i) - beta^2 * H_n / 2),

gives a random measure whose expected total is one for every cutoff: the
variance correction beta^2 H_n / 2 is exactly the log moment generating
function of the Gaussian marginal.  The subcritical regime beta^2 < 2 is
enforced at construction; anything hotter needs an explicit exploratory
opt-in and carries no guarantees downstream.

Moment estimation rejects orders q >= 2 / beta^2, where the q-th moment of
an interval mass diverges and no amount of sampling would converge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericsError
from .field import FieldTrace, harmonic_number, sample_trace

__all__ = [
    "ChaosParams",
    "ChaosMeasure",
    "MomentScalingFit",
    "build_measure",
    "interval_mass",
    "moment_scaling",
    "largest_cell_share",
]

CRITICAL_BETA_SQ = 2.0


@dataclass(frozen=True)
class ChaosParams:
    """Inverse temperature and frequency cutoff for a chaos measure."""

    beta: float
    modes: int
    exploratory: bool = False

    def __post_init__(self):
        if self.beta < 0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta}")
        if self.modes < 1:
            raise ConfigError("modes must be a positive integer")
        if self.beta**2 >= CRITICAL_BETA_SQ and not self.exploratory:
            raise ConfigError(
                f"beta = {self.beta} is at or past the critical value sqrt(2); "
                "pass exploratory=True to sample anyway"
            )

    @property
    def moment_bound(self) -> float:
        """Supremum of estimable moment orders, 2/beta^2 (inf at beta = 0)."""
        if self.beta == 0.0:
            return math.inf
        return 2.0 / self.beta**2


@dataclass
class ChaosMeasure:
    """Discrete chaos measure: one mass per grid cell [i/M, (i+1)/M)."""

    params: ChaosParams
    grid_size: int
    seed: int
    cell_masses: np.ndarray = field(repr=False)
    total_mass: float = 0.0
    _cumulative: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def cumulative(self) -> np.ndarray:
        """Running mass at cell boundaries; entry i is the mass of [0, i/M)."""
        if self._cumulative is None:
            cum = np.empty(self.grid_size + 1)
            cum[0] = 0.0
            np.cumsum(self.cell_masses, out=cum[1:])
            self._cumulative = cum
        return self._cumulative

    def cumulative_at(self, t) -> np.ndarray:
        """Mass of [0, t) with linear pro-rating inside a cell, t in [0, 1]."""
        t = np.asarray(t, dtype=float)
        scaled = t * self.grid_size
        idx = np.clip(np.floor(scaled).astype(int), 0, self.grid_size - 1)
        frac = scaled - idx
        return self.cumulative[idx] + frac * self.cell_masses[idx]


def build_measure(trace: FieldTrace, params: ChaosParams) -> ChaosMeasure:
    """Exponentiate a field realization into a measure.

    The trace must carry exactly the cutoff the parameters name; mixing a
    measure with a foreign field would silently break the normalization.
    """
    if trace.modes != params.modes:
        raise ConfigError(
            f"trace carries {trace.modes} modes but params expect {params.modes}"
        )
    m = trace.grid_size
    if params.beta == 0.0:
        masses = np.full(m, 1.0 / m)
    else:
        log_mass = (
            params.beta * trace.values
            - 0.5 * params.beta**2 * harmonic_number(params.modes)
            - math.log(m)
        )
        masses = np.exp(log_mass)
        if not np.all(np.isfinite(masses)) or np.any(masses <= 0.0):
            raise NumericsError("degenerate cell masses after exponentiation")
    measure = ChaosMeasure(
        params=params,
        grid_size=m,
        seed=trace.seed,
        cell_masses=masses,
    )
    measure.total_mass = float(measure.cumulative[-1])
    return measure


def interval_mass(measure: ChaosMeasure, a: float, b: float) -> float:
    """Mass of [a, b) inside [0, 1], pro-rating partial cells linearly.

    Computed as a difference of the cumulative function, so adjacent
    intervals add up exactly in floating point.
    """
    if not (0.0 <= a <= b <= 1.0):
        raise ConfigError(f"need 0 <= a <= b <= 1, got a={a}, b={b}")
    if a == b:
        return 0.0
    lo, hi = measure.cumulative_at(np.array([a, b]))
    return float(hi - lo)


def largest_cell_share(measure: ChaosMeasure) -> float:
    """Largest single-cell fraction of the total, a non-atomicity diagnostic."""
    return float(measure.cell_masses.max() / measure.total_mass)


@dataclass(frozen=True)
class MomentScalingFit:
    """Log-log fit of interval-moment averages against interval size."""

    q: float
    sizes: tuple[float, ...]
    means: tuple[float, ...]
    slope: float
    stderr: float
    samples: int
    base_seed: int


def _dyadic_exponent(size: float, grid_size: int) -> int:
    level = round(-math.log2(size))
    if level < 1 or 2.0**-level != size:
        raise ConfigError(f"interval size {size} is not dyadic")
    if (grid_size >> level) < 1:
        raise ConfigError(f"interval size {size} is below one grid cell")
    return level


def moment_scaling(
    params: ChaosParams,
    q: float,
    sizes,
    samples: int,
    *,
    grid_size: int | None = None,
    base_seed: int = 0,
) -> MomentScalingFit:
    """Monte Carlo estimate of the interval-moment scaling exponent.

    For each realization the q-th powers of all disjoint dyadic blocks of a
    given size are averaged (an unbiased, position-averaged estimate), then
    averaged across seeds, and the exponent is the least-squares slope of
    log mean against log size.  The quoted error is a leave-one-seed-out
    jackknife on the slope.
    """
    if q >= params.moment_bound:
        raise ConfigError(
            f"moment order q={q} is not estimable: needs q < 2/beta^2 = "
            f"{params.moment_bound:.4g}"
        )
    if samples < 2:
        raise ConfigError("need at least two samples")
    grid = grid_size if grid_size is not None else 2 * params.modes
    sizes = [float(s) for s in sizes]
    if len(sizes) < 2:
        raise ConfigError("need at least two sizes to fit a slope")
    levels = [_dyadic_exponent(s, grid) for s in sizes]

    per_seed = np.empty((samples, len(sizes)))
    for i in range(samples):
        trace = sample_trace(params.modes, grid, base_seed + i)
        measure = build_measure(trace, params)
        cum = measure.cumulative
        for j, level in enumerate(levels):
            step = grid >> level
            blocks = np.diff(cum[::step])
            per_seed[i, j] = np.mean(blocks**q)

    means = per_seed.mean(axis=0)
    logs = np.log(np.asarray(sizes))
    design = logs - logs.mean()
    weights = design / (design @ design)
    slope = float(weights @ np.log(means))

    # jackknife over seeds
    n = samples
    leave_out = (n * means[None, :] - per_seed) / (n - 1)
    slopes_i = np.log(leave_out) @ weights
    stderr = float(np.sqrt((n - 1) / n * np.sum((slopes_i - slopes_i.mean()) ** 2)))

    return MomentScalingFit(
        q=q,
        sizes=tuple(sizes),
        means=tuple(float(v) for v in means),
        slope=slope,
        stderr=stderr,
        samples=samples,
        base_seed=base_seed,
    )
