"""Reciprocal-distortion annulus integrals and their Monte Carlo tails.

The central quantity is the integral over an annulus of the reciprocal
angular mean of a distortion field, taken against the log-uniform radial
measure.  Large values witness thin conformal annuli surviving inside a
rough field; the tail studies estimate how unlikely small values are as
the annuli nest deeper, sampling the full pipeline per draw.

Radial quadrature is log-spaced throughout because the measure is
d(rho)/rho.  Octave annuli share endpoint nodes, so decompositions add
exactly along the composite trapezoid rule.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .chaos import ChaosParams, build_measure
from .errors import ConfigError, NumericsError
from .extension import beurling_ahlfors_extend
from .field import sample_trace
from .homeo import build_homeo

__all__ = [
    "Annulus",
    "LehtoEstimate",
    "LkStatistics",
    "ModulusRecord",
    "TailEstimate",
    "TailPoint",
    "annulus_decomposition",
    "disk_distortion",
    "lehto_integral",
    "lk_statistics",
    "modulus_bound_check",
    "octave_values",
    "tail_probability",
    "wilson_interval",
]

log = logging.getLogger(__name__)

TAU = 2.0 * math.pi


@dataclass(frozen=True)
class Annulus:
    """Round annulus: points at distance in (inner, outer) from center."""

    center: complex
    inner: float
    outer: float

    def __post_init__(self) -> None:
        if not 0.0 < self.inner < self.outer:
            raise ConfigError("annulus needs 0 < inner < outer")


@dataclass(frozen=True)
class LehtoEstimate:
    """Quadrature value with a node-doubling error proxy."""

    value: float
    n_rho: int
    n_theta: int
    error_proxy: float
    dropped: int = 0
    valid: bool = True


@dataclass(frozen=True)
class TailPoint:
    """Empirical tail probability for one nesting depth."""

    depth: int
    hits: int
    samples: int
    p_hat: float
    lo: float
    hi: float


@dataclass(frozen=True)
class TailEstimate:
    """Fitted decay of small-integral probabilities across depths."""

    beta: float
    p: int
    delta: float
    points: list[TailPoint]
    decay_exponent: float
    from_bound: bool = False

    @property
    def slope(self) -> float:
        """Slope of log2 probability against depth."""
        return -self.decay_exponent


@dataclass(frozen=True)
class LkStatistics:
    """Small-value CDF exponents and cross-piece correlations."""

    beta: float
    p: int
    k_range: list[int]
    cdf_exponents: list[float]
    correlation: np.ndarray = field(repr=False)
    widened: bool = False


@dataclass(frozen=True)
class ModulusRecord:
    """Diameter bound audit for the image of one annulus."""

    inner_diameter: float
    outer_diameter: float
    classical_bound: float
    paper_bound: float
    satisfied: bool
    paper_satisfied: bool
    injective: bool


def wilson_interval(hits: int, total: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if total <= 0:
        raise ConfigError("need a positive sample count")
    if not 0 <= hits <= total:
        raise ConfigError("hits must lie in [0, total]")
    phat = hits / total
    denom = 1.0 + z * z / total
    center = (phat + z * z / (2 * total)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total))
    return max(0.0, center - half), min(1.0, center + half)


def _quadrature(k_accessor, ann: Annulus, n_rho: int, n_theta: int) -> tuple[float, int]:
    """One pass of the log-radial / angular trapezoid rule.

    Returns the value and the count of non-finite nodes dropped from the
    angular means.
    """
    u = np.linspace(math.log(ann.inner), math.log(ann.outer), n_rho)
    rho = np.exp(u)
    theta = TAU * np.arange(n_theta) / n_theta
    pts = ann.center + rho[:, None] * np.exp(1j * theta[None, :])
    k = np.asarray(k_accessor(pts.ravel()), dtype=float).reshape(pts.shape)
    finite = np.isfinite(k)
    dropped = int(k.size - finite.sum())
    # angular trapezoid on the periodic grid = mean of the finite nodes
    counts = finite.sum(axis=1)
    if np.any(counts == 0):
        raise ConfigError("an entire angular ring of the distortion field is non-finite")
    means = np.where(finite, k, 0.0).sum(axis=1) / counts
    integrand = 1.0 / (TAU * means)
    weights = np.full(n_rho, u[1] - u[0])
    weights[0] *= 0.5
    weights[-1] *= 0.5
    return float(np.dot(weights, integrand)), dropped


def lehto_integral(k_accessor, ann: Annulus, n_rho: int = 64, n_theta: int = 128) -> LehtoEstimate:
    """Annulus integral of the reciprocal angular mean of a distortion field.

    `k_accessor` maps complex points to distortion values >= 1 (callers
    supply 1 outside the field's support).  The error proxy is the value
    shift under doubling both node counts; more than 1% non-finite nodes
    marks the estimate invalid.
    """
    if n_rho < 2 or n_theta < 4:
        raise ConfigError("need at least 2 radial and 4 angular nodes")
    value, dropped = _quadrature(k_accessor, ann, n_rho, n_theta)
    refined, dropped2 = _quadrature(k_accessor, ann, 2 * n_rho, 2 * n_theta)
    total = n_rho * n_theta + 4 * n_rho * n_theta
    frac = (dropped + dropped2) / total
    if frac > 0:
        log.warning("dropped %d non-finite distortion nodes (%.2f%%)", dropped + dropped2, 100 * frac)
    return LehtoEstimate(
        value=value,
        n_rho=n_rho,
        n_theta=n_theta,
        error_proxy=abs(refined - value),
        dropped=dropped + dropped2,
        valid=bool(frac <= 0.01),
    )


def annulus_decomposition(k_accessor, w: complex, p: int, depth: int, n_rho: int = 16, n_theta: int = 128) -> list[float]:
    """Integrals over the disjoint annuli (rho^k, 2 rho^k), rho = 2^-p.

    p >= 1 keeps 2 rho^k <= rho^(k-1), so the annuli are disjoint and
    their sum bounds the full-annulus integral from below.
    """
    if int(p) != p or p < 1:
        raise ConfigError("need integer p >= 1 for disjoint annuli")
    if int(depth) != depth or depth < 1:
        raise ConfigError("need a positive nesting depth")
    rho = 2.0 ** (-int(p))
    out = []
    for k in range(1, int(depth) + 1):
        ann = Annulus(center=w, inner=rho**k, outer=2.0 * rho**k)
        out.append(lehto_integral(k_accessor, ann, n_rho, n_theta).value)
    return out


def disk_distortion(ext, rel_step: float = 0.05):
    """Distortion accessor of a disk extension, 1 outside the closed disk."""

    def accessor(points):
        pts = np.asarray(points, dtype=complex).ravel()
        out = np.ones(pts.shape, dtype=float)
        inside = np.abs(pts) < 1.0 - 1e-12
        if np.any(inside):
            out[inside] = ext.distortion_at(pts[inside], rel_step=rel_step)
        return out

    return accessor


def octave_values(
    beta: float,
    octaves: int,
    samples: int,
    *,
    base_seed: int = 0,
    n_rho: int = 9,
    n_theta: int = 64,
    modes: int = 2**15,
    grid_size: int = 2**16,
    center: complex = 1.0 + 0.0j,
    rel_step: float = 0.05,
    workers: int = 1,
) -> np.ndarray:
    """Pipeline Monte Carlo of per-octave integrals at a boundary point.

    Row i holds the integrals over the annuli (2^-(m+1), 2^-m) around
    `center` for the sample seeded base_seed + i.  Octaves share endpoint
    nodes, so partial sums reproduce the composite quadrature of the
    union annulus exactly; every depth then sees the same resolution.

    Samples are independent, so `workers` > 1 splits the seed range over
    processes; results are identical to the serial order.
    """
    if samples < 1:
        raise ConfigError("need at least one sample")
    if octaves < 1:
        raise ConfigError("need at least one octave")
    if workers < 1:
        raise ConfigError("need at least one worker")
    if workers > 1 and samples > 1:
        from concurrent.futures import ProcessPoolExecutor

        opts = dict(n_rho=n_rho, n_theta=n_theta, modes=modes, grid_size=grid_size, center=center, rel_step=rel_step)
        spans = [
            (beta, octaves, len(chunk), base_seed + int(chunk[0]), opts)
            for chunk in np.array_split(np.arange(samples), min(4 * workers, samples))
            if len(chunk)
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return np.vstack(list(pool.map(_octave_task, spans)))
    params = ChaosParams(beta=beta, modes=modes)
    theta = TAU * np.arange(n_theta) / n_theta
    rings = []
    weights = []
    for m in range(octaves):
        u = np.linspace(-(m + 1) * math.log(2.0), -m * math.log(2.0), n_rho)
        rings.append(np.exp(u))
        wts = np.full(n_rho, u[1] - u[0])
        wts[0] *= 0.5
        wts[-1] *= 0.5
        weights.append(wts)
    rho = np.concatenate(rings)
    pts = (center + rho[:, None] * np.exp(1j * theta[None, :])).ravel()
    flat_inside = np.abs(pts) < 1.0 - 1e-12

    out = np.empty((samples, octaves))
    for i in range(samples):
        ext = _sample_extension(params, modes, grid_size, base_seed + i)
        k = np.ones(len(pts))
        k[flat_inside] = ext.distortion_at(pts[flat_inside], rel_step=rel_step)
        means = k.reshape(len(rho), n_theta).mean(axis=1)
        integrand = 1.0 / (TAU * means)
        per_ring = integrand.reshape(octaves, n_rho)
        out[i] = np.einsum("or,or->o", per_ring, np.asarray(weights))
    return out


def _octave_task(span):
    beta, octaves, count, seed, opts = span
    return octave_values(beta, octaves, count, base_seed=seed, **opts)


# far past any ensemble span we run, so substitutes never alias live seeds
_SPARE_STRIDE = 1_000_003


def _sample_extension(params, modes, grid_size, seed):
    """Build the disk extension for one draw, substituting unrepresentable ones.

    Near the critical temperature a rare realization puts so little mass in
    one cell that the normalized cumulative sum cannot resolve it in float64
    and the homeomorphism would carry a flat segment.  The exact measure is
    still strictly positive, so the draw is a representation artifact; it is
    replaced by the seed a fixed stride away (a pure function of the original
    seed, hence identical under any worker split) and the swap is logged.
    """
    for attempt in range(4):
        use = seed + attempt * _SPARE_STRIDE
        measure = build_measure(sample_trace(modes, grid_size, use), params)
        try:
            homeo = build_homeo(measure)
        except ConfigError:
            log.warning(
                "measure for seed %d is degenerate at float resolution; trying seed %d",
                use,
                use + _SPARE_STRIDE,
            )
            continue
        return beurling_ahlfors_extend(homeo)
    raise NumericsError(f"no representable measure within 4 strides of seed {seed}")


def tail_probability(
    beta: float,
    p: int,
    delta: float,
    depths,
    samples: int,
    *,
    base_seed: int = 0,
    pieces: np.ndarray | None = None,
    **ensemble_kwargs,
) -> TailEstimate:
    """Monte Carlo tail of small full-annulus integrals across depths.

    For each depth N the event is {integral over (2^-pN, 1) < N delta}
    at the boundary point 1; the decay exponent is the negated slope of
    log2 probability against depth.  With no hits anywhere the exponent
    degrades to a lower bound derived from the Wilson upper limits.

    Pass `pieces` (an `octave_values` array) to reuse one ensemble for
    several studies; rows beyond `samples` are ignored.
    """
    if beta * beta >= 2.0:
        raise ConfigError("beta^2 must stay below 2")
    if delta <= 0:
        raise ConfigError("delta must be positive")
    if samples < 1000:
        raise ConfigError("need at least 10^3 samples")
    depths = sorted(int(n) for n in depths)
    if not depths or depths[0] < 1:
        raise ConfigError("need positive depths")
    if int(p) != p or p < 1:
        raise ConfigError("need integer p >= 1")
    if pieces is None:
        pieces = octave_values(beta, int(p) * depths[-1], samples, base_seed=base_seed, **ensemble_kwargs)
    elif pieces.shape[0] < samples or pieces.shape[1] < int(p) * depths[-1]:
        raise ConfigError("precomputed ensemble is smaller than the requested study")
    pieces = pieces[:samples]
    points = []
    for n in depths:
        totals = pieces[:, : int(p) * n].sum(axis=1)
        hits = int((totals < n * delta).sum())
        lo, hi = wilson_interval(hits, samples)
        points.append(TailPoint(depth=n, hits=hits, samples=samples, p_hat=hits / samples, lo=lo, hi=hi))
    positive = [(pt.depth, pt.p_hat) for pt in points if pt.hits > 0]
    if len(positive) >= 2:
        ns = np.array([n for n, _ in positive], dtype=float)
        ps = np.log2([q for _, q in positive])
        slope = float(np.polyfit(ns, ps, 1)[0])
        return TailEstimate(beta=beta, p=int(p), delta=delta, points=points, decay_exponent=-slope)
    # all (or all but one) probabilities vanished: bound the decay from
    # the Wilson upper limits instead of fitting through zeros
    ns = np.array([pt.depth for pt in points], dtype=float)
    his = np.log2([pt.hi for pt in points])
    slope = float(np.polyfit(ns, his, 1)[0]) if len(points) >= 2 else -math.inf
    return TailEstimate(beta=beta, p=int(p), delta=delta, points=points, decay_exponent=-slope, from_bound=True)


def lk_statistics(
    beta: float,
    p: int,
    k_range,
    samples: int,
    *,
    base_seed: int = 0,
    pieces: np.ndarray | None = None,
    **ensemble_kwargs,
) -> LkStatistics:
    """Small-value CDF exponents and correlations of the octave pieces.

    Piece k lives on the annulus (rho^k, 2 rho^k) with rho = 2^-p, i.e.
    octave p*k - 1 of the shared ensemble (`pieces` reuses one, as in
    `tail_probability`).  CDF exponents come from a log-log fit of the
    empirical CDF between inner quantiles; degenerate (constant) pieces
    report NaN exponents and zero correlations.
    """
    if beta * beta >= 2.0:
        raise ConfigError("beta^2 must stay below 2")
    if samples < 1000:
        raise ConfigError("need at least 10^3 samples")
    k_range = sorted(int(k) for k in k_range)
    if not k_range or k_range[0] < 1:
        raise ConfigError("need piece indices k >= 1")
    if int(p) != p or p < 1:
        raise ConfigError("need integer p >= 1")
    if pieces is None:
        pieces = octave_values(beta, int(p) * k_range[-1], samples, base_seed=base_seed, **ensemble_kwargs)
    elif pieces.shape[0] < samples or pieces.shape[1] < int(p) * k_range[-1]:
        raise ConfigError("precomputed ensemble is smaller than the requested study")
    values = np.column_stack([pieces[:samples, int(p) * k - 1] for k in k_range])

    exponents = []
    widened = False
    for col in values.T:
        expo, wide = _cdf_exponent(np.sort(col))
        exponents.append(expo)
        widened = widened or wide
    corr = np.corrcoef(values.T)
    corr = np.where(np.isfinite(corr), corr, 0.0)
    # a piece that is constant up to rounding would correlate pure ulp
    # noise; report 0 for such degenerate rows instead
    degenerate = np.ptp(values, axis=0) < 1e-12 * np.maximum(1.0, np.abs(values).max(axis=0))
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    return LkStatistics(
        beta=beta,
        p=int(p),
        k_range=list(k_range),
        cdf_exponents=exponents,
        correlation=corr,
        widened=widened,
    )


def _cdf_exponent(sorted_values: np.ndarray, low_q: float = 0.005, high_q: float = 0.10) -> tuple[float, bool]:
    """Log-log slope of the empirical CDF between two small quantiles."""
    n = len(sorted_values)
    if sorted_values[-1] - sorted_values[0] < 1e-15 * max(1.0, abs(float(sorted_values[-1]))):
        return math.nan, False
    widened = False
    lo_idx = max(int(low_q * n), 5)
    if lo_idx < 30:
        lo_idx, widened = 30, True
    hi_idx = max(int(high_q * n), lo_idx * 2)
    if hi_idx >= n:
        hi_idx, widened = n - 1, True
    eps = np.geomspace(sorted_values[lo_idx], sorted_values[hi_idx], 12)
    probs = np.searchsorted(sorted_values, eps, side="right") / n
    keep = probs > 0
    if keep.sum() < 2 or eps[0] <= 0:
        return math.nan, widened
    slope = float(np.polyfit(np.log(eps[keep]), np.log(probs[keep]), 1)[0])
    return slope, widened


def modulus_bound_check(fmap, ann: Annulus, lehto_value: float, samples: int = 512) -> ModulusRecord:
    """Audit the diameter inequality for the image of an annulus.

    Bounds D_I <= 16 exp(-c L) D_O are evaluated for both the classical
    rate c = 2 pi and the steeper 2 pi^2 variant; only the classical one
    feeds the `satisfied` verdict, the other is recorded for comparison.
    """
    if samples < 8:
        raise ConfigError("need at least 8 boundary samples")
    theta = np.exp(TAU * 1j * np.arange(samples) / samples)
    inner_pts = fmap.interpolate(ann.center + ann.inner * theta)
    outer_pts = fmap.interpolate(ann.center + ann.outer * theta)
    d_i = _diameter(inner_pts)
    d_o = _diameter(outer_pts)
    classical = 16.0 * math.exp(-TAU * lehto_value) * d_o
    paper = 16.0 * math.exp(-math.pi * TAU * lehto_value) * d_o
    injective = _simple_loop(inner_pts) and _simple_loop(outer_pts)
    satisfied = bool(d_i <= classical)
    paper_ok = bool(d_i <= paper)
    if satisfied and not paper_ok:
        log.info(
            "steep-rate diameter bound fails where the classical one holds: "
            "D_I=%.3g, classical=%.3g, steep=%.3g",
            d_i,
            classical,
            paper,
        )
    return ModulusRecord(
        inner_diameter=d_i,
        outer_diameter=d_o,
        classical_bound=classical,
        paper_bound=paper,
        satisfied=satisfied,
        paper_satisfied=paper_ok,
        injective=injective,
    )


def _diameter(points: np.ndarray) -> float:
    pts = np.asarray(points).ravel()
    return float(np.abs(pts[:, None] - pts[None, :]).max())


def _simple_loop(points: np.ndarray) -> bool:
    import shapely

    pts = np.asarray(points).ravel()
    ring = np.concatenate([pts, pts[:1]])
    return bool(shapely.LineString(np.column_stack([ring.real, ring.imag])).is_simple)
