"""Averaging extension of the circle map into the unit disk.

The homeomorphism is lifted to the real line, extended to the upper
half-plane by the classical two-sided averaging formula, and carried to
the disk by the exponential covering z -> exp(2 pi i z).  The covering is
conformal, so local distortion survives the trip unchanged, while the
lift rule h(x + 1) = h(x) + 1 makes the disk map single valued.

Integrals of the piecewise-linear lift are evaluated in closed form.
That keeps the extension meaningful arbitrarily close to the boundary,
where the averaging windows shrink below any fixed mesh, and it is what
the mesh-free distortion accessor relies on for deep annuli.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .chaos import ChaosMeasure
from .errors import ConfigError, NumericsError
from .homeo import CircleHomeomorphism

__all__ = [
    "BeltramiField",
    "DiskExtension",
    "beurling_ahlfors_extend",
    "dilatation",
    "dilatation_from_grid",
    "interpolate_grid",
    "lattice_axis",
    "whitney_check",
    "whitney_distortion_bound",
]

TAU = 2.0 * np.pi

log = logging.getLogger(__name__)


def lattice_axis(grid_side: int, half_width: float) -> np.ndarray:
    """Periodic axis over [-S, S): step 2S/G, right endpoint omitted."""
    if grid_side < 16 or grid_side & (grid_side - 1):
        raise ConfigError(f"grid side must be a power of two >= 16, got {grid_side}")
    if half_width <= 1.0:
        raise ConfigError("domain half-width must exceed the disk radius 1")
    step = 2.0 * half_width / grid_side
    return -half_width + step * np.arange(grid_side)


def interpolate_grid(values: np.ndarray, points, half_width: float) -> np.ndarray:
    """Bilinear lookup of lattice samples at off-lattice complex points.

    The lattice is treated as periodic over [-S, S)^2, matching the
    transform conventions downstream.
    """
    vals = np.asarray(values)
    side = vals.shape[0]
    step = 2.0 * half_width / side
    p = np.asarray(points, dtype=complex)
    gx = (p.real + half_width) / step
    gy = (p.imag + half_width) / step
    i0 = np.floor(gx).astype(int)
    j0 = np.floor(gy).astype(int)
    fx = gx - i0
    fy = gy - j0
    i0 %= side
    j0 %= side
    i1 = (i0 + 1) % side
    j1 = (j0 + 1) % side
    low = vals[j0, i0] * (1.0 - fx) + vals[j0, i1] * fx
    high = vals[j1, i0] * (1.0 - fx) + vals[j1, i1] * fx
    return low * (1.0 - fy) + high * fy


@dataclass
class BeltramiField:
    """Dilatation samples on the square solver lattice.

    Arrays are indexed [row, column] = [y, x] over lattice_axis; mu
    vanishes identically outside the closed-disk mask and satisfies
    |mu| < 1 on it (readings at or above 1 were clipped and counted).
    """

    half_width: float
    mu: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    clipped: int = 0
    jacobian_failures: int = 0
    _distortion: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.mu.ndim != 2 or self.mu.shape[0] != self.mu.shape[1]:
            raise ConfigError("dilatation lattice must be square")
        if self.mu.shape != self.mask.shape:
            raise ConfigError("mask and dilatation shapes differ")
        if np.any(self.mu[~self.mask] != 0.0):
            raise ConfigError("dilatation must vanish outside the support mask")
        if self.sup_abs >= 1.0:
            raise ConfigError("dilatation reaches modulus 1 on the mask")

    @property
    def grid_side(self) -> int:
        return self.mu.shape[0]

    @property
    def step(self) -> float:
        return 2.0 * self.half_width / self.grid_side

    @property
    def sup_abs(self) -> float:
        return float(np.abs(self.mu).max())

    def distortion(self) -> np.ndarray:
        """Lattice distortion (1 + |mu|) / (1 - |mu|); 1 off the support."""
        if self._distortion is None:
            a = np.abs(self.mu)
            self._distortion = (1.0 + a) / (1.0 - a)
        return self._distortion

    def k_at(self, points) -> np.ndarray:
        """Bilinear distortion lookup, clamped below by the conformal value 1."""
        k = interpolate_grid(self.distortion(), points, self.half_width)
        return np.maximum(k.real, 1.0)


class DiskExtension:
    """Disk extension of a circle homeomorphism with exact lift integrals.

    Construction precomputes the running integral of the periodic part
    p(x) = h(x) - x at the knots, after which the antiderivative of the
    lift is available in closed form anywhere on the line.  Lattice
    caches of the disk map and its dilatation are filled on first use,
    keyed by (grid side, half-width).
    """

    def __init__(self, homeo: CircleHomeomorphism):
        if np.min(np.diff(homeo.knots)) <= 0.0:
            raise ConfigError("homeomorphism knots must increase strictly")
        m = homeo.grid_size
        periodic = homeo.knots - np.arange(m + 1) / m
        running = np.empty(m + 1)
        running[0] = 0.0
        np.cumsum((periodic[:-1] + periodic[1:]) / (2.0 * m), out=running[1:])
        self.homeo = homeo
        self._periodic = periodic
        self._running = running
        self._per_period = float(running[-1])
        self._grids: dict[tuple[int, float], np.ndarray] = {}
        self._fields: dict[tuple[int, float], BeltramiField] = {}

    def lift_integral(self, x) -> np.ndarray:
        """Antiderivative of the lift, exact on its linear cells, zero at 0."""
        x = np.asarray(x, dtype=float)
        m = self.homeo.grid_size
        whole = np.floor(x)
        scaled = (x - whole) * m
        idx = np.minimum(scaled.astype(int), m - 1)
        frac = scaled - idx
        rise = self._periodic[idx + 1] - self._periodic[idx]
        partial = (self._periodic[idx] + 0.5 * rise * frac) * frac / m
        return 0.5 * x**2 + whole * self._per_period + self._running[idx] + partial

    def halfplane_map(self, x, y) -> np.ndarray:
        """Two-sided averaging extension at x + iy, y >= 0.

        Returns u + iv with u the mean of the forward and backward window
        averages of the lift and v their difference; on the axis (y = 0)
        this degenerates to the boundary values h(x).
        """
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if np.any(y < 0.0):
            raise ConfigError("extension is defined on the closed upper half-plane")
        out = np.empty(x.shape, dtype=complex)
        axis = y == 0.0
        if np.any(axis):
            out[axis] = self.homeo.evaluate(x[axis])
        body = ~axis
        if np.any(body):
            xb, yb = x[body], y[body]
            anchor = self.lift_integral(xb)
            forward = (self.lift_integral(xb + yb) - anchor) / yb
            backward = (anchor - self.lift_integral(xb - yb)) / yb
            out[body] = 0.5 * (forward + backward) + 1j * (forward - backward)
        return out

    def evaluate(self, w) -> np.ndarray:
        """Extension value f(w) on the closed unit disk."""
        w = np.asarray(w, dtype=complex)
        r = np.abs(w)
        if np.any(r > 1.0 + 1e-9):
            raise ConfigError("extension is defined on the closed unit disk")
        out = np.zeros(w.shape, dtype=complex)
        rim = r >= 1.0 - 1e-14
        if np.any(rim):
            out[rim] = np.exp(TAU * 1j * self.homeo.evaluate(np.angle(w[rim]) / TAU))
        body = ~rim & (r > 0.0)
        if np.any(body):
            x = np.angle(w[body]) / TAU
            y = -np.log(r[body]) / TAU
            out[body] = np.exp(TAU * 1j * self.halfplane_map(x, y))
        return out

    def grid_values(self, grid_side: int, half_width: float = 2.0) -> np.ndarray:
        """Cached disk-map samples on the solver lattice; NaN off the disk."""
        key = (int(grid_side), float(half_width))
        cached = self._grids.get(key)
        if cached is None:
            ax = lattice_axis(*key)
            xx, yy = np.meshgrid(ax, ax)
            ww = xx + 1j * yy
            inside = np.abs(ww) <= 1.0
            cached = np.full(ww.shape, np.nan + 0j)
            cached[inside] = self.evaluate(ww[inside])
            self._grids[key] = cached
        return cached

    def dilatation_grid(self, grid_side: int, half_width: float = 2.0) -> BeltramiField:
        """Cached lattice dilatation of the extension."""
        key = (int(grid_side), float(half_width))
        cached = self._fields.get(key)
        if cached is None:
            cached = dilatation_from_grid(self.grid_values(*key), half_width)
            self._fields[key] = cached
        return cached

    def distortion_at(self, points, rel_step: float = 0.25) -> np.ndarray:
        """Pointwise distortion K from half-plane differences, mesh free.

        The probe step scales with the distance to the boundary (eta =
        rel_step * y in covering coordinates), so the estimate stays
        honest on annuli far finer than any cached lattice.  Points on or
        outside the circle, and the origin, report the conformal value 1.
        """
        if not 0.0 < rel_step < 1.0:
            raise ConfigError("relative probe step must lie in (0, 1)")
        p = np.asarray(points, dtype=complex)
        r = np.abs(p)
        out = np.ones(p.shape, dtype=float)
        sel = (r > 0.0) & (r < 1.0)
        if np.any(sel):
            x = np.angle(p[sel]) / TAU
            y = -np.log(r[sel]) / TAU
            eta = rel_step * y
            dx = (self.halfplane_map(x + eta, y) - self.halfplane_map(x - eta, y)) / (2.0 * eta)
            dy = (self.halfplane_map(x, y + eta) - self.halfplane_map(x, y - eta)) / (2.0 * eta)
            ratio = np.abs(dx + 1j * dy) / np.maximum(np.abs(dx - 1j * dy), 1e-300)
            ratio = np.minimum(ratio, 1.0 - 1e-6)
            out[sel] = (1.0 + ratio) / (1.0 - ratio)
        return out

    def boundary_gap(self, grid_side: int, half_width: float = 2.0, samples: int = 1024, rings: int = 5) -> np.ndarray:
        """Sup gap between f on shrinking lattice circles and the boundary trace.

        Entry k is the gap at radius 1 - (rings - k) * step, so the row
        should decrease as the circle approaches the rim.
        """
        step = 2.0 * half_width / grid_side
        t = np.arange(samples) / samples
        target = np.exp(TAU * 1j * self.homeo.evaluate(t))
        gaps = []
        for back in range(rings, 0, -1):
            circle = (1.0 - back * step) * np.exp(TAU * 1j * t)
            gaps.append(float(np.abs(self.evaluate(circle) - target).max()))
        return np.asarray(gaps)


def beurling_ahlfors_extend(h: CircleHomeomorphism) -> DiskExtension:
    """Extend a strictly increasing circle map to the disk."""
    return DiskExtension(h)


def dilatation_from_grid(values: np.ndarray, half_width: float) -> BeltramiField:
    """Centered-difference dilatation of disk-map samples on the lattice.

    Points whose four-neighbour stencil leaves the disk (the outermost
    ring or two) copy the value of the nearest stencil-complete point
    radially inward; the truncation step downstream regularizes that zone
    anyway.  Readings at |mu| >= 1 clip to 1 - 1e-6 and are counted, as
    are non-positive discrete Jacobians.
    """
    vals = np.asarray(values, dtype=complex)
    if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
        raise ConfigError("need a square lattice of map values")
    side = vals.shape[0]
    ax = lattice_axis(side, half_width)
    step = 2.0 * half_width / side
    if half_width <= 1.0 + 3.0 * step:
        raise ConfigError("lattice too coarse: disk reaches the domain edge")
    xx, yy = np.meshgrid(ax, ax)
    mask = xx**2 + yy**2 <= 1.0
    if not np.all(np.isfinite(vals[mask])):
        raise NumericsError("non-finite map values inside the disk")
    f = np.where(mask, vals, 0.0)

    core = mask.copy()
    for shift, axis in ((1, 0), (-1, 0), (1, 1), (-1, 1)):
        core &= np.roll(mask, shift, axis=axis)
    fx = (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) / (2.0 * step)
    fy = (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2.0 * step)
    d_conj = (fx + 1j * fy) / 2.0
    d_z = (fx - 1j * fy) / 2.0
    if np.any(core & (np.abs(d_z) < 1e-300)):
        raise NumericsError("z-derivative vanished at a lattice point")
    mu = np.zeros_like(f)
    mu[core] = d_conj[core] / d_z[core]
    jacobian = np.abs(d_z) ** 2 - np.abs(d_conj) ** 2
    failures = int(np.count_nonzero(core & (jacobian <= 0.0)))

    ring_j, ring_i = np.nonzero(mask & ~core)
    if len(ring_j):
        px, py = ax[ring_i], ax[ring_j]
        rad = np.hypot(px, py)
        mu_ring = np.zeros(len(ring_j), dtype=complex)
        open_ = np.ones(len(ring_j), dtype=bool)
        for pull in range(1, 9):
            if not np.any(open_):
                break
            scale = (rad[open_] - pull * step) / rad[open_]
            ci = np.clip(np.rint((px[open_] * scale + half_width) / step).astype(int), 0, side - 1)
            cj = np.clip(np.rint((py[open_] * scale + half_width) / step).astype(int), 0, side - 1)
            hit = core[cj, ci]
            spots = np.nonzero(open_)[0][hit]
            mu_ring[spots] = mu[cj[hit], ci[hit]]
            open_[spots] = False
        if np.any(open_):
            raise NumericsError("no interior donor found for a boundary-ring point")
        mu[ring_j, ring_i] = mu_ring

    amp = np.abs(mu)
    over = mask & (amp >= 1.0)
    clipped = int(np.count_nonzero(over))
    if clipped:
        log.warning("clipped %d lattice dilatations at |mu| >= 1", clipped)
        mu[over] *= (1.0 - 1e-6) / amp[over]
    return BeltramiField(
        half_width=half_width,
        mu=mu,
        mask=mask,
        clipped=clipped,
        jacobian_failures=failures,
    )


def dilatation(ext: DiskExtension, z: complex, grid_side: int = 1024, half_width: float = 2.0) -> tuple[complex, float]:
    """Dilatation and distortion at one interior point, lattice differences."""
    fld = ext.dilatation_grid(grid_side, half_width)
    z = complex(z)
    if abs(z) >= 1.0 - fld.step:
        raise ConfigError("point must sit at least one lattice step inside the circle")
    i = int(round((z.real + half_width) / fld.step))
    j = int(round((z.imag + half_width) / fld.step))
    mu = complex(fld.mu[j, i])
    amp = abs(mu)
    return mu, (1.0 + amp) / (1.0 - amp)


def whitney_distortion_bound(measure: ChaosMeasure, level: int, index: int) -> float:
    """Mass-ratio distortion bound over a dyadic interval and its neighbours.

    Sums tau(J) / tau(J') over ordered pairs of the 48 subintervals of
    length |I| / 16 tiling I and its two circular neighbours, which
    factorizes as (sum tau) * (sum 1/tau).  Uniform mass gives 48^2.
    """
    if level != int(level) or index != int(index):
        raise ConfigError("interval must be addressed by integer level and index")
    level, index = int(level), int(index)
    if level < 0 or not 0 <= index < 2**level:
        raise ConfigError(f"index {index} out of range at level {level}")
    m = measure.grid_size
    if 2 ** (level + 4) > m:
        raise ConfigError("subintervals of |I|/16 fall below grid resolution")
    cells = m // 2 ** (level + 4)
    cum = measure.cumulative
    total = cum[-1]
    masses = np.empty(48)
    for sub in range(48):
        a = ((index - 1) * 16 + sub) * cells % m
        b = a + cells
        masses[sub] = cum[b] - cum[a] if b <= m else total - cum[a] + cum[b - m]
    if np.any(masses <= 0.0):
        raise NumericsError("zero-mass subinterval; ratio bound undefined")
    return float(masses.sum() * (1.0 / masses).sum())


def whitney_check(ext: DiskExtension, measure: ChaosMeasure, level: int, index: int, nodes: int = 8) -> dict:
    """Empirical peak distortion over one boundary box against its mass bound.

    The box over I = [index, index + 1) * 2^-level is the polar rectangle
    with angles in I and radii in [1 - |I|, 1 - |I|/2], sitting at
    distance comparable to |I| from the rim.
    """
    size = 2.0**-level
    angles = np.linspace(index * size, (index + 1) * size, nodes)
    radii = np.linspace(1.0 - size, 1.0 - size / 2.0, nodes)
    box = radii[:, None] * np.exp(TAU * 1j * angles[None, :])
    peak = float(ext.distortion_at(box).max())
    bound = whitney_distortion_bound(measure, level, index)
    return {
        "level": level,
        "index": index,
        "max_distortion": peak,
        "bound": bound,
        "ratio": peak / bound,
    }
