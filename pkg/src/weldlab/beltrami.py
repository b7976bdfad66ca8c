"""Global solve of the compactly supported dilatation equation.

The plane is modelled as the periodic square [-S, S)^2 so both singular
integrals become frequency multipliers: the derivative-swapping transform
is conj(k)/k and the anti-derivative is 2S/(i pi k), each vanishing at
the zero frequency.  Periodization alone would misplace the mean of the
right-hand side as a linear ramp, so the mean is split off analytically:
the disk indicator's anti-derivative is known in closed form (conj(z)
inside the disk, 1/z outside), and only the mean-free remainder goes
through the lattice transform.

The map is assembled as F = z + C(phi) from the fixed point of
phi -> mu * S(phi) + mu, which contracts in the lattice L2 norm at rate
about sup |mu|; truncation keeps that rate away from 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonConvergenceError
from .extension import BeltramiField, interpolate_grid, lattice_axis

__all__ = [
    "PlanarMap",
    "SolverConfig",
    "beurling_transform",
    "cauchy_transform",
    "conformality_residual",
    "solve",
    "to_principal",
    "truncate",
]


@dataclass(frozen=True)
class SolverConfig:
    """Lattice, truncation, and stopping parameters for one solve."""

    grid_side: int = 1024
    half_width: float = 2.0
    eps: float = 0.05
    tol: float = 1e-8
    max_iter: int = 800

    def __post_init__(self):
        if self.grid_side < 16 or self.grid_side & (self.grid_side - 1):
            raise ConfigError("grid side must be a power of two >= 16")
        if self.half_width <= 1.0:
            raise ConfigError("domain half-width must exceed the disk radius 1")
        if not 0.0 < self.eps < 1.0:
            raise ConfigError(f"truncation must lie in (0, 1), got {self.eps}")
        if self.tol <= 0.0 or self.max_iter < 1:
            raise ConfigError("tolerance must be positive and iterations >= 1")


@dataclass
class PlanarMap:
    """Lattice samples of a normalized global map F = z + O(1/z).

    values[j, i] is F at lattice_axis[i] + 1j * lattice_axis[j]; the
    Jacobian count covers non-edge lattice points (centered differences
    do not reach across the periodic seam, where the closed-form tail
    term is not periodic).
    """

    half_width: float
    values: np.ndarray = field(repr=False)
    residual: float = 0.0
    history: list = field(default_factory=list, repr=False)
    normalization: str = "principal"
    jacobian_failures: int = 0

    @property
    def grid_side(self) -> int:
        return self.values.shape[0]

    @property
    def step(self) -> float:
        return 2.0 * self.half_width / self.grid_side

    def interpolate(self, points) -> np.ndarray:
        """Bilinear map values at off-lattice complex points."""
        return interpolate_grid(self.values, points, self.half_width)

    def boundary_decay(self) -> tuple[float, float]:
        """(edge max, interior max) of |F(z) - z|; principal maps decay."""
        gap = np.abs(self.values - _lattice_points(self.grid_side, self.half_width))
        edge = float(max(gap[0].max(), gap[-1].max(), gap[:, 0].max(), gap[:, -1].max()))
        return edge, float(gap.max())


def _lattice_points(side: int, half_width: float) -> np.ndarray:
    ax = lattice_axis(side, half_width)
    xx, yy = np.meshgrid(ax, ax)
    return xx + 1j * yy


_DISK_CACHE: dict = {}


def _disk_data(side: int, half_width: float):
    """Disk indicator, its closed-form anti-derivative, and its transform."""
    key = (side, float(half_width))
    got = _DISK_CACHE.get(key)
    if got is None:
        zz = _lattice_points(side, half_width)
        r = np.abs(zz)
        chi = (r <= 1.0).astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.where(r > 1.0, 1.0 / np.where(r > 1.0, zz, 1.0), np.conj(zz))
        got = (chi, tail, beurling_transform(chi))
        _DISK_CACHE[key] = got
    return got


def _wavenumbers(side: int) -> np.ndarray:
    k = np.fft.fftfreq(side, d=1.0) * side
    return k[None, :] + 1j * k[:, None]


def _require_square(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
        raise ConfigError("transforms expect a square lattice")
    return grid


def beurling_transform(grid: np.ndarray) -> np.ndarray:
    """Derivative-swapping multiplier conj(k)/k; zero frequency annihilated."""
    grid = _require_square(grid)
    kappa = _wavenumbers(grid.shape[0])
    with np.errstate(invalid="ignore"):
        mult = np.conj(kappa) / kappa
    mult[0, 0] = 0.0
    return np.fft.ifft2(np.fft.fft2(grid) * mult)


def cauchy_transform(grid: np.ndarray, half_width: float = 2.0) -> np.ndarray:
    """Anti-derivative C with dbar(C phi) = phi and decay away from support.

    The lattice multiplier handles the mean-free part; the mean rides on
    the disk indicator, whose anti-derivative is closed form.  This keeps
    C honest at the domain scale instead of wrapping the mean into a ramp.
    """
    grid = _require_square(grid)
    side = grid.shape[0]
    kappa = _wavenumbers(side)
    with np.errstate(divide="ignore", invalid="ignore"):
        mult = 2.0 * half_width / (1j * np.pi * kappa)
    mult[0, 0] = 0.0
    chi, tail, _ = _disk_data(side, half_width)
    c = grid.mean() / chi.mean()
    per = np.fft.ifft2(np.fft.fft2(grid - c * chi) * mult)
    return per + c * tail


def truncate(fld: BeltramiField, eps: float) -> BeltramiField:
    """Scale the dilatation to (1 - eps) mu, bounding distortion by (2-eps)/eps."""
    if not 0.0 < eps < 1.0:
        raise ConfigError(f"truncation must lie in (0, 1), got {eps}")
    return BeltramiField(
        half_width=fld.half_width,
        mu=(1.0 - eps) * fld.mu,
        mask=fld.mask,
        clipped=fld.clipped,
        jacobian_failures=fld.jacobian_failures,
    )


def _rms(grid: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(grid) ** 2)))


def solve(mu: BeltramiField, cfg: SolverConfig) -> PlanarMap:
    """Iterate the dilatation relation to its fixed point and integrate.

    Stops when successive iterates differ by at most cfg.tol times the
    dilatation norm; the recorded residual is the defect of the returned
    fixed point under one more application of the iteration map.
    """
    if mu.grid_side != cfg.grid_side or mu.half_width != cfg.half_width:
        raise ConfigError("dilatation lattice does not match solver config")
    if mu.sup_abs > 1.0 - cfg.eps + 1e-12:
        raise ConfigError("dilatation exceeds the truncation bound 1 - eps")
    side = cfg.grid_side
    zz = _lattice_points(side, cfg.half_width)
    m = mu.mu
    scale = _rms(m)
    if scale == 0.0:
        return PlanarMap(half_width=cfg.half_width, values=zz.copy(), residual=0.0, history=[])

    chi, tail, s_chi = _disk_data(side, cfg.half_width)
    chi_mean = chi.mean()

    def iterate(phi):
        drift = phi.mean() / chi_mean
        return m * (beurling_transform(phi) - drift * s_chi) + m

    phi = m.copy()
    history: list[float] = []
    for _ in range(cfg.max_iter):
        nxt = iterate(phi)
        diff = _rms(nxt - phi)
        history.append(diff)
        phi = nxt
        if diff <= cfg.tol * scale:
            break
    else:
        raise NonConvergenceError(
            f"no fixed point within {cfg.max_iter} iterations (last diff {history[-1]:.3e})",
            history,
        )
    residual = _rms(iterate(phi) - phi)

    values = zz + cauchy_transform(phi, cfg.half_width)
    fmap = PlanarMap(
        half_width=cfg.half_width,
        values=values,
        residual=residual,
        history=history,
    )
    fmap.jacobian_failures = _count_bad_jacobians(values, fmap.step)
    return fmap


def _count_bad_jacobians(values: np.ndarray, step: float) -> int:
    dx = (values[1:-1, 2:] - values[1:-1, :-2]) / (2.0 * step)
    dy = (values[2:, 1:-1] - values[:-2, 1:-1]) / (2.0 * step)
    jac = (np.conj(dx) * dy).imag
    return int(np.count_nonzero(jac <= 0.0))


def conformality_residual(fmap: PlanarMap, inner: float = 1.1, outer: float | None = None) -> float:
    """Median |dbar F| / |dF| over the exterior test band by differences.

    The band keeps clear of the dilatation's rim (inside `inner`) and of
    the periodic seam (outside `outer`, default 0.9 S).
    """
    s = fmap.half_width
    if outer is None:
        outer = 0.9 * s
    if not 1.05 <= inner < outer < s:
        raise ConfigError("test band must sit between the rim and the domain edge")
    v = fmap.values
    step = fmap.step
    dx = (v[1:-1, 2:] - v[1:-1, :-2]) / (2.0 * step)
    dy = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2.0 * step)
    d_conj = (dx + 1j * dy) / 2.0
    d_z = (dx - 1j * dy) / 2.0
    r = np.abs(_lattice_points(fmap.grid_side, s)[1:-1, 1:-1])
    band = (r >= inner) & (r <= outer)
    denom = np.abs(d_z[band])
    keep = denom > 1e-300
    if not np.any(keep):
        raise ConfigError("empty exterior test band")
    return float(np.median(np.abs(d_conj[band])[keep] / denom[keep]))


def to_principal(fmap: PlanarMap, ring: float = 0.85) -> PlanarMap:
    """Refit the affine tail a z + b on the outer ring and normalize it away.

    The fit is linear in F, so any affine perturbation a F + b renormalizes
    to the same map; that pins the output convention exactly.
    """
    if not 0.5 < ring < 1.0:
        raise ConfigError("ring fraction must lie in (0.5, 1)")
    zz = _lattice_points(fmap.grid_side, fmap.half_width)
    sel = np.abs(zz) >= ring * fmap.half_width
    z_ring = zz[sel]
    f_ring = fmap.values[sel]
    zc = z_ring - z_ring.mean()
    a = np.sum(np.conj(zc) * f_ring) / np.sum(np.abs(zc) ** 2)
    if abs(a) < 1e-12:
        raise ConfigError("degenerate affine tail; cannot normalize")
    b = f_ring.mean() - a * z_ring.mean()
    return PlanarMap(
        half_width=fmap.half_width,
        values=(fmap.values - b) / a,
        residual=fmap.residual,
        history=list(fmap.history),
        normalization="principal",
        jacobian_failures=fmap.jacobian_failures,
    )
