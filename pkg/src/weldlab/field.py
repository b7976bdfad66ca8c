"""Log-correlated Gaussian fields on the unit circle.

A trace field is the truncated random Fourier series

    X(t) = sum_{k=1..n} k^(-1/2) * (A_k cos(2 pi k t) + B_k sin(2 pi k t))

with A_k, B_k independent standard normals.  As n grows the covariance
approaches -log(2 |sin(pi (t - t'))|) and the pointwise variance equals the
n-th harmonic number.  There is no constant mode, so every sample averages
to zero over the circle.

Octave bands regroup the same coefficients by frequency magnitude: band 0
holds frequency 1, band j >= 1 holds frequencies in (2^(j-1), 2^j].  Bands
are independent of each other and sum back to the parent field exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "FieldTrace",
    "BandField",
    "sample_trace",
    "band_decompose",
    "covariance_exact",
    "truncated_covariance",
    "harmonic_number",
]


def harmonic_number(n: int) -> float:
    """Sum of 1/k for k = 1..n; 0 for n = 0."""
    if n <= 0:
        return 0.0
    return float(np.sum(1.0 / np.arange(1, n + 1)))


def covariance_exact(lag: float) -> float:
    """Limiting covariance -log(2 sin(pi lag)) for a lag in (0, 1).

    Vanishes at lag 1/6 and 5/6, equals -log 2 at lag 1/2, and diverges
    logarithmically at coincident points, which are rejected.
    """
    lag = float(lag)
    if not 0.0 < lag < 1.0:
        raise ConfigError(f"lag must lie strictly inside (0, 1), got {lag}")
    return -float(np.log(2.0 * np.sin(np.pi * lag)))


def truncated_covariance(lag: float, modes: int) -> float:
    """Covariance of the cutoff field: sum_{k<=n} cos(2 pi k lag)/k."""
    if modes < 0:
        raise ConfigError("modes must be nonnegative")
    if modes == 0:
        return 0.0
    k = np.arange(1, modes + 1)
    return float(np.sum(np.cos(2.0 * np.pi * k * lag) / k))


def _require_power_of_two(m: int, what: str) -> None:
    if m < 1 or (m & (m - 1)) != 0:
        raise ConfigError(f"{what} must be a power of two, got {m}")


def _synthesize(cos_coeffs: np.ndarray, sin_coeffs: np.ndarray, grid_size: int) -> np.ndarray:
    """Evaluate the trig sum on the uniform grid t_i = i/M via one inverse FFT."""
    spectrum = np.zeros(grid_size, dtype=complex)
    n = len(cos_coeffs)
    spectrum[1 : n + 1] = cos_coeffs - 1j * sin_coeffs
    return np.fft.ifft(spectrum).real * grid_size


@dataclass(frozen=True)
class FieldTrace:
    """One realization of the truncated series on a uniform circle grid.

    Coefficient arrays hold the scaled values k^(-1/2) A_k and k^(-1/2) B_k,
    so entry k - 1 has variance 1/k.
    """

    modes: int
    grid_size: int
    seed: int
    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray
    values: np.ndarray = field(repr=False)

    @property
    def variance(self) -> float:
        """Pointwise variance, identical at every t: the harmonic number."""
        return harmonic_number(self.modes)

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.grid_size) / self.grid_size

    def eval_at(self, t) -> np.ndarray:
        """Exact trig-sum evaluation at arbitrary circle parameters."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.modes == 0:
            return np.zeros_like(t)
        k = np.arange(1, self.modes + 1)
        phases = 2.0 * np.pi * t[:, None] * k[None, :]
        return np.cos(phases) @ self.cos_coeffs + np.sin(phases) @ self.sin_coeffs

    def lag_covariance_integral(self, lag: float) -> float:
        """Realized circle average of X(t) X(t + lag), exact by orthogonality.

        Averaging over position leaves sum_k (c_k^2 + s_k^2)/2 * cos(2 pi k lag),
        an unbiased single-sample covariance estimate with far less noise than
        a two-point product.
        """
        if self.modes == 0:
            return 0.0
        k = np.arange(1, self.modes + 1)
        power = (self.cos_coeffs**2 + self.sin_coeffs**2) / 2.0
        return float(power @ np.cos(2.0 * np.pi * k * lag))


@dataclass(frozen=True)
class BandField:
    """Octave sub-sum of a parent trace, sharing its coefficients.

    Holds frequencies in (freq_lo, freq_hi]; band 0 is frequency 1 alone.
    """

    band_index: int
    freq_lo: int
    freq_hi: int
    grid_size: int
    seed: int
    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray
    values: np.ndarray = field(repr=False)


def sample_trace(modes: int, grid_size: int, seed: int) -> FieldTrace:
    """Draw one field realization.

    The grid must be a power of two with at least two points per highest
    mode; violating either raises before any randomness is consumed.
    """
    if modes < 0:
        raise ConfigError("modes must be nonnegative")
    _require_power_of_two(grid_size, "grid_size")
    if grid_size < 2 * modes:
        raise ConfigError(
            f"grid_size {grid_size} under-resolves {modes} modes; need at least {2 * modes}"
        )
    rng = np.random.default_rng(seed)
    # interleaved draws keep coefficients k <= m identical across runs with
    # different cutoffs, so one seed couples a whole refinement family
    raw = rng.standard_normal(2 * modes)
    scale = 1.0 / np.sqrt(np.arange(1, modes + 1)) if modes else np.empty(0)
    cos_coeffs = raw[0::2] * scale
    sin_coeffs = raw[1::2] * scale
    values = _synthesize(cos_coeffs, sin_coeffs, grid_size)
    return FieldTrace(
        modes=modes,
        grid_size=grid_size,
        seed=seed,
        cos_coeffs=cos_coeffs,
        sin_coeffs=sin_coeffs,
        values=values,
    )


def band_count(modes: int) -> int:
    """Number of octave bands covering frequencies 1..modes."""
    if modes < 1:
        return 0
    return int(np.ceil(np.log2(modes))) + 1


def band_decompose(trace: FieldTrace) -> list[BandField]:
    """Split a trace into independent octave bands that sum to it exactly."""
    if trace.modes < 1:
        raise ConfigError("band decomposition needs at least one mode")
    k = np.arange(1, trace.modes + 1)
    # ceil(log2 k) buckets: k = 1 -> 0, (2^(j-1), 2^j] -> j
    idx = np.ceil(np.log2(k)).astype(int)
    bands = []
    for j in range(band_count(trace.modes)):
        mask = idx == j
        cos_j = np.where(mask, trace.cos_coeffs, 0.0)
        sin_j = np.where(mask, trace.sin_coeffs, 0.0)
        freqs = k[mask]
        bands.append(
            BandField(
                band_index=j,
                freq_lo=int(freqs[0]) - 1,
                freq_hi=int(freqs[-1]),
                grid_size=trace.grid_size,
                seed=trace.seed,
                cos_coeffs=cos_j,
                sin_coeffs=sin_j,
                values=_synthesize(cos_j, sin_j, trace.grid_size),
            )
        )
    return bands
