"""End-to-end pipeline tests against closed-form welds.

The identity and rotation pipelines have exactly known outputs (the unit
circle), and the radial stretch gives a synthetic interior/exterior pair
whose welding identity holds in closed form, so the verifier can be
exercised without trusting the solver it normally sits behind.
"""

import numpy as np
import pytest

from weldlab.beltrami import PlanarMap, SolverConfig
from weldlab.chaos import ChaosParams, build_measure
from weldlab.extension import BeltramiField
from weldlab.errors import ConfigError, NumericsError
from weldlab.field import sample_trace
from weldlab.homeo import CircleHomeomorphism, build_homeo
from weldlab.welding import (
    WeldingResult,
    curve_holder_exponent,
    epsilon_convergence,
    hausdorff_distance,
    invert_extension,
    renormalization_gap,
    verify_welding,
    weld,
)

TAU = 2.0 * np.pi


def chaos_homeo(beta: float, seed: int) -> CircleHomeomorphism:
    trace = sample_trace(4096, 8192, seed)
    return build_homeo(build_measure(trace, ChaosParams(beta=beta, modes=4096)))


@pytest.fixture(scope="module")
def identity_result():
    return weld(CircleHomeomorphism.identity(1024), SolverConfig(grid_side=512, eps=0.05))


@pytest.fixture(scope="module")
def chaos_result():
    cfg = SolverConfig(grid_side=1024, eps=0.05)
    return weld(chaos_homeo(0.7, 3), cfg, info={"seed": 3})


def test_identity_weld_is_unit_circle(identity_result):
    t = identity_result.params[:-1]
    circle = np.exp(TAU * 1j * t)
    assert hausdorff_distance(identity_result.curve, circle) < 1e-10
    assert identity_result.curve[0] == identity_result.curve[-1]
    assert not identity_result.flagged


def test_identity_weld_diagnostics(identity_result):
    # the lattice dilatation of the identity is zero only up to rounding,
    # so the solver may take one cleanup sweep
    d = identity_result.diagnostics
    assert d["iterations"] <= 1
    assert d["solver_residual"] < 1e-12
    assert d["jacobian_failures"] == 0
    assert d["clipped"] == 0
    assert d["simple"]


def test_identity_weld_verifies(identity_result):
    assert verify_welding(identity_result) < 1e-3


def test_identity_curve_exponent_is_one(identity_result):
    assert curve_holder_exponent(identity_result) == pytest.approx(1.0, abs=0.02)


def test_renormalization_absorbs_affine_detour(identity_result):
    gap = renormalization_gap(identity_result, scale=1.3 - 0.4j, shift=0.2 + 0.7j)
    assert gap < 1e-6
    with pytest.raises(ConfigError):
        renormalization_gap(identity_result, scale=0.0, shift=0.0)


def test_rotation_welds_to_circle():
    h = CircleHomeomorphism.identity(1024).rotated(0.3)
    result = weld(h, SolverConfig(grid_side=512, eps=0.05))
    circle = np.exp(TAU * 1j * result.params[:-1])
    assert hausdorff_distance(result.curve, circle) < 1e-9
    # F is the identity here, so the interior piece is the inverse
    # rotation: a closed form for the Newton inversion path.
    probes = 0.5 * np.exp(TAU * 1j * np.array([0.1, 0.45, 0.8]))
    expected = probes * np.exp(-TAU * 1j * 0.3)
    assert np.abs(result.f_plus(probes) - expected).max() < 1e-6


def test_exterior_restriction(identity_result):
    w = np.array([1.5, 1.2 - 0.7j, -1.1j])
    assert np.abs(identity_result.f_minus(w) - w).max() < 1e-9
    with pytest.raises(ConfigError):
        identity_result.f_minus(np.array([0.5 + 0.1j]))


class _StretchMap:
    """Duck-typed stand-in for an extension: z|z| with its exact dilatation."""

    def evaluate(self, z):
        z = np.asarray(z, dtype=complex)
        return z * np.abs(z)

    def grid_values(self, grid_side, half_width):
        z = _lattice(grid_side, half_width)
        vals = z * np.abs(z)
        vals[np.abs(z) > 1.0] = np.nan
        return vals

    def dilatation_grid(self, grid_side, half_width):
        z = _lattice(grid_side, half_width)
        inside = np.abs(z) <= 1.0
        with np.errstate(invalid="ignore", divide="ignore"):
            mu = np.where(inside, z / (3.0 * np.conj(z)), 0.0)
        mu[~np.isfinite(mu)] = 0.0
        return BeltramiField(half_width=half_width, mu=mu, mask=inside)


def _lattice(grid_side: int, half_width: float) -> np.ndarray:
    ax = -half_width + (2.0 * half_width / grid_side) * np.arange(grid_side)
    xx, yy = np.meshgrid(ax, ax)
    return xx + 1j * yy


def test_verifier_on_closed_form_pair():
    # The verifier compares F against the truncated coefficient, here
    # 0.95 * (1/3) z/conj(z) for eps = 0.05, whose exact solution is the
    # radial stretch z|z|^(38/41); any measured defect is stencil error.
    z = _lattice(1024, 2.0)
    r = np.abs(z)
    with np.errstate(invalid="ignore"):
        stretched = z * r ** (38.0 / 41.0)
    fmap = PlanarMap(half_width=2.0, values=np.where(r <= 1.0, stretched, z))
    t = np.arange(64) / 64.0
    curve = fmap.interpolate(np.exp(TAU * 1j * t))
    curve = np.concatenate([curve, curve[:1]])
    result = WeldingResult(
        params=np.concatenate([t, [1.0]]),
        curve=curve,
        fmap=fmap,
        extension=_StretchMap(),
        diagnostics={},
        metadata={"eps": 0.05},
    )
    assert verify_welding(result) < 1e-3


def test_chaos_weld_accepted(chaos_result):
    d = chaos_result.diagnostics
    assert not chaos_result.flagged
    assert d["jacobian_failures"] == 0
    assert d["conformality"] < 1e-2
    assert d["clip_fraction"] < 1e-3
    assert d["simple"]
    assert chaos_result.metadata["seed"] == 3
    assert chaos_result.metadata["grid_side"] == 1024


def test_chaos_weld_verifies(chaos_result):
    assert verify_welding(chaos_result) < 1e-2


def test_chaos_curve_is_closed_and_parameterized(chaos_result):
    assert len(chaos_result.curve) == len(chaos_result.params)
    assert chaos_result.curve[0] == chaos_result.curve[-1]
    assert chaos_result.params[0] == 0.0 and chaos_result.params[-1] == 1.0


def test_extension_inversion_roundtrip(chaos_result):
    ext = chaos_result.extension
    rr = np.array([0.2, 0.5, 0.75])
    tt = np.arange(8) / 8.0
    z0 = (rr[:, None] * np.exp(TAU * 1j * tt[None, :])).ravel()
    w = ext.evaluate(z0)
    z1 = invert_extension(ext, w, 1024, 2.0)
    assert np.abs(ext.evaluate(z1) - w).max() < 1e-9


def test_weld_is_deterministic():
    h = chaos_homeo(0.7, 3)
    cfg = SolverConfig(grid_side=256, eps=0.1)
    a = weld(h, cfg)
    b = weld(h, cfg)
    assert np.array_equal(a.curve, b.curve)
    assert a.diagnostics == b.diagnostics
    assert a.flags == b.flags


def test_epsilon_schedule_on_identity():
    h = CircleHomeomorphism.identity(512)
    gaps = epsilon_convergence(h, [0.2, 0.1], SolverConfig(grid_side=256), samples=512)
    assert len(gaps) == 1
    assert gaps[0] < 1e-10


def test_epsilon_schedule_validation():
    h = CircleHomeomorphism.identity(512)
    cfg = SolverConfig(grid_side=256)
    with pytest.raises(ConfigError):
        epsilon_convergence(h, [0.1], cfg)
    with pytest.raises(ConfigError):
        epsilon_convergence(h, [0.1, 0.2], cfg)


def test_weld_argument_validation():
    with pytest.raises(ConfigError):
        weld(CircleHomeomorphism.identity(512), SolverConfig(grid_side=256), samples=8)


def test_verify_rejects_flagged_and_bad_annuli(identity_result):
    marked = WeldingResult(
        params=identity_result.params,
        curve=identity_result.curve,
        fmap=identity_result.fmap,
        extension=identity_result.extension,
        diagnostics=dict(identity_result.diagnostics),
        flags=["jacobian"],
    )
    with pytest.raises(ConfigError):
        verify_welding(marked)
    with pytest.raises(ConfigError):
        verify_welding(identity_result, inner=0.9, outer=0.4)
    with pytest.raises(ConfigError):
        verify_welding(identity_result, inner=0.2, outer=1.1)


def test_curve_exponent_validation(identity_result):
    with pytest.raises(ConfigError):
        curve_holder_exponent(identity_result, depth=3)
    clipped = WeldingResult(
        params=identity_result.params[:100],
        curve=identity_result.curve[:100],
        fmap=identity_result.fmap,
        extension=identity_result.extension,
        diagnostics={},
    )
    with pytest.raises(ConfigError):
        curve_holder_exponent(clipped)
