"""Command line harness for the welding pipeline and its studies.

Subcommands: weld, gmc, stats, tail, lehto, selftest.  Every run writes
a JSON manifest holding the schema version, the fully resolved
configuration, and the result summary; feeding that manifest back via
--config reproduces the run byte for byte.  Config files are flat
key=value lines (manifests are accepted too); explicit flags win over
file values.  Exit codes: 0 ok, 1 error, 2 flagged quality.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .beltrami import BeltramiField, SolverConfig, solve
from .chaos import ChaosParams, build_measure, largest_cell_share, moment_scaling
from .errors import ConfigError, NumericsError
from .exports import write_csv, write_json, write_svg_polyline
from .field import covariance_exact, harmonic_number, sample_trace
from .homeo import build_homeo, holder_exponent
from .lehto import (
    Annulus,
    annulus_decomposition,
    disk_distortion,
    lehto_integral,
    lk_statistics,
    octave_values,
    tail_probability,
    wilson_interval,
)
from .welding import curve_holder_exponent, hausdorff_distance, weld

__all__ = ["main", "read_config"]

SCHEMA_VERSION = 1
SEED_ENV = "WELDLAB_SEED"
TAU = 2.0 * math.pi


class _Parser(argparse.ArgumentParser):
    """Usage problems surface as ConfigError so main can exit 1."""

    def error(self, message):
        raise ConfigError(message)


def read_config(path) -> dict:
    """Flat key=value config; a JSON manifest yields its config block."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        payload = json.loads(text)
        config = payload.get("config", payload)
        if not isinstance(config, dict):
            raise ConfigError(f"manifest {path} has no config table")
        return config
    out = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _config_tokens(config: dict) -> list[str]:
    """Rewrite a config table as argv tokens so argparse retypes them."""
    tokens = []
    for key, value in config.items():
        flag = "--" + str(key).replace("_", "-")
        if isinstance(value, bool) or str(value).lower() in ("true", "false"):
            if value is True or str(value).lower() == "true":
                tokens.append(flag)
            continue
        tokens.extend([flag, str(value)])
    return tokens


def _resolve_seed(args) -> tuple[int, bool]:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return int(args.seed), False
    try:
        return int(raw), True
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(command: str, config: dict, results: dict, outputs: list[str], seed_from_env: bool) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "seed_from_env": seed_from_env,
        "results": results,
        "outputs": outputs,
    }


def _pipeline_homeo(beta: float, modes: int, field_grid: int, seed: int, exploratory: bool):
    params = ChaosParams(beta=beta, modes=modes, exploratory=exploratory)
    trace = sample_trace(modes, field_grid, seed)
    return build_homeo(build_measure(trace, params))


def cmd_weld(args) -> int:
    seed, from_env = _resolve_seed(args)
    out = _outdir(args)
    homeo = _pipeline_homeo(args.beta, args.modes, args.field_grid, seed, args.exploratory)
    cfg = SolverConfig(grid_side=args.grid, eps=args.eps, tol=args.tol)
    result = weld(homeo, cfg, samples=args.curve_samples, info={"seed": seed})
    config = {
        "beta": args.beta,
        "modes": args.modes,
        "field_grid": args.field_grid,
        "seed": seed,
        "exploratory": args.exploratory,
        "grid": args.grid,
        "eps": args.eps,
        "tol": args.tol,
        "curve_samples": args.curve_samples,
        "out": str(out),
    }
    curve_csv = out / "weld_curve.csv"
    curve_svg = out / "weld_curve.svg"
    write_csv(
        curve_csv,
        ["index", "param", "re", "im"],
        [(i, t, z.real, z.imag) for i, (t, z) in enumerate(zip(result.params, result.curve))],
    )
    write_svg_polyline(curve_svg, result.curve)
    results = {"diagnostics": result.diagnostics, "flags": result.flags}
    manifest = _manifest("weld", config, results, [curve_csv.name, curve_svg.name], from_env)
    write_json(out / "weld_manifest.json", manifest)
    return 2 if result.flags else 0


def cmd_gmc(args) -> int:
    seed, from_env = _resolve_seed(args)
    out = _outdir(args)
    params = ChaosParams(beta=args.beta, modes=args.modes, exploratory=args.exploratory)
    trace = sample_trace(args.modes, args.field_grid, seed)
    measure = build_measure(trace, params)
    config = {
        "beta": args.beta,
        "modes": args.modes,
        "field_grid": args.field_grid,
        "seed": seed,
        "exploratory": args.exploratory,
        "out": str(out),
    }
    mass_csv = out / "gmc_mass.csv"
    grid = np.arange(args.field_grid) / args.field_grid
    cumulative = measure.cumulative
    write_csv(
        mass_csv,
        ["cell", "t", "mass", "cumulative"],
        [(i, t, m, c) for i, (t, m, c) in enumerate(zip(grid, measure.cell_masses, cumulative[1:]))],
    )
    results = {
        "total_mass": measure.total_mass,
        "largest_cell_share": largest_cell_share(measure),
        "field_variance": harmonic_number(args.modes),
    }
    manifest = _manifest("gmc", config, results, [mass_csv.name], from_env)
    write_json(out / "gmc_manifest.json", manifest)
    return 0


def cmd_stats(args) -> int:
    seed, from_env = _resolve_seed(args)
    out = _outdir(args)
    lags = [float(v) for v in args.lags.split(",") if v.strip()]
    if not lags:
        raise ConfigError("need at least one covariance lag")
    params = ChaosParams(beta=args.beta, modes=args.modes, exploratory=args.exploratory)
    if args.q >= params.moment_bound:
        raise ConfigError(
            f"moment order q={args.q} has no finite target for beta={args.beta}: "
            f"interval moments exist only for q < 2/beta^2 = {params.moment_bound:.4g}"
        )

    per_lag = np.empty((args.samples, len(lags)))
    for i in range(args.samples):
        trace = sample_trace(args.modes, args.field_grid, seed + i)
        per_lag[i] = [trace.lag_covariance_integral(lag) for lag in lags]
    means = per_lag.mean(axis=0)
    halfwidth = 1.96 * per_lag.std(axis=0, ddof=1) / math.sqrt(args.samples)

    sizes = [2.0**-e for e in range(4, 11)]
    fit = moment_scaling(params, args.q, sizes, args.moment_samples, grid_size=args.field_grid, base_seed=seed)

    config = {
        "beta": args.beta,
        "modes": args.modes,
        "field_grid": args.field_grid,
        "seed": seed,
        "exploratory": args.exploratory,
        "samples": args.samples,
        "moment_samples": args.moment_samples,
        "q": args.q,
        "lags": args.lags,
        "out": str(out),
    }
    cov_csv = out / "stats_covariance.csv"
    write_csv(
        cov_csv,
        ["lag", "exact", "mean", "ci_lo", "ci_hi"],
        [
            (lag, covariance_exact(lag), m, m - h, m + h)
            for lag, m, h in zip(lags, means, halfwidth)
        ],
    )
    mom_csv = out / "stats_moments.csv"
    lognormal = args.q - params.beta**2 * args.q * (args.q - 1.0) / 2.0
    write_csv(
        mom_csv,
        ["q", "slope", "stderr", "lognormal_prediction"],
        [(args.q, fit.slope, fit.stderr, lognormal)],
    )
    results = {
        "covariance": {str(lag): m for lag, m in zip(lags, means)},
        "moment_slope": fit.slope,
        "moment_stderr": fit.stderr,
        "lognormal_prediction": lognormal,
    }
    manifest = _manifest("stats", config, results, [cov_csv.name, mom_csv.name], from_env)
    write_json(out / "stats_manifest.json", manifest)
    return 0


def cmd_tail(args) -> int:
    seed, from_env = _resolve_seed(args)
    out = _outdir(args)
    if args.delta is None:
        raise ConfigError("--delta is required")
    depths = [int(v) for v in args.depths.split(",") if v.strip()]
    k_range = [int(v) for v in args.k_range.split(",") if v.strip()]
    if not depths or not k_range:
        raise ConfigError("need nonempty depth and piece lists")
    octaves = args.p * max(max(depths), max(k_range))
    pieces = octave_values(
        args.beta,
        octaves,
        args.samples,
        base_seed=seed,
        n_rho=args.n_rho,
        n_theta=args.n_theta,
        modes=args.modes,
        grid_size=args.field_grid,
        workers=args.workers,
    )
    tail = tail_probability(args.beta, args.p, args.delta, depths, args.samples, pieces=pieces)
    stats = lk_statistics(args.beta, args.p, k_range, args.samples, pieces=pieces)

    config = {
        "beta": args.beta,
        "p": args.p,
        "delta": args.delta,
        "depths": args.depths,
        "k_range": args.k_range,
        "samples": args.samples,
        "seed": seed,
        "modes": args.modes,
        "field_grid": args.field_grid,
        "n_rho": args.n_rho,
        "n_theta": args.n_theta,
        "workers": args.workers,
        "out": str(out),
    }
    tail_csv = out / "tail_probabilities.csv"
    write_csv(
        tail_csv,
        ["depth", "hits", "samples", "p_hat", "wilson_lo", "wilson_hi"],
        [(pt.depth, pt.hits, pt.samples, pt.p_hat, pt.lo, pt.hi) for pt in tail.points],
    )
    results = {
        "decay_exponent": tail.decay_exponent,
        "slope": tail.slope,
        "from_bound": tail.from_bound,
        "cdf_exponents": {str(k): e for k, e in zip(stats.k_range, stats.cdf_exponents)},
        "correlation": stats.correlation,
        "widened": stats.widened,
    }
    manifest = _manifest("tail", config, results, [tail_csv.name], from_env)
    write_json(out / "tail_manifest.json", manifest)
    return 0


def cmd_lehto(args) -> int:
    seed, from_env = _resolve_seed(args)
    out = _outdir(args)
    from .extension import beurling_ahlfors_extend

    homeo = _pipeline_homeo(args.beta, args.modes, args.field_grid, seed, args.exploratory)
    accessor = disk_distortion(beurling_ahlfors_extend(homeo), rel_step=args.rel_step)
    center = complex(np.exp(1j * TAU * args.center_turn))
    ann = Annulus(center, args.inner, args.outer)
    estimate = lehto_integral(accessor, ann, args.n_rho, args.n_theta)
    pieces = annulus_decomposition(accessor, center, args.p, args.depth, n_rho=args.n_rho, n_theta=args.n_theta)

    config = {
        "beta": args.beta,
        "modes": args.modes,
        "field_grid": args.field_grid,
        "seed": seed,
        "exploratory": args.exploratory,
        "center_turn": args.center_turn,
        "inner": args.inner,
        "outer": args.outer,
        "n_rho": args.n_rho,
        "n_theta": args.n_theta,
        "p": args.p,
        "depth": args.depth,
        "rel_step": args.rel_step,
        "out": str(out),
    }
    rho = 2.0**-args.p
    pieces_csv = out / "lehto_pieces.csv"
    write_csv(
        pieces_csv,
        ["k", "inner", "outer", "value"],
        [(k + 1, rho ** (k + 1), 2.0 * rho ** (k + 1), v) for k, v in enumerate(pieces)],
    )
    results = {
        "value": estimate.value,
        "error_proxy": estimate.error_proxy,
        "dropped": estimate.dropped,
        "valid": estimate.valid,
        "pieces_sum": float(sum(pieces)),
    }
    manifest = _manifest("lehto", config, results, [pieces_csv.name], from_env)
    write_json(out / "lehto_manifest.json", manifest)
    return 0 if estimate.valid else 2


def _selftest_checks():
    yield "covariance closed form at half turn", lambda: abs(covariance_exact(0.5) + math.log(2.0)) < 1e-12

    def _lehto_unit():
        est = lehto_integral(lambda p: np.ones(np.asarray(p).shape), Annulus(0j, 2.0**-5, 1.0), 8, 16)
        return abs(est.value - 5.0 * math.log(2.0) / TAU) < 1e-12

    yield "unit distortion annulus integral", _lehto_unit

    def _wilson():
        lo, hi = wilson_interval(5, 100)
        return abs(lo - 0.02154336145631356) < 1e-12 and abs(hi - 0.11175196527208817) < 1e-12

    yield "wilson interval frozen point", _wilson

    def _stretch_solver():
        side = 256
        ax = -2.0 + (4.0 / side) * np.arange(side)
        xx, yy = np.meshgrid(ax, ax)
        zz = xx + 1j * yy
        inside = np.abs(zz) < 1.0
        mu = np.where(inside, np.divide(zz, np.conj(zz), out=np.zeros_like(zz), where=zz != 0) / 3.0, 0.0)
        fld = BeltramiField(half_width=2.0, mu=mu, mask=inside, clipped=0, jacobian_failures=0)
        fmap = solve(fld, SolverConfig(grid_side=side))
        exact = np.where(inside, zz * np.abs(zz), zz)
        ring = np.abs(np.abs(zz) - 1.0) < 0.05
        err = np.abs(fmap.values - exact)
        return float(np.nanmax(np.where(ring, 0.0, err))) < 5e-3

    yield "radial stretch solve", _stretch_solver

    def _identity_weld():
        homeo = _pipeline_homeo(0.0, 256, 512, 1, False)
        result = weld(homeo, SolverConfig(grid_side=256), samples=512)
        circle = np.exp(1j * TAU * result.params[:-1])
        return hausdorff_distance(result.curve, circle) < 1e-6 and not result.flags

    yield "identity weld circle", _identity_weld


def cmd_selftest(args) -> int:
    failures = 0
    outcomes = {}
    for name, check in _selftest_checks():
        try:
            ok = bool(check())
        except Exception as exc:  # a crash is a failure, not an abort
            ok = False
            print(f"FAIL - {name}: {exc}")
        else:
            print(("ok   - " if ok else "FAIL - ") + name)
        outcomes[name] = ok
        failures += 0 if ok else 1
    if args.out is not None:
        out = _outdir(args)
        write_json(
            out / "selftest_manifest.json",
            _manifest("selftest", {"out": str(out)}, {"checks": outcomes}, [], False),
        )
    return 1 if failures else 0


def _add_common(sub, seed_default=0):
    sub.add_argument("--config", help="flat key=value file or a manifest JSON to overlay")
    sub.add_argument("--out", default=".", help="output directory")
    sub.add_argument("--seed", type=int, default=seed_default, help=f"base seed (env {SEED_ENV} overrides)")


def _add_pipeline(sub, modes=4096, field_grid=8192):
    sub.add_argument("--beta", type=float, default=0.7, help="field strength, beta^2 < 2 unless exploratory")
    sub.add_argument("--modes", type=int, default=modes, help="frequency cutoff of the trace")
    sub.add_argument("--field-grid", type=int, default=field_grid, help="circle grid for the trace and measure")
    sub.add_argument("--exploratory", action="store_true", help="allow beta^2 >= 2")


def build_parser() -> _Parser:
    parser = _Parser(prog="weldlab", description=__doc__)
    subs = parser.add_subparsers(dest="command")

    sub = subs.add_parser("weld", parents=[], help="run the full welding pipeline for one seed")
    _add_common(sub)
    _add_pipeline(sub)
    sub.add_argument("--grid", type=int, default=1024, help="solver lattice side")
    sub.add_argument("--eps", type=float, default=0.05, help="dilatation truncation fraction")
    sub.add_argument("--tol", type=float, default=1e-8, help="solver fixed-point tolerance")
    sub.add_argument("--curve-samples", type=int, default=4096, help="points on the welded curve")
    sub.set_defaults(func=cmd_weld)

    sub = subs.add_parser("gmc", help="sample one chaos measure and export its masses")
    _add_common(sub)
    _add_pipeline(sub)
    sub.set_defaults(func=cmd_gmc)

    sub = subs.add_parser("stats", help="covariance and moment-scaling studies")
    _add_common(sub)
    _add_pipeline(sub)
    sub.add_argument("--samples", type=int, default=10000, help="covariance replicates")
    sub.add_argument("--moment-samples", type=int, default=400, help="moment study replicates")
    sub.add_argument("--q", type=float, default=2.0, help="moment order")
    sub.add_argument("--lags", default="0.5,0.16666666666666666", help="comma list of covariance lags")
    sub.set_defaults(func=cmd_stats)

    sub = subs.add_parser("tail", help="Monte Carlo tail study of annulus integrals")
    _add_common(sub)
    sub.add_argument("--beta", type=float, default=1.0)
    sub.add_argument("--modes", type=int, default=2**15)
    sub.add_argument("--field-grid", type=int, default=2**16)
    sub.add_argument("--exploratory", action="store_true")
    sub.add_argument("--p", type=int, default=3, help="scale exponent, octave ratio 2^-p")
    sub.add_argument("--delta", type=float, default=None, help="small-value threshold (required)")
    sub.add_argument("--depths", default="2,3,4,5", help="comma list of nesting depths")
    sub.add_argument("--k-range", default="1,2,3,4", help="comma list of piece indices")
    sub.add_argument("--samples", type=int, default=10000)
    sub.add_argument("--n-rho", type=int, default=9)
    sub.add_argument("--n-theta", type=int, default=64)
    sub.add_argument("--workers", type=int, default=max(1, os.cpu_count() or 1))
    sub.set_defaults(func=cmd_tail)

    sub = subs.add_parser("lehto", help="annulus integral of one pipeline sample")
    _add_common(sub)
    _add_pipeline(sub, modes=2**15, field_grid=2**16)
    sub.add_argument("--center-turn", type=float, default=0.0, help="boundary center as a fraction of a turn")
    sub.add_argument("--inner", type=float, default=2.0**-15)
    sub.add_argument("--outer", type=float, default=1.0)
    sub.add_argument("--n-rho", type=int, default=64)
    sub.add_argument("--n-theta", type=int, default=128)
    sub.add_argument("--p", type=int, default=3)
    sub.add_argument("--depth", type=int, default=5)
    sub.add_argument("--rel-step", type=float, default=0.05)
    sub.set_defaults(func=cmd_lehto)

    sub = subs.add_parser("selftest", help="fast internal consistency battery")
    sub.add_argument("--out", default=None, help="optional directory for the outcome manifest")
    sub.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        known, _ = parser.parse_known_args(argv)
        if getattr(known, "command", None) is None:
            raise ConfigError("a subcommand is required (weld, gmc, stats, tail, lehto, selftest)")
        config_path = getattr(known, "config", None)
        if config_path:
            tokens = _config_tokens(read_config(config_path))
            head = argv.index(known.command) + 1
            argv = argv[:head] + tokens + argv[head:]
        args = parser.parse_args(argv)
        return int(args.func(args))
    except (ConfigError, NumericsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
