"""Command-line entry point.

Subcommands: validate | moments | steady | relax | sweep | lyapunov |
scaling.  Every run writes its results, a config echo, and a manifest with
file digests into one output directory.  Exit codes: 0 success, 1 an
experiment reported a FAIL verdict, 2 configuration error, 3 numeric fault.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import analytics as an
from . import experiments as ex
from . import kinematics as kin
from .errors import ConfigError, NumericsError
from .quadrature import pair_speed_cubed_integral, radial_integral
from .runio import CONFIG_KEYS, RunManifest, atomic_write_text, build_spec, \
    config_echo, parse_config_file, resolve_out_dir, typed_config, write_json

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value))


def write_csv(path: Path, columns, rows) -> None:
    lines = [",".join(columns)]
    lines += [",".join(_csv_cell(x) for x in row) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# validate: kinematics + analytics invariant battery
# ---------------------------------------------------------------------------

def _relerr(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def invariant_checks(cs: kin.CrossSection, dim: int, rho: float = 1.0,
                     samples: int = 100_000, seed: int = 0) -> list[dict]:
    """Fast verification battery for the closed-form layer.

    Each entry: {name, passed, value, expected, error, tol}.  Covers the
    kernel-constant quadrature, Gaussian-moment identities, steady
    temperature consistency, balance-root relation, eigenfunction
    functionals, a-priori energy-bound ordering, and a randomized check of
    the collision kinematics identities.
    """
    checks: list[dict] = []

    def add(name, value, expected, tol):
        err = _relerr(value, expected)
        checks.append({"name": name, "value": value, "expected": expected,
                       "error": err, "tol": tol, "passed": bool(err <= tol)})

    kc = kin.kernel_constants(cs, dim)
    if cs.kind == "constant":
        ref = cs.b0_prime * an.sphere_area(dim) if dim != 3 else cs.b0_prime * 4 * math.pi
        add("kernel.b0_closed_form", kc.b0, ref, 1e-10)
    add("kernel.b2_equals_b0_for_positive_b", kc.b2, kc.b0, 1e-10)

    for k in (1.0, 2.0, 3.0, 4.0):
        prof = an.maxwellian_radial(1.0, 1.0, dim)
        quad = radial_integral(lambda r, k=k: prof(r) * r ** k, dim, 14.0)
        add(f"moments.speed_power_{k:g}", quad, an.gaussian_moment(dim, k), 1e-10)

    prof1 = an.maxwellian_radial(1.0, 1.0, dim)
    pair = pair_speed_cubed_integral(prof1, prof1, dim, 14.0)
    add("moments.relative_speed_cubed", pair, an.mean_relative_speed_cubed(dim), 1e-8)
    pair_v2 = pair_speed_cubed_integral(prof1, lambda r: prof1(r) * np.asarray(r) ** 2,
                                        dim, 14.0)
    add("moments.energy_weighted_relative_cubed", pair_v2,
        math.sqrt(2.0) * (2 * dim + 3) * an.gaussian_moment(dim, 3), 1e-8)

    theta1 = an.elastic_limit_temperature(kc.b1, dim)
    add("steady.temperature_at_alpha_1", an.steady_temperature(1.0, kc.b1, dim),
        theta1, 1e-12)
    if dim == 3:
        add("steady.dimension3_closed_form", theta1,
            (9.0 * math.pi) ** (1.0 / 3.0) / (2.0 ** 10 * kc.b1 ** 2) ** (1.0 / 3.0),
            1e-12)
    add("steady.dissipation_balance",
        an.maxwellian_dissipation(theta1, rho, kc.b1, dim), dim * rho * rho, 1e-12)
    add("steady.balance_root_offset", an.energy_balance_root(rho, dim, kc.b1),
        2.0 ** (2.0 / 3.0) * theta1, 1e-10)

    c0 = an.energy_eigenfunction_normalizer(rho, theta1, dim)
    prof_lim = an.maxwellian_radial(rho, theta1, dim)
    zero_mass = radial_integral(
        lambda r: c0 * (r * r - dim * theta1) * prof_lim(r), dim,
        12.0 * math.sqrt(theta1))
    checks.append({"name": "eigenfunction.zero_mass", "value": zero_mass,
                   "expected": 0.0, "error": abs(zero_mass), "tol": 1e-10,
                   "passed": bool(abs(zero_mass) <= 1e-10)})
    add("eigenfunction.energy", an.eigenfunction_energy(rho, theta1, dim, c0),
        2.0 * dim * c0 * rho * theta1 ** 2, 1e-8)
    add("eigenfunction.dissipation_pairing",
        an.eigenfunction_dissipation_pairing(rho, theta1, dim, kc.b1, c0),
        1.5 * dim * c0 * rho * rho * theta1, 1e-6)

    ordered = True
    for alpha in np.linspace(0.8, 1.0, 9):
        lower, upper = an.energy_bounds(float(alpha), rho, kc, dim)
        energy = rho * dim * an.steady_temperature(float(alpha), kc.b1, dim)
        ordered &= lower <= energy <= upper
    checks.append({"name": "steady.energy_bounds_bracket", "value": float(ordered),
                   "expected": 1.0, "error": 0.0 if ordered else 1.0,
                   "tol": 0.0, "passed": bool(ordered)})

    rng = np.random.default_rng(seed)
    v = rng.standard_normal((samples, dim))
    v_star = rng.standard_normal((samples, dim))
    sigma = kin.uniform_sphere(rng, samples, dim)
    alphas = rng.random(samples)
    worst_mom, worst_en = 0.0, 0.0
    for lo in range(0, samples, 20_000):
        sl = slice(lo, lo + 20_000)
        a = alphas[sl][:, None]
        u = v[sl] - v_star[sl]
        speed = np.linalg.norm(u, axis=1, keepdims=True)
        u_post = 0.5 * (1 - a) * u + 0.5 * (1 + a) * speed * sigma[sl]
        half_w = 0.5 * (v[sl] + v_star[sl])
        vp, vsp = half_w + 0.5 * u_post, half_w - 0.5 * u_post
        scale = 1.0 + np.linalg.norm(v[sl], axis=1) + np.linalg.norm(v_star[sl], axis=1)
        dp = np.linalg.norm(vp + vsp - v[sl] - v_star[sl], axis=1) / scale
        worst_mom = max(worst_mom, float(dp.max()))
        measured = np.sum(vp ** 2 + vsp ** 2 - v[sl] ** 2 - v_star[sl] ** 2, axis=1)
        predicted = kin.energy_loss(v[sl], v_star[sl], sigma[sl], 0.0, check=False) \
            * (1 - a[:, 0] ** 2)
        # relative to the kinetic-energy scale: the loss itself can vanish
        # (alpha -> 1 or grazing sigma) while the squares stay order one
        e_scale = np.sum(v[sl] ** 2 + v_star[sl] ** 2, axis=1) + 1.0
        de = np.abs(measured - predicted) / e_scale
        worst_en = max(worst_en, float(de.max()))
    checks.append({"name": "kinematics.momentum_conservation", "value": worst_mom,
                   "expected": 0.0, "error": worst_mom, "tol": 1e-12,
                   "passed": bool(worst_mom <= 1e-12)})
    checks.append({"name": "kinematics.energy_loss_identity", "value": worst_en,
                   "expected": 0.0, "error": worst_en, "tol": 1e-12,
                   "passed": bool(worst_en <= 1e-12)})
    return checks


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_validate(options: dict, out_dir: Path) -> int:
    cs = options.get("cross_section", kin.CrossSection(kind="constant", b0_prime=1.0))
    dim = int(options.get("dimension", 3))
    report = kin.validate_cross_section(cs, grid_size=max(int(options.get("bins", 64)) * 4, 257))
    checks = invariant_checks(cs, dim, rho=float(options.get("rho", 1.0)),
                              seed=int(options.get("seed", 0)))
    all_pass = report.passed and all(c["passed"] for c in checks)
    print(f"cross-section: {'PASS' if report.passed else 'FAIL'} "
          f"({len(report.violations)} violations)")
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: "
              f"error {c['error']:.3e} (tol {c['tol']:g})")
    write_json(out_dir / "validate.json", {
        "cross_section": {"identifier": cs.identifier, "passed": report.passed,
                          "violations": report.violations},
        "checks": checks, "all_passed": all_pass})
    return EXIT_OK if all_pass else EXIT_FAIL


def _cmd_moments(options: dict, out_dir: Path) -> int:
    dim = int(options.get("dimension", 3))
    prof = an.maxwellian_radial(1.0, 1.0, dim)
    rows = []
    for two_k in (2, 3, 4, 6, 8):
        closed = an.gaussian_moment(dim, two_k)
        quad = radial_integral(lambda r, k=two_k: prof(r) * r ** k, dim, 14.0)
        rows.append((f"speed_power_{two_k}", closed, quad, _relerr(closed, quad)))
    pair = pair_speed_cubed_integral(prof, prof, dim, 14.0)
    rows.append(("relative_speed_cubed", an.mean_relative_speed_cubed(dim), pair,
                 _relerr(an.mean_relative_speed_cubed(dim), pair)))
    closed_v2 = math.sqrt(2.0) * (2 * dim + 3) * an.gaussian_moment(dim, 3)
    pair_v2 = pair_speed_cubed_integral(prof, lambda r: prof(r) * np.asarray(r) ** 2,
                                        dim, 14.0)
    rows.append(("energy_weighted_relative_cubed", closed_v2, pair_v2,
                 _relerr(closed_v2, pair_v2)))

    print(f"unit-Maxwellian moment identities, dimension {dim}")
    for name, closed, quad, err in rows:
        print(f"  {name:32s} closed {closed:.12g}  quadrature {quad:.12g}  "
              f"rel.err {err:.2e}")
    write_csv(out_dir / "moments.csv", ("identity", "closed_form", "quadrature",
                                        "relative_error"), rows)
    return EXIT_OK


def _series_files(out_dir: Path, result) -> None:
    for idx, series in enumerate(result.series):
        series.to_csv(out_dir / f"series_r{idx:02d}.csv")


def _write_predictions(spec: ex.ExperimentSpec, alphas, out_dir: Path) -> None:
    _, pred = ex.prediction_for(spec.config)
    write_json(out_dir / "predictions.json",
               pred.export_table(alphas, spec.config.cross_section.identifier))


def _cmd_steady(spec: ex.ExperimentSpec, out_dir: Path) -> int:
    result = ex.steady_state(spec)
    write_json(out_dir / "result.json", result.to_json_dict())
    cols = tuple(result.to_json_dict())
    write_csv(out_dir / "results.csv", cols,
              [tuple(result.to_json_dict()[c] for c in cols)])
    _write_predictions(spec, [spec.config.alpha], out_dir)
    _series_files(out_dir, result)
    print(f"steady alpha={result.alpha}: theta {result.theta:.6g} "
          f"+- {result.theta_err:.2g} (predicted {result.theta_predicted:.6g}), "
          f"residual {result.residual:+.4f} +- {result.residual_err:.4f}"
          + ("  [non-stationary]" if result.non_stationary else ""))
    return EXIT_OK


def _cmd_sweep(spec: ex.ExperimentSpec, out_dir: Path) -> int:
    result = ex.alpha_sweep(spec)
    payload = result.to_json_dict()
    write_json(out_dir / "fit.json", payload)
    cols = tuple(result.rows[0].to_json_dict())
    write_csv(out_dir / "results.csv", cols,
              [tuple(r.to_json_dict()[c] for c in cols) for r in result.rows])
    _write_predictions(spec, [r.alpha for r in result.rows], out_dir)
    for row in result.rows:
        print(f"alpha={row.alpha}: theta {row.theta:.6g} "
              f"(pred {row.theta_predicted:.6g}), residual {row.residual:+.4f}, "
              f"L1_2 to limit {row.distance_limit:.4g}")
    if result.slope is not None:
        print(f"distance exponent: {result.slope.estimate:.3f} "
              f"+- {result.slope.stderr:.3f} (R^2 {result.slope.r_squared:.3f})")
    return EXIT_OK


def _cmd_relax(spec: ex.ExperimentSpec, out_dir: Path) -> int:
    result = ex.relaxation_fit(spec)
    write_json(out_dir / "fit.json", result.to_json_dict())
    _series_files(out_dir, result)
    print(f"relax alpha={result.alpha}: mu_hat {result.fit.estimate:.5g} "
          f"+- {result.fit.stderr:.2g}  scaled {result.rate_scaled:.5g}  "
          f"unscaled {result.rate_unscaled:.5g}  -> supports {result.supported} "
          f"(gap {result.relative_gap:.1%})")
    return EXIT_OK


def _cmd_lyapunov(spec: ex.ExperimentSpec, out_dir: Path) -> int:
    result = ex.lyapunov_trace(spec)
    write_json(out_dir / "result.json", result.to_json_dict())
    write_csv(out_dir / "trace.csv", ("time", "H1_smoothed", "H1_stderr"),
              list(zip(result.times, result.h1_smoothed, result.h1_stderr)))
    print(f"lyapunov alpha={result.alpha}: "
          f"{'PASS' if result.passed else 'FAIL'} "
          f"(entropy e-fold {result.entropy_efold:.3g}, energy e-fold "
          f"{result.energy_efold:.3g}, ratio {result.timescale_ratio:.1f})")
    return EXIT_OK if result.passed else EXIT_FAIL


def _cmd_scaling(spec: ex.ExperimentSpec, out_dir: Path) -> int:
    result = ex.scaling_check(spec)
    write_json(out_dir / "result.json", result.to_json_dict())
    write_csv(out_dir / "trajectories.csv",
              ("time", "theta_base", "theta_mapped"),
              list(zip(result.times, result.theta_base, result.theta_mapped)))
    print(f"scaling lambda={result.lam}: max deviation "
          f"{result.max_deviation:.2%} (tolerance {result.tolerance:.0%}) "
          f"-> {'PASS' if result.passed else 'FAIL'}")
    return EXIT_OK if result.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    key_docs = "config file keys (key = value per line):\n" + "\n".join(
        f"  {key:20s} {doc}" for key, (_, doc) in CONFIG_KEYS.items())
    parser = argparse.ArgumentParser(
        prog="granubath",
        description="DSMC solver and analytic toolbox for a heat-bath-driven "
                    "inelastic hard-sphere gas")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (
            ("validate", "cross-section checks and closed-form invariants"),
            ("moments", "Maxwellian moment identity table"),
            ("steady", "steady-state temperature and residual"),
            ("relax", "energy relaxation-rate fit"),
            ("sweep", "steady-state sweep over restitution coefficients"),
            ("lyapunov", "Liapunov functional monotonicity"),
            ("scaling", "rescaling-invariance check")):
        p = sub.add_parser(
            name, help=helptext, epilog=key_docs,
            formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--out", help="output directory (default runs/<kind>-<stamp>)")
        p.add_argument("--seed", type=int)
        p.add_argument("--replicas", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--alphas", help="comma list (sweep)")
        p.add_argument("--np", type=int, dest="n_particles")
        p.add_argument("--dt", type=float)
        p.add_argument("--t-end", type=float, dest="t_end")
        p.add_argument("--burn-in", type=float, dest="burn_in")
        p.add_argument("--tau", help="'rescaled' or an explicit value")
        p.add_argument("--delta", type=float, help="energy perturbation (relax)")
        p.add_argument("--lambda", type=float, dest="lam", help="scaling factor")
        p.add_argument("--bins", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--cross-section", dest="cross_section",
                       help="constant:b0 | power-law:b0 | table:path")
        p.add_argument("--init", help="maxwellian:t | uniform-ball:R | bimodal:ta:tb:f")
        p.add_argument("--dimension", type=int)
        p.add_argument("--rho", type=float)
        p.add_argument("--no-projection", action="store_true",
                       help="disable momentum projection of bath kicks")
    return parser


_FLAG_KEYS = {"seed": "seed", "replicas": "replicas", "alpha": "alpha",
              "alphas": "alphas", "n_particles": "np", "dt": "dt",
              "t_end": "t_end", "burn_in": "burn_in", "tau": "tau",
              "delta": "delta", "lam": "lambda", "bins": "bins",
              "workers": "workers", "dimension": "dimension", "rho": "rho"}


def _merge_options(args: argparse.Namespace) -> dict:
    options: dict = {}
    if args.config:
        options.update(typed_config(parse_config_file(args.config)))
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            options[key] = value
    if getattr(args, "cross_section", None):
        options["cross_section"] = typed_config(
            {"cross_section": args.cross_section})["cross_section"]
    if getattr(args, "init", None):
        options["init"] = typed_config({"init": args.init})["init"]
    if getattr(args, "no_projection", False):
        options["momentum_projection"] = False
    return options


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        options = _merge_options(args)
        seed = int(options.get("seed", 0))
        out_dir = resolve_out_dir(args.command, seed, args.out)
        manifest = RunManifest(tool_version=__version__, root_seed=seed,
                               config=config_echo(options) | {"kind": args.command}
                               ).start()
        write_json(out_dir / "config.json",
                   config_echo(options) | {"kind": args.command})

        if args.command == "validate":
            code = _cmd_validate(options, out_dir)
        elif args.command == "moments":
            code = _cmd_moments(options, out_dir)
        else:
            spec = build_spec(args.command, options)
            handler = {"steady": _cmd_steady, "sweep": _cmd_sweep,
                       "relax": _cmd_relax, "lyapunov": _cmd_lyapunov,
                       "scaling": _cmd_scaling}[args.command]
            code = handler(spec, out_dir)
        manifest.finish(out_dir)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"numeric fault: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
