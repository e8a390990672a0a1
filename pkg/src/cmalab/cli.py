"""Command-line driver: one subcommand per experiment, config files in,
CSV artifacts out.

Every run resolves its configuration (file keys over schema defaults, the
`--seed` flag over the `seed` key), writes a `manifest.txt` echoing every
tunable, then emits the experiment's CSV/field artifacts into `--out`.
Identical configuration and seed produce byte-identical artifacts.

Exit codes: 0 success, 1 solver failure, 2 configuration error.
"""

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import liouville
from . import operator_f
from . import viscosity
from .config import (
    ConfigError,
    Option,
    Schema,
    all_positive,
    at_least,
    in_open_interval,
    increasing_from,
    nonnegative,
    parse_config,
    positive,
    serialize_config,
)
from .linalg import FieldSpec, ScalarField
from .solver import (
    BOUNDARY_KINDS,
    BoundaryProfile,
    DirichletProblem,
    SolveOptions,
    SolverError,
    comparison_check,
    comparison_slack,
    solve_dirichlet,
    write_solve_report_csv,
)

log = logging.getLogger(__name__)


def _solver_options_block():
    """Schema entries shared by every subcommand that runs the solver."""
    return [
        Option("tolerance", "float", 1e-10, check=positive),
        Option("max_iter", "int", 50, check=at_least(1)),
        Option("min_step", "float", 2.0 ** -30, check=positive),
        Option("psh_floor", "float", 1e-8, check=positive),
        Option("linear_method", "str", "auto", choices=("auto", "iterative", "direct")),
        Option("linear_rtol", "float", 1e-12, check=positive),
        Option("linear_maxiter", "int", 500, check=at_least(1)),
    ]


def _solve_options(cfg):
    return SolveOptions(
        tolerance=cfg["tolerance"],
        max_iterations=cfg["max_iter"],
        min_step=cfg["min_step"],
        psh_floor=cfg["psh_floor"],
        linear_rtol=cfg["linear_rtol"],
        linear_maxiter=cfg["linear_maxiter"],
        linear_method=cfg["linear_method"],
    )


def _profile(kind, cfg):
    if kind == "quadratic_base":
        return BoundaryProfile.quadratic_base()
    if kind == "linear":
        return BoundaryProfile.linear(cfg["a"], cfg["b"])
    if kind == "power":
        return BoundaryProfile.power(cfg["c"], cfg["alpha"])
    if kind == "logdamped":
        return BoundaryProfile.logdamped(cfg["c"])
    return BoundaryProfile.quadratic_excess(cfg["c"])


SOLVE_SCHEMA = Schema(
    [
        Option("n", "int", 2, check=lambda v: None if v in (1, 2) else f"must be 1 or 2, got {v}"),
        Option("points_per_axis", "int", 13, check=at_least(5)),
        Option("halfwidth", "float", 1.0, check=positive),
        Option("boundary", "str", "quadratic_base", choices=BOUNDARY_KINDS),
        Option("a", "float", 0.0),
        Option("b", "float", 0.0),
        Option("c", "float", 0.0),
        Option("alpha", "float", 1.5, check=in_open_interval(0.0, 2.0)),
        Option("f", "float", 1.0, check=positive),
    ]
    + _solver_options_block()
    + [Option("seed", "int", 0)],
)


def run_solve(cfg, outdir, threads):
    spec = FieldSpec(cfg["n"], cfg["points_per_axis"], halfwidth=cfg["halfwidth"])
    problem = DirichletProblem(spec, f=cfg["f"], boundary=_profile(cfg["boundary"], cfg))
    u, report = solve_dirichlet(problem, _solve_options(cfg))
    u.dump(outdir / "solution.field")
    write_solve_report_csv(outdir / "solve_report.csv", problem, report)
    log.info(
        "solved n=%d grid %d^%d in %d iterations",
        spec.n, spec.points_per_axis, spec.dim, report.iterations,
    )
    return (
        f"solve: {report.iterations} Newton iterations, "
        f"residual {report.final_residual:.3e}"
    )


LADDER_SCHEMA = Schema(
    [
        Option("profile", "str", "power", choices=BOUNDARY_KINDS),
        Option("a", "float", 0.0),
        Option("b", "float", 0.0),
        Option("c", "float", 0.1),
        Option("alpha", "float", 1.5, check=in_open_interval(0.0, 2.0)),
        Option("r_values", "floats", (1.0, 2.0, 4.0, 8.0), check=increasing_from(1.0)),
        Option("n", "int", 2, check=lambda v: None if v in (1, 2) else f"must be 1 or 2, got {v}"),
        Option("points_per_axis", "int", 13, check=at_least(5)),
        Option("window", "int", 1, check=nonnegative),
        Option("richardson", "bool", False),
    ]
    + _solver_options_block()
    + [Option("seed", "int", 0)],
)


def run_ladder(cfg, outdir, threads):
    grid = FieldSpec(cfg["n"], cfg["points_per_axis"])
    profile = _profile(cfg["profile"], cfg)
    report = liouville.run_ladder(
        profile,
        cfg["r_values"],
        grid,
        opts=_solve_options(cfg),
        threads=threads,
        window=cfg["window"],
        richardson=cfg["richardson"],
    )
    liouville.write_ladder_csv(report, outdir / "ladder.csv")
    failures = sum(1 for r in report.rungs if r.error is not None)
    with open(outdir / "ladder_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["profile", "decay_exponent", "rungs", "failures"])
        writer.writerow(
            [profile.kind, f"{report.decay_exponent:.17g}", str(len(report.rungs)), str(failures)]
        )
    if failures:
        log.warning("%d of %d rungs failed", failures, len(report.rungs))
    return (
        f"ladder: {len(report.rungs)} rungs, "
        f"decay exponent {report.decay_exponent:.4f}"
    )


BLOCKI_SCHEMA = Schema(
    [
        Option("det_points", "int", 100, check=at_least(1)),
        Option("z_min", "float", 0.5, check=positive),
        Option("z_max", "float", 2.0, check=positive),
        Option("w_max", "float", 2.0, check=nonnegative),
        Option("fd_step", "float", 1e-3, check=positive),
        Option("blowup_steps", "floats", (0.1, 0.01, 0.001), check=all_positive),
        Option("blowup_w_re", "float", 0.0),
        Option("blowup_w_im", "float", 0.0),
        Option("growth_t", "float", 100.0, check=positive),
        Option("probe_points", "int", 10, check=nonnegative),
        Option("probe_trials", "int", 100, check=at_least(1)),
        Option("probe_points_per_axis", "int", 13, check=at_least(7)),
        Option("probe_halfwidth", "float", 0.02, check=positive),
        Option("probe_bump", "float", 0.1, check=positive),
        Option("probe_radius", "float", 0.0, check=nonnegative),
        Option("probe_z_min", "float", 0.38, check=positive),
        Option("probe_z_max", "float", 0.68, check=positive),
        Option("probe_w_max", "float", 0.2, check=nonnegative),
        Option("seed", "int", 0),
    ],
    post=[
        lambda cfg: None if cfg["z_max"] > cfg["z_min"] else "z_max must exceed z_min",
        lambda cfg: None
        if cfg["probe_z_max"] > cfg["probe_z_min"]
        else "probe_z_max must exceed probe_z_min",
    ],
)


def _write_det_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["z_re", "z_im", "w_re", "w_im", "det_closed", "det_fd"])
        for row in rows:
            writer.writerow([f"{v:.17g}" for v in row])


def run_blocki_verify(cfg, outdir, threads):
    seed = cfg["seed"]

    det_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    det_rows = []
    for _ in range(cfg["det_points"]):
        z = det_rng.uniform(cfg["z_min"], cfg["z_max"]) * np.exp(
            1j * det_rng.uniform(0.0, 2.0 * np.pi)
        )
        w = det_rng.uniform(0.0, cfg["w_max"]) * np.exp(
            1j * det_rng.uniform(0.0, 2.0 * np.pi)
        )
        det_rows.append(
            (
                z.real, z.imag, w.real, w.imag,
                viscosity.blocki_det_check(z, w),
                viscosity.blocki_det_fd(z, w, step=cfg["fd_step"]),
            )
        )
    _write_det_csv(outdir / "det_check.csv", det_rows)
    det_err = max(abs(r[4] - 1.0) for r in det_rows)
    fd_err = max(abs(r[5] - 1.0) for r in det_rows)
    log.info("det check: closed-form err %.3e, fd err %.3e", det_err, fd_err)

    w0 = complex(cfg["blowup_w_re"], cfg["blowup_w_im"])
    with open(outdir / "blowup.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["h", "w_re", "w_im", "probe_times_h", "target"])
        for h in cfg["blowup_steps"]:
            val = viscosity.c2_blowup_probe(h, w0) * h
            target = 2.0 * (1.0 + abs(w0) ** 2)
            writer.writerow([f"{v:.17g}" for v in (h, w0.real, w0.imag, val, target)])

    t = cfg["growth_t"]
    ratio = viscosity.blocki_growth_probe(t)
    with open(outdir / "growth.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "ratio", "abs_err"])
        writer.writerow([f"{v:.17g}" for v in (t, ratio, abs(ratio - 1.0))])

    probe_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    radius = cfg["probe_radius"] if cfg["probe_radius"] > 0 else None
    all_violations = []
    summary_rows = []
    for k in range(cfg["probe_points"]):
        z = probe_rng.uniform(cfg["probe_z_min"], cfg["probe_z_max"]) * np.exp(
            1j * probe_rng.uniform(0.0, 2.0 * np.pi)
        )
        w = probe_rng.uniform(0.0, cfg["probe_w_max"]) * np.exp(
            1j * probe_rng.uniform(0.0, 2.0 * np.pi)
        )
        spec = FieldSpec(
            2,
            cfg["probe_points_per_axis"],
            center=[z.real, w.real, z.imag, w.imag],
            halfwidth=cfg["probe_halfwidth"],
        )
        field = viscosity.blocki_field(spec)
        above = viscosity.subsolution_probe(
            field, spec.center_index, cfg["probe_trials"],
            seed=seed + 2 * k, radius=radius, bump=cfg["probe_bump"],
        )
        below = viscosity.supersolution_probe(
            field, spec.center_index, cfg["probe_trials"],
            seed=seed + 2 * k + 1, radius=radius, bump=cfg["probe_bump"],
        )
        va, vb = viscosity.violations(above), viscosity.violations(below)
        all_violations.extend(va)
        all_violations.extend(vb)
        summary_rows.append(
            (
                z.real, z.imag, w.real, w.imag,
                len(above), len(below), len(va), len(vb),
                min((r.operator_value for r in above), default=np.nan),
                max((r.operator_value for r in below), default=np.nan),
            )
        )
    with open(outdir / "probe_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "z_re", "z_im", "w_re", "w_im",
                "above_touches", "below_touches",
                "above_violations", "below_violations",
                "worst_above", "worst_below",
            ]
        )
        for row in summary_rows:
            writer.writerow(
                [f"{v:.17g}" if isinstance(v, float) else str(v) for v in row]
            )
    viscosity.write_violation_csv(all_violations, outdir / "violations.csv", 4)
    return (
        f"blocki-verify: det err {det_err:.3e} (closed) / {fd_err:.3e} (fd), "
        f"{len(all_violations)} probe violations"
    )


CERTIFY_SCHEMA = Schema(
    [
        Option("delta", "float", 0.1, check=in_open_interval(0.0, 1.0 / 3.0)),
        Option("samples", "int", 10000, check=at_least(1)),
        Option(
            "n", "int", 2,
            check=lambda v: None if 1 <= v <= 3 else f"must be 1, 2 or 3, got {v}",
        ),
        Option("fd_step", "float", 1e-3, check=positive),
        Option("seed", "int", 0),
    ],
)


def run_operator_certify(cfg, outdir, threads):
    constants = operator_f.certify(
        cfg["delta"], cfg["samples"], n=cfg["n"], seed=cfg["seed"], step=cfg["fd_step"]
    )
    operator_f.write_certification_csv(constants, outdir / "certification.csv")
    return (
        f"operator-certify: theta_hat {constants.theta_hat:.6f}, "
        f"theta_inv_hat {constants.theta_inv_hat:.6f}, K_hat {constants.k_hat:.6f}"
    )


COMPARISON_SCHEMA = Schema(
    [
        Option("pairs", "int", 20, check=at_least(1)),
        Option("n", "int", 2, check=lambda v: None if v in (1, 2) else f"must be 1 or 2, got {v}"),
        Option("points_per_axis", "int", 13, check=at_least(5)),
        Option("halfwidth", "float", 1.0, check=positive),
        Option("offset_max", "float", 0.2, check=nonnegative),
        Option("bump_max", "float", 0.15, check=nonnegative),
    ]
    + _solver_options_block()
    + [Option("seed", "int", 0)],
)


def _random_ordered_pair(rng, offset_max, bump_max):
    """Draw boundary data g1 <= g2: a random small profile, then the same
    profile plus a nonnegative constant and a nonnegative power bump."""
    kind = rng.choice(["linear", "power", "logdamped"])
    if kind == "linear":
        base = BoundaryProfile.linear(rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1))
    elif kind == "power":
        base = BoundaryProfile.power(rng.uniform(0.02, 0.2), rng.uniform(0.8, 1.8))
    else:
        base = BoundaryProfile.logdamped(rng.uniform(0.02, 0.2))
    c0 = rng.uniform(0.0, offset_max)
    c2 = rng.uniform(0.0, bump_max)
    a2 = rng.uniform(1.0, 1.8)

    def upper(*coords):
        sq = sum(np.asarray(x) ** 2 for x in coords)
        return base.boundary_values(*coords) + c0 + c2 * sq ** (0.5 * a2)

    return kind, base, upper


def _comparison_pair_task(seed, k, spec, offset_max, bump_max, opts):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
    kind, lower, upper = _random_ordered_pair(rng, offset_max, bump_max)
    u1, _ = solve_dirichlet(DirichletProblem(spec, boundary=lower), opts)
    u2, _ = solve_dirichlet(DirichletProblem(spec, boundary=upper), opts)
    interior_gap, boundary_gap = comparison_check(u1, u2)
    return kind, interior_gap, boundary_gap


def run_comparison_test(cfg, outdir, threads):
    spec = FieldSpec(cfg["n"], cfg["points_per_axis"], halfwidth=cfg["halfwidth"])
    opts = _solve_options(cfg)
    slack = comparison_slack(spec)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(
                _comparison_pair_task,
                cfg["seed"], k, spec, cfg["offset_max"], cfg["bump_max"], opts,
            )
            for k in range(cfg["pairs"])
        ]
        results = [f.result() for f in futures]
    ok = 0
    with open(outdir / "comparison.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["pair", "kind", "interior_gap", "boundary_gap", "slack", "within"]
        )
        for k, (kind, interior_gap, boundary_gap) in enumerate(results):
            within = interior_gap <= boundary_gap + slack
            ok += within
            writer.writerow(
                [
                    str(k), kind,
                    f"{interior_gap:.17g}", f"{boundary_gap:.17g}", f"{slack:.17g}",
                    "1" if within else "0",
                ]
            )
    return f"comparison-test: {ok}/{cfg['pairs']} pairs within slack"


RICCI_SCHEMA = Schema(
    [
        Option("n", "int", 1, check=at_least(1)),
        Option("points_per_axis", "int", 33, check=at_least(5)),
        Option("halfwidth", "float", 1.0, check=positive),
        Option("phi", "str", "quadratic", choices=("quadratic", "sin")),
        Option("scale", "float", 1.0, check=positive),
        Option("amplitude", "float", 0.01),
        Option("frequency", "float", 1.0),
        Option("seed", "int", 0),
    ],
)


def run_ricci_check(cfg, outdir, threads):
    spec = FieldSpec(cfg["n"], cfg["points_per_axis"], halfwidth=cfg["halfwidth"])
    scale, amp, freq = cfg["scale"], cfg["amplitude"], cfg["frequency"]
    if cfg["phi"] == "quadratic":
        phi = ScalarField.from_function(
            spec, lambda *xs: scale * 0.5 * sum(np.asarray(x) ** 2 for x in xs)
        )
    else:
        phi = ScalarField.from_function(
            spec,
            lambda *xs: 0.5 * sum(np.asarray(x) ** 2 for x in xs)
            + amp * np.sin(freq * np.asarray(xs[0])),
        )
    laplacian_sup, oscillation = liouville.ricci_flat_check(phi)
    with open(outdir / "ricci.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phi", "n", "points_per_axis", "laplacian_sup", "oscillation"])
        writer.writerow(
            [
                cfg["phi"], str(spec.n), str(spec.points_per_axis),
                f"{laplacian_sup:.17g}", f"{oscillation:.17g}",
            ]
        )
    return f"ricci-check: laplacian sup {laplacian_sup:.3e}, oscillation {oscillation:.3e}"


COMMANDS = {
    "solve": (SOLVE_SCHEMA, run_solve, "solve one Dirichlet problem and dump the field"),
    "ladder": (LADDER_SCHEMA, run_ladder, "rescaling-ladder decay experiment"),
    "blocki-verify": (
        BLOCKI_SCHEMA, run_blocki_verify,
        "determinant, blow-up, growth and touching checks for the |z|(1+|w|^2) example",
    ),
    "operator-certify": (
        CERTIFY_SCHEMA, run_operator_certify,
        "Monte-Carlo ellipticity and concavity-modulus constants",
    ),
    "comparison-test": (
        COMPARISON_SCHEMA, run_comparison_test,
        "comparison principle on random ordered boundary pairs",
    ),
    "ricci-check": (
        RICCI_SCHEMA, run_ricci_check,
        "log-determinant flatness diagnostic",
    ),
}


def _write_manifest(outdir, command, cfg, schema, threads):
    text = (
        f"command = {command}\n"
        f"version = {__version__}\n"
        f"threads = {threads}\n"
    ) + serialize_config(cfg, schema)
    (outdir / "manifest.txt").write_text(text)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cmalab",
        description="numerical experiments for the complex Monge-Ampere operator",
    )
    parser.add_argument("--version", action="version", version=f"cmalab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, _, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="key = value configuration file")
        p.add_argument("--out", default=".", help="output directory (default: cwd)")
        p.add_argument("--seed", type=int, default=None, help="override the seed key")
        p.add_argument(
            "--threads", type=int, default=None,
            help="worker cap (default: machine parallelism)",
        )
        p.add_argument("--verbose", action="store_true", help="progress on stderr")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    schema, runner, _ = COMMANDS[args.command]
    threads = args.threads if args.threads else os.cpu_count() or 1
    try:
        if args.config is None:
            text = ""
        else:
            try:
                text = Path(args.config).read_text()
            except OSError as err:
                raise ConfigError(f"cannot read config file: {err}") from None
        cfg = parse_config(text, schema)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if threads < 1:
            raise ConfigError(f"--threads must be at least 1, got {threads}")
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        _write_manifest(outdir, args.command, cfg, schema, threads)
        summary = runner(cfg, outdir, threads)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except SolverError as err:
        print(f"solver failure: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
