"""Command-line interface for batch runs and the built-in property suite.

Subcommands: kinetic-run, macro-run, limit-study, check-invariants,
rate-fit.  All numeric options override the corresponding key of the
config file (see ``--config``); exit code 0 on success, 1 when a check or
run-time inequality fails, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import ConfigurationError, SimulationError
from .grids import build_phase_grid
from .harness import (StudyConfig, apply_overrides, auto_v_max,
                      build_initial_data, emit_results, load_config,
                      read_records_csv, run_limit_study, save_config)
from .kinetic import (compute_moments, maxwellian_indicator,
                      minimization_check, save_snapshot, DistributionField,
                      PRESSURE_CONSTANT)
from .kinetic_solver import KineticConfig, alignment_dissipation, run_kinetic
from .macro import MacroConfig, MacroState, run_macro
from .entropy import (energy_budget, fit_rate, lower_bound_gap,
                      pressure_entropy_h, theoretical_rate)
from .weights import (WeightParams, conv_periodic, sample_kernel,
                      weight_gap_check)

_CONFIG_KEYS = [
    ("n_x", int, "physical cells"),
    ("n_v", int, "velocity cells"),
    ("v_max", float, "velocity truncation half-width (0 = auto)"),
    ("length", float, "torus circumference"),
    ("alpha", float, "weight singularity exponent, in (0, 3/2)"),
    ("beta", float, "weight regularization exponent"),
    ("epsilons", str, "comma-separated descending scaling parameters"),
    ("t_end", float, "time horizon"),
    ("profile", str, "initial profile: sine | consensus | counter_stream"),
    ("amp_rho", float, "density perturbation amplitude"),
    ("amp_u", float, "velocity perturbation amplitude"),
    ("base_u", float, "constant velocity offset"),
    ("stream_speed", float, "counter-streaming bulk speed"),
    ("kappa_mode", str, "pressure coefficient: cd (=1/12) | one"),
    ("cfl", float, "CFL number in (0, 1]"),
    ("n_snapshots", int, "number of snapshot intervals"),
    ("tol_budget", float, "energy-budget tolerance"),
    ("boundary_mass_tol", float, "velocity-boundary mass tolerance"),
    ("macro_refine", int, "macro reference grid refinement factor"),
    ("limiter", str, "macro limiter: minmod | none"),
]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for key, typ, help_text in _CONFIG_KEYS:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key,
                            type=typ, default=None, help=help_text)
    parser.add_argument("--config", default=None,
                        help="key = value config file (schema_version = 1)")
    parser.add_argument("--out", default=None, help="output directory")


def _build_config(args) -> StudyConfig:
    cfg = load_config(args.config) if args.config else StudyConfig()
    overrides = {}
    for key, _, _ in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.out is not None:
        overrides["out_dir"] = args.out
    return apply_overrides(cfg, overrides)


def _cmd_kinetic_run(args) -> int:
    cfg = _build_config(args)
    eps = cfg.epsilons[0]
    grid = build_phase_grid(cfg.n_x, cfg.n_v, cfg.length, auto_v_max(cfg))
    f0, _ = build_initial_data(cfg, eps, grid)
    weights = WeightParams(alpha=cfg.alpha, beta=cfg.beta, epsilon=eps,
                           length=cfg.length, regularized=True)
    kin_cfg = KineticConfig(epsilon=eps, weights=weights, t_end=cfg.t_end,
                            cfl=cfg.cfl,
                            boundary_mass_tol=cfg.boundary_mass_tol,
                            tol_budget=cfg.tol_budget)
    trajectory, ledger = run_kinetic(f0, kin_cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    ledger.to_csv(os.path.join(cfg.out_dir, "kinetic_ledger.csv"))
    save_snapshot(trajectory[-1][1], trajectory[-1][0],
                  os.path.join(cfg.out_dir, "kinetic_final.bin"))
    residual, ok = energy_budget(ledger, cfg.tol_budget)
    print(f"kinetic run: eps={eps:g} steps={len(ledger.t) - 1} "
          f"mass_drift={abs(ledger.mass[-1] - ledger.mass[0]):.3e} "
          f"budget_residual={residual:.3e}")
    return 0 if ok else 1


def _cmd_macro_run(args) -> int:
    cfg = _build_config(args)
    from .grids import TorusGrid
    grid = TorusGrid(cfg.n_x, cfg.length)
    from .harness import _profile_functions
    rho0_fn, u0_fn = _profile_functions(cfg)
    x = grid.centers
    rho0 = rho0_fn(x)
    rho0 = rho0 / (rho0.sum() * grid.dx)
    state0 = MacroState(grid, rho0, rho0 * u0_fn(x), cfg.kappa_p)
    weights = WeightParams(alpha=cfg.alpha, beta=cfg.beta, epsilon=1.0,
                           length=cfg.length, regularized=False)
    macro_cfg = MacroConfig(weights=weights, t_end=cfg.t_end, cfl=cfg.cfl,
                            limiter=cfg.limiter)
    trajectory, ledger = run_macro(state0, macro_cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    ledger.to_csv(os.path.join(cfg.out_dir, "macro_ledger.csv"))
    final = trajectory[-1][1]
    with open(os.path.join(cfg.out_dir, "macro_final.csv"), "w") as fh:
        fh.write("t,x,rho,u\n")
        u = final.velocity
        for i, xi in enumerate(grid.centers):
            fh.write(f"{trajectory[-1][0]!r},{xi!r},{final.rho[i]!r},{u[i]!r}\n")
    mass_drift = abs(ledger.mass[-1] - ledger.mass[0])
    mom_drift = abs(ledger.momentum[-1] - ledger.momentum[0])
    print(f"macro run: steps={len(ledger.t) - 1} mass_drift={mass_drift:.3e} "
          f"momentum_drift={mom_drift:.3e}")
    return 0 if mass_drift <= 1e-12 and mom_drift <= 1e-10 else 1


def _cmd_limit_study(args) -> int:
    cfg = _build_config(args)
    records, rate, details = run_limit_study(cfg, verbose=True)
    emit_results(records, rate, details, cfg, cfg.out_dir)
    ok = all(r.energy_residual <= cfg.tol_budget for r in records)
    decreasing = all(a.sup_rel_entropy > b.sup_rel_entropy
                     for a, b in zip(records, records[1:]))
    print(f"study: {len(records)} runs, sup_rel_entropy decreasing: {decreasing}")
    if rate is not None:
        print(f"fitted slope {rate.slope:.3f} vs lambda {rate.lambda_theory:g}")
        ok = ok and rate.meets_theory
    return 0 if ok and decreasing else 1


def _cmd_check_invariants(args) -> int:
    cfg = _build_config(args)
    rng = np.random.default_rng(20240817)
    failures = 0

    def report(name: str, ok: bool, detail: str = ""):
        nonlocal failures
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        if detail:
            line += f"  ({detail})"
        print(line)
        failures += 0 if ok else 1

    # Regularization gap bound on a dense parameter sweep.
    r = np.geomspace(1e-3, np.pi, 40)
    worst = 0.0
    ok = True
    for alpha in (0.25, 0.5, 1.0, 1.4):
        for beta in (1.0, 2.0, 4.0):
            for eps in (0.1, 0.01, 1e-3, 1e-4):
                p = WeightParams(alpha=alpha, beta=beta, epsilon=eps)
                gap, bound, this_ok = weight_gap_check(r, p)
                ok = ok and this_ok
                worst = max(worst, float(np.max(gap - bound)))
    report("weight regularization gap bound", ok, f"worst excess {worst:.1e}")

    # Equilibrium moment identities on random states.
    grid = build_phase_grid(64, 256, v_max=2.0)
    rho = rng.uniform(0.2, 1.2, grid.x.n_x)
    u = rng.uniform(-0.8, 0.8, grid.x.n_x)
    m_field = maxwellian_indicator(rho, u, grid)
    mom = compute_moments(m_field)
    mass_err = float(np.max(np.abs(mom.rho - rho)))
    mom_err = float(np.max(np.abs(mom.momentum - rho * u)))
    second_err = float(np.max(np.abs(
        mom.second - (rho * u ** 2 + PRESSURE_CONSTANT * rho ** 3))))
    ok = mass_err <= 1e-13 and mom_err <= 1e-13 and second_err <= 5 * grid.v.dv ** 2
    report("equilibrium moment identities", ok,
           f"mass {mass_err:.1e}, momentum {mom_err:.1e}, second {second_err:.1e}")

    # Energy minimization on random bounded fields.
    ok = True
    for _ in range(20):
        vals = rng.uniform(0.0, 1.0, (grid.x.n_x, grid.v.n_v))
        vals[:, :8] = 0.0
        vals[:, -8:] = 0.0
        f = DistributionField(grid, vals * 0.05)
        _, _, this_ok = minimization_check(f)
        ok = ok and this_ok
    report("equilibrium energy minimization", ok)

    # Pressure-entropy lower bound on random pairs.
    a = rng.uniform(0.0, 3.0, 10000)
    b = rng.uniform(0.0, 3.0, 10000)
    h = pressure_entropy_h(a, b)
    bound = 0.5 * b * (a - b) ** 2
    ok = bool(np.all(h >= bound - 1e-12))
    report("pressure-entropy lower bound", ok)

    # Convolution oracle agreement.
    tg = grid.x
    kernel = sample_kernel(WeightParams(alpha=0.5, beta=2.0, epsilon=0.1), tg)
    g = rng.standard_normal(tg.n_x)
    fast = conv_periodic(kernel, g, tg, method="fft")
    direct = conv_periodic(kernel, g, tg, method="direct")
    err = float(np.max(np.abs(fast - direct)) / np.max(np.abs(direct)))
    report("convolution fft vs direct", err <= 1e-10, f"rel err {err:.1e}")

    # Alignment dissipation two-path agreement.
    from .kinetic import MomentSet
    rho_s = rng.uniform(0.1, 0.3, tg.n_x)
    u_s = rng.uniform(-0.5, 0.5, tg.n_x)
    mom_s = MomentSet(rho=rho_s, momentum=rho_s * u_s,
                      second=rho_s * (u_s ** 2 + 1.0), velocity=u_s)
    wpar = WeightParams(alpha=0.5, beta=2.0, epsilon=0.1)
    d_conv = alignment_dissipation(mom_s, wpar, tg, method="convolution")
    d_direct = alignment_dissipation(mom_s, wpar, tg, method="direct")
    err = abs(d_conv - d_direct) / max(abs(d_direct), 1e-300)
    report("alignment dissipation two-path", err <= 1e-10, f"rel err {err:.1e}")

    # Short conservation + budget run at reduced size.
    small = apply_overrides(cfg, {"n_x": 64, "n_v": 64, "t_end": 0.1,
                                  "epsilons": "0.05"})
    grid_s = build_phase_grid(small.n_x, small.n_v, small.length,
                              auto_v_max(small))
    f0, _ = build_initial_data(small, 0.05, grid_s)
    weights = WeightParams(alpha=small.alpha, beta=small.beta, epsilon=0.05,
                           length=small.length, regularized=True)
    kin_cfg = KineticConfig(epsilon=0.05, weights=weights, t_end=small.t_end,
                            cfl=small.cfl)
    _, ledger = run_kinetic(f0, kin_cfg)
    mass_drift = abs(ledger.mass[-1] - ledger.mass[0])
    mom_drift = abs(ledger.momentum[-1] - ledger.momentum[0])
    residual, budget_ok = energy_budget(ledger, small.tol_budget)
    ok = mass_drift <= 1e-12 and mom_drift <= 1e-10 and budget_ok
    report("kinetic conservation and energy budget", ok,
           f"mass {mass_drift:.1e}, momentum {mom_drift:.1e}, "
           f"residual {residual:.1e}")

    return 0 if failures == 0 else 1


def _cmd_rate_fit(args) -> int:
    records = read_records_csv(args.records)
    if len(records) < 3:
        raise ConfigurationError("rate fit needs at least 3 study rows")
    rate = fit_rate([r.epsilon for r in records],
                    [r.sup_rel_entropy for r in records],
                    args.alpha, args.beta)
    print(f"slope = {rate.slope!r}")
    print(f"lambda_theory = {rate.lambda_theory!r}")
    print(f"meets theory (slope >= lambda - 0.1): {rate.meets_theory}")
    return 0 if rate.meets_theory else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bgkalign",
        description="kinetic relaxation-alignment model and its "
                    "pressured alignment-hydrodynamics limit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kinetic-run", help="single kinetic run (first eps)")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_kinetic_run)

    p = sub.add_parser("macro-run", help="single macro run")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_macro_run)

    p = sub.add_parser("limit-study", help="full eps sweep + rate fit")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_limit_study)

    p = sub.add_parser("check-invariants",
                       help="run the built-in property suite")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_check_invariants)

    p = sub.add_parser("rate-fit", help="offline rate fit from study.csv")
    p.add_argument("records", help="path to study.csv")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=4.0)
    p.set_defaults(fn=_cmd_rate_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
