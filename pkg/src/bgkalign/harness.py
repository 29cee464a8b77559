"""Batch studies: configuration, initial data, and the scaling-limit sweep.

A study runs the macro solver once on a refined grid to the horizon, then
runs the kinetic solver from the same well-prepared initial data for every
entry of a descending eps list.  At shared snapshot times it accumulates
the modulated energy between the kinetic moments and the restricted macro
reference together with the second-moment gap, and finally fits the
observed decay rate against the theoretical exponent.  All outputs are
plain CSV plus a text summary; identical configs produce bit-identical
files (fixed summation orders, repr-exact floats).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ConfigurationError, SimulationError
from .grids import TWO_PI, PhaseGrid, TorusGrid, build_phase_grid
from .kinetic import (PRESSURE_CONSTANT, DistributionField, compute_moments,
                      maxwellian_indicator, save_snapshot, second_moment_gap)
from .kinetic_solver import KineticConfig, run_kinetic
from .macro import MacroConfig, MacroState, run_macro, shock_time_estimate
from .entropy import (RateFit, energy_budget, fit_rate,
                      relative_entropy_field, theoretical_rate,
                      wellprepared_check)
from .weights import WeightParams

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

SCHEMA_VERSION = 1

PROFILES = ("sine", "consensus", "counter_stream")
KAPPA_MODES = ("cd", "one")


@dataclass
class StudyConfig:
    """Flat key-value configuration of a study; see load_config for the file
    format.  epsilons must be sorted descending within (0, 1]."""

    n_x: int = 256
    n_v: int = 256
    v_max: float = 0.0          # 0 means auto: 2 (max|u0| + max rho0)
    length: float = TWO_PI
    alpha: float = 0.5
    beta: float = 4.0
    epsilons: tuple = (0.08, 0.04, 0.02, 0.01)
    t_end: float = 0.5
    profile: str = "sine"
    amp_rho: float = 0.2
    amp_u: float = 0.1
    base_u: float = 0.0
    stream_speed: float = 0.5
    kappa_mode: str = "cd"
    cfl: float = 0.5
    out_dir: str = "."
    n_snapshots: int = 25
    tol_budget: float = 1e-3
    boundary_mass_tol: float = 1e-10
    macro_refine: int = 2
    limiter: str = "minmod"

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigurationError(f"unknown profile {self.profile!r}")
        if self.kappa_mode not in KAPPA_MODES:
            raise ConfigurationError(f"unknown kappa mode {self.kappa_mode!r}")
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or any(not 0.0 < e <= 1.0 for e in eps):
            raise ConfigurationError("epsilons must lie in (0, 1]")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ConfigurationError("epsilons must be strictly descending")
        self.epsilons = eps
        if not 0.0 < self.alpha < 1.5:
            raise ConfigurationError(
                f"alpha must be in (0, 3/2) for the 1-D study, got {self.alpha}")
        if self.macro_refine < 1:
            raise ConfigurationError("macro_refine must be >= 1")
        if self.n_snapshots < 2:
            raise ConfigurationError("need at least 2 snapshots")

    @property
    def kappa_p(self) -> float:
        return PRESSURE_CONSTANT if self.kappa_mode == "cd" else 1.0


@dataclass
class ConvergenceRecord:
    """One row of the eps sweep."""

    epsilon: float
    sup_rel_entropy: float
    h_part_sup: float
    kinetic_part_sup: float
    gap_time_integral: float
    energy_residual: float
    lambda_theory: float
    notes: str = ""

    CSV_COLUMNS = ("epsilon", "sup_rel_entropy", "h_part_sup",
                   "kinetic_part_sup", "gap_time_integral", "energy_residual",
                   "lambda_theory", "notes")


_INT_KEYS = {"n_x", "n_v", "n_snapshots", "macro_refine"}
_STR_KEYS = {"profile", "kappa_mode", "out_dir", "limiter"}


def load_config(path) -> StudyConfig:
    """Parse a flat key = value config file (# comments, blank lines ok).

    Requires schema_version = 1; ``epsilons`` is a comma-separated list.
    Unknown keys are rejected.
    """
    if not os.path.exists(path):
        raise ConfigurationError(f"config file not found: {path}")
    raw: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigurationError(
                    f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in stripped.split("=", 1))
            raw[key] = value
    version = raw.pop("schema_version", None)
    if version is None or int(version) != SCHEMA_VERSION:
        raise ConfigurationError(
            f"{path}: schema_version = {SCHEMA_VERSION} is required")
    return apply_overrides(StudyConfig(), raw)


def apply_overrides(cfg: StudyConfig, overrides: dict) -> StudyConfig:
    """Apply string-valued key overrides onto a config."""
    known = {f.name for f in fields(StudyConfig)}
    changes = {}
    for key, value in overrides.items():
        if key not in known:
            raise ConfigurationError(f"unknown config key {key!r}")
        if key == "epsilons":
            if isinstance(value, str):
                changes[key] = tuple(float(v) for v in value.split(",") if v.strip())
            else:
                changes[key] = tuple(float(v) for v in value)
        elif key in _INT_KEYS:
            changes[key] = int(value)
        elif key in _STR_KEYS:
            changes[key] = str(value)
        else:
            changes[key] = float(value)
    return replace(cfg, **changes)


def save_config(cfg: StudyConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"schema_version = {SCHEMA_VERSION}\n")
        for f in fields(StudyConfig):
            value = getattr(cfg, f.name)
            if f.name == "epsilons":
                value = ",".join(repr(float(v)) for v in value)
            fh.write(f"{f.name} = {value}\n")


def _profile_functions(cfg: StudyConfig):
    """Analytic (rho0, u0) callables for the configured profile, with the
    density normalized to unit mass on the torus."""
    length = cfg.length
    if cfg.profile == "consensus":
        rho0 = lambda x: np.full_like(np.asarray(x, dtype=float), 1.0 / length)
        u0 = lambda x: np.full_like(np.asarray(x, dtype=float), cfg.base_u)
    else:
        wavenum = TWO_PI / length
        rho0 = lambda x: (1.0 + cfg.amp_rho * np.sin(wavenum * np.asarray(x))) / length
        if cfg.profile == "counter_stream":
            u0 = lambda x: np.zeros_like(np.asarray(x, dtype=float))
        else:
            u0 = lambda x: cfg.base_u + cfg.amp_u * np.sin(wavenum * np.asarray(x))
    return rho0, u0


def auto_v_max(cfg: StudyConfig) -> float:
    """Default velocity truncation 2 (max|u0| + max rho0), widened for the
    counter-streaming profile by the stream speed."""
    if cfg.v_max > 0:
        return cfg.v_max
    rho_max = (1.0 + abs(cfg.amp_rho)) / cfg.length
    u_max = abs(cfg.base_u) + abs(cfg.amp_u)
    if cfg.profile == "counter_stream":
        u_max += abs(cfg.stream_speed)
    return 2.0 * (u_max + rho_max)


def build_initial_data(cfg: StudyConfig, epsilon: float, grid: PhaseGrid):
    """Construct the kinetic initial field and its macroscopic counterpart.

    For the sine and consensus profiles f0 is the moment-matched bar
    equilibrium of (rho0, u0), so the well-prepared functionals vanish to
    round-off (asserted here against sqrt(eps)); the counter-streaming
    profile splits the mass into two bars at +-stream_speed, which matches
    the macroscopic moments but carries excess kinetic energy by design.
    Returns (f0, U0) with U0 on the kinetic x-grid.
    """
    rho0_fn, u0_fn = _profile_functions(cfg)
    x = grid.x.centers
    rho0 = rho0_fn(x)
    rho0 = rho0 / (rho0.sum() * grid.x.dx)   # unit mass in the discrete sum
    u0 = u0_fn(x)
    U0 = MacroState(grid.x, rho0, rho0 * u0, cfg.kappa_p)
    if cfg.profile == "counter_stream":
        up = maxwellian_indicator(rho0, u0 + cfg.stream_speed, grid)
        down = maxwellian_indicator(rho0, u0 - cfg.stream_speed, grid)
        f0 = DistributionField(grid, 0.5 * (up.values + down.values))
        return f0, U0
    f0 = maxwellian_indicator(rho0, u0, grid)
    h1, h2, ok = wellprepared_check(f0, U0, epsilon)
    if h2 > 1e-13 or not ok:
        raise SimulationError(
            f"initial data is not well prepared: h1={h1:.3e}, h2={h2:.3e}")
    return f0, U0


def _restrict(fine: np.ndarray, factor: int) -> np.ndarray:
    """Conservative restriction by cell-block averaging."""
    return fine.reshape(-1, factor).mean(axis=1)


def restrict_state(state: MacroState, coarse: TorusGrid, factor: int) -> MacroState:
    return MacroState(coarse, _restrict(state.rho, factor),
                      _restrict(state.m, factor), state.kappa_p)


def run_limit_study(cfg: StudyConfig, verbose: bool = False):
    """Run the full eps sweep against one macro reference.

    Returns (records, rate_fit, details) where details holds the per-eps
    ledgers and final states for emission.  Refuses to run when the macro
    steepening monitor predicts a crossing inside the horizon.
    """
    grid = build_phase_grid(cfg.n_x, cfg.n_v, cfg.length, auto_v_max(cfg))
    snapshot_times = np.linspace(0.0, cfg.t_end, cfg.n_snapshots + 1)

    fine_grid = TorusGrid(cfg.n_x * cfg.macro_refine, cfg.length)
    rho0_fn, u0_fn = _profile_functions(cfg)
    xf = fine_grid.centers
    rho0_f = rho0_fn(xf)
    rho0_f = rho0_f / (rho0_f.sum() * fine_grid.dx)
    macro0 = MacroState(fine_grid, rho0_f, rho0_f * u0_fn(xf), cfg.kappa_p)

    crossing = shock_time_estimate(macro0)
    if crossing < cfg.t_end:
        raise SimulationError(
            f"macro steepening monitor predicts crossing at t~{crossing:.3f} "
            f"inside horizon {cfg.t_end}; shorten t_end")

    macro_weights = WeightParams(alpha=cfg.alpha, beta=cfg.beta, epsilon=1.0,
                                 length=cfg.length, regularized=False)
    macro_cfg = MacroConfig(weights=macro_weights, t_end=cfg.t_end,
                            cfl=cfg.cfl, limiter=cfg.limiter)
    macro_traj, macro_ledger = run_macro(macro0, macro_cfg,
                                         snapshot_times=snapshot_times)
    if len(macro_traj) != len(snapshot_times):
        raise SimulationError("macro trajectory missed a snapshot time")
    reference = [restrict_state(s, grid.x, cfg.macro_refine)
                 for _, s in macro_traj]

    records = []
    details = {"macro_ledger": macro_ledger, "macro_final": macro_traj[-1][1],
               "kinetic": {}}
    lam = theoretical_rate(cfg.alpha, cfg.beta)

    for eps in cfg.epsilons:
        f0, _ = build_initial_data(cfg, eps, grid)
        weights = WeightParams(alpha=cfg.alpha, beta=cfg.beta, epsilon=eps,
                               length=cfg.length, regularized=True)
        kin_cfg = KineticConfig(epsilon=eps, weights=weights, t_end=cfg.t_end,
                                cfl=cfg.cfl,
                                boundary_mass_tol=cfg.boundary_mass_tol,
                                tol_budget=cfg.tol_budget)
        trajectory, ledger = run_kinetic(f0, kin_cfg,
                                         snapshot_times=snapshot_times)
        if len(trajectory) != len(snapshot_times):
            raise SimulationError("kinetic trajectory missed a snapshot time")

        sup_e = sup_h = sup_k = 0.0
        gap_values = []
        for (t, snap), ref in zip(trajectory, reference):
            mom = compute_moments(snap)
            bar = MacroState(grid.x, mom.rho, mom.momentum, cfg.kappa_p)
            report = relative_entropy_field(bar, ref)
            if report.rel_entropy >= sup_e:
                sup_e = report.rel_entropy
                sup_h = report.h_part
                sup_k = report.kinetic_part
            gap_values.append(second_moment_gap(snap))
        gap_integral = float(_trapezoid(gap_values, snapshot_times))
        residual, _ = energy_budget(ledger, cfg.tol_budget)

        final_mom = compute_moments(trajectory[-1][1])
        ref_final = reference[-1]
        l1_rho = float(np.abs(final_mom.rho - ref_final.rho).sum()) * grid.x.dx
        l1_m = float(np.abs(final_mom.momentum - ref_final.m).sum()) * grid.x.dx
        notes = f"l1_rho={l1_rho:.6e};l1_m={l1_m:.6e}"

        records.append(ConvergenceRecord(
            epsilon=eps, sup_rel_entropy=sup_e, h_part_sup=sup_h,
            kinetic_part_sup=sup_k, gap_time_integral=gap_integral,
            energy_residual=residual, lambda_theory=lam, notes=notes))
        details["kinetic"][eps] = (ledger, trajectory[-1][1])
        if verbose:
            print(f"eps={eps:g}: sup_E={sup_e:.6e} gap={gap_integral:.6e} "
                  f"residual={residual:.2e}")

    rate = None
    if len(records) >= 3:
        rate = fit_rate([r.epsilon for r in records],
                        [r.sup_rel_entropy for r in records],
                        cfg.alpha, cfg.beta)
    return records, rate, details


def write_records_csv(records, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(ConvergenceRecord.CSV_COLUMNS) + "\n")
        for r in records:
            row = [repr(float(getattr(r, c)))
                   for c in ConvergenceRecord.CSV_COLUMNS[:-1]]
            fh.write(",".join(row) + f",{r.notes}\n")


def read_records_csv(path):
    if not os.path.exists(path):
        raise ConfigurationError(f"records file not found: {path}")
    records = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != ConvergenceRecord.CSV_COLUMNS:
            raise ConfigurationError(f"unexpected study columns in {path}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            numeric = [float(x) for x in parts[:-1]]
            records.append(ConvergenceRecord(*numeric, notes=parts[-1]))
    return records


def emit_results(records, rate: RateFit | None, details, cfg: StudyConfig,
                 out_dir) -> list:
    """Write study.csv, per-run ledgers, final snapshots, and summary.txt.

    Returns the list of paths written; I/O failures surface with the path.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def path_of(name):
        return os.path.join(out_dir, name)

    try:
        study_path = path_of("study.csv")
        write_records_csv(records, study_path)
        written.append(study_path)

        if details is not None:
            mpath = path_of("macro_ledger.csv")
            details["macro_ledger"].to_csv(mpath)
            written.append(mpath)
            final = details["macro_final"]
            tpath = path_of("macro_final.csv")
            with open(tpath, "w") as fh:
                fh.write("t,x,rho,u\n")
                u = final.velocity
                for i, x in enumerate(final.grid.centers):
                    fh.write(f"{cfg.t_end!r},{x!r},{final.rho[i]!r},{u[i]!r}\n")
            written.append(tpath)
            for eps, (ledger, snap) in details["kinetic"].items():
                lpath = path_of(f"kinetic_ledger_eps{eps:g}.csv")
                ledger.to_csv(lpath)
                written.append(lpath)
                spath = path_of(f"kinetic_final_eps{eps:g}.bin")
                save_snapshot(snap, cfg.t_end, spath)
                written.append(spath)

        summary = path_of("summary.txt")
        with open(summary, "w") as fh:
            fh.write("scaling-limit study summary\n")
            fh.write(f"alpha={cfg.alpha} beta={cfg.beta} "
                     f"lambda_theory={theoretical_rate(cfg.alpha, cfg.beta)!r}\n")
            decreasing = all(a.sup_rel_entropy > b.sup_rel_entropy
                             for a, b in zip(records, records[1:]))
            fh.write(f"sup_rel_entropy strictly decreasing in eps: "
                     f"{'PASS' if decreasing else 'FAIL'}\n")
            gaps_dec = all(a.gap_time_integral > b.gap_time_integral
                           for a, b in zip(records, records[1:]))
            fh.write(f"gap_time_integral decreasing in eps: "
                     f"{'PASS' if gaps_dec else 'FAIL'}\n")
            budgets = all(r.energy_residual <= cfg.tol_budget for r in records)
            fh.write(f"energy budgets within {cfg.tol_budget:g}: "
                     f"{'PASS' if budgets else 'FAIL'}\n")
            if rate is not None:
                fh.write(f"fitted slope = {rate.slope!r}\n")
                fh.write(f"slope >= lambda - 0.1: "
                         f"{'PASS' if rate.meets_theory else 'FAIL'}\n")
            for r in records:
                fh.write(f"eps={r.epsilon!r} sup_E={r.sup_rel_entropy!r} "
                         f"gap={r.gap_time_integral!r} "
                         f"residual={r.energy_residual!r} {r.notes}\n")
        written.append(summary)
    except OSError as exc:
        raise SimulationError(f"failed writing results to {out_dir}: {exc}") from exc
    return written
