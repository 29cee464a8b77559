"""Modulated-energy functionals and the inequality checkers built on them.

For the cubic pressure law p(rho) = kappa_p rho^3 the Bregman gap of the
pressure energy between a trial density and a reference density is

    H(rho_bar | rho) = kappa_p (rho_bar^3 - rho^3 + 3 (rho - rho_bar) rho^2) / 2,

nonnegative by convexity, zero only at rho_bar = rho, and bounded below by
(1/2) rho (rho_bar - rho)^2 at kappa_p = 1.  The modulated energy between
two hydrodynamic states adds the kinetic gap:

    E(U_bar | U) = rho_bar |u_bar - u|^2 / 2 + H(rho_bar | rho).

The scaling-parameter sweep is summarized by a log-log least-squares slope
of sup_t integral(E) against eps, compared with the closed-form theoretical
rate min{1/2, beta/2, alpha*beta/4, alpha*beta/(2(alpha+2))}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .kinetic import DistributionField, compute_moments, kinetic_energy
from .macro import MacroState, free_energy


@dataclass
class EntropyReport:
    """Integrated modulated energy and its split at one time."""

    rel_entropy: float
    h_part: float
    kinetic_part: float
    lower_bound_margin: float
    time: float


@dataclass
class RateFit:
    """Least-squares slope of a scaling sweep against the theoretical rate."""

    epsilons: np.ndarray
    values: np.ndarray
    slope: float
    lambda_theory: float
    meets_theory: bool


def theoretical_rate(alpha: float, beta: float) -> float:
    """Closed-form convergence exponent of the scaling-limit theorem."""
    return min(0.5, beta / 2.0, alpha * beta / 4.0,
               alpha * beta / (2.0 * (alpha + 2.0)))


def pressure_entropy_h(rho_bar, rho, kappa_p: float = 1.0):
    """Bregman gap of the pressure energy; nonnegative, vectorized."""
    rho_bar = np.asarray(rho_bar, dtype=float)
    rho = np.asarray(rho, dtype=float)
    val = 0.5 * kappa_p * (rho_bar ** 3 - rho ** 3 + 3.0 * (rho - rho_bar) * rho ** 2)
    return val if val.ndim else float(val)


def relative_entropy_field(bar: MacroState, ref: MacroState) -> EntropyReport:
    """Integrated modulated energy of ``bar`` relative to ``ref``.

    Both states must share the grid; the pressure part uses the reference
    state's kappa_p.  The lower-bound margin records how far the kappa_p = 1
    pressure part sits above (1/2) integral rho (rho_bar - rho)^2.
    """
    if bar.grid.n_x != ref.grid.n_x or bar.grid.length != ref.grid.length:
        raise ConfigurationError("states live on different grids")
    dx = ref.grid.dx
    du = bar.velocity - ref.velocity
    kinetic_part = float((0.5 * bar.rho * du * du).sum()) * dx
    h_cells = pressure_entropy_h(bar.rho, ref.rho, ref.kappa_p)
    h_part = float(h_cells.sum()) * dx
    h_unit = pressure_entropy_h(bar.rho, ref.rho, 1.0)
    margin = float((h_unit - 0.5 * ref.rho * (bar.rho - ref.rho) ** 2).sum()) * dx
    return EntropyReport(rel_entropy=kinetic_part + h_part,
                         h_part=h_part, kinetic_part=kinetic_part,
                         lower_bound_margin=margin, time=0.0)


def relative_flux(bar: MacroState, ref: MacroState) -> np.ndarray:
    """Per-cell relative flux rho_bar (u_bar - u)^2 + 2 H(rho_bar | rho)."""
    if bar.grid.n_x != ref.grid.n_x:
        raise ConfigurationError("states live on different grids")
    du = bar.velocity - ref.velocity
    return bar.rho * du * du + 2.0 * pressure_entropy_h(bar.rho, ref.rho,
                                                        ref.kappa_p)


def lower_bound_gap(bar: MacroState, ref: MacroState, slack: float = 1e-12):
    """Check integral H(rho_bar|rho) >= (1/2) integral rho (rho_bar - rho)^2
    (1-D lower bound, kappa_p = 1 normalization).  Returns (lhs, rhs, ok)."""
    dx = ref.grid.dx
    lhs = float(pressure_entropy_h(bar.rho, ref.rho, 1.0).sum()) * dx
    rhs = 0.5 * float((ref.rho * (bar.rho - ref.rho) ** 2).sum()) * dx
    return lhs, rhs, bool(lhs >= rhs - slack)


def wellprepared_check(f0: DistributionField, U0: MacroState, epsilon: float,
                       c_tol: float = 1.0):
    """Evaluate the two well-prepared-data functionals against c_tol*sqrt(eps).

    h1 compares the kinetic energy of f0 with the macro free energy of U0
    (kappa_p convention of U0); h2 is the modulated energy between the
    moments of f0 and U0.  Returns (h1, h2, ok).
    """
    h1 = kinetic_energy(f0) - free_energy(U0)
    mom = compute_moments(f0)
    bar = MacroState(U0.grid, mom.rho, mom.momentum, U0.kappa_p)
    h2 = relative_entropy_field(bar, U0).rel_entropy
    thresh = c_tol * np.sqrt(epsilon)
    return h1, h2, bool(h1 <= thresh and h2 <= thresh)


def energy_budget(ledger, tol: float = 1e-3):
    """Audit E(t) + D_relax(t) + D_align(t) <= E(0) (1 + tol) over a ledger.

    The ledger is any object with arrays/lists ``energy``, ``d_relax_cum``
    and ``d_align_cum``.  Returns (residual, ok) with the worst relative
    excess over the run.
    """
    energy = np.asarray(ledger.energy, dtype=float)
    d_relax = np.asarray(ledger.d_relax_cum, dtype=float)
    d_align = np.asarray(ledger.d_align_cum, dtype=float)
    if energy.size == 0:
        raise ConfigurationError("empty ledger")
    e0 = energy[0]
    if e0 <= 0:
        return 0.0, True
    residual = float(np.max((energy + d_relax + d_align - e0) / e0))
    return residual, bool(residual <= tol)


def fit_rate(epsilons, values, alpha: float, beta: float,
             margin: float = 0.1) -> RateFit:
    """Log-log least-squares slope of ``values`` against ``epsilons``.

    Needs at least three distinct scaling parameters; records whether the
    fitted slope clears the theoretical rate minus ``margin``.
    """
    eps = np.asarray(epsilons, dtype=float)
    val = np.asarray(values, dtype=float)
    if eps.size < 3 or np.unique(eps).size < 3:
        raise ConfigurationError("rate fit needs at least 3 distinct epsilons")
    if np.any(eps <= 0) or np.any(val <= 0):
        raise ConfigurationError("rate fit needs positive epsilons and values")
    slope = float(np.polyfit(np.log(eps), np.log(val), 1)[0])
    lam = theoretical_rate(alpha, beta)
    return RateFit(epsilons=eps, values=val, slope=slope, lambda_theory=lam,
                   meets_theory=bool(slope >= lam - margin))
