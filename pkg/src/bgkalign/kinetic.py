"""Distribution-function storage, moments, and the equilibrium closures.

The relaxation equilibrium in one dimension is the uniform bar

    M[rho, u](v) = 1   on |v - u| <= rho / 2,

whose moments are exactly rho, rho*u and rho*u^2 + rho^3/12.  The bar is
discretized by exact cell-overlap fractions so the mass identity holds to
machine precision, and an optional correction of the two partially covered
end cells enforces the momentum identity as well.  The wider closure family
(Gaussian, compactly supported power law, indicator) is provided as static
shapes for diagnostics.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, TruncationError
from .grids import PhaseGrid, TorusGrid, VelocityGrid, build_phase_grid

# Uniform bar of height 1 carrying mass rho has half-width rho/2 in 1-D ...
SUPPORT_HALF_WIDTH = 0.5
# ... and second moment rho*u^2 + PRESSURE_CONSTANT * rho^3.
PRESSURE_CONSTANT = 1.0 / 12.0

# Below this density the bulk velocity is defined as 0 (vacuum floor).
RHO_FLOOR = 1e-12


@dataclass
class DistributionField:
    """Phase-space density sampled at cell centers, shape (n_x, n_v)."""

    grid: PhaseGrid
    values: np.ndarray

    def __post_init__(self):
        expected = (self.grid.x.n_x, self.grid.v.n_v)
        if self.values.shape != expected:
            raise ConfigurationError(
                f"values shape {self.values.shape} does not match grid {expected}")

    def copy(self) -> "DistributionField":
        return DistributionField(self.grid, self.values.copy())


@dataclass
class MomentSet:
    """Velocity moments per x-cell: density, momentum, second moment, velocity."""

    rho: np.ndarray
    momentum: np.ndarray
    second: np.ndarray
    velocity: np.ndarray


@dataclass(frozen=True)
class ClosureKind:
    """Selector for the static equilibrium family.

    name is one of "gaussian" (gamma = 1), "power_law" (gamma in (1, 3)),
    "indicator" (gamma = 3, the relaxation equilibrium in 1-D).
    """

    name: str
    gamma: float

    @classmethod
    def gaussian(cls) -> "ClosureKind":
        return cls("gaussian", 1.0)

    @classmethod
    def power_law(cls, gamma: float) -> "ClosureKind":
        if not 1.0 < gamma < 3.0:
            raise ConfigurationError(
                f"power-law closure needs gamma in (1, 3), got {gamma}")
        return cls("power_law", gamma)

    @classmethod
    def indicator(cls) -> "ClosureKind":
        return cls("indicator", 3.0)


def total_mass(f: DistributionField) -> float:
    return float(f.values.sum()) * f.grid.x.dx * f.grid.v.dv


def total_momentum(f: DistributionField) -> float:
    v = f.grid.v.centers
    return float((f.values @ v).sum()) * f.grid.x.dx * f.grid.v.dv


def compute_moments(f: DistributionField) -> MomentSet:
    """Midpoint-rule moments per x-cell, with the vacuum-floor velocity."""
    v = f.grid.v.centers
    dv = f.grid.v.dv
    rho = f.values.sum(axis=1) * dv
    mom = f.values @ v * dv
    second = f.values @ (v * v) * dv
    velocity = np.where(rho >= RHO_FLOOR, mom / np.where(rho >= RHO_FLOOR, rho, 1.0), 0.0)
    return MomentSet(rho=rho, momentum=mom, second=second, velocity=velocity)


def _overlap_fractions(lo: np.ndarray, hi: np.ndarray, vgrid: VelocityGrid) -> np.ndarray:
    """Fraction of each v-cell covered by the per-column interval [lo, hi]."""
    edges = vgrid.edges
    left = np.maximum(edges[None, :-1], lo[:, None])
    right = np.minimum(edges[None, 1:], hi[:, None])
    return np.clip(right - left, 0.0, vgrid.dv) / vgrid.dv


def maxwellian_indicator(rho: np.ndarray, u: np.ndarray, grid: PhaseGrid,
                         correct_moments: bool = True) -> DistributionField:
    """Exact-overlap discretization of the uniform-bar equilibrium.

    Each v-cell stores the fraction of it covered by [u - rho/2, u + rho/2],
    which makes the discrete mass identity exact.  With correct_moments the
    two partially covered end cells are rescaled so the momentum identity
    holds to machine precision too; the adjusted fractions stay in [0, 1]
    for any support spanning at least two cells.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if rho.shape[0] != grid.x.n_x or u.shape[0] != grid.x.n_x:
        raise ConfigurationError("rho and u must have one entry per x-cell")
    if np.any(rho < 0):
        raise ConfigurationError("density must be nonnegative")
    vg = grid.v
    half = SUPPORT_HALF_WIDTH * rho
    lo, hi = u - half, u + half
    live = rho > RHO_FLOOR
    if np.any((lo < -vg.v_max) & live) or np.any((hi > vg.v_max) & live):
        raise TruncationError("equilibrium support exits the velocity grid")

    frac = _overlap_fractions(lo, hi, vg)
    frac[~live, :] = 0.0

    if correct_moments:
        _match_bar_moments(frac, rho, u, vg, live)
    return DistributionField(grid, frac)


def _match_bar_moments(frac: np.ndarray, rho: np.ndarray, u: np.ndarray,
                       vg: VelocityGrid, live: np.ndarray) -> None:
    """Rescale the outermost covered cells so mass and momentum are exact."""
    v = vg.centers
    dv = vg.dv
    covered = frac > 0.0
    n_cov = covered.sum(axis=1)
    fixable = live & (n_cov >= 2)
    if not np.any(fixable):
        return
    rows = np.nonzero(fixable)[0]
    j_lo = covered[rows].argmax(axis=1)
    j_hi = frac.shape[1] - 1 - covered[rows, ::-1].argmax(axis=1)

    mass_def = rho[rows] / dv - frac[rows].sum(axis=1)
    mom_def = rho[rows] * u[rows] / dv - frac[rows] @ v
    v_lo, v_hi = v[j_lo], v[j_hi]
    delta_lo = (mom_def - mass_def * v_hi) / (v_lo - v_hi)
    delta_hi = mass_def - delta_lo

    new_lo = frac[rows, j_lo] + delta_lo
    new_hi = frac[rows, j_hi] + delta_hi
    valid = (new_lo >= -1e-12) & (new_lo <= 1.0 + 1e-12) & \
            (new_hi >= -1e-12) & (new_hi <= 1.0 + 1e-12)
    r_ok = rows[valid]
    frac[r_ok, j_lo[valid]] = np.clip(new_lo[valid], 0.0, 1.0)
    frac[r_ok, j_hi[valid]] = np.clip(new_hi[valid], 0.0, 1.0)
    # Degenerate columns (corrected fraction would leave [0, 1]) fall back
    # to a linear-in-v multiplicative correction over the whole support.
    for r in rows[~valid]:
        theta = frac[r]
        a0 = theta.sum() * dv
        a1 = theta @ v * dv
        a2 = theta @ (v * v) * dv
        det = a0 * a2 - a1 * a1
        if det <= 1e-300:
            if a0 > 0:
                frac[r] *= rho[r] / a0
            continue
        ca = (a2 * rho[r] - a1 * rho[r] * u[r]) / det
        cb = (a0 * rho[r] * u[r] - a1 * rho[r]) / det
        frac[r] = np.maximum(theta * (ca + cb * v), 0.0)


def equilibrium_family(kind: ClosureKind, rho: float, u: float,
                       vgrid: VelocityGrid) -> np.ndarray:
    """Sample one member of the closure family pointwise on the v-cells.

    gaussian:   rho (2 pi)^(-1/2) exp(-(v-u)^2 / 2)
    power_law:  c * ((2 g/(g-1)) rho^(g-1) - (v-u)^2)_+^(n/2),  n = 2/(g-1) - 1
    indicator:  1 on |v - u| <= rho/2
    """
    if rho < 0:
        raise ConfigurationError("density must be nonnegative")
    v = vgrid.centers
    w = v - u
    if kind.name == "gaussian":
        return rho / math.sqrt(2.0 * math.pi) * np.exp(-0.5 * w * w)
    if kind.name == "indicator":
        return np.where(np.abs(w) <= SUPPORT_HALF_WIDTH * rho, 1.0, 0.0)
    if kind.name == "power_law":
        g = kind.gamma
        n = 2.0 / (g - 1.0) - 1.0
        ratio = 2.0 * g / (g - 1.0)
        coef = ratio ** (-1.0 / (g - 1.0)) * math.gamma(g / (g - 1.0)) / (
            math.sqrt(math.pi) * math.gamma(0.5 * n + 1.0))
        radicand = np.maximum(ratio * rho ** (g - 1.0) - w * w, 0.0)
        return coef * radicand ** (0.5 * n)
    raise ConfigurationError(f"unknown closure kind {kind.name!r}")


def kinetic_energy(f: DistributionField) -> float:
    """Total kinetic energy sum of (v^2/2) f dx dv."""
    v = f.grid.v.centers
    return 0.5 * float((f.values @ (v * v)).sum()) * f.grid.x.dx * f.grid.v.dv


def column_energy(values: np.ndarray, vgrid: VelocityGrid) -> np.ndarray:
    """Per-column kinetic energy (1/2) sum v^2 f dv."""
    v = vgrid.centers
    return 0.5 * (values @ (v * v)) * vgrid.dv


def minimization_check(f: DistributionField, rtol: float = 1e-8):
    """Check that the equilibrium does not exceed the field's kinetic energy.

    Valid for fields with values in [0, 1] (the entropy class of the
    indicator closure).  Returns (lhs, rhs, ok) with lhs the energy of the
    moment-matched equilibrium and rhs the energy of f.
    """
    mom = compute_moments(f)
    m_field = maxwellian_indicator(mom.rho, mom.velocity, f.grid)
    lhs = kinetic_energy(m_field)
    rhs = kinetic_energy(f)
    return lhs, rhs, bool(lhs <= rhs + rtol * rhs)


def second_moment_gap(f: DistributionField) -> float:
    """Integral of |second moment of (M[f] - f)| over the torus, one time slice."""
    mom = compute_moments(f)
    m_field = maxwellian_indicator(mom.rho, mom.velocity, f.grid)
    v = f.grid.v.centers
    per_cell = ((m_field.values - f.values) @ (v * v)) * f.grid.v.dv
    return float(np.abs(per_cell).sum()) * f.grid.x.dx


# Snapshot format: magic "BGKA", u32 version, then little-endian
# (u64 n_x, u64 n_v, f64 length, f64 v_max, f64 time) and the field values
# as row-major float64.  The round trip is loss-free.
_SNAP_MAGIC = b"BGKA"
_SNAP_VERSION = 1
_SNAP_HEADER = struct.Struct("<4sIQQddd")


def save_snapshot(f: DistributionField, time: float, path) -> None:
    header = _SNAP_HEADER.pack(_SNAP_MAGIC, _SNAP_VERSION,
                               f.grid.x.n_x, f.grid.v.n_v,
                               f.grid.x.length, f.grid.v.v_max, time)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_snapshot(path) -> tuple[DistributionField, float]:
    with open(path, "rb") as fh:
        raw = fh.read(_SNAP_HEADER.size)
        magic, version, n_x, n_v, length, v_max, time = _SNAP_HEADER.unpack(raw)
        if magic != _SNAP_MAGIC or version != _SNAP_VERSION:
            raise ConfigurationError(f"not a snapshot file: {path}")
        data = np.frombuffer(fh.read(8 * n_x * n_v), dtype="<f8")
    grid = build_phase_grid(n_x, n_v, length, v_max)
    values = data.reshape(n_x, n_v).astype(float)
    return DistributionField(grid, values), time
