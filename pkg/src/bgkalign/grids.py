"""Periodic physical grid and truncated velocity grid (1-D phase space).

The physical domain is a torus of circumference ``length`` discretized by
cell-centered midpoints; the velocity domain is the symmetric interval
``[-v_max, v_max]``.  Midpoint sums over the torus are spectrally accurate
for smooth periodic integrands, and the cell-centered layout makes the
conservative updates of the solvers telescope exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TorusGrid:
    """Uniform cell-centered grid on a torus of the given circumference."""

    n_x: int
    length: float = TWO_PI

    def __post_init__(self):
        if self.n_x < 1:
            raise ConfigurationError(f"n_x must be positive, got {self.n_x}")
        if not self.length > 0:
            raise ConfigurationError(f"length must be positive, got {self.length}")

    @property
    def dx(self) -> float:
        return self.length / self.n_x

    @cached_property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_x) + 0.5) * self.dx


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform cell-centered grid on [-v_max, v_max], symmetric about 0."""

    n_v: int
    v_max: float

    def __post_init__(self):
        if self.n_v < 1:
            raise ConfigurationError(f"n_v must be positive, got {self.n_v}")
        if not self.v_max > 0:
            raise ConfigurationError(f"v_max must be positive, got {self.v_max}")

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / self.n_v

    @cached_property
    def centers(self) -> np.ndarray:
        # Symmetric construction: centers[n-1-j] == -centers[j] exactly in
        # floating point, which keeps parity-symmetric data exactly symmetric.
        half_offsets = np.arange(self.n_v) - (self.n_v - 1) / 2.0
        return half_offsets * self.dv

    @cached_property
    def edges(self) -> np.ndarray:
        return -self.v_max + np.arange(self.n_v + 1) * self.dv


@dataclass(frozen=True)
class PhaseGrid:
    x: TorusGrid
    v: VelocityGrid


def build_phase_grid(n_x: int, n_v: int, length: float = TWO_PI,
                     v_max: float = 1.0) -> PhaseGrid:
    """Build the phase-space grid, rejecting degenerate sizes.

    Requires n_x >= 4 and n_v >= 4 so that reconstruction stencils and
    overlap constructions are well defined.
    """
    if n_x < 4 or n_v < 4:
        raise ConfigurationError(
            f"grid sizes must be >= 4, got n_x={n_x}, n_v={n_v}")
    if not length > 0 or not v_max > 0:
        raise ConfigurationError(
            f"length and v_max must be positive, got {length}, {v_max}")
    return PhaseGrid(x=TorusGrid(n_x, length), v=VelocityGrid(n_v, v_max))


def periodic_distance(a, b, length: float):
    """Shortest distance between points a and b on a torus of given length.

    Accepts scalars or arrays; the result lies in [0, length/2].
    """
    if not length > 0:
        raise ConfigurationError(f"length must be positive, got {length}")
    r = np.abs(np.asarray(a, dtype=float) - b) % length
    return np.minimum(r, length - r)
