"""Singular and regularized communication weights with periodic convolutions.

The singular weight on the torus is

    phi(r) = r^(-alpha)            for r in (0, L/2],
           = (L - r)^(-alpha)      for r in (L/2, L),
           = 0                     at r = 0 (and r = L),

and its regularization replaces the wrapped distance d by
(eps^beta + d^2)^(-alpha/2), which is bounded by eps^(-alpha*beta/2) and
converges to the singular weight as eps -> 0 with the pointwise gap bound

    phi(r) - phi_eps(r) <= (alpha * eps^beta / 2) * phi_eps(r) / r^2.

Periodic convolutions against these kernels drive the alignment force and
are provided both as a direct O(N^2) sum and as a circular FFT product,
which serve as independent cross-checks of each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grids import TWO_PI, TorusGrid, periodic_distance


@dataclass(frozen=True)
class WeightParams:
    """Communication-weight configuration.

    alpha is the singularity exponent, beta the regularization exponent,
    epsilon the scaling parameter, and ``regularized`` selects the bounded
    kernel.  The gap bound requires alpha in (0, 2); the 1-D macro solver
    additionally restricts alpha < 3/2 at its own boundary.
    """

    alpha: float
    beta: float = 2.0
    epsilon: float = 1.0
    length: float = TWO_PI
    regularized: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ConfigurationError(f"alpha must be in (0, 2), got {self.alpha}")
        if not self.beta > 0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigurationError(
                f"epsilon must be in (0, 1], got {self.epsilon}")
        if not self.length > 0:
            raise ConfigurationError(f"length must be positive, got {self.length}")


def singular_weight(r, p: WeightParams):
    """Evaluate the singular weight at distances r in [0, length].

    Exactly zero at r = 0 and r = length; the periodic mirror branch is
    used beyond length/2.
    """
    r = np.asarray(r, dtype=float)
    half = 0.5 * p.length
    dist = np.where(r <= half, r, p.length - r)
    out = np.zeros_like(dist)
    pos = dist > 0
    with np.errstate(divide="ignore"):
        out[pos] = dist[pos] ** (-p.alpha)
    return out if out.ndim else float(out)


def regularized_weight(r, p: WeightParams):
    """Evaluate (eps^beta + d^2)^(-alpha/2) at the wrapped distance d."""
    d = periodic_distance(r, 0.0, p.length)
    out = (p.epsilon ** p.beta + d * d) ** (-0.5 * p.alpha)
    return out if out.ndim else float(out)


def weight_gap_check(r, p: WeightParams, slack: float = 1e-12):
    """Check the regularization gap bound at distances r > 0.

    Returns (gap, bound, ok) with gap = phi - phi_eps and
    bound = (alpha eps^beta / 2) phi_eps / d^2 at the wrapped distance d;
    ok means gap <= bound + slack everywhere.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ConfigurationError("gap bound is only defined for r > 0")
    d = periodic_distance(r, 0.0, p.length)
    phi = singular_weight(r, p)
    phi_eps = regularized_weight(r, p)
    gap = phi - phi_eps
    bound = 0.5 * p.alpha * p.epsilon ** p.beta * phi_eps / (d * d)
    ok = bool(np.all(gap <= bound + slack))
    if gap.ndim:
        return gap, bound, ok
    return float(gap), float(bound), ok


def sample_kernel(p: WeightParams, g: TorusGrid) -> np.ndarray:
    """Sample the weight at the grid offsets k*dx, wrapped periodically.

    kernel[k] is the weight at periodic distance of k cells; for the
    singular weight the diagonal entry kernel[0] is exactly 0, removing
    the singular cell from every quadrature that uses it.
    """
    offsets = np.arange(g.n_x) * g.dx
    if p.regularized:
        return regularized_weight(offsets, p)
    return singular_weight(offsets, p)


def conv_periodic(kernel: np.ndarray, values: np.ndarray, g: TorusGrid,
                  method: str = "fft") -> np.ndarray:
    """Periodic convolution out[i] = sum_k kernel[(i-k) mod N] values[k] dx.

    ``method`` selects the circular FFT product (default) or the direct
    O(N^2) sum; the two paths agree to 1e-10 relative and serve as
    mutual oracles.  ``values`` may be 1-D (length N) or 2-D with the
    convolution taken along axis 0.
    """
    kernel = np.asarray(kernel, dtype=float)
    values = np.asarray(values, dtype=float)
    n = g.n_x
    if kernel.shape[0] != n or values.shape[0] != n:
        raise ConfigurationError("kernel and values must live on the grid")
    if method == "fft":
        kf = np.fft.rfft(kernel)
        vf = np.fft.rfft(values, axis=0)
        if values.ndim > 1:
            kf = kf[:, None]
        return np.fft.irfft(kf * vf, n=n, axis=0) * g.dx
    if method == "direct":
        idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
        return kernel[idx] @ values * g.dx
    raise ConfigurationError(f"unknown convolution method {method!r}")


def kernel_matrix(p: WeightParams, g: TorusGrid) -> np.ndarray:
    """Dense pairwise weight matrix W[i, k] = weight(d(x_i, x_k)).

    The diagonal is exactly zero for the singular weight.  Used by the
    macro solver's O(N^2) difference-form source and by the direct
    dissipation cross-checks.
    """
    kern = sample_kernel(p, g)
    idx = (np.arange(g.n_x)[:, None] - np.arange(g.n_x)[None, :]) % g.n_x
    return kern[idx]
