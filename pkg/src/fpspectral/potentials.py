"""Confining potentials, the ground-state transformed potential, and the
Gibbs stationary density.

The overdamped dynamics dX = -grad(V) dt + sqrt(2*sigma) dW relaxes to the
stationary density rho_inf = exp(-V/sigma)/Z.  The similarity transform
psi = rho / sqrt(rho_inf) turns the density evolution into imaginary-time
dynamics under the Schrodinger-type operator -sigma*Lap + W with

    W = |grad V|^2 / (4 sigma) - Lap(V) / 2.

Both built-in potentials expose exact analytic gradients and Laplacians so
W never has to be differenced numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NonConfiningError
from .grid import TensorGrid


@dataclass(frozen=True)
class DiffusionParams:
    """Scalar diffusion coefficient of the dynamics."""

    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


class Potential:
    """Base class for smooth confining potentials on R^2.

    Subclasses provide ``value``, ``gradient`` and ``laplacian`` as exact
    vectorized formulas.  User-defined potentials plug in by subclassing.
    """

    name = "custom"

    def value(self, x, y):
        raise NotImplementedError

    def gradient(self, x, y):
        raise NotImplementedError

    def laplacian(self, x, y):
        raise NotImplementedError

    def __call__(self, x, y):
        return self.value(x, y)


@dataclass(frozen=True)
class QuadraticPotential(Potential):
    """V(x, y) = (a x^2 + b y^2) / 2 with a, b > 0.

    The stationary density is a centered Gaussian with diagonal covariance
    (sigma/a, sigma/b); small b gives an ill-conditioned slow direction.
    """

    a: float = 1.0
    b: float = 1.0
    name = "quadratic"

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("curvatures a, b must be positive")

    def value(self, x, y):
        return 0.5 * (self.a * np.asarray(x) ** 2 + self.b * np.asarray(y) ** 2)

    def gradient(self, x, y):
        return self.a * np.asarray(x), self.b * np.asarray(y)

    def laplacian(self, x, y):
        return np.broadcast_to(self.a + self.b, np.broadcast_shapes(
            np.shape(x), np.shape(y))).copy()


@dataclass(frozen=True)
class DoubleWellPotential(Potential):
    """V(x, y) = (x^2 - c_x)^2 + (y^2 - c_y)^2 with c_x, c_y > 0.

    Four minima at (+-sqrt(c_x), +-sqrt(c_y)); mass hops between wells on
    the slow time scale set by the barrier heights c_x^2, c_y^2.
    """

    c_x: float = 1.0
    c_y: float = 1.0
    name = "double_well"

    def __post_init__(self):
        if self.c_x <= 0 or self.c_y <= 0:
            raise ValueError("well offsets c_x, c_y must be positive")

    def value(self, x, y):
        return (np.asarray(x) ** 2 - self.c_x) ** 2 + (np.asarray(y) ** 2 - self.c_y) ** 2

    def gradient(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        return 4.0 * x * (x**2 - self.c_x), 4.0 * y * (y**2 - self.c_y)

    def laplacian(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        return (12.0 * x**2 - 4.0 * self.c_x) + (12.0 * y**2 - 4.0 * self.c_y)


def transformed_potential(potential: Potential, params: DiffusionParams, x, y):
    """W = |grad V|^2/(4 sigma) - Lap(V)/2, the confining well of the
    transformed generator."""
    gx, gy = potential.gradient(x, y)
    return (gx**2 + gy**2) / (4.0 * params.sigma) - 0.5 * potential.laplacian(x, y)


def partition_function(potential: Potential, params: DiffusionParams,
                       grid: TensorGrid, boundary_tol: float = 1e-8) -> float:
    """Normalization Z = integral of exp(-V/sigma) by composite trapezoid.

    Raises NonConfiningError when the Boltzmann factor has not decayed below
    ``boundary_tol`` (relative to its maximum) on the grid boundary, i.e.
    the box truncates visible mass.
    """
    X, Y = grid.meshgrid()
    boltzmann = np.exp(-potential.value(X, Y) / params.sigma)
    peak = float(boltzmann.max())
    edge = max(boltzmann[0, :].max(), boltzmann[-1, :].max(),
               boltzmann[:, 0].max(), boltzmann[:, -1].max())
    if edge > boundary_tol * peak:
        raise NonConfiningError(
            f"Boltzmann factor at the boundary is {edge / peak:.2e} of its peak "
            f"(tolerance {boundary_tol:.1e}); enlarge the domain box")
    z = grid.integrate(boltzmann)
    if not np.isfinite(z) or z <= 0:
        raise NonConfiningError("partition integral is not positive and finite")
    return float(z)


@dataclass(frozen=True)
class GibbsMeasure:
    """Stationary density rho_inf = exp(-V/sigma)/Z sampled on a grid.

    ``density`` and ``sqrt_density`` are grid arrays normalized so the
    trapezoid integral of ``density`` equals 1 exactly (the same quadrature
    is used everywhere downstream, keeping discrete mass self-consistent).
    """

    potential: Potential
    params: DiffusionParams
    grid: TensorGrid
    partition: float
    density: np.ndarray
    sqrt_density: np.ndarray

    @classmethod
    def build(cls, potential: Potential, params: DiffusionParams,
              grid: TensorGrid, boundary_tol: float = 1e-8) -> "GibbsMeasure":
        z = partition_function(potential, params, grid, boundary_tol)
        X, Y = grid.meshgrid()
        density = np.exp(-potential.value(X, Y) / params.sigma) / z
        return cls(potential, params, grid, z, density, np.sqrt(density))

    def density_at(self, x, y):
        """Pointwise stationary density at arbitrary coordinates."""
        return np.exp(-self.potential.value(x, y) / self.params.sigma) / self.partition

    def log_sqrt_density_gradient(self, x, y):
        """grad log sqrt(rho_inf) = -grad(V)/(2 sigma), exact."""
        gx, gy = self.potential.gradient(x, y)
        s = -0.5 / self.params.sigma
        return s * gx, s * gy
