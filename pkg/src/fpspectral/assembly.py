"""Truncated bilinear control system: shape functions, drift fields, and
coupling matrices.

A control channel j applies the drift perturbation -u_j(t) * grad(alpha_j)
to the dynamics.  In the transformed picture the channel acts through the
operator

    N[alpha] phi = div(phi * grad(alpha)) + b phi,   b = -grad(alpha).grad(V)/(2 sigma),

whose formal L2 adjoint is N*[alpha] phi = b phi - grad(alpha).grad(phi).
Projected on the truncated eigenbasis this yields, per channel,

    B_ik = <b e_i, e_k>,   A_ik = <grad(alpha).grad(e_i), e_k>,

and the state coefficients obey  da/dt = -Lam a + sum_j u_j (B^j - A^j) a.
N*[alpha] annihilates sqrt(rho_inf) pointwise, so row 0 of (B - A)
vanishes and the total-mass coefficient a_0 is conserved.

Shape design: alpha_j is chosen so that the equilibrium response
N[alpha_j] sqrt(rho_inf) equals e_j, i.e. alpha_j solves
div(rho_inf grad(alpha_j)) = sqrt(rho_inf) e_j.  Expanding
alpha_j = sum_k c_k e_k and testing the equation against e_i / sqrt(rho_inf)
under the flat measure gives the Galerkin system M c = r_j with

    M_ik = -int rho_inf grad(e_k) . grad(e_i / sqrt(rho_inf)) dx
         = -int sqrt(rho_inf) [ grad(e_k).grad(e_i)
                                + e_i (grad(V)/(2 sigma)).grad(e_k) ] dx

(the second line is the product-rule expansion actually assembled; it
avoids dividing by sqrt(rho_inf) where the density underflows) and
r_j the unit vector at mode j.  The operator kills constants, so the
ground-mode direction is excluded from the solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .eigensolver import SpectralBasis
from .exceptions import SingularSystemError
from .grid import TensorGrid
from .potentials import GibbsMeasure

#: reciprocal condition number below which the shape system is rejected
SHAPE_RCOND_MIN = 1e-12


@dataclass
class ShapeFunction:
    """Spatial control profile alpha_j targeting eigenmode ``index``."""

    index: int
    coefficients: np.ndarray
    values: np.ndarray
    grad_x: np.ndarray
    grad_y: np.ndarray
    drift: np.ndarray
    grid: TensorGrid


@dataclass
class CouplingSet:
    """Diagonal decay rates plus per-channel coupling matrices.

    ``a_mats[j]`` and ``b_mats[j]`` are the gradient- and drift-weighted
    Galerkin matrices of channel j; the forward system couples through
    ``drive[j] = b_mats[j] - a_mats[j]``.
    """

    eigenvalues: np.ndarray
    a_mats: np.ndarray
    b_mats: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def n_controls(self) -> int:
        return self.a_mats.shape[0]

    @cached_property
    def lambda_matrix(self) -> np.ndarray:
        return np.diag(self.eigenvalues)

    @cached_property
    def drive(self) -> np.ndarray:
        return self.b_mats - self.a_mats

    @cached_property
    def drive_transpose(self) -> np.ndarray:
        return np.ascontiguousarray(self.drive.transpose(0, 2, 1))


def shape_design_matrix(basis: SpectralBasis, gibbs: GibbsMeasure) -> np.ndarray:
    """Galerkin matrix M of the shape-function design equation (see module
    docstring for the assembled formula)."""
    grid = basis.grid
    n = basis.n_modes
    w = grid.weights.ravel()
    sqrt_rho = gibbs.sqrt_density.ravel()
    X, Y = grid.meshgrid()
    gvx, gvy = gibbs.potential.gradient(X, Y)
    half_grad_v = np.stack([gvx.ravel(), gvy.ravel()]) / (2.0 * gibbs.params.sigma)

    e_flat = basis.functions.reshape(-1, n)
    gx, gy = basis.gradients(gibbs)
    gx_flat = gx.reshape(-1, n)
    gy_flat = gy.reshape(-1, n)

    ws = w * sqrt_rho
    stiff = gx_flat.T @ (ws[:, None] * gx_flat) + gy_flat.T @ (ws[:, None] * gy_flat)
    advect = e_flat.T @ ((ws * half_grad_v[0])[:, None] * gx_flat
                         + (ws * half_grad_v[1])[:, None] * gy_flat)
    return -(stiff + advect)


def drift_field(grad_x: np.ndarray, grad_y: np.ndarray,
                gibbs: GibbsMeasure) -> np.ndarray:
    """b = grad(alpha) . grad(log sqrt(rho_inf)) = -grad(alpha).grad(V)/(2 sigma)."""
    X, Y = gibbs.grid.meshgrid()
    gvx, gvy = gibbs.potential.gradient(X, Y)
    return -(grad_x * gvx + grad_y * gvy) / (2.0 * gibbs.params.sigma)


def shapes_from_coefficients(coefficients: np.ndarray, basis: SpectralBasis,
                             gibbs: GibbsMeasure) -> list[ShapeFunction]:
    """Materialize shape functions (values, gradients, drift) from spectral
    coefficient rows, one shape per row."""
    n = basis.n_modes
    e_flat = basis.functions.reshape(-1, n)
    gx, gy = basis.gradients(gibbs)
    gx_flat = gx.reshape(-1, n)
    gy_flat = gy.reshape(-1, n)
    shapes = []
    for j, c in enumerate(coefficients, start=1):
        values = (e_flat @ c).reshape(basis.grid.shape)
        agx = (gx_flat @ c).reshape(basis.grid.shape)
        agy = (gy_flat @ c).reshape(basis.grid.shape)
        shapes.append(ShapeFunction(j, c.copy(), values, agx, agy,
                                    drift_field(agx, agy, gibbs), basis.grid))
    return shapes


def compute_shape_functions(basis: SpectralBasis, gibbs: GibbsMeasure,
                            n_controls: int) -> list[ShapeFunction]:
    """Design one shape function per slow mode j = 1..n_controls so the
    equilibrium control response aligns with e_j."""
    if not 1 <= n_controls <= basis.n_modes - 1:
        raise ValueError("n_controls must lie in [1, n_modes - 1]")
    m_full = shape_design_matrix(basis, gibbs)
    m_red = m_full[1:, 1:]
    rcond = 1.0 / np.linalg.cond(m_red, p=1)
    if not np.isfinite(rcond) or rcond < SHAPE_RCOND_MIN:
        raise SingularSystemError(
            f"shape design system has reciprocal condition {rcond:.2e} "
            f"(< {SHAPE_RCOND_MIN:.0e})")
    lu = lu_factor(m_red)
    coefficients = np.zeros((n_controls, basis.n_modes))
    for j in range(1, n_controls + 1):
        rhs = np.zeros(basis.n_modes - 1)
        rhs[j - 1] = 1.0
        coefficients[j - 1, 1:] = lu_solve(lu, rhs)
    return shapes_from_coefficients(coefficients, basis, gibbs)


def apply_drive(shape: ShapeFunction, phi: np.ndarray) -> np.ndarray:
    """Grid action N[alpha] phi = div(phi grad(alpha)) + b phi, with the
    divergence differenced on the product (conservative form)."""
    grid = shape.grid
    div_x = np.gradient(phi * shape.grad_x, grid.hx, axis=0)
    div_y = np.gradient(phi * shape.grad_y, grid.hy, axis=1)
    return div_x + div_y + shape.drift * phi


def apply_drive_adjoint(shape: ShapeFunction, chi: np.ndarray) -> np.ndarray:
    """Grid action of the formal adjoint, N*[alpha] chi = b chi - grad(alpha).grad(chi)."""
    grid = shape.grid
    cx, cy = grid.gradient(chi)
    return shape.drift * chi - shape.grad_x * cx - shape.grad_y * cy


def assemble_couplings(basis: SpectralBasis, shapes: list[ShapeFunction],
                       gibbs: GibbsMeasure) -> CouplingSet:
    """Trapezoid-quadrature coupling matrices for every control channel:
    B_ik = <b e_i, e_k>, A_ik = <grad(alpha).grad(e_i), e_k>."""
    grid = basis.grid
    n = basis.n_modes
    w = grid.weights.ravel()
    e_flat = basis.functions.reshape(-1, n)
    gx, gy = basis.gradients(gibbs)
    gx_flat = gx.reshape(-1, n)
    gy_flat = gy.reshape(-1, n)

    a_mats = np.empty((len(shapes), n, n))
    b_mats = np.empty((len(shapes), n, n))
    for j, shape in enumerate(shapes):
        wb = w * shape.drift.ravel()
        b_mats[j] = e_flat.T @ (wb[:, None] * e_flat)
        dotted = ((w * shape.grad_x.ravel())[:, None] * gx_flat
                  + (w * shape.grad_y.ravel())[:, None] * gy_flat)
        a_mats[j] = dotted.T @ e_flat
    provenance = {"grid_shape": grid.shape, "hx": grid.hx, "hy": grid.hy,
                  "quadrature": "trapezoid"}
    return CouplingSet(basis.eigenvalues.copy(), a_mats, b_mats, provenance)


def project_state(psi_values: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    """Coefficients a_k = <psi, e_k> under trapezoid quadrature."""
    w = basis.grid.weights.ravel()
    return basis.functions.reshape(-1, basis.n_modes).T @ (w * psi_values.ravel())


def reconstruct_density(a: np.ndarray, basis: SpectralBasis,
                        gibbs: GibbsMeasure) -> np.ndarray:
    """Density rho = sqrt(rho_inf) * sum_k a_k e_k on the grid."""
    psi = basis.functions.reshape(-1, len(a)) @ a
    return gibbs.sqrt_density * psi.reshape(basis.grid.shape)


def gaussian_initial_coefficients(basis: SpectralBasis, gibbs: GibbsMeasure,
                                  center: tuple[float, float],
                                  variances: tuple[float, float]) -> np.ndarray:
    """Spectral coefficients of a Gaussian bump truncated to the domain box.

    The bump is normalized to unit mass on the box, transformed by
    1/sqrt(rho_inf) (computed in log space so the density underflow near
    the boundary never divides), projected, and finally rescaled so the
    mass coefficient a_0 equals 1 exactly.
    """
    grid = basis.grid
    X, Y = grid.meshgrid()
    log_bump = (-(X - center[0]) ** 2 / (2.0 * variances[0])
                - (Y - center[1]) ** 2 / (2.0 * variances[1]))
    mass = grid.integrate(np.exp(log_bump))
    v_half = gibbs.potential.value(X, Y) / (2.0 * gibbs.params.sigma)
    exponent = log_bump + v_half - np.log(mass) - 0.5 * np.log(gibbs.partition)
    if exponent.max() > 200.0:
        raise ValueError(
            "initial Gaussian is too wide for this domain box: rho0/sqrt(rho_inf) "
            f"overflows (max exponent {exponent.max():.1f})")
    psi0 = np.exp(exponent)
    a = project_state(psi0, basis)
    return a / a[0]


def export_matrices(coupling: CouplingSet, directory) -> list[Path]:
    """Plain-text dump of the coupling data, one matrix per file, row-major,
    with a short descriptive header."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []

    def dump(name: str, mat: np.ndarray, description: str) -> None:
        path = directory / f"{name}.txt"
        header = (f"{description}\nshape: {mat.shape[0]} x {mat.shape[1]}, "
                  "row-major, whitespace-separated")
        np.savetxt(path, mat, header=header)
        paths.append(path)

    dump("lambda", coupling.lambda_matrix, "diagonal decay-rate matrix")
    for j in range(coupling.n_controls):
        dump(f"A_{j + 1}", coupling.a_mats[j],
             f"gradient coupling matrix of control channel {j + 1}")
        dump(f"B_{j + 1}", coupling.b_mats[j],
             f"drift coupling matrix of control channel {j + 1}")
    return paths
