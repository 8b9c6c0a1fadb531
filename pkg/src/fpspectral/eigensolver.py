"""Discretization and eigensolve of the transformed generator
H = -sigma*Lap + W on a truncated box with Dirichlet boundary conditions.

The eigensolve is a black box behind ``solve_smallest_eigenpairs``: any
method producing the N smallest eigenpairs can be substituted.  The default
is a sparse finite-difference operator (2nd- or 4th-order cross stencil)
with shift-invert Lanczos, plus a dense fallback on small grids.

Conventions fixed here and relied on everywhere else:
  * eigenvalues sorted nondecreasing, lambda_0 = 0 for the ground mode;
  * eigenvectors normalized under trapezoid quadrature, sign-fixed so the
    entry of largest magnitude is positive;
  * near-degenerate clusters ordered by lexicographic comparison of the
    sign-fixed grid values (determinism, not physics);
  * the computed ground mode is replaced by the sampled sqrt(rho_inf) and
    the rest re-orthonormalized against it, so the equilibrium coefficient
    vector is exactly (1, 0, ..., 0).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .exceptions import NonConfiningError, NoConvergenceError
from .grid import TensorGrid
from .potentials import DiffusionParams, GibbsMeasure, Potential, transformed_potential

#: relative gap below which two eigenvalues are treated as degenerate
DEGENERACY_RTOL = 1e-6

_CACHE_FORMAT_VERSION = 1


def build_domain(potential: Potential, params: DiffusionParams,
                 threshold: float = 1e-12, resolution: int = 201,
                 pad: float = 1.0, round_to: float = 0.1,
                 max_halfwidth: float = 1e3) -> TensorGrid:
    """Smallest origin-symmetric box with exp(-V/sigma) < threshold on its
    boundary, optionally padded, with half-widths rounded up to ``round_to``.

    ``pad`` > 1 enlarges the box beyond the density-truncation minimum; the
    excited eigenfunctions kept in a basis spread wider than sqrt(rho_inf),
    so production runs pad the box to keep their Dirichlet error small.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    energy_cut = params.sigma * np.log(1.0 / threshold)

    def min_along_edge(axis: int, half: float, other_half: float) -> float:
        t = np.linspace(-other_half, other_half, 801)
        if axis == 0:
            return float(np.minimum(potential.value(half, t),
                                    potential.value(-half, t)).min())
        return float(np.minimum(potential.value(t, half),
                                potential.value(t, -half)).min())

    def smallest_half(axis: int, other_half: float) -> float:
        lo, hi = 1e-3, 1.0
        while min_along_edge(axis, hi, other_half) < energy_cut:
            lo, hi = hi, 2.0 * hi
            if hi > max_halfwidth:
                raise NonConfiningError(
                    f"no box with half-width <= {max_halfwidth} reaches the "
                    f"density threshold {threshold:.1e}")
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if min_along_edge(axis, mid, other_half) < energy_cut:
                lo = mid
            else:
                hi = mid
        return hi

    half_x = half_y = 1.0
    for _ in range(4):
        half_x = smallest_half(0, half_y)
        half_y = smallest_half(1, half_x)

    half_x = np.ceil(half_x * pad / round_to) * round_to
    half_y = np.ceil(half_y * pad / round_to) * round_to
    grid = TensorGrid(-half_x, half_x, -half_y, half_y, resolution, resolution)

    X, Y = grid.meshgrid()
    w_vals = transformed_potential(potential, params, X, Y)
    if float(w_vals[grid.boundary_mask()].min()) <= 0.0:
        raise NonConfiningError(
            "transformed potential W is not positive on the boundary; "
            "the box is too small for a confining spectral problem")
    return grid


def _second_derivative_1d(n: int, h: float, order: int) -> sp.spmatrix:
    """-d^2/dx^2 on n interior points, zero Dirichlet extension."""
    if order == 2:
        return sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n)) / h**2
    if order == 4:
        return sp.diags([1 / 12, -4 / 3, 5 / 2, -4 / 3, 1 / 12],
                        [-2, -1, 0, 1, 2], shape=(n, n)) / h**2
    raise ValueError("stencil order must be 2 or 4")


def assemble_hamiltonian(grid: TensorGrid, potential: Potential,
                         params: DiffusionParams, order: int = 2) -> sp.csr_matrix:
    """Sparse symmetric operator sigma*(-Lap) + W on the interior nodes.

    Dirichlet rows are eliminated: values outside the interior block are
    treated as zero, which is consistent with eigenfunctions that decay
    well before the boundary.  Interior ordering is row-major in (x, y).
    """
    nx, ny = grid.nx - 2, grid.ny - 2
    dxx = _second_derivative_1d(nx, grid.hx, order)
    dyy = _second_derivative_1d(ny, grid.hy, order)
    lap = sp.kron(dxx, sp.identity(ny)) + sp.kron(sp.identity(nx), dyy)
    X, Y = np.meshgrid(grid.x[1:-1], grid.y[1:-1], indexing="ij")
    w = transformed_potential(potential, params, X, Y).ravel()
    return (params.sigma * lap + sp.diags(w)).tocsr()


@dataclass
class SpectralBasis:
    """N smallest eigenpairs of the transformed generator on a tensor grid.

    ``functions`` has shape (nx, ny, N) and is orthonormal under the grid's
    trapezoid weights.  ``ground_exact`` records whether mode 0 was replaced
    by the sampled sqrt(rho_inf).
    """

    grid: TensorGrid
    eigenvalues: np.ndarray
    functions: np.ndarray
    ground_exact: bool = False
    residuals: np.ndarray | None = None
    _gradients: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    def gradients(self, gibbs: GibbsMeasure | None = None):
        """Finite-difference gradients (gx, gy) of all modes, shape like
        ``functions``.

        When ``gibbs`` is given and the ground mode is the exact
        sqrt(rho_inf), its gradient uses the analytic formula
        -sqrt(rho_inf) * grad(V) / (2 sigma): the drift couplings then
        annihilate the equilibrium direction to machine precision, which
        is what keeps the total-mass coefficient exactly conserved.
        """
        if self._gradients is None:
            gx = np.empty_like(self.functions)
            gy = np.empty_like(self.functions)
            for k in range(self.n_modes):
                gx[:, :, k], gy[:, :, k] = self.grid.gradient(self.functions[:, :, k])
            if gibbs is not None and self.ground_exact:
                X, Y = self.grid.meshgrid()
                lx, ly = gibbs.log_sqrt_density_gradient(X, Y)
                gx[:, :, 0] = self.functions[:, :, 0] * lx
                gy[:, :, 0] = self.functions[:, :, 0] * ly
            self._gradients = (gx, gy)
        return self._gradients


def _sign_fix(vec: np.ndarray) -> np.ndarray:
    flat = vec.ravel()
    if flat[np.argmax(np.abs(flat))] < 0:
        return -vec
    return vec


def _order_degenerate(eigenvalues: np.ndarray, columns: list[np.ndarray]):
    """Stable ordering: nondecreasing eigenvalues; inside near-degenerate
    clusters, lexicographic comparison of the sign-fixed grid values."""
    n = len(eigenvalues)
    order = list(np.argsort(eigenvalues, kind="stable"))
    lams = eigenvalues[order]
    out: list[int] = []
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and abs(lams[stop] - lams[start]) < DEGENERACY_RTOL * (1 + abs(lams[start])):
            stop += 1
        cluster = order[start:stop]
        if len(cluster) > 1:
            cluster = sorted(cluster, key=lambda i: tuple(columns[i].ravel()))
        out.extend(cluster)
        start = stop
    return out


def _orthonormalize(columns: list[np.ndarray], weights: np.ndarray):
    """Modified Gram-Schmidt under trapezoid weights, in place."""
    for k, vk in enumerate(columns):
        for prev in columns[:k]:
            vk -= np.sum(weights * prev * vk) * prev
        nrm = np.sqrt(np.sum(weights * vk * vk))
        vk /= nrm


def solve_smallest_eigenpairs(operator: sp.spmatrix, grid: TensorGrid,
                              n_modes: int, gibbs: GibbsMeasure | None = None,
                              tol: float = 1e-8,
                              dense_cutoff: int = 4096) -> SpectralBasis:
    """N smallest eigenpairs of the assembled operator.

    Iterative shift-invert Lanczos with a deterministic start vector;
    dense solve when the interior has at most ``dense_cutoff`` nodes.
    Raises NoConvergenceError with residual diagnostics on failure.
    """
    n_int = operator.shape[0]
    if n_modes > n_int // 10:
        raise ValueError(f"n_modes={n_modes} exceeds a tenth of the "
                         f"{n_int} interior nodes; refine the grid")

    if n_int <= dense_cutoff:
        vals, vecs = eigh(operator.toarray(), subset_by_index=(0, n_modes - 1))
    else:
        rng = np.random.Generator(np.random.Philox(key=0x5EED))
        v0 = rng.standard_normal(n_int)
        try:
            vals, vecs = eigsh(operator, k=n_modes, sigma=-1.0, which="LM", v0=v0)
        except ArpackNoConvergence as exc:
            raise NoConvergenceError(
                f"eigensolver converged only {len(exc.eigenvalues)} of "
                f"{n_modes} requested pairs", history=list(exc.eigenvalues)) from exc

    op_scale = float(np.abs(operator).sum(axis=1).max())
    res = np.linalg.norm(operator @ vecs - vecs * vals, axis=0) / np.linalg.norm(vecs, axis=0)
    if np.any(res > tol * op_scale):
        raise NoConvergenceError(
            f"max eigen-residual {res.max():.2e} exceeds {tol:.1e} * ||H|| = "
            f"{tol * op_scale:.2e}", history=list(res))

    # embed interior eigenvectors on the full grid, normalize, fix signs
    nx, ny = grid.shape
    weights = grid.weights
    columns = []
    for k in range(n_modes):
        full = np.zeros((nx, ny))
        full[1:-1, 1:-1] = vecs[:, k].reshape(nx - 2, ny - 2)
        full /= np.sqrt(np.sum(weights * full * full))
        columns.append(_sign_fix(full))

    order = _order_degenerate(vals, columns)
    eigenvalues = vals[order].astype(float).copy()
    columns = [columns[i] for i in order]
    residuals = res[order].copy()

    ground_exact = False
    if gibbs is not None:
        ground = gibbs.sqrt_density.copy()
        ground /= np.sqrt(np.sum(weights * ground * ground))
        columns[0] = ground
        eigenvalues[0] = 0.0
        ground_exact = True
    _orthonormalize(columns, weights)

    functions = np.stack(columns, axis=-1)
    return SpectralBasis(grid, eigenvalues, functions,
                         ground_exact=ground_exact, residuals=residuals)


def solve_basis(potential: Potential, params: DiffusionParams, grid: TensorGrid,
                n_modes: int, order: int = 4, gibbs: GibbsMeasure | None = None,
                tol: float = 1e-8) -> SpectralBasis:
    """Assemble the operator and solve for the N smallest eigenpairs."""
    if gibbs is None:
        gibbs = GibbsMeasure.build(potential, params, grid)
    operator = assemble_hamiltonian(grid, potential, params, order=order)
    return solve_smallest_eigenpairs(operator, grid, n_modes, gibbs=gibbs, tol=tol)


def hermite_functions(n_max: int, xi: np.ndarray) -> np.ndarray:
    """Orthonormal Hermite functions h_0..h_{n_max-1} sampled at xi,
    shape (len(xi), n_max).  Stable normalized three-term recurrence."""
    out = np.empty((len(xi), n_max))
    out[:, 0] = np.pi ** -0.25 * np.exp(-0.5 * xi**2)
    if n_max > 1:
        out[:, 1] = np.sqrt(2.0) * xi * out[:, 0]
    for n in range(1, n_max - 1):
        out[:, n + 1] = (np.sqrt(2.0 / (n + 1)) * xi * out[:, n]
                         - np.sqrt(n / (n + 1)) * out[:, n - 1])
    return out


def analytic_quadratic_basis(a: float, b: float, sigma: float, n_modes: int,
                             grid: TensorGrid) -> SpectralBasis:
    """Closed-form eigenbasis for the quadratic potential, sampled on the
    grid: tensor Hermite functions with eigenvalues a*n + b*m, sorted and
    sign-fixed with the same conventions as the numerical path.

    Serves as the exact oracle for eigensolver validation.
    """
    # enough 1D levels per axis to cover the n_modes smallest sums
    lam_cut = 0.0
    while True:
        lam_cut += min(a, b)
        count = sum(1 for n in range(int(lam_cut / a) + 1)
                    for m in range(int((lam_cut - a * n) / b) + 1)
                    if a * n + b * m <= lam_cut + 1e-12)
        if count >= n_modes + 4:
            break
    pairs = [(n, m) for n in range(int(lam_cut / a) + 1)
             for m in range(int((lam_cut - a * n) / b) + 1)
             if a * n + b * m <= lam_cut + 1e-12]

    sx = np.sqrt(2.0 * sigma / a)
    sy = np.sqrt(2.0 * sigma / b)
    n_top = max(p[0] for p in pairs) + 1
    m_top = max(p[1] for p in pairs) + 1
    hx = hermite_functions(n_top, grid.x / sx) / np.sqrt(sx)
    hy = hermite_functions(m_top, grid.y / sy) / np.sqrt(sy)

    lams = np.array([a * n + b * m for n, m in pairs])
    keep = np.argsort(lams, kind="stable")[:n_modes + 4]
    columns = [_sign_fix(np.outer(hx[:, pairs[i][0]], hy[:, pairs[i][1]]))
               for i in keep]
    lams = lams[keep]
    order = _order_degenerate(lams, columns)[:n_modes]
    functions = np.stack([columns[i] for i in order], axis=-1)
    return SpectralBasis(grid, lams[order].copy(), functions, ground_exact=True)


def _cache_key_hash(key: dict) -> str:
    canon = json.dumps(key, sort_keys=True, default=float)
    return hashlib.sha256(canon.encode()).hexdigest()[:24]


def save_basis(path, basis: SpectralBasis, key: dict) -> None:
    """Persist a basis keyed by the full build recipe (potential, sigma,
    grid, mode count, solver settings)."""
    np.savez_compressed(
        path,
        format_version=_CACHE_FORMAT_VERSION,
        key_hash=_cache_key_hash(key),
        key_json=json.dumps(key, sort_keys=True, default=float),
        box=np.array([basis.grid.x_lo, basis.grid.x_hi,
                      basis.grid.y_lo, basis.grid.y_hi]),
        npts=np.array([basis.grid.nx, basis.grid.ny]),
        eigenvalues=basis.eigenvalues,
        functions=basis.functions,
        ground_exact=np.array(basis.ground_exact),
    )


def load_basis(path, key: dict) -> SpectralBasis | None:
    """Load a cached basis; returns None when missing or keyed differently."""
    try:
        data = np.load(path, allow_pickle=False)
    except (FileNotFoundError, OSError, ValueError):
        return None
    if int(data["format_version"]) != _CACHE_FORMAT_VERSION:
        return None
    if str(data["key_hash"]) != _cache_key_hash(key):
        return None
    box = data["box"]
    npts = data["npts"]
    grid = TensorGrid(float(box[0]), float(box[1]), float(box[2]), float(box[3]),
                      int(npts[0]), int(npts[1]))
    return SpectralBasis(grid, data["eigenvalues"], data["functions"],
                         ground_exact=bool(data["ground_exact"]))
