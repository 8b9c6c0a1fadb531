"""Independent Monte Carlo validation: Euler-Maruyama particles whose
empirical density is compared against the spectral reconstruction.

The particles follow the controlled overdamped dynamics

    X += -(grad V(X) + sum_j u_j(t) grad alpha_j(X)) dt + sqrt(2 sigma dt) xi,

with the shape gradients interpolated bilinearly from their grid samples
(clamped at the box; particles outside are transient outliers).  All noise
comes from one counter-based Philox stream keyed by the seed, so runs are
reproducible and independent of chunking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .dynamics import ControlTrajectory
from .exceptions import ParticleEscapeError
from .grid import TensorGrid
from .potentials import DiffusionParams, Potential


@dataclass
class ParticleEnsemble:
    """Particle positions (n, 2) at ``time``, plus requested snapshots."""

    positions: np.ndarray
    seed: int
    time: float
    snapshots: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.positions) < 1:
            raise ValueError("ensemble needs at least one particle")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("particle positions must be finite")


def _bilinear(grid: TensorGrid, values: np.ndarray, x: np.ndarray,
              y: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of a grid field, clamped to the box."""
    fx = np.clip((x - grid.x_lo) / grid.hx, 0.0, grid.nx - 1.000001)
    fy = np.clip((y - grid.y_lo) / grid.hy, 0.0, grid.ny - 1.000001)
    ix = fx.astype(np.intp)
    iy = fy.astype(np.intp)
    tx = fx - ix
    ty = fy - iy
    v00 = values[ix, iy]
    v10 = values[ix + 1, iy]
    v01 = values[ix, iy + 1]
    v11 = values[ix + 1, iy + 1]
    return ((1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10
            + (1 - tx) * ty * v01 + tx * ty * v11)


def sample_truncated_gaussian(center: tuple[float, float],
                              variances: tuple[float, float],
                              grid: TensorGrid, n: int,
                              rng: np.random.Generator) -> np.ndarray:
    """Draw n points from a Gaussian restricted to the grid box by
    rejection (resample anything that falls outside)."""
    std = np.sqrt(np.asarray(variances, dtype=float))
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        draw = center + std * rng.standard_normal((2 * (n - filled), 2))
        keep = ((draw[:, 0] >= grid.x_lo) & (draw[:, 0] <= grid.x_hi)
                & (draw[:, 1] >= grid.y_lo) & (draw[:, 1] <= grid.y_hi))
        draw = draw[keep][: n - filled]
        out[filled:filled + len(draw)] = draw
        filled += len(draw)
    return out


def simulate_sde(potential: Potential, params: DiffusionParams, shapes,
                 u: ControlTrajectory | None, n: int, dt: float,
                 horizon: float, seed: int,
                 initial_positions: np.ndarray | None = None,
                 initial_center: tuple[float, float] = (0.0, 0.0),
                 initial_variances: tuple[float, float] = (1.0, 1.0),
                 snapshot_times=(), domain: TensorGrid | None = None,
                 noise_override: float | None = None) -> ParticleEnsemble:
    """Explicit Euler-Maruyama simulation of the controlled dynamics.

    ``noise_override`` replaces the noise amplitude sqrt(2 sigma) (the
    zero-noise deterministic flow is a test hook).  Raises
    ParticleEscapeError if any particle leaves the truncation box by more
    than one box width, the symptom of an unstable dt.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_steps = round(horizon / dt)
    if abs(n_steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("dt must divide the horizon")

    if domain is None and shapes:
        domain = shapes[0].grid
    rng = np.random.Generator(np.random.Philox(key=seed))
    if initial_positions is None:
        if domain is None:
            raise ValueError("need a domain box to sample the initial ensemble")
        pos = sample_truncated_gaussian(initial_center, initial_variances,
                                        domain, n, rng)
    else:
        pos = np.array(initial_positions, dtype=float)
        if pos.shape != (n, 2):
            raise ValueError("initial_positions must have shape (n, 2)")

    amplitude = np.sqrt(2.0 * params.sigma) if noise_override is None else noise_override
    root_dt = np.sqrt(dt)
    if domain is not None:
        width_x = domain.x_hi - domain.x_lo
        width_y = domain.y_hi - domain.y_lo
        escape_lo = np.array([domain.x_lo - width_x, domain.y_lo - width_y])
        escape_hi = np.array([domain.x_hi + width_x, domain.y_hi + width_y])

    snapshot_times = sorted(snapshot_times)
    snapshots = {}
    next_snap = 0

    controlled = u is not None and shapes
    if controlled:
        # (m, 2, nx, ny): all shape gradients, combined per step into one
        # field so the particle interpolation happens once per step
        grad_stack = np.stack([np.stack([s.grad_x, s.grad_y]) for s in shapes])
        shape_grid = shapes[0].grid

    for k in range(n_steps):
        t = k * dt
        while next_snap < len(snapshot_times) and t >= snapshot_times[next_snap] - dt / 2:
            snapshots[snapshot_times[next_snap]] = pos.copy()
            next_snap += 1

        gx, gy = potential.gradient(pos[:, 0], pos[:, 1])
        if controlled:
            field = np.tensordot(u(t), grad_stack, axes=1)
            gx = gx + _bilinear(shape_grid, field[0], pos[:, 0], pos[:, 1])
            gy = gy + _bilinear(shape_grid, field[1], pos[:, 0], pos[:, 1])
        noise = rng.standard_normal((n, 2))
        pos[:, 0] += -gx * dt + amplitude * root_dt * noise[:, 0]
        pos[:, 1] += -gy * dt + amplitude * root_dt * noise[:, 1]

        if domain is not None and (np.any(pos < escape_lo) or np.any(pos > escape_hi)):
            raise ParticleEscapeError(
                f"particle left the truncation box by more than one box width "
                f"at t = {t + dt:.6g}; reduce dt")

    while next_snap < len(snapshot_times):
        snapshots[snapshot_times[next_snap]] = pos.copy()
        next_snap += 1
    return ParticleEnsemble(pos, seed, horizon, snapshots)


def empirical_density(positions: np.ndarray, grid: TensorGrid,
                      bandwidth: float = 0.0) -> np.ndarray:
    """Node density on the grid by linear (cloud-in-cell) deposition,
    optionally smoothed by a Gaussian kernel of ``bandwidth`` cells.

    The raw deposit integrates to exactly 1 under trapezoid quadrature;
    after smoothing the field is renormalized to restore that.
    """
    x = np.clip(positions[:, 0], grid.x_lo, grid.x_hi)
    y = np.clip(positions[:, 1], grid.y_lo, grid.y_hi)
    fx = np.clip((x - grid.x_lo) / grid.hx, 0.0, grid.nx - 1.000001)
    fy = np.clip((y - grid.y_lo) / grid.hy, 0.0, grid.ny - 1.000001)
    ix = fx.astype(np.intp)
    iy = fy.astype(np.intp)
    tx = fx - ix
    ty = fy - iy

    counts = np.zeros(grid.shape)
    np.add.at(counts, (ix, iy), (1 - tx) * (1 - ty))
    np.add.at(counts, (ix + 1, iy), tx * (1 - ty))
    np.add.at(counts, (ix, iy + 1), (1 - tx) * ty)
    np.add.at(counts, (ix + 1, iy + 1), tx * ty)

    density = counts / (len(positions) * grid.weights)
    if bandwidth > 0:
        density = gaussian_filter(density, sigma=bandwidth, mode="constant")
        density /= grid.integrate(density)
    return density


def compare_density(rho_a: np.ndarray, rho_b: np.ndarray,
                    grid: TensorGrid) -> float:
    """L1 distance between two grid densities under trapezoid quadrature."""
    return grid.integrate(np.abs(rho_a - rho_b))


def rejection_sample(density: np.ndarray, grid: TensorGrid, n: int,
                     seed: int) -> np.ndarray:
    """Draw n points from a nonnegative grid density by rejection against
    a uniform proposal over the box (bilinear density evaluation)."""
    rho_max = float(density.max())
    if rho_max <= 0:
        raise ValueError("density must have positive mass")
    rng = np.random.Generator(np.random.Philox(key=seed))
    out = np.empty((n, 2))
    filled = 0
    lo = np.array([grid.x_lo, grid.y_lo])
    span = np.array([grid.x_hi - grid.x_lo, grid.y_hi - grid.y_lo])
    while filled < n:
        batch = max(4 * (n - filled), 1024)
        draw = lo + span * rng.random((batch, 2))
        accept = rng.random(batch) * rho_max < _bilinear(
            grid, density, draw[:, 0], draw[:, 1])
        draw = draw[accept][: n - filled]
        out[filled:filled + len(draw)] = draw
        filled += len(draw)
    return out
