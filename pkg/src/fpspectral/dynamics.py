"""Forward and adjoint integration of the truncated bilinear system, and
the tracking cost functional.

Forward:   da/dt = -Lam a + sum_j u_j(t) D_j a,          a(0) given,
Adjoint:   dp/dt = +Lam p - sum_j u_j(t) D_j^T p + kappa (a - a_hat),
           p(T) = a_dagger - a(T),

with D_j the per-channel drive matrices.  Both are integrated with an
adaptive Runge-Kutta 5(4) scheme (rtol 1e-7, atol 1e-9 by default) and
reported on the evaluation grid; the forward solve keeps its dense output
so the adjoint can query the state between nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .assembly import CouplingSet
from .exceptions import StepFailureError

RTOL_DEFAULT = 1e-7
ATOL_DEFAULT = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Evaluation instants t_0 = 0 < ... < t_K = horizon, uniform by default.

    ``transient_fraction`` > 0 grades the grid: that fraction of the points
    covers the initial window [0, transient_window] uniformly and the rest
    covers the remainder, resolving the fast control kick without paying
    for density where the dynamics has gone slow.
    """

    horizon: float
    n_points: int = 501
    transient_window: float = 0.0
    transient_fraction: float = 0.0

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.n_points < 2:
            raise ValueError("need at least 2 evaluation instants")
        if not 0.0 <= self.transient_fraction < 1.0:
            raise ValueError("transient_fraction must lie in [0, 1)")
        if self.transient_fraction > 0.0 and not 0.0 < self.transient_window < self.horizon:
            raise ValueError("transient_window must lie in (0, horizon)")

    @cached_property
    def times(self) -> np.ndarray:
        if self.transient_fraction <= 0.0:
            return np.linspace(0.0, self.horizon, self.n_points)
        n_early = max(2, int(round(self.n_points * self.transient_fraction)))
        n_late = self.n_points - n_early
        if n_late < 2:
            raise ValueError("transient_fraction leaves too few late points")
        early = np.linspace(0.0, self.transient_window, n_early + 1)
        late = np.linspace(self.transient_window, self.horizon, n_late)
        return np.concatenate([early[:-1], late])


@dataclass
class ControlTrajectory:
    """m control channels sampled on the evaluation grid, piecewise linear
    in between and clamped outside [0, T]."""

    times: np.ndarray
    values: np.ndarray  # (K, m)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] != len(self.times):
            raise ValueError("values must have one row per time instant")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("control values must be finite")

    @classmethod
    def zeros(cls, grid: TimeGrid, n_controls: int) -> "ControlTrajectory":
        return cls(grid.times, np.zeros((grid.n_points, n_controls)))

    @property
    def n_controls(self) -> int:
        return self.values.shape[1]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (self.n_controls,))
        for j in range(self.n_controls):
            out[..., j] = np.interp(t, self.times, self.values[:, j])
        return out

    def updated(self, new_values: np.ndarray) -> "ControlTrajectory":
        return ControlTrajectory(self.times, new_values)


@dataclass
class Trajectory:
    """Coefficient path on the evaluation grid with a dense interpolant:
    the integrator's continuous extension when available, a cubic spline
    through the samples otherwise."""

    times: np.ndarray
    values: np.ndarray  # (K, N)
    dense: object | None = field(default=None, repr=False)

    @cached_property
    def _spline(self) -> CubicSpline:
        return CubicSpline(self.times, self.values, axis=0)

    def __call__(self, t):
        if self.dense is not None:
            out = self.dense(t)
            return out.T if np.ndim(t) else out
        return self._spline(t)

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]


StateTrajectory = Trajectory
AdjointTrajectory = Trajectory


def _check_solution(sol, label: str):
    if sol.status != 0 or not sol.success:
        t_reached = float(sol.t[-1]) if len(sol.t) else float("nan")
        norm = float(np.linalg.norm(sol.y[:, -1])) if sol.y.size else float("nan")
        raise StepFailureError(
            f"{label} integration failed at t = {t_reached:.6g} "
            f"(state norm {norm:.3e}): {sol.message}",
            t=t_reached, state_norm=norm)


def forward_solve(coupling: CouplingSet, u: ControlTrajectory | None,
                  a0: np.ndarray, grid: TimeGrid,
                  rtol: float = RTOL_DEFAULT, atol: float = ATOL_DEFAULT) -> Trajectory:
    """Integrate the controlled state forward from a0; u = None means
    uncontrolled decay."""
    lam = coupling.eigenvalues
    drive = coupling.drive

    if u is None:
        def rhs(t, a):
            return -lam * a
    else:
        def rhs(t, a):
            ut = u(t)
            return -lam * a + np.tensordot(ut, drive, axes=1) @ a

    sol = solve_ivp(rhs, (0.0, grid.horizon), np.asarray(a0, dtype=float),
                    method="RK45", t_eval=grid.times, dense_output=True,
                    rtol=rtol, atol=atol)
    _check_solution(sol, "forward")
    return Trajectory(grid.times, sol.y.T, dense=sol.sol)


def adjoint_solve(coupling: CouplingSet, u: ControlTrajectory | None,
                  state: Trajectory, kappa: float, a_hat: np.ndarray,
                  a_dagger: np.ndarray, grid: TimeGrid,
                  rtol: float = RTOL_DEFAULT, atol: float = ATOL_DEFAULT) -> Trajectory:
    """Integrate the adjoint backward from p(T) = a_dagger - a(T)."""
    lam = coupling.eigenvalues
    drive_t = coupling.drive_transpose

    if u is None:
        def rhs(t, p):
            return lam * p + kappa * (state(t) - a_hat)
    else:
        def rhs(t, p):
            ut = u(t)
            return (lam * p - np.tensordot(ut, drive_t, axes=1) @ p
                    + kappa * (state(t) - a_hat))

    p_terminal = np.asarray(a_dagger, dtype=float) - state.terminal
    sol = solve_ivp(rhs, (grid.horizon, 0.0), p_terminal, method="RK45",
                    t_eval=grid.times[::-1], dense_output=True,
                    rtol=rtol, atol=atol)
    _check_solution(sol, "adjoint")
    return Trajectory(grid.times, sol.y.T[::-1], dense=sol.sol)


@dataclass(frozen=True)
class CostBreakdown:
    """Terminal misfit + control energy + running misfit."""

    terminal: float
    control_energy: float
    running: float

    @property
    def total(self) -> float:
        return self.terminal + self.control_energy + self.running

    def as_tuple(self):
        return (self.total, self.terminal, self.running, self.control_energy)


def evaluate_cost(state: Trajectory, u: ControlTrajectory | None, nu: float,
                  kappa: float, a_dagger: np.ndarray,
                  a_hat: np.ndarray) -> CostBreakdown:
    """Cost on the evaluation grid: trapezoid time quadrature for both
    integral terms, terminal misfit from the final sample."""
    t = state.times
    terminal = 0.5 * float(np.sum((state.terminal - a_dagger) ** 2))
    if u is None:
        control = 0.0
    else:
        control = 0.5 * nu * float(np.trapezoid(np.sum(u.values**2, axis=1), t))
    running = 0.5 * kappa * float(
        np.trapezoid(np.sum((state.values - a_hat) ** 2, axis=1), t))
    return CostBreakdown(terminal, control, running)


def error_norm_series(state: Trajectory, a_dagger: np.ndarray) -> np.ndarray:
    """Euclidean distance |a(t_k) - a_dagger| per evaluation instant."""
    return np.linalg.norm(state.values - a_dagger, axis=1)
