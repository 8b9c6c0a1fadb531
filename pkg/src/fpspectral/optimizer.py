"""Reduced-gradient descent over control trajectories with the
Barzilai-Borwein two-point step size.

One iteration: integrate the state forward, the adjoint backward, evaluate
the reduced gradient

    g_j(t) = nu u_j(t) - <p(t), D_j a(t)>,

take the secant step gamma = <du, dg> / <dg, dg> (time-trapezoid inner
products summed over channels, clamped and guarded), and update the control
samples in place of the interpolant.  The iteration history need not be
monotone; the stopping rule watches the gradient norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import CouplingSet
from .dynamics import (ControlTrajectory, CostBreakdown, TimeGrid, Trajectory,
                       adjoint_solve, evaluate_cost, forward_solve)
from .exceptions import StepFailureError


@dataclass(frozen=True)
class OptimizerConfig:
    """Stopping rule, cost weights, and step-size safeguards."""

    tol: float = 1e-6
    max_iterations: int = 500
    nu: float = 1e-4
    kappa: float = 5.0
    gamma_min: float = 1e-8
    gamma_max: float = 1e2
    gamma_fallback: float = 1e-3

    def __post_init__(self):
        if self.tol <= 0 or self.max_iterations < 1:
            raise ValueError("tol must be positive and max_iterations >= 1")
        if not 0 < self.gamma_min < self.gamma_max:
            raise ValueError("need 0 < gamma_min < gamma_max")


def reduced_gradient(u: ControlTrajectory, state: Trajectory,
                     adjoint: Trajectory, coupling: CouplingSet,
                     nu: float) -> np.ndarray:
    """Pointwise gradient samples on the evaluation grid, shape (K, m)."""
    pairing = np.einsum("ti,jik,tk->tj", adjoint.values, coupling.drive,
                        state.values)
    return nu * u.values - pairing


def gradient_norm(gradient: np.ndarray, times: np.ndarray) -> float:
    """Time-trapezoid L2 norm summed over channels:
    sqrt(sum_j int |g_j(t)|^2 dt)."""
    return float(np.sqrt(np.trapezoid(np.sum(gradient**2, axis=1), times)))


def bb_step(u_vals: np.ndarray, u_prev: np.ndarray, g_vals: np.ndarray,
            g_prev: np.ndarray, times: np.ndarray,
            config: OptimizerConfig) -> float:
    """Barzilai-Borwein secant step with degeneracy safeguards.

    Returns the fallback step when the denominator is negligible or the
    ratio is non-positive or non-finite; otherwise the ratio clamped into
    [gamma_min, gamma_max].
    """
    du = u_vals - u_prev
    dg = g_vals - g_prev
    numer = float(np.trapezoid(np.sum(du * dg, axis=1), times))
    denom = float(np.trapezoid(np.sum(dg * dg, axis=1), times))
    if denom < 1e-14:
        return config.gamma_fallback
    gamma = numer / denom
    if not np.isfinite(gamma) or gamma <= 0.0:
        return config.gamma_fallback
    return float(np.clip(gamma, config.gamma_min, config.gamma_max))


@dataclass
class OptRun:
    """Full iteration record of one optimization run."""

    controls: ControlTrajectory
    state: Trajectory
    adjoint: Trajectory
    costs: list[CostBreakdown] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    step_sizes: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.grad_norms)

    @property
    def final_cost(self) -> CostBreakdown:
        return self.costs[-1]

    @property
    def final_grad_norm(self) -> float:
        return self.grad_norms[-1]


def optimize(config: OptimizerConfig, coupling: CouplingSet, a0: np.ndarray,
             a_dagger: np.ndarray, a_hat: np.ndarray,
             u_init: ControlTrajectory, grid: TimeGrid,
             u_init_prev: ControlTrajectory | None = None) -> OptRun:
    """Reduced-gradient loop with BB updates, at most
    ``config.max_iterations`` forward/adjoint evaluations.

    The secant pair for the first update comes from ``u_init_prev`` when
    given, otherwise from one plain descent move of size gamma_fallback
    away from ``u_init`` (evaluated once, not recorded in the history).
    The bootstrap move is shrunk on integration failure: a bilinear system
    can blow up in finite time under a too-large control perturbation, and
    the secant pair only needs a nearby point, not a good one.
    """

    def evaluate(u: ControlTrajectory):
        state = forward_solve(coupling, u, a0, grid)
        adjoint = adjoint_solve(coupling, u, state, config.kappa, a_hat,
                                a_dagger, grid)
        grad = reduced_gradient(u, state, adjoint, coupling, config.nu)
        return state, adjoint, grad

    times = grid.times
    u = u_init
    state, adjoint, grad = evaluate(u)
    run = OptRun(u, state, adjoint)
    run.costs.append(evaluate_cost(state, u, config.nu, config.kappa,
                                   a_dagger, a_hat))
    run.grad_norms.append(gradient_norm(grad, times))
    run.step_sizes.append(0.0)

    if run.grad_norms[-1] <= config.tol:
        run.converged = True
        return run

    if u_init_prev is None:
        step = config.gamma_fallback
        peak = float(np.abs(grad).max())
        u_scale = max(1.0, float(np.abs(u.values).max()))
        if step * peak > u_scale:
            step = u_scale / peak
        for _ in range(60):
            u_prev = u.updated(u.values - step * grad)
            try:
                _, _, grad_prev = evaluate(u_prev)
                break
            except StepFailureError:
                step *= 0.125
        else:
            raise StepFailureError("could not bootstrap a stable secant pair")
    else:
        u_prev = u_init_prev
        _, _, grad_prev = evaluate(u_prev)

    for iteration in range(1, config.max_iterations):
        gamma = bb_step(u.values, u_prev.values, grad, grad_prev, times, config)
        for _ in range(40):
            u_next = u.updated(u.values - gamma * grad)
            try:
                state, adjoint, grad_next = evaluate(u_next)
                break
            except StepFailureError:
                # a too-large step can push the bilinear system past its
                # finite blow-up time; shrink and retry
                gamma *= 0.125
        else:
            raise StepFailureError(
                f"iteration {iteration}: no stable step size found")
        u_prev, grad_prev = u, grad
        u, grad = u_next, grad_next

        run.controls, run.state, run.adjoint = u, state, adjoint
        run.costs.append(evaluate_cost(state, u, config.nu, config.kappa,
                                       a_dagger, a_hat))
        run.grad_norms.append(gradient_norm(grad, times))
        run.step_sizes.append(gamma)
        if run.grad_norms[-1] <= config.tol:
            run.converged = True
            break
    return run
