"""Infinite-horizon Riccati feedback on the linearized deviation system.

Near equilibrium the deviation coefficients y = a[1:] (the mass mode is
conserved and drops out) obey, to first order,

    dy/dt = -Lam' y + sum_j u_j beta_j,

where beta_j is the equilibrium response of channel j: column 0 of the
drive matrix restricted to modes 1..N-1 (a unit vector at mode j for an
ideally designed shape).  Minimizing the infinite-horizon quadratic cost
(kappa |y|^2 + nu |u|^2)/2 yields u_j = -(1/nu) <Pi y, beta_j> with Pi
solving

    -Lam' Pi - Pi Lam' - (1/nu) Pi (sum_j beta_j beta_j^T) Pi + kappa I = 0.

For exact unit inputs the equation decouples and has the closed diagonal
form in ``care_diagonal``; the general solve is Newton-Kleinman iteration
(one Lyapunov solve per step) started from that diagonal guess.

The resulting feedback, rolled out on the FULL bilinear dynamics, is both
the optimizer's initial control and the reported baseline strategy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_continuous_lyapunov

from .assembly import CouplingSet
from .dynamics import ControlTrajectory, TimeGrid, Trajectory, _check_solution
from .exceptions import NoConvergenceError


def deviation_system(coupling: CouplingSet) -> tuple[np.ndarray, np.ndarray]:
    """Decay rates Lam' = diag(lambda_1..lambda_{N-1}) and input columns
    beta_j = (D_j applied to the equilibrium coefficient vector)[1:]."""
    equilibrium = np.zeros(coupling.n_modes)
    equilibrium[0] = 1.0
    beta = np.stack([(d @ equilibrium)[1:] for d in coupling.drive], axis=1)
    return coupling.eigenvalues[1:].copy(), beta


def care_diagonal(lambdas: np.ndarray, controlled: np.ndarray, nu: float,
                  kappa: float) -> np.ndarray:
    """Closed-form diagonal Riccati solution valid for exact unit inputs:
    pi_i = nu (-lambda_i + sqrt(lambda_i^2 + kappa/nu)) on controlled modes,
    pi_i = kappa / (2 lambda_i) on uncontrolled ones."""
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas <= 0):
        raise ValueError("deviation modes must have positive decay rates")
    pi = kappa / (2.0 * lambdas)
    controlled = np.asarray(controlled, dtype=int)
    lc = lambdas[controlled]
    pi[controlled] = nu * (-lc + np.sqrt(lc**2 + kappa / nu))
    return pi


@dataclass
class RiccatiSolution:
    """Symmetric positive-definite Riccati matrix with solve diagnostics."""

    matrix: np.ndarray
    residual: float
    residual_history: list[float]
    iterations: int


def care_residual(pi: np.ndarray, lambdas: np.ndarray, beta: np.ndarray,
                  nu: float, kappa: float) -> float:
    """Frobenius norm of -Lam' Pi - Pi Lam' - (1/nu) Pi beta beta^T Pi + kappa I."""
    lam_pi = lambdas[:, None] * pi
    gram = beta @ beta.T / nu
    res = -lam_pi - lam_pi.T - pi @ gram @ pi + kappa * np.eye(len(lambdas))
    return float(np.linalg.norm(res, ord="fro"))


def care_solve(lambdas: np.ndarray, beta: np.ndarray, nu: float, kappa: float,
               tol: float = 1e-10, max_newton: int = 50) -> RiccatiSolution:
    """Newton-Kleinman iteration for the algebraic Riccati equation of the
    deviation system, initialized from the closed diagonal form.

    Each Newton step solves one dense Lyapunov equation; the iterate is
    symmetrized to keep roundoff from accumulating skew parts.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    n = len(lambdas)
    a_sys = -np.diag(lambdas)
    gram = beta @ beta.T / nu
    q = kappa * np.eye(n)

    pi = np.diag(care_diagonal(lambdas, np.arange(beta.shape[1]), nu, kappa))
    history = [care_residual(pi, lambdas, beta, nu, kappa)]
    for iteration in range(1, max_newton + 1):
        if history[-1] <= tol:
            return RiccatiSolution(pi, history[-1], history, iteration - 1)
        a_closed = a_sys - gram @ pi
        pi = solve_continuous_lyapunov(a_closed.T, -(q + pi @ gram @ pi))
        pi = 0.5 * (pi + pi.T)
        history.append(care_residual(pi, lambdas, beta, nu, kappa))
    if history[-1] > tol:
        raise NoConvergenceError(
            f"Riccati iteration stalled at residual {history[-1]:.3e} "
            f"after {max_newton} Newton steps", history=history)
    return RiccatiSolution(pi, history[-1], history, max_newton)


def feedback_gain(pi: np.ndarray, beta: np.ndarray, nu: float) -> np.ndarray:
    """Gain K with u = -K y, rows K_j = (1/nu) beta_j^T Pi."""
    return beta.T @ pi / nu


def feedback_rollout(pi: np.ndarray, coupling: CouplingSet, a0: np.ndarray,
                     grid: TimeGrid, nu: float, a_dagger: np.ndarray,
                     rtol: float = 1e-7, atol: float = 1e-9
                     ) -> tuple[ControlTrajectory, Trajectory]:
    """Closed-loop integration of the FULL bilinear dynamics under the
    Riccati feedback u_j = -(1/nu) <Pi y, beta_j>, y = (a - a_dagger)[1:].

    The feedback sampled along the trajectory becomes a control trajectory
    on the evaluation grid: the optimizer's warm start and the baseline
    strategy in reports.
    """
    _, beta = deviation_system(coupling)
    gain = feedback_gain(pi, beta, nu)
    lam = coupling.eigenvalues
    drive = coupling.drive
    a_dagger = np.asarray(a_dagger, dtype=float)

    def control_of(a):
        return -gain @ (a[..., 1:] - a_dagger[1:]).T

    def rhs(t, a):
        u = control_of(a)
        return -lam * a + np.tensordot(u, drive, axes=1) @ a

    sol = solve_ivp(rhs, (0.0, grid.horizon), np.asarray(a0, dtype=float),
                    method="RK45", t_eval=grid.times, dense_output=True,
                    rtol=rtol, atol=atol)
    _check_solution(sol, "feedback rollout")
    states = sol.y.T
    u_values = control_of(states).T
    return (ControlTrajectory(grid.times, u_values),
            Trajectory(grid.times, states, dense=sol.sol))
