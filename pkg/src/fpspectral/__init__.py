"""fpspectral: spectral optimal control of Fokker-Planck dynamics.

Accelerates convergence of a diffusion toward its Gibbs steady state by
optimizing time-dependent amplitudes of fixed drift-shaping controls.  The
density evolution is mapped to imaginary-time Schrodinger dynamics, cut to
its N slowest eigenmodes, and controlled through a reduced-gradient loop
with Barzilai-Borwein steps, warm-started from an infinite-horizon Riccati
feedback.  Euler-Maruyama particle simulation provides an independent
validation path.
"""

from .assembly import (CouplingSet, ShapeFunction, assemble_couplings,
                       compute_shape_functions, export_matrices,
                       gaussian_initial_coefficients, project_state,
                       reconstruct_density)
from .dynamics import (ControlTrajectory, CostBreakdown, TimeGrid, Trajectory,
                       adjoint_solve, error_norm_series, evaluate_cost,
                       forward_solve)
from .eigensolver import (SpectralBasis, analytic_quadratic_basis,
                          assemble_hamiltonian, build_domain, solve_basis,
                          solve_smallest_eigenpairs)
from .exceptions import (ConfigError, FPSpectralError, NoConvergenceError,
                         NonConfiningError, ParticleEscapeError,
                         SingularSystemError, StepFailureError)
from .experiment import (ExperimentConfig, ExperimentReport, PRESETS,
                         build_system, emit_outputs, misalignment_study,
                         resolve_config, run_experiment)
from .grid import TensorGrid
from .lqr import (RiccatiSolution, care_diagonal, care_solve, deviation_system,
                  feedback_rollout)
from .mc import (ParticleEnsemble, compare_density, empirical_density,
                 rejection_sample, simulate_sde)
from .optimizer import (OptRun, OptimizerConfig, bb_step, gradient_norm,
                        optimize, reduced_gradient)
from .potentials import (DiffusionParams, DoubleWellPotential, GibbsMeasure,
                         Potential, QuadraticPotential, partition_function,
                         transformed_potential)

__version__ = "0.1.0"
