"""Configuration-driven experiment harness.

One experiment run compares three strategies on the same truncated system
and initial condition: uncontrolled decay, the Riccati feedback rollout,
and the optimized open-loop control (warm-started from the feedback).
Results are serialized as schema-headed CSV files, matplotlib figures, and
a human-readable summary.
"""

from __future__ import annotations

import dataclasses
import hashlib
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import assembly, eigensolver, lqr, mc
from .dynamics import ControlTrajectory, TimeGrid, Trajectory, error_norm_series, forward_solve
from .exceptions import ConfigError, FPSpectralError
from .grid import TensorGrid
from .optimizer import OptimizerConfig, OptRun, optimize
from .potentials import DiffusionParams, DoubleWellPotential, GibbsMeasure, QuadraticPotential

PRESETS = {
    "quadratic": dict(potential="quadratic", a=1.0, b=0.1, n_controls=4,
                      ic_var_x=0.9, ic_var_y=9.0,
                      transient_window=0.4, transient_fraction=0.5),
    "quadratic-b005": dict(potential="quadratic", a=1.0, b=0.05, n_controls=4,
                           ic_var_x=0.9, ic_var_y=16.0),
    "double-well": dict(potential="double_well", c_x=1.0, c_y=1.0,
                        n_controls=2, domain_pad=1.3,
                        ic_var_x=0.05, ic_var_y=0.05),
}

STRATEGY_ORDER = ("uncontrolled", "lqr", "optimal")


@dataclass
class ExperimentConfig:
    """Flat experiment configuration; every field can be set from a
    ``key = value`` config file or a preset."""

    preset: str = ""
    potential: str = "quadratic"
    a: float = 1.0
    b: float = 0.1
    c_x: float = 1.0
    c_y: float = 1.0
    sigma: float = 1.0
    n_modes: int = 50
    n_controls: int = 4
    horizon: float = 5.0
    nu: float = 1e-4
    kappa: float = 5.0
    time_points: int = 501
    transient_window: float = 0.0
    transient_fraction: float = 0.0
    grid_points: int = 201
    domain_threshold: float = 1e-12
    domain_pad: float = 1.6
    stencil_order: int = 4
    eig_tol: float = 1e-8
    ic_center_x: float = -0.2
    ic_center_y: float = 0.5
    ic_var_x: float = 0.9
    ic_var_y: float = 9.0
    bb_iterations: int = 500
    bb_tol: float = 1e-6
    gamma_min: float = 1e-8
    gamma_max: float = 100.0
    gamma_fallback: float = 1e-3
    seed: int = 1234
    out_dir: str = "results"
    skip_mc: bool = False
    mc_particles: int = 100_000
    mc_dt: float = 1e-3
    mc_times: tuple = (0.5, 2.0, 5.0)
    mc_bandwidth: float = 0.0
    mc_stride: int = 4
    misalign_eps: tuple = (1.0, 5.0, 10.0)
    misalign_trials: int = 5
    misalign_iterations: int = 120
    basis_cache: str = ""

    def validate(self) -> None:
        checks = [
            (self.potential in ("quadratic", "double_well"), "unknown potential"),
            (self.a > 0 and self.b > 0, "curvatures must be positive"),
            (self.c_x > 0 and self.c_y > 0, "well offsets must be positive"),
            (self.sigma > 0, "sigma must be positive"),
            (2 <= self.n_modes <= 400, "n_modes out of range [2, 400]"),
            (1 <= self.n_controls < self.n_modes, "n_controls out of range"),
            (self.horizon > 0, "horizon must be positive"),
            (self.nu > 0 and self.kappa >= 0, "nu > 0 and kappa >= 0 required"),
            (self.time_points >= 2, "time_points must be at least 2"),
            (0.0 <= self.transient_fraction < 1.0,
             "transient_fraction must lie in [0, 1)"),
            (self.transient_fraction == 0.0
             or 0.0 < self.transient_window < self.horizon,
             "transient_window must lie in (0, horizon)"),
            (self.grid_points >= 31, "grid_points must be at least 31"),
            (0 < self.domain_threshold < 1, "domain_threshold must be in (0, 1)"),
            (self.domain_pad >= 1.0, "domain_pad must be >= 1"),
            (self.stencil_order in (2, 4), "stencil_order must be 2 or 4"),
            (self.ic_var_x > 0 and self.ic_var_y > 0, "ic variances must be positive"),
            (self.bb_iterations >= 1, "bb_iterations must be >= 1"),
            (self.bb_tol > 0, "bb_tol must be positive"),
            (0 < self.gamma_min < self.gamma_max, "need 0 < gamma_min < gamma_max"),
            (self.mc_particles >= 1 and self.mc_dt > 0, "bad Monte Carlo settings"),
            (self.mc_stride >= 1, "mc_stride must be >= 1"),
            (self.misalign_trials >= 1, "misalign_trials must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        if (self.grid_points - 1) % self.mc_stride:
            raise ConfigError("mc_stride must divide grid_points - 1")

    def canonical(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(f"{v:g}" for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = f"{value:.12g}"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _parse_value(field_obj, raw: str):
    raw = raw.strip()
    kind = field_obj.type
    try:
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "tuple":
            return tuple(float(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for '{field_obj.name}': {raw!r}") from exc


def parse_config_file(path) -> dict:
    """Read a flat ``key = value`` file ('#' starts a comment)."""
    known = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
        values[key] = _parse_value(known[key], raw)
    return values


def resolve_config(file: str | None = None, preset: str | None = None,
                   **overrides) -> ExperimentConfig:
    """Defaults -> preset -> config file -> explicit overrides."""
    file_values = parse_config_file(file) if file else {}
    preset_name = preset or file_values.get("preset", "")
    values: dict = {}
    if preset_name:
        if preset_name not in PRESETS:
            raise ConfigError(f"unknown preset '{preset_name}' "
                              f"(choose from {sorted(PRESETS)})")
        values.update(PRESETS[preset_name], preset=preset_name)
    values.update({k: v for k, v in file_values.items() if k != "preset"})
    values.update({k: v for k, v in overrides.items() if v is not None})
    config = ExperimentConfig(**values)
    config.validate()
    return config


def make_potential(config: ExperimentConfig):
    if config.potential == "quadratic":
        return QuadraticPotential(config.a, config.b)
    return DoubleWellPotential(config.c_x, config.c_y)


@dataclass
class SystemSetup:
    """Everything the strategies share: basis, couplings, initial state."""

    config: ExperimentConfig
    potential: object
    params: DiffusionParams
    grid: TensorGrid
    gibbs: GibbsMeasure
    basis: eigensolver.SpectralBasis
    shapes: list
    coupling: assembly.CouplingSet
    time_grid: TimeGrid
    a0: np.ndarray
    a_dagger: np.ndarray
    a_hat: np.ndarray

    def optimizer_config(self, iterations: int | None = None) -> OptimizerConfig:
        cfg = self.config
        return OptimizerConfig(tol=cfg.bb_tol,
                               max_iterations=iterations or cfg.bb_iterations,
                               nu=cfg.nu, kappa=cfg.kappa,
                               gamma_min=cfg.gamma_min, gamma_max=cfg.gamma_max,
                               gamma_fallback=cfg.gamma_fallback)


def _load_or_solve_basis(config: ExperimentConfig, potential, params, grid,
                         gibbs) -> eigensolver.SpectralBasis:
    key = {"potential": config.potential, "a": config.a, "b": config.b,
           "c_x": config.c_x, "c_y": config.c_y, "sigma": config.sigma,
           "threshold": config.domain_threshold, "pad": config.domain_pad,
           "resolution": config.grid_points, "n_modes": config.n_modes,
           "order": config.stencil_order, "eig_tol": config.eig_tol}
    if config.basis_cache:
        cached = eigensolver.load_basis(config.basis_cache, key)
        if cached is not None:
            return cached
    basis = eigensolver.solve_basis(potential, params, grid, config.n_modes,
                                    order=config.stencil_order, gibbs=gibbs,
                                    tol=config.eig_tol)
    if config.basis_cache:
        Path(config.basis_cache).parent.mkdir(parents=True, exist_ok=True)
        eigensolver.save_basis(config.basis_cache, basis, key)
    return basis


def build_system(config: ExperimentConfig) -> SystemSetup:
    """Build the full spectral control system prescribed by the config."""
    config.validate()
    potential = make_potential(config)
    params = DiffusionParams(config.sigma)
    grid = eigensolver.build_domain(potential, params, config.domain_threshold,
                                    resolution=config.grid_points,
                                    pad=config.domain_pad)
    gibbs = GibbsMeasure.build(potential, params, grid)
    basis = _load_or_solve_basis(config, potential, params, grid, gibbs)
    shapes = assembly.compute_shape_functions(basis, gibbs, config.n_controls)
    coupling = assembly.assemble_couplings(basis, shapes, gibbs)
    a0 = assembly.gaussian_initial_coefficients(
        basis, gibbs, (config.ic_center_x, config.ic_center_y),
        (config.ic_var_x, config.ic_var_y))
    equilibrium = np.zeros(config.n_modes)
    equilibrium[0] = 1.0
    time_grid = TimeGrid(config.horizon, config.time_points,
                         transient_window=config.transient_window,
                         transient_fraction=config.transient_fraction)
    return SystemSetup(config, potential, params, grid, gibbs, basis, shapes,
                       coupling, time_grid, a0, equilibrium, equilibrium.copy())


@dataclass
class ExperimentReport:
    """Self-describing result bundle for one experiment run."""

    config: ExperimentConfig
    config_hash: str
    times: np.ndarray
    error_norms: dict = field(default_factory=dict)
    controls: ControlTrajectory | None = None
    lqr_controls: ControlTrajectory | None = None
    coefficients: np.ndarray | None = None
    uncontrolled_coefficients: np.ndarray | None = None
    opt_run: OptRun | None = None
    riccati_residual: float = float("nan")
    eigenvalues: np.ndarray | None = None
    mc_rows: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def attach_series(self, name: str, series: np.ndarray,
                      config_hash: str) -> None:
        """Guard against mixing runs: series must come from the same
        resolved configuration."""
        if config_hash != self.config_hash:
            raise ConfigError(
                f"refusing to merge series '{name}': config hash {config_hash} "
                f"does not match report hash {self.config_hash}")
        if len(series) != len(self.times):
            raise ConfigError(f"series '{name}' does not match the time grid")
        self.error_norms[name] = np.asarray(series, dtype=float)

    @property
    def final_errors(self) -> dict:
        return {name: float(series[-1]) for name, series in self.error_norms.items()}


def run_strategies(setup: SystemSetup, iterations: int | None = None
                   ) -> tuple[Trajectory, Trajectory, OptRun,
                              ControlTrajectory, lqr.RiccatiSolution]:
    """Uncontrolled rollout, Riccati feedback rollout, and optimization
    warm-started from the feedback control."""
    uncontrolled = forward_solve(setup.coupling, None, setup.a0, setup.time_grid)
    lams_dev, beta = lqr.deviation_system(setup.coupling)
    riccati = lqr.care_solve(lams_dev, beta, setup.config.nu, setup.config.kappa)
    u_lqr, state_lqr = lqr.feedback_rollout(riccati.matrix, setup.coupling,
                                            setup.a0, setup.time_grid,
                                            setup.config.nu, setup.a_dagger)
    run = optimize(setup.optimizer_config(iterations), setup.coupling, setup.a0,
                   setup.a_dagger, setup.a_hat, u_lqr, setup.time_grid)
    return uncontrolled, state_lqr, run, u_lqr, riccati


def _mc_validation(setup: SystemSetup, run: OptRun) -> list[tuple]:
    """Particle cross-check of the optimized run: L1 distance between the
    empirical density and the spectral reconstruction at requested times,
    next to a same-size rejection-sampling baseline drawn from the
    reconstruction itself (pure sampling error)."""
    cfg = setup.config
    compare_grid = setup.grid.coarsen(cfg.mc_stride)
    stride = cfg.mc_stride
    ensemble = mc.simulate_sde(
        setup.potential, setup.params, setup.shapes, run.controls,
        cfg.mc_particles, cfg.mc_dt, cfg.horizon, cfg.seed,
        initial_center=(cfg.ic_center_x, cfg.ic_center_y),
        initial_variances=(cfg.ic_var_x, cfg.ic_var_y),
        snapshot_times=cfg.mc_times, domain=setup.grid)
    rows = []
    for i, t in enumerate(cfg.mc_times):
        spectral = assembly.reconstruct_density(run.state(t), setup.basis,
                                                setup.gibbs)
        spectral_cmp = spectral[::stride, ::stride]
        empirical = mc.empirical_density(ensemble.snapshots[t], compare_grid,
                                         cfg.mc_bandwidth)
        l1 = mc.compare_density(empirical, spectral_cmp, compare_grid)

        sampler_density = np.clip(spectral, 0.0, None)
        sampler_density /= setup.grid.integrate(sampler_density)
        exact_draw = mc.rejection_sample(sampler_density, setup.grid,
                                         cfg.mc_particles, cfg.seed + 7919 * (i + 1))
        baseline = mc.compare_density(
            mc.empirical_density(exact_draw, compare_grid, cfg.mc_bandwidth),
            spectral_cmp, compare_grid)
        rows.append((t, l1, baseline))
    return rows


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Full pipeline: system build, three strategies, optional Monte Carlo
    cross-validation, wall-clock accounting."""
    timings = {}
    tic = time.perf_counter()
    setup = build_system(config)
    timings["build_system"] = time.perf_counter() - tic

    tic = time.perf_counter()
    uncontrolled, state_lqr, run, u_lqr, riccati = run_strategies(setup)
    timings["strategies"] = time.perf_counter() - tic

    report = ExperimentReport(config, config.config_hash, setup.time_grid.times)
    for name, state in (("uncontrolled", uncontrolled), ("lqr", state_lqr),
                        ("optimal", run.state)):
        report.attach_series(name, error_norm_series(state, setup.a_dagger),
                             config.config_hash)
    report.controls = run.controls
    report.lqr_controls = u_lqr
    report.coefficients = run.state.values
    report.uncontrolled_coefficients = uncontrolled.values
    report.opt_run = run
    report.riccati_residual = riccati.residual
    report.eigenvalues = setup.basis.eigenvalues.copy()

    if not config.skip_mc:
        tic = time.perf_counter()
        report.mc_rows = _mc_validation(setup, run)
        timings["mc_validation"] = time.perf_counter() - tic
    report.timings = timings
    return report


@dataclass
class MisalignmentStudy:
    """Mean relative final-error increase per misalignment magnitude."""

    config_hash: str
    base_final_error: float
    epsilons: list
    deltas_pct: list        # mean over trials, percent
    trial_deltas: list      # list of per-trial lists


def misalignment_study(config: ExperimentConfig, epsilons=None,
                       trials: int | None = None,
                       seed: int | None = None) -> MisalignmentStudy:
    """Robustness of the optimized control to actuator-shape errors.

    The control is designed once on the nominal shapes.  Each trial then
    adds a random smooth field to every shape function, rebuilds the
    couplings, and REPLAYS the nominal optimized control through the
    misaligned actuators; reported is the mean relative increase of the
    final-time error.  Re-optimizing against the perturbed couplings would
    largely compensate the misalignment and measure nothing, so the study
    deliberately keeps the control open loop.

    Field construction: Gaussian coefficients over the basis modes with
    spectrally decaying variance (smoothness), scaled so the misalignment
    added to each actuator has stationary-amplitude-weighted L1 norm eps,
    i.e. integral of |field| * sqrt(rho_inf) equals eps.  The weight counts
    misalignment where the dynamics actually carries mass; an unweighted
    Lebesgue L1 budget on a padded truncation box is spent almost entirely
    on regions the density never visits.  A trial reuses its random
    direction across magnitudes (paired comparison), which sharpens the
    monotonicity of the mean in eps.
    """
    epsilons = list(config.misalign_eps if epsilons is None else epsilons)
    trials = config.misalign_trials if trials is None else trials
    seed = config.seed if seed is None else seed
    setup = build_system(config)

    _, _, base_run, _, _ = run_strategies(
        setup, iterations=config.misalign_iterations)
    u_star = base_run.controls
    base_final = float(np.linalg.norm(base_run.state.terminal - setup.a_dagger))

    base_coeffs = np.stack([s.coefficients for s in setup.shapes])
    e_flat = setup.basis.functions.reshape(-1, setup.basis.n_modes)
    mode_std = 1.0 / (1.0 + setup.basis.eigenvalues)
    sqrt_rho = setup.gibbs.sqrt_density
    deltas_pct, trial_deltas = [], []
    for eps in epsilons:
        per_trial = []
        for trial in range(trials):
            rng = np.random.Generator(np.random.Philox(key=(seed, trial)))
            coeffs = base_coeffs.copy()
            for j in range(len(setup.shapes)):
                raw = mode_std * rng.standard_normal(setup.basis.n_modes)
                field_vals = (e_flat @ raw).reshape(setup.grid.shape)
                weighted_l1 = setup.grid.integrate(np.abs(field_vals) * sqrt_rho)
                coeffs[j] += eps * raw / weighted_l1
            shapes = assembly.shapes_from_coefficients(coeffs, setup.basis,
                                                       setup.gibbs)
            coupling = assembly.assemble_couplings(setup.basis, shapes,
                                                   setup.gibbs)
            state = forward_solve(coupling, u_star, setup.a0, setup.time_grid)
            final = float(np.linalg.norm(state.terminal - setup.a_dagger))
            per_trial.append(100.0 * (final - base_final) / base_final)
        trial_deltas.append(per_trial)
        deltas_pct.append(float(np.mean(per_trial)))
    return MisalignmentStudy(config.config_hash, base_final, epsilons,
                             deltas_pct, trial_deltas)


# ---------------------------------------------------------------------------
# output files


def _write_csv(path: Path, header_cols: list[str], rows) -> None:
    lines = ["# " + ", ".join(header_cols)]
    for row in rows:
        lines.append(",".join(f"{v:.12g}" for v in row))
    path.write_text("\n".join(lines) + "\n")


def emit_outputs(report: ExperimentReport, out_dir, plots: bool = True) -> list[Path]:
    """Write the CSV bundle, summary, and figures for one report.

    CSV schema lines are '#'-prefixed and bit-stable; timings appear only
    in summary.txt (prefixed 'timing_') so the CSV bundle is reproducible
    byte for byte under identical configs and seeds.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    t = report.times
    names = [n for n in STRATEGY_ORDER if n in report.error_norms]
    path = out / "error_norms.csv"
    _write_csv(path, ["t [time]"] + [f"{n} [l2 coefficient error]" for n in names],
               zip(t, *(report.error_norms[n] for n in names)))
    paths.append(path)

    if report.controls is not None:
        path = out / "controls.csv"
        m = report.controls.n_controls
        _write_csv(path, ["t [time]"] + [f"u_{j + 1} [control amplitude]"
                                         for j in range(m)],
                   zip(t, *(report.controls.values[:, j] for j in range(m))))
        paths.append(path)

    if report.coefficients is not None:
        path = out / "coefficients.csv"
        n = report.coefficients.shape[1]
        _write_csv(path, ["t [time]"] + [f"a_{k} [spectral coefficient]"
                                         for k in range(n)],
                   (np.concatenate(([tv], row)) for tv, row
                    in zip(t, report.coefficients)))
        paths.append(path)

    if report.opt_run is not None:
        path = out / "iterations.csv"
        run = report.opt_run
        rows = [(k, c.total, c.terminal, c.running, c.control_energy,
                 run.grad_norms[k], run.step_sizes[k])
                for k, c in enumerate(run.costs)]
        _write_csv(path, ["k [iteration]", "cost_total", "cost_terminal",
                          "cost_running", "cost_control", "grad_norm", "gamma"],
                   rows)
        paths.append(path)

    if report.mc_rows:
        path = out / "mc_validation.csv"
        _write_csv(path, ["t [time]", "l1_distance", "l1_sampling_baseline"],
                   report.mc_rows)
        paths.append(path)

    summary = out / "summary.txt"
    summary.write_text(_summary_text(report))
    paths.append(summary)

    if plots:
        paths.extend(render_figures(report, out))
    return paths


def _summary_text(report: ExperimentReport) -> str:
    lines = [f"config_hash = {report.config_hash}", ""]
    finals = report.final_errors
    for name in STRATEGY_ORDER:
        if name in finals:
            lines.append(f"final_error_{name} = {finals[name]:.6e}")
    if "uncontrolled" in finals and "optimal" in finals and finals["optimal"] > 0:
        lines.append(f"error_reduction_factor = "
                     f"{finals['uncontrolled'] / finals['optimal']:.3f}")
    if report.opt_run is not None:
        lines.append(f"iterations = {report.opt_run.iterations}")
        lines.append(f"final_grad_norm = {report.opt_run.final_grad_norm:.6e}")
        lines.append(f"final_cost_total = {report.opt_run.final_cost.total:.6e}")
    lines.append(f"riccati_residual = {report.riccati_residual:.3e}")
    if report.eigenvalues is not None:
        head = ", ".join(f"{v:.4f}" for v in report.eigenvalues[:8])
        lines.append(f"eigenvalues_head = {head}")
        lines.append(f"eigenvalue_{len(report.eigenvalues)} = "
                     f"{report.eigenvalues[-1]:.6f}")
    for row in report.mc_rows:
        lines.append(f"mc_l1_t{row[0]:g} = {row[1]:.4f} "
                     f"(sampling baseline {row[2]:.4f})")
    lines.append("")
    for key, value in report.timings.items():
        lines.append(f"timing_{key} = {value:.2f} s")
    lines.append("")
    lines.append("# resolved configuration")
    lines.append(report.config.canonical())
    return "\n".join(lines)


def render_figures(report: ExperimentReport, out_dir) -> list[Path]:
    """Line plots of the CSV bundle (SVG, date metadata stripped)."""
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    paths = []
    meta = {"Date": None}
    t = report.times

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    styles = {"uncontrolled": "k-", "lqr": "b--", "optimal": "r-"}
    for name in STRATEGY_ORDER:
        if name in report.error_norms:
            ax.semilogy(t, np.maximum(report.error_norms[name], 1e-16),
                        styles[name], label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("error norm")
    ax.legend(frameon=False)
    fig.tight_layout()
    path = out / "error_norms.svg"
    fig.savefig(path, metadata=meta)
    plt.close(fig)
    paths.append(path)

    if report.controls is not None:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for j in range(report.controls.n_controls):
            ax.plot(t, report.controls.values[:, j], label=f"u_{j + 1}")
        ax.set_xlabel("t")
        ax.set_ylabel("control amplitude")
        ax.legend(frameon=False)
        fig.tight_layout()
        path = out / "controls.svg"
        fig.savefig(path, metadata=meta)
        plt.close(fig)
        paths.append(path)

    if report.coefficients is not None:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        shown = [k for k in (0, 1, 2, 5) if k < report.coefficients.shape[1]]
        for k in shown:
            ax.plot(t, report.coefficients[:, k], label=f"a_{k} (optimal)")
            if report.uncontrolled_coefficients is not None:
                ax.plot(t, report.uncontrolled_coefficients[:, k], "--",
                        label=f"a_{k} (uncontrolled)")
        ax.set_xlabel("t")
        ax.set_ylabel("coefficient")
        ax.legend(frameon=False, fontsize=8, ncol=2)
        fig.tight_layout()
        path = out / "coefficients.svg"
        fig.savefig(path, metadata=meta)
        plt.close(fig)
        paths.append(path)

    if report.opt_run is not None:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ks = np.arange(report.opt_run.iterations)
        ax.semilogy(ks, [c.total for c in report.opt_run.costs], label="cost")
        ax.semilogy(ks, report.opt_run.grad_norms, label="gradient norm")
        ax.set_xlabel("iteration")
        ax.legend(frameon=False)
        fig.tight_layout()
        path = out / "iterations.svg"
        fig.savefig(path, metadata=meta)
        plt.close(fig)
        paths.append(path)
    return paths


def write_misalignment_csv(study: MisalignmentStudy, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "misalignment.csv"
    rows = [(eps, delta) + tuple(per_trial)
            for eps, delta, per_trial in zip(study.epsilons, study.deltas_pct,
                                             study.trial_deltas)]
    n_trials = len(study.trial_deltas[0]) if study.trial_deltas else 0
    _write_csv(path, ["epsilon [l1 misalignment]", "mean_delta [percent]"]
               + [f"trial_{i + 1} [percent]" for i in range(n_trials)], rows)
    return path


__all__ = [
    "ExperimentConfig", "ExperimentReport", "MisalignmentStudy", "PRESETS",
    "SystemSetup", "build_system", "emit_outputs", "misalignment_study",
    "parse_config_file", "render_figures", "resolve_config", "run_experiment",
    "run_strategies", "write_misalignment_csv",
]
