"""Simulation laboratory for the superlinear stochastic heat equation."""

from .spectral import (
    DIRICHLET,
    NEUMANN,
    PERIODIC,
    DomainSpec,
    GridField,
    SpectralBasis,
    SpectralField,
    build_basis,
    dirichlet_mass,
    eigenfunction_eval,
    heat_kernel_decay_fit,
    heat_kernel_eval,
    semigroup_apply,
    to_grid,
    to_spectral,
)
from .noise import (
    DecayReport,
    NoiseIncrement,
    RieszKernel,
    SpectralKernel,
    WhiteNoise,
    critical_exponent,
    double_integral,
    kernel_eval,
    kernel_params,
    make_sampler,
    sample_increment,
    verify_decay,
)
from .stepping import (
    BlowThroughError,
    SigmaSpec,
    SimState,
    Stepper,
    TrajectoryContext,
    TrajectoryError,
    TrajectoryRecord,
    build_context,
    initial_field,
    run_trajectory,
    sigma_eval,
    step,
)
from .diagnostics import (
    DoobReport,
    DoublingEvent,
    MartingaleMeanReport,
    MomentProbeReport,
    QVReport,
    convolution_moment_probe,
    convolution_variance_series,
    detect_doubling,
    doob_check,
    doubling_threshold_level,
    doubling_window,
    martingale_mean_check,
    moment_admissible,
    qv_bound_check,
    up_event_count,
)
from .config import ConfigError, SimConfig, config_hash, parse_config
from .ensemble import (
    AssumptionReport,
    EnsembleResult,
    SweepResult,
    load_ensemble,
    run_ensemble,
    sweep_gamma,
    verify_assumptions,
    write_trajectory_csv,
)

__version__ = "0.1.0"
