"""Exact likelihood, simulation and Bayesian fitting for the mean-field Ising
model with a three-body coupling."""

from ._validation import ConvergenceError, DomainError
from .core import (
    ModelSummary,
    Theta,
    entropy_I,
    free_energy_density,
    hamiltonian_density,
    lemma1_gap,
    log_count,
    log_count_table,
    model_summary,
    pressure_limit,
    solve_consistency,
    spectrum,
)
from .diagnostics import (
    CoverageResult,
    DiagnosticsReport,
    coverage_study,
    density_compare,
    gelman_rubin,
    pmf_modes,
    summarize,
    theoretical_mean,
    theoretical_mean_trace,
)
from .estimator import MeanFieldIsing
from .posterior import (
    IsingPosterior,
    PosteriorEval,
    PriorSpec,
    evaluate,
    grad_log_posterior,
    log_likelihood,
    log_posterior,
    metric_G,
)
from .samplers import (
    AMH,
    HYBRID,
    KERNELS,
    RMAHMC,
    Chain,
    NumericalError,
    SamplerConfig,
    StandardGaussian,
    amh_step,
    dispersed_starts,
    grid_init,
    rmahmc_step,
    run_chain,
    run_chains,
)
from .scenarios import SCENARIOS, reproduce
from .simulate import Dataset, RngSpec, empirical_moments, read_dataset, sample_dataset

__version__ = "0.1.0"
