"""Hermite-spectral lab for randomized cubic NLS through the lens transform."""

from .diagnostics import (
    KStatistic,
    RateFit,
    StrichartzPair,
    TailResolutionWarning,
    energy,
    energy_audit,
    extract_scattering,
    fit_decay,
    is_admissible,
    k_statistic,
    lebesgue_norm,
    rate_fit,
    regularity_ceiling,
    sobolev_norm,
    strichartz_norm,
    tail_fit,
)
from .evolution import EvolutionConfig, Trajectory, duhamel_residual, evolve, nonlinear_step, strang_step
from .hermite import (
    BasisTable,
    GridField,
    SpectralField,
    analyze,
    apply_gradient,
    apply_weight,
    build_basis,
    linear_propagate,
    mehler_reference,
    synthesize,
)
from .lens import conjugation_check, lens_forward, lens_inverse, t_of_tau, tau_of_t
from .sampler import GammaProfile, RandomLaw, build_gamma, check_admissible, mgf_audit, sample
from .snapshot import SnapshotFormatError, load_snapshot, save_snapshot

__version__ = "0.1.0"
