"""Fréchet means, modulation curves and smeariness on concrete manifolds."""

from .geometry import (
    Circle,
    CutLocusError,
    Euclidean,
    FlatTorus,
    GeometryMismatch,
    KendallPlanar,
    ManifoldPoint,
    Sphere,
    TangentVector,
    dist,
    exp,
    in_cut_locus,
    log,
    tangent_basis,
)
from .frechet import (
    DiscreteMixture,
    EmptySample,
    FrechetResult,
    MixtureOf,
    PointMass,
    SolverConfig,
    VonMisesCircle,
    empirical_mean,
    frechet_value,
    population_mean,
    variance,
)
from .lab import (
    ModulationCurve,
    SmearinessProfile,
    classify_regime,
    construct_directional_smeary,
    construct_kappa_mixture,
    directional_construction,
    estimate_rate,
    gclt_covariance,
    hessian_closed_form,
    hessian_fd,
    modulation_curve,
    smeary_circle_base,
    solve_t,
    solve_t_empirical,
)
from .inference import PowerReport, TestResult, bootstrap_test, power_study, quantile_test
from .buckles import BuckleParams, sample_buckle, sample_group

__version__ = "0.1.0"
