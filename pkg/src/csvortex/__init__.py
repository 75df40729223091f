"""Doubly periodic self-dual vortices on a flat torus.

Generalized Chern-Simons, generalized Abelian Higgs and Taubes equations are
solved by monotone iteration from the supersolution w0 = -v0; the critical
coupling is bracketed by bisection.
"""
from .critical import (
    CriticalScan,
    find_critical_lambda,
    kappa_bound,
    necessary_bound,
    verify_lambda_monotonicity,
    verify_S_monotonicity,
)
from .domain import (
    GridSpec,
    ScalarField,
    TorusDomain,
    VortexConfiguration,
    gradient_squared,
    helmholtz_solve,
    integrate,
    laplacian,
)
from .errors import ConfigurationError, ContractError, DomainError, ScanError, SingularityError, VortexError
from .greens import BackgroundField, build_background, crosscheck_spectral, greens_theta
from .observables import PhysicalFields, energy_flux_charge, quantization_integral, reconstruct_fields
from .solver import (
    SolveConfig,
    SolveOutcome,
    Status,
    SubsolutionCertificate,
    build_subsolution,
    monotone_solve,
    residual,
    verify_maximality,
)
from .transform import ModelKind, forward_F, inverse_G, nonlinearity, nonlinearity_slope_bound

__all__ = [
    "BackgroundField",
    "ConfigurationError",
    "ContractError",
    "CriticalScan",
    "DomainError",
    "GridSpec",
    "ModelKind",
    "PhysicalFields",
    "ScalarField",
    "ScanError",
    "SingularityError",
    "SolveConfig",
    "SolveOutcome",
    "Status",
    "SubsolutionCertificate",
    "TorusDomain",
    "VortexConfiguration",
    "VortexError",
    "build_background",
    "build_subsolution",
    "crosscheck_spectral",
    "energy_flux_charge",
    "find_critical_lambda",
    "forward_F",
    "gradient_squared",
    "greens_theta",
    "helmholtz_solve",
    "integrate",
    "inverse_G",
    "kappa_bound",
    "laplacian",
    "monotone_solve",
    "necessary_bound",
    "nonlinearity",
    "nonlinearity_slope_bound",
    "quantization_integral",
    "reconstruct_fields",
    "residual",
    "verify_S_monotonicity",
    "verify_lambda_monotonicity",
    "verify_maximality",
]
