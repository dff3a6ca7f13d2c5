"""Finite-key decoy-state BB84 key rates via McDiarmid-type deviation bounds."""

from mcdqkd.bounds import (
    SampleSizes,
    SecurityBudget,
    ZBasisEstimates,
    derive_sample_sizes,
    e_p_upper,
    gamma_bar,
    mcdiarmid_deviation,
    z_basis_estimates,
)
from mcdqkd.channel import (
    REFERENCE_CHANNEL,
    ChannelParams,
    FiniteSample,
    ObservedStats,
    error_gain,
    gain,
    observe,
    sample_finite,
)
from mcdqkd.decoy import (
    DecoyCoefficients,
    IntensityProfile,
    compute_coefficients,
    elementary_symmetric,
    width,
)
from mcdqkd.keyrate import (
    KeyRateReport,
    asymptotic_rate,
    binary_entropy,
    compute_b,
    key_rate,
    lambda_ec,
    solve_security_fixed_point,
)
from mcdqkd.optimize import OptimizationConfig, OptimizationResult, optimize

__version__ = "0.1.0"

__all__ = [
    "REFERENCE_CHANNEL",
    "ChannelParams",
    "DecoyCoefficients",
    "FiniteSample",
    "IntensityProfile",
    "KeyRateReport",
    "ObservedStats",
    "OptimizationConfig",
    "OptimizationResult",
    "SampleSizes",
    "SecurityBudget",
    "ZBasisEstimates",
    "asymptotic_rate",
    "binary_entropy",
    "compute_b",
    "compute_coefficients",
    "derive_sample_sizes",
    "e_p_upper",
    "elementary_symmetric",
    "error_gain",
    "gain",
    "gamma_bar",
    "key_rate",
    "lambda_ec",
    "mcdiarmid_deviation",
    "observe",
    "optimize",
    "sample_finite",
    "solve_security_fixed_point",
    "width",
    "z_basis_estimates",
]
