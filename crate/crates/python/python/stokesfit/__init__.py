"""Gaussian-state reconstruction from generalized Stokes interferometry.

Thin Python surface over the Rust core: state and reference types,
analytic moment oracles, a reproducible Monte Carlo sampler, and the
family of moment-inversion estimators.
"""

from stokesfit._native import (
    DEFAULT_ANGLES,
    CalibrationReport,
    GaussianParams,
    ReferenceSpec,
    SignalEstimate,
    StokesMomentSet,
    __version__,
    calibrate_ordering,
    estimate_cosine_fit,
    estimate_displaced_symmetric,
    estimate_gaussian_s02,
    estimate_general,
    estimate_squeezed_signal,
    estimate_thermal_reference,
    mean_s0,
    mean_s2,
    moment_set,
    sample_moments,
    second_s0,
    second_s2,
)

__all__ = [
    "DEFAULT_ANGLES",
    "CalibrationReport",
    "GaussianParams",
    "ReferenceSpec",
    "SignalEstimate",
    "StokesMomentSet",
    "__version__",
    "calibrate_ordering",
    "estimate_cosine_fit",
    "estimate_displaced_symmetric",
    "estimate_gaussian_s02",
    "estimate_general",
    "estimate_squeezed_signal",
    "estimate_thermal_reference",
    "mean_s0",
    "mean_s2",
    "moment_set",
    "sample_moments",
    "second_s0",
    "second_s2",
]
