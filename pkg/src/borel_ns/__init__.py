"""Borel-plane construction of periodic Navier-Stokes solutions.

The package solves the integral equation satisfied by the Borel transform
``U(k, p)`` of a spectrally truncated velocity field, builds its Taylor
series at ``p = 0``, resums it by Laplace transform and cross-checks the
result against classical Fourier time stepping.
"""

from .bessel import duhamel_invert, green_G, kernel_sup_scan
from .borel import BorelField, BorelGrid, apply_N, compute_v1, picard_solve, weighted_norm
from .config import RunConfig, emit_config, parse_config
from .errors import BorelNSError, NoConvergence
from .lemmas import LEMMAS, verify_inequality
from .norms import DecayParams, GevreyConstants, PaperConstants, alpha_min, l_max, norm_mu_beta
from .oracle import StepperConfig, evolve
from .pipeline import Pipeline, run_pipeline
from .spectral import SpectralField, WaveGrid, fourier_convolve, hodge_project, preset_field
from .summation import laplace_sum, physical_snapshot, truncated_series_error
from .taylor import gevrey_check, taylor_coefficients

__version__ = "0.1.0"

__all__ = [
    "BorelField", "BorelGrid", "BorelNSError", "DecayParams", "GevreyConstants", "LEMMAS",
    "NoConvergence", "PaperConstants", "Pipeline", "RunConfig", "SpectralField", "StepperConfig",
    "WaveGrid", "alpha_min", "apply_N", "compute_v1", "duhamel_invert", "emit_config", "evolve",
    "fourier_convolve", "gevrey_check", "green_G", "hodge_project", "kernel_sup_scan", "l_max",
    "laplace_sum", "norm_mu_beta", "parse_config", "physical_snapshot", "picard_solve",
    "preset_field", "run_pipeline", "taylor_coefficients", "truncated_series_error",
    "verify_inequality", "weighted_norm",
]
