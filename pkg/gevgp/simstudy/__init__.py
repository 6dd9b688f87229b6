"""Simulation study: true surfaces, simulated data, metrics and a reference sampler."""

from .metropolis import MetropolisReport, metropolis_reference
from .refit import MetricsReport, RefitReport, metrics, refit_check, run_simulation
from .surfaces import SurfaceSpec, make_lattice, simulate_dataset, simulate_from_params, true_surfaces

__all__ = [
    "MetricsReport",
    "MetropolisReport",
    "RefitReport",
    "SurfaceSpec",
    "make_lattice",
    "metrics",
    "metropolis_reference",
    "refit_check",
    "run_simulation",
    "simulate_dataset",
    "simulate_from_params",
    "true_surfaces",
]
