"""Composite claim-severity models, threshold selection and Monte Carlo reserves."""

__version__ = "0.1.0"

from .composite import (CompositeModel, PMode, build_composite, composite_cdf, composite_pdf,
                        fit_composite, p_below_empirical, p_below_theoretical, sample_composite)
from .data import ClaimDataset, load_claims
from .distributions import DistributionSpec, Family, TruncatedSpec
from .fitting import FitMode, fit_bulk, fit_pareto_tail, fit_scollnik
from .reserve import ReserveQuery, estimate_reserve, estimate_reserves
from .study import ExperimentConfig, load_config, run_study
from .tailselect import Method, select

__all__ = [
    "ClaimDataset", "CompositeModel", "DistributionSpec", "ExperimentConfig", "Family", "FitMode",
    "Method", "PMode", "ReserveQuery", "TruncatedSpec", "build_composite", "composite_cdf",
    "composite_pdf", "estimate_reserve", "estimate_reserves", "fit_bulk", "fit_composite",
    "fit_pareto_tail", "fit_scollnik", "load_claims", "load_config", "p_below_empirical",
    "p_below_theoretical", "run_study", "sample_composite", "select",
]
