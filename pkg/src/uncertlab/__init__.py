"""Uncertainty workbench for physical and virtual measurement.

Two complementary toolchains behind one API. The propagation side takes
a closed-form measurement model with distributional input quantities
and produces a standard uncertainty, an expanded interval, and a
per-input budget, by exact linear algebra where the model is affine,
by first- or second-order series expansion, or by chunked Monte Carlo
with an empirical coverage interval. The regression side learns a
virtual measurement from reference data: a heteroscedastic Bayesian
polynomial model trained with Gaussian variational inference, whose
predictions separate noise variance from model-weight variance and
carry the same expanded-interval semantics. Both kinds of result feed
the conformity module, which turns an interval plus specification
limits into an accept / reject / undecided zone with guard bands.
"""

__version__ = "0.1.0"

from .conformity import ConformityDecision, Specification, classify, classify_virtual
from .conjugate import ConjugatePosterior, conjugate_posterior, conjugate_predictive
from .dataset import Dataset, DatasetSummary, ingest_dataset, ingest_parts, make_dataset
from .distributions import (Gaussian, InputQuantity, JointInputModel,
                            Rectangular, Triangular, sample)
from .errors import (ConfigError, DatasetError, DivergenceError, DomainError,
                     EvaluationError, MonteCarloError, ParseError,
                     UncertLabError)
from .expr import MeasurementModelExpr, evaluate, format_expression, parse_model
from .propagation import (EmpiricalCDF, MeasurementResult, implied_coverage,
                          propagate_analytic, propagate_monte_carlo,
                          propagate_taylor1, propagate_taylor2,
                          sensitivity_budget, summarize)
from .regression import BayesianVMModel, build_model, log_likelihood
from .vi import (TrainResult, VariationalPosterior, VIConfig,
                 VirtualMeasurementResult, free_energy, kl_gaussian, predict,
                 train_vi)

__all__ = [
    "__version__",
    "BayesianVMModel",
    "ConfigError",
    "ConformityDecision",
    "ConjugatePosterior",
    "Dataset",
    "DatasetError",
    "DatasetSummary",
    "DivergenceError",
    "DomainError",
    "EmpiricalCDF",
    "EvaluationError",
    "Gaussian",
    "InputQuantity",
    "JointInputModel",
    "MeasurementModelExpr",
    "MeasurementResult",
    "MonteCarloError",
    "ParseError",
    "Rectangular",
    "Specification",
    "TrainResult",
    "Triangular",
    "UncertLabError",
    "VIConfig",
    "VariationalPosterior",
    "VirtualMeasurementResult",
    "build_model",
    "classify",
    "classify_virtual",
    "conjugate_posterior",
    "conjugate_predictive",
    "evaluate",
    "format_expression",
    "free_energy",
    "implied_coverage",
    "ingest_dataset",
    "ingest_parts",
    "kl_gaussian",
    "log_likelihood",
    "make_dataset",
    "parse_model",
    "predict",
    "propagate_analytic",
    "propagate_monte_carlo",
    "propagate_taylor1",
    "propagate_taylor2",
    "sample",
    "sensitivity_budget",
    "summarize",
    "train_vi",
]
