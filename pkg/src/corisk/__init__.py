"""Multivariate co-risk measures (MCoVaR, MCoES, MMME) under copula dependence."""

__version__ = "0.1.0"

from .copulas import (ClaytonCopula, DistortionContext, GaussianCopula, GumbelCopula, IndependenceCopula,
                      MixtureCopula, tail_dependence)
from .errors import (ConditioningError, CoriskError, InputError, InsufficientDataError, NumericError,
                     RatioUndefinedError, ValidationFailure)
from .marginals import GPD, Exponential, Gamma, ParetoI, SemiparametricGPDTail, Weibull, fit_gpd, fit_gpd_excesses
from .measures import JointModel, MeasureRequest, RiskReport, contributions, es, mcoes, mcovar, mmme, var

__all__ = [
    "ClaytonCopula", "DistortionContext", "GaussianCopula", "GumbelCopula", "IndependenceCopula", "MixtureCopula",
    "tail_dependence", "ConditioningError", "CoriskError", "InputError", "InsufficientDataError", "NumericError",
    "RatioUndefinedError", "ValidationFailure", "GPD", "Exponential", "Gamma", "ParetoI", "SemiparametricGPDTail",
    "Weibull", "fit_gpd", "fit_gpd_excesses", "JointModel", "MeasureRequest", "RiskReport", "contributions", "es",
    "mcoes", "mcovar", "mmme", "var",
]
