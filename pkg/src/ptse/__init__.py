"""HMM-based ensembling of member quantile forecasts."""

from ._accel import backend
from .estimator import EnsembleModel, FitConfig, deserialize, fit, loglik, serialize
from .frame import TimeSeriesFrame, build_residuals
from .hmm import forward_backward, frobenius_decay, stationary_distribution, update_initial, update_transition
from .mqe import MqeEmission, emission_cdf, emission_pdf, fit_emission, solve_side_constants
from .predictor import EnsembleForecast, ForecastInput, ensemble_cdf, ensemble_pdf, ensemble_quantile, q_risk
from .simulator import ConvergenceReport, SimConfig, random_transition_matrix, run_convergence_experiment, sample_hmm
from .wkde import KdeModel, WeightedSample, kde_cdf, kde_pdf, select_bandwidth

__version__ = "0.1.0"

__all__ = [
    "ConvergenceReport",
    "EnsembleForecast",
    "EnsembleModel",
    "FitConfig",
    "ForecastInput",
    "KdeModel",
    "MqeEmission",
    "SimConfig",
    "TimeSeriesFrame",
    "WeightedSample",
    "backend",
    "build_residuals",
    "deserialize",
    "emission_cdf",
    "emission_pdf",
    "ensemble_cdf",
    "ensemble_pdf",
    "ensemble_quantile",
    "fit",
    "fit_emission",
    "forward_backward",
    "frobenius_decay",
    "kde_cdf",
    "kde_pdf",
    "loglik",
    "q_risk",
    "random_transition_matrix",
    "run_convergence_experiment",
    "sample_hmm",
    "select_bandwidth",
    "serialize",
    "solve_side_constants",
    "stationary_distribution",
    "update_initial",
    "update_transition",
]
