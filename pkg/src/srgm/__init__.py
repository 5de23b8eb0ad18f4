"""Sparse directed random graph model: l1-penalized fits, tuning, inference and bias experiments."""
__version__ = "0.1.0"

from ._accel import BACKEND, HAS_NUMBA
from .errors import (DataFormatError, DimensionMismatchError, InvalidPairError,
                     InvalidProbabilityError, NoSolutionError, NotConvergedError,
                     NumericalFailureError, SingularMatrixError, SRGMError)
from .graph import (ComponentDecomposition, DirectedGraph, UndirectedView, components, degrees,
                    read_edge_list, sample_er, sample_sbm2, sample_srgm, write_edge_list)
from .model import (EdgeCovariates, RescaledTheta, SparsityProfile, Theta, gram_adjusted,
                    link_prob, max_predictor, nll, nll_grad, read_covariates, rescale,
                    unrescale, write_covariates)
from .solver import (FitConfig, FitResult, PathResult, fit, fit_rescaled, kkt_check,
                     lambda_grid, lambda_max, path)
from .tuning import HeuristicInputs, bic, choose_c_bound, heuristic_lambda, select_bic
from .inference import InferenceReport, invert_sigma_xi, sigma_xi, wald_ci
from .bias import bias_curve, er_bias_experiment, eta_lambda, sbm_bias_experiment
from .diagnostics import (ConditionReport, check_compatibility, check_dependency,
                          check_incoherence, excess_risk, q_matrix)
