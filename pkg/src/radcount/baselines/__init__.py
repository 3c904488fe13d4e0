"""Classical regressors over the 18-dim feature vectors."""

from ..metrics import round_and_clamp
from .forest import RegressionTree, RfModel, rf_fit, rf_predict
from .knn import KnnModel, knn_fit, knn_predict, regularized_covariance
from .search import (FAMILIES, GRIDS, FittedModel, SearchReport, Standardizer, fit_family,
                     grid_search_model)
from .svr import ConvergenceError, SvrModel, kernel_matrix, svr_fit, svr_predict

__all__ = [
    "FAMILIES", "GRIDS", "ConvergenceError", "FittedModel", "KnnModel", "RegressionTree", "RfModel",
    "SearchReport", "Standardizer", "SvrModel", "fit_family", "grid_search_model", "kernel_matrix",
    "knn_fit", "knn_predict", "regularized_covariance", "rf_fit", "rf_predict", "round_and_clamp",
    "svr_fit", "svr_predict",
]
