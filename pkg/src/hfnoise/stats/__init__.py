"""Regression, kernel and commonality tools for daily estimate panels."""

from .commonality import CommonalityReport, commonality, leave_one_out_average, sign_test
from .nonparametric import IndexModelFit, fit_single_index, kernel_regress, silverman_bandwidth
from .regression import (RegressionResult, cluster_cov, default_nw_lags, newey_west_cov, ols,
                         white_cov)

__all__ = [
    "CommonalityReport", "commonality", "leave_one_out_average", "sign_test",
    "IndexModelFit", "fit_single_index", "kernel_regress", "silverman_bandwidth",
    "RegressionResult", "cluster_cov", "default_nw_lags", "newey_west_cov", "ols", "white_cov",
]
