"""Online nonparametric anomaly detection: BP-GEM outlier evidence accumulated by a CUSUM-style recursion."""

__version__ = "0.1.0"

from odit.detectors import (
    CusumState,
    GaussianMixtureLikelihood,
    GaussianPairLikelihood,
    OditState,
    cusum_batch_statistic,
    cusum_update,
    discrepancy,
    fit_gaussian_ml,
    log_likelihood_ratio,
    odit_update,
    stopping_time,
)
from odit.errors import ArchiveError, ConfigError, DataError, NumericError, OditError
from odit.gem import GemModel, GemParams, outlier_decide, outlier_score, train_baseline
from odit.neighbors import NeighborIndex, build_index, euclidean_distance, knn_query

__all__ = [
    "ArchiveError", "ConfigError", "CusumState", "DataError", "GaussianMixtureLikelihood",
    "GaussianPairLikelihood", "GemModel", "GemParams", "NeighborIndex", "NumericError",
    "OditError", "OditState", "build_index", "cusum_batch_statistic", "cusum_update",
    "discrepancy", "euclidean_distance", "fit_gaussian_ml", "knn_query", "log_likelihood_ratio",
    "odit_update", "outlier_decide", "outlier_score", "stopping_time", "train_baseline",
]
