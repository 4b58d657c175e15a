"""Sequential stopping rules and likelihood-ratio models.

The clipped recursion ``stat = max(stat + x, 0)`` is shared by ODIT (``x`` is
the outlier evidence D_t) and recursive CUSUM (``x`` is a log-likelihood
ratio). Batch CUSUM and the discrepancy statistic are computed from the same
prefix sums, so their first-crossing times can be compared exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Tuple

import numpy as np

from odit.errors import ConfigError, DataError, NumericError
from odit.neighbors import as_points


class DetectorStoppedError(RuntimeError):
    """Raised when a stopped detector is updated without a reset."""


@dataclass(frozen=True)
class _ClippedState:
    threshold: float
    statistic: float = 0.0
    t: int = 0
    stopped_at: Optional[int] = None

    def __post_init__(self):
        if not (self.threshold > 0 and math.isfinite(self.threshold)):
            raise ConfigError(f"threshold must be positive and finite, got {self.threshold!r}")

    @property
    def stopped(self) -> bool:
        return self.stopped_at is not None

    def reset(self):
        return type(self)(threshold=self.threshold)

    def _step(self, x: float):
        if self.stopped_at is not None:
            raise DetectorStoppedError(f"detector stopped at t={self.stopped_at}; reset before updating")
        stat = max(self.statistic + x, 0.0)
        t = self.t + 1
        alarm = stat >= self.threshold
        return replace(self, statistic=stat, t=t, stopped_at=t if alarm else None), alarm


@dataclass(frozen=True)
class OditState(_ClippedState):
    """ODIT accumulator of outlier evidence."""


@dataclass(frozen=True)
class CusumState(_ClippedState):
    """Recursive CUSUM accumulator of log-likelihood ratios."""


def odit_update(state: OditState, D: float) -> Tuple[OditState, bool]:
    return state._step(float(D))


def cusum_update(state: CusumState, llr: float) -> Tuple[CusumState, bool]:
    return state._step(float(llr))


def clipped_path(increments: Iterable[float]) -> np.ndarray:
    """Statistic after each step of the zero-clipped recursion, ignoring stopping.

    Uses the same arithmetic as :func:`odit_update`, so values are bit-identical.
    """
    out = []
    stat = 0.0
    for x in increments:
        stat = max(stat + float(x), 0.0)
        out.append(stat)
    return np.asarray(out, dtype=np.float64)


# --- batch statistics over a log-likelihood ratio sequence -----------------


def _llr_array(seq) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise DataError("sequence must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise DataError("sequence contains non-finite values")
    return arr


def _prefix_sums(arr: np.ndarray) -> np.ndarray:
    # P[0] = 0, P[t] = x_1 + ... + x_t, accumulated left to right
    return np.concatenate(([0.0], np.cumsum(arr)))


def cusum_batch_series(seq) -> np.ndarray:
    """``max_{1<=j<=t} sum_{i=j}^t x_i`` for every prefix length t."""
    P = _prefix_sums(_llr_array(seq))
    # window sum j..t is P[t] - P[j-1]; the best j uses the smallest earlier prefix
    return P[1:] - np.minimum.accumulate(P[:-1])


def cusum_batch_statistic(seq) -> float:
    return float(cusum_batch_series(seq)[-1])


def discrepancy_series(seq) -> np.ndarray:
    """Largest nonempty contiguous window sum within each prefix.

    Single pass, O(1) per sample: the best window ending at t starts right
    after the lowest earlier prefix sum.
    """
    arr = _llr_array(seq)
    out = np.empty(arr.size)
    prefix = 0.0
    lowest = 0.0
    best = -math.inf
    for i, x in enumerate(arr.tolist()):
        prefix += x
        best = max(best, prefix - lowest)
        lowest = min(lowest, prefix)
        out[i] = best
    return out


def discrepancy(seq) -> float:
    """Maximum sum over all nonempty contiguous windows."""
    return float(discrepancy_series(seq)[-1])


class Statistic(str, enum.Enum):
    BATCH_CUSUM = "batch-cusum"
    DISCREPANCY = "discrepancy"
    RECURSIVE = "recursive"


_SERIES = {
    Statistic.BATCH_CUSUM: cusum_batch_series,
    Statistic.DISCREPANCY: discrepancy_series,
    Statistic.RECURSIVE: lambda seq: clipped_path(_llr_array(seq)),
}


def statistic_series(kind, seq) -> np.ndarray:
    return _SERIES[Statistic(kind)](seq)


def first_crossing(series: np.ndarray, h: float) -> Optional[int]:
    """1-based index of the first entry >= h, or None."""
    hits = np.flatnonzero(np.asarray(series) >= h)
    return int(hits[0]) + 1 if hits.size else None


def stopping_times(series: np.ndarray, thresholds) -> np.ndarray:
    """First-crossing time for each threshold at once; ``len(series) + 1`` marks no crossing.

    Relies on the running maximum being nondecreasing, so the answer is
    monotone in the threshold by construction.
    """
    running = np.maximum.accumulate(np.asarray(series, dtype=np.float64))
    return np.searchsorted(running, np.asarray(thresholds, dtype=np.float64), side="left") + 1


def stopping_time(kind, seq, h: float) -> Optional[int]:
    if not h > 0:
        raise ConfigError(f"threshold must be positive, got {h!r}")
    return first_crossing(statistic_series(kind, seq), h)


# --- likelihood models -------------------------------------------------------


class Gaussian:
    """Multivariate normal with a precomputed Cholesky factor."""

    def __init__(self, mean, cov):
        mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise DataError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=0.0):
            raise NumericError("covariance matrix is not symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise NumericError("covariance is not positive definite; regularize the fit "
                               "(e.g. add a small multiple of the identity)") from exc
        diag = np.diag(chol)
        if diag.min() <= diag.max() * 1e-10:
            raise NumericError("covariance is numerically singular; regularize the fit "
                               "(e.g. add a small multiple of the identity)")
        self.mean = mean
        self.cov = cov
        self._chol = chol
        self._log_norm = -0.5 * mean.size * math.log(2 * math.pi) - float(np.sum(np.log(diag)))

    @classmethod
    def isotropic(cls, dim: int, sigma: float, mean=None) -> "Gaussian":
        mu = np.zeros(dim) if mean is None else mean
        return cls(mu, np.eye(dim) * sigma**2)

    @property
    def dim(self) -> int:
        return self.mean.size

    def logpdf(self, X) -> np.ndarray:
        X = as_points(X, dim=self.dim)
        z = np.linalg.solve(self._chol, (X - self.mean).T)
        return self._log_norm - 0.5 * np.sum(z * z, axis=0)


def fit_gaussian_ml(data) -> Tuple[np.ndarray, np.ndarray]:
    """Maximum-likelihood mean and covariance (normalized by N)."""
    X = as_points(data)
    n, d = X.shape
    if n <= d:
        raise NumericError(f"need more than d={d} points to fit a covariance, got {n}")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / n
    cov = 0.5 * (cov + cov.T)
    Gaussian(mean, cov)  # raises on a singular fit
    return mean, cov


class LikelihoodModel:
    """Pointwise log-likelihood ratio log f1(x) - log f0(x)."""

    dim: int

    def llr(self, X) -> np.ndarray:
        raise NotImplementedError


class GaussianMixtureLikelihood(LikelihoodModel):
    """f0 = N(0, sigma^2 I); f1 = (1 - eps) f0 + eps * Uniform([0, bound]^d).

    ``bound = 1`` gives the clairvoyant model of the simulated experiment;
    a smaller ``bound`` models a misspecified uniform support.
    """

    def __init__(self, dim: int, sigma: float, eps: float, bound: float = 1.0):
        if not sigma > 0:
            raise ConfigError(f"sigma must be positive, got {sigma!r}")
        if not 0.0 <= eps < 1.0:
            raise ConfigError(f"eps must lie in [0, 1) for a finite llr, got {eps!r}")
        if not bound > 0:
            raise ConfigError(f"uniform bound must be positive, got {bound!r}")
        self.dim, self.sigma, self.eps, self.bound = int(dim), float(sigma), float(eps), float(bound)
        self.f0 = Gaussian.isotropic(self.dim, self.sigma)
        self._log_uniform = -self.dim * math.log(self.bound)

    def __repr__(self) -> str:
        return (f"GaussianMixtureLikelihood(dim={self.dim}, sigma={self.sigma}, "
                f"eps={self.eps}, bound={self.bound})")

    def llr(self, X) -> np.ndarray:
        X = as_points(X, dim=self.dim)
        out = np.full(X.shape[0], math.log(1.0 - self.eps))
        if self.eps == 0.0:
            return out
        inside = np.all((X >= 0.0) & (X <= self.bound), axis=1)
        if np.any(inside):
            ratio = math.log(self.eps) + self._log_uniform - self.f0.logpdf(X[inside])
            out[inside] = np.logaddexp(math.log(1.0 - self.eps), ratio)
        return out


class GaussianPairLikelihood(LikelihoodModel):
    """f0 and f1 both multivariate normal (e.g. maximum-likelihood fits)."""

    def __init__(self, f0: Gaussian, f1: Gaussian):
        if f0.dim != f1.dim:
            raise DataError("f0 and f1 have different dimensions")
        self.f0, self.f1, self.dim = f0, f1, f0.dim

    @classmethod
    def fit(cls, nominal, anomalous) -> "GaussianPairLikelihood":
        return cls(Gaussian(*fit_gaussian_ml(nominal)), Gaussian(*fit_gaussian_ml(anomalous)))

    def llr(self, X) -> np.ndarray:
        return self.f1.logpdf(X) - self.f0.logpdf(X)


def log_likelihood_ratio(model: LikelihoodModel, x) -> float:
    return float(model.llr(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])
