import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from odit.detectors import (CusumState, DetectorStoppedError, Gaussian, GaussianMixtureLikelihood,
                            GaussianPairLikelihood, OditState, clipped_path, cusum_batch_series,
                            cusum_batch_statistic, cusum_update, discrepancy, discrepancy_series,
                            fit_gaussian_ml, log_likelihood_ratio, odit_update, stopping_time,
                            stopping_times)
from odit.errors import ConfigError, DataError, NumericError


def batch_cusum_brute(seq):
    t = len(seq)
    return max(math.fsum(seq[j:t]) for j in range(t))


def discrepancy_brute(seq):
    t = len(seq)
    return max(math.fsum(seq[a:b + 1]) for a in range(t) for b in range(a, t))


def first_time(values, h):
    for t, v in enumerate(values, start=1):
        if v >= h:
            return t
    return None


finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


# --- ODIT / recursive CUSUM state machines ---------------------------------

def test_odit_clip_at_zero():
    state, alarm = odit_update(OditState(threshold=1.0), -2.0)
    assert state.statistic == 0.0 and not alarm and state.t == 1


def test_odit_alarm():
    state, alarm = odit_update(OditState(threshold=2.0, statistic=1.5, t=4), 1.0)
    assert state.statistic == 2.5 and alarm and state.stopped_at == 5


@pytest.mark.parametrize("h", [1e-9, 0.5, 100.0])
def test_odit_negative_stream_never_alarms(h, rng):
    state = OditState(threshold=h)
    for D in -rng.exponential(size=200):
        state, alarm = odit_update(state, D)
        assert not alarm and state.statistic == 0.0


def test_update_after_stop_raises():
    state, alarm = odit_update(OditState(threshold=1.0), 5.0)
    assert alarm
    with pytest.raises(DetectorStoppedError):
        odit_update(state, 0.0)
    fresh = state.reset()
    assert fresh.statistic == 0.0 and fresh.t == 0 and fresh.stopped_at is None


@pytest.mark.parametrize("h", [0.0, -1.0, math.inf, math.nan])
def test_threshold_must_be_positive(h):
    with pytest.raises(ConfigError):
        OditState(threshold=h)


def test_cusum_examples():
    s, alarm = cusum_update(CusumState(threshold=4.0), -1.0)
    assert s.statistic == 0.0 and not alarm
    s, alarm = cusum_update(CusumState(threshold=4.0, statistic=3.0), 2.0)
    assert s.statistic == 5.0 and alarm


@settings(max_examples=200)
@given(st.lists(finite, min_size=1, max_size=60))
def test_recursion_equals_clipped_batch(seq):
    state = CusumState(threshold=1e300)
    for t, x in enumerate(seq, start=1):
        state, _ = cusum_update(state, x)
        assert state.statistic == pytest.approx(max(0.0, batch_cusum_brute(seq[:t])), abs=1e-9)


def test_replay_is_bit_identical(rng):
    D = rng.normal(size=300)
    runs = []
    for _ in range(2):
        state, trace = OditState(threshold=1e9), []
        for d in D:
            state, _ = odit_update(state, d)
            trace.append(state.statistic)
        runs.append(trace)
    assert runs[0] == runs[1]
    assert np.array_equal(np.asarray(runs[0]), clipped_path(D))


# --- batch statistics --------------------------------------------------------

def test_batch_statistic_examples():
    assert cusum_batch_statistic([1, -2, 3]) == 3
    assert cusum_batch_statistic([0, 0, 0]) == 0
    assert cusum_batch_statistic([-1.7]) == -1.7


def test_discrepancy_examples():
    assert discrepancy([1, -2, 3, -1, 2]) == 4
    assert discrepancy([-3, -1, -2]) == -1
    assert discrepancy([5]) == 5


@pytest.mark.parametrize("fn", [cusum_batch_statistic, discrepancy])
def test_empty_sequence_rejected(fn):
    with pytest.raises(DataError):
        fn([])


@settings(max_examples=200)
@given(st.lists(finite, min_size=1, max_size=40))
def test_statistics_match_brute_force(seq):
    assert cusum_batch_statistic(seq) == pytest.approx(batch_cusum_brute(seq), abs=1e-9)
    assert discrepancy(seq) == pytest.approx(discrepancy_brute(seq), abs=1e-9)
    # the single-pass discrepancy and the prefix series agree exactly
    assert discrepancy(seq) == discrepancy_series(seq)[-1]


def test_stopping_time_example():
    for kind in ("batch-cusum", "discrepancy", "recursive"):
        assert stopping_time(kind, [0.5, 0.6, 0.7], 1.0) == 2
        assert stopping_time(kind, [-0.5, -0.1, -2.0], 1.0) is None


def test_stopping_time_rejects_nonpositive_h():
    with pytest.raises(ConfigError):
        stopping_time("discrepancy", [1.0], 0.0)


def test_discrepancy_and_batch_differ_below_maximum():
    # after a peak the batch statistic falls while the discrepancy holds
    seq = [2.0, -1.0]
    assert list(cusum_batch_series(seq)) == [2.0, 1.0]
    assert list(discrepancy_series(seq)) == [2.0, 2.0]


@settings(max_examples=300)
@given(st.lists(finite, min_size=1, max_size=80), st.floats(0.01, 20))
def test_theorem_equivalence_property(seq, h):
    b = stopping_time("batch-cusum", seq, h)
    assert b == stopping_time("discrepancy", seq, h)
    brute = [batch_cusum_brute(seq[:t]) for t in range(1, len(seq) + 1)]
    assume(all(abs(v - h) > 1e-9 for v in brute))  # rounding can flip an exact tie
    assert b == first_time(brute, h)


@settings(max_examples=200)
@given(st.lists(finite, min_size=1, max_size=80), st.floats(0.01, 10), st.floats(0.01, 10))
def test_stopping_time_monotone_in_threshold(seq, h1, h2):
    h1, h2 = sorted((h1, h2))
    inf = len(seq) + 1
    for kind in ("batch-cusum", "discrepancy", "recursive"):
        t1 = stopping_time(kind, seq, h1) or inf
        t2 = stopping_time(kind, seq, h2) or inf
        assert t1 <= t2


def test_vectorized_stopping_times_match(rng):
    path = clipped_path(rng.normal(size=400))
    hs = [0.1, 1.0, 3.0, 10.0, 1e6]
    expected = [first_crossing or len(path) + 1
                for first_crossing in (first_time(path, h) for h in hs)]
    assert list(stopping_times(path, hs)) == expected


# --- likelihood models --------------------------------------------------------

def test_llr_outside_uniform_support():
    m = GaussianMixtureLikelihood(2, 0.1, 0.2, bound=0.9)
    for x in ([-0.3, 0.1], [0.95, 0.5], [2.0, 2.0]):
        assert log_likelihood_ratio(m, x) == math.log(0.8)
    assert math.log(0.8) == pytest.approx(-0.2231, abs=1e-4)


def test_llr_zero_contamination(rng):
    m = GaussianMixtureLikelihood(2, 0.1, 0.0)
    assert np.all(m.llr(rng.uniform(-1, 2, size=(50, 2))) == 0.0)


def test_llr_positive_where_uniform_dominates():
    m = GaussianMixtureLikelihood(2, 0.1, 0.2, bound=1.0)
    f0 = multivariate_normal(np.zeros(2), 0.01 * np.eye(2)).pdf([0.5, 0.5])
    expected = math.log(0.8 * f0 + 0.2 * 1.0) - math.log(f0)
    got = log_likelihood_ratio(m, [0.5, 0.5])
    assert got > 0
    assert got == pytest.approx(expected, rel=1e-9)


def test_llr_inside_support_matches_density_ratio(rng):
    m = GaussianMixtureLikelihood(3, 0.3, 0.35, bound=0.8)
    X = rng.uniform(0, 0.8, size=(30, 3))
    f0 = multivariate_normal(np.zeros(3), 0.09 * np.eye(3)).pdf(X)
    expected = np.log(0.65 * f0 + 0.35 / 0.8 ** 3) - np.log(f0)
    assert np.allclose(m.llr(X), expected, rtol=1e-10)


def test_gaussian_logpdf_matches_scipy(rng):
    A = rng.normal(size=(3, 3))
    cov = A @ A.T + 0.5 * np.eye(3)
    mu = rng.normal(size=3)
    X = rng.normal(size=(20, 3))
    assert np.allclose(Gaussian(mu, cov).logpdf(X), multivariate_normal(mu, cov).logpdf(X), rtol=1e-10)


def test_gaussian_pair_llr(rng):
    nominal = rng.normal(size=(500, 2))
    anomalous = rng.normal(loc=1.0, scale=2.0, size=(500, 2))
    m = GaussianPairLikelihood.fit(nominal, anomalous)
    x = np.array([[0.3, -0.2]])
    m0, c0 = fit_gaussian_ml(nominal)
    m1, c1 = fit_gaussian_ml(anomalous)
    expected = multivariate_normal(m1, c1).logpdf(x[0]) - multivariate_normal(m0, c0).logpdf(x[0])
    assert m.llr(x)[0] == pytest.approx(expected, rel=1e-10)


def test_mixture_rejects_eps_one():
    with pytest.raises(ConfigError):
        GaussianMixtureLikelihood(2, 0.1, 1.0)


def test_fit_singular():
    with pytest.raises(NumericError, match="regularize"):
        fit_gaussian_ml([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])


def test_fit_needs_more_points_than_dim():
    with pytest.raises(NumericError):
        fit_gaussian_ml([[1.0, 1.0], [1.0, 2.0]])


def test_fit_symmetric_mean():
    data = np.array([[1.0, 2.0], [-1.0, -2.0], [2.0, -1.0], [-2.0, 1.0]])
    mean, cov = fit_gaussian_ml(data)
    assert np.allclose(mean, 0.0, atol=1e-15)
    assert np.allclose(cov, data.T @ data / 4)


def test_fit_recovers_scale(rng):
    mean, cov = fit_gaussian_ml(rng.normal(scale=0.1, size=(10000, 2)))
    assert np.all(np.abs(np.sqrt(np.diag(cov)) / 0.1 - 1) < 0.05)
    assert np.allclose(cov, cov.T)
