import itertools

import numpy as np
import pytest
from scipy.stats import multivariate_normal, spearmanr

from odit.errors import ConfigError, DataError
from odit.gem import (Decision, GemParams, _partition_indices, outlier_decide, outlier_score,
                      partition_training, total_edge_length, train_baseline)
from odit.neighbors import build_index
from odit.simlab import gen_nominal


def lengths_by_sorting(points, ref, k, s, gamma):
    """Oracle: total edge length from a fully sorted distance list."""
    out = []
    for p in points:
        d = np.sort(np.linalg.norm(ref - p, axis=1))
        out.append(sum(d[l - 1] ** gamma for l in range(k - s + 1, k + 1)))
    return np.array(out)


def test_total_edge_length_nearest():
    p = GemParams(k=1, s=1, gamma=1.0)
    assert total_edge_length([0.2, 0.0], build_index([[0, 0], [1, 0]]), p) == pytest.approx(0.2)


def test_total_edge_length_on_reference_point():
    p = GemParams(k=1, s=1, gamma=1.0)
    assert total_edge_length([1.0, 0.0], build_index([[0, 0], [1, 0]]), p) == 0.0


def test_total_edge_length_trailing_neighbors(rng):
    ref = rng.normal(size=(40, 2))
    q = rng.normal(size=2)
    p = GemParams(k=3, s=2, gamma=2.0)
    d = np.sort(np.linalg.norm(ref - q, axis=1))
    assert total_edge_length(q, build_index(ref), p) == pytest.approx(d[1] ** 2 + d[2] ** 2, rel=1e-12)


def test_partition_full_scale_sizes(rng):
    data = rng.normal(size=(10000, 2))
    x1, x2 = partition_training(data, GemParams(partition_fraction=0.1))
    assert (len(x1), len(x2)) == (1000, 9000)


def test_partition_deterministic(rng):
    data = rng.normal(size=(50, 2))
    a = partition_training(data, GemParams(partition_fraction=0.3, seed=3))
    b = partition_training(data, GemParams(partition_fraction=0.3, seed=3))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_partition_halves_cover(rng):
    data = rng.normal(size=(10, 2))
    x1, x2 = partition_training(data, GemParams(partition_fraction=0.5, K=2))
    assert len(x1) == len(x2) == 5
    rows = {tuple(r) for r in np.vstack([x1, x2])}
    assert rows == {tuple(r) for r in data}


@pytest.mark.parametrize("params, n", [
    (GemParams(K=50), 100),                # K > N1 = 10
    (GemParams(k=200), 100),               # k > N2 = 90
    (GemParams(k=1, s=2), 100),
    (GemParams(gamma=2.0), 100),           # gamma must be < d = 2
    (GemParams(alpha=1.5), 100),
    (GemParams(partition_fraction=0.001), 100),
])
def test_invalid_params(params, n, rng):
    with pytest.raises(ConfigError):
        train_baseline(rng.normal(size=(n, 2)), params)


def test_default_gamma_one_dimension(rng):
    m = train_baseline(rng.normal(size=(100, 1)), GemParams(partition_fraction=0.5))
    assert m.params.gamma == 0.5


def test_default_K_from_alpha(full_model):
    assert full_model.params.K == 950
    assert full_model.training_sizes == (1000, 9000)


@pytest.mark.parametrize("seed", range(10))
def test_selection_matches_exhaustive_subsets(seed):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(40, 2))
    params = GemParams(k=1, s=1, gamma=1.0, K=3, partition_fraction=0.2, seed=seed)
    model = train_baseline(data, params)
    x1, x2 = partition_training(data, params)
    L = lengths_by_sorting(x1, x2, 1, 1, 1.0)
    best = min(sum(L[list(c)]) for c in itertools.combinations(range(len(x1)), 3))
    chosen = lengths_by_sorting(data[model.selected], x2, 1, 1, 1.0)
    assert len(x1) == 8
    assert abs(chosen.sum() - best) <= 1e-12
    assert model.threshold_length == model.baseline_lengths[-1] == pytest.approx(chosen.max(), abs=1e-15)


def test_model_invariants(rng):
    data = rng.normal(size=(300, 3))
    params = GemParams(k=4, s=2, K=20, partition_fraction=0.3)
    m = train_baseline(data, params)
    i1, i2 = _partition_indices(300, params)
    unselected = np.setdiff1d(i1, m.selected)
    L = lengths_by_sorting(data[unselected], data[i2], 4, 2, m.params.gamma)
    assert m.baseline_lengths.size == 20
    assert np.all(np.diff(m.baseline_lengths) >= 0)
    assert np.isin(m.selected, i1).all()
    assert np.all(L >= m.threshold_length - 1e-12)


def test_identical_points_degenerate():
    data = np.ones((20, 2))
    m = train_baseline(data, GemParams(K=4, partition_fraction=0.5))
    assert m.threshold_length == 0.0
    assert np.all(m.baseline_lengths == 0.0)
    x1_idx = np.sort(np.random.default_rng(0).permutation(20)[:10])
    assert list(m.selected) == list(x1_idx[:4])  # ties keep training order


def test_full_scale_sanity(full_model):
    assert full_model.threshold_length > 0


def test_score_zero_at_threshold(full_model, default_scenario):
    # the K-th selected vertex has total edge length equal to the threshold by construction
    train = gen_nominal(10000, default_scenario, np.random.default_rng(2024))
    assert outlier_score(full_model, train[full_model.selected[-1]]) == 0.0


def test_score_on_reference_point(full_model):
    x = full_model.reference_index.points[17]
    assert outlier_score(full_model, x) == -full_model.threshold_length


def test_score_far_outside(full_model):
    assert outlier_score(full_model, [10.0, 10.0]) > 0


def test_score_dimension_mismatch(full_model):
    with pytest.raises(DataError):
        outlier_score(full_model, [0.0, 0.0, 0.0])


def test_scoring_is_pure_and_batch_consistent(full_model, rng):
    X = rng.normal(scale=0.2, size=(50, 2))
    batch = full_model.scores(X)
    single = np.array([full_model.score(x) for x in X])
    assert np.array_equal(batch, single)
    assert np.array_equal(batch, full_model.scores(X))


@pytest.mark.parametrize("D, expected", [
    (-0.01, Decision.NOMINAL), (0.0, Decision.NOMINAL), (0.01, Decision.ANOMALOUS),
])
def test_outlier_decide(D, expected):
    assert outlier_decide(D) is expected


def test_literal_K_alpha_N1_flags_complement(default_scenario):
    # K = alpha * N1 keeps only the densest 5%: almost every fresh nominal point is flagged
    train = gen_nominal(10000, default_scenario, np.random.default_rng(2024))
    m = train_baseline(train, GemParams(K=50, seed=7))
    D = m.scores(gen_nominal(2000, default_scenario, np.random.default_rng(99)))
    assert 0.92 <= np.mean(D > 0) <= 0.98


def test_density_ranking_sharpens_with_k(default_scenario):
    train = gen_nominal(10000, default_scenario, np.random.default_rng(2024))
    X = gen_nominal(2000, default_scenario, np.random.default_rng(99))
    nlf = -multivariate_normal(np.zeros(2), 0.01 * np.eye(2)).logpdf(X)
    rho = [spearmanr(train_baseline(train, GemParams(k=k, s=k, seed=7)).scores(X), nlf)[0]
           for k in (1, 5, 20, 50)]
    assert rho == sorted(rho)
    assert rho[-1] >= 0.9
