import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radcount.baselines import (GRIDS, ConvergenceError, FittedModel, Standardizer, fit_family,
                                grid_search_model, kernel_matrix, knn_fit, knn_predict, regularized_covariance,
                                rf_fit, rf_predict, round_and_clamp, svr_fit, svr_predict)
from radcount.baselines.svr import kkt_gap
from radcount.metrics import mae


# ---------------------------------------------------------------- oracles

def oracle_knn(X, y, q, k, metric, cov_inv_solve=None):
    """Full sort of (distance, index) pairs, mean of the first k labels."""
    dists = []
    for i, row in enumerate(X):
        d = q - row
        if metric == "euclidean":
            v = float(np.sqrt(sum(float(t) * float(t) for t in d)))
        elif metric == "manhattan":
            v = float(sum(abs(float(t)) for t in d))
        else:
            v = float(np.sqrt(max(float(d @ cov_inv_solve(d)), 0.0)))
        dists.append((v, i))
    dists.sort()
    return sum(y[i] for _, i in dists[:k]) / k


def knn_instance(rng, integer=False):
    n = int(rng.integers(3, 40))
    d = int(rng.integers(1, 19))
    X = rng.integers(-3, 4, (n, d)).astype(float) if integer else rng.normal(size=(n, d))
    y = rng.integers(0, 4, n).astype(float)
    q = rng.integers(-3, 4, d).astype(float) if integer else rng.normal(size=d)
    k = int(rng.integers(1, min(7, n) + 1))
    return X, y, q, k


def oracle_kkt_gap(X, y, alpha, alpha_star, kernel, gamma, C, eps):
    """Maximal violation recomputed from the primal-dual conditions."""
    K = kernel_matrix(X, X, kernel, gamma)
    f_wo_b = K @ (alpha - alpha_star)
    # gradients of the dual objective for alpha and alpha*
    g_a = f_wo_b + eps - y
    g_s = -f_wo_b + eps + y
    up = np.concatenate([-g_a[alpha < C], g_s[alpha_star > 0]])
    low = np.concatenate([-g_a[alpha > 0], g_s[alpha_star < C]])
    return max(up.max() - low.min(), 0.0)


# ---------------------------------------------------------------- knn

@pytest.mark.parametrize("metric", ["euclidean", "manhattan", "mahalanobis"])
def test_knn_matches_exhaustive_sort(metric):
    rng = np.random.default_rng({"euclidean": 1, "manhattan": 2, "mahalanobis": 3}[metric])
    for trial in range(500):
        X, y, q, k = knn_instance(rng, integer=(metric != "mahalanobis" and trial % 3 == 0))
        model = knn_fit(X, y, k, metric)
        solve = None
        if metric == "mahalanobis":
            sigma = regularized_covariance(X)
            solve = lambda d, s=sigma: np.linalg.solve(s, d)  # noqa: E731
        assert knn_predict(model, q) == pytest.approx(oracle_knn(X, y, q, k, metric, solve), abs=1e-12)


def test_mahalanobis_identity_is_euclidean():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(60, 18))
    y = rng.integers(0, 4, 60)
    Q = rng.normal(size=(100, 18))
    a = knn_predict(knn_fit(X, y, 5, "mahalanobis", cov=np.eye(18)), Q)
    b = knn_predict(knn_fit(X, y, 5, "euclidean"), Q)
    assert np.array_equal(a, b)


def test_knn_examples():
    X = np.ones((3, 2))
    assert knn_predict(knn_fit(X, [1, 1, 1], 3), [0, 0]) == 1.0
    X = np.array([[0.0], [1.0], [2.0], [10.0]])
    assert knn_predict(knn_fit(X, [2, 2, 2, 0], 3), [1.0]) == 2.0
    assert knn_predict(knn_fit(X, [0, 1, 2, 3], 3), [1.0]) == 1.0
    with pytest.raises(ValueError):
        knn_fit(X, [0, 1, 2, 3], 5)
    with pytest.raises(ValueError):
        knn_fit(X, [0, 1, 2, 3], 2, "cosine")


def test_mahalanobis_constant_column_is_invertible():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 5))
    X[:, 2] = 4.0
    sigma = regularized_covariance(X)
    assert np.all(np.linalg.eigvalsh(sigma) > 0)
    model = knn_fit(X, rng.integers(0, 4, 30), 3, "mahalanobis")
    assert np.isfinite(knn_predict(model, X[:4])).all()
    assert np.all(np.linalg.eigvalsh(regularized_covariance(np.zeros((4, 3)))) > 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_knn_prediction_within_neighbour_labels(seed):
    rng = np.random.default_rng(seed)
    X, y, q, k = knn_instance(rng)
    p = knn_predict(knn_fit(X, y, k, "euclidean"), q)
    assert y.min() <= p <= y.max()


# ---------------------------------------------------------------- random forest

def test_single_unbootstrapped_tree_memorizes():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(80, 18))
    y = rng.integers(0, 4, 80).astype(float)
    model = rf_fit(X, y, n_estimators=1, max_depth=None, bootstrap=False)
    assert np.array_equal(rf_predict(model, X), y)
    leaf = model.trees[0].predict_one(X[3])
    assert rf_predict(model, X[3]) == leaf


def test_forest_determinism_and_constant_labels():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 6))
    y = rng.integers(0, 4, 40)
    a = rf_fit(X, y, 10, seed=7)
    b = rf_fit(X, y, 10, seed=7)
    assert [t.root.to_dict() for t in a.trees] == [t.root.to_dict() for t in b.trees]
    assert np.array_equal(rf_predict(a, X), rf_predict(b, X))
    c = rf_fit(X, np.full(40, 2.0), 5)
    assert np.all(rf_predict(c, X) == 2.0)


def test_forest_average_of_trees():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 4))
    model = rf_fit(X, rng.integers(0, 4, 30), 7, seed=3)
    q = rng.normal(size=4)
    assert rf_predict(model, q) == pytest.approx(np.mean([t.predict_one(q) for t in model.trees]))


def test_forest_depth_cap_and_feature_fallback():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 18))
    X[:, :17] = 0.0  # only the last column varies
    y = (X[:, 17] > 0).astype(float)
    model = rf_fit(X, y, 1, max_depth=None, bootstrap=False)
    assert np.array_equal(rf_predict(model, X), y)
    capped = rf_fit(rng.normal(size=(50, 3)), rng.integers(0, 4, 50), 3, max_depth=2)
    assert all(t.depth() <= 2 for t in capped.trees)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_forest_predictions_bounded_by_labels(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(25, 5))
    y = rng.integers(0, 4, 25).astype(float)
    model = rf_fit(X, y, 5, seed=seed)
    p = rf_predict(model, rng.normal(size=(20, 5)) * 3)
    assert np.all(p >= y.min()) and np.all(p <= y.max())


# ---------------------------------------------------------------- svr

def svr_problem(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(15, 60)), int(rng.integers(1, 18))
    X = rng.normal(size=(n, d))
    y = rng.integers(0, 4, n).astype(float) + 0.1 * rng.normal(size=n)
    return X, y


@pytest.mark.parametrize("seed", range(20))
def test_svr_converges_with_small_kkt_violation(seed):
    X, y = svr_problem(seed)
    kernel = "rbf" if seed % 2 else "linear"
    m = svr_fit(X, y, kernel)
    assert m.kkt_violation <= 1e-3
    assert oracle_kkt_gap(X, y, m.alpha, m.alpha_star, kernel, m.gamma, m.C, m.epsilon) <= 1e-3 + 1e-9
    assert np.all((m.alpha >= 0) & (m.alpha <= m.C)) and np.all((m.alpha_star >= 0) & (m.alpha_star <= m.C))
    assert abs(np.sum(m.alpha - m.alpha_star)) < 1e-9
    # complementary slackness: a pair is never active on both sides of the tube
    assert np.all(np.minimum(m.alpha, m.alpha_star) <= 1e-12)


@pytest.mark.parametrize("kernel", ["linear", "rbf"])
def test_svr_agrees_with_libsvm(kernel):
    sk = pytest.importorskip("sklearn.svm")
    X, y = svr_problem(42)
    m = svr_fit(X, y, kernel)
    ref = sk.SVR(kernel=kernel, C=1.0, epsilon=0.1, gamma=m.gamma if kernel == "rbf" else "scale", tol=1e-3)
    ref.fit(X, y)
    np.testing.assert_allclose(svr_predict(m, X), ref.predict(X), atol=5e-3)


def test_svr_linear_fit_inside_tube():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    y = X @ np.array([0.5, -0.2, 0.1]) + 1.0
    m = svr_fit(X, y, "linear", C=10.0, epsilon=0.2)
    assert np.all(np.abs(svr_predict(m, X) - y) <= 0.2 + 1e-3)


def test_svr_conflicting_duplicates():
    X = np.array([[0.0], [0.0], [1.0], [2.0]])
    y = np.array([0.0, 2.0, 1.0, 1.0])
    m = svr_fit(X, y, "rbf")
    assert 0.0 <= svr_predict(m, [0.0]) <= 2.0
    assert oracle_kkt_gap(X, y, m.alpha, m.alpha_star, "rbf", m.gamma, m.C, m.epsilon) <= 1e-3 + 1e-9


def test_svr_rbf_beats_linear_on_xor():
    X = np.array([[a, b] for a in (-1, 1) for b in (-1, 1) for _ in range(5)], dtype=float)
    X += np.random.default_rng(0).normal(scale=0.05, size=X.shape)
    y = (np.sign(X[:, 0]) != np.sign(X[:, 1])).astype(float) * 2
    lin = mae(svr_predict(svr_fit(X, y, "linear"), X), y)
    rbf = mae(svr_predict(svr_fit(X, y, "rbf"), X), y)
    assert rbf < lin


def test_svr_iteration_cap_raises():
    X, y = svr_problem(3)
    with pytest.raises(ConvergenceError):
        svr_fit(X, y, "rbf", max_iter=1)


def test_kernel_matrix_identities():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
    assert np.allclose(kernel_matrix(A, B, "rbf", 0.3), kernel_matrix(B, A, "rbf", 0.3).T)
    assert np.allclose(np.diag(kernel_matrix(A, A, "rbf", 0.3)), 1.0)
    assert np.allclose(kernel_matrix(A, B, "linear"), A @ B.T)
    m = svr_fit(A, [0, 1, 2, 3, 1], "linear")
    w = m.dual_coef @ m.support_vectors
    assert svr_predict(m, B) == pytest.approx(B @ w + m.bias)


def test_kkt_gap_helper_on_optimum():
    beta = np.zeros(4)
    grad = np.array([1.0, 1.0, 1.0, 1.0])
    sign = np.array([1.0, 1.0, -1.0, -1.0])
    assert kkt_gap(beta, grad, sign, 1.0) == 0.0


# ---------------------------------------------------------------- search / persistence

def oracle_selection(family, X, y, Xv, yv):
    scores = [mae(fit_family(family, p, X, y).predict(Xv), yv) for p in GRIDS[family]]
    return scores.index(min(scores))


def test_grid_search_matches_brute_force_reevaluation():
    rng = np.random.default_rng(4)
    X, Xv = rng.normal(size=(50, 18)), rng.normal(size=(15, 18))
    w = rng.normal(size=18)
    y = np.clip(np.round(X @ w / 3 + 1.5), 0, 3)
    yv = np.clip(np.round(Xv @ w / 3 + 1.5), 0, 3)
    _, rep = grid_search_model((X, y), (Xv, yv), "knn")
    assert rep.best_index == oracle_selection("knn", X, y, Xv, yv)
    assert len(rep.rows) == 6 and rep.rows[0]["params"] == {"metric": "euclidean", "k": 3}


def test_grid_single_candidate_and_zero_error():
    X = np.arange(20, dtype=float).reshape(10, 2)
    y = np.array([0, 0, 1, 1, 2, 2, 3, 3, 3, 3], dtype=float)
    model, rep = grid_search_model((X, y), (X, y), "svm", grid=[{"kernel": "linear"}])
    assert rep.best_index == 0 and model.params == {"kernel": "linear"}
    grid = [{"metric": "euclidean", "k": 5}, {"metric": "euclidean", "k": 1}]
    _, rep = grid_search_model((X, y), (X, y), "knn", grid=grid)
    assert rep.rows[1]["val_mae"] == 0.0 and rep.best_index == 1


def test_standardizer_choice():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(20, 4)) * 100, rng.integers(0, 4, 20)
    assert fit_family("knn", {"metric": "manhattan", "k": 3}, X, y).standardizer is not None
    assert fit_family("knn", {"metric": "mahalanobis", "k": 3}, X, y).standardizer is None
    assert fit_family("rf", {"n_estimators": 3, "max_depth": None}, X, y).standardizer is None
    st_ = Standardizer.fit(X)
    assert np.allclose(st_.transform(X).mean(axis=0), 0) and np.allclose(st_.transform(X).std(axis=0), 1)


@pytest.mark.parametrize("family,params", [("knn", {"metric": "mahalanobis", "k": 3}),
                                           ("rf", {"n_estimators": 4, "max_depth": 20}),
                                           ("svm", {"kernel": "rbf"})])
def test_model_file_round_trip(tmp_path, family, params):
    rng = np.random.default_rng(9)
    X, y = rng.normal(size=(30, 18)), rng.integers(0, 4, 30)
    model = fit_family(family, params, X, y, seed=2)
    model.save(tmp_path / "m.json")
    back = FittedModel.load(tmp_path / "m.json")
    Q = rng.normal(size=(10, 18))
    assert np.array_equal(back.predict(Q), model.predict(Q))
    model.save(tmp_path / "m2.json")
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_model_file_rejects_foreign_json(tmp_path):
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        FittedModel.load(tmp_path / "x.json")


def test_round_and_clamp_reexported():
    assert round_and_clamp(2.5) == 3
