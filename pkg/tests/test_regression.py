import logging
import math

import numpy as np
import pytest

from gpdist.kernels import KernelKind, KernelSpec, default_gamma, gram_matrix, prior_variance
from gpdist.regression import (
    ETA2_GRID_EXPONENTS,
    GAMMA_GRID_EXPONENTS,
    NoiseMode,
    RegressionError,
    KrModel,
    _factorize,
    confidence_interval,
    confidence_lower_bound,
    gp_fit,
    gp_log_marginal_likelihood,
    gp_mean,
    gp_predict,
    gp_variance,
    kr_fit,
    kr_predict,
    kr_predict_batch,
    load_model,
    save_model,
    select_hyperparameters,
    select_kr_gamma,
)


def smooth_labels(X):
    return np.sin(X).sum(axis=1)


@pytest.fixture(scope="module")
def data3():
    rng = np.random.default_rng(8)
    X = rng.uniform(-math.pi, math.pi, size=(100, 3))
    return X, smooth_labels(X)


def test_near_noiseless_gp_interpolates(data3):
    X, y = data3
    model = gp_fit(X, y, KernelSpec(KernelKind.GAUSSIAN, 2.0), eta2=1e-8)
    mean, variance = gp_predict(model, X)
    np.testing.assert_allclose(mean, y, atol=1e-4)
    assert np.all(variance <= 1e-4)


@pytest.mark.parametrize("kind", [KernelKind.GAUSSIAN, KernelKind.FK])
def test_posterior_variance_bounds(kind, box3_train, box_env3):
    spec = KernelSpec(kind, default_gamma(kind, box3_train.X), box_env3.robot)
    model = gp_fit(box3_train.X, box3_train.y, spec, eta2=0.0025)
    queries = np.random.default_rng(4).uniform(-math.pi, math.pi, size=(10_000, 3))
    _, variance = gp_predict(model, queries)
    assert np.all(variance >= 0.0)
    assert np.all(variance <= prior_variance(spec) + 1e-12)


def test_log_marginal_likelihood_matches_dense_formula(box3_train, box_env3):
    spec = KernelSpec(KernelKind.FK, 1.0, box_env3.robot)
    model = gp_fit(box3_train.X, box3_train.y, spec, eta2=0.01)
    K = gram_matrix(spec, box3_train.X) + (0.01 + model.jitter) * np.eye(len(box3_train))
    y = box3_train.y
    _, logdet = np.linalg.slogdet(K)
    expected = -0.5 * y @ np.linalg.solve(K, y) - 0.5 * logdet - 0.5 * len(y) * math.log(2.0 * math.pi)
    assert gp_log_marginal_likelihood(model) == pytest.approx(expected, rel=1e-8)


def test_jitter_is_always_added(data3):
    X, y = data3
    model = gp_fit(X, y, KernelSpec(KernelKind.GAUSSIAN, 2.0), eta2=0.0)
    assert model.jitter >= 1e-10


def test_duplicate_points_factorize_with_jitter():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    model = gp_fit(X, [1.0, 1.0, 2.0], KernelSpec(KernelKind.GAUSSIAN, 1.0), eta2=0.0)
    assert math.isfinite(gp_mean(model, [0.5, 0.0]))


def test_factorization_failure_is_reported():
    with pytest.raises(RegressionError, match="ill-conditioned"):
        _factorize(-np.eye(3), 0.0, [1e-10, 1e-6])


def test_escalated_jitter_is_logged(caplog):
    K = np.array([[1.0, 1.0], [1.0, 1.0]]) - 1e-7 * np.eye(2)
    with caplog.at_level(logging.DEBUG, logger="gpdist.regression"):
        _, jitter = _factorize(K, 0.0, [10.0 ** e for e in range(-10, -3)])
    assert jitter >= 1e-7
    assert "jitter" in caplog.text


def test_confidence_bounds(box3_train, box_env3):
    model = gp_fit(box3_train.X, box3_train.y, KernelSpec(KernelKind.FK, 1.0, box_env3.robot))
    x = box3_train.X[0] + 0.3
    mean, sigma = gp_mean(model, x), math.sqrt(gp_variance(model, x))
    low, high = confidence_interval(model, x)
    assert low == pytest.approx(mean - 1.96 * sigma)
    assert high == pytest.approx(mean + 1.96 * sigma)
    assert confidence_lower_bound(model, x, 1.64) == pytest.approx(mean - 1.64 * sigma)
    with pytest.raises(RegressionError):
        confidence_lower_bound(model, x, -1.0)


def test_query_dimension_is_checked(data3):
    X, y = data3
    model = gp_fit(X, y, KernelSpec(KernelKind.GAUSSIAN, 2.0))
    with pytest.raises(RegressionError, match="dof"):
        gp_mean(model, [0.0, 0.0])


def test_training_data_is_checked():
    with pytest.raises(RegressionError):
        gp_fit(np.zeros((3, 2)), [1.0, 2.0], KernelSpec(KernelKind.GAUSSIAN, 1.0))
    with pytest.raises(RegressionError):
        gp_fit(np.zeros((2, 2)), [1.0, math.nan], KernelSpec(KernelKind.GAUSSIAN, 1.0))
    with pytest.raises(RegressionError):
        gp_fit(np.zeros((2, 2)), [1.0, 2.0], KernelSpec(KernelKind.GAUSSIAN, 1.0), eta2=-1.0)


def test_fixed_noise_selection_searches_gamma_only(box3_train, box_env3):
    chosen = select_hyperparameters(box3_train.X, box3_train.y, "fk", NoiseMode.FIXED, 0.0025, box_env3.robot)
    assert chosen.eta2 == 0.0025
    assert chosen.spec.kind is KernelKind.FK
    assert any(chosen.spec.gamma == pytest.approx(2.0 ** k) for k in GAMMA_GRID_EXPONENTS)
    assert math.isfinite(chosen.log_likelihood)


def test_noise_search_uses_grid(box3_train):
    chosen = select_hyperparameters(box3_train.X, box3_train.y, "gaussian", "search")
    assert any(chosen.eta2 == pytest.approx(10.0 ** k) for k in ETA2_GRID_EXPONENTS)


def test_selection_leaves_inputs_writable(box3_train):
    X, y = box3_train.X.copy(), box3_train.y.copy()
    select_hyperparameters(X, y, "gaussian")
    X[0, 0] = 0.0


def test_selection_needs_data():
    with pytest.raises(RegressionError, match="more data"):
        select_hyperparameters(np.zeros((5, 2)), np.zeros(5), "gaussian")


def test_kr_stays_within_label_range(box3_train):
    model = kr_fit(box3_train.X, box3_train.y)
    queries = np.random.default_rng(9).uniform(-math.pi, math.pi, size=(500, 3))
    predictions = kr_predict_batch(model, queries)
    assert predictions.min() >= box3_train.y.min()
    assert predictions.max() <= box3_train.y.max()
    assert kr_predict(model, queries[0]) == pytest.approx(predictions[0])


def test_kr_underflow_falls_back_to_nearest_label():
    model = kr_fit(np.array([[0.0], [1.0]]), np.array([-1.0, 3.0]), gamma=1e6)
    assert kr_predict(model, [0.9]) == 3.0
    assert kr_predict(model, [0.1]) == -1.0


def test_kr_gamma_comes_from_grid(box3_train):
    gamma = select_kr_gamma(box3_train.X, box3_train.y)
    base = default_gamma(KernelKind.GAUSSIAN, box3_train.X)
    assert any(gamma == pytest.approx(base * 2.0 ** k) for k in GAMMA_GRID_EXPONENTS)


def test_kr_rejects_fk_kernel(box_env3):
    X = np.zeros((2, 3))
    with pytest.raises(RegressionError):
        KrModel(KernelSpec(KernelKind.FK, 1.0, box_env3.robot), X, np.zeros(2), X)


def test_model_files_round_trip(box3_train, box_env3, tmp_path):
    queries = np.random.default_rng(10).uniform(-math.pi, math.pi, size=(20, 3))
    gp = gp_fit(box3_train.X, box3_train.y, KernelSpec(KernelKind.FK, 1.0, box_env3.robot))
    save_model(gp, str(tmp_path / "gp.json"))
    loaded = load_model(str(tmp_path / "gp.json"))
    assert loaded.jitter == gp.jitter
    for a, b in zip(gp_predict(gp, queries), gp_predict(loaded, queries)):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)

    kr = kr_fit(box3_train.X, box3_train.y, gamma=0.5)
    save_model(kr, str(tmp_path / "kr.json"))
    np.testing.assert_array_equal(kr_predict_batch(load_model(str(tmp_path / "kr.json")), queries),
                                  kr_predict_batch(kr, queries))


def test_malformed_model_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format_version": 1, "type": "gp"}')
    with pytest.raises(RegressionError, match="malformed"):
        load_model(str(path))
    path.write_text("not json")
    with pytest.raises(RegressionError):
        load_model(str(path))


def test_fit_records_wall_time(data3):
    X, y = data3
    assert gp_fit(X, y, KernelSpec(KernelKind.GAUSSIAN, 2.0)).fit_seconds >= 0.0


@pytest.mark.parametrize("kind", [KernelKind.GAUSSIAN, KernelKind.FK])
def test_posterior_mean_is_linear_in_labels(kind, box3_train, box_env3):
    spec = KernelSpec(kind, 1.0, box_env3.robot)
    X = box3_train.X
    y1 = box3_train.y
    y2 = np.cos(X).sum(axis=1)
    queries = np.random.default_rng(5).uniform(-math.pi, math.pi, size=(30, 3))
    combined, _ = gp_predict(gp_fit(X, 2.0 * y1 - 0.5 * y2, spec, 0.0025), queries)
    m1, _ = gp_predict(gp_fit(X, y1, spec, 0.0025), queries)
    m2, _ = gp_predict(gp_fit(X, y2, spec, 0.0025), queries)
    np.testing.assert_allclose(combined, 2.0 * m1 - 0.5 * m2, atol=1e-8)
