import math

import numpy as np
import pytest

from gpdist.environment import distance_to_collision
from gpdist.estimators import (
    EstimatorError,
    EstimatorKind,
    GpEstimator,
    HybridDistanceEstimator,
    KrEstimator,
    OracleEstimator,
    branch_switches,
    build_estimator,
    fit_model,
)
from gpdist.hybrid import Branch
from gpdist.kernels import KernelKind, KernelSpec
from gpdist.regression import GpModel, KrModel, gp_fit, kr_fit


@pytest.fixture(scope="module")
def fk_gp(box_train, box_env):
    return gp_fit(box_train.X, box_train.y, KernelSpec(KernelKind.FK, 1.0, box_env.robot), 0.0025)


@pytest.fixture(scope="module")
def queries():
    return np.random.default_rng(17).uniform(-math.pi, math.pi, size=(25, 2))


def test_unknown_estimator(box_env):
    with pytest.raises(EstimatorError, match="unknown estimator"):
        build_estimator("lidar", box_env)


def test_learned_estimators_need_matching_model(box_env, box_train, fk_gp):
    with pytest.raises(EstimatorError):
        build_estimator("gp-fk", box_env)
    with pytest.raises(EstimatorError):
        build_estimator("kr", box_env, fk_gp)
    with pytest.raises(EstimatorError, match="gaussian GP"):
        build_estimator("gp-gaussian", box_env, fk_gp)
    with pytest.raises(EstimatorError):
        build_estimator("hybrid", box_env, kr_fit(box_train.X, box_train.y, gamma=1.0))


def test_oracle_matches_distance_and_counts(box_env, queries):
    oracle = build_estimator("oracle", box_env)
    assert isinstance(oracle, OracleEstimator)
    values = oracle.evaluate_many(queries)
    assert oracle.evaluations == len(queries)
    np.testing.assert_array_equal(values, [distance_to_collision(box_env, x).value for x in queries])


def test_noisy_oracle_is_seeded(box_env):
    a = build_estimator("noisy-oracle", box_env, eta=0.05, rng=np.random.default_rng(1))
    b = build_estimator("noisy-oracle", box_env, eta=0.05, rng=np.random.default_rng(1))
    assert a([0.0, 0.0]) == b([0.0, 0.0])
    with pytest.raises(EstimatorError):
        build_estimator("noisy-oracle", box_env, eta=-1.0)


def test_batch_matches_per_call(box_env, box_train, fk_gp, queries):
    kr = build_estimator("kr", box_env, kr_fit(box_train.X, box_train.y, gamma=1.0))
    gp = build_estimator("gp-fk", box_env, fk_gp)
    for estimator in (kr, gp):
        batch = estimator.evaluate_many(queries)
        single = np.array([estimator(x) for x in queries])
        np.testing.assert_allclose(batch, single, rtol=1e-10, atol=1e-9)
        assert estimator.evaluations == 2 * len(queries)


def test_estimator_names(box_env, box_train, fk_gp):
    gauss = gp_fit(box_train.X, box_train.y, KernelSpec(KernelKind.GAUSSIAN, 0.5), 0.0025)
    assert build_estimator("gp-gaussian", box_env, gauss).name == "gp-gaussian"
    assert build_estimator(EstimatorKind.GP_FK, box_env, fk_gp).name == "gp-fk"
    assert build_estimator("hybrid", box_env, fk_gp).name == "hybrid"


def test_fit_model_types(box_env, box_train):
    assert isinstance(fit_model("kr", box_train, box_env, gamma=0.5), KrModel)
    gauss = fit_model("gp-gaussian", box_train, box_env, gamma=0.5)
    assert isinstance(gauss, GpModel) and gauss.spec.kind is KernelKind.GAUSSIAN
    hybrid = fit_model("hybrid", box_train, box_env)
    assert hybrid.spec.kind is KernelKind.FK
    assert isinstance(build_estimator("gp-fk", box_env, fit_model("gp-fk", box_train, box_env)), GpEstimator)
    with pytest.raises(EstimatorError, match="no model"):
        fit_model("oracle", box_train, box_env)


def test_hybrid_branches_at_threshold_extremes(box_env, fk_gp, queries):
    trusting = build_estimator("hybrid", box_env, fk_gp, threshold=-1e9)
    wary = build_estimator("hybrid", box_env, fk_gp, eta=0.0, n_sensor=3, threshold=1e9)
    assert isinstance(wary, HybridDistanceEstimator)
    assert all(b is Branch.GP for b in trusting.branches(queries))
    assert all(b is Branch.SENSOR for b in wary.branches(queries))
    assert wary.sensor_calls == 0

    x = queries[0]
    assert trusting(x) == pytest.approx(build_estimator("gp-fk", box_env, fk_gp)(x))
    assert wary(x) == pytest.approx(distance_to_collision(box_env, x).value)
    assert trusting.sensor_calls == 0
    assert wary.sensor_calls == 3


def test_branch_switches():
    assert branch_switches([]) == 0
    assert branch_switches([Branch.GP, Branch.GP, Branch.SENSOR, Branch.GP]) == 2


def test_kr_estimator_type(box_env, box_train):
    assert isinstance(build_estimator("kr", box_env, kr_fit(box_train.X, box_train.y, gamma=1.0)), KrEstimator)
