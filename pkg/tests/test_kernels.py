import math

import numpy as np
import pytest

from gpdist.kernels import (
    KernelError,
    KernelKind,
    KernelSpec,
    default_gamma,
    fk_kernel,
    gaussian_kernel,
    gram_matrix,
    kernel_row,
    features,
    prior_variance,
)
from gpdist.kinematics import RobotModel, control_points


@pytest.fixture(scope="module")
def robot():
    return RobotModel.uniform(7)


def test_self_similarity(robot, rng):
    x = rng.uniform(-math.pi, math.pi, size=7)
    assert gaussian_kernel(x, x, 0.3) == 1.0
    assert fk_kernel(x, x, KernelSpec(KernelKind.FK, 2.0, robot)) == 7.0
    assert prior_variance(KernelSpec(KernelKind.FK, 2.0, robot)) == 7.0
    assert prior_variance(KernelSpec(KernelKind.GAUSSIAN, 2.0)) == 1.0


def test_fk_kernel_definition(robot, rng):
    spec = KernelSpec(KernelKind.FK, 0.7, robot)
    x, x2 = rng.uniform(-math.pi, math.pi, size=(2, 7))
    sq = np.sum((control_points(robot, x) - control_points(robot, x2)) ** 2, axis=1)
    assert fk_kernel(x, x2, spec) == pytest.approx(float(np.sum((1.0 + 0.35 * sq) ** -2)), rel=1e-12)


def test_gram_matches_pointwise(robot, rng):
    X = rng.uniform(-math.pi, math.pi, size=(6, 7))
    X2 = rng.uniform(-math.pi, math.pi, size=(4, 7))
    fk = KernelSpec(KernelKind.FK, 1.0, robot)
    gauss = KernelSpec(KernelKind.GAUSSIAN, 0.2, robot)
    K_fk, K_gauss = gram_matrix(fk, X, X2), gram_matrix(gauss, X, X2)
    for i in range(6):
        for j in range(4):
            assert K_fk[i, j] == pytest.approx(fk_kernel(X[i], X2[j], fk), rel=1e-12)
            assert K_gauss[i, j] == pytest.approx(gaussian_kernel(X[i], X2[j], 0.2), rel=1e-12)


def test_single_query_row_matches_batch(robot, rng):
    spec = KernelSpec(KernelKind.FK, 1.0, robot)
    X = rng.uniform(-math.pi, math.pi, size=(30, 7))
    queries = rng.uniform(-math.pi, math.pi, size=(3, 7))
    F = features(spec, X)
    batch = gram_matrix(spec, queries, X)
    for q, row in zip(queries, batch):
        np.testing.assert_allclose(kernel_row(spec, F, q), row, rtol=1e-12)


@pytest.mark.parametrize("kind", [KernelKind.GAUSSIAN, KernelKind.FK])
def test_gram_is_symmetric_positive_semidefinite(kind, robot):
    rng = np.random.default_rng(21)
    for _ in range(50):
        X = rng.uniform(-math.pi, math.pi, size=(100, 7))
        spec = KernelSpec(kind, default_gamma(kind, X), robot)
        K = gram_matrix(spec, X)
        np.testing.assert_array_equal(K, K.T)
        assert np.linalg.eigvalsh(K).min() >= -1e-9


def test_median_heuristic():
    X = np.array([[0.0, 0.0], [2.0, 0.0]])
    assert default_gamma(KernelKind.GAUSSIAN, X) == pytest.approx(1.0 / 8.0)
    assert default_gamma(KernelKind.FK, X) == 1.0
    assert default_gamma(KernelKind.GAUSSIAN, X[:1]) == 1.0


@pytest.mark.parametrize("kwargs", [
    {"kind": "gaussian", "gamma": 0.0},
    {"kind": "gaussian", "gamma": -1.0},
    {"kind": "fk", "gamma": 1.0},
    {"kind": "polynomial", "gamma": 1.0},
])
def test_invalid_specs(kwargs):
    with pytest.raises(KernelError):
        KernelSpec(**kwargs)


def test_dimension_mismatch(robot):
    spec = KernelSpec(KernelKind.FK, 1.0, robot)
    with pytest.raises(KernelError):
        gram_matrix(spec, np.zeros((3, 6)))
    with pytest.raises(KernelError):
        gaussian_kernel([0.0, 0.0], [0.0, 0.0, 0.0], 1.0)


def test_spec_dict_round_trip(robot):
    spec = KernelSpec(KernelKind.FK, 0.5, robot)
    assert KernelSpec.from_dict(spec.to_dict()) == spec
    assert spec.with_gamma(2.0).gamma == 2.0
