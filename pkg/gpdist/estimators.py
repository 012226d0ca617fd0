"""
Pluggable distance estimators for planning and optimization.

Every estimator maps a configuration to an estimated signed distance to
collision. Learned estimators also evaluate batches in one call, which the
optimizer relies on for its finite-difference gradients.
"""
import logging
from abc import ABC, abstractmethod
from enum import Enum
from typing import List, Optional, Sequence, Union

import numpy as np

from .dataset import Dataset
from .environment import Environment, distance_to_collision, noisy_distance
from .errors import GpdistError
from .hybrid import (
    DEFAULT_SENSOR_SAMPLES,
    DEFAULT_Z,
    Branch,
    HybridEstimator,
    NoisySensor,
    hybrid_predict,
)
from .kernels import KernelKind, KernelSpec
from .regression import (
    DEFAULT_ETA2,
    GpModel,
    KrModel,
    Model,
    NoiseMode,
    gp_fit,
    gp_mean_batch,
    gp_predict,
    kr_fit,
    kr_predict_batch,
    lower_bound_from_posterior,
    select_hyperparameters,
)

logger = logging.getLogger(__name__)


class EstimatorError(GpdistError):
    """Unknown estimator or an estimator built from the wrong model."""


class EstimatorKind(str, Enum):
    ORACLE = "oracle"
    NOISY_ORACLE = "noisy-oracle"
    KR = "kr"
    GP_GAUSSIAN = "gp-gaussian"
    GP_FK = "gp-fk"
    HYBRID = "hybrid"

    @property
    def learned(self) -> bool:
        return self not in (EstimatorKind.ORACLE, EstimatorKind.NOISY_ORACLE)


class DistanceEstimator(ABC):
    """Abstract distance estimator over one environment."""

    kind: EstimatorKind

    def __init__(self, env: Environment):
        self.env = env
        self.evaluations = 0

    @property
    def name(self) -> str:
        return self.kind.value

    @abstractmethod
    def estimate(self, x: np.ndarray) -> float:
        pass

    def __call__(self, x: Sequence[float]) -> float:
        self.evaluations += 1
        return self.estimate(np.asarray(x, dtype=float))

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self(x) for x in X])


class OracleEstimator(DistanceEstimator):
    kind = EstimatorKind.ORACLE

    def estimate(self, x: np.ndarray) -> float:
        return distance_to_collision(self.env, x).value


class NoisyOracleEstimator(DistanceEstimator):
    """Oracle plus fresh Gaussian noise on every evaluation."""
    kind = EstimatorKind.NOISY_ORACLE

    def __init__(self, env: Environment, eta: float, rng: np.random.Generator):
        super().__init__(env)
        if eta < 0.0:
            raise EstimatorError("noise level must be nonnegative", f"got eta={eta}")
        self.eta = eta
        self.rng = rng

    def estimate(self, x: np.ndarray) -> float:
        return noisy_distance(self.env, x, self.eta, self.rng)


class KrEstimator(DistanceEstimator):
    kind = EstimatorKind.KR

    def __init__(self, env: Environment, model: KrModel):
        super().__init__(env)
        self.model = model

    def estimate(self, x: np.ndarray) -> float:
        return float(kr_predict_batch(self.model, x)[0])

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.evaluations += len(X)
        return kr_predict_batch(self.model, X)


class GpEstimator(DistanceEstimator):
    """GP posterior mean."""

    def __init__(self, env: Environment, model: GpModel):
        super().__init__(env)
        self.model = model
        self.kind = EstimatorKind.GP_FK if model.spec.kind is KernelKind.FK else EstimatorKind.GP_GAUSSIAN

    def estimate(self, x: np.ndarray) -> float:
        return float(gp_mean_batch(self.model, x)[0])

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.evaluations += len(X)
        return gp_mean_batch(self.model, X)


class HybridDistanceEstimator(DistanceEstimator):
    kind = EstimatorKind.HYBRID

    def __init__(self, env: Environment, hybrid: HybridEstimator):
        super().__init__(env)
        self.hybrid = hybrid

    @property
    def sensor_calls(self) -> int:
        return self.hybrid.sensor.calls

    def estimate(self, x: np.ndarray) -> float:
        return hybrid_predict(self.hybrid, x).value

    def branches(self, X: np.ndarray) -> List[Branch]:
        """Branch taken at each configuration; decided by the GP alone, no sensor draws."""
        mean, variance = gp_predict(self.hybrid.gp, X)
        return [
            Branch.GP if lower_bound_from_posterior(float(m), float(v), self.hybrid.z) >= self.hybrid.threshold
            else Branch.SENSOR
            for m, v in zip(mean, variance)
        ]


def branch_switches(branches: Sequence[Branch]) -> int:
    return sum(1 for a, b in zip(branches[:-1], branches[1:]) if a is not b)


def fit_model(kind: Union[EstimatorKind, str], dataset: Dataset, env: Environment,
              eta2: float = DEFAULT_ETA2, noise_mode: Union[NoiseMode, str] = NoiseMode.FIXED,
              gamma: Optional[float] = None) -> Model:
    """
    Fit the model a learned estimator needs. GP kernels come from the
    likelihood grid search unless ``gamma`` is given; the hybrid estimator
    uses an fk GP.
    """
    kind = EstimatorKind(kind)
    if not kind.learned:
        raise EstimatorError(f"estimator '{kind.value}' has no model")
    if kind is EstimatorKind.KR:
        return kr_fit(dataset.X, dataset.y, gamma=gamma, robot=env.robot)
    kernel = KernelKind.GAUSSIAN if kind is EstimatorKind.GP_GAUSSIAN else KernelKind.FK
    if gamma is None:
        chosen = select_hyperparameters(dataset.X, dataset.y, kernel, noise_mode, eta2, env.robot)
        spec, eta2 = chosen.spec, chosen.eta2
    else:
        spec = KernelSpec(kernel, gamma, env.robot)
    return gp_fit(dataset.X, dataset.y, spec, eta2)


def build_estimator(kind: Union[EstimatorKind, str], env: Environment, model: Optional[Model] = None,
                    eta: float = 0.05, rng: Optional[np.random.Generator] = None, z: float = DEFAULT_Z,
                    n_sensor: int = DEFAULT_SENSOR_SAMPLES, threshold: float = 0.0) -> DistanceEstimator:
    """
    Raises:
        EstimatorError: unknown kind, or a learned kind without a matching model
    """
    try:
        kind = EstimatorKind(kind)
    except ValueError:
        names = ", ".join(k.value for k in EstimatorKind)
        raise EstimatorError(f"unknown estimator '{kind}'", f"expected one of {names}")
    if rng is None:
        rng = np.random.default_rng()
    if kind is EstimatorKind.ORACLE:
        return OracleEstimator(env)
    if kind is EstimatorKind.NOISY_ORACLE:
        return NoisyOracleEstimator(env, eta, rng)
    if kind is EstimatorKind.KR:
        if not isinstance(model, KrModel):
            raise EstimatorError("kr estimator needs a kernel regression model")
        return KrEstimator(env, model)
    if not isinstance(model, GpModel):
        raise EstimatorError(f"{kind.value} estimator needs a GP model")
    if kind is EstimatorKind.HYBRID:
        return HybridDistanceEstimator(env, HybridEstimator(model, NoisySensor(env, eta, rng), z, n_sensor, threshold))
    expected = KernelKind.FK if kind is EstimatorKind.GP_FK else KernelKind.GAUSSIAN
    if model.spec.kind is not expected:
        raise EstimatorError(f"{kind.value} estimator needs a {expected.value} GP", f"got {model.spec.kind.value}")
    return GpEstimator(env, model)
