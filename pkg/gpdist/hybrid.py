"""
Confidence-gated hybrid distance estimator.

Where the GP's one-sided lower confidence bound clears the threshold the GP
mean is trusted; everywhere else the estimator averages fresh noisy sensor
measurements.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .environment import Environment, noisy_distance
from .errors import GpdistError
from .regression import GpModel, gp_posterior, lower_bound_from_posterior

logger = logging.getLogger(__name__)

DEFAULT_Z = 1.64
DEFAULT_SENSOR_SAMPLES = 5


class HybridError(GpdistError):
    """Invalid hybrid estimator parameters."""


class Branch(str, Enum):
    GP = "gp"
    SENSOR = "sensor"


@dataclass
class NoisySensor:
    """
    Noisy distance source. The stream is owned by the sensor and consumed in
    call order, so a fixed seed replays the same measurements.
    """
    env: Environment
    eta: float
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    calls: int = 0

    def __post_init__(self):
        if self.eta < 0.0:
            raise HybridError("sensor noise must be nonnegative", f"got eta={self.eta}")

    def measure(self, x: Sequence[float]) -> float:
        self.calls += 1
        return noisy_distance(self.env, x, self.eta, self.rng)


@dataclass(frozen=True)
class HybridPrediction:
    value: float
    branch: Branch
    gp_mean: float
    gp_sigma: float
    lower_bound: float
    sensor_samples: int


@dataclass
class HybridEstimator:
    """
    Args:
        gp: fitted GP over the environment
        sensor: source of noisy measurements
        z: standard deviations below the mean for the lower bound
        n_sensor: measurements averaged on the sensor branch
        threshold: lower bound the GP must clear to be trusted
    """
    gp: GpModel
    sensor: NoisySensor
    z: float = DEFAULT_Z
    n_sensor: int = DEFAULT_SENSOR_SAMPLES
    threshold: float = 0.0

    def __post_init__(self):
        if self.z < 0.0:
            raise HybridError("z must be nonnegative", f"got {self.z}")
        if self.n_sensor < 1:
            raise HybridError("n_sensor must be at least 1", f"got {self.n_sensor}")


def hybrid_predict(h: HybridEstimator, x: Sequence[float]) -> HybridPrediction:
    """GP mean when ``mean - z sigma >= threshold``, else the mean of ``n_sensor`` measurements."""
    mean, variance = gp_posterior(h.gp, x)
    mean, variance = float(mean[0]), float(variance[0])
    bound = lower_bound_from_posterior(mean, variance, h.z)
    sigma = math.sqrt(variance)
    if bound >= h.threshold:
        return HybridPrediction(mean, Branch.GP, mean, sigma, bound, 0)
    readings = [h.sensor.measure(x) for _ in range(h.n_sensor)]
    return HybridPrediction(float(np.mean(readings)), Branch.SENSOR, mean, sigma, bound, h.n_sensor)


def std_normal_cdf(t: float) -> float:
    return float(norm.cdf(t))


def confidence_level(gp: GpModel, x: Sequence[float], threshold: float = 0.0) -> float:
    """Posterior probability that the true distance exceeds ``threshold``."""
    mean, variance = gp_posterior(gp, x)
    mean, sigma = float(mean[0]), math.sqrt(float(variance[0]))
    if sigma == 0.0:
        if mean > threshold:
            return 1.0
        if mean < threshold:
            return 0.0
        return 0.5
    return std_normal_cdf((mean - threshold) / sigma)
