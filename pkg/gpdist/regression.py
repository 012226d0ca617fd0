"""
Exact Gaussian-process regression and Nadaraya-Watson kernel regression
over distance-to-collision labels.
"""
import json
import logging
import math
import os
import time
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .errors import GpdistError
from .kernels import (
    KernelKind,
    KernelSpec,
    default_gamma,
    features,
    gram_from_features,
    gram_from_squared_distances,
    kernel_row,
    prior_variance,
    squared_distances,
)
from .kinematics import RobotModel

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
DEFAULT_ETA2 = 0.0025
# jitter runs 1e-10, 1e-9, ..., 1e-4
JITTER_EXPONENTS = tuple(range(-10, -3))
VARIANCE_CLAMP = -1e-9
GAMMA_GRID_EXPONENTS = tuple(range(-4, 5))
ETA2_GRID_EXPONENTS = tuple(range(-6, 1))
MIN_SELECTION_POINTS = 10
KR_UNDERFLOW = 1e-300
PREDICT_CHUNK = 1024


class RegressionError(GpdistError):
    """Fitting or prediction failed."""


class NoiseMode(str, Enum):
    FIXED = "fixed"
    SEARCH = "search"


@dataclass(frozen=True, eq=False)
class GpModel:
    """
    A fitted Gaussian process. Immutable; safe to query concurrently.

    ``chol`` is the lower Cholesky factor of ``K + (eta2 + jitter) I`` and
    ``alpha`` solves that system against ``y - prior_mean``.
    """
    spec: KernelSpec
    X: np.ndarray
    y: np.ndarray
    eta2: float
    chol: np.ndarray
    alpha: np.ndarray
    prior_mean: float
    jitter: float
    features: np.ndarray
    fit_seconds: float = 0.0

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def dof(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True, eq=False)
class KrModel:
    """Nadaraya-Watson regressor; gaussian kernel only."""
    spec: KernelSpec
    X: np.ndarray
    y: np.ndarray
    features: np.ndarray
    fit_seconds: float = 0.0

    def __post_init__(self):
        if self.spec.kind is not KernelKind.GAUSSIAN:
            raise RegressionError("kernel regression supports the gaussian kernel only", f"got '{self.spec.kind.value}'")

    @property
    def dof(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class Hyperparameters:
    spec: KernelSpec
    eta2: float
    log_likelihood: float


def _training_data(X: np.ndarray, y: np.ndarray, robot: Optional[RobotModel]) -> Tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(X) != len(y):
        raise RegressionError("inputs and labels differ in length", f"{len(X)} configurations, {len(y)} labels")
    if len(y) == 0:
        raise RegressionError("at least one training point is required")
    if robot is not None and X.shape[1] != robot.dof:
        raise RegressionError("configurations do not match robot dof", f"expected {robot.dof}, got {X.shape[1]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise RegressionError("training data must be finite")
    return X, y


def _factorize(K: np.ndarray, eta2: float, jitters: Sequence[float]) -> Tuple[np.ndarray, float]:
    n = len(K)
    for step, jitter in enumerate(jitters):
        try:
            chol = scipy.linalg.cholesky(K + (eta2 + jitter) * np.eye(n), lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            chol = None
        if chol is not None and np.all(np.isfinite(chol)):
            if step > 1:
                logger.warning(f"Gram matrix needed jitter {jitter:.0e} to factorize")
            elif step == 1:
                logger.debug(f"Gram matrix needed jitter {jitter:.0e} to factorize")
            return chol, jitter
    raise RegressionError("ill-conditioned Gram matrix", f"factorization failed with jitter up to {jitters[-1]:.0e}")


def _gp_from_gram(spec: KernelSpec, X: np.ndarray, y: np.ndarray, F: np.ndarray, K: np.ndarray,
                  eta2: float, prior_mean: float, started: float) -> GpModel:
    chol, jitter = _factorize(K, eta2, [10.0 ** e for e in JITTER_EXPONENTS])
    alpha = scipy.linalg.cho_solve((chol, True), y - prior_mean, check_finite=False)
    for array in (X, y, chol, alpha, F):
        array.setflags(write=False)
    return GpModel(spec, X, y, float(eta2), chol, alpha, float(prior_mean), jitter, F, time.perf_counter() - started)


def gp_fit(X: np.ndarray, y: np.ndarray, spec: KernelSpec, eta2: float = DEFAULT_ETA2,
           prior_mean: float = 0.0) -> GpModel:
    """
    Factorize the Gram matrix of the training set once.

    Raises:
        RegressionError: mismatched inputs, negative ``eta2``, or a Gram matrix
            that does not factorize even with the largest jitter
    """
    started = time.perf_counter()
    if eta2 < 0.0:
        raise RegressionError("noise variance must be nonnegative", f"got {eta2}")
    X, y = _training_data(np.array(X, dtype=float), np.array(y, dtype=float), spec.robot)
    F = features(spec, X)
    K = gram_from_features(spec, F, F)
    model = _gp_from_gram(spec, X, y, F, K, eta2, prior_mean, started)
    logger.debug(f"Fitted {spec.kind.value} GP on {model.n} points in {model.fit_seconds:.3f}s")
    return model


def _check_queries(dof: int, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dof:
        raise RegressionError("query does not match model dof", f"expected {dof} columns, got shape {X.shape}")
    return X


def gp_posterior(model: GpModel, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at every row of ``X``."""
    X = _check_queries(model.dof, X)
    Ks = gram_from_features(model.spec, features(model.spec, X), model.features)
    mean = Ks @ model.alpha + model.prior_mean
    v = scipy.linalg.solve_triangular(model.chol, Ks.T, lower=True, check_finite=False)
    variance = prior_variance(model.spec) - np.einsum("ij,ij->j", v, v)
    if np.any(variance < VARIANCE_CLAMP):
        raise RegressionError("negative posterior variance", f"min {variance.min():.3e}")
    return mean, np.maximum(variance, 0.0)


def gp_predict(model: GpModel, X: np.ndarray, chunk: int = PREDICT_CHUNK) -> Tuple[np.ndarray, np.ndarray]:
    """Batched :func:`gp_posterior` in chunks of ``chunk`` rows."""
    X = _check_queries(model.dof, X)
    means, variances = [], []
    for start in range(0, len(X), chunk):
        mean, variance = gp_posterior(model, X[start:start + chunk])
        means.append(mean)
        variances.append(variance)
    if not means:
        return np.empty(0), np.empty(0)
    return np.concatenate(means), np.concatenate(variances)


def gp_mean(model: GpModel, x: Sequence[float]) -> float:
    x = _check_queries(model.dof, x)[0]
    return float(kernel_row(model.spec, model.features, x) @ model.alpha + model.prior_mean)


def gp_mean_batch(model: GpModel, X: np.ndarray) -> np.ndarray:
    """Posterior mean only; skips the triangular solve of the variance."""
    X = _check_queries(model.dof, X)
    Ks = gram_from_features(model.spec, features(model.spec, X), model.features)
    return Ks @ model.alpha + model.prior_mean


def gp_variance(model: GpModel, x: Sequence[float]) -> float:
    return float(gp_posterior(model, x)[1][0])


def gp_log_marginal_likelihood(model: GpModel) -> float:
    residual = model.y - model.prior_mean
    return float(
        -0.5 * residual @ model.alpha
        - np.sum(np.log(np.diag(model.chol)))
        - 0.5 * model.n * math.log(2.0 * math.pi)
    )


def lower_bound_from_posterior(mean: float, variance: float, z: float) -> float:
    """``mean - z * sqrt(variance)``; the one place this bound is computed."""
    return mean - z * math.sqrt(variance)


def confidence_lower_bound(model: GpModel, x: Sequence[float], z: float) -> float:
    if z < 0.0:
        raise RegressionError("z must be nonnegative", f"got {z}")
    mean, variance = gp_posterior(model, x)
    return lower_bound_from_posterior(float(mean[0]), float(variance[0]), z)


def confidence_interval(model: GpModel, x: Sequence[float], z: float = 1.96) -> Tuple[float, float]:
    """Two-sided interval ``mean -/+ z * sigma``; z = 1.96 covers 95%."""
    if z < 0.0:
        raise RegressionError("z must be nonnegative", f"got {z}")
    mean, variance = gp_posterior(model, x)
    half = z * math.sqrt(float(variance[0]))
    return float(mean[0]) - half, float(mean[0]) + half


def select_hyperparameters(X: np.ndarray, y: np.ndarray, kind: Union[KernelKind, str],
                           noise_mode: Union[NoiseMode, str] = NoiseMode.FIXED, eta2: float = DEFAULT_ETA2,
                           robot: Optional[RobotModel] = None, prior_mean: float = 0.0) -> Hyperparameters:
    """
    Grid search maximizing the log marginal likelihood.

    The gamma grid is ``default_gamma * 2^k`` for k in -4..4. In search mode
    the noise variance is searched over ``10^k`` for k in -6..0; in fixed mode
    ``eta2`` is used as given. Ties go to the smaller gamma.
    """
    started = time.perf_counter()
    kind, noise_mode = KernelKind(kind), NoiseMode(noise_mode)
    X, y = _training_data(np.array(X, dtype=float), np.array(y, dtype=float), robot)
    if len(y) < MIN_SELECTION_POINTS:
        raise RegressionError("hyperparameter search needs more data", f"at least {MIN_SELECTION_POINTS} points, got {len(y)}")
    base = default_gamma(kind, X)
    eta2_grid: List[float] = [eta2] if noise_mode is NoiseMode.FIXED else [10.0 ** k for k in ETA2_GRID_EXPONENTS]

    probe = KernelSpec(kind, base, robot)
    F = features(probe, X)
    sq = squared_distances(probe, F, F)
    best: Optional[Hyperparameters] = None
    for k in GAMMA_GRID_EXPONENTS:
        spec = probe.with_gamma(base * 2.0 ** k)
        K = gram_from_squared_distances(spec, sq)
        for candidate_eta2 in eta2_grid:
            try:
                model = _gp_from_gram(spec, X, y, F, K, candidate_eta2, prior_mean, started)
            except RegressionError as e:
                logger.debug(f"Skipping gamma={spec.gamma:.4g} eta2={candidate_eta2:.1e}: {e}")
                continue
            lml = gp_log_marginal_likelihood(model)
            if best is None or lml > best.log_likelihood:
                best = Hyperparameters(spec, candidate_eta2, lml)
    if best is None:
        raise RegressionError("no hyperparameter setting could be fitted")
    logger.info(
        f"Selected {kind.value} kernel gamma={best.spec.gamma:.4g} eta2={best.eta2:.3g} "
        f"(log likelihood {best.log_likelihood:.2f}, {time.perf_counter() - started:.2f}s)"
    )
    return best


def _kr_from_squared(sq: np.ndarray, y: np.ndarray, gamma: float) -> np.ndarray:
    weights = np.exp(-gamma * sq)
    totals = weights.sum(axis=1)
    underflow = totals <= KR_UNDERFLOW
    safe = np.where(underflow, 1.0, totals)
    predictions = (weights @ y) / safe
    if np.any(underflow):
        logger.debug(f"Kernel regression weights underflowed for {int(underflow.sum())} queries")
        predictions[underflow] = y[np.argmin(sq[underflow], axis=1)]
    return np.clip(predictions, y.min(), y.max())


def select_kr_gamma(X: np.ndarray, y: np.ndarray) -> float:
    """Leave-one-out MSE over ``default_gamma * 2^k``, k in -4..4; ties go to the smaller gamma."""
    X, y = _training_data(X, y, None)
    if len(y) < 2:
        return default_gamma(KernelKind.GAUSSIAN, X)
    base = default_gamma(KernelKind.GAUSSIAN, X)
    sq = squared_distances(KernelSpec(KernelKind.GAUSSIAN, base), X, X)
    np.fill_diagonal(sq, np.inf)
    best_gamma, best_mse = base, math.inf
    for k in GAMMA_GRID_EXPONENTS:
        gamma = base * 2.0 ** k
        mse = float(np.mean((_kr_from_squared(sq, y, gamma) - y) ** 2))
        if mse < best_mse:
            best_gamma, best_mse = gamma, mse
    logger.info(f"Selected kernel regression gamma={best_gamma:.4g} (leave-one-out MSE {best_mse:.4g})")
    return best_gamma


def kr_fit(X: np.ndarray, y: np.ndarray, gamma: Optional[float] = None, robot: Optional[RobotModel] = None) -> KrModel:
    started = time.perf_counter()
    X, y = _training_data(np.array(X, dtype=float), np.array(y, dtype=float), robot)
    if gamma is None:
        gamma = select_kr_gamma(X, y)
    spec = KernelSpec(KernelKind.GAUSSIAN, gamma, robot)
    X.setflags(write=False)
    y.setflags(write=False)
    return KrModel(spec, X, y, X, time.perf_counter() - started)


def kr_predict_batch(model: KrModel, X: np.ndarray) -> np.ndarray:
    X = _check_queries(model.dof, X)
    return _kr_from_squared(squared_distances(model.spec, X, model.features), model.y, model.spec.gamma)


def kr_predict(model: KrModel, x: Sequence[float]) -> float:
    """
    Kernel-weighted mean of the training labels, always inside
    [min y, max y]. Falls back to the nearest training label when every
    weight underflows.
    """
    return float(kr_predict_batch(model, x)[0])


Model = Union[GpModel, KrModel]


def model_to_dict(model: Model) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "format_version": MODEL_FORMAT_VERSION,
        "type": "gp" if isinstance(model, GpModel) else "kr",
        "spec": model.spec.to_dict(),
        "X": model.X.tolist(),
        "y": model.y.tolist(),
        "fit_seconds": model.fit_seconds,
    }
    if isinstance(model, GpModel):
        data.update(
            eta2=model.eta2,
            alpha=model.alpha.tolist(),
            prior_mean=model.prior_mean,
            jitter=model.jitter,
        )
    return data


def model_from_dict(data: Dict[str, Any]) -> Model:
    try:
        version = data["format_version"]
        if version != MODEL_FORMAT_VERSION:
            raise RegressionError("unsupported model format version", f"got {version}")
        spec = KernelSpec.from_dict(data["spec"])
        X = np.array(data["X"], dtype=float)
        y = np.array(data["y"], dtype=float)
        kind = data["type"]
        fit_seconds = float(data.get("fit_seconds", 0.0))
        if kind == "kr":
            X.setflags(write=False)
            y.setflags(write=False)
            return KrModel(spec, X, y, X, fit_seconds)
        if kind != "gp":
            raise RegressionError(f"unknown model type '{kind}'")
        eta2, jitter = float(data["eta2"]), float(data["jitter"])
        alpha = np.array(data["alpha"], dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise RegressionError("malformed model file", str(e))
    X, y = _training_data(X, y, spec.robot)
    if alpha.shape != y.shape:
        raise RegressionError("model weights do not match the training set", f"{alpha.shape} vs {y.shape}")
    F = features(spec, X)
    chol, _ = _factorize(gram_from_features(spec, F, F), eta2, [jitter])
    for array in (X, y, chol, alpha, F):
        array.setflags(write=False)
    return GpModel(spec, X, y, eta2, chol, alpha, float(data.get("prior_mean", 0.0)), jitter, F, fit_seconds)


def save_model(model: Model, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(model_to_dict(model), f)
    logger.info(f"Model written to {path}")


def load_model(path: str) -> Model:
    with open(path, "r") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise RegressionError(f"{path} is not valid JSON", str(e))
    return model_from_dict(data)
