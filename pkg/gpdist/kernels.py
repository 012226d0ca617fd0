"""
Similarity functions between configurations.

Two kernels are provided:

- gaussian: ``exp(-gamma * |x - x'|^2)`` in joint space
- fk: ``sum_m (1 + gamma/2 * |p_m(x) - p_m(x')|^2)^-2`` over the control
  points ``p_m`` at the distal end of every link

Gram assembly goes through *features* (the configurations themselves for
the gaussian kernel, their control points for the fk kernel) so forward
kinematics runs once per configuration, never once per pair.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import GpdistError
from .kinematics import RobotModel, control_points_batch


class KernelError(GpdistError):
    """Invalid kernel specification or mismatched inputs."""


class KernelKind(str, Enum):
    GAUSSIAN = "gaussian"
    FK = "fk"


@dataclass(frozen=True)
class KernelSpec:
    """
    Args:
        kind: gaussian or fk
        gamma: width parameter, > 0
        robot: robot whose control points the fk kernel compares; also used
            to check input dimensions for the gaussian kernel when given
    """
    kind: KernelKind
    gamma: float
    robot: Optional[RobotModel] = None

    def __post_init__(self):
        try:
            kind = KernelKind(self.kind)
        except ValueError:
            raise KernelError(f"unknown kernel kind '{self.kind}'", "expected 'gaussian' or 'fk'")
        object.__setattr__(self, "kind", kind)
        gamma = float(self.gamma)
        if not np.isfinite(gamma) or gamma <= 0.0:
            raise KernelError("kernel gamma must be positive", f"got {self.gamma}")
        object.__setattr__(self, "gamma", gamma)
        if kind is KernelKind.FK and self.robot is None:
            raise KernelError("fk kernel needs a robot model")

    def with_gamma(self, gamma: float) -> "KernelSpec":
        return KernelSpec(self.kind, gamma, self.robot)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "gamma": self.gamma,
            "robot": self.robot.to_dict() if self.robot is not None else None,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "KernelSpec":
        robot = data.get("robot")
        return cls(
            kind=data["kind"],
            gamma=data["gamma"],
            robot=RobotModel.from_dict(robot) if robot is not None else None,
        )


def _as_batch(X: np.ndarray, dof: Optional[int]) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise KernelError("configurations must be a 2-D array", f"got shape {X.shape}")
    if dof is not None and X.shape[1] != dof:
        raise KernelError("configurations do not match robot dof", f"expected {dof} columns, got {X.shape[1]}")
    return X


def features(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    """Per-configuration features: (N, D) for gaussian, (N, M, 2) control points for fk."""
    dof = spec.robot.dof if spec.robot is not None else None
    X = _as_batch(X, dof)
    if spec.kind is KernelKind.FK:
        return control_points_batch(spec.robot, X)
    return X


def squared_distances(spec: KernelSpec, F1: np.ndarray, F2: np.ndarray) -> np.ndarray:
    """(N1, N2) joint-space or (N1, N2, M) per-control-point squared distances."""
    if F1.shape[1:] != F2.shape[1:]:
        raise KernelError("feature shapes differ", f"{F1.shape[1:]} vs {F2.shape[1:]}")
    if spec.kind is KernelKind.FK:
        if len(F1) == 1:
            # single query: one broadcast beats M cdist calls
            diff = F2 - F1
            return np.einsum("nmk,nmk->nm", diff, diff)[None]
        return np.stack([cdist(F1[:, m], F2[:, m], "sqeuclidean") for m in range(F1.shape[1])], axis=-1)
    return cdist(F1, F2, "sqeuclidean")


def gram_from_squared_distances(spec: KernelSpec, sq: np.ndarray) -> np.ndarray:
    if spec.kind is KernelKind.FK:
        return np.sum((1.0 + 0.5 * spec.gamma * sq) ** -2, axis=-1)
    return np.exp(-spec.gamma * sq)


def gram_from_features(spec: KernelSpec, F1: np.ndarray, F2: np.ndarray) -> np.ndarray:
    return gram_from_squared_distances(spec, squared_distances(spec, F1, F2))


def kernel_row(spec: KernelSpec, F_train: np.ndarray, x: Sequence[float]) -> np.ndarray:
    """k(x, X) against precomputed training features, shape (N,)."""
    return gram_from_features(spec, features(spec, x), F_train)[0]


def gram_matrix(spec: KernelSpec, X: np.ndarray, X2: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Gram matrix ``K[i, j] = k(X[i], X2[j])``; ``X2`` defaults to ``X`` and the
    result is then exactly symmetric.
    """
    F1 = features(spec, X)
    F2 = F1 if X2 is None else features(spec, X2)
    return gram_from_features(spec, F1, F2)


def gaussian_kernel(x: Sequence[float], x2: Sequence[float], gamma: float) -> float:
    x, x2 = np.asarray(x, dtype=float), np.asarray(x2, dtype=float)
    if x.shape != x2.shape:
        raise KernelError("configurations differ in dimension", f"{x.shape} vs {x2.shape}")
    if gamma <= 0.0:
        raise KernelError("kernel gamma must be positive", f"got {gamma}")
    diff = x - x2
    return float(np.exp(-gamma * float(diff @ diff)))


def fk_kernel(x: Sequence[float], x2: Sequence[float], spec: KernelSpec) -> float:
    if spec.kind is not KernelKind.FK:
        raise KernelError("fk_kernel needs an fk kernel spec", f"got '{spec.kind.value}'")
    return float(gram_matrix(spec, np.asarray(x, dtype=float), np.asarray(x2, dtype=float))[0, 0])


def prior_variance(spec: KernelSpec) -> float:
    """k(x, x): 1 for gaussian, the number of control points for fk."""
    if spec.kind is KernelKind.FK:
        return float(spec.robot.dof)
    return 1.0


def default_gamma(kind: KernelKind, X: Optional[np.ndarray] = None) -> float:
    """
    Median heuristic ``1 / (2 median^2)`` over pairwise joint-space distances
    for gaussian; 1.0 for fk or when fewer than two points are given.
    """
    kind = KernelKind(kind)
    if kind is KernelKind.FK or X is None:
        return 1.0
    X = _as_batch(X, None)
    if len(X) < 2:
        return 1.0
    median = float(np.median(pdist(X)))
    if median <= 0.0:
        return 1.0
    return 1.0 / (2.0 * median ** 2)
