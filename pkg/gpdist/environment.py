"""
Robot-plus-obstacles scenes and the distance-to-collision oracle.

The environment file is JSON::

    {
      "robot": {"dof": 7, "link_lengths": [...], "link_width": 0.1,
                "joint_limits": [[lo, hi], ...]},
      "obstacles": [{"vertices": [[x, y], ...]}, ...]
    }

Obstacle vertices are counter-clockwise; clockwise or non-convex polygons are
rejected on load.
"""
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import GpdistError
from .geometry import ConvexPolygon, GeometryError, signed_distance
from .kinematics import KinematicsError, RobotModel, link_bodies

logger = logging.getLogger(__name__)

ENVIRONMENT_FORMAT_VERSION = 1


class EnvironmentFileError(GpdistError):
    """Malformed or invalid environment file."""


@dataclass(frozen=True)
class Environment:
    """A robot and the convex obstacles around it."""
    robot: RobotModel
    obstacles: Tuple[ConvexPolygon, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    def with_obstacles(self, obstacles: Sequence[ConvexPolygon]) -> "Environment":
        return Environment(self.robot, tuple(obstacles))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": ENVIRONMENT_FORMAT_VERSION,
            "robot": self.robot.to_dict(),
            "obstacles": [{"vertices": obstacle.to_list()} for obstacle in self.obstacles],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Environment":
        if not isinstance(data, dict) or "robot" not in data:
            raise EnvironmentFileError("environment needs a 'robot' block")
        try:
            robot = RobotModel.from_dict(data["robot"])
        except KinematicsError as e:
            raise EnvironmentFileError(f"invalid robot block: {e.message}", e.detail)
        obstacles = []
        for index, entry in enumerate(data.get("obstacles", [])):
            try:
                obstacles.append(ConvexPolygon(entry["vertices"]))
            except (KeyError, TypeError):
                raise EnvironmentFileError(f"obstacle {index} needs a 'vertices' list")
            except (GeometryError, ValueError) as e:
                raise EnvironmentFileError(f"obstacle {index} is invalid: {e}")
        return cls(robot, tuple(obstacles))


@dataclass(frozen=True)
class DistanceResult:
    """Signed distance to collision and the (link, obstacle) pair attaining it."""
    value: float
    witness_pair: Tuple[int, int]

    @property
    def in_collision(self) -> bool:
        return self.value < 0.0


def distance_to_collision(env: Environment, x: Sequence[float]) -> DistanceResult:
    """
    Minimum signed distance between any link and any obstacle.

    Raises:
        GeometryError: if the environment has no obstacles
        KinematicsError: if ``x`` does not match the robot dof
    """
    if not env.obstacles:
        raise GeometryError("distance query needs at least one obstacle")
    bodies = link_bodies(env.robot, x)
    best, witness = np.inf, (-1, -1)
    for i, body in enumerate(bodies):
        for j, obstacle in enumerate(env.obstacles):
            value = signed_distance(body, obstacle)
            if value < best:
                best, witness = value, (i, j)
    return DistanceResult(float(best), witness)


def noisy_distance(env: Environment, x: Sequence[float], eta: float, rng: np.random.Generator) -> float:
    """Oracle distance plus zero-mean Gaussian noise of standard deviation ``eta``."""
    if eta < 0.0:
        raise GeometryError("noise level must be nonnegative", f"got eta={eta}")
    value = distance_to_collision(env, x).value
    if eta == 0.0:
        return value
    return value + eta * float(rng.standard_normal())


def distances(env: Environment, X: np.ndarray) -> np.ndarray:
    """Noise-free oracle over a batch of configurations."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.array([distance_to_collision(env, x).value for x in X])


def dumps_environment(env: Environment) -> str:
    """Canonical JSON text of an environment; the basis of :func:`environment_hash`."""
    return json.dumps(env.to_dict(), indent=2, sort_keys=True)


def environment_hash(env: Environment) -> str:
    return hashlib.sha256(dumps_environment(env).encode("utf-8")).hexdigest()


def save_environment(env: Environment, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        f.write(dumps_environment(env))
    logger.info(f"Environment written to {path}")


def loads_environment(text: str, source: Optional[str] = None) -> Environment:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise EnvironmentFileError(f"{source or 'environment'} is not valid JSON", str(e))
    return Environment.from_dict(data)


def load_environment(path: str) -> Environment:
    with open(path, "r") as f:
        return loads_environment(f.read(), source=path)
