"""
Forward kinematics of a planar serial chain of revolute joints.

The base sits at the workspace origin with zero orientation. Link ``k``
starts at the distal end of link ``k - 1`` and its heading is the sum of
the first ``k`` joint angles.
"""
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import GpdistError
from .geometry import ConvexPolygon

DEFAULT_LINK_WIDTH = 0.1
DEFAULT_JOINT_LIMIT = (-math.pi, math.pi)


class KinematicsError(GpdistError):
    """Invalid robot description or configuration."""


class LinkPose(NamedTuple):
    """Origin of a link and its heading in the workspace frame."""
    origin: np.ndarray
    angle: float


@dataclass(frozen=True)
class RobotModel:
    """
    Geometry of a planar manipulator.

    Args:
        link_lengths: length of each link, base to tip
        link_width: width of the rectangular link profile
        joint_limits: (lower, upper) radians per joint; defaults to [-pi, pi]
    """
    link_lengths: Tuple[float, ...]
    link_width: float = DEFAULT_LINK_WIDTH
    joint_limits: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self):
        lengths = tuple(float(length) for length in self.link_lengths)
        if not lengths:
            raise KinematicsError("robot needs at least one link")
        if any(not math.isfinite(length) or length <= 0.0 for length in lengths):
            raise KinematicsError("link lengths must be positive", f"got {list(lengths)}")
        if not math.isfinite(self.link_width) or self.link_width <= 0.0:
            raise KinematicsError("link width must be positive", f"got {self.link_width}")
        if self.joint_limits is None:
            limits = tuple(DEFAULT_JOINT_LIMIT for _ in lengths)
        else:
            limits = tuple((float(lo), float(hi)) for lo, hi in self.joint_limits)
        if len(limits) != len(lengths):
            raise KinematicsError("one joint limit per link is required", f"{len(limits)} limits for {len(lengths)} links")
        if any(not lo < hi for lo, hi in limits):
            raise KinematicsError("joint limits must satisfy lower < upper", f"got {list(limits)}")
        object.__setattr__(self, "link_lengths", lengths)
        object.__setattr__(self, "link_width", float(self.link_width))
        object.__setattr__(self, "joint_limits", limits)

    @classmethod
    def uniform(cls, dof: int, length: float = 1.0, width: float = DEFAULT_LINK_WIDTH) -> "RobotModel":
        """A robot with ``dof`` identical links and default joint limits."""
        if dof < 1:
            raise KinematicsError("dof must be positive", f"got {dof}")
        return cls(link_lengths=(length,) * dof, link_width=width)

    @property
    def dof(self) -> int:
        return len(self.link_lengths)

    @property
    def reach(self) -> float:
        return float(sum(self.link_lengths))

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.link_lengths, dtype=float)

    @cached_property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.joint_limits])

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.joint_limits])

    def within_limits(self, x: Sequence[float], tolerance: float = 0.0) -> bool:
        x = as_configuration(self, x)
        return bool(np.all(x >= self.lower - tolerance) and np.all(x <= self.upper + tolerance))

    def clip_to_limits(self, x: Sequence[float]) -> np.ndarray:
        return np.clip(as_configuration(self, x), self.lower, self.upper)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dof": self.dof,
            "link_lengths": list(self.link_lengths),
            "link_width": self.link_width,
            "joint_limits": [list(limits) for limits in self.joint_limits],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RobotModel":
        try:
            lengths = data["link_lengths"]
        except (KeyError, TypeError):
            raise KinematicsError("robot block needs 'link_lengths'")
        dof = data.get("dof", len(lengths))
        if dof != len(lengths):
            raise KinematicsError("robot 'dof' does not match 'link_lengths'", f"dof {dof}, {len(lengths)} lengths")
        limits = data.get("joint_limits")
        return cls(
            link_lengths=tuple(lengths),
            link_width=data.get("link_width", DEFAULT_LINK_WIDTH),
            joint_limits=tuple(tuple(limit) for limit in limits) if limits is not None else None,
        )


def as_configuration(robot: RobotModel, x: Sequence[float]) -> np.ndarray:
    """Validate and convert a configuration to a float vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (robot.dof,):
        raise KinematicsError(
            "configuration does not match robot dof",
            f"expected {robot.dof} joint angles, got shape {x.shape}",
        )
    return x


def _chain(robot: RobotModel, x: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    headings = np.cumsum(as_configuration(robot, x))
    steps = robot.lengths[:, None] * np.column_stack((np.cos(headings), np.sin(headings)))
    joints = np.vstack((np.zeros((1, 2)), np.cumsum(steps, axis=0)))
    return headings, joints


def joint_positions(robot: RobotModel, x: Sequence[float]) -> np.ndarray:
    """Base, every joint and the end effector: a (D + 1, 2) array."""
    return _chain(robot, x)[1]


def link_poses(robot: RobotModel, x: Sequence[float]) -> List[LinkPose]:
    headings, joints = _chain(robot, x)
    return [LinkPose(joints[k], float(headings[k])) for k in range(robot.dof)]


def control_points(robot: RobotModel, x: Sequence[float]) -> np.ndarray:
    """Distal end of every link, shape (D, 2)."""
    return _chain(robot, x)[1][1:]


def control_points_batch(robot: RobotModel, X: np.ndarray) -> np.ndarray:
    """Control points for many configurations at once, shape (N, D, 2)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != robot.dof:
        raise KinematicsError(
            "configurations do not match robot dof",
            f"expected {robot.dof} columns, got {X.shape[1]}",
        )
    headings = np.cumsum(X, axis=1)
    points = np.stack((np.cos(headings), np.sin(headings)), axis=-1) * robot.lengths[None, :, None]
    return np.cumsum(points, axis=1)


def end_effector(robot: RobotModel, x: Sequence[float]) -> np.ndarray:
    return _chain(robot, x)[1][-1]


def link_bodies(robot: RobotModel, x: Sequence[float]) -> List[ConvexPolygon]:
    """Rectangle of every link, spanning the link segment, ``link_width`` wide."""
    headings, joints = _chain(robot, x)
    half = 0.5 * robot.link_width
    normals = half * np.column_stack((-np.sin(headings), np.cos(headings)))
    starts, ends = joints[:-1], joints[1:]
    corners = np.stack((starts - normals, ends - normals, ends + normals, starts + normals), axis=1)
    return [ConvexPolygon(rectangle, validate=False) for rectangle in corners]


def ee_jacobian(robot: RobotModel, x: Sequence[float]) -> np.ndarray:
    """
    Jacobian of the end-effector position, shape (2, D).

    Column ``j`` is the lever arm from joint ``j`` to the end effector
    rotated by 90 degrees.
    """
    joints = joint_positions(robot, x)
    lever = joints[-1] - joints[:-1]
    return np.vstack((-lever[:, 1], lever[:, 0]))
