"""
Scene builders: random single-obstacle scenes, the two-block narrow
passage with its scripted reach, and random start/goal tasks.
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np

from .environment import Environment, distance_to_collision
from .errors import GpdistError
from .geometry import ConvexPolygon, box_polygon
from .kinematics import RobotModel

logger = logging.getLogger(__name__)

ANNULUS_INNER = 0.35
ANNULUS_OUTER = 0.85
OBSTACLE_RADIUS = 0.75
MIN_OBSTACLE_VERTICES = 3
MAX_OBSTACLE_VERTICES = 8

# narrow-passage layout
PASSAGE_CENTER_X = 5.0
PASSAGE_TOP = 0.5
PASSAGE_BOTTOM = -0.5
PASSAGE_BLOCK_WIDTH = 1.2
PASSAGE_JOINT_LIMITS = (
    (0.2, 1.6),
    (-0.3, 0.3),
    (-0.3, 0.3),
    (-0.3, 0.3),
    (-0.3, 0.3),
    (-2.2, -0.8),
    (-1.8, 0.2),
)
PASSAGE_REACH_START = (2.5, 4.5)
PASSAGE_REACH_ENTRY = (5.0, 2.2)
PASSAGE_REACH_END = (5.0, 1.3)
PASSAGE_APPROACH_FRACTION = 0.6

TASK_MAX_ATTEMPTS = 1000


class SceneError(GpdistError):
    """A scene or task could not be built."""


def random_obstacle(robot: RobotModel, rng: np.random.Generator,
                    n_vertices: Optional[int] = None, radius: Optional[float] = None) -> ConvexPolygon:
    """
    Random convex polygon whose center lies in the annulus the arm can reach.

    The center radius is uniform by area over [0.35 R, 0.85 R], R being the
    total arm length. Vertices sit on a circle at jittered, sorted angles so
    the polygon is convex and counter-clockwise by construction.
    """
    reach = robot.reach
    if radius is None:
        radius = min(OBSTACLE_RADIUS, 0.3 * reach)
    if n_vertices is None:
        n_vertices = int(rng.integers(MIN_OBSTACLE_VERTICES, MAX_OBSTACLE_VERTICES + 1))
    if not MIN_OBSTACLE_VERTICES <= n_vertices <= MAX_OBSTACLE_VERTICES:
        raise SceneError("obstacle vertex count out of range", f"got {n_vertices}")
    inner, outer = ANNULUS_INNER * reach, ANNULUS_OUTER * reach
    r = math.sqrt(rng.uniform(inner ** 2, outer ** 2))
    psi = rng.uniform(-math.pi, math.pi)
    center = r * np.array([math.cos(psi), math.sin(psi)])

    sector = 2.0 * math.pi / n_vertices
    phase = rng.uniform(0.0, 2.0 * math.pi)
    angles = phase + sector * (np.arange(n_vertices) + rng.uniform(-0.3, 0.3, size=n_vertices))
    vertices = center + radius * np.column_stack((np.cos(angles), np.sin(angles)))
    return ConvexPolygon(vertices)


def random_environment(robot: RobotModel, rng: np.random.Generator, n_obstacles: int = 1) -> Environment:
    if n_obstacles < 1:
        raise SceneError("a scene needs at least one obstacle", f"got {n_obstacles}")
    return Environment(robot, tuple(random_obstacle(robot, rng) for _ in range(n_obstacles)))


def narrow_passage_robot(link_width: float = 0.1) -> RobotModel:
    """Seven unit links with joint limits restricted to the reaching region."""
    return RobotModel(link_lengths=(1.0,) * 7, link_width=link_width, joint_limits=PASSAGE_JOINT_LIMITS)


def narrow_passage_environment(gap: Optional[float] = None, link_width: float = 0.1) -> Environment:
    """
    Two rectangular blocks forming a vertical slot centred at x = 5.

    Args:
        gap: slot width; defaults to three link widths
        link_width: width of the robot links
    """
    if gap is None:
        gap = 3.0 * link_width
    if gap <= link_width:
        raise SceneError("passage must be wider than the links", f"gap {gap}, link width {link_width}")
    height = PASSAGE_TOP - PASSAGE_BOTTOM
    center_y = 0.5 * (PASSAGE_TOP + PASSAGE_BOTTOM)
    offset = 0.5 * gap + 0.5 * PASSAGE_BLOCK_WIDTH
    left = box_polygon((PASSAGE_CENTER_X - offset, center_y), PASSAGE_BLOCK_WIDTH, height)
    right = box_polygon((PASSAGE_CENTER_X + offset, center_y), PASSAGE_BLOCK_WIDTH, height)
    return Environment(narrow_passage_robot(link_width), (left, right))


def _wrist_configuration(point: np.ndarray) -> np.ndarray:
    # links 1-5 aligned (one 5-unit segment), link 6 reaches ``point``
    # elbow-down, link 7 points straight down
    r2 = float(point @ point)
    cos_q = (r2 - 25.0 - 1.0) / 10.0
    if abs(cos_q) > 1.0:
        raise SceneError("reach point outside the wrist workspace", f"point {point.tolist()}")
    q = -math.acos(cos_q)
    phi = math.atan2(point[1], point[0]) - math.atan2(math.sin(q), 5.0 + math.cos(q))
    return np.array([phi, 0.0, 0.0, 0.0, 0.0, q, -0.5 * math.pi - (phi + q)])


def narrow_passage_reach(n_waypoints: int) -> np.ndarray:
    """
    Scripted reach into the slot: the wrist moves from above-left of the
    blocks to above the slot, then straight down until the last link is
    inside it. Returns an (n_waypoints, 7) array.
    """
    if n_waypoints < 3:
        raise SceneError("reach needs at least three waypoints", f"got {n_waypoints}")
    start, entry, end = (np.array(p) for p in (PASSAGE_REACH_START, PASSAGE_REACH_ENTRY, PASSAGE_REACH_END))
    n_approach = max(2, int(round(PASSAGE_APPROACH_FRACTION * n_waypoints)))
    n_descent = n_waypoints - n_approach + 1
    approach = start + np.linspace(0.0, 1.0, n_approach)[:, None] * (entry - start)
    descent = entry + np.linspace(0.0, 1.0, n_descent)[1:, None] * (end - entry)
    wrist = np.vstack((approach, descent))
    return np.array([_wrist_configuration(p) for p in wrist])


def sample_task(env: Environment, rng: np.random.Generator,
                clearance: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Random start and goal on either side of the first obstacle.

    The base joint is offset from the obstacle bearing by 0.5 to 1.5 rad in
    opposite directions; the remaining joints are drawn near zero. Both
    configurations are collision-free by at least ``clearance``.
    """
    robot = env.robot
    if not env.obstacles:
        raise SceneError("task sampling needs an obstacle")
    center = env.obstacles[0].centroid
    bearing = math.atan2(center[1], center[0])

    def draw(side: float) -> np.ndarray:
        for _ in range(TASK_MAX_ATTEMPTS):
            x = rng.uniform(-0.3, 0.3, size=robot.dof)
            x[0] = bearing + side * rng.uniform(0.5, 1.5)
            x[0] = (x[0] + math.pi) % (2.0 * math.pi) - math.pi
            x = robot.clip_to_limits(x)
            if distance_to_collision(env, x).value >= clearance:
                return x
        raise SceneError("no collision-free task configuration found", f"{TASK_MAX_ATTEMPTS} attempts")

    start = draw(1.0)
    goal = draw(-1.0)
    logger.debug(f"Task start {np.round(start, 3).tolist()} goal {np.round(goal, 3).tolist()}")
    return start, goal
