"""
RRT seeding and fixed-length resampling of joint-space paths.
"""
import logging
import math
from typing import Sequence

import numpy as np

from .environment import Environment, distance_to_collision
from .errors import GpdistError
from .kinematics import as_configuration
from .optimize import Trajectory

logger = logging.getLogger(__name__)

RRT_STEP = 0.2
RRT_GOAL_BIAS = 0.05
EDGE_RESOLUTION = 0.05
RRT_MAX_ITERATIONS = 50_000


class PlanningError(GpdistError):
    """No plan could be produced."""


def is_collision_free(env: Environment, x: Sequence[float]) -> bool:
    return distance_to_collision(env, x).value > 0.0


def edge_collision_free(env: Environment, a: np.ndarray, b: np.ndarray,
                        resolution: float = EDGE_RESOLUTION) -> bool:
    """Check ``b`` and interior points so that no joint moves more than ``resolution`` between checks."""
    delta = b - a
    n = max(1, int(math.ceil(float(np.max(np.abs(delta))) / resolution)))
    return all(is_collision_free(env, a + (i / n) * delta) for i in range(1, n + 1))


def shortcut_path(env: Environment, path: np.ndarray, resolution: float = EDGE_RESOLUTION) -> np.ndarray:
    """Greedy shortcutting: from each kept node jump to the farthest node reachable by a free edge."""
    kept = [0]
    i = 0
    while i < len(path) - 1:
        j = len(path) - 1
        while j > i + 1 and not edge_collision_free(env, path[i], path[j], resolution):
            j -= 1
        kept.append(j)
        i = j
    return path[kept]


def rrt_plan(env: Environment, start: Sequence[float], goal: Sequence[float], rng: np.random.Generator,
             step: float = RRT_STEP, goal_bias: float = RRT_GOAL_BIAS, resolution: float = EDGE_RESOLUTION,
             max_iterations: int = RRT_MAX_ITERATIONS, shortcut: bool = True) -> np.ndarray:
    """
    Plan a collision-free joint-space path with a single RRT.

    Extensions move at most ``step`` in the max-norm; the goal is sampled
    with probability ``goal_bias``. Every edge is checked against the
    noise-free oracle at ``resolution``.

    Raises:
        PlanningError: if start or goal is in collision or no plan is found
            within ``max_iterations``
    """
    robot = env.robot
    start = as_configuration(robot, start)
    goal = as_configuration(robot, goal)
    if np.array_equal(start, goal):
        return start[None, :].copy()
    for name, x in (("start", start), ("goal", goal)):
        if not is_collision_free(env, x):
            raise PlanningError(f"{name} configuration is in collision")

    nodes = np.empty((max_iterations + 2, robot.dof))
    parents = np.full(max_iterations + 2, -1, dtype=int)
    nodes[0] = start
    count = 1

    def path_to(index: int) -> np.ndarray:
        chain = []
        while index >= 0:
            chain.append(nodes[index])
            index = parents[index]
        return np.array(chain[::-1])

    def try_goal(index: int) -> bool:
        return (np.max(np.abs(goal - nodes[index])) <= step
                and edge_collision_free(env, nodes[index], goal, resolution))

    if try_goal(0):
        path = np.vstack((start, goal))
        return path
    for iteration in range(max_iterations):
        target = goal if rng.random() < goal_bias else rng.uniform(robot.lower, robot.upper)
        nearest = int(np.argmin(np.sum((nodes[:count] - target) ** 2, axis=1)))
        delta = target - nodes[nearest]
        spread = float(np.max(np.abs(delta)))
        if spread == 0.0:
            continue
        new = nodes[nearest] + min(1.0, step / spread) * delta
        if not edge_collision_free(env, nodes[nearest], new, resolution):
            continue
        nodes[count], parents[count] = new, nearest
        count += 1
        if try_goal(count - 1):
            nodes[count], parents[count] = goal, count - 1
            path = path_to(count)
            logger.debug(f"RRT found a {len(path)}-node path after {iteration + 1} iterations ({count + 1} nodes)")
            return shortcut_path(env, path, resolution) if shortcut else path
    raise PlanningError("no plan found", f"{max_iterations} iterations")


def resample_trajectory(path: np.ndarray, T: int) -> Trajectory:
    """
    ``T`` waypoints spaced uniformly by joint-space arc length along ``path``;
    the endpoints are copied exactly.
    """
    if T < 2:
        raise PlanningError("T must be at least 2", f"got {T}")
    path = np.atleast_2d(np.asarray(path, dtype=float))
    keep = np.concatenate(([True], np.linalg.norm(np.diff(path, axis=0), axis=1) > 0.0))
    nodes = path[keep]
    if len(nodes) == 1:
        return Trajectory(np.repeat(nodes, T, axis=0))
    arc = np.concatenate(([0.0], np.cumsum(np.linalg.norm(np.diff(nodes, axis=0), axis=1))))
    targets = np.linspace(0.0, arc[-1], T)
    waypoints = np.column_stack([np.interp(targets, arc, nodes[:, j]) for j in range(nodes.shape[1])])
    waypoints[0], waypoints[-1] = path[0], path[-1]
    return Trajectory(waypoints)


def seed_waypoints(path: np.ndarray, T: int, dtheta_max: float) -> int:
    """Waypoint count keeping every resampled step within 95% of ``dtheta_max``."""
    path = np.atleast_2d(np.asarray(path, dtype=float))
    length = float(np.linalg.norm(np.diff(path, axis=0), axis=1).sum()) if len(path) > 1 else 0.0
    return max(T, int(math.ceil(length / (0.95 * dtheta_max))) + 1)
