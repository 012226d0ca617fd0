"""
Trajectory optimization with a pluggable distance estimator.

The decision vector is the interior waypoints; the endpoints are fixed and
never move. Two problems are solved:

- constraint: minimize end-effector path length subject to
  ``d(theta_t) >= d_min`` at every interior waypoint
- maximize: minimize ``exp(-min_t d(theta_t)) * L``

Both keep every joint-space step within ``dtheta_max``. Inequalities are
handled by an augmented-Lagrangian outer loop around L-BFGS-B.
"""
import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from .environment import Environment, distances
from .errors import GpdistError
from .estimators import DistanceEstimator, HybridDistanceEstimator, branch_switches
from .kinematics import control_points_batch, ee_jacobian

logger = logging.getLogger(__name__)

DEFAULT_WAYPOINTS = 30
DEFAULT_DTHETA = 0.3
DEFAULT_D_MIN = 0.2
MAX_OUTER_ITERATIONS = 20
INNER_MAX_ITERATIONS = 200
INNER_GTOL = 1e-6
PENALTY_START = 10.0
PENALTY_GROWTH = 10.0
PENALTY_MAX = 1e8
# grow the penalty unless the violation shrinks below this fraction
VIOLATION_SHRINK = 0.25
FD_STEP = 1e-6
SOFTMIN_TEMPERATURE = 0.01
MERIT_WEIGHT = 100.0
FEASIBILITY_TOLERANCE = 1e-4
STEP_TOLERANCE = 1e-9
CONVERGENCE_TOLERANCE = 1e-6
REPAIR_BISECTIONS = 60


class OptimizationError(GpdistError):
    """The optimizer diverged or was given an inconsistent problem."""


class OptimizeMode(str, Enum):
    CONSTRAINT = "constraint"
    MAXIMIZE = "maximize"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """T waypoints, shape (T, D)."""
    waypoints: np.ndarray

    def __post_init__(self):
        waypoints = np.array(self.waypoints, dtype=float)
        if waypoints.ndim != 2 or len(waypoints) < 2:
            raise OptimizationError("trajectory needs at least two waypoints", f"got shape {waypoints.shape}")
        waypoints.setflags(write=False)
        object.__setattr__(self, "waypoints", waypoints)

    @property
    def T(self) -> int:
        return len(self.waypoints)

    @property
    def dof(self) -> int:
        return self.waypoints.shape[1]

    @property
    def start(self) -> np.ndarray:
        return self.waypoints[0]

    @property
    def goal(self) -> np.ndarray:
        return self.waypoints[-1]

    def steps(self) -> np.ndarray:
        """Joint-space norm of every step, length T - 1."""
        return np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)

    def cspace_length(self) -> float:
        return float(self.steps().sum())


@dataclass
class OptimizeProblem:
    env: Environment
    estimator: DistanceEstimator
    start: np.ndarray
    goal: np.ndarray
    T: int = DEFAULT_WAYPOINTS
    dtheta_max: float = DEFAULT_DTHETA
    d_min: float = DEFAULT_D_MIN
    mode: OptimizeMode = OptimizeMode.CONSTRAINT
    seed: Optional[int] = None

    def __post_init__(self):
        robot = self.env.robot
        self.mode = OptimizeMode(self.mode)
        self.start = np.asarray(self.start, dtype=float)
        self.goal = np.asarray(self.goal, dtype=float)
        for name, x in (("start", self.start), ("goal", self.goal)):
            if x.shape != (robot.dof,):
                raise OptimizationError(f"{name} does not match robot dof", f"expected {robot.dof}, got {x.shape}")
            if not robot.within_limits(x):
                raise OptimizationError(f"{name} is outside the joint limits")
        if self.T < 2:
            raise OptimizationError("T must be at least 2", f"got {self.T}")
        if self.dtheta_max <= 0.0:
            raise OptimizationError("dtheta_max must be positive", f"got {self.dtheta_max}")
        if self.mode is OptimizeMode.CONSTRAINT and self.d_min < 0.0:
            raise OptimizationError("d_min must be nonnegative", f"got {self.d_min}")


@dataclass
class OptimizeReport:
    estimator: str
    mode: str
    T: int
    path_length: float
    objective: float
    estimator_min_distance: float
    oracle_min_distance: float
    outer_iterations: int
    inner_iterations: int
    wall_time: float
    status: str
    feasible: bool
    max_step: float
    merit_history: List[float] = field(default_factory=list)
    seed: Optional[int] = None
    branch_switches: Optional[int] = None
    sensor_calls: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class OptimizeResult:
    trajectory: Trajectory
    report: OptimizeReport


def path_length(waypoints: np.ndarray, robot) -> float:
    """End-effector distance travelled along the waypoints."""
    ee = control_points_batch(robot, waypoints)[:, -1]
    return float(np.linalg.norm(np.diff(ee, axis=0), axis=1).sum())


def path_length_gradient(waypoints: np.ndarray, robot) -> np.ndarray:
    """d L / d theta_t for every waypoint, shape (T, D)."""
    waypoints = np.asarray(waypoints, dtype=float)
    ee = control_points_batch(robot, waypoints)[:, -1]
    segments = np.diff(ee, axis=0)
    norms = np.linalg.norm(segments, axis=1)
    units = np.divide(segments, norms[:, None], out=np.zeros_like(segments), where=norms[:, None] > 0.0)
    # u_{t-1} - u_t with zero padding at both ends
    pull = np.vstack((np.zeros((1, 2)), units)) - np.vstack((units, np.zeros((1, 2))))
    return np.array([ee_jacobian(robot, x).T @ p for x, p in zip(waypoints, pull)])


def _distances_with_gradient(estimator: DistanceEstimator, interior: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Estimator values at the interior waypoints and central-difference gradients, (n,) and (n, D)."""
    n, dof = interior.shape
    offsets = FD_STEP * np.eye(dof)
    probes = np.concatenate((
        interior,
        (interior[:, None, :] + offsets[None]).reshape(-1, dof),
        (interior[:, None, :] - offsets[None]).reshape(-1, dof),
    ))
    values = estimator.evaluate_many(probes)
    d = values[:n]
    plus = values[n:n + n * dof].reshape(n, dof)
    minus = values[n + n * dof:].reshape(n, dof)
    return d, (plus - minus) / (2.0 * FD_STEP)


def _step_constraints(waypoints: np.ndarray, dtheta_max: float) -> Tuple[np.ndarray, np.ndarray]:
    """``dtheta^2 - |step|^2`` per step and its gradient w.r.t. every waypoint, (T-1,) and (T-1, T, D)."""
    diffs = np.diff(waypoints, axis=0)
    values = dtheta_max ** 2 - np.einsum("ij,ij->i", diffs, diffs)
    T, dof = waypoints.shape
    grads = np.zeros((T - 1, T, dof))
    rows = np.arange(T - 1)
    grads[rows, rows] = 2.0 * diffs
    grads[rows, rows + 1] = -2.0 * diffs
    return values, grads


def _repair_steps(candidate: np.ndarray, anchor: np.ndarray, dtheta_max: float) -> np.ndarray:
    """
    Blend interior waypoints toward a step-feasible anchor by the smallest
    amount that brings every step within ``dtheta_max``.
    """
    def max_step(w):
        return float(np.max(np.linalg.norm(np.diff(w, axis=0), axis=1)))

    limit = dtheta_max + STEP_TOLERANCE
    if max_step(candidate) <= limit:
        return candidate
    if max_step(anchor) > limit:
        return candidate
    lo, hi = 0.0, 1.0
    for _ in range(REPAIR_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if max_step((1.0 - mid) * candidate + mid * anchor) <= limit:
            hi = mid
        else:
            lo = mid
    blended = (1.0 - hi) * candidate + hi * anchor
    blended[0], blended[-1] = anchor[0], anchor[-1]
    return blended


class _AugmentedLagrangian:
    """Shared outer loop; subclasses define the objective and the inequalities."""

    def __init__(self, problem: OptimizeProblem, seed: Trajectory):
        self.problem = problem
        self.robot = problem.env.robot
        self.start, self.goal = problem.start, problem.goal
        self.dof = self.robot.dof
        self.T = seed.T
        self.inner_iterations = 0

    def full(self, z: np.ndarray) -> np.ndarray:
        return np.vstack((self.start, z.reshape(self.T - 2, self.dof), self.goal))

    # objective value, its gradient w.r.t. all waypoints, inequality values,
    # their gradients w.r.t. all waypoints, and the reported objective
    def evaluate(self, waypoints: np.ndarray):
        raise NotImplementedError

    def reported(self, waypoints: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        """Reported objective, all estimator distances, inequality values."""
        raise NotImplementedError

    def merit(self, waypoints: np.ndarray) -> Tuple[float, float, np.ndarray, np.ndarray]:
        """Merit, reported objective, estimator distances and inequality values."""
        objective, d, c = self.reported(waypoints)
        violation = float(np.sum(np.maximum(0.0, -c)))
        merit = objective + MERIT_WEIGHT * violation
        if not math.isfinite(merit):
            raise OptimizationError("objective is not finite", f"merit {merit}")
        return merit, objective, d, c

    def lagrangian(self, z: np.ndarray, lam: np.ndarray, rho: float) -> Tuple[float, np.ndarray]:
        waypoints = self.full(z)
        f, grad_f, c, grad_c = self.evaluate(waypoints)
        active = np.maximum(0.0, lam - rho * c)
        shifted = c - lam / rho
        psi = np.where(shifted <= 0.0, -lam * c + 0.5 * rho * c ** 2, -0.5 * lam ** 2 / rho)
        value = f + float(psi.sum())
        grad = grad_f - np.einsum("i,itd->td", active, grad_c)
        if not math.isfinite(value) or not np.all(np.isfinite(grad)):
            raise OptimizationError("objective is not finite")
        return value, grad[1:-1].ravel()

    def solve(self, seed: Trajectory) -> Tuple[Trajectory, Dict[str, Any]]:
        bounds = list(zip(np.tile(self.robot.lower, self.T - 2), np.tile(self.robot.upper, self.T - 2)))
        anchor = np.array(seed.waypoints)
        current = anchor.copy()
        merit, objective, d, c = self.merit(current)
        history = [merit]
        best = (current, objective, d)
        lam = np.zeros_like(c)
        rho = PENALTY_START
        previous_violation = math.inf
        status = "max-iters"
        outer = 0
        for outer in range(1, MAX_OUTER_ITERATIONS + 1):
            if self.T == 2:
                status = "converged"
                break
            result = minimize(
                self.lagrangian,
                current[1:-1].ravel(),
                args=(lam, rho),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"gtol": INNER_GTOL, "maxiter": INNER_MAX_ITERATIONS},
            )
            self.inner_iterations += int(result.nit)
            candidate = _repair_steps(self.full(result.x), anchor, self.problem.dtheta_max)
            candidate_merit, candidate_objective, candidate_d, c = self.merit(candidate)
            violation = float(np.max(np.abs(np.minimum(c, lam / rho)))) if len(c) else 0.0
            lam = np.maximum(0.0, lam - rho * c)
            if violation > VIOLATION_SHRINK * previous_violation:
                rho = min(rho * PENALTY_GROWTH, PENALTY_MAX)
            previous_violation = violation

            logger.debug(
                f"outer {outer}: merit {candidate_merit:.6g} (best {history[-1]:.6g}), "
                f"violation {violation:.3e}, rho {rho:.1e}, inner {result.nit}"
            )
            if candidate_merit <= history[-1]:
                improvement = history[-1] - candidate_merit
                current = candidate
                best = (candidate, candidate_objective, candidate_d)
                history.append(candidate_merit)
                feasible = float(np.min(c)) >= -FEASIBILITY_TOLERANCE if len(c) else True
                if feasible and improvement <= CONVERGENCE_TOLERANCE * (1.0 + abs(candidate_merit)):
                    status = "converged"
                    break
        else:
            logger.warning(f"Optimizer stopped after {MAX_OUTER_ITERATIONS} outer iterations")
        waypoints, objective, d = best
        return Trajectory(waypoints), {
            "objective": objective,
            "estimator_distances": d,
            "outer_iterations": outer,
            "status": status,
            "merit_history": history,
        }


class _ConstraintProblem(_AugmentedLagrangian):
    def evaluate(self, waypoints):
        d, grad_d = _distances_with_gradient(self.problem.estimator, waypoints[1:-1])
        clearance = d - self.problem.d_min
        grad_clearance = np.zeros((len(d), self.T, self.dof))
        grad_clearance[np.arange(len(d)), np.arange(1, self.T - 1)] = grad_d
        steps, grad_steps = _step_constraints(waypoints, self.problem.dtheta_max)
        c = np.concatenate((clearance, steps))
        grad_c = np.concatenate((grad_clearance, grad_steps))
        return path_length(waypoints, self.robot), path_length_gradient(waypoints, self.robot), c, grad_c

    def reported(self, waypoints):
        d = self.problem.estimator.evaluate_many(waypoints)
        steps, _ = _step_constraints(waypoints, self.problem.dtheta_max)
        c = np.concatenate((d[1:-1] - self.problem.d_min, steps))
        return path_length(waypoints, self.robot), d, c


class _MaximizeProblem(_AugmentedLagrangian):
    def evaluate(self, waypoints):
        estimator = self.problem.estimator
        d_inner, grad_inner = _distances_with_gradient(estimator, waypoints[1:-1])
        d = np.concatenate(([self.endpoint_d[0]], d_inner, [self.endpoint_d[1]]))
        tau = SOFTMIN_TEMPERATURE
        softmin = -tau * logsumexp(-d / tau)
        weights = softmax(-d / tau)
        weight = math.exp(-softmin)
        length = path_length(waypoints, self.robot)
        grad_length = path_length_gradient(waypoints, self.robot)
        grad_softmin = np.zeros((self.T, self.dof))
        grad_softmin[1:-1] = weights[1:-1, None] * grad_inner
        grad = weight * (grad_length - length * grad_softmin)
        steps, grad_steps = _step_constraints(waypoints, self.problem.dtheta_max)
        return weight * length, grad, steps, grad_steps

    def reported(self, waypoints):
        d = self.problem.estimator.evaluate_many(waypoints)
        steps, _ = _step_constraints(waypoints, self.problem.dtheta_max)
        return math.exp(-float(np.min(d))) * path_length(waypoints, self.robot), d, steps

    def solve(self, seed):
        self.endpoint_d = self.problem.estimator.evaluate_many(np.vstack((self.start, self.goal)))
        return super().solve(seed)


def _check_seed(problem: OptimizeProblem, seed: Trajectory) -> None:
    if seed.dof != problem.env.robot.dof:
        raise OptimizationError("seed trajectory does not match robot dof")
    if not (np.array_equal(seed.start, problem.start) and np.array_equal(seed.goal, problem.goal)):
        raise OptimizationError("seed endpoints do not match the problem start and goal")
    if np.any(seed.steps() > problem.dtheta_max + STEP_TOLERANCE):
        logger.warning(
            f"Seed steps up to {seed.steps().max():.3f} exceed dtheta_max {problem.dtheta_max}; "
            "the step limit may not be met"
        )


def _optimize(problem: OptimizeProblem, seed: Trajectory, solver: Callable[..., _AugmentedLagrangian]) -> OptimizeResult:
    _check_seed(problem, seed)
    started = time.perf_counter()
    engine = solver(problem, seed)
    trajectory, summary = engine.solve(seed)
    wall_time = time.perf_counter() - started

    waypoints = trajectory.waypoints
    d = summary["estimator_distances"]
    max_step = float(trajectory.steps().max())
    feasible = max_step <= problem.dtheta_max + 1e-6
    if problem.mode is OptimizeMode.CONSTRAINT:
        feasible = feasible and float(np.min(d)) >= problem.d_min - 1e-3
    estimator = problem.estimator
    switches = sensor_calls = None
    if isinstance(estimator, HybridDistanceEstimator):
        switches = branch_switches(estimator.branches(waypoints))
        sensor_calls = estimator.sensor_calls
    report = OptimizeReport(
        estimator=estimator.name,
        mode=problem.mode.value,
        T=trajectory.T,
        path_length=path_length(waypoints, problem.env.robot),
        objective=float(summary["objective"]),
        estimator_min_distance=float(np.min(d)),
        oracle_min_distance=float(np.min(distances(problem.env, waypoints))),
        outer_iterations=summary["outer_iterations"],
        inner_iterations=engine.inner_iterations,
        wall_time=wall_time,
        status=summary["status"],
        feasible=bool(feasible),
        max_step=max_step,
        merit_history=[float(m) for m in summary["merit_history"]],
        seed=problem.seed,
        branch_switches=switches,
        sensor_calls=sensor_calls,
    )
    logger.debug(
        f"{report.estimator} {report.mode}: L={report.path_length:.4f}, "
        f"min d {report.estimator_min_distance:.4f} (oracle {report.oracle_min_distance:.4f}), "
        f"{report.status} in {report.wall_time:.2f}s"
    )
    return OptimizeResult(trajectory, report)


def optimize_constraint(problem: OptimizeProblem, seed: Trajectory) -> OptimizeResult:
    """Shortest end-effector path keeping the estimated clearance at least ``d_min``."""
    if problem.mode is not OptimizeMode.CONSTRAINT:
        raise OptimizationError("optimize_constraint needs a constraint-mode problem")
    return _optimize(problem, seed, _ConstraintProblem)


def optimize_maximize(problem: OptimizeProblem, seed: Trajectory) -> OptimizeResult:
    """Minimize ``exp(-min d) * L``; the inner solver sees a softmin."""
    if problem.mode is not OptimizeMode.MAXIMIZE:
        raise OptimizationError("optimize_maximize needs a maximize-mode problem")
    return _optimize(problem, seed, _MaximizeProblem)


def optimize(problem: OptimizeProblem, seed: Trajectory) -> OptimizeResult:
    if problem.mode is OptimizeMode.MAXIMIZE:
        return optimize_maximize(problem, seed)
    return optimize_constraint(problem, seed)


def save_trajectory(trajectory: Trajectory, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([f"theta_{j + 1}" for j in range(trajectory.dof)])
        for row in trajectory.waypoints.tolist():
            writer.writerow([repr(v) for v in row])


def load_trajectory(path: str) -> Trajectory:
    with open(path, "r", newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise OptimizationError(f"{path}: empty trajectory file")
    dof = len(rows[0])
    waypoints = []
    for number, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dof:
            raise OptimizationError(f"{path}:{number}: expected {dof} values, found {len(row)}")
        try:
            waypoints.append([float(v) for v in row])
        except ValueError as e:
            raise OptimizationError(f"{path}:{number}: {e}")
    return Trajectory(np.array(waypoints))


def save_report(report: OptimizeReport, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2)
