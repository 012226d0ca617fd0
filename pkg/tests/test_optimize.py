import math

import numpy as np
import pytest

from gpdist.environment import Environment
from gpdist.estimators import build_estimator
from gpdist.geometry import box_polygon
from gpdist.kernels import KernelKind, KernelSpec
from gpdist.kinematics import RobotModel
from gpdist.optimize import (
    OptimizationError,
    OptimizeMode,
    OptimizeProblem,
    Trajectory,
    load_trajectory,
    optimize,
    optimize_constraint,
    optimize_maximize,
    path_length,
    path_length_gradient,
    save_trajectory,
)
from gpdist.planner import resample_trajectory, rrt_plan, seed_waypoints
from gpdist.regression import gp_fit

START = np.array([0.0, 0.0])
GOAL = np.array([2.5, 0.0])


@pytest.fixture(scope="module")
def fk_gp(box_train, box_env):
    return gp_fit(box_train.X, box_train.y, KernelSpec(KernelKind.FK, 1.0, box_env.robot), 0.0025)


@pytest.fixture(scope="module")
def seed_trajectory(box_env):
    path = rrt_plan(box_env, START, GOAL, np.random.default_rng(0))
    return resample_trajectory(path, seed_waypoints(path, 12, 0.3))


def check_contract(result, problem, seed):
    waypoints = result.trajectory.waypoints
    np.testing.assert_array_equal(waypoints[0], problem.start)
    np.testing.assert_array_equal(waypoints[-1], problem.goal)
    assert result.trajectory.T == seed.T
    assert result.trajectory.steps().max() <= problem.dtheta_max + 1e-6
    history = result.report.merit_history
    assert all(b <= a for a, b in zip(history[:-1], history[1:]))
    assert result.report.status in ("converged", "max-iters")


def test_trajectory_validation():
    with pytest.raises(OptimizationError):
        Trajectory(np.zeros((1, 2)))
    with pytest.raises(OptimizationError):
        Trajectory(np.zeros(4))
    trajectory = Trajectory([[0.0, 0.0], [0.3, 0.4]])
    assert trajectory.steps() == pytest.approx([0.5])
    with pytest.raises(ValueError):
        trajectory.waypoints[0, 0] = 1.0


def test_path_length_of_straight_arm(arm2):
    waypoints = np.array([[0.0, 0.0], [math.pi / 2, 0.0]])
    assert path_length(waypoints, arm2) == pytest.approx(2.0 * math.sqrt(2.0))


def test_path_length_gradient_matches_finite_differences(arm2):
    rng = np.random.default_rng(6)
    waypoints = rng.uniform(-1.0, 1.0, size=(6, 2))
    grad = path_length_gradient(waypoints, arm2)
    h = 1e-6
    for t in range(6):
        for j in range(2):
            plus, minus = waypoints.copy(), waypoints.copy()
            plus[t, j] += h
            minus[t, j] -= h
            fd = (path_length(plus, arm2) - path_length(minus, arm2)) / (2 * h)
            assert grad[t, j] == pytest.approx(fd, abs=1e-5)


def test_single_joint_problem_keeps_tight_seed():
    env = Environment(RobotModel.uniform(1), (box_polygon((0.0, -1.5), 0.4, 0.4),))
    seed = Trajectory(np.linspace(0.0, 0.9, 4)[:, None])
    problem = OptimizeProblem(env, build_estimator("oracle", env), [0.0], [0.9], T=4, dtheta_max=0.3)
    result = optimize(problem, seed)
    check_contract(result, problem, seed)
    assert result.report.path_length == pytest.approx(6.0 * math.sin(0.15), abs=1e-6)
    assert result.report.feasible


def test_constraint_mode(box_env, fk_gp, seed_trajectory):
    estimator = build_estimator("gp-fk", box_env, fk_gp)
    problem = OptimizeProblem(box_env, estimator, START, GOAL, T=seed_trajectory.T, d_min=0.2)
    seed_d = estimator.evaluate_many(seed_trajectory.waypoints[1:-1])
    result = optimize_constraint(problem, seed_trajectory)
    check_contract(result, problem, seed_trajectory)
    report = result.report
    assert report.mode == "constraint"
    assert report.estimator == "gp-fk"
    assert report.branch_switches is None
    if seed_d.min() >= 0.2:
        assert report.path_length <= path_length(seed_trajectory.waypoints, box_env.robot) + 1e-9


def test_maximize_mode(box_env, fk_gp, seed_trajectory):
    estimator = build_estimator("gp-fk", box_env, fk_gp)
    problem = OptimizeProblem(box_env, estimator, START, GOAL, T=seed_trajectory.T, mode="maximize")
    seed_objective = (math.exp(-float(estimator.evaluate_many(seed_trajectory.waypoints).min()))
                      * path_length(seed_trajectory.waypoints, box_env.robot))
    result = optimize_maximize(problem, seed_trajectory)
    check_contract(result, problem, seed_trajectory)
    assert result.report.mode == "maximize"
    assert result.report.objective <= seed_objective + 1e-9
    assert result.report.objective == pytest.approx(
        math.exp(-result.report.estimator_min_distance) * result.report.path_length)


def test_hybrid_report(box_env, fk_gp, seed_trajectory):
    estimator = build_estimator("hybrid", box_env, fk_gp, eta=0.0, rng=np.random.default_rng(0))
    problem = OptimizeProblem(box_env, estimator, START, GOAL, T=seed_trajectory.T, seed=0)
    result = optimize(problem, seed_trajectory)
    check_contract(result, problem, seed_trajectory)
    assert isinstance(result.report.branch_switches, int)
    assert result.report.sensor_calls == estimator.sensor_calls
    assert result.report.seed == 0


def test_problem_validation(box_env):
    oracle = build_estimator("oracle", box_env)
    with pytest.raises(OptimizationError, match="dof"):
        OptimizeProblem(box_env, oracle, [0.0], GOAL)
    with pytest.raises(OptimizationError):
        OptimizeProblem(box_env, oracle, START, GOAL, T=1)
    with pytest.raises(OptimizationError):
        OptimizeProblem(box_env, oracle, START, GOAL, dtheta_max=0.0)
    with pytest.raises(OptimizationError):
        OptimizeProblem(box_env, oracle, START, GOAL, d_min=-0.1)
    with pytest.raises(ValueError):
        OptimizeProblem(box_env, oracle, START, GOAL, mode="fastest")


def test_seed_must_match_problem(box_env, seed_trajectory):
    oracle = build_estimator("oracle", box_env)
    problem = OptimizeProblem(box_env, oracle, START, [2.4, 0.0], T=seed_trajectory.T)
    with pytest.raises(OptimizationError, match="endpoints"):
        optimize(problem, seed_trajectory)
    problem = OptimizeProblem(box_env, oracle, START, GOAL, mode=OptimizeMode.MAXIMIZE)
    with pytest.raises(OptimizationError):
        optimize_constraint(problem, seed_trajectory)


def test_trajectory_file_round_trip(seed_trajectory, tmp_path):
    path = str(tmp_path / "traj.csv")
    save_trajectory(seed_trajectory, path)
    np.testing.assert_array_equal(load_trajectory(path).waypoints, seed_trajectory.waypoints)
    (tmp_path / "bad.csv").write_text("theta_1,theta_2\n0.0\n")
    with pytest.raises(OptimizationError, match="bad.csv:2"):
        load_trajectory(str(tmp_path / "bad.csv"))


def test_free_space_shortens_bent_seed(arm2):
    env = Environment(arm2, (box_polygon((50.0, 0.0), 1.0, 1.0),))
    t = np.linspace(0.0, 1.0, 9)
    seed = Trajectory(np.column_stack((1.2 * t, 0.6 * np.sin(math.pi * t))))
    assert seed.steps().max() <= 0.3
    problem = OptimizeProblem(env, build_estimator("oracle", env), seed.waypoints[0], seed.waypoints[-1],
                              T=seed.T, d_min=0.0)
    result = optimize_constraint(problem, seed)
    check_contract(result, problem, seed)
    seed_length = path_length(seed.waypoints, arm2)
    assert result.report.path_length <= seed_length
    assert result.report.path_length < seed_length - 1e-3
    assert result.report.inner_iterations > 0
