import logging

import numpy as np

from gpdist.bench import format_table
from gpdist.dataset import generate_dataset
from gpdist.estimators import EstimatorKind, build_estimator, fit_model
from gpdist.hybrid import hybrid_predict
from gpdist.optimize import OptimizeMode, OptimizeProblem, optimize
from gpdist.planner import resample_trajectory, rrt_plan, seed_waypoints
from gpdist.kinematics import RobotModel
from gpdist.scenes import random_environment, sample_task

SEED = 7

# Example usage
if __name__ == "__main__":
    logging.basicConfig(format="[%(levelname)s] %(message)s", level=logging.INFO)

    # A 7-DOF unit-link arm and one random obstacle
    robot = RobotModel.uniform(7)
    env = random_environment(robot, np.random.default_rng(SEED))

    # Noisy training labels and an FK-kernel GP
    train = generate_dataset(env, 500, eta=0.05, seed=SEED)
    gp = fit_model(EstimatorKind.GP_FK, train, env)

    # Start and goal on either side of the obstacle, joined by an RRT path
    start, goal = sample_task(env, np.random.default_rng(SEED), clearance=0.2)
    path = rrt_plan(env, start, goal, np.random.default_rng(SEED))
    seed = resample_trajectory(path, seed_waypoints(path, 30, 0.3))

    rows = []
    for kind in (EstimatorKind.ORACLE, EstimatorKind.GP_FK, EstimatorKind.HYBRID):
        estimator = build_estimator(kind, env, None if kind is EstimatorKind.ORACLE else gp,
                                    rng=np.random.default_rng(SEED))
        problem = OptimizeProblem(env, estimator, start, goal, seed.T, mode=OptimizeMode.CONSTRAINT, seed=SEED)
        report = optimize(problem, seed).report
        rows.append({
            "estimator": report.estimator,
            "path_length": report.path_length,
            "oracle_min_distance": report.oracle_min_distance,
            "wall_time": report.wall_time,
            "branch_switches": report.branch_switches,
        })
        if kind is EstimatorKind.HYBRID:
            branches = [hybrid_predict(estimator.hybrid, x).branch.value for x in seed.waypoints]
            print("hybrid branches along the seed:", " ".join(branches))

    print(format_table(rows))
