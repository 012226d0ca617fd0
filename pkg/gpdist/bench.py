"""
Accuracy metrics, query timing and the experiment runners.

Experiments register themselves with :func:`experiment` and return an
:class:`ExperimentResult` holding named tables (lists of flat rows) that the
CLI renders and writes as CSV.
"""
import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Type

import numpy as np
from scipy.stats import norm
from tqdm.auto import tqdm

from .config import (
    AccuracyExperimentConfig,
    ConfigRecord,
    NarrowPassageConfig,
    OptimizationExperimentConfig,
)
from .dataset import Dataset, generate_dataset
from .environment import Environment, distance_to_collision, distances
from .errors import GpdistError
from .estimators import (
    DistanceEstimator,
    EstimatorKind,
    GpEstimator,
    KrEstimator,
    OracleEstimator,
    branch_switches,
    build_estimator,
    fit_model,
)
from .hybrid import Branch, confidence_level, hybrid_predict
from .kinematics import RobotModel
from .optimize import OptimizeMode, OptimizeProblem, Trajectory, optimize
from .planner import PlanningError, resample_trajectory, rrt_plan, seed_waypoints
from .regression import GpModel, Model, gp_predict, kr_predict_batch
from .scenes import narrow_passage_environment, narrow_passage_reach, random_environment, sample_task

logger = logging.getLogger(__name__)

MIN_TIMED_QUERIES = 1000
TIMING_BATCHES = 10
TEST_SEED_OFFSET = 1_000_000
ACCURACY_METHODS = (EstimatorKind.KR, EstimatorKind.GP_GAUSSIAN, EstimatorKind.GP_FK)
TASK_STREAM = 2
RRT_STREAM = 3
ESTIMATOR_STREAM = 4
SENSOR_STREAM = 5

Row = Dict[str, Any]


class BenchError(GpdistError):
    """Invalid benchmark input."""


@dataclass(frozen=True)
class MetricsReport:
    """MSE over all rows; TPMSE/TNMSE are None when their subset is empty."""
    mse: float
    tpmse: Optional[float]
    tnmse: Optional[float]
    n_test: int
    n_pos: int
    n_neg: int
    mean_true_distance: float

    def to_dict(self) -> Row:
        return asdict(self)


@dataclass(frozen=True)
class TimingReport:
    """Per-query wall clock in microseconds."""
    per_query_mean: float
    per_query_p50: float
    per_query_p95: float
    batch_median: float
    n_queries: int
    n_warmup: int

    def to_dict(self) -> Row:
        return asdict(self)


@dataclass
class ExperimentResult:
    name: str
    tables: Dict[str, List[Row]] = field(default_factory=dict)
    # table rendered on the terminal
    primary: str = "summary"


@dataclass(frozen=True)
class Experiment:
    name: str
    config_type: Type[ConfigRecord]
    runner: Callable[[Any], ExperimentResult]
    help: str


EXPERIMENTS: Dict[str, Experiment] = {}


def experiment(name: str, config_type: Type[ConfigRecord], help: str = ""):
    """Register an experiment runner under ``name``."""
    def decorator(func):
        EXPERIMENTS[name] = Experiment(name, config_type, func, help)
        return func

    return decorator


def _predict_all(predictor: Any, X: np.ndarray) -> np.ndarray:
    if hasattr(predictor, "evaluate_many"):
        return np.asarray(predictor.evaluate_many(X), dtype=float)
    return np.array([predictor(x) for x in X], dtype=float)


def metrics_from_predictions(truth: np.ndarray, predicted: np.ndarray) -> MetricsReport:
    truth, predicted = np.asarray(truth, dtype=float), np.asarray(predicted, dtype=float)
    if truth.shape != predicted.shape or len(truth) == 0:
        raise BenchError("predictions do not match the test set", f"{predicted.shape} vs {truth.shape}")
    squared = (truth - predicted) ** 2
    positive, negative = truth > 0.0, truth < 0.0
    return MetricsReport(
        mse=float(squared.mean()),
        tpmse=float(squared[positive].mean()) if positive.any() else None,
        tnmse=float(squared[negative].mean()) if negative.any() else None,
        n_test=len(truth),
        n_pos=int(positive.sum()),
        n_neg=int(negative.sum()),
        mean_true_distance=float(truth.mean()),
    )


def eval_metrics(predictor: Any, testset: Dataset) -> MetricsReport:
    """
    Score a predictor against noise-free labels. Rows with a label of exactly
    zero count toward MSE only.
    """
    if not testset.meta.noise_free:
        raise BenchError("test set labels must be noise-free", f"eta={testset.meta.eta}")
    return metrics_from_predictions(testset.y, _predict_all(predictor, testset.X))


def time_queries(predictor: Callable[[np.ndarray], float], queries: np.ndarray,
                 n_warmup: int = 100, n_batches: int = TIMING_BATCHES) -> TimingReport:
    """
    Time single queries on the calling thread after ``n_warmup`` untimed ones.

    Raises:
        BenchError: fewer than 1000 queries
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if len(queries) < MIN_TIMED_QUERIES:
        raise BenchError(f"timing needs at least {MIN_TIMED_QUERIES} queries", f"got {len(queries)}")
    for i in range(n_warmup):
        predictor(queries[i % len(queries)])
    elapsed = np.empty(len(queries))
    clock = time.perf_counter_ns
    for i, x in enumerate(queries):
        started = clock()
        predictor(x)
        elapsed[i] = clock() - started
    micros = elapsed / 1000.0
    batches = np.array_split(micros, n_batches)
    return TimingReport(
        per_query_mean=float(micros.mean()),
        per_query_p50=float(np.percentile(micros, 50)),
        per_query_p95=float(np.percentile(micros, 95)),
        batch_median=float(np.median([b.mean() for b in batches])),
        n_queries=len(queries),
        n_warmup=n_warmup,
    )


def absolute_error_histogram(errors: Dict[str, np.ndarray], bins: int = 50) -> List[Row]:
    """Histogram rows (method, bin_low, bin_high, count) on edges shared by every method."""
    if not errors:
        return []
    top = max(float(np.max(np.abs(e))) for e in errors.values() if len(e))
    edges = np.linspace(0.0, top if top > 0.0 else 1.0, bins + 1)
    rows = []
    for method, e in errors.items():
        counts, _ = np.histogram(np.abs(e), bins=edges)
        for lo, hi, count in zip(edges[:-1], edges[1:], counts):
            rows.append({"method": method, "bin_low": float(lo), "bin_high": float(hi), "count": int(count)})
    return rows


def model_estimator(env: Environment, model: Model) -> DistanceEstimator:
    if isinstance(model, GpModel):
        return GpEstimator(env, model)
    return KrEstimator(env, model)


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


@experiment("table1", AccuracyExperimentConfig, help="accuracy and query time of KR, GP-Gaussian and GP-FK")
def run_accuracy_experiment(config: AccuracyExperimentConfig) -> ExperimentResult:
    robot = RobotModel.uniform(config.dof)
    scene_rows: List[Row] = []
    timings: Dict[str, List[float]] = {}
    all_errors: Dict[str, List[np.ndarray]] = {kind.value: [] for kind in ACCURACY_METHODS}
    for scene in tqdm(range(config.scenes), desc="scenes", disable=not logger.isEnabledFor(logging.INFO)):
        env_seed = config.seed + scene
        test_seed = env_seed + TEST_SEED_OFFSET
        env = random_environment(robot, np.random.default_rng(env_seed))
        train = generate_dataset(env, config.n_train, config.eta, env_seed, jobs=config.jobs)
        test = generate_dataset(env, config.n_test, 0.0, test_seed, jobs=config.jobs)
        queries = test.X[:max(config.n_queries, MIN_TIMED_QUERIES)]
        if len(queries) < MIN_TIMED_QUERIES:
            queries = np.resize(test.X, (MIN_TIMED_QUERIES, robot.dof))
        for kind in ACCURACY_METHODS:
            model = fit_model(kind, train, env, eta2=config.eta2)
            estimator = model_estimator(env, model)
            predicted = estimator.evaluate_many(test.X)
            metrics = metrics_from_predictions(test.y, predicted)
            timing = time_queries(estimator, queries, config.n_warmup)
            all_errors[kind.value].append(predicted - test.y)
            timings.setdefault(kind.value, []).append(timing.per_query_mean)
            scene_rows.append({
                "scene": scene, "method": kind.value, "env_seed": env_seed, "train_seed": env_seed,
                "test_seed": test_seed, **metrics.to_dict(), "query_us": timing.per_query_mean,
                "fit_seconds": model.fit_seconds,
            })
        oracle_timing = time_queries(OracleEstimator(env), queries, config.n_warmup)
        timings.setdefault(EstimatorKind.ORACLE.value, []).append(oracle_timing.per_query_mean)
        logger.info(f"Scene {scene}: mean true distance {float(test.y.mean()):.3f}")

    summary: List[Row] = []
    for kind in ACCURACY_METHODS:
        rows = [r for r in scene_rows if r["method"] == kind.value]
        summary.append({
            "method": kind.value,
            "mse": _mean([r["mse"] for r in rows]),
            "tpmse": _mean([r["tpmse"] for r in rows]),
            "tnmse": _mean([r["tnmse"] for r in rows]),
            "query_us": _mean(timings[kind.value]),
            "fit_seconds": _mean([r["fit_seconds"] for r in rows]),
            "mean_true_distance": _mean([r["mean_true_distance"] for r in rows]),
            "scenes": len(rows),
        })
    # the test labels are the oracle itself
    summary.append({
        "method": EstimatorKind.ORACLE.value, "mse": 0.0, "tpmse": 0.0, "tnmse": 0.0,
        "query_us": _mean(timings[EstimatorKind.ORACLE.value]), "fit_seconds": 0.0,
        "mean_true_distance": summary[0]["mean_true_distance"], "scenes": config.scenes,
    })
    histogram = absolute_error_histogram({k: np.concatenate(v) for k, v in all_errors.items() if v}, config.bins)
    return ExperimentResult("table1", {"summary": summary, "scenes": scene_rows, "histogram": histogram})


def _run_trial(config: OptimizationExperimentConfig, trial: int) -> Optional[List[Row]]:
    """One random scene and task, optimized with every estimator. None when RRT fails."""
    trial_seed = config.seed + trial
    robot = RobotModel.uniform(config.dof)
    env = random_environment(robot, np.random.default_rng(trial_seed))
    start, goal = sample_task(
        env, np.random.default_rng(np.random.SeedSequence(trial_seed, spawn_key=(TASK_STREAM,))), config.d_min
    )
    try:
        path = rrt_plan(env, start, goal, np.random.default_rng(np.random.SeedSequence(trial_seed, spawn_key=(RRT_STREAM,))))
    except PlanningError as e:
        logger.info(f"Trial {trial}: {e}")
        return None
    seed = resample_trajectory(path, seed_waypoints(path, config.T, config.dtheta))

    kinds = [EstimatorKind(name) for name in config.estimators]
    models: Dict[EstimatorKind, Model] = {}
    if any(kind.learned for kind in kinds):
        train = generate_dataset(env, config.n_train, config.eta, trial_seed)
        for kind in kinds:
            key = EstimatorKind.GP_FK if kind is EstimatorKind.HYBRID else kind
            if kind.learned and key not in models:
                models[key] = fit_model(key, train, env, eta2=config.eta2)

    rows = []
    for index, kind in enumerate(kinds):
        model = models.get(EstimatorKind.GP_FK if kind is EstimatorKind.HYBRID else kind)
        rng = np.random.default_rng(np.random.SeedSequence(trial_seed, spawn_key=(ESTIMATOR_STREAM, index)))
        estimator = build_estimator(kind, env, model, eta=config.eta, rng=rng, z=config.z, n_sensor=config.n_sensor)
        problem = OptimizeProblem(env, estimator, start, goal, seed.T, config.dtheta, config.d_min,
                                  OptimizeMode(config.mode), seed=trial_seed)
        report = optimize(problem, seed).report
        rows.append({
            "trial": trial, "estimator": kind.value, "seed": trial_seed, "T": report.T,
            "wall_time": report.wall_time, "path_length": report.path_length,
            "oracle_min_distance": report.oracle_min_distance,
            "slack": report.oracle_min_distance - config.d_min,
            "estimator_min_distance": report.estimator_min_distance,
            "status": report.status, "feasible": report.feasible, "max_step": report.max_step,
            "merit_monotone": all(b <= a for a, b in zip(report.merit_history, report.merit_history[1:])),
            "branch_switches": report.branch_switches,
        })
    return rows


def _optimization_experiment(config: OptimizationExperimentConfig, name: str) -> ExperimentResult:
    for estimator in config.estimators:
        EstimatorKind(estimator)
    results: Dict[int, Optional[List[Row]]] = {}
    progress = tqdm(total=config.trials, desc="trials", disable=not logger.isEnabledFor(logging.INFO))
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = {pool.submit(_run_trial, config, trial): trial for trial in range(config.trials)}
            for future in as_completed(futures):
                results[futures[future]] = future.result()
                progress.update()
    else:
        for trial in range(config.trials):
            results[trial] = _run_trial(config, trial)
            progress.update()
    progress.close()

    trial_rows = [row for trial in sorted(results) for row in (results[trial] or [])]
    failures = sum(1 for rows in results.values() if rows is None)
    if failures:
        logger.warning(f"RRT failed on {failures} of {config.trials} trials; they are excluded")
    clearance_key = "slack" if config.mode == OptimizeMode.CONSTRAINT.value else "oracle_min_distance"
    summary = []
    for estimator in config.estimators:
        rows = [r for r in trial_rows if r["estimator"] == estimator]
        summary.append({
            "estimator": estimator,
            "trials": len(rows),
            "rrt_failures": failures,
            "wall_time": _mean([r["wall_time"] for r in rows]),
            "path_length": _mean([r["path_length"] for r in rows]),
            clearance_key: _mean([r[clearance_key] for r in rows]),
            "feasible_fraction": _mean([float(r["feasible"]) for r in rows]),
        })
    return ExperimentResult(name, {"summary": summary, "trials": trial_rows})


@experiment("table2", OptimizationExperimentConfig, help="clearance-constrained optimization per estimator")
def run_optimization_experiment(config: OptimizationExperimentConfig) -> ExperimentResult:
    """Optimization trials in the mode named by ``config.mode``."""
    name = "table2" if config.mode == OptimizeMode.CONSTRAINT.value else "table3"
    return _optimization_experiment(config, name)


@experiment("table3", OptimizationExperimentConfig, help="clearance-maximizing optimization per estimator")
def run_maximize_experiment(config: OptimizationExperimentConfig) -> ExperimentResult:
    return _optimization_experiment(config.replace(mode=OptimizeMode.MAXIMIZE.value), "table3")


@experiment("narrow-passage", NarrowPassageConfig, help="hybrid estimator trace reaching into a narrow slot")
def run_narrow_passage(config: NarrowPassageConfig) -> ExperimentResult:
    env = narrow_passage_environment(config.gap, config.link_width)
    train = generate_dataset(env, config.n_train, config.eta, config.seed)
    gp = fit_model(EstimatorKind.GP_FK, train, env, eta2=config.eta2)
    sensor_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(SENSOR_STREAM,)))
    estimator = build_estimator(EstimatorKind.HYBRID, env, gp, eta=config.eta, rng=sensor_rng,
                                z=config.z, n_sensor=config.n_sensor)
    waypoints = narrow_passage_reach(config.T)
    if config.optimize:
        reach = Trajectory(waypoints)
        problem = OptimizeProblem(env, estimator, reach.start, reach.goal, reach.T, mode=OptimizeMode.CONSTRAINT,
                                  d_min=0.0, dtheta_max=max(float(reach.steps().max()), 1e-3), seed=config.seed)
        waypoints = optimize(problem, reach).trajectory.waypoints

    hybrid = estimator.hybrid
    trace: List[Row] = []
    for t, x in enumerate(waypoints):
        prediction = hybrid_predict(hybrid, x)
        trace.append({
            "t": t,
            "gp_mean": prediction.gp_mean,
            "gp_sigma": prediction.gp_sigma,
            "hybrid": prediction.value,
            "branch": prediction.branch.value,
            "confidence": confidence_level(gp, x, hybrid.threshold),
            "oracle": distance_to_collision(env, x).value,
        })
    branches = [Branch(r["branch"]) for r in trace]
    oracle = np.array([r["oracle"] for r in trace])
    sensor = [r for r in trace if r["branch"] == Branch.SENSOR.value]
    bound = 3.0 * config.eta / math.sqrt(config.n_sensor)
    summary = [{
        "waypoints": len(trace),
        "branch_switches": branch_switches(branches),
        "first_sensor_t": sensor[0]["t"] if sensor else None,
        "min_clearance_t": int(np.argmin(oracle)),
        "min_clearance": float(oracle.min()),
        "sensor_waypoints": len(sensor),
        "sensor_within_bound": _mean([float(abs(r["hybrid"] - r["oracle"]) <= bound) for r in sensor]),
        "seed": config.seed,
    }]
    return ExperimentResult("narrow-passage", {"summary": summary, "trace": trace}, primary="summary")


def export_cspace_field(env: Environment, model: Optional[Model] = None, resolution: int = 100) -> List[Row]:
    """
    Rasterize a 2-DOF configuration space: one row per grid point with the
    oracle value and, when a model is given, its prediction (and for a GP
    the confidence that the point is collision-free).
    """
    robot = env.robot
    if robot.dof != 2:
        raise BenchError("field export needs a 2-DOF robot", f"got dof {robot.dof}")
    if resolution < 2:
        raise BenchError("field resolution must be at least 2", f"got {resolution}")
    t1 = np.linspace(robot.lower[0], robot.upper[0], resolution)
    t2 = np.linspace(robot.lower[1], robot.upper[1], resolution)
    grid = np.array([(a, b) for a in t1 for b in t2])
    oracle = distances(env, grid)
    prediction = confidence = None
    if isinstance(model, GpModel):
        mean, variance = gp_predict(model, grid)
        sigma = np.sqrt(variance)
        prediction = mean
        confidence = np.where(
            sigma > 0.0,
            norm.cdf(np.divide(mean, sigma, out=np.zeros_like(mean), where=sigma > 0.0)),
            np.where(mean > 0.0, 1.0, np.where(mean < 0.0, 0.0, 0.5)),
        )
    elif model is not None:
        prediction = kr_predict_batch(model, grid)
    rows = []
    for i, (a, b) in enumerate(grid):
        row: Row = {"theta_1": float(a), "theta_2": float(b), "oracle": float(oracle[i])}
        if prediction is not None:
            row["model"] = float(prediction[i])
        if confidence is not None:
            row["confidence"] = float(confidence[i])
        rows.append(row)
    return rows


def write_csv(rows: List[Row], path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    columns: List[str] = []
    for row in rows:
        columns.extend(key for key in row if key not in columns)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    logger.info(f"Wrote {path}")


def _cell(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def format_table(rows: List[Row], columns: Optional[Sequence[str]] = None) -> str:
    """Plain aligned text table."""
    if not rows:
        return "(no rows)"
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(key for key in row if key not in columns)
    cells = [[_cell(row.get(c)) for c in columns] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in cells)
    return "\n".join(lines)
