"""Experiment-scale checks. Run with ``pytest -m slow``."""
import pytest

from gpdist.bench import run_accuracy_experiment, run_maximize_experiment, run_narrow_passage, run_optimization_experiment
from gpdist.config import AccuracyExperimentConfig, NarrowPassageConfig, OptimizationExperimentConfig

pytestmark = pytest.mark.slow

LEARNED = ("kr", "gp-gaussian", "gp-fk")


@pytest.fixture(scope="module")
def accuracy():
    return run_accuracy_experiment(AccuracyExperimentConfig())


@pytest.fixture(scope="module")
def constraint_trials():
    config = OptimizationExperimentConfig(estimators=["oracle", *LEARNED], jobs=4)
    return run_optimization_experiment(config)


@pytest.fixture(scope="module")
def maximize_trials():
    return run_maximize_experiment(OptimizationExperimentConfig(estimators=["gp-gaussian", "gp-fk"], jobs=4))


def by_method(rows, key="method"):
    return {row[key]: row for row in rows}


def test_accuracy_ordering(accuracy):
    scenes = accuracy.tables["scenes"]
    mse = {}
    for row in scenes:
        mse.setdefault(row["scene"], {})[row["method"]] = row["mse"]
    ordered = sum(1 for m in mse.values() if m["gp-fk"] < m["gp-gaussian"] < m["kr"])
    accurate = sum(1 for m in mse.values() if m["gp-fk"] <= 0.2)
    assert ordered >= 8
    assert accurate >= 8
    summary = by_method(accuracy.tables["summary"])
    assert summary["gp-fk"]["tnmse"] < summary["gp-gaussian"]["tnmse"]


def test_query_speed(accuracy):
    summary = by_method(accuracy.tables["summary"])
    assert summary["oracle"]["query_us"] >= 10.0 * summary["gp-fk"]["query_us"]
    assert summary["gp-gaussian"]["query_us"] < summary["gp-fk"]["query_us"]


def test_constraint_pattern(constraint_trials):
    summary = by_method(constraint_trials.tables["summary"], "estimator")
    assert summary["gp-fk"]["slack"] > summary["gp-gaussian"]["slack"]
    assert summary["gp-fk"]["slack"] >= -0.05
    trials = constraint_trials.tables["trials"]
    oracle_time = {r["trial"]: r["wall_time"] for r in trials if r["estimator"] == "oracle"}
    for row in trials:
        if row["estimator"] in LEARNED:
            assert row["wall_time"] < oracle_time[row["trial"]]


def test_maximize_pattern(maximize_trials):
    summary = by_method(maximize_trials.tables["summary"], "estimator")
    assert summary["gp-fk"]["oracle_min_distance"] > 0.0
    assert summary["gp-fk"]["oracle_min_distance"] > summary["gp-gaussian"]["oracle_min_distance"]


def test_optimizer_contracts(constraint_trials, maximize_trials):
    for result in (constraint_trials, maximize_trials):
        for row in result.tables["trials"]:
            assert row["merit_monotone"]
            assert row["max_step"] <= 0.3 + 1e-6


def test_narrow_passage_switches_to_sensor():
    result = run_narrow_passage(NarrowPassageConfig())
    trace = result.tables["trace"]
    (summary,) = result.tables["summary"]
    assert trace[0]["branch"] == "gp"
    assert summary["first_sensor_t"] is not None
    assert summary["first_sensor_t"] <= summary["min_clearance_t"]
    assert summary["sensor_within_bound"] >= 0.95


def test_experiments_are_reproducible():
    config = OptimizationExperimentConfig(estimators=["gp-fk", "hybrid"], trials=3)
    runs = [run_optimization_experiment(config) for _ in range(2)]
    strip = [[{k: v for k, v in row.items() if k != "wall_time"} for row in run.tables["trials"]] for run in runs]
    assert strip[0] == strip[1]
