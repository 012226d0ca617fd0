import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Type, TypeVar

from .errors import GpdistError

# Constants reported for the reference experiments
TRAIN_SIZE: int = 500
TEST_SIZE: int = 2000
ETA: float = 0.05
ETA2: float = 0.0025
D_MIN: float = 0.2
Z: float = 1.64
SENSOR_SAMPLES: int = 5
WAYPOINTS: int = 30
DTHETA: float = 0.3
TRIALS: int = 20
DOF: int = 7
LINK_LENGTH: float = 1.0
LINK_WIDTH: float = 0.1

OUTPUT_DIR_ENV: str = "GPDIST_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR: str = "gpdist-out"

ESTIMATORS = ("oracle", "noisy-oracle", "kr", "gp-gaussian", "gp-fk", "hybrid")
MODEL_KINDS = ("kr", "gp-gaussian", "gp-fk")

R = TypeVar("R", bound="ConfigRecord")


class ConfigError(GpdistError):
    """Invalid configuration file or value."""


def default_output_dir() -> str:
    """Output directory from ``GPDIST_OUTPUT_DIR``, else ``gpdist-out``."""
    return os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR


def option(default: Any, help: str, choices: Optional[tuple] = None, **kwargs) -> Any:
    """Dataclass field carrying its command-line help and choices."""
    metadata = {"help": help}
    if choices is not None:
        metadata["choices"] = choices
    if isinstance(default, list):
        return field(default_factory=lambda: list(default), metadata=metadata, **kwargs)
    return field(default=default, metadata=metadata, **kwargs)


class ConfigRecord:
    """JSON round-trip shared by every command record."""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls: Type[R], data: Dict[str, Any]) -> R:
        """Build a record, ignoring keys that are not fields."""
        if not isinstance(data, dict):
            raise ConfigError(f"{cls.__name__} expects a JSON object")
        valid_fields = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in valid_fields})

    def save(self, path: str) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls: Type[R], path: str) -> R:
        with open(path, "r") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path} is not valid JSON", str(e))
        return cls.from_dict(data)

    def replace(self: R, **changes: Any) -> R:
        data = self.to_dict()
        data.update(changes)
        return type(self).from_dict(data)


@dataclass
class EnvConfig(ConfigRecord):
    scene: str = option("random", "scene to build", choices=("random", "narrow-passage"))
    dof: int = option(DOF, "number of links")
    link_length: float = option(LINK_LENGTH, "length of every link")
    link_width: float = option(LINK_WIDTH, "width of every link")
    n_obstacles: int = option(1, "random obstacles to place")
    obstacles: Optional[List[List[List[float]]]] = option(
        None, "explicit obstacle vertex lists (config file only); overrides random placement")
    gap: Optional[float] = option(None, "narrow-passage slot width, default three link widths")
    seed: int = option(0, "random seed for obstacle placement")
    out: str = option("environment.json", "environment file to write")


@dataclass
class DatasetConfig(ConfigRecord):
    env: str = option("environment.json", "environment file")
    n: int = option(TRAIN_SIZE, "number of configurations")
    eta: float = option(ETA, "label noise standard deviation; 0 gives noise-free labels")
    seed: int = option(0, "random seed")
    jobs: int = option(1, "worker processes for labelling")
    out: str = option("dataset.csv", "dataset file to write")


@dataclass
class FitConfig(ConfigRecord):
    dataset: str = option("dataset.csv", "training dataset file")
    env: str = option("environment.json", "environment file")
    kind: str = option("gp-fk", "model to fit", choices=MODEL_KINDS)
    gamma: Optional[float] = option(None, "kernel width; searched when omitted")
    noise_mode: str = option("fixed", "use eta2 as given or search it", choices=("fixed", "search"))
    eta2: float = option(ETA2, "GP noise variance in fixed mode")
    out: str = option("model.json", "model file to write")


@dataclass
class EvalConfig(ConfigRecord):
    model: str = option("model.json", "model file")
    env: str = option("environment.json", "environment file")
    testset: Optional[str] = option(None, "noise-free test dataset; generated when omitted")
    n_test: int = option(TEST_SIZE, "test set size when generating")
    seed: int = option(1, "test set seed when generating")
    out: Optional[str] = option(None, "metrics CSV to write")


@dataclass
class BenchConfig(ConfigRecord):
    models: List[str] = option([], "model files to time")
    env: str = option("environment.json", "environment file")
    n_queries: int = option(1000, "timed queries per predictor")
    n_warmup: int = option(100, "untimed warmup queries")
    seed: int = option(2, "query set seed")
    oracle: bool = option(True, "also time the oracle")
    out: Optional[str] = option(None, "timing CSV to write")


@dataclass
class OptimizeConfig(ConfigRecord):
    env: str = option("environment.json", "environment file")
    estimator: str = option("gp-fk", "distance estimator", choices=ESTIMATORS)
    model: Optional[str] = option(None, "model file for learned estimators")
    dataset: Optional[str] = option(None, "dataset to fit a model from when no model file is given")
    mode: str = option("constraint", "optimization problem", choices=("constraint", "maximize"))
    start: Optional[List[float]] = option(None, "start configuration; sampled when omitted")
    goal: Optional[List[float]] = option(None, "goal configuration; sampled when omitted")
    seed: int = option(0, "seed for task sampling, RRT and noisy estimators")
    T: int = option(WAYPOINTS, "waypoints (raised when the seed path needs more)")
    dtheta: float = option(DTHETA, "maximum joint-space step")
    d_min: float = option(D_MIN, "clearance in constraint mode")
    eta: float = option(ETA, "sensor noise for noisy-oracle and hybrid")
    z: float = option(Z, "hybrid confidence multiplier")
    n_sensor: int = option(SENSOR_SAMPLES, "hybrid sensor samples")
    out: str = option("trajectory.csv", "trajectory file; the report goes next to it")


@dataclass
class AccuracyExperimentConfig(ConfigRecord):
    dof: int = option(DOF, "number of unit links")
    scenes: int = option(10, "random scenes")
    n_train: int = option(TRAIN_SIZE, "training set size")
    n_test: int = option(TEST_SIZE, "noise-free test set size")
    eta: float = option(ETA, "training label noise")
    eta2: float = option(ETA2, "GP noise variance")
    seed: int = option(0, "master seed; scene k uses seed + k")
    n_queries: int = option(1000, "timed queries per method")
    n_warmup: int = option(100, "untimed warmup queries")
    bins: int = option(50, "absolute-error histogram bins")
    jobs: int = option(1, "worker processes for labelling")


@dataclass
class OptimizationExperimentConfig(ConfigRecord):
    mode: str = option("constraint", "optimization problem", choices=("constraint", "maximize"))
    estimators: List[str] = option(["oracle", "noisy-oracle", "kr", "gp-gaussian", "gp-fk"], "estimators to compare")
    trials: int = option(TRIALS, "random trials")
    dof: int = option(DOF, "number of unit links")
    n_train: int = option(TRAIN_SIZE, "training set size")
    eta: float = option(ETA, "label and sensor noise")
    eta2: float = option(ETA2, "GP noise variance")
    T: int = option(WAYPOINTS, "waypoints")
    dtheta: float = option(DTHETA, "maximum joint-space step")
    d_min: float = option(D_MIN, "clearance in constraint mode")
    z: float = option(Z, "hybrid confidence multiplier")
    n_sensor: int = option(SENSOR_SAMPLES, "hybrid sensor samples")
    seed: int = option(0, "master seed; trial k uses seed + k")
    jobs: int = option(1, "worker processes for trials")


@dataclass
class NarrowPassageConfig(ConfigRecord):
    gap: Optional[float] = option(None, "slot width, default three link widths")
    link_width: float = option(LINK_WIDTH, "link width")
    n_train: int = option(TRAIN_SIZE, "training set size")
    eta: float = option(ETA, "label and sensor noise")
    eta2: float = option(ETA2, "GP noise variance")
    z: float = option(Z, "hybrid confidence multiplier")
    n_sensor: int = option(SENSOR_SAMPLES, "hybrid sensor samples")
    T: int = option(40, "waypoints of the scripted reach")
    optimize: bool = option(False, "optimize the reach with the hybrid estimator before tracing")
    seed: int = option(0, "seed")


@dataclass
class FieldConfig(ConfigRecord):
    env: str = option("environment.json", "environment file (2-DOF robot)")
    model: Optional[str] = option(None, "model file to rasterize next to the oracle")
    resolution: int = option(100, "grid points per joint")
    out: str = option("field.csv", "grid file to write")
