"""
Training and test sets: uniform configuration sampling, noisy labelling and
the dataset file.

Dataset file layout::

    # format_version: 1
    # dof: 7
    # rows: 500
    # environment_hash: <sha256 of the environment file>
    # eta: 0.05
    # seed: 3
    # noise_free: false
    theta_1,...,theta_7,distance
    <one row per configuration, shortest round-trip float text>
"""
import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .environment import Environment, distance_to_collision, environment_hash, noisy_distance
from .errors import GpdistError
from .kinematics import RobotModel

logger = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1
DEFAULT_TRAIN_SIZE = 500
DEFAULT_TEST_SIZE = 2000
DEFAULT_ETA = 0.05
_CONFIG_STREAM = 0
_NOISE_STREAM = 1
_REQUIRED_HEADER = ("format_version", "dof", "rows", "environment_hash", "eta", "seed", "noise_free")


class DatasetError(GpdistError):
    """Invalid dataset or malformed dataset file."""


@dataclass(frozen=True)
class DatasetMeta:
    environment_hash: str
    eta: float
    seed: Optional[int]
    noise_free: bool


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    meta: DatasetMeta

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if len(X) != len(y):
            raise DatasetError("configurations and labels differ in length", f"{len(X)} vs {len(y)}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def dof(self) -> int:
        return self.X.shape[1]


def sample_configs(robot: RobotModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` configurations, each joint uniform over its limits."""
    if n <= 0:
        raise DatasetError("sample count must be positive", f"got {n}")
    return rng.uniform(robot.lower, robot.upper, size=(n, robot.dof))


def label_dataset(X: np.ndarray, env: Environment, eta: float, rng: np.random.Generator,
                  seed: Optional[int] = None) -> Dataset:
    """Label every configuration with one noisy distance draw from ``rng``."""
    if eta < 0.0:
        raise DatasetError("noise level must be nonnegative", f"got eta={eta}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.array([noisy_distance(env, x, eta, rng) for x in X])
    return Dataset(X, y, DatasetMeta(environment_hash(env), float(eta), seed, eta == 0.0))


def _row_stream(seed: int, row: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_NOISE_STREAM, row)))


def _label_chunk(env: Environment, X: np.ndarray, eta: float, seed: int, offset: int) -> List[float]:
    labels = []
    for i, x in enumerate(X):
        value = distance_to_collision(env, x).value
        if eta > 0.0:
            value += eta * float(_row_stream(seed, offset + i).standard_normal())
        labels.append(value)
    return labels


def label_rows(X: np.ndarray, env: Environment, eta: float, seed: int, jobs: int = 1) -> np.ndarray:
    """
    Noisy labels with one stream per row derived from (seed, row index), so
    the result does not depend on ``jobs``.
    """
    if eta < 0.0:
        raise DatasetError("noise level must be nonnegative", f"got eta={eta}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if jobs <= 1 or len(X) < 2 * jobs:
        return np.array(_label_chunk(env, X, eta, seed, 0))
    bounds = np.linspace(0, len(X), jobs + 1).astype(int)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(_label_chunk, env, X[lo:hi], eta, seed, int(lo))
            for lo, hi in zip(bounds[:-1], bounds[1:])
        ]
        return np.concatenate([np.asarray(f.result(), dtype=float) for f in futures])


def generate_dataset(env: Environment, n: int, eta: float, seed: int, jobs: int = 1) -> Dataset:
    """A pure function of (environment, n, eta, seed)."""
    config_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_CONFIG_STREAM,)))
    X = sample_configs(env.robot, n, config_rng)
    y = label_rows(X, env, eta, seed, jobs)
    logger.debug(f"Generated {n} rows (eta={eta}, seed={seed})")
    return Dataset(X, y, DatasetMeta(environment_hash(env), float(eta), seed, eta == 0.0))


def save_dataset(ds: Dataset, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    meta = ds.meta
    header = {
        "format_version": DATASET_FORMAT_VERSION,
        "dof": ds.dof,
        "rows": len(ds),
        "environment_hash": meta.environment_hash,
        "eta": repr(float(meta.eta)),
        "seed": "none" if meta.seed is None else meta.seed,
        "noise_free": "true" if meta.noise_free else "false",
    }
    with open(path, "w", newline="") as f:
        for key, value in header.items():
            f.write(f"# {key}: {value}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([f"theta_{j + 1}" for j in range(ds.dof)] + ["distance"])
        for x, y in zip(ds.X.tolist(), ds.y.tolist()):
            writer.writerow([repr(v) for v in x] + [repr(y)])
    logger.info(f"Dataset written to {path} ({len(ds)} rows)")


def _parse_header(lines: Sequence[str], path: str) -> Dict[str, str]:
    header: Dict[str, str] = {}
    for number, line in enumerate(lines, start=1):
        key, sep, value = line[1:].partition(":")
        if not sep:
            raise DatasetError(f"{path}:{number}: malformed header line", line.strip())
        header[key.strip()] = value.strip()
    missing = [key for key in _REQUIRED_HEADER if key not in header]
    if missing:
        raise DatasetError(f"{path}: header is missing {', '.join(missing)}")
    return header


def load_dataset(path: str, env: Optional[Environment] = None) -> Dataset:
    """
    Read a dataset file. When ``env`` is given and its hash differs from the
    recorded one a warning is logged; the data is still returned.
    """
    with open(path, "r", newline="") as f:
        lines = f.read().splitlines()
    n_header = 0
    while n_header < len(lines) and lines[n_header].startswith("#"):
        n_header += 1
    header = _parse_header(lines[:n_header], path)
    try:
        version = int(header["format_version"])
        dof = int(header["dof"])
        rows = int(header["rows"])
        eta = float(header["eta"])
        seed = None if header["seed"] == "none" else int(header["seed"])
    except ValueError as e:
        raise DatasetError(f"{path}: invalid header value", str(e))
    if version != DATASET_FORMAT_VERSION:
        raise DatasetError(f"{path}: unsupported format version {version}")
    noise_free = header["noise_free"].lower() == "true"

    column_line = n_header + 1
    if n_header >= len(lines):
        raise DatasetError(f"{path}:{column_line}: missing column header row")
    expected_columns = [f"theta_{j + 1}" for j in range(dof)] + ["distance"]
    if next(csv.reader([lines[n_header]])) != expected_columns:
        raise DatasetError(f"{path}:{column_line}: column header does not match dof {dof}")

    X = np.empty((rows, dof))
    y = np.empty(rows)
    body = [(number, line) for number, line in enumerate(lines[n_header + 1:], start=column_line + 1) if line.strip()]
    if len(body) != rows:
        last = body[-1][0] if body else column_line
        raise DatasetError(f"{path}:{last}: expected {rows} data rows, found {len(body)}")
    for i, (row, (number, _)) in enumerate(zip(csv.reader(line for _, line in body), body)):
        if len(row) != dof + 1:
            raise DatasetError(f"{path}:{number}: expected {dof + 1} values, found {len(row)}")
        try:
            values = [float(v) for v in row]
        except ValueError as e:
            raise DatasetError(f"{path}:{number}: {e}")
        X[i], y[i] = values[:dof], values[dof]

    meta = DatasetMeta(header["environment_hash"], eta, seed, noise_free)
    if env is not None and environment_hash(env) != meta.environment_hash:
        logger.warning(f"{path} was generated for a different environment")
    return Dataset(X, y, meta)
