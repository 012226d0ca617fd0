"""
``gpdist`` command line.

Every subcommand is backed by a config record from :mod:`gpdist.config`.
Flags are generated from the record fields; a ``--config`` JSON file
supplies a base record and flags given on the command line override it.
The resolved record is printed as JSON before the command runs.
"""
import argparse
import json
import logging
import os
import sys
import typing
from dataclasses import MISSING, fields
from typing import Any, Callable, Dict, List, Optional, Sequence, Type

import numpy as np

from .bench import (
    ESTIMATOR_STREAM,
    EXPERIMENTS,
    RRT_STREAM,
    TASK_STREAM,
    eval_metrics,
    export_cspace_field,
    format_table,
    model_estimator,
    time_queries,
    write_csv,
)
from .config import (
    BenchConfig,
    ConfigError,
    ConfigRecord,
    DatasetConfig,
    EnvConfig,
    EvalConfig,
    FieldConfig,
    FitConfig,
    OptimizeConfig,
    default_output_dir,
)
from .dataset import generate_dataset, load_dataset, sample_configs, save_dataset
from .environment import Environment, load_environment, save_environment
from .errors import GpdistError
from .estimators import EstimatorError, EstimatorKind, OracleEstimator, build_estimator, fit_model
from .geometry import ConvexPolygon
from .kinematics import RobotModel
from .optimize import OptimizeMode, OptimizeProblem, optimize, save_report, save_trajectory
from .planner import resample_trajectory, rrt_plan, seed_waypoints
from .regression import Model, load_model, save_model
from .scenes import narrow_passage_environment, random_environment, sample_task

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class ArgumentParser(argparse.ArgumentParser):
    """Exits with status 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _flag_type(annotation: Any):
    """(element type, is_list) for a field annotation; None when it has no flag."""
    origin = typing.get_origin(annotation)
    if origin is typing.Union:
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        return _flag_type(args[0]) if len(args) == 1 else None
    if origin in (list, List):
        (item,) = typing.get_args(annotation)
        if typing.get_origin(item) is not None:
            return None
        return item, True
    if annotation in (int, float, str, bool):
        return annotation, False
    return None


def _default_of(f) -> Any:
    if f.default is not MISSING:
        return f.default
    if f.default_factory is not MISSING:
        return f.default_factory()
    return None


def add_record_arguments(parser: argparse.ArgumentParser, record: Type[ConfigRecord]) -> None:
    """One ``--flag`` per record field; defaults stay in the record, not the namespace."""
    hints = typing.get_type_hints(record)
    for f in fields(record):
        kind = _flag_type(hints[f.name])
        if kind is None:
            continue
        item, is_list = kind
        help_text = f"{f.metadata.get('help', '')} (default: {_default_of(f)})"
        kwargs: Dict[str, Any] = {"dest": f.name, "default": argparse.SUPPRESS, "help": help_text}
        if item is bool:
            kwargs["action"] = argparse.BooleanOptionalAction
        else:
            kwargs["type"] = item
            if is_list:
                kwargs["nargs"] = "+"
            if "choices" in f.metadata:
                kwargs["choices"] = f.metadata["choices"]
        parser.add_argument(f"--{f.name.replace('_', '-')}", **kwargs)


def resolve_record(record: Type[ConfigRecord], args: argparse.Namespace) -> ConfigRecord:
    base = record.load(args.config) if getattr(args, "config", None) else record()
    overrides = {f.name: getattr(args, f.name) for f in fields(record) if hasattr(args, f.name)}
    return base.replace(**overrides)


def output_path(path: str) -> str:
    """Bare file names land in the output directory."""
    if os.path.isabs(path) or os.path.dirname(path):
        return path
    return os.path.join(default_output_dir(), path)


def input_path(path: str) -> str:
    """Bare file names are looked up in the working directory, then the output directory."""
    if os.path.isabs(path) or os.path.dirname(path) or os.path.exists(path):
        return path
    return os.path.join(default_output_dir(), path)


def _echo(config: ConfigRecord) -> None:
    print(json.dumps({type(config).__name__: config.to_dict()}, indent=2))


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def cmd_gen_env(config: EnvConfig) -> int:
    if config.scene == "narrow-passage":
        env = narrow_passage_environment(config.gap, config.link_width)
    else:
        robot = RobotModel.uniform(config.dof, config.link_length, config.link_width)
        if config.obstacles:
            env = Environment(robot, tuple(ConvexPolygon(np.array(v, dtype=float)) for v in config.obstacles))
        else:
            env = random_environment(robot, np.random.default_rng(config.seed), config.n_obstacles)
    path = output_path(config.out)
    save_environment(env, path)
    load_environment(path)
    return EXIT_OK


def cmd_gen_dataset(config: DatasetConfig) -> int:
    env = load_environment(input_path(config.env))
    dataset = generate_dataset(env, config.n, config.eta, config.seed, jobs=config.jobs)
    save_dataset(dataset, output_path(config.out))
    return EXIT_OK


def cmd_fit(config: FitConfig) -> int:
    env = load_environment(input_path(config.env))
    dataset = load_dataset(input_path(config.dataset), env)
    model = fit_model(config.kind, dataset, env, eta2=config.eta2, noise_mode=config.noise_mode, gamma=config.gamma)
    save_model(model, output_path(config.out))
    return EXIT_OK


def cmd_eval(config: EvalConfig) -> int:
    env = load_environment(input_path(config.env))
    model = load_model(input_path(config.model))
    if config.testset:
        testset = load_dataset(input_path(config.testset), env)
    else:
        testset = generate_dataset(env, config.n_test, 0.0, config.seed)
    metrics = eval_metrics(model_estimator(env, model), testset)
    row = {"model": config.model, **metrics.to_dict()}
    print(format_table([row]))
    if config.out:
        write_csv([row], output_path(config.out))
    return EXIT_OK


def cmd_bench(config: BenchConfig) -> int:
    env = load_environment(input_path(config.env))
    queries = sample_configs(env.robot, config.n_queries, np.random.default_rng(config.seed))
    predictors = [(path, model_estimator(env, load_model(input_path(path)))) for path in config.models]
    if config.oracle:
        predictors.append(("oracle", OracleEstimator(env)))
    if not predictors:
        raise ConfigError("nothing to time", "give --models or enable --oracle")
    rows = []
    for name, predictor in predictors:
        timing = time_queries(predictor, queries, config.n_warmup)
        rows.append({"predictor": name, "kind": predictor.name, **timing.to_dict()})
    print(format_table(rows))
    if config.out:
        write_csv(rows, output_path(config.out))
    return EXIT_OK


def _estimator_model(config: OptimizeConfig, env: Environment) -> Optional[Model]:
    kind = EstimatorKind(config.estimator)
    if not kind.learned:
        return None
    if config.model:
        return load_model(input_path(config.model))
    if config.dataset:
        dataset = load_dataset(input_path(config.dataset), env)
        return fit_model(EstimatorKind.GP_FK if kind is EstimatorKind.HYBRID else kind, dataset, env)
    raise EstimatorError(f"estimator '{kind.value}' needs --model or --dataset")


def cmd_optimize(config: OptimizeConfig) -> int:
    env = load_environment(input_path(config.env))
    model = _estimator_model(config, env)
    if config.start is None or config.goal is None:
        start, goal = sample_task(env, _stream(config.seed, TASK_STREAM), config.d_min)
        start = start if config.start is None else np.array(config.start, dtype=float)
        goal = goal if config.goal is None else np.array(config.goal, dtype=float)
    else:
        start, goal = np.array(config.start, dtype=float), np.array(config.goal, dtype=float)
    path = rrt_plan(env, start, goal, _stream(config.seed, RRT_STREAM))
    seed = resample_trajectory(path, seed_waypoints(path, config.T, config.dtheta))
    estimator = build_estimator(config.estimator, env, model, eta=config.eta,
                                rng=_stream(config.seed, ESTIMATOR_STREAM, 0), z=config.z, n_sensor=config.n_sensor)
    problem = OptimizeProblem(env, estimator, start, goal, seed.T, config.dtheta, config.d_min,
                              OptimizeMode(config.mode), seed=config.seed)
    result = optimize(problem, seed)
    out = output_path(config.out)
    save_trajectory(result.trajectory, out)
    save_report(result.report, os.path.splitext(out)[0] + ".report.json")
    report = result.report.to_dict()
    report.pop("merit_history")
    print(format_table([report]))
    return EXIT_OK


def cmd_field(config: FieldConfig) -> int:
    env = load_environment(input_path(config.env))
    model = load_model(input_path(config.model)) if config.model else None
    write_csv(export_cspace_field(env, model, config.resolution), output_path(config.out))
    return EXIT_OK


def run_experiment(name: str, config: ConfigRecord) -> int:
    result = EXPERIMENTS[name].runner(config)
    # files follow the table actually produced: table2 in maximize mode writes table3_*
    config.save(output_path(f"{result.name}_config.json"))
    for table, rows in result.tables.items():
        write_csv(rows, output_path(f"{result.name}_{table}.csv"))
    print(format_table(result.tables[result.primary]))
    return EXIT_OK


COMMANDS: Dict[str, Any] = {
    "gen-env": (EnvConfig, cmd_gen_env, "build an environment file"),
    "gen-dataset": (DatasetConfig, cmd_gen_dataset, "sample and label a dataset"),
    "fit": (FitConfig, cmd_fit, "fit a KR or GP model"),
    "eval": (EvalConfig, cmd_eval, "score a model against noise-free labels"),
    "bench": (BenchConfig, cmd_bench, "time single queries"),
    "optimize": (OptimizeConfig, cmd_optimize, "optimize a trajectory with a distance estimator"),
    "field": (FieldConfig, cmd_field, "rasterize a 2-DOF configuration space"),
}


def build_parser() -> ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="JSON file with the command's settings; flags override it")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="debug logging")
    common.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="warnings only, no progress bars")

    parser = ArgumentParser(prog="gpdist", description="GP distance-to-collision estimation for planar arms",
                            parents=[common])
    commands = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name, (record, handler, help_text) in COMMANDS.items():
        sub = commands.add_parser(name, help=help_text, description=help_text, parents=[common])
        add_record_arguments(sub, record)
        sub.set_defaults(record=record, handler=handler)

    experiments = commands.add_parser("experiment", help="run a registered experiment", parents=[common])
    names = experiments.add_subparsers(dest="experiment", metavar="name", required=True)
    for name, entry in EXPERIMENTS.items():
        sub = names.add_parser(name, help=entry.help, description=entry.help, parents=[common])
        add_record_arguments(sub, entry.config_type)
        sub.set_defaults(record=entry.config_type, handler=lambda config, name=name: run_experiment(name, config))
    return parser


def configure_logging(args: argparse.Namespace) -> None:
    level = logging.INFO
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.WARNING
    logging.basicConfig(format="[%(levelname)s] %(message)s", level=level)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args)
    handler: Callable[[Any], int] = args.handler
    try:
        config = resolve_record(args.record, args)
        _echo(config)
        return handler(config)
    except (GpdistError, OSError, ValueError, np.linalg.LinAlgError) as e:
        logger.error(str(e))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
