from .errors import GpdistError
from .geometry import ConvexPolygon, signed_distance
from .kinematics import RobotModel
from .environment import Environment, distance_to_collision, noisy_distance
from .kernels import KernelKind, KernelSpec
from .regression import GpModel, KrModel, gp_fit, gp_mean, gp_variance, kr_fit, kr_predict
from .hybrid import HybridEstimator, NoisySensor, hybrid_predict
from .dataset import Dataset, generate_dataset
from .estimators import EstimatorKind, build_estimator
from .optimize import OptimizeMode, OptimizeProblem, Trajectory, optimize
