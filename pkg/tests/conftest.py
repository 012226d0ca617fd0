import numpy as np
import pytest

from gpdist.dataset import generate_dataset
from gpdist.environment import Environment
from gpdist.geometry import box_polygon
from gpdist.kinematics import RobotModel
from gpdist.scenes import random_environment

# 0.4 x 0.4 block centred on (0, 1.5): a two-link arm lying along +x is
# 1.25 away from it, and pointing straight up its second link goes through it
BOX_CENTER = (0.0, 1.5)
BOX_SIZE = 0.4


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def arm2():
    return RobotModel.uniform(2)


@pytest.fixture(scope="session")
def box_env(arm2):
    return Environment(arm2, (box_polygon(BOX_CENTER, BOX_SIZE, BOX_SIZE),))


@pytest.fixture(scope="session")
def box_env3():
    return Environment(RobotModel.uniform(3), (box_polygon((1.5, 1.5), 0.6, 0.6),))


@pytest.fixture(scope="session")
def env7():
    return random_environment(RobotModel.uniform(7), np.random.default_rng(0))


@pytest.fixture(scope="session")
def box_train(box_env):
    return generate_dataset(box_env, 150, 0.05, seed=0)


@pytest.fixture(scope="session")
def box3_train(box_env3):
    return generate_dataset(box_env3, 150, 0.05, seed=0)
