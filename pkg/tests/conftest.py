import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from boblocks.space import ParamSpace, p_dbl, p_fct, p_int, p_lgl

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def automl_space():
    """Branch factor plus four dependents, two per branch."""
    return ParamSpace([
        p_fct("learner", ["svm", "rf"]),
        p_dbl("cost", 1e-3, 1e3, log=True, depends=("learner", "svm")),
        p_fct("kernel", ["linear", "radial"], depends=("learner", "svm")),
        p_dbl("gamma", 1e-4, 1.0, log=True, depends=("kernel", "radial")),
        p_int("num_trees", 10, 500, depends=("learner", "rf")),
    ])


@pytest.fixture
def hier_space():
    return automl_space()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
