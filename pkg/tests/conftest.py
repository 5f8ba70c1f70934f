import numpy as np
import pytest

from djsp_rl.instance import JspInstance, load_instance


@pytest.fixture(scope="session")
def ft06():
    return load_instance("ft06")


@pytest.fixture(scope="session")
def la01():
    return load_instance("la01")


def make_instance(machine_rows, time_rows, name="tiny"):
    mo = np.asarray(machine_rows, dtype=np.int64)
    to = np.asarray(time_rows, dtype=np.int64)
    return JspInstance(name=name, n_jobs=mo.shape[0], n_machines=mo.shape[1],
                       machine_matrix=mo, time_matrix=to)
