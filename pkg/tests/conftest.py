import sys
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from passglm import bench

DESK = dict(n=100, N=2000, p=200, test_size=2000, replicates=50)


def _run(scenario, methods, extra_metrics=(), **overrides):
    kw = dict(DESK)
    kw.update(overrides)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return bench.run_scenario_bench(scenario, methods, seed=0,
                                        extra_metrics=extra_metrics, **kw)


@pytest.fixture(scope="session")
def scenario1_bench():
    """Scenario I desk-scale bench shared by module tests and acceptance."""
    return _run("I", ["pass", "ss_prior", "lasso", "plasso2"],
                extra_metrics=("beta_cos", "rho"))


@pytest.fixture(scope="session")
def scenario1_lasso200_bench():
    """Scenario I with 200 labeled rows, supervised fit only.

    Generation draws are identical to scenario1_bench at equal seeds (the
    labeled count only widens the labeled prefix), so comparisons against it
    are paired.
    """
    return _run("I", ["lasso"], n=200)


@pytest.fixture(scope="session")
def scenario2_bench():
    return _run("II", ["pass", "ss_prior", "lasso"])


@pytest.fixture(scope="session")
def scenario6_bench():
    return _run("VI", ["pass", "lasso"], extra_metrics=("test_dev",))


@pytest.fixture(scope="session")
def scenario_i_bench():
    return _run("i", ["pass", "ss_prior", "plasso1", "plasso2", "lasso"])


@pytest.fixture(scope="session")
def scenario_ii_bench():
    return _run("ii", ["pass", "ss_prior"])


def per_replicate(result, method, metric):
    """Per-replicate values in replicate order."""
    rows = [r for r in result.rows
            if r["method"] == method and r["metric"] == metric]
    rows.sort(key=lambda r: r["replicate"])
    return np.array([r["value"] for r in rows]), \
        [r["replicate"] for r in rows]
