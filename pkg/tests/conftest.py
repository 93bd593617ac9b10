import pathlib

import numpy as np
import pytest

from ldsf import basis, fileio, warm_start

CONFIG_DIR = pathlib.Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(scope="session")
def example_problem_path():
    return CONFIG_DIR / "example_problem.json"


@pytest.fixture(scope="session")
def reference_gains_path():
    return CONFIG_DIR / "reference_gains_it400.json"


@pytest.fixture(scope="session")
def example_problem(example_problem_path):
    return fileio.load_problem(example_problem_path)


@pytest.fixture(scope="session")
def example_realization(example_problem):
    return basis.realize(example_problem.basis_spec, nu=example_problem.plant.nu)


@pytest.fixture(scope="session")
def example_c3(example_problem, example_realization):
    return basis.fit_kernel(example_problem.plant.dd_output_kernel,
                            example_realization)


@pytest.fixture(scope="session")
def example_warm_gains(example_problem, example_realization):
    return warm_start.construct_gains(
        example_problem.plant, example_problem.warm_K, example_problem.warm_X,
        example_realization)


@pytest.fixture(scope="session")
def reference_gains(reference_gains_path, example_realization):
    return fileio.load_gains(reference_gains_path, example_realization)


def gauss_gramian_oracle(m, f0, r, n_panels=60, order=10):
    """Composite Gauss-Legendre quadrature of int_{-r}^0 e^{Mt} f0 f0' e^{M't} dt.

    Independent of the block-exponential route used by the library.
    """
    import scipy.linalg

    m = np.asarray(m, dtype=float)
    f0 = np.asarray(f0, dtype=float).reshape(-1)
    d = m.shape[0]
    nodes, weights = np.polynomial.legendre.leggauss(order)
    total = np.zeros((d, d))
    edges = np.linspace(-r, 0.0, n_panels + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = (a + b) / 2.0, (b - a) / 2.0
        for x, w in zip(nodes, weights):
            v = scipy.linalg.expm(m * (mid + half * x)) @ f0
            total += (w * half) * np.outer(v, v)
    return total
