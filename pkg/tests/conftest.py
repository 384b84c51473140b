import numpy as np
import pytest

from svinefactor import dgp
from svinefactor.mvine import build_structure, simulate

# Table-style fixtures shared across test modules: (family, parameter, target tau)
TAU_TABLE = [
    ("gaussian", 0.34, 0.218),
    ("gaussian", 0.69, 0.486),
    ("gaussian", -0.046, -0.029),
    ("gaussian", 0.67, 0.467),
    ("gaussian", -0.27, -0.174),
    ("clayton", 1.5, 0.43),
    ("clayton", 2.0, 0.49),
    ("clayton", 0.37, 0.16),
    ("clayton", 0.72, 0.26),
    ("clayton", 0.24, 0.11),
    ("frank", 2.0, 0.214),
    ("frank", 5.5, 0.488),
    ("frank", -0.57, -0.063),
    ("frank", 5.1, 0.464),
    ("frank", -1.1, -0.119),
    ("joe", 2.5, 0.44),
    ("joe", 2.7, 0.48),
    ("joe", 1.3, 0.13),
    ("joe", 1.6, 0.25),
    ("joe", 1.2, 0.08),
]


@pytest.fixture(scope="session")
def benchmark_vine():
    """Two-factor, order-2 frank truth used across simulation tests."""
    return dgp.benchmark_spec().mvine


@pytest.fixture(scope="session")
def benchmark_u_5000(benchmark_vine):
    return simulate(benchmark_vine, 5000, warmup=100, seed=314)


@pytest.fixture(scope="session")
def small_panel():
    spec = dgp.benchmark_spec(t_len=200, n_dim=30, seed=5)
    panel, f_true, lam, _ = dgp.generate(spec, rep=0)
    return panel, f_true, lam


@pytest.fixture(scope="session")
def structure_21():
    return build_structure(2, 1)


@pytest.fixture(scope="session")
def structure_22():
    return build_structure(2, 2)


def rng_for(name, salt=0):
    import zlib

    return np.random.default_rng(zlib.crc32(name.encode()) + salt)
