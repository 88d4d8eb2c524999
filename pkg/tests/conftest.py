import numpy as np
import pytest
from hypothesis import settings

from lcs3d.strain import HELICITY_FAMILIES, DeformationGrid

# numba compilation on first use would trip per-example deadlines
settings.register_profile("default", deadline=None)
settings.load_profile("default")


def synthetic_grid(xi3_fn, n=60, extent=(-1.0, 1.0, -1.0, 1.0), lam=(0.25, 1.0, 4.0),
                   helicity=0.0, s1=0.0):
    """Grid whose xi3 field is the in-plane unit vector field xi3_fn(X, Y); xi1 is
    the in-plane normal and xi2 = e_z up to sign. All helicities are set to
    ``helicity`` (a scalar or an (n, n) array)."""
    x = np.linspace(extent[0], extent[1], n)
    y = np.linspace(extent[2], extent[3], n)
    X, Y = np.meshgrid(x, y)
    v3 = np.asarray(xi3_fn(X, Y), dtype=float)
    v3 = v3 / np.linalg.norm(v3, axis=-1, keepdims=True)
    ez = np.broadcast_to([0.0, 0.0, 1.0], v3.shape)
    v1 = np.cross(v3, ez)
    v1 /= np.linalg.norm(v1, axis=-1, keepdims=True)
    v2 = np.cross(v3, v1)
    xi = np.broadcast_to(np.stack([v1, v2, v3], axis=-2), (3, n, n, 3, 3)).copy()
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (3, n, n, 3)).copy()
    ok = np.ones((3, n, n), bool)
    hel = {k: np.broadcast_to(np.asarray(helicity, dtype=float), (n, n)).copy()
           for k in HELICITY_FAMILIES}
    zeros3 = np.zeros((3, n, n, 3))
    return DeformationGrid(s1, 0.0, 1.0, x, y, float(x[1] - x[0]), zeros3,
                           np.zeros((3, n, n, 3, 3)), np.zeros((3, n, n, 3, 3)), lam, xi, ok,
                           ok.copy(), helicity=hel)


def uniform_xi3(X, Y):
    return np.stack([np.ones_like(X), np.zeros_like(X), np.zeros_like(X)], axis=-1)


def radial_xi3(X, Y):
    return np.stack([X, Y, np.zeros_like(X)], axis=-1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance lines collected by tests/test_acceptance.py, echoed after the run
ACCEPTANCE: list = []


@pytest.fixture(scope="session")
def acceptance():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))
                           if s.split()[1].rstrip(":").isdigit() else 99):
            terminalreporter.write_line(line)
