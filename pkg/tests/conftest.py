import numpy as np
import pytest

from hjbranch.grids import build_grid
from hjbranch.operators import ControlFamily


def discrete_lam1(n: int, length: float = 1.0) -> float:
    """Closed-form principal eigenvalue of the three-point Dirichlet stencil."""
    h = length / (n + 1)
    return (2.0 / h**2) * (1.0 - np.cos(np.pi * h / length))


@pytest.fixture(scope="session")
def grid199():
    return build_grid(1, (0.0, 1.0), 199)


@pytest.fixture(scope="session")
def lam_h199():
    return discrete_lam1(199)


@pytest.fixture(scope="session")
def laplacian():
    return ControlFamily.laplacian(dim=1)


@pytest.fixture(scope="session")
def sine(grid199):
    import hjbranch.grids as grids
    x = grid199.coords()[:, 0]
    return grids.GridFunction(grid199, np.sin(np.pi * x))
