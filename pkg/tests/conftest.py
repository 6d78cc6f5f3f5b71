"""Shared fixtures: small canonical problems and random consistent systems."""

import numpy as np
import pytest

from superiorize import (
    FeasibilityProblem,
    Hyperplane,
    PhantomSpec,
    ScanGeometry,
    generate_data,
    make_phantom,
)

# verdict lines collected by the acceptance suite, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def axes_problem():
    """Two lines through the origin in R^2: set 0 is x2=0, set 1 is x1=0."""
    return FeasibilityProblem([
        Hyperplane.from_dense([0.0, 1.0], 0.0),
        Hyperplane.from_dense([1.0, 0.0], 0.0),
    ])


@pytest.fixture
def unit_cross_problem():
    """Lines x1=1 and x2=1 in R^2, meeting at (1,1)."""
    return FeasibilityProblem([
        Hyperplane.from_dense([1.0, 0.0], 1.0),
        Hyperplane.from_dense([0.0, 1.0], 1.0),
    ])


def make_random_system(seed, n_rows=30, dim=20):
    """Consistent random hyperplane system with a known interior solution.

    Rows are dense Gaussian normals; offsets are chosen so a fixed random
    point solves every equation, which keeps the intersection nonempty.
    """
    rng = np.random.default_rng(seed)
    solution = rng.standard_normal(dim)
    planes = []
    for _ in range(n_rows):
        normal = rng.standard_normal(dim)
        planes.append(Hyperplane.from_dense(normal, float(normal @ solution)))
    return FeasibilityProblem(planes), solution


@pytest.fixture
def random_system():
    return make_random_system


@pytest.fixture(scope="session")
def desk_data():
    """Small tomography dataset shared by read-only tests (63x63, 30 views)."""
    img = make_phantom(PhantomSpec.surrogate_head(63))
    return generate_data(img, ScanGeometry(num_views=30))
