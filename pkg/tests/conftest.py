from __future__ import annotations

import numpy as np
import pytest

from elastoalpha.fem import Mesh, build_box_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture
def unit_tet() -> Mesh:
    nodes = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    return Mesh(3, 1, nodes, np.array([[0, 1, 2, 3]]))


@pytest.fixture
def cube48() -> Mesh:
    return build_box_mesh((1.0, 1.0, 1.0), (2, 2, 2))


def random_rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
