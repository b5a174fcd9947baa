import numpy as np
import pytest

from pathenergy.energy import EnergyMode, assemble_operator
from pathenergy.oracle import dense_path_energy, dense_system, fd_gradient

from conftest import random_path

HAND_PATH = np.array([[[0.4, 0.1], [0.4, 0.1]], [[0.1, 0.4], [0.1, 0.4]]])


def test_hand_fixture():
    assert dense_path_energy(HAND_PATH) == pytest.approx(0.72, rel=1e-10)


def test_constant_path():
    x = np.random.default_rng(0).uniform(0.2, 1.0, (4, 4))
    assert dense_path_energy(np.array([x, x, x])) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("bc", ["dirichlet", "neumann", "periodic"])
def test_dense_system_reproduces_operator(bc):
    rng = np.random.default_rng(1)
    rho = rng.uniform(0.2, 1.0, (5, 5))
    mask = np.zeros((5, 5), bool)
    mask[2, 2] = True
    D, u, _ = dense_system(rho, bc, mask)
    A = assemble_operator(rho, bc, EnergyMode.balanced(mask)).matrix.toarray()
    np.testing.assert_allclose(D @ np.diag(u) @ D.T, A, rtol=0, atol=1e-14)


def test_step_size_insensitivity():
    path = random_path(np.random.default_rng(2), 4, 2)
    a = fd_gradient(path, step=1e-5)
    b = fd_gradient(path, step=5e-6)
    assert np.abs(a - b).max() <= 1e-6 * np.abs(a).max()


def test_step_range_enforced():
    path = random_path(np.random.default_rng(3), 3, 2)
    for step in (1e-8, 1e-3):
        with pytest.raises(ValueError):
            fd_gradient(path, step=step)
