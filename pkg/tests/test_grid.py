import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pathenergy.errors import IncompatibleSize, ShapeMismatch, ZeroMass
from pathenergy.grid import (
    BoundaryCondition,
    StaggeredField,
    blocked_faces,
    divergence,
    divergence_matrix,
    downsample,
    face_average_matrix,
    face_gradient,
    faces_per_line,
    normalize_mass,
    threshold,
)

BCS = list(BoundaryCondition)


def random_field(rng, n, bc):
    m = StaggeredField(*(rng.standard_normal(s.shape) for s in (StaggeredField.zeros(n, bc).m1, StaggeredField.zeros(n, bc).m2)))
    if bc is BoundaryCondition.DIRICHLET:
        m.m1[[0, -1]] = 0.0
        m.m2[:, [0, -1]] = 0.0
    return m


def dense_divergence(n, bc):
    """Columns are divergences of unit face fields."""
    k = faces_per_line(n, bc)
    cols = []
    for idx in range(2 * k * n):
        e = np.zeros(2 * k * n)
        e[idx] = 1.0
        cols.append(divergence(StaggeredField.from_flat(e, n, bc), bc).ravel())
    return np.array(cols).T


def test_divergence_of_zero_field():
    for bc in BCS:
        assert not divergence(StaggeredField.zeros(5, bc), bc).any()


def test_divergence_single_entry_stencil():
    m = StaggeredField.zeros(2, BoundaryCondition.DIRICHLET)
    m.m2[0, 1] = 1.0
    np.testing.assert_array_equal(divergence(m, "dirichlet"), [[1.0, -1.0], [0.0, 0.0]])


def test_dirichlet_divergence_sums_to_zero():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = divergence(random_field(rng, 8, BoundaryCondition.DIRICHLET), "dirichlet")
        assert abs(d.sum()) < 1e-14


def test_periodic_divergence_sums_to_zero():
    rng = np.random.default_rng(1)
    d = divergence(random_field(rng, 8, BoundaryCondition.PERIODIC), "periodic")
    assert abs(d.sum()) < 1e-13


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        divergence(StaggeredField(np.zeros((5, 4)), np.zeros((5, 6))), "dirichlet")
    with pytest.raises(ShapeMismatch):
        divergence(StaggeredField(np.zeros((5, 4)), np.zeros((4, 5))), "periodic")


def test_face_gradient_of_constant_is_zero():
    for bc in (BoundaryCondition.DIRICHLET, BoundaryCondition.PERIODIC):
        g = face_gradient(np.full((6, 6), 3.7), bc)
        assert not g.m1.any() and not g.m2.any()


def test_neumann_gradient_of_constant_lives_on_boundary():
    # free boundary faces see the missing outside cell as zero
    g = face_gradient(np.full((4, 4), 2.0), "neumann")
    assert not g.m1[1:-1].any() and not g.m2[:, 1:-1].any()
    np.testing.assert_array_equal(g.m1[0], -2.0)
    np.testing.assert_array_equal(g.m1[-1], 2.0)


def test_interior_face_sign():
    y = np.arange(9.0).reshape(3, 3)
    g = face_gradient(y, "dirichlet")
    # face between (0, j) and (1, j) carries y[0, j] - y[1, j]
    np.testing.assert_array_equal(g.m1[1], y[0] - y[1])
    np.testing.assert_array_equal(g.m2[:, 2], y[:, 1] - y[:, 2])


@pytest.mark.parametrize("bc", BCS)
def test_adjoint_identity(bc):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        m = random_field(rng, 8, bc)
        y = rng.standard_normal((8, 8))
        lhs = np.sum(divergence(m, bc) * y)
        rhs = m.inner(face_gradient(y, bc))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1.0))
    assert worst < 1e-13


def test_periodic_gradient_against_dense_transpose():
    n, bc = 4, BoundaryCondition.PERIODIC
    y = np.zeros((n, n))
    y[0, 0] = 1.0
    g = face_gradient(y, bc)
    expected = dense_divergence(n, bc).T @ y.ravel()
    np.testing.assert_array_equal(g.ravel(), expected)
    # wrap-around faces (face 0 joins cell n-1 to cell 0) are hit
    assert g.m1[0, 0] == -1.0 and g.m2[0, 0] == -1.0
    assert g.m1[1, 0] == 1.0 and g.m2[0, 1] == 1.0


@pytest.mark.parametrize("bc", BCS)
def test_divergence_matrix_matches_stencil(bc):
    n = 5
    np.testing.assert_array_equal(divergence_matrix(n, bc).toarray(), dense_divergence(n, bc))


@pytest.mark.parametrize("bc", [BoundaryCondition.DIRICHLET, BoundaryCondition.PERIODIC])
def test_div_grad_annihilates_constants(bc):
    c = np.full((6, 6), 1.25)
    assert not divergence(face_gradient(c, bc), bc).any()


def test_face_average_matrix_weights():
    rho = np.arange(1.0, 10.0).reshape(3, 3)
    u = face_average_matrix(3, "dirichlet") @ rho.ravel()
    f = StaggeredField.from_flat(u, 3, BoundaryCondition.DIRICHLET)
    np.testing.assert_allclose(f.m1[1:-1], (rho[:-1] + rho[1:]) / 2)
    assert not f.m1[[0, -1]].any()
    un = StaggeredField.from_flat(face_average_matrix(3, "neumann") @ rho.ravel(), 3, BoundaryCondition.NEUMANN)
    np.testing.assert_allclose(un.m2[:, 0], rho[:, 0])
    np.testing.assert_allclose(un.m2[:, -1], rho[:, -1])


def test_blocked_faces_around_obstacle():
    mask = np.zeros((4, 4), bool)
    mask[1, 2] = True
    b = blocked_faces(4, "dirichlet", mask)
    assert b.m1.dtype == bool
    assert b.m1[1, 2] and b.m1[2, 2] and b.m2[1, 2] and b.m2[1, 3]
    assert b.m1[0].all() and b.m1[-1].all()
    assert not b.m1[2, 1]


def test_downsample_examples():
    np.testing.assert_array_equal(downsample(np.ones((4, 4)), 2), np.ones((2, 2)))
    x = np.array([[0.3, 0.1], [0.2, 0.4]])
    np.testing.assert_array_equal(downsample(x, 2), x)
    y = np.zeros((4, 4))
    y[0, 0] = 4.0
    np.testing.assert_array_equal(downsample(y, 2), [[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(IncompatibleSize):
        downsample(np.ones((6, 6)), 4)


def test_threshold_examples():
    x = np.array([[0.0, 0.5], [-0.1, 2.0]])
    out = threshold(x, 1e-5)
    assert out[0, 0] == 1e-5 and out[1, 0] == 1e-5
    assert out[0, 1] == 0.5 and out[1, 1] == 2.0
    z = np.array([[0.2, 0.3]])
    np.testing.assert_array_equal(threshold(z, 1e-5), z)


def test_normalize_mass_examples():
    x = np.full((2, 2), 0.5)
    np.testing.assert_array_equal(normalize_mass(x, 4.0), np.ones((2, 2)))
    np.testing.assert_array_equal(normalize_mass(x * 1.0, 2.0), x)
    np.testing.assert_array_equal(normalize_mass(x, 1.0), x / 2)
    with pytest.raises(ZeroMass):
        normalize_mass(np.zeros((2, 2)))


grids = arrays(np.float64, (8, 8), elements=st.floats(-1, 10, allow_nan=False))


@given(grids, st.floats(1e-8, 1.0))
def test_threshold_idempotent(x, eps):
    once = threshold(x, eps)
    np.testing.assert_array_equal(threshold(once, eps), once)
    assert once.min() >= eps


@given(grids)
def test_downsample_composes(x):
    np.testing.assert_allclose(downsample(downsample(x, 4), 2), downsample(x, 2), rtol=1e-12, atol=1e-12)


@settings(max_examples=50)
@given(grids, st.floats(0.1, 100.0))
def test_normalize_hits_target(x, target):
    x = np.abs(x) + 0.01
    assert normalize_mass(x, target).sum() == pytest.approx(target, rel=1e-12)
