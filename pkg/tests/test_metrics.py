import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pathenergy.energy import path_energy
from pathenergy.metrics import gaussian_window, sequence_metrics, ssim, ssim_sequence, w2_estimate

from conftest import random_path

images = arrays(np.float64, (12, 12), elements=st.floats(0, 1))


@settings(max_examples=30, deadline=None)
@given(images)
def test_self_similarity(x):
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(images, images)
def test_symmetry(a, b):
    assert abs(ssim(a, b) - ssim(b, a)) <= 1e-14


@pytest.mark.parametrize("c1,c2", [(0.2, 0.6), (0.5, 0.5), (0.0, 1.0)])
def test_constant_images_closed_form(c1, c2):
    C1 = 0.01**2
    expected = (2 * c1 * c2 + C1) / (c1**2 + c2**2 + C1)
    assert ssim(np.full((16, 16), c1), np.full((16, 16), c2)) == pytest.approx(expected, rel=1e-12)


def test_known_constant_values():
    a, b = np.full((16, 16), 0.2), np.full((16, 16), 0.6)
    assert ssim(a, b) == pytest.approx(0.2401 / 0.4001, rel=1e-12)


def test_window_normalized_and_small_images():
    w = gaussian_window(11, 1.5)
    assert w.sum() == pytest.approx(1.0) and w.shape == (11, 11)
    x = np.random.default_rng(0).uniform(size=(6, 6))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def test_constant_path_sequence():
    x = np.random.default_rng(1).uniform(size=(12, 12))
    mean, std, pairs = ssim_sequence(np.array([x] * 5))
    assert mean == pytest.approx(1.0, abs=1e-12) and std == pytest.approx(0.0, abs=1e-12)
    assert len(pairs) == 4
    assert len(ssim_sequence(np.array([x, x]))[2]) == 1


def test_teleport_is_rougher_than_gradual():
    n = 16
    i, j = np.indices((n, n))
    frames = [np.exp(-((i - 4 - t) ** 2 + (j - 8) ** 2) / 8.0) for t in range(9)]
    gradual = np.array(frames)
    teleport = np.array([frames[0]] * 5 + [frames[-1]] * 4)
    assert ssim_sequence(gradual)[1] < ssim_sequence(teleport)[1]


def test_w2_estimate():
    x = np.random.default_rng(2).uniform(0.2, 1.0, (6, 6))
    assert w2_estimate(path_energy(np.array([x] * 4))) == 0.0
    path = random_path(np.random.default_rng(3), 6, 3)
    rep, rep2 = path_energy(path), path_energy(2.0 * path)
    assert w2_estimate(rep2) == pytest.approx(2.0 * w2_estimate(rep), rel=1e-12)
    assert w2_estimate(rep) == 3 * rep.J
    assert w2_estimate(path_energy(path.transpose(0, 2, 1))) == pytest.approx(w2_estimate(rep), rel=1e-12)


def test_reversal_keeps_ssim_mean():
    path = random_path(np.random.default_rng(4), 12, 4)
    assert ssim_sequence(path)[0] == pytest.approx(ssim_sequence(path[::-1])[0], abs=1e-14)


def test_sequence_metrics_bundle():
    path = random_path(np.random.default_rng(5), 6, 3)
    m = sequence_metrics(path, path_energy(path))
    np.testing.assert_allclose(m.masses, path.sum(axis=(1, 2)))
    assert m.w2 == pytest.approx(3 * path_energy(path).J)
    assert sequence_metrics(path).w2 is None
