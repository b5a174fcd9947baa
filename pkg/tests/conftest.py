import time

import numpy as np
import pytest

from pathenergy.energy import EnergyMode
from pathenergy.geodesic import SolverConfig, optimize_path, preprocess

N_TRANS = 32
T_TRANS = 12
SHIFT = (10.0, 6.0)
SRC_CENTER = (10.5, 12.5)
EPS = 1e-5


def gaussian_bump(n, center, sigma=2.0):
    i, j = np.indices((n, n))
    g = np.exp(-((i - center[0]) ** 2 + (j - center[1]) ** 2) / (2 * sigma**2))
    return g / g.sum()


def random_path(rng, n, T, balanced=True, low=0.5, high=1.5, mask=None):
    path = rng.uniform(low, high, size=(T + 1, n, n))
    if mask is not None:
        path[:, mask] = EPS
    if balanced:
        free = np.ones((n, n), bool) if mask is None else ~mask
        sums = path[:, free].sum(axis=1)
        path[:, free] *= (free.sum() / sums)[:, None]
    return path


def wall_mask(n=N_TRANS, row=15, gap=(4, 7)):
    mask = np.zeros((n, n), dtype=bool)
    mask[row, :] = True
    mask[row, gap[0]:gap[1]] = False
    return mask


def translation_endpoints(mask=None):
    tgt_center = (SRC_CENTER[0] + SHIFT[0], SRC_CENTER[1] + SHIFT[1])
    src = preprocess(gaussian_bump(N_TRANS, SRC_CENTER), EPS, mask, target_mass=1.0)
    tgt = preprocess(gaussian_bump(N_TRANS, tgt_center), EPS, mask, target_mass=1.0)
    return src, tgt


# wall-clock seconds of the shared optimization runs
TIMINGS = {}


@pytest.fixture(scope="session")
def translation_result():
    start = time.perf_counter()
    src, tgt = translation_endpoints()
    result = optimize_path(src, tgt, SolverConfig(T=T_TRANS, max_iters=400))
    TIMINGS["translation"] = time.perf_counter() - start
    return result


@pytest.fixture(scope="session")
def obstacle_result():
    start = time.perf_counter()
    mask = wall_mask()
    src, tgt = translation_endpoints(mask)
    cfg = SolverConfig(T=T_TRANS, mode=EnergyMode.balanced(mask), max_iters=300)
    result = optimize_path(src, tgt, cfg)
    TIMINGS["obstacle"] = time.perf_counter() - start
    return mask, result


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(number, passed, detail)."""

    def record(number, passed, detail):
        _ACCEPTANCE.append((number, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
