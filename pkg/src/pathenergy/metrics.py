"""Sequence quality metrics: adjacent-frame SSIM and the transport-cost estimate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .energy import EnergyReport, as_path
from .errors import ShapeMismatch


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _filter_valid(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    win = sliding_window_view(x, w.shape)
    return np.einsum("ijkl,kl->ij", win, w)


def ssim(a: np.ndarray, b: np.ndarray, p: SsimParams = SsimParams()) -> float:
    """Mean SSIM over all valid window positions (no padding).

    Images smaller than the window use a window as wide as the image.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeMismatch(f"cannot compare images of shape {a.shape} and {b.shape}")
    size = min(p.window, *a.shape)
    w = gaussian_window(size, p.sigma)
    c1 = (p.k1 * p.data_range) ** 2
    c2 = (p.k2 * p.data_range) ** 2

    mu_a, mu_b = _filter_valid(a, w), _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a * mu_a
    var_b = _filter_valid(b * b, w) - mu_b * mu_b
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim_sequence(path, p: SsimParams = SsimParams()) -> tuple[float, float, np.ndarray]:
    """SSIM of every adjacent pair; returns (mean, population std, per-pair)."""
    path = as_path(path)
    per_pair = np.array([ssim(path[t], path[t + 1], p) for t in range(path.shape[0] - 1)])
    return float(per_pair.mean()), float(per_pair.std()), per_pair


def w2_estimate(report: EnergyReport, T: int | None = None) -> float:
    """Squared transport distance implied by a minimized path: ``T * J``.

    With unit grid spacing and unit time steps a rigid shift by ``d`` pixels
    costs ``mass * (d / T)**2`` per step, so ``T * J`` recovers ``mass * d**2``.
    """
    if T is None:
        T = report.T
    return T * report.J


@dataclass
class SequenceMetrics:
    masses: np.ndarray
    ssim_pairs: np.ndarray
    ssim_mean: float
    ssim_std: float
    w2: float | None


def sequence_metrics(path, report: EnergyReport | None = None, p: SsimParams = SsimParams()) -> SequenceMetrics:
    path = as_path(path)
    mean, std, pairs = ssim_sequence(path, p)
    w2 = w2_estimate(report, path.shape[0] - 1) if report is not None else None
    return SequenceMetrics(path.sum(axis=(1, 2)), pairs, mean, std, w2)
