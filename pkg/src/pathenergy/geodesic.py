"""Minimal-energy interpolation between two images by direct path optimization.

The interior slices of the path are the unknowns.  Projected gradient descent
with an Armijo backtracking line search minimizes ``J + beta * MassLoss``;
after every step the slices are projected back onto ``rho >= eps`` (and, for
balanced transport, onto the linear mass schedule).

Steps are taken along the gradient scaled by the current density.  The energy
is far stiffer where the density is small, and without the scaling those
cells throttle the step size for the whole path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .energy import (
    BALANCED,
    EnergyMode,
    energy_and_gradient,
    mass_loss,
    mass_loss_gradient,
    mass_schedule,
)
from .errors import ShapeMismatch, ZeroMass
from .grid import DEFAULT_EPS, BoundaryCondition, check_mask, threshold

log = logging.getLogger(__name__)

T_MIN, T_MAX = 4, 30


@dataclass
class SolverConfig:
    T: int | None = None
    eps: float = DEFAULT_EPS
    bc: BoundaryCondition | str = BoundaryCondition.DIRICHLET
    mode: EnergyMode = BALANCED
    beta: float = 0.0
    max_iters: int = 500
    step0: float = 1.0
    tol_rel: float = 1e-6
    patience: int = 3
    seed: int = 0
    armijo_c: float = 1e-4
    min_step: float = 1e-12
    solver: str = "direct"

    def __post_init__(self):
        self.bc = BoundaryCondition.parse(self.bc)
        if self.T is not None and self.T < 1:
            raise ValueError("T must be at least 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if not self.step0 > 0 or not self.tol_rel >= 0:
            raise ValueError("step0 must be positive and tol_rel nonnegative")


@dataclass
class GeodesicResult:
    path: np.ndarray
    J_final: float
    mass_loss_final: float
    iterations: int
    converged: bool
    energy_trace: list[float] = field(default_factory=list)
    loss_trace: list[float] = field(default_factory=list)
    per_slice_energy: np.ndarray | None = None

    @property
    def T(self) -> int:
        return self.path.shape[0] - 1


def centroid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    mass = x.sum()
    if mass == 0:
        raise ZeroMass("centroid of a grid with zero mass")
    i, j = np.indices(x.shape)
    return np.array([(i * x).sum(), (j * x).sum()]) / mass


def choose_T(source: np.ndarray, target: np.ndarray) -> int:
    """Number of time steps: the centroid travel distance in pixels, clamped to [4, 30]."""
    d = float(np.linalg.norm(centroid(target) - centroid(source)))
    # absorb round-off so an exact 10 px shift gives 10, not 11
    return int(min(max(math.ceil(d - 1e-6), T_MIN), T_MAX))


def preprocess(
    x: np.ndarray,
    eps: float = DEFAULT_EPS,
    obstacle: np.ndarray | None = None,
    target_mass: float | None = None,
) -> np.ndarray:
    """Threshold at ``eps``, pin obstacle cells to ``eps``, optionally fix the mass.

    Mass normalization rescales only the excess above ``eps``, so thresholded
    and obstacle cells keep exactly ``eps``.
    """
    x = threshold(x, eps)
    mask = check_mask(obstacle, x.shape[0])
    x[mask] = eps
    if target_mass is not None:
        excess = x - eps
        total = excess.sum()
        room = target_mass - eps * x.size
        if total <= 0 or room <= 0:
            raise ZeroMass(f"cannot reach mass {target_mass} above the eps floor")
        x = eps + excess * (room / total)
        x[mask] = eps
    return x


def init_path(source: np.ndarray, target: np.ndarray, T: int, eps: float = DEFAULT_EPS) -> np.ndarray:
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    if source.shape != target.shape:
        raise ShapeMismatch(f"source {source.shape} and target {target.shape} differ")
    frac = (np.arange(T + 1) / T)[:, None, None]
    return threshold(source + frac * (target - source), eps)


def project_capped(v: np.ndarray, lower: float, total: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{x >= lower, sum(x) = total}``."""
    c = np.sort(v.ravel() - lower)[::-1]
    room = total - lower * v.size
    if room < 0:
        raise ValueError("requested total lies below the floor")
    csum = np.cumsum(c)
    k = np.arange(1, c.size + 1)
    shift = (csum - room) / k
    valid = c - shift > 0
    if not valid.any():
        return np.full_like(v, lower + room / v.size)
    r = np.flatnonzero(valid)[-1]
    return np.maximum(v - lower - shift[r], 0.0) + lower


class _Projector:
    def __init__(self, T: int, n: int, eps: float, mask: np.ndarray, masses: np.ndarray | None):
        self.eps = eps
        self.mask = mask
        self.free = ~mask
        self.masses = masses  # per interior slice, or None for clamp-only

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = np.maximum(x, self.eps)
        out[:, self.mask] = self.eps
        if self.masses is not None:
            nfixed = np.count_nonzero(self.mask)
            for k in range(out.shape[0]):
                free_total = self.masses[k] - nfixed * self.eps
                if x[k].min() >= self.eps and abs(out[k][self.free].sum() - free_total) <= 1e-14 * free_total:
                    continue
                out[k][self.free] = project_capped(x[k][self.free], self.eps, free_total)
        return out


def _scaled_direction(x, g, mask, balanced):
    """Descent direction ``-rho * (g - lambda)`` in the density-weighted metric.

    ``lambda`` is the density-weighted mean gradient of each slice, so in
    balanced mode the direction carries no net mass.  Obstacle cells stay put.
    """
    w = np.where(mask, 0.0, x)
    if balanced:
        lam = (w * g).sum(axis=(1, 2), keepdims=True) / w.sum(axis=(1, 2), keepdims=True)
        return -w * (g - lam)
    return -w * g


def optimize_path(
    source: np.ndarray,
    target: np.ndarray,
    cfg: SolverConfig | None = None,
    callback=None,
) -> GeodesicResult:
    """Minimize the path energy over the interior slices of a path.

    ``source`` and ``target`` should already be preprocessed; thresholding and
    obstacle clamping are reapplied here and are no-ops on such inputs.
    """
    cfg = cfg or SolverConfig()
    mode = cfg.mode
    n = np.asarray(source).shape[0]
    mask = check_mask(mode.obstacle, n)
    source = threshold(source, cfg.eps)
    target = threshold(target, cfg.eps)
    if source.shape != target.shape:
        raise ShapeMismatch(f"source {source.shape} and target {target.shape} differ")
    source[mask] = cfg.eps
    target[mask] = cfg.eps
    T = cfg.T if cfg.T is not None else choose_T(source, target)

    m_src, m_tgt = float(source.sum()), float(target.sum())
    path = init_path(source, target, T, cfg.eps)
    path[0], path[-1] = source, target
    schedule = mass_schedule(T, m_src, m_tgt)[1:-1]
    project = _Projector(T, n, cfg.eps, mask, None if mode.is_unbalanced else schedule)

    def evaluate(interior):
        full = np.concatenate([source[None], interior, target[None]])
        report, g = energy_and_gradient(full, cfg.bc, mode, solver=cfg.solver)
        ml = mass_loss(full, m_src, m_tgt)
        if cfg.beta:
            g = g + cfg.beta * mass_loss_gradient(full, m_src, m_tgt)
        g[:, mask] = 0.0
        return report, ml, report.J + cfg.beta * ml, g

    x = project(path[1:-1]) if T > 1 else path[1:-1]
    report, ml, L, g = evaluate(x)
    energy_trace, loss_trace = [report.J], [L]
    converged = False
    it = 0
    stalls = 0
    step = cfg.step0
    if T == 1 or L == 0.0 or not np.any(g):
        converged = True
    else:
        for it in range(1, cfg.max_iters + 1):
            direction = _scaled_direction(x, g, mask, balanced=not mode.is_unbalanced)
            accepted = False
            while step >= cfg.min_step:
                x_new = project(x + step * direction)
                decrease = float(np.sum(g * (x_new - x)))
                if decrease < 0:
                    trial = evaluate(x_new)
                    if trial[2] <= L + cfg.armijo_c * decrease:
                        accepted = True
                        break
                step *= 0.5
            if not accepted:
                log.info("line search stalled at iteration %d", it)
                converged = True
                break
            report_new, ml_new, L_new, g_new = trial
            rel = (L - L_new) / max(abs(L), np.finfo(float).tiny)
            # Barzilai-Borwein step measured in the density-scaled metric
            s, yk = x_new - x, g_new - g
            sy = float(np.sum(s * yk))
            step = float(np.sum(s * s / x)) / sy if sy > 0 else 2.0 * step
            step = min(max(step, cfg.min_step), 1e12)
            x, report, ml, L, g = x_new, report_new, ml_new, L_new, g_new
            energy_trace.append(report.J)
            loss_trace.append(L)
            if callback is not None:
                callback(it, L)
            log.debug("iter %d  L=%.10g  step=%.3g", it, L, step)
            # one short Barzilai-Borwein step is not a plateau
            stalls = stalls + 1 if rel < cfg.tol_rel else 0
            if stalls >= cfg.patience:
                converged = True
                break

    path = np.concatenate([source[None], x, target[None]])
    return GeodesicResult(
        path=path,
        J_final=report.J,
        mass_loss_final=ml,
        iterations=it,
        converged=converged,
        energy_trace=energy_trace,
        loss_trace=loss_trace,
        per_slice_energy=report.per_slice_energy,
    )
