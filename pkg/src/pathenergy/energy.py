"""Path energy of a discrete density path and its gradient.

For a path ``rho_0 .. rho_T`` the energy is the least kinetic energy of any
momentum field moving each slice onto the next,

    J(rho) = sum_t  min_m  m^T Diag(w_t) m   s.t.  div m = rho_t - rho_{t+1},

with face weights ``w = 2 / (rho_a + rho_b)`` taken from the left slice
``rho_t``.  Eliminating ``m`` through the KKT conditions leaves one weighted
Poisson problem per step, ``A_t y_t = b_t`` with ``A_t = D Diag(u_t) D^T`` and
``u = 1 / w``, after which ``J_t = b_t^T y_t`` and ``m_t = u_t * D^T y_t``.

In unbalanced mode a source term ``s`` with weight ``tau / rho`` joins the
constraint (``div m + s = b``) and ``A_t`` gains ``Diag(rho_t) / tau``.
Obstacle cells remove every face they touch.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import (
    DisconnectedDomain,
    MassMismatch,
    NonPositiveDensity,
    ShapeMismatch,
    SolverDivergence,
)
from .grid import (
    BoundaryCondition,
    StaggeredField,
    check_mask,
    divergence_matrix,
    face_average_matrix,
)

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MASS_RTOL = 1e-6


@dataclass(frozen=True, eq=False)
class EnergyMode:
    """Balanced (``tau is None``) or unbalanced transport, optionally with obstacles."""

    tau: float | None = None
    obstacle: np.ndarray | None = None

    def __post_init__(self):
        if self.tau is not None and not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.obstacle is not None:
            object.__setattr__(self, "obstacle", np.asarray(self.obstacle, dtype=bool))

    @classmethod
    def balanced(cls, obstacle: np.ndarray | None = None) -> "EnergyMode":
        return cls(None, obstacle)

    @classmethod
    def unbalanced(cls, tau: float, obstacle: np.ndarray | None = None) -> "EnergyMode":
        return cls(float(tau), obstacle)

    @property
    def is_unbalanced(self) -> bool:
        return self.tau is not None


BALANCED = EnergyMode()


@dataclass(frozen=True)
class WeightField:
    """Interior face weights ``2 / (rho_a + rho_b)``."""

    w1: np.ndarray
    w2: np.ndarray


def _check_density(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ShapeMismatch(f"expected a square density grid, got {rho.shape}")
    if not np.all(rho > 0):
        raise NonPositiveDensity("densities must be strictly positive; threshold first")
    return rho


def compute_weights(rho: np.ndarray) -> WeightField:
    rho = _check_density(rho)
    return WeightField(2.0 / (rho[:-1] + rho[1:]), 2.0 / (rho[:, :-1] + rho[:, 1:]))


@functools.lru_cache(maxsize=32)
def _operators(n: int, bc: BoundaryCondition, mask_bytes: bytes | None):
    mask = None
    if mask_bytes is not None:
        mask = np.unpackbits(np.frombuffer(mask_bytes, dtype=np.uint8))[: n * n].reshape(n, n)
    D = divergence_matrix(n, bc).tocsr()
    P = face_average_matrix(n, bc, mask).tocsr()
    return D, D.T.tocsr(), P, P.T.tocsr()


def _cached_operators(n: int, bc: BoundaryCondition, mode: EnergyMode):
    mask = check_mask(mode.obstacle, n)
    packed = np.packbits(mask).tobytes() if mask.any() else None
    return _operators(n, bc, packed)


@dataclass(eq=False)
class SliceOperator:
    """Weighted Poisson operator of one time step, with its solve machinery."""

    matrix: sps.csr_matrix
    bc: BoundaryCondition
    mode: EnergyMode
    rho: np.ndarray
    mobility: np.ndarray
    divergence: sps.csr_matrix = field(repr=False)
    gradient: sps.csr_matrix = field(repr=False)
    _structure: tuple | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.rho.shape[0]

    def structure(self):
        """Connected components of the face graph and which of them float.

        A floating component has no boundary outflow and no source term, so
        ``A`` restricted to it has the constants as its null space.
        """
        if self._structure is None:
            ncomp, labels = connected_components(self.matrix, directed=False)
            ones = np.ones(self.matrix.shape[0])
            ground = self.divergence @ (self.mobility * (self.gradient @ ones))
            if self.mode.is_unbalanced:
                ground = ground + self.rho.ravel() / self.mode.tau
            comp_ground = np.bincount(labels, weights=ground, minlength=ncomp)
            floating = comp_ground <= 0
            sizes = np.bincount(labels, minlength=ncomp)
            self._structure = (labels, floating, sizes)
        return self._structure

    def momentum(self, y: np.ndarray) -> StaggeredField:
        flux = self.mobility * (self.gradient @ np.asarray(y, dtype=float).ravel())
        return StaggeredField.from_flat(flux, self.n, self.bc)


def assemble_operator(
    rho: np.ndarray,
    bc: BoundaryCondition | str = "dirichlet",
    mode: EnergyMode = BALANCED,
) -> SliceOperator:
    rho = _check_density(rho)
    bc = BoundaryCondition.parse(bc)
    n = rho.shape[0]
    D, G, P, _ = _cached_operators(n, bc, mode)
    u = P @ rho.ravel()
    A = (D @ sps.diags(u) @ G).tocsr()
    if mode.is_unbalanced:
        A = A + sps.diags(rho.ravel() / mode.tau)
    A = A.tocsr()
    A.eliminate_zeros()
    return SliceOperator(A, bc, mode, rho, u, D, G)


def solve_slice(
    op: SliceOperator,
    b: np.ndarray,
    tol: float = DEFAULT_TOL,
    mass_tol: float | None = None,
    solver: str = "direct",
) -> np.ndarray:
    """Solve ``A y = b``; floating components return zero-mean ``y``.

    In balanced mode ``b`` must sum to zero on every floating component
    (mass conservation); otherwise :class:`MassMismatch` is raised.
    """
    b = np.asarray(b, dtype=float)
    n = op.n
    if b.shape != (n, n):
        raise ShapeMismatch(f"right-hand side {b.shape} does not match grid ({n}, {n})")
    bv = b.ravel()
    if mass_tol is None:
        mass_tol = MASS_RTOL * (np.abs(bv).sum() + 1.0)
    bnorm = np.linalg.norm(bv)
    if bnorm == 0.0:
        return np.zeros((n, n))

    labels, floating, sizes = op.structure()
    float_cells = floating[labels]
    if floating.any():
        sums = np.bincount(labels, weights=bv, minlength=floating.size)
        bad = floating & (np.abs(sums) > mass_tol)
        if bad.any():
            worst = int(np.argmax(np.where(bad, np.abs(sums), -1)))
            msg = f"net mass change {sums[worst]:.6g} exceeds tolerance {mass_tol:.3g}"
            if np.count_nonzero(floating & (sizes > 1)) > 1:
                raise DisconnectedDomain(msg + " on a region sealed off by obstacles")
            raise MassMismatch(msg)
        means = np.where(floating, sums / sizes, 0.0)
        bv = bv - means[labels]

    A = op.matrix
    if solver == "direct":
        y = _solve_direct(A, bv, labels, floating, tol)
    elif solver == "cg":
        y = _solve_cg(A, bv, tol, maxiter=20 * n * n)
    else:
        raise ValueError(f"unknown solver {solver!r}")

    if floating.any():
        ysum = np.bincount(labels, weights=y, minlength=floating.size)
        y = y - np.where(floating, ysum / sizes, 0.0)[labels] * float_cells

    # normwise backward error; ||r|| / ||b|| alone is hostage to the
    # conditioning that near-eps densities bring
    res = np.linalg.norm(A @ y - bv)
    scale = spla.norm(A, 1) * np.linalg.norm(y) + bnorm
    if res > tol * scale:
        raise SolverDivergence(f"backward error {res / scale:.3g} above {tol:.1g}")
    return y.reshape(n, n)


def _solve_direct(A, bv, labels, floating, tol, max_refine=4):
    # pin the first cell of every floating component
    pinned = np.zeros(bv.size, dtype=bool)
    for c in np.flatnonzero(floating):
        pinned[np.argmax(labels == c)] = True
    free = np.flatnonzero(~pinned)
    y = np.zeros(bv.size)
    if free.size == 0:
        return y
    Af = A[free][:, free].tocsc()
    lu = spla.splu(Af)
    rhs = bv[free]
    yf = lu.solve(rhs)
    scale = np.linalg.norm(bv)
    for _ in range(max_refine):
        r = rhs - Af @ yf
        if np.linalg.norm(r) <= 0.01 * tol * scale:
            break
        yf = yf + lu.solve(r)
    y[free] = yf
    return y


def _solve_cg(A, bv, tol, maxiter):
    diag = A.diagonal()
    active = np.flatnonzero(diag > 0)
    y = np.zeros(bv.size)
    Aa = A[active][:, active]
    M = sps.diags(1.0 / diag[active])
    ya, info = spla.cg(Aa, bv[active], rtol=tol, atol=0.0, maxiter=maxiter, M=M)
    if info != 0:
        raise SolverDivergence(f"conjugate gradients stopped after {maxiter} iterations")
    y[active] = ya
    return y


@dataclass
class EnergyReport:
    J: float
    per_slice_energy: np.ndarray
    y: np.ndarray
    momenta: list[StaggeredField]
    source: np.ndarray | None = None
    bc: BoundaryCondition = BoundaryCondition.DIRICHLET
    mode: EnergyMode = BALANCED

    @property
    def T(self) -> int:
        return len(self.per_slice_energy)


def as_path(path) -> np.ndarray:
    path = np.asarray(path, dtype=float)
    if path.ndim != 3 or path.shape[1] != path.shape[2] or path.shape[0] < 2:
        raise ShapeMismatch(f"a path needs shape (T+1, n, n) with T >= 1, got {path.shape}")
    return path


def _slice_solves(path, bc, mode, tol, solver):
    path = as_path(path)
    bc = BoundaryCondition.parse(bc)
    ops, ys = [], []
    for t in range(path.shape[0] - 1):
        op = assemble_operator(path[t], bc, mode)
        b = path[t] - path[t + 1]
        mass_tol = MASS_RTOL * path[t].sum()
        try:
            y = solve_slice(op, b, tol=tol, mass_tol=mass_tol, solver=solver)
        except (MassMismatch, SolverDivergence) as exc:
            raise type(exc)(str(exc), slice_index=t) from None
        ops.append(op)
        ys.append(y)
    return path, bc, ops, np.array(ys)


def _report(path, bc, mode, ops, ys) -> EnergyReport:
    T = len(ops)
    per_slice = np.array([float(np.dot((path[t] - path[t + 1]).ravel(), ys[t].ravel())) for t in range(T)])
    J = 0.0
    for e in per_slice:
        J += e
    momenta = [op.momentum(y) for op, y in zip(ops, ys)]
    source = None
    if mode.is_unbalanced:
        source = path[:-1] * ys / mode.tau
    return EnergyReport(J, per_slice, ys, momenta, source, bc, mode)


def path_energy(
    path,
    bc: BoundaryCondition | str = "dirichlet",
    mode: EnergyMode = BALANCED,
    tol: float = DEFAULT_TOL,
    solver: str = "direct",
) -> EnergyReport:
    path, bc, ops, ys = _slice_solves(path, bc, mode, tol, solver)
    return _report(path, bc, mode, ops, ys)


def _gradient(path, mode, ops, ys) -> np.ndarray:
    T = len(ops)
    grad = np.zeros((T - 1,) + path.shape[1:])
    for t in range(1, T):
        op, y = ops[t], ys[t]
        _, _, P, PT = _cached_operators(op.n, op.bc, mode)
        gy = op.gradient @ y.ravel()
        g = -(PT @ (gy * gy)).reshape(y.shape)
        g += 2.0 * y - 2.0 * ys[t - 1]
        if mode.is_unbalanced:
            g -= y * y / mode.tau
        grad[t - 1] = g
    return grad


def energy_and_gradient(
    path,
    bc: BoundaryCondition | str = "dirichlet",
    mode: EnergyMode = BALANCED,
    tol: float = DEFAULT_TOL,
    solver: str = "direct",
) -> tuple[EnergyReport, np.ndarray]:
    """Energy report together with ``dJ/drho_t`` for the interior slices."""
    path, bc, ops, ys = _slice_solves(path, bc, mode, tol, solver)
    return _report(path, bc, mode, ops, ys), _gradient(path, mode, ops, ys)


def path_energy_gradient(
    path,
    bc: BoundaryCondition | str = "dirichlet",
    mode: EnergyMode = BALANCED,
    tol: float = DEFAULT_TOL,
    solver: str = "direct",
) -> np.ndarray:
    return energy_and_gradient(path, bc, mode, tol, solver)[1]


def slice_masses(path) -> np.ndarray:
    return np.abs(as_path(path)).sum(axis=(1, 2))


def mass_schedule(T: int, mass_source: float, mass_target: float) -> np.ndarray:
    """Linear mass schedule at t = 0..T, anchored to the source at t = 0."""
    frac = np.arange(T + 1) / T
    return (1.0 - frac) * mass_source + frac * mass_target


def mass_loss(path, mass_source: float, mass_target: float) -> float:
    masses = slice_masses(path)
    T = masses.size - 1
    target = mass_schedule(T, mass_source, mass_target)
    return float(np.sum(np.abs(masses[1:-1] - target[1:-1])))


def mass_loss_gradient(path, mass_source: float, mass_target: float) -> np.ndarray:
    """A subgradient of :func:`mass_loss` with respect to the interior slices."""
    path = as_path(path)
    masses = slice_masses(path)
    T = masses.size - 1
    target = mass_schedule(T, mass_source, mass_target)
    sign = np.sign(masses[1:-1] - target[1:-1])
    return sign[:, None, None] * np.sign(path[1:-1])
