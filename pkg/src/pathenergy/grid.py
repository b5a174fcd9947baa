"""Staggered-grid structures, stencils and image preprocessing.

Densities live at cell centres of an ``n x n`` grid with unit spacing.  Momenta
live on cell faces:

* ``m1`` holds fluxes in the row direction.  Face ``f`` of column ``j`` sits
  between cells ``(f - 1, j)`` and ``(f, j)``.
* ``m2`` holds fluxes in the column direction.  Face ``f`` of row ``i`` sits
  between cells ``(i, f - 1)`` and ``(i, f)``.

With Dirichlet or Neumann boundaries there are ``n + 1`` faces per line, the
outermost two being boundary faces.  Dirichlet pins them to zero; Neumann
leaves them free, so mass may leave through the boundary.  With periodic
boundaries there are ``n`` faces per line and face 0 joins cell ``n - 1`` to
cell 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .errors import IncompatibleSize, ShapeMismatch, ZeroMass

DEFAULT_EPS = 1e-5


class BoundaryCondition(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    PERIODIC = "periodic"

    @classmethod
    def parse(cls, value: "BoundaryCondition | str") -> "BoundaryCondition":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown boundary condition {value!r}") from None


def faces_per_line(n: int, bc: BoundaryCondition) -> int:
    return n if bc is BoundaryCondition.PERIODIC else n + 1


@dataclass(frozen=True)
class StaggeredField:
    """Face-centred vector field ``(m1, m2)``."""

    m1: np.ndarray
    m2: np.ndarray

    @property
    def n(self) -> int:
        return self.m1.shape[1]

    def ravel(self) -> np.ndarray:
        return np.concatenate([self.m1.ravel(), self.m2.ravel()])

    @classmethod
    def from_flat(cls, v: np.ndarray, n: int, bc: BoundaryCondition) -> "StaggeredField":
        k = faces_per_line(n, bc)
        v = np.asarray(v, dtype=float)
        if v.shape != (2 * k * n,):
            raise ShapeMismatch(f"expected {2 * k * n} face values, got {v.shape}")
        return cls(v[: k * n].reshape(k, n), v[k * n :].reshape(n, k))

    @classmethod
    def zeros(cls, n: int, bc: BoundaryCondition) -> "StaggeredField":
        k = faces_per_line(n, bc)
        return cls(np.zeros((k, n)), np.zeros((n, k)))

    def inner(self, other: "StaggeredField") -> float:
        return float(np.sum(self.m1 * other.m1) + np.sum(self.m2 * other.m2))


def _check_field(m: StaggeredField, bc: BoundaryCondition) -> int:
    n = m.m1.shape[1]
    k = faces_per_line(n, bc)
    if m.m1.shape != (k, n) or m.m2.shape != (n, k):
        raise ShapeMismatch(
            f"m1 {m.m1.shape} and m2 {m.m2.shape} do not describe one {bc.value} grid"
        )
    if n < 2:
        raise ShapeMismatch("grid side must be at least 2")
    return n


def divergence(m: StaggeredField, bc: BoundaryCondition | str = "dirichlet") -> np.ndarray:
    """Cell-centred divergence ``m1[i+1,j] - m1[i,j] + m2[i,j+1] - m2[i,j]``."""
    bc = BoundaryCondition.parse(bc)
    _check_field(m, bc)
    if bc is BoundaryCondition.PERIODIC:
        return (
            np.roll(m.m1, -1, axis=0) - m.m1 + np.roll(m.m2, -1, axis=1) - m.m2
        )
    return m.m1[1:] - m.m1[:-1] + m.m2[:, 1:] - m.m2[:, :-1]


def face_gradient(y: np.ndarray, bc: BoundaryCondition | str = "dirichlet") -> StaggeredField:
    """Adjoint of :func:`divergence`: each face carries ``y[lower] - y[upper]``.

    Under Dirichlet boundaries the boundary faces are not unknowns and are
    returned as zeros.
    """
    bc = BoundaryCondition.parse(bc)
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[0] != y.shape[1]:
        raise ShapeMismatch(f"expected a square grid, got {y.shape}")
    n = y.shape[0]
    if bc is BoundaryCondition.PERIODIC:
        return StaggeredField(np.roll(y, 1, axis=0) - y, np.roll(y, 1, axis=1) - y)
    g1 = np.zeros((n + 1, n))
    g2 = np.zeros((n, n + 1))
    g1[1:-1] = y[:-1] - y[1:]
    g2[:, 1:-1] = y[:, :-1] - y[:, 1:]
    if bc is BoundaryCondition.NEUMANN:
        g1[0], g1[-1] = -y[0], y[-1]
        g2[:, 0], g2[:, -1] = -y[:, 0], y[:, -1]
    return StaggeredField(g1, g2)


def _face_cells(n: int, bc: BoundaryCondition) -> tuple[np.ndarray, np.ndarray]:
    """Flat cell index on the lower and upper side of every face, -1 if absent.

    Face order matches :meth:`StaggeredField.ravel`.
    """
    k = faces_per_line(n, bc)
    f = np.arange(k)
    if bc is BoundaryCondition.PERIODIC:
        lo_line, hi_line = (f - 1) % n, f
    else:
        lo_line = np.where(f >= 1, f - 1, -1)
        hi_line = np.where(f <= n - 1, f, -1)
    # m1: faces indexed (f, j), cells (line, j)
    ff, jj = np.meshgrid(np.arange(k), np.arange(n), indexing="ij")
    lo1 = np.where(lo_line[ff] >= 0, lo_line[ff] * n + jj, -1).ravel()
    hi1 = np.where(hi_line[ff] >= 0, hi_line[ff] * n + jj, -1).ravel()
    # m2: faces indexed (i, f), cells (i, line)
    ii, ff = np.meshgrid(np.arange(n), np.arange(k), indexing="ij")
    lo2 = np.where(lo_line[ff] >= 0, ii * n + lo_line[ff], -1).ravel()
    hi2 = np.where(hi_line[ff] >= 0, ii * n + hi_line[ff], -1).ravel()
    return np.concatenate([lo1, lo2]), np.concatenate([hi1, hi2])


def divergence_matrix(n: int, bc: BoundaryCondition | str = "dirichlet") -> sps.csr_matrix:
    """Sparse ``n^2 x n_faces`` matrix of :func:`divergence` on flattened fields.

    Dirichlet boundary faces keep their columns; callers give them zero weight.
    """
    bc = BoundaryCondition.parse(bc)
    lo, hi = _face_cells(n, bc)
    faces = np.arange(lo.size)
    rows = np.concatenate([lo[lo >= 0], hi[hi >= 0]])
    cols = np.concatenate([faces[lo >= 0], faces[hi >= 0]])
    vals = np.concatenate([np.ones(np.count_nonzero(lo >= 0)), -np.ones(np.count_nonzero(hi >= 0))])
    return sps.csr_matrix((vals, (rows, cols)), shape=(n * n, lo.size))


def face_average_matrix(
    n: int,
    bc: BoundaryCondition | str = "dirichlet",
    obstacle: np.ndarray | None = None,
) -> sps.csr_matrix:
    """Sparse map from cell densities to face mobilities ``u = 1 / w``.

    Interior faces average their two cells.  Neumann boundary faces take the
    single adjacent cell (one-sided weight ``2 / (2 rho)``).  Dirichlet
    boundary faces and every face touching an obstacle cell get a zero row,
    which removes that momentum unknown.
    """
    bc = BoundaryCondition.parse(bc)
    lo, hi = _face_cells(n, bc)
    both = (lo >= 0) & (hi >= 0)
    keep = both.copy()
    if bc is BoundaryCondition.NEUMANN:
        keep |= (lo >= 0) ^ (hi >= 0)
    if obstacle is not None:
        blocked = check_mask(obstacle, n).ravel()
        keep &= ~((lo >= 0) & blocked[np.maximum(lo, 0)])
        keep &= ~((hi >= 0) & blocked[np.maximum(hi, 0)])
    faces = np.arange(lo.size)
    rows, cols, vals = [], [], []
    for side in (lo, hi):
        sel = keep & (side >= 0)
        rows.append(faces[sel])
        cols.append(side[sel])
        vals.append(np.where(both[sel], 0.5, 1.0))
    return sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(lo.size, n * n),
    )


def blocked_faces(
    n: int, bc: BoundaryCondition | str = "dirichlet", obstacle: np.ndarray | None = None
) -> StaggeredField:
    """Boolean field marking faces whose momentum is structurally zero."""
    bc = BoundaryCondition.parse(bc)
    P = face_average_matrix(n, bc, obstacle)
    flags = np.diff(P.indptr) == 0
    k = faces_per_line(n, bc)
    return StaggeredField(flags[: k * n].reshape(k, n), flags[k * n :].reshape(n, k))


def check_mask(mask: np.ndarray | None, n: int) -> np.ndarray:
    if mask is None:
        return np.zeros((n, n), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n, n):
        raise ShapeMismatch(f"obstacle mask {mask.shape} does not match grid ({n}, {n})")
    return mask


def downsample(x: np.ndarray, target_n: int) -> np.ndarray:
    """Block-average pooling to ``target_n x target_n``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if target_n <= 0 or n % target_n:
        raise IncompatibleSize(f"target size {target_n} does not divide {n}")
    k = n // target_n
    return x.reshape(target_n, k, target_n, k).mean(axis=(1, 3))


def threshold(x: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    if eps <= 0:
        raise ValueError("eps must be positive")
    return np.maximum(np.asarray(x, dtype=float), eps)


def normalize_mass(x: np.ndarray, target_mass: float = 1.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    total = x.sum()
    if total == 0:
        raise ZeroMass("cannot normalize a grid with zero mass")
    return x * (target_mass / total)
