"""Dense brute-force references for the sparse energy machinery.

Everything here is built from explicit loops and dense linear algebra and
shares no assembly code with :mod:`pathenergy.energy`.  The per-step problem
is solved in its original saddle-point form

    [ Diag(w)  D^T ] [ m      ]   [ 0 ]
    [ D        0   ] [ lambda ] = [ b ]

with ``lstsq``, so the momentum is recovered without ever forming the
weighted Poisson operator.  Meant for small grids only (n <= 10).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla


def _faces(n: int, bc: str) -> list[tuple[int | None, int | None]]:
    """(lower cell, upper cell) for every face, in m1-then-m2 order."""
    faces = []
    periodic = bc == "periodic"
    nf = n if periodic else n + 1
    for f in range(nf):
        for j in range(n):
            lo = (f - 1) % n if periodic else (f - 1 if f >= 1 else None)
            hi = f if f < n else None
            faces.append((None if lo is None else lo * n + j, None if hi is None else hi * n + j))
    for i in range(n):
        for f in range(nf):
            lo = (f - 1) % n if periodic else (f - 1 if f >= 1 else None)
            hi = f if f < n else None
            faces.append((None if lo is None else i * n + lo, None if hi is None else i * n + hi))
    return faces


def dense_system(rho: np.ndarray, bc: str = "dirichlet", obstacle=None):
    """Dense divergence over the active faces and their mobilities ``u = 1 / w``.

    Returns ``(D, u, active)`` where ``active`` indexes the full face list.
    """
    bc = getattr(bc, "value", bc)
    rho = np.asarray(rho, dtype=float)
    n = rho.shape[0]
    flat = rho.ravel()
    blocked = np.zeros(n * n, dtype=bool) if obstacle is None else np.asarray(obstacle, bool).ravel()
    cols, u, active = [], [], []
    for k, (lo, hi) in enumerate(_faces(n, bc)):
        if lo is None or hi is None:
            if bc != "neumann":
                continue
            cell = lo if hi is None else hi
            if blocked[cell]:
                continue
            weight = 2.0 / (2.0 * flat[cell])
        else:
            if blocked[lo] or blocked[hi]:
                continue
            weight = 2.0 / (flat[lo] + flat[hi])
        col = np.zeros(n * n)
        if lo is not None:
            col[lo] += 1.0
        if hi is not None:
            col[hi] -= 1.0
        cols.append(col)
        u.append(1.0 / weight)
        active.append(k)
    D = np.array(cols).T if cols else np.zeros((n * n, 0))
    return D, np.array(u), np.array(active, dtype=int)


def dense_slice_energy(rho_t, rho_next, bc="dirichlet", tau=None, obstacle=None) -> float:
    """Minimum kinetic (plus source) cost of one step via the dense KKT system.

    The right-hand side is first projected onto the range of the constraint
    operator, which matches the pseudo-inverse closed form for inconsistent
    balanced data.
    """
    rho_t = np.asarray(rho_t, dtype=float)
    b = (rho_t - np.asarray(rho_next, dtype=float)).ravel()
    D, u, _ = dense_system(rho_t, bc, obstacle)
    w = 1.0 / u
    if tau is not None:
        D = np.hstack([D, np.eye(b.size)])
        w = np.concatenate([w, tau / rho_t.ravel()])
    Q = sla.orth(D)
    b = Q @ (Q.T @ b)
    nm, nc = D.shape[1], D.shape[0]
    K = np.zeros((nm + nc, nm + nc))
    K[:nm, :nm] = np.diag(w)
    K[:nm, nm:] = D.T
    K[nm:, :nm] = D
    rhs = np.concatenate([np.zeros(nm), b])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    m = sol[:nm]
    return float(m @ (w * m))


def dense_path_energy(path, bc="dirichlet", tau=None, obstacle=None) -> float:
    path = np.asarray(path, dtype=float)
    return float(sum(
        dense_slice_energy(path[t], path[t + 1], bc, tau, obstacle) for t in range(path.shape[0] - 1)
    ))


def fd_gradient(path, bc="dirichlet", tau=None, obstacle=None, step=1e-5) -> np.ndarray:
    """Central differences of :func:`dense_path_energy` for every interior cell.

    Only the two steps touching slice ``t`` change when it is perturbed, so
    only those are re-evaluated; the remaining terms cancel exactly.
    Obstacle cells are held fixed and get a zero entry.
    """
    if not 1e-7 <= step <= 1e-4:
        raise ValueError("finite-difference step must lie in [1e-7, 1e-4]")
    path = np.array(path, dtype=float)
    T = path.shape[0] - 1
    grad = np.zeros((T - 1,) + path.shape[1:])

    def local(p, t):
        return (dense_slice_energy(p[t - 1], p[t], bc, tau, obstacle)
                + dense_slice_energy(p[t], p[t + 1], bc, tau, obstacle))

    for t in range(1, T):
        for idx in np.ndindex(*path.shape[1:]):
            if obstacle is not None and obstacle[idx]:
                continue
            orig = path[t][idx]
            path[t][idx] = orig + step
            fp = local(path, t)
            path[t][idx] = orig - step
            fm = local(path, t)
            path[t][idx] = orig
            grad[t - 1][idx] = (fp - fm) / (2 * step)
    return grad
