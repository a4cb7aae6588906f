"""Dense linear-algebra primitives: symmetric eigendecomposition, plane
rotations and outer products.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.  The
eigensolver is a cyclic Jacobi iteration compiled with numba so that it can
also be called from inside the training kernels.
"""
from __future__ import annotations

from typing import NamedTuple

import numba
import numpy as np

from .exceptions import DimensionError, InvalidAxisError, NumericError

SYMMETRY_TOL = 1e-10
OFFDIAG_TOL = 1e-12
MAX_SWEEPS = 100


class SymmetricEigenResult(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns are eigenvectors


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a finite 2-D float64 array or raise."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name} contains non-finite entries")
    return a


def as_vector(v, name: str = "vector") -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name} contains non-finite entries")
    return a


@numba.njit(cache=True, nogil=True)
def jacobi_eigh(m, tol, max_sweeps):
    """Cyclic Jacobi iteration on a copy of the symmetric matrix ``m``.

    Returns the (unsorted) eigenvalues, the eigenvector matrix and the
    number of sweeps used.  Iteration stops once the off-diagonal Frobenius
    norm falls below ``tol * max(1, ||m||_F)``.
    """
    n = m.shape[0]
    a = m.copy()
    v = np.eye(n)
    scale = max(1.0, np.sqrt(np.sum(a * a)))
    sweeps = 0
    while sweeps < max_sweeps:
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if np.sqrt(2.0 * off) < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                a[p, p] -= t * apq
                a[q, q] += t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for r in range(n):
                    if r != p and r != q:
                        arp = a[r, p]
                        arq = a[r, q]
                        a[r, p] = c * arp - s * arq
                        a[p, r] = a[r, p]
                        a[r, q] = s * arp + c * arq
                        a[q, r] = a[r, q]
                for r in range(n):
                    vrp = v[r, p]
                    vrq = v[r, q]
                    v[r, p] = c * vrp - s * vrq
                    v[r, q] = s * vrp + c * vrq
        sweeps += 1
    w = np.empty(n)
    for k in range(n):
        w[k] = a[k, k]
    return w, v, sweeps


@numba.njit(cache=True, nogil=True)
def min_eigenvalue(m):
    w, _, _ = jacobi_eigh(m, OFFDIAG_TOL, MAX_SWEEPS)
    return w.min()


def sym_eigen(m) -> SymmetricEigenResult:
    """Eigendecomposition of a real symmetric matrix.

    Eigenvalues come back in descending order (ties keep their original
    diagonal position).  Each eigenvector is signed so that its
    largest-magnitude component is positive.
    """
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"matrix must be square, got shape {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL:
        raise DimensionError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    w, v, sweeps = jacobi_eigh(a, OFFDIAG_TOL, MAX_SWEEPS)
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]
    for k in range(v.shape[1]):
        col = v[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            v[:, k] = -col
    return SymmetricEigenResult(w, v)


def rotation_in_plane(d: int, i: int, j: int, alpha: float) -> np.ndarray:
    """d x d identity with a rotation by ``alpha`` in the (i, j) plane."""
    if i == j:
        raise InvalidAxisError("rotation axes must differ")
    if not (0 <= i < d and 0 <= j < d):
        raise InvalidAxisError(f"axes ({i}, {j}) out of range for d={d}")
    q = np.eye(d)
    c, s = np.cos(alpha), np.sin(alpha)
    q[i, i] = c
    q[i, j] = -s
    q[j, i] = s
    q[j, j] = c
    return q


def outer_product(u, v) -> np.ndarray:
    return np.outer(as_vector(u, "u"), as_vector(v, "v"))
