"""Dense linear-algebra helpers shared by the pricing code.

Matrices are plain ``numpy`` arrays.  An "orthonormal basis" is an ``(n, d)``
array with ``n >= d`` whose columns are orthonormal; no wrapper type is used.
"""

from typing import NamedTuple

import numpy as np

ORTHONORMAL_TOL = 1e-10
RANK_TOL = 1e-10


class SvdResult(NamedTuple):
    left: np.ndarray
    values: np.ndarray
    right: np.ndarray


def as_matrix(m, name="matrix"):
    """Return ``m`` as a finite 2-D float array, raising ``ValueError`` otherwise."""
    a = np.asarray(m, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def is_orthonormal(basis, tol=ORTHONORMAL_TOL):
    b = np.asarray(basis, dtype=float)
    if b.ndim != 2 or b.shape[0] < b.shape[1]:
        return False
    gram = b.T @ b
    return bool(np.max(np.abs(gram - np.eye(b.shape[1]))) <= tol)


def orthonormalize(m):
    """Orthonormal basis for the column space of ``m``.

    Uses modified Gram-Schmidt with a second (re-orthogonalization) pass, so
    the result is deterministic and independent of the LAPACK build.  The
    columns of the result follow the order of the columns of ``m``.

    Raises
    ------
    ValueError
        If ``m`` is numerically rank deficient, i.e. its smallest singular
        value is at most ``1e-10`` times the largest.
    """
    a = as_matrix(m)
    n, d = a.shape
    if d > n:
        raise ValueError(f"cannot orthonormalize {d} columns in R^{n}: {d - n} columns are rank deficient")
    s = np.linalg.svd(a, compute_uv=False)
    rank = int(np.sum(s > RANK_TOL * s[0])) if s[0] > 0 else 0
    if rank < d:
        raise ValueError(f"matrix is rank deficient: {d - rank} of {d} columns are linearly dependent")

    q = a.copy()
    for j in range(d):
        v = q[:, j]
        for _ in range(2):
            for i in range(j):
                v -= (q[:, i] @ v) * q[:, i]
        q[:, j] = v / np.linalg.norm(v)
    return q


def thin_svd(m):
    """Thin SVD ``m = left @ diag(values) @ right.T`` with ``k = min(rows, cols)``.

    Singular values are nonincreasing.  Signs of singular vectors are whatever
    LAPACK returns; callers must only rely on spans.
    """
    a = as_matrix(m)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return SvdResult(u, s, vt.T)


def top_left_singular_vectors(m, d):
    """First ``d`` left singular vectors of ``m`` (descending singular values)."""
    return thin_svd(m).left[:, :d]


def subspace_distance(a, b):
    """Frobenius norm of the sines of the principal angles between two spans.

    Equals ``sqrt(d - ||a.T @ b||_F**2)`` for orthonormal ``a`` and ``b``; the
    value lies in ``[0, sqrt(d)]`` and is zero iff the spans coincide.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape != b.shape:
        raise ValueError(f"basis shapes differ: {a.shape} vs {b.shape}")
    d = a.shape[1]
    overlap = np.linalg.norm(a.T @ b, "fro") ** 2
    return float(np.sqrt(max(d - overlap, 0.0)))


def project_strongly_pd(v, lam):
    """Frobenius-nearest ``W`` with ``W.T + W >= lam * I``.

    The constraint only involves the symmetric part, so the projection clips
    the eigenvalues of ``(v + v.T) / 2`` from below at ``lam / 2`` and keeps
    the skew-symmetric part untouched.
    """
    v = as_matrix(v, "v")
    if v.shape[0] != v.shape[1]:
        raise ValueError(f"v must be square, got shape {v.shape}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    sym = (v + v.T) / 2
    skew = (v - v.T) / 2
    w, q = np.linalg.eigh(sym)
    # already feasible up to eigensolver round-off: leave untouched
    if w[0] >= lam / 2 - 1e-13 * max(1.0, float(np.max(np.abs(w)))):
        return v.copy()
    w = np.maximum(w, lam / 2)
    clipped = (q * w) @ q.T
    clipped = (clipped + clipped.T) / 2
    return clipped + skew


def min_sym_eigenvalue(v):
    """Smallest eigenvalue of ``v.T + v``."""
    v = np.asarray(v, dtype=float)
    return float(np.linalg.eigvalsh(v + v.T)[0])


def random_orthogonal(n, d, rng):
    """Haar-random ``(n, d)`` orthonormal basis.

    Orthonormalizing a matrix of independent standard normals gives the
    uniform distribution on the Stiefel manifold.
    """
    if d < 1 or n < d:
        raise ValueError(f"need n >= d >= 1, got n={n}, d={d}")
    while True:
        g = rng.standard_normal((n, d))
        try:
            return orthonormalize(g)
        except ValueError:  # probability zero; redraw
            continue


def unit_sphere_sample(d, rng):
    """Uniform sample from the unit sphere in ``R^d``."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    while True:
        g = rng.standard_normal(d)
        nrm = np.linalg.norm(g)
        if nrm > 0:
            return g / nrm
