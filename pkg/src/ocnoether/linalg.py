"""Nullspaces of small dense systems, exact where the data allow."""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def rref(rows, ncols):
    """Reduced row echelon form over the rationals.

    Returns ``(R, pivots)`` with ``R`` a list of Fraction rows (zero rows
    dropped) and ``pivots`` the pivot column of each row.
    """
    A = [[Fraction(v) for v in row] for row in rows]
    pivots = []
    r = 0
    for c in range(ncols):
        if r == len(A):
            break
        p = next((i for i in range(r, len(A)) if A[i][c] != 0), None)
        if p is None:
            continue
        A[r], A[p] = A[p], A[r]
        inv = 1 / A[r][c]
        A[r] = [v * inv for v in A[r]]
        for i in range(len(A)):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [vi - f * vr for vi, vr in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
    return A[:r], pivots


def nullspace_rational(rows, ncols):
    """Basis of {v : A v = 0} as Fraction lists, one per free column."""
    if not rows:
        return [[Fraction(int(i == j)) for j in range(ncols)] for i in range(ncols)]
    R, pivots = rref(rows, ncols)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for row, pc in zip(R, pivots):
            v[pc] = -row[f]
        basis.append(v)
    return basis


def nullspace_float(A, tol: float = 1e-10):
    """Float nullspace via SVD, returned in reduced echelon form.

    Singular values below ``tol`` (relative to the largest, with an
    absolute floor of ``tol``) count as zero.  Returning the echelon form
    of the null basis makes the result independent of the SVD's choice
    of orthonormal vectors.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    ncols = A.shape[1]
    if A.size == 0 or not np.any(A):
        return [np.eye(ncols)[i] for i in range(ncols)]
    _, s, vt = np.linalg.svd(A)
    cutoff = max(tol, tol * (s[0] if s.size else 0.0))
    rank = int(np.sum(s > cutoff))
    N = vt[rank:]
    if N.shape[0] == 0:
        return []
    # echelon form with partial pivoting
    N = N.copy()
    k = N.shape[0]
    r = 0
    for c in range(ncols):
        if r == k:
            break
        p = r + int(np.argmax(np.abs(N[r:, c])))
        if abs(N[p, c]) < 1e-8:
            continue
        N[[r, p]] = N[[p, r]]
        N[r] /= N[r, c]
        for i in range(k):
            if i != r:
                N[i] -= N[i, c] * N[r]
        r += 1
    N[np.abs(N) < 1e-12] = 0.0
    return [row for row in N[:r]]
