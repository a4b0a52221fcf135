"""Rank-revealing decompositions with a deterministic sign convention."""

import numpy as np


def _sign_fix(vectors):
    """Signs that make the first non-negligible component of each column positive."""
    V = np.asarray(vectors)
    if V.size == 0:
        return np.ones(V.shape[1] if V.ndim == 2 else 0)
    absV = np.abs(V)
    mask = absV > 1e-12 * np.maximum(absV.max(axis=0), 1e-300)
    first = np.argmax(mask, axis=0)
    lead = V[first, np.arange(V.shape[1])]
    return np.where(mask.any(axis=0) & (lead < 0), -1.0, 1.0)


def svd(M):
    """Full SVD ``M = U diag(s) Vt`` with right singular vectors sign-normalized.

    Left singular vectors paired with nonzero singular values are flipped
    together with their right partners so the factorization still holds.
    """
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M, full_matrices=True)
    V = Vt.T
    k = s.size
    sv = _sign_fix(V)
    V = V * sv
    U = U.copy()
    U[:, :k] *= sv[:k]
    su = np.ones(U.shape[1])
    su[k:] = _sign_fix(U[:, k:])
    U[:, k:] *= su[k:]
    return U, s, V.T


def numerical_rank(s, rtol, scale=None):
    """Count singular values above ``rtol * scale`` (``scale`` defaults to max s)."""
    if s.size == 0:
        return 0
    ref = s[0] if scale is None else scale
    if ref <= 0:
        return 0
    return int(np.count_nonzero(s > rtol * ref))


def null_space(M, rtol=1e-9, scale=None):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    U, s, Vt = svd(M)
    r = numerical_rank(s, rtol, scale)
    return Vt[r:].T.copy()


def image_basis(M, rtol=1e-9, scale=None):
    U, s, _ = svd(M)
    r = numerical_rank(s, rtol, scale)
    return U[:, :r].copy()


def projector(basis):
    """Orthogonal projector onto the span of orthonormal columns."""
    return basis @ basis.T


def pinv_solve(M, rhs, rtol=1e-9, scale=None):
    """Minimum-norm least-squares solution of ``M u = rhs``."""
    U, s, Vt = svd(M)
    r = numerical_rank(s, rtol, scale)
    coeff = (U[:, :r].T @ rhs) / s[:r]
    return Vt[:r].T @ coeff


def procrustes(source, target):
    """Orthogonal ``R`` minimizing ``||source @ R - target||_F``."""
    if source.shape[1] == 0:
        return np.zeros((0, 0))
    U, _, Vt = np.linalg.svd(source.T @ target)
    return U @ Vt
