"""Sample generation and Gauss-Newton projection onto zero sets."""

import numpy as np


def parse_box(box, n: int):
    """Normalize a box spec to ``n`` (lo, hi) pairs; a single pair is broadcast."""
    box = [tuple(map(float, b)) for b in box]
    if len(box) == 1:
        box = box * n
    if len(box) != n:
        raise ValueError(f"box has {len(box)} intervals, expected {n}")
    for lo, hi in box:
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
            raise ValueError(f"bad interval ({lo}, {hi})")
    return box


def sample_box(box, count: int, seed: int = 42) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return lo + (hi - lo) * rng.random((count, len(box)))


def gauss_newton(residual, jacobian, x, tol: float, max_iter: int = 10, rcond: float = 1e-9):
    """Iterate ``x <- x - pinv(J) r`` until ``||r|| <= tol``.

    Returns ``(x, norms)`` where ``norms`` lists ``||r||`` before each
    iteration and after the last one.
    """
    x = np.asarray(x, dtype=float).copy()
    r = residual(x)
    norms = [float(np.linalg.norm(r))]
    for _ in range(max_iter):
        if norms[-1] <= tol:
            break
        J = jacobian(x)
        dx = np.linalg.lstsq(J, r, rcond=rcond)[0]
        x = x - dx
        r = residual(x)
        norms.append(float(np.linalg.norm(r)))
    return x, norms
