"""Pointwise constraint algorithm M > M1 > M2 > ... > Mf.

The tangent space of ``M_k`` at a point is realized as the kernel of the
finite-difference Jacobians of the constraint functions found so far:

* level 1: ``c1(y) = (I - P(y)) b(y)`` with ``P(y)`` the projector onto Im A(y);
* level k+1: ``c_{k+1}(y) = (I - Q_k(y)) b(y)`` with ``Q_k(y)`` the projector
  onto ``A(y) W_k(y)``, ``W_k(y)`` the admissible subspace at level k.

Evaluating ``c_{k+1}`` near a point needs ``W_k`` there, so differences nest.
The stencil step at level k is ``fd_step ** (1/k)`` and the kernel threshold
grows with it; both keep nested difference noise below the rank decision.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

import numpy as np

from . import linalg
from .sampling import gauss_newton, sample_box
from .system import TOL, TOL_RANK, SingularSystem, analyze_point

FD_STEP = 1e-6
TOL_JAC = 1e-6

STABILIZED = "stabilized"
MAX_ITERATIONS = "max_iterations"


@dataclass
class ChainLevel:
    k: int
    residual: float
    marginal: bool
    dim_W: Optional[int] = None
    basis: Optional[np.ndarray] = None
    new_constraint_count: Optional[int] = None

    def to_dict(self):
        return {
            "k": self.k,
            "residual": float(self.residual),
            "dim_W": self.dim_W,
            "marginal": self.marginal,
            "new_constraints": self.new_constraint_count,
        }


@dataclass
class ConstraintChain:
    x: np.ndarray
    levels: list
    status: str
    final_subspace: Optional[np.ndarray] = None
    flags: list = field(default_factory=list)
    # relative rank threshold in force at the last level, reused for A·W_f
    final_threshold: float = TOL_JAC

    @property
    def stabilized(self) -> bool:
        return self.status == STABILIZED

    @property
    def regularity_violation(self) -> bool:
        return bool(self.flags)

    @property
    def failed_level(self) -> Optional[int]:
        if self.status.startswith("inconsistent_at_level_"):
            return int(self.status.rsplit("_", 1)[1])
        return None

    @property
    def dims(self) -> list:
        """``[n, d_1, d_2, ...]`` for the consistent levels."""
        return [len(self.x)] + [lv.dim_W for lv in self.levels if lv.dim_W is not None]

    @property
    def marginal(self) -> bool:
        return any(lv.marginal for lv in self.levels)

    def to_dict(self):
        return {
            "point": [float(v) for v in self.x],
            "status": self.status,
            "levels": [lv.to_dict() for lv in self.levels],
            "final_dim": None if self.final_subspace is None else int(self.final_subspace.shape[1]),
            "flags": sorted(self.flags),
        }


class ConstraintStack:
    """Cumulative constraint functions of a system and their Jacobians.

    Values are memoized per point; call :meth:`clear` between unrelated
    batches of work to bound memory.
    """

    def __init__(self, sys: SingularSystem, tol_rank: float = TOL_RANK, fd_step: float = FD_STEP,
                 tol_jac: float = TOL_JAC):
        self.sys = sys
        self.tol_rank = tol_rank
        self.fd_step = fd_step
        self.tol_jac = tol_jac
        self.flags: set = set()
        self._cache: dict = {}

    def clear(self):
        self._cache.clear()

    def step(self, k: int) -> float:
        return self.fd_step ** (1.0 / k)

    def threshold(self, k: int) -> float:
        return self.tol_jac if k <= 1 else max(self.tol_jac, self.step(k))

    def _memo(self, key, compute):
        if len(self._cache) > 50000:
            self._cache.clear()
        try:
            return self._cache[key]
        except KeyError:
            val = self._cache[key] = compute()
            return val

    # -- level 1, batched --------------------------------------------------
    def _level1_batch(self, Y):
        A = self.sys.A.evaluate_batch(Y)
        b = self.sys.b.evaluate_batch(Y)
        U, s, _ = np.linalg.svd(A, full_matrices=True)
        smax = s[:, 0] if s.shape[1] else np.zeros(len(Y))
        keep = (s > self.tol_rank * smax[:, None]) & (smax[:, None] > 0)
        ranks = keep.sum(axis=1)
        r = s.shape[1]
        coeff = np.einsum("kmi,km->ki", U[:, :, :r], b) * keep
        c = b - np.einsum("kmi,ki->km", U[:, :, :r], coeff)
        return c, ranks, A, smax

    def _linear(self, y):
        key = ("lin", y.tobytes())
        return self._memo(key, lambda: self._level1_batch(y[None, :]))

    def a_norm(self, y) -> float:
        return float(self._linear(y)[3][0])

    def rank(self, y) -> int:
        return int(self._linear(y)[1][0])

    # -- constraint functions ------------------------------------------------
    def constraint(self, k: int, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self._memo(("c", k, y.tobytes()), lambda: self._constraint(k, y))

    def _constraint(self, k, y):
        if k == 1:
            return self._linear(y)[0][0]
        W = self.subspace(k - 1, y)
        c, _, A, smax = self._linear(y)
        b = self.sys.b.evaluate(y)
        if W.shape[1] == 0:
            return b.copy()
        Q = linalg.image_basis(A[0] @ W, self.threshold(k - 1), scale=smax[0])
        return b - Q @ (Q.T @ b)

    def jacobian(self, k: int, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self._memo(("J", k, y.tobytes()), lambda: self._jacobian(k, y))

    def _jacobian(self, k, y):
        n = y.size
        h = self.step(k)
        E = np.eye(n) * h
        stencil = np.concatenate([y + E, y - E])
        if k == 1:
            c, ranks, _, _ = self._level1_batch(stencil)
            if np.any(ranks != self.rank(y)):
                self.flags.add("rank_instability")
        else:
            c = np.array([self.constraint(k, p) for p in stencil])
            d0 = self.subspace(k - 1, y).shape[1]
            if any(self.subspace(k - 1, p).shape[1] != d0 for p in stencil):
                self.flags.add("subspace_instability")
        return ((c[:n] - c[n:]) / (2 * h)).T

    def stacked_jacobian(self, k: int, y) -> np.ndarray:
        return np.vstack([self.jacobian(j, y) for j in range(1, k + 1)])

    def stacked_residual(self, k: int, y) -> np.ndarray:
        return np.concatenate([self.constraint(j, y) for j in range(1, k + 1)])

    def subspace(self, k: int, y) -> np.ndarray:
        """Orthonormal basis of the admissible subspace W_k at y (W_0 = R^n)."""
        y = np.asarray(y, dtype=float)
        if k == 0:
            return np.eye(y.size)
        return self._memo(("W", k, y.tobytes()), lambda: self._subspace(k, y))

    def _subspace(self, k, y):
        # Ker[J_1; ...; J_k] computed as W_{k-1} intersected with Ker J_k
        W = self.subspace(k - 1, y)
        if W.shape[1] == 0:
            return W
        JW = self.jacobian(k, y) @ W
        s = np.linalg.svd(JW, compute_uv=False)
        scale = max(float(s[0]) if s.size else 0.0, self.a_norm(y))
        N = linalg.null_space(JW, self.threshold(k), scale=scale)
        if N.shape[1] == 0:
            return np.zeros((y.size, 0))
        B = W @ N
        # re-orthonormalize against roundoff; keeps the deterministic orientation
        q, _ = np.linalg.qr(B)
        signs = np.sign(np.sum(q * B, axis=0))
        signs[signs == 0] = 1.0
        return q * signs


def run_chain(sys: SingularSystem, x, tol: float = TOL, fd_step: float = FD_STEP,
              tol_rank: float = TOL_RANK, tol_jac: float = TOL_JAC,
              stack: Optional[ConstraintStack] = None) -> ConstraintChain:
    """Run the constraint algorithm at the point ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        from .errors import NonFiniteError

        raise NonFiniteError("point has non-finite coordinates")
    if stack is None:
        stack = ConstraintStack(sys, tol_rank, fd_step, tol_jac)
    n = sys.n
    levels = []
    prev_dim = n
    status = MAX_ITERATIONS
    final = None
    for k in range(1, n + 2):
        residual = float(np.linalg.norm(stack.constraint(k, x)))
        marginal = tol < residual <= 10 * tol
        if residual > tol:
            levels.append(ChainLevel(k, residual, marginal))
            status = f"inconsistent_at_level_{k}"
            break
        W = stack.subspace(k, x)
        d = W.shape[1]
        levels.append(ChainLevel(k, residual, marginal, d, W, prev_dim - d))
        if d == prev_dim:
            status = STABILIZED
            final = W
            break
        prev_dim = d
    thr = max(tol_rank, stack.threshold(len(levels)))
    return ConstraintChain(x, levels, status, final, sorted(stack.flags), thr)


@dataclass
class Classification:
    level: int
    on_final: bool
    chain: ConstraintChain

    def to_dict(self):
        out = self.chain.to_dict()
        out.update(level=self.level, on_final=self.on_final)
        return out


def classify_point(sys: SingularSystem, x, tol: float = TOL, **kwargs) -> Classification:
    chain = run_chain(sys, x, tol, **kwargs)
    return Classification(len(chain.levels), chain.stabilized, chain)


def lattice_points(box, per_axis: int = 3) -> np.ndarray:
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in box]
    return np.array(list(product(*axes)), dtype=float)


@dataclass
class RegularityReport:
    count: int
    rank_histogram: dict
    chain_length_histogram: dict
    flags: list
    flagged_points: list

    @property
    def regular(self) -> bool:
        return not self.flags

    def to_dict(self):
        return {
            "count": self.count,
            "rank_histogram": {str(k): v for k, v in sorted(self.rank_histogram.items())},
            "chain_length_histogram": {str(k): v for k, v in sorted(self.chain_length_histogram.items())},
            "flags": list(self.flags),
            "flagged_points": self.flagged_points,
        }


def regularity_probe(sys: SingularSystem, box, count: int, seed: int = 42, tol: float = TOL,
                     tol_rank: float = TOL_RANK, fd_step: float = FD_STEP, tol_jac: float = TOL_JAC,
                     workers: int = 1, max_lattice: int = 729) -> RegularityReport:
    """Sample the box and record ranks of A and chain lengths.

    Random samples are complemented by the 3-per-axis lattice (corners, face
    midpoints, centre) when it has at most ``max_lattice`` points, which
    catches rank drops on symmetric hyperplanes that random points miss.
    """
    pts = sample_box(box, count, seed)
    if 3 ** sys.n <= max_lattice:
        pts = np.vstack([pts, lattice_points(box)])

    def probe(p):
        data = analyze_point(sys, p, tol_rank, tol)
        chain = run_chain(sys, p, tol, fd_step, tol_rank, tol_jac)
        return data.rank, len(chain.levels), chain.flags

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(probe, pts))
    else:
        results = [probe(p) for p in pts]

    ranks, lengths, flags, flagged = {}, {}, set(), []
    for i, (r, length, fl) in enumerate(results):
        ranks[r] = ranks.get(r, 0) + 1
        lengths[length] = lengths.get(length, 0) + 1
        if fl:
            flags.update(fl)
            flagged.append({"index": i, "point": [float(v) for v in pts[i]], "flags": list(fl)})
    if len(ranks) > 1:
        flags.add("non_constant_rank")
        modal = max(sorted(ranks), key=lambda r: ranks[r])
        for i, (r, _, fl) in enumerate(results):
            if r != modal and not fl:
                flagged.append({"index": i, "point": [float(v) for v in pts[i]], "flags": ["rank_differs"]})
    flagged.sort(key=lambda d: d["index"])
    return RegularityReport(len(pts), ranks, lengths, sorted(flags), flagged)


def project_to_m1(sys: SingularSystem, points, tol: float = TOL, tol_rank: float = TOL_RANK,
                  fd_step: float = FD_STEP, tol_jac: float = TOL_JAC, max_iter: int = 10):
    """Gauss-Newton projection of each point onto ``c1 = 0``.

    Returns ``(projected, ok)``; ``ok[i]`` is False where the iteration did
    not reach ``tol``.
    """
    stack = ConstraintStack(sys, tol_rank, fd_step, tol_jac)
    P = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty_like(P)
    ok = np.zeros(len(P), dtype=bool)
    for i, p in enumerate(P):
        q, norms = gauss_newton(lambda z: stack.constraint(1, z), lambda z: stack.jacobian(1, z), p,
                                tol / 10, max_iter)
        out[i] = q
        ok[i] = norms[-1] <= tol
        stack.clear()
    return out, ok
