"""Linearly singular systems and their pointwise linear algebra."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg
from .errors import InconsistentPoint, NonFiniteError, ShapeError
from .expr import as_map

TOL_RANK = 1e-9
TOL = 1e-7


@dataclass(frozen=True)
class SingularSystem:
    """The equation ``A(x) x' = b(x)`` on R^n with fibres R^m.

    ``A`` is an m x n matrix-valued map and ``b`` an m-vector map, each either
    a :class:`~linsing.expr.SmoothMap` or a composed
    :class:`~linsing.expr.FunctionMap`.  The vector bundle is the trivial
    bundle R^n x R^m, which is all the local constructions need.
    """

    n: int
    m: int
    A: object
    b: object
    name: str = ""
    labels: tuple = field(default=())

    def __post_init__(self):
        if self.A.arity != self.n or self.b.arity != self.n:
            raise ShapeError(f"A and b must take {self.n} coordinates")
        if tuple(self.A.shape) != (self.m, self.n):
            raise ShapeError(f"A has shape {self.A.shape}, expected {(self.m, self.n)}")
        if tuple(self.b.shape) != (self.m,):
            raise ShapeError(f"b has shape {self.b.shape}, expected {(self.m,)}")
        if self.labels and len(self.labels) != self.n:
            raise ShapeError("need one label per coordinate")

    @classmethod
    def from_text(cls, A: str, b: str, n: int, name: str = "", labels=()):
        Amap = as_map(A, n, kind="matrix")
        bmap = as_map(b, n, kind="vector")
        return cls(n, Amap.shape[0], Amap, bmap, name, tuple(labels))

    def A_at(self, x) -> np.ndarray:
        return self.A.evaluate(x)

    def b_at(self, x) -> np.ndarray:
        return self.b.evaluate(x)

    def scaled(self, c: float) -> "SingularSystem":
        """The equivalent system ``(cA, cb)``."""
        from .expr import FunctionMap

        A = FunctionMap(lambda x: c * self.A.evaluate(x), self.n, (self.m, self.n), name=f"{c}*A")
        b = FunctionMap(lambda x: c * self.b.evaluate(x), self.n, (self.m,), name=f"{c}*b")
        return SingularSystem(self.n, self.m, A, b, self.name, self.labels)


@dataclass
class PointLinearData:
    x: np.ndarray
    A_x: np.ndarray
    b_x: np.ndarray
    rank: int
    singular_values: np.ndarray
    kernel_basis: np.ndarray
    image_basis: np.ndarray
    image_projector: np.ndarray
    coker_residual: float
    least_squares_solution: np.ndarray
    min_norm_solution: Optional[np.ndarray]

    @property
    def consistent(self) -> bool:
        return self.min_norm_solution is not None


def analyze_point(sys: SingularSystem, x, tol_rank: float = TOL_RANK, tol: float = TOL) -> PointLinearData:
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("point has non-finite coordinates")
    Ax = sys.A_at(x)
    bx = sys.b_at(x)
    if not (np.all(np.isfinite(Ax)) and np.all(np.isfinite(bx))):
        raise NonFiniteError("A(x) or b(x) is not finite")
    U, s, Vt = linalg.svd(Ax)
    r = linalg.numerical_rank(s, tol_rank)
    K = Vt[r:].T.copy()
    Ur = U[:, :r]
    P = Ur @ Ur.T
    rho = float(np.linalg.norm(bx - P @ bx))
    u_ls = Vt[:r].T @ ((Ur.T @ bx) / s[:r])
    return PointLinearData(
        x=x, A_x=Ax, b_x=bx, rank=r, singular_values=s, kernel_basis=K,
        image_basis=Ur.copy(), image_projector=P, coker_residual=rho,
        least_squares_solution=u_ls, min_norm_solution=u_ls if rho <= tol else None,
    )


def consistency_residual(sys: SingularSystem, x, tol_rank: float = TOL_RANK) -> float:
    return analyze_point(sys, x, tol_rank).coker_residual


def solution_affine_set(sys: SingularSystem, x, tol_rank: float = TOL_RANK, tol: float = TOL):
    """Return ``(u0, K)`` with ``{u : A(x) u = b(x)} = u0 + span(K)``."""
    data = analyze_point(sys, x, tol_rank, tol)
    if data.min_norm_solution is None:
        raise InconsistentPoint(f"b(x) is not in the image of A(x): residual {data.coker_residual:.3e}")
    u0, K = data.min_norm_solution, data.kernel_basis
    for u in [u0] + [u0 + K[:, j] for j in range(K.shape[1])]:
        res = np.linalg.norm(data.A_x @ u - data.b_x)
        if res > 2 * tol:
            raise InconsistentPoint(f"affine solution set fails verification: residual {res:.3e}")
    return u0, K
