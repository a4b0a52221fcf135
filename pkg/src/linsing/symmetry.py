"""Finite and infinitesimal symmetries of linearly singular systems.

A finite candidate is a base diffeomorphism ``phi`` (with a user-supplied
inverse) and a fibre map ``Phi(x)``; an infinitesimal one is a vector field
``V`` with an optional fibre matrix field ``B``.  Residuals are compared to
``tol * scale`` with ``scale`` the largest of ``||A(x)||_F`` and ``||b(x)||``
over the samples, so verdicts do not change when ``(A, b)`` is rescaled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import linalg
from .dynamics import DEFECT_TOL, Trajectory, integrate, pointwise_defects
from .errors import (BundleMapError, InconsistentPoint, KernelNotPreserved, NotConsistent,
                     NotRegular, ShapeError, SingularJacobian)
from .expr import FunctionMap
from .integrators import flow
from .report import ConditionResult, SymmetryReport
from .system import TOL, TOL_RANK, SingularSystem, analyze_point

SYM_TOL = 1e-8
INVERSE_TOL = 1e-8
COND_LIMIT = 1e12


@dataclass(frozen=True)
class DiffeoCandidate:
    phi: object
    phi_inv: object

    def inverse_residual(self, samples) -> float:
        X = np.atleast_2d(np.asarray(samples, dtype=float))
        back = self.phi.evaluate_batch(self.phi_inv.evaluate_batch(X))
        return float(np.abs(back - X).max(initial=0.0))

    def validate(self, samples, tol: float = INVERSE_TOL):
        res = self.inverse_residual(samples)
        if res > tol:
            raise ShapeError(f"phi(phi_inv(x)) differs from x by {res:.3e}")
        return res


@dataclass(frozen=True)
class BundleMapCandidate:
    Phi: object

    def min_abs_det(self, samples) -> float:
        X = np.atleast_2d(np.asarray(samples, dtype=float))
        return float(np.abs(np.linalg.det(self.Phi.evaluate_batch(X))).min(initial=np.inf))


@dataclass(frozen=True)
class InfinitesimalCandidate:
    V: object
    B: Optional[object] = None


def system_scale(sys: SingularSystem, samples) -> float:
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    A = sys.A.evaluate_batch(X)
    b = sys.b.evaluate_batch(X)
    s = max(float(np.linalg.norm(A, axis=(1, 2)).max(initial=0.0)),
            float(np.linalg.norm(b, axis=1).max(initial=0.0)))
    return s if s > 0 else 1.0


def _tolerances(tol, scale, **extra):
    out = {"tol": tol, "scale": scale}
    out.update(extra)
    return out


def _jac_phi(phi, x):
    J = np.asarray(phi.jacobian(x), dtype=float)
    if not np.all(np.isfinite(J)) or np.linalg.cond(J) > COND_LIMIT:
        raise SingularJacobian(f"jacobian of phi is singular at {list(map(float, x))}")
    return J


# -- push-forward ------------------------------------------------------------

def pushforward(sys: SingularSystem, phi, Phi, phi_inv) -> SingularSystem:
    """The system ``(Phi A (T phi)^-1, Phi b)`` transported to the image coordinates."""
    n, m = sys.n, sys.m

    def A_new(y):
        x = phi_inv.evaluate(y)
        J = _jac_phi(phi, x)
        AJinv = np.linalg.solve(J.T, sys.A_at(x).T).T
        return Phi.evaluate(x) @ AJinv

    def b_new(y):
        x = phi_inv.evaluate(y)
        return Phi.evaluate(x) @ sys.b_at(x)

    return SingularSystem(n, m, FunctionMap(A_new, n, (m, n), name="pushforward A"),
                          FunctionMap(b_new, n, (m,), name="pushforward b"), sys.name, sys.labels)


# -- finite symmetries ---------------------------------------------------------

def check_finite_symmetry(sys: SingularSystem, phi, Phi, samples, tol: float = SYM_TOL) -> SymmetryReport:
    """Residuals of ``Phi b = b o phi`` and ``Phi A = A(phi) T phi`` at each sample."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    scale = system_scale(sys, X)
    rb, rA = [], []
    for x in X:
        y = phi.evaluate(x)
        P = Phi.evaluate(x)
        rb.append(np.linalg.norm(P @ sys.b_at(x) - sys.b_at(y)))
        rA.append(np.linalg.norm(P @ sys.A_at(x) - sys.A_at(y) @ phi.jacobian(x)))
    conds = [ConditionResult("b_invariance", rb, tol * scale, X),
             ConditionResult("A_invariance", rA, tol * scale, X)]
    return SymmetryReport("finite", conds, _tolerances(tol, scale), len(X))


def check_D_invariance(sys: SingularSystem, phi, samples, tol: float = SYM_TOL,
                       tol_rank: float = TOL_RANK, tol_consistency: float = TOL) -> SymmetryReport:
    """Whether ``phi`` preserves the implicit system over samples of M1.

    Besides the two conditions on the kernel and on the minimum-norm primary
    field, ``image_in_M1`` measures how far ``phi(x)`` is from M1; without it a
    map moving M1 off itself (a translation, say) would slip through.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    scale = system_scale(sys, X)
    rk, rx, rm = [], [], []
    for x in X:
        d = analyze_point(sys, x, tol_rank, tol_consistency)
        if not d.consistent:
            raise InconsistentPoint(f"sample {list(map(float, x))} is not on M1 (residual {d.coker_residual:.3e})")
        y = phi.evaluate(x)
        dy = analyze_point(sys, y, tol_rank, tol_consistency)
        J = phi.jacobian(x)
        AyJ = dy.A_x @ J
        K = d.kernel_basis
        rk.append(max((np.linalg.norm(AyJ @ K[:, j]) for j in range(K.shape[1])), default=0.0))
        rx.append(np.linalg.norm(dy.A_x @ (J @ d.least_squares_solution - dy.least_squares_solution)))
        rm.append(dy.coker_residual)
    conds = [ConditionResult("kernel_preserved", rk, tol * scale, X),
             ConditionResult("primary_field_covariance", rx, tol * scale, X),
             ConditionResult("image_in_M1", rm, tol * scale, X)]
    return SymmetryReport("D", conds, _tolerances(tol, scale, tol_rank=tol_rank,
                                                    tol_consistency=tol_consistency), len(X))


class BundleMap(NamedTuple):
    matrix: np.ndarray
    residual: float


def construct_bundle_map(sys: SingularSystem, phi, x, tol: float = SYM_TOL,
                         tol_rank: float = TOL_RANK) -> BundleMap:
    """Fibre map at ``x`` sending ``A(x) u`` to ``A(phi(x)) T phi(x) u``.

    Off the image of ``A(x)`` the map sends the orthogonal complement to the
    complement of the target image by the rotation closest to the identity.
    """
    x = np.asarray(x, dtype=float).ravel()
    Ax = sys.A_at(x)
    M = sys.A_at(phi.evaluate(x)) @ phi.jacobian(x)
    U, s, Vt = linalg.svd(Ax)
    r = linalg.numerical_rank(s, tol_rank)
    K = Vt[r:].T
    ref = max(float(s[0]) if s.size else 0.0, float(np.linalg.norm(M, 2)), 1e-300)
    if K.shape[1]:
        res = np.linalg.norm(M @ K, axis=0)
        j = int(np.argmax(res))
        if res[j] > tol * ref:
            raise KernelNotPreserved(f"T phi maps a kernel vector outside Ker A (residual {res[j]:.3e})",
                                     vector=K[:, j].copy())
    Uy, sy, _ = linalg.svd(M)
    ry = linalg.numerical_rank(sy, tol_rank, scale=ref)
    if ry != r:
        raise BundleMapError(f"rank of A(phi(x)) T phi is {ry}, rank of A(x) is {r}")
    Apinv = Vt[:r].T @ (U[:, :r].T / s[:r, None])
    Cx, Cy = U[:, r:], Uy[:, r:]
    R = linalg.procrustes(Cy, Cx)
    Phi = M @ Apinv + (Cy @ R @ Cx.T if Cx.shape[1] else 0.0)
    return BundleMap(Phi, float(np.linalg.norm(Phi @ Ax - M)))


# -- infinitesimal symmetries -------------------------------------------------

def _infinitesimal_terms(sys, V, x):
    a = V.evaluate(x)
    Da = np.asarray(V.jacobian(x))
    DA = np.asarray(sys.A.jacobian(x))
    Db = np.asarray(sys.b.jacobian(x))
    A, b = sys.A_at(x), sys.b_at(x)
    tb = Db @ a
    tA = A @ Da + np.einsum("kij,j->ki", DA, a)
    return A, b, tb, tA


def solve_fibre_field(A, b, tb, tA, rtol: float = TOL_RANK):
    """Minimum-norm ``B`` with ``B [b | A] ~ [tb | tA]``; returns ``(B, indeterminacy)``."""
    m = A.shape[0]
    G = np.column_stack([b, A])
    T = np.column_stack([tb, tA])
    B = np.linalg.lstsq(G.T, T.T, rcond=rtol)[0].T
    s = np.linalg.svd(G, compute_uv=False)
    rank = linalg.numerical_rank(s, rtol)
    return B, m * (m - rank)


def check_infinitesimal(sys: SingularSystem, V, B=None, samples=None, tol: float = SYM_TOL,
                        tol_rank: float = TOL_RANK) -> SymmetryReport:
    """Coordinate conditions ``Db a = B b`` and ``A Da + (DA a) = B A``.

    Without ``B`` the fibre matrix is solved for in least squares at each
    sample; the reported indeterminacy is the null-space dimension of that
    linear problem, and only the residual enters the verdict.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    scale = system_scale(sys, X)
    r1, r2, indet = [], [], []
    for x in X:
        A, b, tb, tA = _infinitesimal_terms(sys, V, x)
        if B is None:
            Bx, k = solve_fibre_field(A, b, tb, tA, tol_rank)
            indet.append(k)
        else:
            Bx = B.evaluate(x)
        r1.append(np.linalg.norm(tb - Bx @ b))
        r2.append(np.linalg.norm(tA - Bx @ A))
    conds = [ConditionResult("b_condition", r1, tol * scale, X),
             ConditionResult("A_condition", r2, tol * scale, X)]
    extra = {"B": "given" if B is not None else "solved"}
    if indet:
        extra["indeterminacy"] = int(max(indet))
    return SymmetryReport("infinitesimal", conds, _tolerances(tol, scale), len(X), extra)


# -- dynamic check -------------------------------------------------------------

def dynamic_symmetry_test(sys: SingularSystem, x0, t_end: float, step: float, phi=None, V=None,
                          eps_list=(), defect_tol: float = DEFECT_TOL, **integrate_kw) -> SymmetryReport:
    """Map a computed solution by ``phi`` or by flows of ``V`` and measure its defect."""
    if (phi is None) == (V is None):
        raise ValueError("give exactly one of phi or V")
    traj = integrate(sys, x0, t_end, step, defect_tol=defect_tol, **integrate_kw)
    images = []
    if phi is not None:
        images.append(("image_defect[phi]", phi.evaluate_batch(traj.states)))
    else:
        if not len(eps_list):
            raise ValueError("eps_list is empty")
        for eps in eps_list:
            images.append((f"image_defect[eps={eps:g}]", flow(V.evaluate_batch, traj.states, float(eps))))
    conds = []
    for name, Y in images:
        d = pointwise_defects(sys, traj.times, Y)
        res = d[1:-1] if len(d) > 2 else d
        pts = Y[1:-1] if len(d) > 2 else Y
        conds.append(ConditionResult(name, res, defect_tol, pts))
    base = pointwise_defects(sys, traj.times, traj.states)
    extra = {"trajectory_defect": float((base[1:-1] if len(base) > 2 else base).max(initial=0.0)),
             "steps": len(traj.times) - 1}
    tols = {"defect_tol": defect_tol, "step": step, "t_end": t_end}
    return SymmetryReport("dynamic", conds, tols, len(traj.times), extra)


# -- specializations -------------------------------------------------------------

def _require_regular(sys, X, tol_rank):
    if sys.n != sys.m:
        raise NotRegular(f"A is {sys.m}x{sys.n}, not square")
    for x in X:
        if analyze_point(sys, x, tol_rank).rank != sys.n:
            raise NotRegular(f"A is singular at {list(map(float, x))}")


def regular_vector_field(sys: SingularSystem) -> FunctionMap:
    return FunctionMap(lambda x: np.linalg.solve(sys.A_at(x), sys.b_at(x)), sys.n, (sys.n,), name="A^-1 b")


def regular_bundle_map(sys: SingularSystem, phi) -> FunctionMap:
    """``Phi(x) = A(phi(x)) T phi(x) A(x)^-1`` as a matrix field."""
    def Phi(x):
        M = sys.A_at(phi.evaluate(x)) @ phi.jacobian(x)
        return np.linalg.solve(sys.A_at(x).T, M.T).T

    return FunctionMap(Phi, sys.n, (sys.m, sys.m), name="regular Phi")


def regular_specialize(sys: SingularSystem, samples, V=None, phi=None, tol: float = SYM_TOL,
                       tol_rank: float = TOL_RANK) -> SymmetryReport:
    """Symmetry tests for a regular system (A invertible at every sample).

    For ``V`` the residual is the commutator ``[V, X]`` with ``X = A^-1 b``;
    for ``phi`` the fibre map is forced and the finite check is delegated.
    """
    if (phi is None) == (V is None):
        raise ValueError("give exactly one of phi or V")
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    _require_regular(sys, X, tol_rank)
    if phi is not None:
        rep = check_finite_symmetry(sys, phi, regular_bundle_map(sys, phi), X, tol)
        rep.kind = "regular"
        return rep
    res, fields = [], []
    for x in X:
        A, b = sys.A_at(x), sys.b_at(x)
        Xv = np.linalg.solve(A, b)
        DA = np.asarray(sys.A.jacobian(x))
        DX = np.linalg.solve(A, np.asarray(sys.b.jacobian(x)) - np.einsum("kji,j->ki", DA, Xv))
        a, Da = V.evaluate(x), np.asarray(V.jacobian(x))
        res.append(np.linalg.norm(DX @ a - Da @ Xv))
        fields.append(np.linalg.norm(Xv))
    scale = max(max(fields, default=0.0), 0.0) or 1.0
    conds = [ConditionResult("commutator", res, tol * scale, X)]
    return SymmetryReport("regular", conds, _tolerances(tol, scale), len(X))


def _aligned_kernel(sys, x, ref, tol_rank):
    K = analyze_point(sys, x, tol_rank).kernel_basis
    if K.shape[1] != ref.shape[1]:
        raise NotConsistent(f"kernel dimension changes near {list(map(float, x))}")
    return K @ linalg.procrustes(K, ref)


def consistent_specialize(sys: SingularSystem, V, samples, tol: float = SYM_TOL, fd_step: float = 1e-6,
                          tol_rank: float = TOL_RANK, tol_consistency: float = TOL) -> SymmetryReport:
    """Brackets of ``V`` with a kernel frame and with the primary field, mapped by A.

    The kernel frame at each stencil point is rotated onto the frame at the
    centre (orthogonal Procrustes) before differencing.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    scale = system_scale(sys, X)
    n = sys.n
    rg, rx = [], []
    for x in X:
        d = analyze_point(sys, x, tol_rank, tol_consistency)
        if not d.consistent:
            raise NotConsistent(f"b(x) is not in the image of A(x) at {list(map(float, x))}")
        K, X0 = d.kernel_basis, d.min_norm_solution
        a, Da = V.evaluate(x), np.asarray(V.jacobian(x))
        DK = np.zeros((n, K.shape[1], n))
        DX0 = np.zeros((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = fd_step
            Kp, Km = _aligned_kernel(sys, x + e, K, tol_rank), _aligned_kernel(sys, x - e, K, tol_rank)
            DK[:, :, j] = (Kp - Km) / (2 * fd_step)
            up = analyze_point(sys, x + e, tol_rank, tol_consistency).least_squares_solution
            um = analyze_point(sys, x - e, tol_rank, tol_consistency).least_squares_solution
            DX0[:, j] = (up - um) / (2 * fd_step)
        brackets = np.einsum("icj,j->ic", DK, a) - Da @ K
        rg.append(max((np.linalg.norm(d.A_x @ brackets[:, c]) for c in range(K.shape[1])), default=0.0))
        rx.append(np.linalg.norm(d.A_x @ (DX0 @ a - Da @ X0)))
    conds = [ConditionResult("kernel_bracket", rg, tol * scale, X),
             ConditionResult("primary_bracket", rx, tol * scale, X)]
    return SymmetryReport("consistent", conds, _tolerances(tol, scale, fd_step=fd_step), len(X))
