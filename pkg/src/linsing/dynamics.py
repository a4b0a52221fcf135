"""Primary and final velocity fields; projected integration on the final set."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .constraints import FD_STEP, TOL_JAC, ConstraintChain, ConstraintStack, run_chain
from .errors import (FinalInconsistency, NotOnFinal, ProjectionDiverged, ShapeError,
                     StepRejected)
from .integrators import rk4_step
from .sampling import gauss_newton
from .system import TOL, TOL_RANK, SingularSystem, solution_affine_set

DEFECT_TOL = 1e-5
PROJ_TOL = 1e-9


def primary_vector(sys: SingularSystem, x, gauge=None, tol_rank: float = TOL_RANK,
                   tol: float = TOL) -> np.ndarray:
    """Minimum-norm solution of ``A(x) u = b(x)`` plus ``K g`` along the kernel."""
    u0, K = solution_affine_set(sys, x, tol_rank, tol)
    g = np.zeros(K.shape[1]) if gauge is None else np.asarray(gauge, dtype=float).ravel()
    if g.size != K.shape[1]:
        raise ShapeError(f"gauge has {g.size} coefficients, kernel has dimension {K.shape[1]}")
    return u0 + K @ g


@dataclass
class FinalVectorSolve:
    u_f: np.ndarray
    gauge_basis: np.ndarray
    defect: float


def _solve_on_subspace(A, b, W, rtol):
    n = W.shape[0]
    if W.shape[1] == 0:
        return np.zeros(n), np.zeros((n, 0))
    AW = A @ W
    U, s, Vt = linalg.svd(AW)
    if W.shape[1] == n:
        scale = float(s[0]) if s.size else 0.0
    else:
        scale = float(np.linalg.norm(A, 2)) if A.size else 0.0
    r = linalg.numerical_rank(s, rtol, scale)
    coeff = Vt[:r].T @ ((U[:, :r].T @ b) / s[:r])
    G = W @ Vt[r:].T
    if G.shape[1]:
        G = G * linalg._sign_fix(G)
    return W @ coeff, G


def final_vector(sys: SingularSystem, x, chain: ConstraintChain, tol: float = TOL) -> FinalVectorSolve:
    """Least-squares velocity tangent to the final set, with its gauge directions."""
    if not chain.stabilized:
        raise NotOnFinal(f"point is not on the final constraint set ({chain.status})",
                         classification=chain.to_dict())
    x = np.asarray(x, dtype=float).ravel()
    A, b = sys.A_at(x), sys.b_at(x)
    u, G = _solve_on_subspace(A, b, chain.final_subspace, chain.final_threshold)
    defect = float(np.linalg.norm(A @ u - b))
    if defect > tol:
        raise FinalInconsistency(f"no velocity tangent to the final set: defect {defect:.3e}")
    return FinalVectorSolve(u, G, defect)


def _derivatives(times, states):
    """Second-order difference quotients; centred inside, one-sided at the ends."""
    t, X = np.asarray(times), np.asarray(states)
    D = np.zeros_like(X)
    if len(t) < 2:
        return D
    if len(t) == 2:
        D[:] = (X[1] - X[0]) / (t[1] - t[0])
        return D
    D[1:-1] = (X[2:] - X[:-2]) / (t[2:] - t[:-2])[:, None]
    h0, h1 = t[1] - t[0], t[-1] - t[-2]
    D[0] = (-3 * X[0] + 4 * X[1] - X[2]) / (2 * h0)
    D[-1] = (3 * X[-1] - 4 * X[-2] + X[-3]) / (2 * h1)
    return D


def pointwise_defects(sys: SingularSystem, times, states) -> np.ndarray:
    X = np.asarray(states, dtype=float)
    D = _derivatives(times, X)
    A = sys.A.evaluate_batch(X)
    b = sys.b.evaluate_batch(X)
    return np.linalg.norm(np.einsum("kmn,kn->km", A, D) - b, axis=1)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    defects: np.ndarray
    proj_residuals: np.ndarray
    gauge_policy: str
    defect_tol: float = DEFECT_TOL
    proj_tol: float = PROJ_TOL
    labels: tuple = field(default=())

    @property
    def max_defect(self) -> float:
        return float(self.defects.max(initial=0.0))

    def write_csv(self, fh):
        n = self.states.shape[1]
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + ["defect", "proj_residual"])
        for t, x, d, r in zip(self.times, self.states, self.defects, self.proj_residuals):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x] + [repr(float(d)), repr(float(r))])

    def summary(self, sys: SingularSystem | None = None) -> dict:
        out = {
            "steps": len(self.times) - 1,
            "t_end": float(self.times[-1]),
            "initial_state": [float(v) for v in self.states[0]],
            "final_state": [float(v) for v in self.states[-1]],
            "max_step_defect": self.max_defect,
            "max_proj_residual": float(self.proj_residuals.max(initial=0.0)),
            "gauge_policy": self.gauge_policy,
            "defect_tol": self.defect_tol,
            "proj_tol": self.proj_tol,
        }
        if sys is not None:
            out["solution_defect"] = solution_defect(sys, self)
            out["solution_defect_ok"] = out["solution_defect"] <= self.defect_tol
        return out


def _gauge_policy(gauge):
    if gauge is None or (isinstance(gauge, str) and gauge == "zero"):
        return "zero", lambda t, y, G: np.zeros(G.shape[1])
    if callable(gauge):
        return "callback", gauge
    g = np.asarray(gauge, dtype=float).ravel()

    def fixed(t, y, G):
        if g.size != G.shape[1]:
            raise ShapeError(f"gauge has {g.size} coefficients, kernel has dimension {G.shape[1]}")
        return g

    return "fixed", fixed


def integrate(sys: SingularSystem, x0, t_end: float, step: float, gauge="zero", tol: float = TOL,
              tol_rank: float = TOL_RANK, fd_step: float = FD_STEP, tol_jac: float = TOL_JAC,
              proj_tol: float = PROJ_TOL, defect_tol: float = DEFECT_TOL) -> Trajectory:
    """Integrate ``A(x) x' = b(x)`` from ``x0`` on the final constraint set.

    Each RK4 stage uses the least-squares velocity in the admissible subspace
    evaluated at the stage point, followed by a Gauss-Newton projection onto
    the zero set of all constraint functions of the chain.  ``gauge`` is
    ``"zero"``, a fixed coefficient vector, or ``callback(t, x, G)``.
    """
    if step <= 0 or t_end < 0:
        raise ValueError("need step > 0 and t_end >= 0")
    x0 = np.asarray(x0, dtype=float).ravel()
    stack = ConstraintStack(sys, tol_rank, fd_step, tol_jac)
    chain = run_chain(sys, x0, tol, stack=stack)
    if not chain.stabilized:
        raise NotOnFinal(f"initial point is not on the final constraint set ({chain.status})",
                         classification=chain.to_dict())
    L = len(chain.levels)
    rtol = chain.final_threshold
    name, policy = _gauge_policy(gauge)
    # an open final set: under the regularity assumption W stays R^n nearby
    full = np.eye(sys.n) if chain.final_subspace.shape[1] == sys.n else None

    def velocity(t, y):
        W = full if full is not None else stack.subspace(L, y)
        u, G = _solve_on_subspace(sys.A_at(y), sys.b_at(y), W, rtol)
        return u + G @ policy(t, y, G)

    def residual(z):
        return stack.stacked_residual(L, z)

    def jacobian(z):
        return stack.stacked_jacobian(L, z)

    N = max(0, math.ceil(t_end / step - 1e-9))
    h = t_end / N if N else 0.0
    times = np.array([i * h for i in range(N + 1)])
    states = np.empty((N + 1, sys.n))
    proj = np.empty(N + 1)
    states[0] = x0
    proj[0] = float(np.linalg.norm(residual(x0)))
    for i in range(N):
        y = rk4_step(velocity, times[i], states[i], h)
        stack.clear()
        y, norms = gauss_newton(residual, jacobian, y, proj_tol)
        if norms[-1] > proj_tol:
            raise ProjectionDiverged(
                f"projection failed at t = {times[i + 1]:g}: residual {norms[0]:.3e} -> {norms[-1]:.3e}")
        states[i + 1] = y
        proj[i + 1] = norms[-1]
        if i >= 1:
            d = pointwise_defects(sys, times[i - 1:i + 2], states[i - 1:i + 2])[1]
            if d > 1e3 * defect_tol:
                raise StepRejected(f"defect {d:.3e} at t = {times[i]:g} exceeds {1e3 * defect_tol:g}")
    defects = pointwise_defects(sys, times, states)
    return Trajectory(times, states, defects, proj, name, defect_tol, proj_tol, sys.labels)


def solution_defect(sys: SingularSystem, traj: Trajectory) -> float:
    """Max of ``||A(x) x'_num - b(x)||`` over interior samples (centred differences)."""
    if len(traj.times) < 3:
        return float(pointwise_defects(sys, traj.times, traj.states).max(initial=0.0))
    return float(pointwise_defects(sys, traj.times, traj.states)[1:-1].max())
