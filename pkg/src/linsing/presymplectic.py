"""The presymplectic system on the dual bundle attached to ``A x' = b``.

Coordinates on the dual bundle are ``z = (x, p)`` with ``p`` in R^m.  The
one-form is ``theta = p_k A^k_i(x) dx^i``, the two-form is ``omega = -d theta``
with components ``omega_IJ = d_J theta_I - d_I theta_J`` and the Hamiltonian
is ``H = p_k b^k(x)``.

Sign convention of the lifted equation: a velocity ``u`` solves it when the
contraction ``u^I omega_IJ`` equals ``d_J H``, so the lifted system has matrix
``omega^T``.  With ``A = (1)``, ``b = (x)`` this gives ``x' = x``, ``p' = -p``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BundleMapError
from .expr import Const, SmoothMap, Var, default_variables, derivative, mul, sub, total
from .report import ConditionResult, SymmetryReport, verdict_for
from .symmetry import SYM_TOL, system_scale
from .system import SingularSystem

COND_LIMIT = 1e12


def lifted_variables(n: int, m: int) -> tuple:
    return default_variables(n) + tuple(f"p{k + 1}" for k in range(m))


@dataclass(frozen=True)
class LiftedSystem:
    n: int
    m: int
    theta: SmoothMap
    H: SmoothMap
    base: SingularSystem

    @property
    def dim(self) -> int:
        return self.n + self.m

    @property
    def theta_x(self) -> tuple:
        """The ``dx`` components of theta as expressions."""
        return tuple(self.theta.entry(i) for i in range(self.n))

    def omega(self, z) -> np.ndarray:
        """Skew matrix of ``-d theta`` at ``z``, from exact derivatives of theta."""
        J = np.asarray(self.theta.jacobian(z))
        return J - J.T

    def omega_map(self) -> SmoothMap:
        N = self.dim
        e = [self.theta.entry(i) for i in range(N)]
        rows = [[sub(derivative(e[i], j), derivative(e[j], i)) for j in range(N)] for i in range(N)]
        return SmoothMap(rows, self.theta.variables, "matrix")

    def closedness_residual(self, z) -> float:
        """Largest ``|d_I w_JK + d_J w_KI + d_K w_IJ|`` at ``z``."""
        D = np.asarray(self.omega_map().jacobian(z))  # D[J, K, I] = d_I w_JK
        cyc = np.einsum("jki->ijk", D) + np.einsum("kij->ijk", D) + np.einsum("ijk->ijk", D)
        return float(np.abs(cyc).max(initial=0.0))


def lift(sys: SingularSystem) -> LiftedSystem:
    """Build theta and H as expression trees over ``(x, p)``."""
    if not isinstance(sys.A, SmoothMap) or not isinstance(sys.b, SmoothMap):
        raise TypeError("lift needs A and b given as expressions")
    n, m = sys.n, sys.m
    names = lifted_variables(n, m)
    p = [Var(n + k, names[n + k]) for k in range(m)]
    theta = [total(mul(p[k], sys.A.entry(k, i)) for k in range(m)) for i in range(n)]
    theta += [Const(0.0)] * m
    H = total(mul(p[k], sys.b.entry(k)) for k in range(m))
    return LiftedSystem(n, m, SmoothMap([[t] for t in theta], names, "vector"),
                        SmoothMap([[H]], names, "vector"), sys)


def as_singular_system(lifted: LiftedSystem) -> SingularSystem:
    """The lifted equation ``omega^T z' = grad H`` as a system on R^(n+m)."""
    N = lifted.dim
    e = [lifted.theta.entry(i) for i in range(N)]
    # (omega^T)_IJ = omega_JI = d_I theta_J - d_J theta_I
    rows = [[sub(derivative(e[J], I), derivative(e[I], J)) for J in range(N)] for I in range(N)]
    h = lifted.H.entry(0)
    grad = [[derivative(h, I)] for I in range(N)]
    names = lifted.theta.variables
    name = f"{lifted.base.name} lift" if lifted.base.name else "lift"
    return SingularSystem(N, N, SmoothMap(rows, names, "matrix"), SmoothMap(grad, names, "vector"),
                          name, names)


def _dual_point(phi, Phi, z, n):
    x, p = z[:n], z[n:]
    P = Phi.evaluate(x)
    if np.linalg.cond(P) > COND_LIMIT:
        raise BundleMapError(f"Phi is singular at {list(map(float, x))}")
    return x, p, P


def check_dual_invariance(sys: SingularSystem, phi, Phi, samples, phi_inv=None,
                          tol: float = SYM_TOL) -> SymmetryReport:
    """Compare invariance of H under the dual map with invariance of b.

    The dual map sends ``(x, p)`` to ``(phi(x), Phi(x)^-T p)``.  At a sample
    ``(y, q)`` the H residual is ``H((Phi^v)^-1 (y, q)) - H(y, q)``, which
    needs ``phi_inv``; when it is absent the sample's base point is used as
    the preimage instead, i.e. the residual ``H(x, p) - H(Phi^v(x, p))``.
    The b residual is evaluated at the samples' base points.  The theta
    residual ``p^T (Phi^-1 A(phi(x)) T phi(x) - A(x))`` is reported alongside.
    """
    lifted = lift(sys)
    n = sys.n
    Z = np.atleast_2d(np.asarray(samples, dtype=float))
    if Z.shape[1] != n + sys.m:
        raise ValueError(f"samples must have {n + sys.m} coordinates")
    base = Z[:, :n]
    scale = system_scale(sys, base)
    pscale = max(float(np.linalg.norm(Z[:, n:], axis=1).max(initial=0.0)), 1.0)
    rh, rb, rt = [], [], []
    for z in Z:
        y, q = z[:n], z[n:]
        if phi_inv is not None:
            x = phi_inv.evaluate(y)
            _, _, P = _dual_point(phi, Phi, np.concatenate([x, q]), n)
            rh.append(abs(lifted.H.evaluate(np.concatenate([x, P.T @ q]))[0] - lifted.H.evaluate(z)[0]))
        else:
            x, p, P = _dual_point(phi, Phi, z, n)
            img = np.concatenate([phi.evaluate(x), np.linalg.solve(P.T, p)])
            rh.append(abs(lifted.H.evaluate(img)[0] - lifted.H.evaluate(z)[0]))
        x, p, P = _dual_point(phi, Phi, z, n)
        rb.append(np.linalg.norm(P @ sys.b_at(x) - sys.b_at(phi.evaluate(x))))
        pulled = np.linalg.solve(P, sys.A_at(phi.evaluate(x)) @ phi.jacobian(x))
        rt.append(np.linalg.norm(p @ (pulled - sys.A_at(x))))
    conds = [ConditionResult("H_invariance", rh, tol * scale * pscale, Z),
             ConditionResult("b_invariance", rb, tol * scale, Z)]
    theta = ConditionResult("theta_invariance", rt, tol * scale * pscale, Z)
    extra = {
        "verdicts_agree": conds[0].verdict == conds[1].verdict,
        "theta_invariance": theta.to_dict(),
    }
    tols = {"tol": tol, "scale": scale, "p_scale": pscale}
    return SymmetryReport("dual", conds, tols, len(Z), extra)


def theta_matches(report: SymmetryReport) -> bool:
    t = report.extra["theta_invariance"]
    return verdict_for(t["max_residual"], t["tol"]) == "pass"
