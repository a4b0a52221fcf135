"""Variations of maps, generalized Lie derivatives and flow-based invariance.

A variation is a family ``f_eps(x) = h(eps, x)``; its infinitesimal variation
is ``w(x) = d/d eps h(eps, x)`` at ``eps = 0``.  For a map ``h_o`` and vector
fields ``X`` (source) and ``Y`` (target) the transformed family
``h_eps = F_Y^-eps o h_o o F_X^eps`` has infinitesimal variation
``w_h = T h_o X - Y o h_o``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dual import Dual
from .errors import NotProjectable, ShapeError
from .expr import FunctionMap, SmoothMap, default_variables, parse
from .integrators import flow
from .report import ConditionResult, SymmetryReport

VAR_TOL = 1e-8
LAMBDAS = (2.0, 0.5, -1.0)


def _du(v):
    return v.du if isinstance(v, Dual) else 0.0


@dataclass(frozen=True)
class Variation:
    """``h(eps, x)`` with ``eps`` as the first variable."""

    h: SmoothMap

    def __post_init__(self):
        if self.h.arity < 1 or self.h.kind != "vector":
            raise ShapeError("a variation is a vector map of (eps, x1, ..., xn)")

    @classmethod
    def from_text(cls, text: str, n: int) -> "Variation":
        return cls(parse(text, variables=("eps",) + default_variables(n), kind="vector"))

    @property
    def n(self) -> int:
        return self.h.arity - 1

    @property
    def q(self) -> int:
        return self.h.shape[0]

    def at(self, eps: float, x) -> np.ndarray:
        return self.h.evaluate(np.concatenate([[eps], np.asarray(x, dtype=float).ravel()]))

    def base(self, x) -> np.ndarray:
        return self.at(0.0, x)

    def base_jacobian(self, x) -> np.ndarray:
        """Jacobian of ``h_o`` in the x slots."""
        return np.asarray(self.h.jacobian(np.concatenate([[0.0], np.asarray(x, dtype=float)])))[:, 1:]

    def dual_values(self, eps_dual, xs):
        return self.h.evaluate_values([eps_dual] + list(xs))


def infinitesimal_variation(h: Variation, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    d = np.zeros(h.h.arity)
    d[0] = 1.0
    return h.h.jvp(np.concatenate([[0.0], x]), d)


def _composed_variation(g: Variation, f: Variation, x) -> np.ndarray:
    """Infinitesimal variation of ``eps -> g_eps o f_eps`` by one dual pass."""
    e = Dual(0.0, 1.0)
    ys = f.dual_values(e, [float(v) for v in x])
    ys = [y if isinstance(y, Dual) else Dual(y, 0.0) for y in ys]
    return np.array([_du(v) for v in g.dual_values(e, ys)])


def composition_rule_check(g: Variation, f: Variation, x) -> float:
    """``|| w_{g.f} - (w_g o f_o + T g_o w_f) ||`` at ``x``."""
    if g.n != f.q:
        raise ShapeError(f"g takes {g.n} coordinates, f produces {f.q}")
    x = np.asarray(x, dtype=float).ravel()
    lhs = _composed_variation(g, f, x)
    y = f.base(x)
    rhs = infinitesimal_variation(g, y) + g.base_jacobian(y) @ infinitesimal_variation(f, x)
    return float(np.linalg.norm(lhs - rhs))


def inverse_variation_check(f: Variation, g: Variation, x) -> float:
    """For ``g_eps`` inverse to ``f_eps``: ``|| w_g + T g_o w_f o g_o ||`` at ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    lhs = infinitesimal_variation(g, x)
    rhs = -g.base_jacobian(x) @ infinitesimal_variation(f, g.base(x))
    return float(np.linalg.norm(lhs - rhs))


def generalized_lie_derivative(h_o, X, Y, x) -> np.ndarray:
    """``T h_o(x) X(x) - Y(h_o(x))``."""
    x = np.asarray(x, dtype=float).ravel()
    if X.shape != (h_o.arity,) or Y.shape != (h_o.shape[0],) or Y.arity != h_o.shape[0]:
        raise ShapeError("X must live on the source of h_o and Y on its target")
    return np.asarray(h_o.jacobian(x)) @ X.evaluate(x) - Y.evaluate(h_o.evaluate(x))


def _field_batch(F):
    return F.evaluate_batch


class FlowTransform(FunctionMap):
    """``x -> F_Y^-eps(h_o(F_X^eps(x)))`` with numerically integrated flows."""

    def __init__(self, h_o, X, Y, eps: float, step: float | None = None, fd_step: float = 1e-6):
        self.h_o, self.X, self.Y, self.eps, self.step = h_o, X, Y, float(eps), step
        super().__init__(lambda x: self.evaluate_batch(x[None, :])[0], h_o.arity, h_o.shape,
                         fd_step, name=f"flow transform eps={eps:g}")

    def evaluate_batch(self, Xs):
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        A = flow(_field_batch(self.X), Xs, self.eps, self.step)
        B = self.h_o.evaluate_batch(A)
        return flow(_field_batch(self.Y), B, -self.eps, self.step)


def flow_transform(h_o, X, Y, eps: float, step: float | None = None) -> FlowTransform:
    return FlowTransform(h_o, X, Y, eps, step)


def invariance_test(h_o, X, Y, eps_list, samples, tol: float = VAR_TOL,
                    step: float | None = None) -> SymmetryReport:
    """Invariance of ``h_o`` under the pair of flows, from both sides.

    Reports ``sup ||h_eps - h_o||`` per eps and ``sup ||w_h||``; the verdict is
    the combination of both and ``extra["agree"]`` says whether they concur.
    The remainders ``||h_eps - h_o - eps w_h||`` are second order, so halving
    eps divides them by about 4 (``extra["ratios"]``).
    """
    S = np.atleast_2d(np.asarray(samples, dtype=float))
    eps_list = sorted({float(e) for e in eps_list}, reverse=True)
    if not eps_list or eps_list[-1] <= 0:
        raise ValueError("eps values must be positive")
    H0 = h_o.evaluate_batch(S)
    scale = max(1.0, float(np.linalg.norm(H0, axis=1).max(initial=0.0)))
    W = np.array([generalized_lie_derivative(h_o, X, Y, x) for x in S])
    conds = [ConditionResult("w_h", np.linalg.norm(W, axis=1), tol * scale, S)]
    remainders = {}
    for eps in eps_list:
        He = FlowTransform(h_o, X, Y, eps, step).evaluate_batch(S)
        conds.append(ConditionResult(f"h_eps[eps={eps:g}]", np.linalg.norm(He - H0, axis=1), tol * scale, S))
        remainders[eps] = float(np.linalg.norm(He - H0 - eps * W, axis=1).max(initial=0.0))
    ratios = []
    for a, b in zip(eps_list, eps_list[1:]):
        if abs(a - 2 * b) <= 1e-12 * a and remainders[b] > 0:
            ratios.append(remainders[a] / remainders[b])
    w_ok = conds[0].verdict == "pass"
    eps_ok = all(c.verdict == "pass" for c in conds[1:])
    extra = {
        "agree": w_ok == eps_ok,
        "remainders": {f"{e:g}": r for e, r in remainders.items()},
        "ratios": ratios,
        "invariant": w_ok and eps_ok,
    }
    tols = {"tol": tol, "scale": scale, "step": step if step is not None else "eps/100"}
    return SymmetryReport("invariance", conds, tols, len(S), extra)


def _split(Y, n):
    N = Y.arity
    if Y.shape != (N,) or not 0 <= n <= N:
        raise ShapeError("Y must be a vector field on R^(n+m)")
    return N - n


def induced_base_field(Y, n: int) -> FunctionMap:
    """``x -> Y_base(x, 0)``."""
    m = _split(Y, n)
    return FunctionMap(lambda x: Y.evaluate(np.concatenate([x, np.zeros(m)]))[:n], n, (n,), name="induced X")


def projectability_test(Y, n: int, samples, tol: float = VAR_TOL, probes=None) -> SymmetryReport:
    """Residual of the base block of ``Y`` depending on the fibre coordinates."""
    m = _split(Y, n)
    Z = np.atleast_2d(np.asarray(samples, dtype=float))
    probes = np.eye(m) if probes is None else np.atleast_2d(np.asarray(probes, dtype=float))
    Y0 = Y.evaluate_batch(Z)
    scale = max(1.0, float(np.linalg.norm(Y0, axis=1).max(initial=0.0)))
    res = np.zeros(len(Z))
    for dv in probes:
        shifted = Z.copy()
        shifted[:, n:] += dv
        res = np.maximum(res, np.linalg.norm(Y.evaluate_batch(shifted)[:, :n] - Y0[:, :n], axis=1))
    base = Z.copy()
    base[:, n:] = 0.0
    extra = {"X_at_samples": Y.evaluate_batch(base)[:, :n].tolist()}
    conds = [ConditionResult("base_v_independence", res, tol * scale, Z)]
    return SymmetryReport("projectability", conds, {"tol": tol, "scale": scale}, len(Z), extra)


def linearity_test(Y, n: int, samples, tol: float = VAR_TOL, lambdas=LAMBDAS) -> SymmetryReport:
    """Linearity of the fibre block of a projectable field, two ways.

    (i) second differences along fibre basis vectors and their pairwise sums,
    together with ``Y_fiber(x, 0) = 0``; (ii) ``lambda Y_fiber(x, v) =
    Y_fiber(x, lambda v)`` for each lambda.  ``extra["agree"]`` compares them.
    """
    proj = projectability_test(Y, n, samples, tol)
    if not proj.passed:
        raise NotProjectable(f"base block depends on the fibre (residual {proj.max_residual():.3e})")
    m = _split(Y, n)
    Z = np.atleast_2d(np.asarray(samples, dtype=float))
    F0 = Y.evaluate_batch(Z)[:, n:]
    zero = Z.copy()
    zero[:, n:] = 0.0
    scale = max(1.0, float(np.linalg.norm(F0, axis=1).max(initial=0.0)))
    dirs = [np.eye(m)[j] for j in range(m)]
    dirs += [np.eye(m)[j] + np.eye(m)[k] for j in range(m) for k in range(j + 1, m)]
    second = np.zeros(len(Z))
    for d in dirs:
        P, M = Z.copy(), Z.copy()
        P[:, n:] += d
        M[:, n:] -= d
        D2 = Y.evaluate_batch(P)[:, n:] - 2 * F0 + Y.evaluate_batch(M)[:, n:]
        second = np.maximum(second, np.linalg.norm(D2, axis=1))
    offset = np.linalg.norm(Y.evaluate_batch(zero)[:, n:], axis=1)
    scaling = np.zeros(len(Z))
    for lam in lambdas:
        S = Z.copy()
        S[:, n:] *= lam
        scaling = np.maximum(scaling, np.linalg.norm(lam * F0 - Y.evaluate_batch(S)[:, n:], axis=1))
    c1 = ConditionResult("second_difference", np.maximum(second, offset), tol * scale, Z)
    c2 = ConditionResult("scaling", scaling, tol * scale, Z)
    extra = {"agree": c1.verdict == c2.verdict, "zero_offset": float(offset.max(initial=0.0))}
    return SymmetryReport("linearity", [c1, c2], {"tol": tol, "scale": scale, "lambdas": list(lambdas)},
                          len(Z), extra)


def flow_jacobian(X, x, eps: float, step: float | None = None, fd_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the time-eps flow at ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    E = np.eye(n) * fd_step
    F = flow(_field_batch(X), np.vstack([x + E, x - E]), eps, step)
    return ((F[:n] - F[n:]) / (2 * fd_step)).T


def flow_invariance_residual(X, x, eps: float, step: float | None = None, fd_step: float = 1e-6) -> float:
    """``|| T F_X^eps(x) X(x) - X(F_X^eps(x)) ||``."""
    x = np.asarray(x, dtype=float).ravel()
    J = flow_jacobian(X, x, eps, step, fd_step)
    Fx = flow(_field_batch(X), x[None, :], eps, step)[0]
    return float(np.linalg.norm(J @ X.evaluate(x) - X.evaluate(Fx)))


def eqfon_residual(h_o, X, Y, x, eps: float, step: float | None = None, fd_step: float = 1e-5) -> float:
    """Mismatch between ``d/d eps h_eps(x)`` and ``T F_Y^-eps (w_h o F_X^eps)(x)``."""
    x = np.asarray(x, dtype=float).ravel()
    if step is None:
        step = abs(eps) / 100 if eps else 1e-3
    lhs = (FlowTransform(h_o, X, Y, eps + fd_step, step).evaluate(x)
           - FlowTransform(h_o, X, Y, eps - fd_step, step).evaluate(x)) / (2 * fd_step)
    xe = flow(_field_batch(X), x[None, :], eps, step)[0]
    z = h_o.evaluate(xe)
    rhs = flow_jacobian(Y, z, -eps, step) @ generalized_lie_derivative(h_o, X, Y, xe)
    return float(np.linalg.norm(lhs - rhs))


def remainder_ratio_ok(report: SymmetryReport, lo: float = 3.5, hi: float = 4.5) -> bool:
    return bool(report.extra["ratios"]) and all(lo <= r <= hi for r in report.extra["ratios"])

