"""Classical fourth-order Runge-Kutta steps and batched flows."""

import math

import numpy as np

from .errors import FlowBlowup

BLOWUP_NORM = 1e6


def rk4_step(f, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, x)
    k2 = f(t + h / 2, x + h / 2 * k1)
    k3 = f(t + h / 2, x + h / 2 * k2)
    k4 = f(t + h, x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def flow(field, X0, eps: float, step: float | None = None, blowup: float = BLOWUP_NORM) -> np.ndarray:
    """Time-``eps`` flow of an autonomous field applied to the rows of ``X0``.

    ``field`` maps a ``(k, n)`` batch to ``(k, n)`` (e.g. ``SmoothMap.evaluate_batch``).
    Negative ``eps`` integrates backwards.  The default step is ``|eps| / 100``.
    """
    X = np.array(X0, dtype=float, ndmin=2)
    if eps == 0.0:
        return X
    step = abs(eps) / 100 if step is None else abs(step)
    nsteps = max(1, math.ceil(abs(eps) / step - 1e-9))
    h = eps / nsteps
    f = lambda t, Y: field(Y)  # noqa: E731
    for i in range(nsteps):
        X = rk4_step(f, i * h, X, h)
        if not np.all(np.isfinite(X)) or np.abs(X).max(initial=0.0) > blowup:
            raise FlowBlowup(f"flow left the region |x| <= {blowup:g} at t = {(i + 1) * h:g}")
    return X
