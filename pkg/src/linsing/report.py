"""Per-condition residual reports with pass / marginal / fail verdicts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

PASS, MARGINAL, FAIL = "pass", "marginal", "fail"
EXIT_CODES = {PASS: 0, FAIL: 1, MARGINAL: 5}


def verdict_for(value: float, tol: float) -> str:
    if value <= tol:
        return PASS
    if value <= 10 * tol:
        return MARGINAL
    return FAIL


def combine(verdicts) -> str:
    verdicts = list(verdicts)
    if FAIL in verdicts:
        return FAIL
    if MARGINAL in verdicts:
        return MARGINAL
    return PASS


@dataclass
class ConditionResult:
    """Residuals of one condition at each sample point.

    ``tol`` is the absolute threshold actually applied (relative tolerance
    times the system scale).
    """

    name: str
    residuals: np.ndarray
    tol: float
    points: np.ndarray
    worst_count: int = 3

    def __post_init__(self):
        self.residuals = np.asarray(self.residuals, dtype=float).ravel()
        self.points = np.asarray(self.points, dtype=float)

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max(initial=0.0))

    @property
    def verdict(self) -> str:
        return verdict_for(self.max_residual, self.tol)

    def worst_points(self) -> list:
        order = sorted(range(len(self.residuals)), key=lambda i: (-self.residuals[i], i))
        return [{"index": i, "point": [float(v) for v in self.points[i]], "residual": float(self.residuals[i])}
                for i in order[: self.worst_count]]

    def to_dict(self) -> dict:
        return {
            "condition": self.name,
            "max_residual": self.max_residual,
            "tol": float(self.tol),
            "verdict": self.verdict,
            "worst_points": self.worst_points(),
        }


@dataclass
class SymmetryReport:
    kind: str
    conditions: list
    tolerances: dict
    sample_count: int
    extra: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return combine(c.verdict for c in self.conditions)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.verdict]

    def condition(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def max_residual(self, name: str | None = None) -> float:
        if name is not None:
            return self.condition(name).max_residual
        return max((c.max_residual for c in self.conditions), default=0.0)

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "verdict": self.verdict,
            "sample_count": self.sample_count,
            "tolerances": dict(self.tolerances),
            "conditions": [c.to_dict() for c in self.conditions],
        }
        if self.extra:
            out["extra"] = self.extra
        return out


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"
