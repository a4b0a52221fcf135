import numpy as np
import pytest

from linsing.expr import parse
from linsing.system import SingularSystem

ANGLE = 0.7
_ACCEPTANCE = []


def rotation_text(a=ANGLE, inverse=False):
    c, s = float(np.cos(a)), float(np.sin(a))
    if inverse:
        s = -s
    return f"{c!r}*x1 - {s!r}*x2; {s!r}*x1 + {c!r}*x2; x3"


def rotation_matrix_text(a=ANGLE):
    c, s = float(np.cos(a)), float(np.sin(a))
    return f"{c!r}, {-s!r}, 0; {s!r}, {c!r}, 0; 0, 0, 1"


@pytest.fixture
def s1():
    return SingularSystem.from_text("1, 0; 0, 0", "x2; x1", 2, name="S1")


@pytest.fixture
def s2():
    return SingularSystem.from_text("0, 1, 0; -1, 0, 0; 0, 0, 0", "x1; x2; 0", 3, name="S2")


@pytest.fixture
def rot():
    return parse(rotation_text(), 3)


@pytest.fixture
def rot_inv():
    return parse(rotation_text(inverse=True), 3)


@pytest.fixture
def rot_matrix():
    return parse(rotation_matrix_text(), 3, kind="matrix")


@pytest.fixture
def samples3():
    return np.random.default_rng(0).uniform(-1, 1, (30, 3))


@pytest.fixture
def acceptance():
    """Record one acceptance line; the summary is printed at the end of the run."""
    def record(label, ok, detail=""):
        _ACCEPTANCE.append((label, bool(ok), detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip())
