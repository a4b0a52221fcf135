"""System and candidate definition files.

Both are INI-style files read with :mod:`configparser`.  A system file::

    [system]
    name = circle
    n = 3
    m = 3
    A = 0, 1, 0; -1, 0, 0; 0, 0, 0
    b = x1; x2; 0
    labels = x, y, z

    [run]
    samples = 100
    box = -1,1

Matrix rows are separated by ``;`` or by continuation lines, entries by
``,``.  Only whole-line ``#`` comments are allowed.  The optional ``[run]``
section supplies defaults for command-line options.  A candidate file has a
``[candidate]`` section with any of ``phi``, ``phi_inv``, ``V`` (n
expressions) and ``Phi``, ``B`` (m x m grids).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from typing import Optional

from .errors import ConfigError
from .expr import SmoothMap, default_variables, parse
from .system import SingularSystem

RUN_KEYS = ("tol", "tol_rank", "proj_tol", "fd_step", "step", "samples", "box", "seed", "t_end", "x0",
            "workers")


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                   inline_comment_prefixes=None)
    cp.optionxform = str  # keys are case-sensitive: phi and Phi differ
    return cp


def _read(path) -> configparser.ConfigParser:
    cp = _parser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cp


def _int(sec, key, path):
    try:
        return int(sec[key])
    except KeyError:
        raise ConfigError(f"{path}: missing key {key!r}") from None
    except ValueError:
        raise ConfigError(f"{path}: {key} must be an integer") from None


def system_from_config(cp: configparser.ConfigParser, path="<string>") -> SingularSystem:
    if "system" not in cp:
        raise ConfigError(f"{path}: missing [system] section")
    sec = cp["system"]
    n, m = _int(sec, "n", path), _int(sec, "m", path)
    for key in ("A", "b"):
        if key not in sec:
            raise ConfigError(f"{path}: missing key {key!r}")
    A = parse(sec["A"], n, kind="matrix")
    b = parse(sec["b"], n, kind="vector")
    labels = tuple(s.strip() for s in sec.get("labels", "").split(",") if s.strip())
    return SingularSystem(n, m, A, b, sec.get("name", "").strip(), labels)


def run_defaults(cp: configparser.ConfigParser) -> dict:
    if "run" not in cp:
        return {}
    unknown = set(cp["run"]) - set(RUN_KEYS)
    if unknown:
        raise ConfigError(f"unknown [run] keys: {', '.join(sorted(unknown))}")
    return dict(cp["run"])


def load_system(path):
    """Return ``(system, run_defaults)`` from a system file."""
    cp = _read(path)
    return system_from_config(cp, path), run_defaults(cp)


def loads_system(text: str) -> SingularSystem:
    cp = _parser()
    cp.read_string(text)
    return system_from_config(cp)


def _grid_text(f: SmoothMap) -> str:
    """One matrix row per continuation line."""
    return "\n    " + f.to_text().replace("; ", "\n    ")


def dumps_system(sys: SingularSystem, header: str = "") -> str:
    """Write a system in the file format; variables are renamed to x1..xn."""
    if not isinstance(sys.A, SmoothMap) or not isinstance(sys.b, SmoothMap):
        raise TypeError("only expression-defined systems can be written")
    names = default_variables(sys.n)
    A = sys.A.with_variables(names)
    b = sys.b.with_variables(names)
    lines = [f"# {line}" for line in header.splitlines()] if header else []
    lines.append("[system]")
    if sys.name:
        lines.append(f"name = {sys.name}")
    lines += [f"n = {sys.n}", f"m = {sys.m}", f"A = {_grid_text(A)}", f"b = {b.to_text()}"]
    if sys.labels:
        lines.append("labels = " + ", ".join(sys.labels))
    return "\n".join(lines) + "\n"


@dataclass
class Candidate:
    phi: Optional[SmoothMap] = None
    phi_inv: Optional[SmoothMap] = None
    Phi: Optional[SmoothMap] = None
    V: Optional[SmoothMap] = None
    B: Optional[SmoothMap] = None

    def require(self, *names):
        missing = [k for k in names if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"candidate file lacks {', '.join(missing)}")


def candidate_from_config(cp, n: int, m: int, path="<string>") -> Candidate:
    if "candidate" not in cp:
        raise ConfigError(f"{path}: missing [candidate] section")
    sec = cp["candidate"]
    unknown = set(sec) - {"phi", "phi_inv", "Phi", "V", "B"}
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(sorted(unknown))}")
    cand = Candidate()
    if "phi" in sec:
        cand.phi = parse(sec["phi"], n, kind="vector")
    if "phi_inv" in sec:
        cand.phi_inv = parse(sec["phi_inv"], n, kind="vector")
    if "Phi" in sec:
        cand.Phi = parse(sec["Phi"], n, kind="matrix")
    if "V" in sec:
        cand.V = parse(sec["V"], n, kind="vector")
    if "B" in sec:
        cand.B = parse(sec["B"], n, kind="matrix")
    for key, f, shape in (("phi", cand.phi, (n,)), ("phi_inv", cand.phi_inv, (n,)), ("V", cand.V, (n,)),
                          ("Phi", cand.Phi, (m, m)), ("B", cand.B, (m, m))):
        if f is not None and f.shape != shape:
            raise ConfigError(f"{path}: {key} has shape {f.shape}, expected {shape}")
    return cand


def load_candidate(path, n: int, m: int) -> Candidate:
    return candidate_from_config(_read(path), n, m, path)


def loads_candidate(text: str, n: int, m: int) -> Candidate:
    cp = _parser()
    cp.read_string(text)
    return candidate_from_config(cp, n, m)
