"""Command-line interface: ``linsing {analyze,integrate,check,lift}``.

Exit codes: 0 success or pass, 1 symmetry check failed, 2 input error
(file, parse, shape or kind precondition), 3 regularity violation, 4 initial
point not on the final constraint set, 5 marginal verdict, 6 numerical
failure (projection diverged, step rejected, flow blow-up, ...).
"""

from __future__ import annotations

import argparse
import sys as _sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .constraints import FD_STEP, TOL_JAC, classify_point, project_to_m1, regularity_probe
from .dynamics import DEFECT_TOL, PROJ_TOL, integrate
from .errors import (ConfigError, ExpressionError, FlowBlowup, InconsistentPoint, LinsingError,
                     NotConsistent, NotOnFinal, NotRegular, ShapeError)
from .expr import parse
from .io import dumps_system, load_candidate, load_system
from .presymplectic import as_singular_system, check_dual_invariance, lift
from .report import dumps
from .sampling import parse_box, sample_box
from .symmetry import (SYM_TOL, DiffeoCandidate, check_D_invariance, check_finite_symmetry,
                       check_infinitesimal, consistent_specialize, dynamic_symmetry_test,
                       regular_specialize)
from .system import TOL, TOL_RANK

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_REGULARITY, EXIT_NOT_FINAL, EXIT_MARGINAL, EXIT_NUMERICAL = range(7)
KINDS = ("finite", "D", "infinitesimal", "dynamic", "regular", "consistent", "dual")


@dataclass
class RunConfig:
    system: str
    command: str
    tol_rank: float = TOL_RANK
    tol: float = TOL
    proj_tol: float = PROJ_TOL
    fd_step: float = FD_STEP
    step: float = 1e-3
    sym_tol: float = SYM_TOL
    defect_tol: float = DEFECT_TOL
    samples: int = 100
    box: list = field(default_factory=lambda: [(-1.0, 1.0)])
    seed: int = 42
    workers: int = 1
    output: Optional[str] = None

    def validate(self):
        for key in ("tol_rank", "tol", "proj_tol", "fd_step", "step", "sym_tol", "defect_tol"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key.replace('_', '-')} must be positive")
        if self.samples < 1:
            raise ConfigError("samples must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def tolerances(self) -> dict:
        d = asdict(self)
        for key in ("system", "command", "output", "workers"):
            d.pop(key)
        d["box"] = [list(b) for b in self.box]
        return d


def _constant(text: str) -> float:
    """A number or constant expression such as ``2*pi``."""
    return float(parse(text, 0, kind="vector").evaluate([])[0])


def _vector(text: str) -> np.ndarray:
    return parse(text.replace(",", ";"), 0, kind="vector").evaluate([])


def _box(text) -> list:
    if isinstance(text, list):
        return text
    try:
        pairs = [tuple(_vector(part)) for part in str(text).split(";") if part.strip()]
    except ExpressionError as exc:
        raise ConfigError(f"bad box {text!r}: {exc}") from None
    if not pairs or any(len(p) != 2 for p in pairs):
        raise ConfigError(f"bad box {text!r}; expected LO,HI[;LO,HI...]")
    return pairs


_CONVERT = {"tol": float, "tol_rank": float, "proj_tol": float, "fd_step": float, "step": float,
            "samples": int, "seed": int, "workers": int, "box": _box}


def _config(args, run_defaults: dict) -> RunConfig:
    cfg = RunConfig(args.system, args.command)
    for key, conv in _CONVERT.items():
        raw = getattr(args, key, None)
        if raw is None:
            raw = run_defaults.get(key)
        if raw is not None:
            try:
                setattr(cfg, key, conv(raw))
            except ValueError:
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
    for key in ("sym_tol", "defect_tol"):
        if getattr(args, key, None) is not None:
            setattr(cfg, key, float(getattr(args, key)))
    cfg.output = getattr(args, "output", None)
    cfg.validate()
    return cfg


def _emit(text: str, path: Optional[str]):
    if path is None or path == "-":
        _sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _samples(cfg: RunConfig, dim: int) -> np.ndarray:
    return sample_box(parse_box(cfg.box, dim), cfg.samples, cfg.seed)


# -- analyze ---------------------------------------------------------------------

def analyze_report(system, cfg: RunConfig, points=None, project_m1: bool = False) -> dict:
    box = parse_box(cfg.box, system.n)
    probe = regularity_probe(system, box, cfg.samples, cfg.seed, cfg.tol, cfg.tol_rank, cfg.fd_step,
                             TOL_JAC, cfg.workers)
    pts = sample_box(box, cfg.samples, cfg.seed)
    projected = None
    if project_m1:
        pts, projected = project_to_m1(system, pts, cfg.tol, cfg.tol_rank, cfg.fd_step)

    def classify(p):
        return classify_point(system, p, cfg.tol, fd_step=cfg.fd_step, tol_rank=cfg.tol_rank)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(classify, pts))
    else:
        results = [classify(p) for p in pts]
    status_counts: dict = {}
    per_sample = []
    for i, c in enumerate(results):
        status_counts[c.chain.status] = status_counts.get(c.chain.status, 0) + 1
        entry = {"index": i, "point": [float(v) for v in c.chain.x], "status": c.chain.status,
                 "level": c.level, "marginal": c.chain.marginal, "dims": c.chain.dims}
        if projected is not None:
            entry["projected"] = bool(projected[i])
        per_sample.append(entry)
    lengths = [c.level for c in results]
    report = {
        "system": {"name": system.name, "n": system.n, "m": system.m},
        "config": cfg.tolerances(),
        "regularity": probe.to_dict(),
        "summary": {
            "samples": len(results),
            "on_final": sum(c.on_final for c in results),
            "status_counts": dict(sorted(status_counts.items())),
            "marginal_count": sum(c.chain.marginal for c in results),
            "chain_length_min": min(lengths),
            "chain_length_max": max(lengths),
            "projected_to_M1": project_m1,
        },
        "samples": per_sample,
    }
    if points:
        report["points"] = [classify(p).to_dict() for p in points]
    return report


def cmd_analyze(args) -> int:
    system, defaults = load_system(args.system)
    cfg = _config(args, defaults)
    points = [_vector(p) for p in (args.point or [])]
    for p in points:
        if p.size != system.n:
            raise ConfigError(f"point {list(p)} needs {system.n} coordinates")
    report = analyze_report(system, cfg, points, args.project_m1)
    _emit(dumps(report), cfg.output)
    return EXIT_REGULARITY if report["regularity"]["flags"] else EXIT_OK


# -- integrate -------------------------------------------------------------------

def _gauge(text):
    if text is None or text == "zero":
        return "zero"
    return _vector(text)


def cmd_integrate(args) -> int:
    system, defaults = load_system(args.system)
    cfg = _config(args, defaults)
    x0_text = args.x0 if args.x0 is not None else defaults.get("x0")
    t_text = args.t_end if args.t_end is not None else defaults.get("t_end")
    if x0_text is None or t_text is None:
        raise ConfigError("integrate needs --x0 and --t-end (or x0, t_end in [run])")
    x0, t_end = _vector(x0_text), _constant(t_text)
    if x0.size != system.n:
        raise ConfigError(f"x0 needs {system.n} coordinates")
    try:
        traj = integrate(system, x0, t_end, cfg.step, _gauge(args.gauge), cfg.tol, cfg.tol_rank, cfg.fd_step,
                         TOL_JAC, cfg.proj_tol, cfg.defect_tol)
    except NotOnFinal as exc:
        _sys.stdout.write(dumps({"error": str(exc), "classification": exc.classification}))
        return EXIT_NOT_FINAL
    summary = traj.summary(system)
    summary["config"] = cfg.tolerances()
    if cfg.output is None or cfg.output == "-":
        traj.write_csv(_sys.stdout)
        _sys.stderr.write(dumps(summary))
    else:
        with open(cfg.output, "w", encoding="utf-8", newline="") as fh:
            traj.write_csv(fh)
        _sys.stdout.write(dumps(summary))
    return EXIT_OK


# -- check -----------------------------------------------------------------------

def _on_m1(system, cfg, X):
    P, ok = project_to_m1(system, X, cfg.tol, cfg.tol_rank, cfg.fd_step)
    if not ok.any():
        raise InconsistentPoint("no sample could be projected onto M1")
    return P[ok], int((~ok).sum())


def run_check(system, cand, kind: str, cfg: RunConfig, x0=None, t_end=None, eps=()):
    X = _samples(cfg, system.n)
    extra = {}
    if cand.phi is not None and cand.phi_inv is not None:
        extra["inverse_residual"] = DiffeoCandidate(cand.phi, cand.phi_inv).validate(X)
    if kind == "finite":
        cand.require("phi", "Phi")
        rep = check_finite_symmetry(system, cand.phi, cand.Phi, X, cfg.sym_tol)
    elif kind == "D":
        cand.require("phi")
        P, dropped = _on_m1(system, cfg, X)
        extra["dropped_samples"] = dropped
        rep = check_D_invariance(system, cand.phi, P, cfg.sym_tol, cfg.tol_rank, cfg.tol)
    elif kind == "infinitesimal":
        cand.require("V")
        rep = check_infinitesimal(system, cand.V, cand.B, X, cfg.sym_tol, cfg.tol_rank)
    elif kind == "dynamic":
        if x0 is None or t_end is None:
            raise ConfigError("dynamic check needs --x0 and --t-end")
        if cand.phi is not None:
            rep = dynamic_symmetry_test(system, x0, t_end, cfg.step, phi=cand.phi, defect_tol=cfg.defect_tol,
                                        tol=cfg.tol, tol_rank=cfg.tol_rank, fd_step=cfg.fd_step,
                                        proj_tol=cfg.proj_tol)
        else:
            cand.require("V")
            rep = dynamic_symmetry_test(system, x0, t_end, cfg.step, V=cand.V, eps_list=eps or (0.1,),
                                        defect_tol=cfg.defect_tol, tol=cfg.tol, tol_rank=cfg.tol_rank,
                                        fd_step=cfg.fd_step, proj_tol=cfg.proj_tol)
    elif kind == "regular":
        if cand.V is not None:
            rep = regular_specialize(system, X, V=cand.V, tol=cfg.sym_tol, tol_rank=cfg.tol_rank)
        else:
            cand.require("phi")
            rep = regular_specialize(system, X, phi=cand.phi, tol=cfg.sym_tol, tol_rank=cfg.tol_rank)
    elif kind == "consistent":
        cand.require("V")
        P, dropped = _on_m1(system, cfg, X)
        extra["dropped_samples"] = dropped
        rep = consistent_specialize(system, cand.V, P, cfg.sym_tol, cfg.fd_step, cfg.tol_rank, cfg.tol)
    elif kind == "dual":
        cand.require("phi", "Phi")
        Z = _samples(cfg, system.n + system.m)
        rep = check_dual_invariance(system, cand.phi, cand.Phi, Z, cand.phi_inv, cfg.sym_tol)
    else:
        raise ConfigError(f"unknown kind {kind!r}")
    rep.extra.update(extra)
    return rep


def cmd_check(args) -> int:
    system, defaults = load_system(args.system)
    cfg = _config(args, defaults)
    cand = load_candidate(args.candidate, system.n, system.m)
    x0_text = args.x0 if args.x0 is not None else defaults.get("x0")
    t_text = args.t_end if args.t_end is not None else defaults.get("t_end")
    x0 = _vector(x0_text) if x0_text is not None else None
    t_end = _constant(t_text) if t_text is not None else None
    eps = tuple(_vector(args.eps)) if args.eps else ()
    try:
        rep = run_check(system, cand, args.kind, cfg, x0, t_end, eps)
    except NotOnFinal as exc:
        _sys.stdout.write(dumps({"error": str(exc), "classification": exc.classification}))
        return EXIT_NOT_FINAL
    out = rep.to_dict()
    out["config"] = cfg.tolerances()
    _emit(dumps(out), cfg.output)
    return rep.exit_code


# -- lift ------------------------------------------------------------------------

def cmd_lift(args) -> int:
    system, defaults = load_system(args.system)
    cfg = _config(args, defaults)
    lifted = as_singular_system(lift(system))
    text = dumps_system(lifted, "presymplectic lift: variables x1..xn then p1..pm (renamed to x1..x(n+m))")
    if not args.analyze:
        _emit(text, cfg.output)
        return EXIT_OK
    if cfg.output is None or cfg.output == "-":
        raise ConfigError("--analyze needs --output for the lifted system file")
    _emit(text, cfg.output)
    report = analyze_report(lifted, cfg)
    report["lifted_system"] = cfg.output
    _sys.stdout.write(dumps(report))
    return EXIT_REGULARITY if report["regularity"]["flags"] else EXIT_OK


# -- entry point -----------------------------------------------------------------

def _common(p):
    p.add_argument("system", help="system definition file")
    p.add_argument("--tol-rank", dest="tol_rank", help="relative rank threshold (default 1e-9)")
    p.add_argument("--tol", help="consistency tolerance (default 1e-7)")
    p.add_argument("--proj-tol", dest="proj_tol", help="projection tolerance (default 1e-9)")
    p.add_argument("--fd-step", dest="fd_step", help="finite-difference step (default 1e-6)")
    p.add_argument("--step", help="integration step (default 1e-3)")
    p.add_argument("--samples", help="number of random samples (default 100)")
    p.add_argument("--box", help="sample box LO,HI[;LO,HI...], one pair broadcast to every axis; "
                                 "write --box=-1,1 when LO is negative")
    p.add_argument("--seed", help="random seed (default 42)")
    p.add_argument("--workers", help="threads for per-sample work (default 1)")
    p.add_argument("--output", "-o", help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linsing", description="Analyze linearly singular systems A(x) x' = b(x).")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="constraint algorithm and regularity probe")
    _common(p)
    p.add_argument("--point", action="append", help="also report the full chain at this point (x1,x2,...)")
    p.add_argument("--project-m1", dest="project_m1", action="store_true",
                   help="project samples onto M1 before classifying")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("integrate", help="integrate on the final constraint set")
    _common(p)
    p.add_argument("--x0", help="initial point x1,x2,... (write --x0=-1,0 for a leading minus)")
    p.add_argument("--t-end", dest="t_end", help="final time; constant expressions such as 2*pi allowed")
    p.add_argument("--gauge", help="'zero' (default) or fixed kernel coefficients g1,g2,...")
    p.add_argument("--defect-tol", dest="defect_tol", help="solution defect tolerance (default 1e-5)")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("check", help="check a symmetry candidate")
    _common(p)
    p.add_argument("candidate", help="candidate expression file")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--sym-tol", dest="sym_tol", help="relative residual tolerance (default 1e-8)")
    p.add_argument("--defect-tol", dest="defect_tol", help="image defect tolerance (default 1e-5)")
    p.add_argument("--x0", help="initial point for kind=dynamic")
    p.add_argument("--t-end", dest="t_end", help="final time for kind=dynamic")
    p.add_argument("--eps", help="flow parameters for kind=dynamic with V, e.g. 0.1,0.5")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("lift", help="write the presymplectic lift as a system file")
    _common(p)
    p.add_argument("--analyze", action="store_true", help="run analyze on the lifted system")
    p.set_defaults(func=cmd_lift)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ExpressionError, ShapeError, NotRegular, NotConsistent, InconsistentPoint) as exc:
        print(f"linsing: error: {exc}", file=_sys.stderr)
        return EXIT_INPUT
    except (FlowBlowup, LinsingError, np.linalg.LinAlgError) as exc:
        print(f"linsing: numerical failure: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    _sys.exit(main())
