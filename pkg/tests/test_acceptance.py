"""One test per acceptance criterion; each records a PASS/FAIL line for the run summary."""

import numpy as np
import sympy

from conftest import rotation_matrix_text, rotation_text
from linsing.cli import main
from linsing.constraints import run_chain
from linsing.dynamics import integrate, solution_defect
from linsing.expr import FunctionMap, constant_map, parse, to_text
from linsing.presymplectic import check_dual_invariance, lift
from linsing.symmetry import (check_D_invariance, check_finite_symmetry, check_infinitesimal,
                              construct_bundle_map, dynamic_symmetry_test, regular_bundle_map,
                              regular_specialize)
from linsing.system import SingularSystem, analyze_point
from linsing.variations import (Variation, composition_rule_check, flow_invariance_residual, invariance_test,
                                linearity_test)

RES_TOL = 1e-7


def _fmt(v):
    return f"{v:.3g}"


def test_criterion_1_constraint_chain(s1, s2, samples3, acceptance):
    at0 = run_chain(s1, [0.0, 0.0])
    at01 = run_chain(s1, [0.0, 1.0])
    # the chain confirms stabilization with one extra level at W = {0}
    dims_ok = at0.dims[:3] == [2, 1, 0] and at0.dims[3:] == [0] and at0.stabilized
    res_ok = all(lv.residual <= RES_TOL for lv in at0.levels)
    fail_ok = at01.status == "inconsistent_at_level_2"
    s2_ok = True
    for x in samples3:
        c = run_chain(s2, x)
        s2_ok &= (c.stabilized and len(c.levels) == 1 and c.final_subspace.shape == (3, 3)
                  and c.levels[0].residual <= RES_TOL)
    ok = dims_ok and res_ok and fail_ok and s2_ok
    acceptance("1 constraint chain", ok,
               f"S1(0,0) dims={at0.dims} {at0.status}; S1(0,1) {at01.status}; S2 all level-1 R^3: {s2_ok}")
    assert ok


def test_criterion_2_dynamics(s2, acceptance):
    traj = integrate(s2, [1.0, 0.0, 0.0], 2 * np.pi, 1e-3)
    ret = float(np.linalg.norm(traj.states[-1] - traj.states[0]))
    d1 = solution_defect(s2, traj)
    d2 = solution_defect(s2, integrate(s2, [1.0, 0.0, 0.0], 2 * np.pi, 5e-4))
    ratio = d1 / d2
    checks = {"return<=1e-6": ret <= 1e-6, "defect<=1e-5": d1 <= 1e-5, "halving>=8x": ratio >= 8}
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    acceptance("2 dynamics fidelity", ok,
               f"return={_fmt(ret)} defect={_fmt(d1)} halving ratio={ratio:.4f}"
               + (f" failed: {', '.join(failed)}" if failed else ""))
    assert ok


def test_criterion_3_finite_round_trip(s1, s2, rot, rot_matrix, samples3, acceptance):
    D = check_D_invariance(s2, rot, samples3)
    d_ok = D.passed and D.max_residual() <= 1e-10
    err = 0.0
    for x in samples3:
        bm = construct_bundle_map(s2, rot, x)
        Ur = analyze_point(s2, x).image_basis
        err = max(err, float(np.abs((bm.matrix - rot_matrix.evaluate(x)) @ Ur).max()))
    Phi = FunctionMap(lambda x: construct_bundle_map(s2, rot, x).matrix, 3, (3, 3))
    fin = check_finite_symmetry(s2, rot, Phi, samples3)
    swap = parse("x2; x1", 2)
    M1 = np.column_stack([np.zeros(11), np.linspace(-1, 1, 11)])
    sD = check_D_invariance(s1, swap, M1)
    sF = [check_finite_symmetry(s1, swap, parse(P, 2), M1) for P in ("1, 0; 0, 1", "0, 1; 1, 0")]
    swap_ok = (sD.verdict == "fail" and sD.max_residual() >= 0.5
               and all(r.verdict == "fail" and r.max_residual() >= 0.5 for r in sF))
    ok = d_ok and err <= 1e-10 and fin.passed and swap_ok
    acceptance("3 finite-symmetry round trip", ok,
               f"D={_fmt(D.max_residual())} Phi-on-ImA={_fmt(err)} finite={fin.verdict}; "
               f"swap D={_fmt(sD.max_residual())} finite>={_fmt(min(r.max_residual() for r in sF))}")
    assert ok


def test_criterion_4_infinitesimal(s2, samples3, acceptance):
    V = parse("-x2; x1; 0", 3)
    inf = check_infinitesimal(s2, V, None, samples3)
    dyn = dynamic_symmetry_test(s2, [1.0, 0.0, 0.0], 1.0, 1e-3, V=V, eps_list=[0.1, 0.5])
    T = parse("1; 0; 0", 3)
    near = np.array([[0.0, 0.0, 0.0], [0.01, 0.0, 0.0], [0.0, -0.01, 0.02]])
    tinf = check_infinitesimal(s2, T, None, near)
    near_res = max(max(c.residuals) for c in tinf.conditions)
    tdyn = dynamic_symmetry_test(s2, [1.0, 0.0, 0.0], 1.0, 1e-3, V=T, eps_list=[0.1])
    ok = (inf.passed and inf.max_residual() <= 1e-10 and dyn.passed and dyn.max_residual() <= 1e-5
          and tinf.verdict == "fail" and near_res >= 0.5 and tdyn.verdict == "fail")
    acceptance("4 infinitesimal conditions", ok,
               f"rotation B-residual={_fmt(inf.max_residual())} flow defect={_fmt(dyn.max_residual())}; "
               f"translation residual={_fmt(near_res)} flow defect={_fmt(tdyn.max_residual())}")
    assert ok


def test_criterion_5_regular(acceptance):
    sys = SingularSystem.from_text("1, 0; 0, 1", "-x2; x1", 2)
    X = np.vstack([[0.0, 0.0], np.random.default_rng(5).uniform(-1, 1, (20, 2))])
    rb = regular_specialize(sys, X, V=parse("-x2; x1", 2)).max_residual()
    rt = regular_specialize(sys, [[0.0, 0.0]], V=parse("1; 0", 2)).max_residual()
    phi = parse(rotation_text(0.4).rsplit(";", 1)[0], 2)
    fin = check_finite_symmetry(sys, phi, regular_bundle_map(sys, phi), X)
    ok = rb <= 1e-12 and rt >= 0.9 and fin.passed and fin.max_residual() <= 1e-10
    acceptance("5 regular specialization", ok,
               f"[V=b]={_fmt(rb)} [V=e1]={_fmt(rt)} forced Phi finite={_fmt(fin.max_residual())}")
    assert ok


def test_criterion_6_presymplectic(s2, acceptance):
    lifted = lift(s2)
    names = lifted.theta.variables
    syms = {n: sympy.Symbol(n) for n in names}
    theta = [sympy.sympify(to_text(e, names), locals=syms) for e in lifted.theta_x]
    hand_theta = [-syms["p2"], syms["p1"], 0]
    H = sympy.sympify(lifted.H.to_text(), locals=syms)
    hand_H = syms["p1"] * syms["x1"] + syms["p2"] * syms["x2"]
    expr_ok = all(sympy.simplify(a - b) == 0 for a, b in zip(theta, hand_theta)) and sympy.expand(H - hand_H) == 0
    Z = np.random.default_rng(6).uniform(-1, 1, (100, 6))
    skew_ok = all(np.array_equal(lifted.omega(z), -lifted.omega(z).T) for z in Z)
    closed = max(lifted.closedness_residual(z) for z in Z)
    I3 = constant_map(np.eye(3), 3)
    twice, half = parse("2*x1; 2*x2; 2*x3", 3), parse("x1/2; x2/2; x3/2", 3)
    pairs = [
        (parse(rotation_text(), 3), parse(rotation_text(inverse=True), 3), parse(rotation_matrix_text(), 3)),
        (twice, half, constant_map(2 * np.eye(3), 3)),
        (parse("x1 + 1; x2; x3", 3), parse("x1 - 1; x2; x3", 3), I3),
        (twice, half, I3),
    ]
    agree = []
    for phi, phi_inv, Phi in pairs:
        dual = check_dual_invariance(s2, phi, Phi, Z[:30], phi_inv)
        base = check_finite_symmetry(s2, phi, Phi, Z[:30, :3]).condition("b_invariance").verdict
        agree.append((dual.condition("H_invariance").verdict, base))
    verdicts_ok = all(a == b for a, b in agree) and {b for _, b in agree} == {"pass", "fail"}
    ok = expr_ok and skew_ok and closed <= 1e-12 and verdicts_ok
    acceptance("6 presymplectic lift", ok,
               f"theta/H match={expr_ok} skew={skew_ok} closedness={_fmt(closed)} "
               f"dual/base verdicts={[a for a, _ in agree]}")
    assert ok


def _random_variation(rng, n=2):
    rows = []
    for _ in range(n):
        a, b, c, d = (float(v) for v in rng.uniform(-1.5, 1.5, 4))
        i, j = (int(v) + 1 for v in rng.integers(0, n, 2))
        rows.append(f"{a!r}*x{i} + sin({b!r}*eps + x{j}) + {c!r}*eps*x{j}^2 + exp({d!r}*eps)*x{i}*x{j}")
    return Variation.from_text("; ".join(rows), n)


def _random_fibre_field(rng, linear):
    """n = 1, m = 2 field with a polynomial fibre block of degree <= 3."""
    c = [float(v) for v in rng.choice([-1, 1], 6) * rng.uniform(0.5, 2.0, 6)]
    fib = [f"{c[0]!r}*cos(x1)*x2 + {c[1]!r}*x3", f"{c[2]!r}*x2 + {c[3]!r}*exp(x1)*x3"]
    if not linear:
        k = int(rng.integers(0, 3))
        extra = [f"{c[4]!r}", f"{c[4]!r}*x2*x3", f"{c[5]!r}*x3^3"][k]
        fib[int(rng.integers(0, 2))] += f" + {extra}"
    return parse(f"sin(x1); {fib[0]}; {fib[1]}", 3)


def test_criterion_7_variation_calculus(acceptance):
    rng = np.random.default_rng(7)
    comp = 0.0
    for _ in range(50):
        f, g = _random_variation(rng), _random_variation(rng)
        comp = max(comp, composition_rule_check(g, f, rng.uniform(-1, 1, 2)))
    sq = invariance_test(parse("x1^2", 1), parse("1", 1), parse("0", 1), [0.2, 0.1, 0.05],
                         np.linspace(0.5, 1.5, 5)[:, None])
    ratios = sq.extra["ratios"]
    ratio_ok = len(ratios) == 2 and all(3.5 <= r <= 4.5 for r in ratios)
    X = parse("-x2 + 0.3*x1^2; x1 - 0.2*x2^3", 2)
    selfinv = max(flow_invariance_residual(X, x, 0.5) for x in rng.uniform(-1, 1, (5, 2)))
    S = rng.uniform(-1, 1, (8, 3))
    agree, truth = 0, 0
    for k in range(50):
        linear = k % 2 == 0
        rep = linearity_test(_random_fibre_field(rng, linear), 1, S)
        agree += rep.extra["agree"]
        truth += rep.passed == linear
    ok = comp <= 1e-10 and ratio_ok and selfinv <= 1e-6 and agree == 50 and truth == 50
    acceptance("7 variation calculus", ok,
               f"composition={_fmt(comp)} ratios={[round(r, 4) for r in ratios]} "
               f"flow self-invariance={_fmt(selfinv)} linearity agree={agree}/50 correct={truth}/50")
    assert ok


def test_criterion_8_determinism(tmp_path, acceptance):
    (tmp_path / "s2.sys").write_text("[system]\nn = 3\nm = 3\nA = 0, 1, 0; -1, 0, 0; 0, 0, 0\nb = x1; x2; 0\n")
    (tmp_path / "r.cand").write_text(f"[candidate]\nphi = {rotation_text()}\nV = -x2; x1; 0\n")
    sys_file, cand = str(tmp_path / "s2.sys"), str(tmp_path / "r.cand")
    commands = {
        "analyze": ["analyze", sys_file, "--samples", "30", "--seed", "11"],
        "check": ["check", sys_file, cand, "--kind", "infinitesimal", "--samples", "30", "--seed", "11"],
        "D": ["check", sys_file, cand, "--kind", "D", "--samples", "30", "--seed", "11"],
    }
    same = {}
    for name, argv in commands.items():
        outs = []
        for rep in range(2):
            path = tmp_path / f"{name}{rep}.json"
            main(argv + ["-o", str(path)])
            outs.append(path.read_bytes())
        same[name] = outs[0] == outs[1]
    ok = all(same.values())
    acceptance("8 determinism", ok, " ".join(f"{k}={v}" for k, v in same.items()))
    assert ok
