"""End-to-end acceptance checks; each test prints one PASS/FAIL line (run with -s to see them)."""
import itertools
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import FIXTURES, random_hz, random_miqp, random_polytope
from mtlreach.mtl import compile_cnf, evaluate, exhaustive_check, parse
from mtlreach.reach import apply_mtl, build_lifted, dynamics_residual, random_trajectory
from mtlreach.scenarios import build_problem, load, run_scenario, shipped
from mtlreach.scenarios.builders import region_polytope
from mtlreach.solve import read_mps, solve_bnb, solve_bruteforce
from mtlreach.zonoset import HPolytope, contains, generalized_intersection_hz, interval_hull, sample
from scipy.optimize import linprog

DESK = ("desk_door_key", "desk_energy", "desk_tsp", "desk_two_agent")
ALL_SCENARIOS = DESK + (
    "full_door_key",
    "full_energy_c1",
    "full_energy_c2",
    "full_tsp",
    "full_two_agent",
)
# (n_g, n_b, n_c) added by one clause, written out independently of the package table
EXPECTED_DELTA = {
    "prop": lambda t: (0, 0, 1),
    "not": lambda t: (0, 0, 1),
    "and": lambda t: (0, 0, 1),
    "or": lambda t: (1, 0, 1),
    "until": lambda t: (t, 0, t),
    "eventually": lambda t: (1, 0, 1),
    "always": lambda t: (0, 0, 1),
}


def report(num, title, ok, detail=""):
    print(f"\n[criterion {num:2d}] {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else ""))


def test_criterion_01_operator_encodings_exhaustive():
    t0 = time.perf_counter()
    bad = {}
    for kind in ("prop", "not", "and", "or", "until", "eventually", "always"):
        for tau in (1, 2, 3, 4):
            n = exhaustive_check(kind, tau)
            if n:
                bad[(kind, tau)] = n
    dt = time.perf_counter() - t0
    ok = not bad and dt < 5.0
    report(1, "operator encodings match trace semantics", ok, f"mismatches={bad or 0}, {dt:.2f}s")
    assert not bad
    assert dt < 5.0


def test_criterion_02_clause_complexity_table():
    failures = []
    n_clauses = 0
    for name in ALL_SCENARIOS:
        prob = build_problem(load(shipped(name)))
        M0 = prob.maps[0]
        clauses = compile_cnf(prob.formula, prob.N, M0.regions_of())
        lifted = apply_mtl(build_lifted(prob.sys, prob.maps, prob.N), clauses)
        base = len(lifted.deltas) - len(clauses)
        for c, applied in zip(clauses, lifted.deltas[base:]):
            n_clauses += 1
            want = EXPECTED_DELTA[c.kind](c.tau)
            if tuple(applied) != want or tuple(c.delta) != want:
                failures.append((name, c.kind, c.tau, tuple(applied), want))
    report(2, "per-clause complexity equals the operator table", not failures, f"{n_clauses} clauses, {len(ALL_SCENARIOS)} scenarios")
    assert not failures, failures


def _member_oracle(Z, x, tol):
    """x in Z by enumerating every binary assignment and solving a max-norm LP."""
    G, Gb, c = Z.cont_generators, Z.bin_generators, Z.center
    G = G.toarray() if hasattr(G, "toarray") else np.asarray(G)
    Gb = Gb.toarray() if hasattr(Gb, "toarray") else np.asarray(Gb)
    Ac = Z.con_cont.toarray() if hasattr(Z.con_cont, "toarray") else np.asarray(Z.con_cont)
    Ab = Z.con_bin.toarray() if hasattr(Z.con_bin, "toarray") else np.asarray(Z.con_bin)
    n, m = G.shape[1], Z.dim
    for bits in itertools.product((0.0, 1.0), repeat=Gb.shape[1]):
        xb = np.array(bits)
        t = x - c - Gb @ xb
        A_ub = np.block([[G, -np.ones((m, 1))], [-G, -np.ones((m, 1))]])
        b_ub = np.concatenate([t, -t])
        kw = {}
        if Ac.shape[0]:
            kw = {"A_eq": np.hstack([Ac, np.zeros((Ac.shape[0], 1))]), "b_eq": Z.con_rhs - Ab @ xb}
        cost = np.zeros(n + 1)
        cost[-1] = 1
        r = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=[(0, 1)] * n + [(0, None)], method="highs", **kw)
        if r.status == 0 and r.fun <= tol:
            return True
    return False


def test_criterion_03_generalized_intersection():
    rng = np.random.default_rng(2024)
    tol = 1e-6
    mismatches = checked = inside = 0
    for inst in range(50):
        n_b = int(rng.integers(1, 5))
        Z = random_hz(rng, n=2, n_g=int(rng.integers(2, 5)), n_b=n_b, n_c=int(rng.integers(0, 3)))
        m = int(rng.integers(1, 3))
        R = rng.normal(size=(m, 2))
        H = random_polytope(rng, n=m, m=int(rng.integers(1, 4)))
        I = generalized_intersection_hz(Z, R, H)
        lo, hi = interval_hull(Z, tighten=False)
        grid = np.stack(np.meshgrid(np.linspace(lo[0], hi[0], 5), np.linspace(lo[1], hi[1], 5)), -1).reshape(-1, 2)
        pts = list(grid) + [Z.decode(fp) for fp in sample(Z, 6, rng)]
        for x in pts:
            want = _member_oracle(Z, x, tol) and H.contains(R @ x, tol)
            got = contains(I, x, tol)[0]
            checked += 1
            inside += want
            mismatches += got != want
    report(3, "generalized intersection matches the conjunction oracle", mismatches == 0, f"{checked} points, {inside} inside, {mismatches} mismatches")
    assert mismatches == 0


def _independent_sizes(prob):
    """Lifted-set complexity summed from per-step map sizes, the input set and the dynamics rows."""
    n_x, U, N = prob.sys.n_x, prob.sys.input_set, prob.N
    n = n_g = n_b = 0
    n_c = n_x  # x_0 pinned
    for k in range(N + 1):
        g, b, c = prob.maps[k].set.complexity
        n += n_x + prob.maps[k].n_b
        n_g, n_b, n_c = n_g + g, n_b + b, n_c + c
    n += N * U.dim
    n_g += N * U.n_g
    n_b += N * U.n_b
    n_c += N * (U.n_c + n_x)
    return {"n": n, "n_g": n_g, "n_b": n_b, "n_c": n_c}


@pytest.mark.parametrize("name", DESK)
def test_criterion_04_reachability_soundness(name):
    prob = build_problem(load(shipped(name)))
    lifted = build_lifted(prob.sys, prob.maps, prob.N)
    Z = lifted.set
    g, b, c = Z.complexity
    sizes_ok = {"n": Z.dim, "n_g": g, "n_b": b, "n_c": c} == _independent_sizes(prob)
    W = prob.sys.disturbance(prob.maps[0])
    rng = np.random.default_rng(11)
    outside, worst = 0, 0.0
    for _ in range(20):
        xs, xis, us = random_trajectory(prob.sys, prob.maps, prob.N, rng)
        assert dynamics_residual(prob.sys, W, xs, us, xis) <= 1e-9
        ok, fp = contains(Z, lifted.index.stack(xs, xis, us))
        if not ok:
            outside += 1
            continue
        s, i, u = lifted.index.unstack(Z.decode(fp))
        worst = max(worst, dynamics_residual(prob.sys, W, s, u, np.round(i)))
    ok = outside == 0 and worst <= 1e-9 and sizes_ok
    report(4, f"reachability soundness [{name}]", ok, f"outside={outside}, max residual={worst:.2e}, sizes={'ok' if sizes_ok else 'MISMATCH'}")
    assert sizes_ok
    assert outside == 0
    assert worst <= 1e-9


def test_criterion_05_solver_matches_bruteforce():
    rng = np.random.default_rng(5)
    bad = []
    n_inf = 0
    for i in range(100):
        infeasible = i % 5 == 4
        m = random_miqp(rng, infeasible=infeasible)
        assert m.n_bin <= 12
        a = solve_bnb(m, gap=1e-9)
        b = solve_bruteforce(m)
        n_inf += b.status == "infeasible"
        if (a.status == "infeasible") != (b.status == "infeasible"):
            bad.append((i, a.status, b.status))
        elif b.status != "infeasible" and abs(a.objective - b.objective) > 1e-6 * max(1.0, abs(b.objective)):
            bad.append((i, a.objective, b.objective))
    report(5, "branch and bound agrees with exhaustive enumeration", not bad, f"100 instances, {n_inf} infeasible, {len(bad)} disagreements")
    assert not bad, bad


def _first_steps(sol, rid):
    j = sol.regions.index(rid)
    return np.flatnonzero(sol.indicators[:, j] > 0.5)


def test_criterion_06_door_key(desk_runs):
    art, secs = desk_runs("desk_door_key")
    sol, prob = art.solution, art.problem
    satisfied = evaluate(prob.formula, sol.trace(prob.maps[0].labels()), 0)
    order_ok = True
    for door, key in (("D1", "K1"), ("D2", "K2")):
        d, k = _first_steps(sol, door), _first_steps(sol, key)
        if len(d) and (not len(k) or d[0] < k[0]):
            order_ok = False
    goal = next(region_polytope(rc) for lc in prob.cfg.layers for rc in lc.regions if rc.id == "G")
    terminal_ok = goal.contains(sol.states[-1, :2], 1e-6)
    ok = satisfied and order_ok and terminal_ok and secs < 60
    report(6, "door-key plan", ok, f"formula={satisfied}, key-before-door={order_ok}, terminal in G={terminal_ok}, {secs:.1f}s")
    assert satisfied and order_ok and terminal_ok
    assert secs < 60


def test_criterion_07_energy(desk_runs):
    art, _ = desk_runs("desk_energy")
    sol, prob = art.solution, art.problem
    e = sol.states[:, 4]
    roles = {rc.id: rc.role for lc in prob.cfg.layers for rc in lc.regions}
    polys = {rc.id: region_polytope(rc) for lc in prob.cfg.layers for rc in lc.regions}
    bounds_ok = bool(np.all(e >= 0.0) and np.all(e <= 1.0))
    worst = 0.0
    geometry_ok = True
    for k in range(prob.N):
        active = [sol.regions[j] for j in np.flatnonzero(sol.indicators[k] > 0.5)]
        geometry_ok &= all(polys[r].contains(sol.states[k, :2], 1e-6) for r in active)
        want = 0.2 if any(roles[r] == "charge" for r in active) else -0.1
        worst = max(worst, abs((e[k + 1] - e[k]) - want))
    ok = bounds_ok and worst <= 1e-9 and geometry_ok
    report(7, "energy trace", ok, f"e in [{e.min():.3f}, {e.max():.3f}], max delta error={worst:.1e}")
    assert bounds_ok and geometry_ok
    assert worst <= 1e-9


def _reflected_boxes(lo, hi, v, ws_lo, ws_hi, N):
    """Step-by-step bouncing, used as a sentinel for the closed-form offsets."""
    lo, hi, v = np.array(lo, float), np.array(hi, float), np.array(v, float)
    out = [(lo.copy(), hi.copy())]
    for _ in range(N):
        lo, hi = lo + v, hi + v
        for d in range(lo.size):
            if lo[d] < ws_lo[d]:
                shift = 2 * (ws_lo[d] - lo[d])
                lo[d] += shift
                hi[d] += shift
                v[d] = -v[d]
            elif hi[d] > ws_hi[d]:
                shift = 2 * (hi[d] - ws_hi[d])
                lo[d] -= shift
                hi[d] -= shift
                v[d] = -v[d]
        out.append((lo.copy(), hi.copy()))
    return out


def test_criterion_08_tsp_moving_targets(desk_runs):
    art, _ = desk_runs("desk_tsp")
    sol, prob = art.solution, art.problem
    cfg = prob.cfg
    labels = prob.maps[0].labels()
    fired = {}
    for j, rid in enumerate(sol.regions):
        lab = labels[rid]
        if lab.startswith("C"):
            fired[lab] = fired.get(lab, False) or bool(np.any(sol.indicators[:, j] > 0.5))
    worst = 0.0
    for lc in cfg.layers:
        for rc in lc.regions:
            if rc.velocity is None:
                continue
            boxes = _reflected_boxes(rc.lo, rc.hi, rc.velocity, cfg.workspace.lo, cfg.workspace.hi, cfg.horizon)
            for k, (lo, hi) in enumerate(boxes):
                P = prob.maps[k].regions[prob.maps[k].index_of(rc.id)].polytope
                want = HPolytope.from_box(lo, hi)
                worst = max(worst, float(np.abs(P.ineq_rhs - want.ineq_rhs).max()))
                assert np.array_equal(P.ineq_matrix, want.ineq_matrix)
    # indicator hits are backed by geometry at that step
    hits_ok = all(
        prob.maps[k].regions[j].polytope.contains(sol.states[k, :2], 1e-6)
        for k in range(prob.N + 1)
        for j in np.flatnonzero(sol.indicators[k] > 0.5)
    )
    ok = len(fired) == 5 and all(fired.values()) and worst <= 1e-12 and hits_ok
    report(8, "moving-target tour", ok, f"fired={sorted(k for k, v in fired.items() if v)}, max map offset error={worst:.1e}")
    assert len(fired) == 5 and all(fired.values())
    assert hits_ok
    assert worst <= 1e-12


def _hex_apothem_distance(r):
    """max over the six edge normals (at 30 + 60 i degrees) of n_i . r."""
    ang = np.deg2rad(30 + 60 * np.arange(6))
    return (np.atleast_2d(r) @ np.stack([np.cos(ang), np.sin(ang)])).max(axis=1)


def test_criterion_09_two_agent(desk_runs):
    art, secs = desk_runs("desk_two_agent")
    sol, prob = art.solution, art.problem
    ex = prob.extras
    X = sol.states
    rel = X[:, 9:11]
    assert np.allclose(rel, X[:, 0:2] - X[:, 4:6], atol=1e-9)
    dist = _hex_apothem_distance(rel)
    margin = float((dist - ex["r_inner"]).min())
    p = X[:, 8]
    integral = bool(np.all(np.abs(p - np.round(p)) <= 1e-6) and set(np.round(p).astype(int)) <= {0, 1})
    ring_apothem = ex["r_outer"] * math.cos(math.pi / 6)
    inc_ok = True
    delivered = set()
    for k in range(prob.N):
        dp = round(p[k + 1] - p[k])
        if dp > 0:
            inc_ok &= bool(ex["r_inner"] - 1e-6 <= dist[k] <= ring_apothem + 1e-6)
        if dp < 0:
            here = [sol.regions[j] for j in np.flatnonzero(sol.indicators[k] > 0.5)]
            delivered.update(d for d in ex["deliveries"] if d in here)
    satisfied = evaluate(prob.formula, sol.trace(prob.maps[0].labels()), 0)
    n_del = len(ex["deliveries"])
    ok = margin >= -1e-6 and integral and inc_ok and len(delivered) == n_del == 4 and satisfied and secs < 120
    report(9, "two-agent delivery", ok, f"margin={margin:.3g}, p integral={integral}, pickups in ring={inc_ok}, delivered={len(delivered)}/{n_del}, {secs:.1f}s")
    assert margin >= -1e-6
    assert integral and inc_ok
    assert len(delivered) == n_del == 4
    assert satisfied
    assert secs < 120


def _export(tmp_path):
    art = run_scenario(load(shipped("desk_door_key")), tmp_path, mode="export")
    return art.miqp, art.path("mps")


def test_criterion_10_mps_round_trip(tmp_path):
    m, path = _export(tmp_path / "a")
    back = read_mps(path)
    same = m.same_as(back)
    for X, Y in ((m.H, back.H), (m.A, back.A)):
        assert np.array_equal(X.toarray(), Y.toarray())
    assert np.array_equal(m.q, back.q) and np.array_equal(m.b, back.b)
    # a fresh interpreter must produce the same bytes as the checked-in golden file
    out = tmp_path / "b"
    subprocess.run([sys.executable, "-m", "mtlreach.cli", "plan", "--scenario", "desk_door_key", "--mode", "export", "--out", str(out)], check=True, capture_output=True)
    golden = (FIXTURES / "desk_door_key.mps").read_bytes()
    stable = path.read_bytes() == golden == (out / "model.mps").read_bytes()
    report(10, "MPS export round trip", same and stable, f"bitwise={same}, golden stable={stable}")
    assert same
    assert stable
