import numpy as np
import pytest

from conftest import FIXTURES, random_miqp
from mtlreach.mtl import compile_cnf, parse
from mtlreach.reach import LtiSystem, MapLayer, RegionSpec, apply_mtl, build_lifted, build_map, random_trajectory
from mtlreach.solve import (
    AssemblyError,
    BudgetError,
    Miqp,
    MpsError,
    PlanValidationError,
    assemble,
    assignment_count,
    decode,
    export_mip,
    mps_text,
    propagate,
    read_mps,
    solve_bnb,
    solve_bruteforce,
    validate_plan,
)
from mtlreach.solve.bnb import relative_gap
from mtlreach.zonoset import HPolytope, HybridZonotope, contains

A_DI = np.array([[1, 0, 1, 0], [0, 1, 0, 1], [0, 0, 1, 0], [0, 0, 0, 1.0]])
B_DI = np.array([[0, 0], [0, 0], [1, 0], [0, 1.0]])


def box(x0, x1, y0, y1):
    return HPolytope.from_box([x0, y0], [x1, y1])


def scalar_problem(N=2, x0=1.0, umax=5.0, regions=None, formula=None, Q=1.0, R=1.0):
    regions = regions or [RegionSpec("A", HPolytope.from_box([-10], [10]))]
    M = build_map(MapLayer(regions, (0,), "DCP"), 1)
    sys = LtiSystem([[1.0]], [[1.0]], HybridZonotope.box([-umax], [umax]), [x0])
    L = build_lifted(sys, M, N)
    if formula:
        L = apply_mtl(L, compile_cnf(parse(formula), N, M.regions_of()))
    return assemble(L, [[Q]], [[R]]), M


def grid_problem(N=3, formula="(eventually 1 3 C)"):
    regs = [
        RegionSpec("W", box(0, 1, 0, 2)),
        RegionSpec("C", box(1, 2, 0, 2), role="goal"),
        RegionSpec("E", box(2, 3, 0, 2)),
    ]
    M = build_map(MapLayer(regs, (0, 1), "DCP", box(0, 3, 0, 2)), 4, state_lo=[0, 0, -1, -1], state_hi=[0, 0, 1, 1])
    sys = LtiSystem(A_DI, B_DI, HybridZonotope.box([-0.6, -0.6], [0.6, 0.6]), [0.4, 1.0, 0, 0])
    L = build_lifted(sys, M, N)
    f = parse(formula)
    L = apply_mtl(L, compile_cnf(f, N, M.regions_of()))
    return assemble(L, np.diag([0, 0, 1.0, 1.0]), np.eye(2)), f, M, sys


def test_cost_block_placement_door_key_pattern():
    m, f, M, sys = grid_problem()
    idx = m.index
    P = m.P.toarray()
    Q = np.diag([0, 0, 1.0, 1.0])
    for k in range(idx.N + 1):
        s = idx.state(k)
        np.testing.assert_array_equal(P[s, s], Q)
        b = idx.bin(k)
        assert not P[b, :].any() and not P[:, b].any()
        if k < idx.N:
            u = idx.input(k)
            np.testing.assert_array_equal(P[u, u], np.eye(2))
    # nothing off the diagonal blocks
    mask = np.zeros_like(P, dtype=bool)
    for k in range(idx.N + 1):
        for sl in [idx.state(k)] + ([idx.input(k)] if k < idx.N else []):
            mask[sl, sl] = True
    assert not P[~mask].any()


def test_scalar_one_step_cost_layout():
    m, _ = scalar_problem(N=1, Q=2.0, R=3.0)
    np.testing.assert_array_equal(m.P.toarray(), np.diag([2.0, 0.0, 3.0, 2.0, 0.0]))


def test_assemble_preconditions():
    regs = [RegionSpec("A", HPolytope.from_box([-10], [10]))]
    M = build_map(MapLayer(regs, (0,), "DCP"), 1)
    L = build_lifted(LtiSystem([[1.0]], [[1.0]], HybridZonotope.box([-1], [1]), [0.0]), M, 2)
    with pytest.raises(AssemblyError, match="positive definite"):
        assemble(L, [[0.0]], [[0.0]])
    with pytest.raises(AssemblyError, match="semidefinite"):
        assemble(L, [[-1.0]], [[1.0]])
    with pytest.raises(AssemblyError, match="must be"):
        assemble(L, np.eye(2), [[1.0]])


def test_objective_equals_lifted_quadratic():
    rng = np.random.default_rng(0)
    m, f, M, sys = grid_problem()
    v = np.concatenate([rng.uniform(size=m.n_cont), rng.integers(0, 2, m.n_bin)])
    z = m.decode_G @ v + m.decode_c
    assert m.objective(v) == pytest.approx(float(z @ (m.P @ z)), rel=1e-12, abs=1e-12)


def test_fixed_binaries_solved_at_root():
    m, _ = scalar_problem()
    rep = solve_bnb(m)
    assert rep.status == "optimal-at-gap" and rep.nodes == 1


def test_lqr_optimum_matches_closed_form():
    # min x0^2 + u0^2 + x1^2 + u1^2 + x2^2 with x_{k+1} = x_k + u_k, x0 = 1
    m, _ = scalar_problem(N=2, x0=1.0)
    S = np.array([[1.0, 0.0], [1.0, 1.0]])  # x1, x2 in terms of u
    H = np.eye(2) + S.T @ S
    g = S.T @ np.ones(2)
    u = np.linalg.solve(H, -g)
    want = 1.0 + u @ u + float(np.sum((1.0 + S @ u) ** 2))
    assert solve_bruteforce(m).objective == pytest.approx(want, abs=1e-7)
    assert solve_bnb(m, gap=1e-6).objective == pytest.approx(want, abs=1e-6)


def test_unreachable_goal_is_infeasible():
    regs = [RegionSpec("A", HPolytope.from_box([-10], [4])), RegionSpec("G", HPolytope.from_box([4], [10]), role="goal")]
    m, _ = scalar_problem(N=2, x0=0.0, umax=1.0, regions=regs, formula="(eventually 0 2 G)")
    assert solve_bruteforce(m).status == "infeasible"
    rep = solve_bnb(m)
    assert rep.status == "infeasible" and rep.incumbent is None


def test_bruteforce_refuses_large_problems():
    m = random_miqp(np.random.default_rng(1), group=0, n_free=6)
    with pytest.raises(BudgetError, match="exceed"):
        solve_bruteforce(m, bin_budget=4)


def test_small_scenario_solvers_agree():
    m, f, M, sys = grid_problem()
    a, b = solve_bnb(m, gap=1e-6), solve_bruteforce(m)
    assert a.objective == pytest.approx(b.objective, rel=1e-6, abs=1e-6)
    sol = decode(m, a.incumbent, f)
    assert sol.residual <= 1e-9
    assert "C" in {r for row in sol.active_regions() for r in row}


def test_edges_monotone_and_bound_valid():
    rng = np.random.default_rng(2)
    for _ in range(25):
        m = random_miqp(rng)
        rep = solve_bnb(m, gap=1e-6)
        for parent, child in rep.edges:
            assert child >= parent - 1e-9
        bf = solve_bruteforce(m)
        if bf.status != "infeasible":
            assert rep.bound <= bf.objective + 1e-9
            assert rep.objective >= rep.bound - 1e-9


@pytest.mark.parametrize("branching", ["fractional", "pseudocost"])
def test_solves_are_deterministic(branching):
    m = random_miqp(np.random.default_rng(3), n_cont=4, group=4, n_free=6)
    reps = [solve_bnb(m, gap=1e-6, branching=branching) for _ in range(2)]
    assert reps[0].objective == reps[1].objective
    assert reps[0].nodes == reps[1].nodes
    assert reps[0].log == reps[1].log
    assert np.array_equal(reps[0].incumbent.stacked(), reps[1].incumbent.stacked())


def test_branching_rules_agree():
    rng = np.random.default_rng(4)
    for _ in range(15):
        m = random_miqp(rng)
        a = solve_bnb(m, gap=1e-9, branching="fractional")
        b = solve_bnb(m, gap=1e-9, branching="pseudocost")
        assert a.status == b.status
        if a.status != "infeasible":
            assert a.objective == pytest.approx(b.objective, rel=1e-6, abs=1e-6)


def test_argument_validation_and_budget():
    m = random_miqp(np.random.default_rng(5), n_cont=3, group=4, n_free=7)
    with pytest.raises(ValueError):
        solve_bnb(m, gap=0.0)
    with pytest.raises(ValueError):
        solve_bnb(m, node_budget=0)
    with pytest.raises(ValueError):
        solve_bnb(m, branching="random")
    rep = solve_bnb(m, gap=1e-9, node_budget=1, probing=False)
    assert rep.status in ("budget-exhausted", "optimal-at-gap")
    assert rep.nodes <= 2
    assert rep.log_text().splitlines()[0] == "node,depth,bound,incumbent,gap"


def test_relative_gap():
    assert relative_gap(10.0, 9.0) == pytest.approx(0.1)
    assert relative_gap(float("inf"), 1.0) == float("inf")
    assert relative_gap(1.0, 2.0) == 0.0


def test_propagation_and_assignment_count():
    # b0 + b1 + b2 = 1 and b0 = 1 - b3  (written as b0 + b3 = 1) with b3 pinned by 2 b3 = 2
    A = np.array([[0, 1, 1, 1, 0], [0, 1, 0, 0, 1], [0, 0, 0, 0, 2.0]])
    m = Miqp(np.eye(5), np.zeros(5), 0.0, A, [1, 1, 2], 1, 4)
    lb, ub, ok = propagate(m)
    assert ok
    assert ub[1] == 0 and lb[4] == 1
    assert assignment_count(m, lb, ub) == 2
    bad = Miqp(np.eye(3), np.zeros(3), 0.0, [[0, 2, 2.0]], [1.0], 1, 2)
    assert not propagate(bad)[2]


def test_decode_round_trip_of_simulated_plan():
    rng = np.random.default_rng(6)
    m, f, M, sys = grid_problem(formula="(always 0 3 (not E))")
    for _ in range(5):
        try:
            xs, xis, us = random_trajectory(sys, M, 3, rng)
        except Exception:
            continue
        if np.any(xis[:, M.index_of("E")] > 0):
            continue
        ok, fp = contains(m.lifted.set, m.index.stack(xs, xis, us))
        assert ok
        sol = decode(m, fp, f)
        np.testing.assert_allclose(sol.states, xs, atol=1e-6)
        np.testing.assert_array_equal(sol.indicators, xis)


def test_validation_failures_are_errors():
    m, f, M, sys = grid_problem()
    rep = solve_bnb(m)
    sol = decode(m, rep.incumbent, f)
    bad = type(sol)(sol.states, sol.inputs, sol.indicators.copy(), sol.objective, sol.regions, sol.residual)
    bad.indicators[:, :] = 0
    bad.indicators[:, M.index_of("W")] = 1
    with pytest.raises(PlanValidationError):
        validate_plan(bad, m, f)
    worse = type(sol)(sol.states, sol.inputs, sol.indicators, sol.objective, sol.regions, 1e-3)
    with pytest.raises(PlanValidationError, match="dynamics residual"):
        validate_plan(worse, m, f)


def tiny_miqp():
    H = np.array([[2.0, 0.5, 0, 0], [0.5, 1.0, 0, 0], [0, 0, 0.1, 0], [0, 0, 0, 0.3]])
    A = np.array([[1.0, -1.0, 0.25, 0.0], [0.0, 0.0, 1.0, 1.0]])
    return Miqp(H, [0.1, -0.2, 0.3, 1.0 / 3.0], 0.7, A, [0.125, 1.0], 2, 2)


def test_mps_round_trip_tiny(tmp_path):
    m = tiny_miqp()
    back = read_mps(export_mip(m, tmp_path / "t.mps"))
    assert m.same_as(back)
    text = mps_text(m)
    assert "'INTORG'" in text and "xB0" in text and "xF1" in text


def test_mps_without_binaries_has_no_markers(tmp_path):
    m = Miqp(np.eye(2), [1.0, 0.0], 0.0, [[1.0, 1.0]], [1.0], 2, 0)
    text = mps_text(m)
    assert "MARKER" not in text and "BV" not in text
    assert m.same_as(read_mps(export_mip(m, tmp_path / "c.mps")))


def test_mps_golden_tiny():
    assert mps_text(tiny_miqp(), "tiny") == (FIXTURES / "tiny.mps").read_text()


def test_mps_io_errors_name_the_path(tmp_path):
    target = tmp_path / "missing" / "x.mps"
    with pytest.raises(OSError, match="missing"):
        export_mip(tiny_miqp(), target)
    with pytest.raises(OSError, match="nothere"):
        read_mps(tmp_path / "nothere.mps")
    bad = tmp_path / "bad.mps"
    bad.write_text("NAME x\nROWS\n L  C0\nENDATA\n")
    with pytest.raises(MpsError, match="equality"):
        read_mps(bad)
