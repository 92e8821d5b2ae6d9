"""Scenario pipeline: map, lift, formula, intersect, assemble, solve, decode, validate, emit.

Every stage runs under a tag; any failure surfaces as a :class:`StageError`
naming the stage, so a bad scenario file and a solver failure read differently.
"""
from __future__ import annotations

import csv
import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..mtl import compile_cnf, evaluate, format_formula
from ..reach import apply_mtl, build_lifted, check_partition, reach_complexity
from ..solve import (
    BudgetError,
    Miqp,
    PlanSolution,
    SolveReport,
    assemble,
    assignment_count,
    decode,
    export_mip,
    propagate,
    solve_bnb,
    solve_bruteforce,
)
from .builders import Problem, build_problem
from .config import ScenarioConfig, load
from .plot import render_svg, write_svg

STAGES = ("config", "map", "lift", "formula", "intersect", "assemble", "solve", "decode", "validate", "emit")
SOC_TOL = 1e-9
STATE_NAMES = {
    "double-integrator": ["px", "py", "vx", "vy"],
    "double-integrator-soc": ["px", "py", "vx", "vy", "e"],
    "two-agent": ["x1", "y1", "vx1", "vy1", "x2", "y2", "vx2", "vy2", "p", "rx", "ry"],
}


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.message = message


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - every failure is re-tagged
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc


@dataclass
class RunArtifacts:
    out_dir: Path | None
    summary: dict
    problem: Problem | None = None
    miqp: Miqp | None = None
    report: SolveReport | None = None
    solution: PlanSolution | None = None
    files: dict = field(default_factory=dict)

    def path(self, key: str) -> Path:
        return self.files[key]


@dataclass
class PartitionCheck:
    step: int
    layer: str
    report: object

    @property
    def ok(self) -> bool:
        return self.report.ok


def _as_config(cfg) -> ScenarioConfig:
    return cfg if isinstance(cfg, ScenarioConfig) else load(cfg)


def validate_partition(cfg, resolution: float | None = None) -> list[PartitionCheck]:
    """Per layer (and per step for moving regions), interior-overlap probes and coverage sampling."""
    with _stage("config"):
        cfg = _as_config(cfg)
    with _stage("map"):
        prob = build_problem(cfg, validate=False)
    out = []
    distinct = [(0, prob.maps[0])] + [(k, M) for k, M in enumerate(prob.maps) if k and M is not prob.maps[k - 1]]
    for k, M in distinct:
        for i, layer in enumerate(M.layers):
            name = next((lc.name for j, lc in enumerate(cfg.layers) if j == i and lc.name), f"layer{i}")
            rep = check_partition(layer.regions, layer.workspace, layer.kind, layer.holes, resolution)
            out.append(PartitionCheck(k, name, rep))
    return out


def _state_names(cfg: ScenarioConfig, n_x: int) -> list[str]:
    names = STATE_NAMES.get(cfg.template)
    if names is None or len(names) != n_x:
        names = [f"x{i}" for i in range(n_x)]
    return names


def _complexity(Z) -> dict:
    g, b, c = Z.complexity
    return {"n": Z.dim, "n_g": g, "n_b": b, "n_c": c}


def _soc_checks(prob: Problem, sol: PlanSolution) -> dict:
    p = prob.cfg.dynamics
    charge = float(p.get("charge_rate", 0.2))
    drain = float(p.get("drain_rate", -0.1))
    e = sol.states[:, 4]
    regions = prob.maps[0].regions
    expected = []
    for k in range(prob.N):
        act = [regions[j] for j in np.flatnonzero(sol.indicators[k] > 0.5)]
        expected.append(charge if any(r.role == "charge" for r in act) else drain)
    delta = np.diff(e)
    err = np.abs(delta - np.asarray(expected))
    return {
        "e_min": float(e.min()),
        "e_max": float(e.max()),
        "soc_in_bounds": bool(e.min() >= -SOC_TOL and e.max() <= 1 + SOC_TOL),
        "soc_delta_max_error": float(err.max(initial=0.0)),
        "soc_deltas_exact": bool(err.max(initial=0.0) <= SOC_TOL),
        "charge_steps": int(sum(1 for d in expected if d == charge)),
    }


def _two_agent_checks(prob: Problem, sol: PlanSolution) -> dict:
    from .two_agent import EXCHANGE_LABEL, P_ROW, R_DIMS, inner_margin

    p = sol.states[:, P_ROW]
    ids = prob.maps[0].region_ids
    labels = prob.maps[0].labels()
    deliveries = prob.extras["deliveries"]
    margin = inner_margin(sol.states[:, list(R_DIMS)], prob.extras["r_inner"])
    ok_steps = True
    for k in range(prob.N):
        act = [ids[j] for j in np.flatnonzero(sol.indicators[k] > 0.5)]
        want = sum(1 for a in act if labels[a] == EXCHANGE_LABEL) - sum(1 for a in act if a in deliveries)
        if abs((p[k + 1] - p[k]) - want) > 1e-6:
            ok_steps = False
    visited = {d: bool(np.any(sol.indicators[:, ids.index(d)] > 0.5)) for d in deliveries}
    return {
        "p_min": float(p.min()),
        "p_max": float(p.max()),
        "p_in_bounds": bool(p.min() >= -1e-6 and p.max() <= 1 + 1e-6),
        "p_integral": bool(np.all(np.abs(p - np.round(p)) <= 1e-6)),
        "p_changes_match_indicators": ok_steps,
        "min_inner_margin": float(margin.min()),
        "keep_out_respected": bool(margin.min() >= -1e-6),
        "deliveries_visited": visited,
        "all_delivered": bool(all(visited.values())),
    }


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(v: float) -> str:
    return repr(float(v))


def _write_trajectory(path: Path, cfg: ScenarioConfig, sol: PlanSolution):
    n_x = sol.states.shape[1]
    n_u = sol.inputs.shape[1]
    header = ["step"] + _state_names(cfg, n_x) + [f"u{i}" for i in range(n_u)] + list(sol.regions)
    rows = []
    for k in range(sol.states.shape[0]):
        u = [_num(x) for x in sol.inputs[k]] if k < len(sol.inputs) else [""] * n_u
        rows.append([k] + [_num(x) for x in sol.states[k]] + u + [int(b) for b in sol.indicators[k]])
    _write_csv(path, header, rows)


def _write_indicators(path: Path, sol: PlanSolution, labels):
    tr = sol.trace(labels)
    rows = [[k] + [int(v) for v in tr.values[k]] for k in range(tr.values.shape[0])]
    _write_csv(path, ["step"] + list(tr.names), rows)


def _write_unicycle(path: Path, sol: PlanSolution):
    from .two_agent import unicycle_commands

    cmds = unicycle_commands(sol.states, sol.inputs)
    header = ["step"] + [f"{who}_{q}" for who in cmds for q in ("v", "theta", "omega")]
    rows = []
    for k in range(sol.states.shape[0]):
        rows.append([k] + [_num(cmds[who][q][k]) for who in cmds for q in ("v", "theta", "omega")])
    _write_csv(path, header, rows)
    return cmds


def plot_problem(prob: Problem, sol: PlanSolution | None = None) -> str:
    """SVG of the planar position layer at step 0 with the planned path(s)."""
    cfg = prob.cfg
    M = prob.maps[0]
    regs, holes = [], []
    for layer in M.layers:
        if tuple(layer.dims) != (0, 1):
            continue
        regs += [(r.id, r.role, r.polytope, r.overlay) for r in layer.regions]
        holes += list(layer.holes)
    traces = []
    if sol is not None:
        traces.append(sol.states[:, 0:2])
        if cfg.template == "two-agent":
            traces.append(sol.states[:, 4:6])
    return render_svg(cfg.workspace.lo[:2], cfg.workspace.hi[:2], regs, holes, traces, cfg.name)


def emit_plot(artifacts: RunArtifacts, path=None) -> Path:
    """(Re)render the plot of a finished run."""
    svg = plot_problem(artifacts.problem, artifacts.solution)
    path = Path(path) if path is not None else artifacts.out_dir / "plot.svg"
    return write_svg(path, svg)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o).__name__)


def _finite(x):
    return x if isinstance(x, (int, float)) and math.isfinite(x) else None


def run_scenario(cfg, out_dir=None, mode: str | None = None, gap: float | None = None, seed: int | None = None,
                 time_limit: float | None = None) -> RunArtifacts:
    """Run the full pipeline; artifacts are written to ``out_dir`` when given."""
    t_start = time.perf_counter()
    with _stage("config"):
        cfg = _as_config(cfg).with_overrides(mode=mode, gap=gap, time_limit=time_limit)
        if seed is not None:
            cfg.seed = int(seed)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        with _stage("emit"):
            out.mkdir(parents=True, exist_ok=True)
    summary: dict = {"scenario": cfg.name, "template": cfg.template, "horizon": cfg.horizon, "mode": cfg.solver.mode, "seed": cfg.seed}
    stages: dict = {}
    checks: dict = {}
    art = RunArtifacts(out, summary)

    with _stage("map"):
        prob = build_problem(cfg, seed=cfg.seed)
        M0 = prob.maps[0]
        stages["map"] = {
            **_complexity(M0.set),
            "regions": len(M0.regions),
            "kind": M0.kind,
            "time_varying": any(M is not M0 for M in prob.maps),
        }
    art.problem = prob

    with _stage("lift"):
        lifted = build_lifted(prob.sys, prob.maps, prob.N)
        got = _complexity(lifted.set)
        want = reach_complexity(prob.sys, prob.maps, prob.N)
        stages["lift"] = {**got, "recomputed": want}
        checks["reach_complexity"] = got == want

    with _stage("formula"):
        clauses = compile_cnf(prob.formula, prob.N, M0.regions_of())
        stages["formula"] = {
            "text": format_formula(prob.formula),
            "clauses": [
                {"kind": c.kind, "tau": c.tau, "delta": list(c.delta), "table": list(c.table_delta)} for c in clauses
            ],
        }
        checks["table_deltas"] = all(c.delta == c.table_delta for c in clauses)

    with _stage("intersect"):
        before = lifted.set.complexity
        lifted = apply_mtl(lifted, clauses)
        stages["intersect"] = _complexity(lifted.set)
        applied = [list(d) for d in lifted.deltas]
        stages["formula"]["applied"] = applied
        summed = tuple(int(b + sum(d[i] for d in applied)) for i, b in enumerate(before))
        checks["clause_deltas_applied"] = all(tuple(d) == c.delta for d, c in zip(applied, clauses)) and summed == tuple(lifted.set.complexity)

    with _stage("assemble"):
        m = assemble(lifted, prob.Q, prob.R, prob.QN)
        lb, ub, feasible = propagate(m)
        count = assignment_count(m, lb, ub) if feasible else 0
        stages["assemble"] = {
            "variables": m.n,
            "continuous": m.n_cont,
            "binaries": m.n_bin,
            "equalities": m.m,
            "hessian_nnz": int(m.H.nnz),
            "fixed_by_propagation": int(np.sum(lb[m.n_cont :] == ub[m.n_cont :])) if feasible else None,
            "free_binaries_after_propagation": round(math.log2(count), 3) if count else 0,
        }
    art.miqp = m
    summary["stages"] = stages
    summary["checks"] = checks

    def finish():
        summary["wall_time"] = time.perf_counter() - t_start
        if out is not None:
            with _stage("emit"):
                p = out / "summary.json"
                p.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
                art.files["summary"] = p
        return art

    if not all(checks.values()):
        bad = [k for k, v in checks.items() if not v]
        raise StageError("assemble", f"complexity accounting failed: {bad}")

    mode = cfg.solver.mode
    if mode == "export":
        with _stage("emit"):
            if out is not None:
                art.files["mps"] = export_mip(m, out / "model.mps", cfg.name)
                svg = plot_problem(prob)
                art.files["plot"] = write_svg(out / "plot.svg", svg)
        summary["status"] = "exported"
        return finish()

    with _stage("solve"):
        try:
            if mode == "bruteforce":
                rep = solve_bruteforce(m, cfg.solver.bin_budget)
            else:
                rep = solve_bnb(m, cfg.solver.gap, cfg.solver.node_budget, cfg.solver.time_limit, branching=cfg.solver.branching)
        except BudgetError as exc:
            raise StageError("solve", str(exc)) from exc
    art.report = rep
    summary["solver"] = {k: (_finite(v) if isinstance(v, float) else v) for k, v in rep.summary().items()}
    summary["status"] = rep.status
    if out is not None:
        with _stage("emit"):
            p = out / "solver.log"
            head = f"# {cfg.name} mode={mode} gap={cfg.solver.gap} status={rep.status} objective={rep.objective} bound={rep.bound}\n"
            p.write_text(head + rep.log_text())
            art.files["log"] = p
    if rep.incumbent is None:
        finish()
        raise StageError("solve", f"no plan found (status {rep.status}, {rep.nodes} nodes)")

    with _stage("decode"):
        sol = decode(m, rep.incumbent, prob.formula, check=False)
    art.solution = sol

    with _stage("validate"):
        labels = M0.labels()
        checks["dynamics_residual"] = sol.residual <= 1e-9
        checks["indicator_consistency"] = all(
            prob.maps[k].indicator_consistent(sol.states[k], sol.indicators[k]) for k in range(prob.N + 1)
        )
        checks["formula_satisfied"] = bool(evaluate(prob.formula, sol.trace(labels), 0))
        extra = {"dynamics_residual": sol.residual}
        if cfg.template == "double-integrator-soc":
            soc = _soc_checks(prob, sol)
            extra.update(soc)
            checks["soc_bounds"] = soc["soc_in_bounds"]
            checks["soc_deltas"] = soc["soc_deltas_exact"]
        if cfg.template == "two-agent":
            ta = _two_agent_checks(prob, sol)
            extra.update(ta)
            for k in ("p_in_bounds", "p_integral", "p_changes_match_indicators", "keep_out_respected", "all_delivered"):
                checks[k] = ta[k]
        stages["validate"] = extra
        summary["active_regions"] = sol.active_regions()

    if out is not None:
        with _stage("emit"):
            art.files["trajectory"] = out / "trajectory.csv"
            _write_trajectory(art.files["trajectory"], cfg, sol)
            art.files["indicators"] = out / "indicators.csv"
            _write_indicators(art.files["indicators"], sol, labels)
            art.files["plot"] = write_svg(out / "plot.svg", plot_problem(prob, sol))
            if cfg.template == "two-agent":
                art.files["unicycle"] = out / "unicycle.csv"
                _write_unicycle(art.files["unicycle"], sol)
    finish()
    if not all(checks.values()):
        bad = [k for k, v in checks.items() if not v]
        raise StageError("validate", f"soundness gate failed: {bad}")
    return art
