"""Best-first branch and bound over binary factors, plus an enumeration oracle."""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import lsmr

from ..zonoset import FactorPoint
from .miqp import Miqp
from .qp import RelaxationSession, solve_qp

INT_TOL = 1e-6
GAP_EPS = 1e-10


class BudgetError(RuntimeError):
    pass


@dataclass
class SolveReport:
    status: str  # optimal-at-gap | infeasible | budget-exhausted
    incumbent: FactorPoint | None
    objective: float
    bound: float
    gap: float
    nodes: int
    wall_time: float
    log: list = field(default_factory=list)
    edges: list = field(default_factory=list)  # (parent bound, child relaxation value)
    qp_solves: int = 0
    unresolved: int = 0
    free_binaries: int = 0

    def log_text(self) -> str:
        lines = ["node,depth,bound,incumbent,gap"]
        for n, d, b, inc, g in self.log:
            lines.append(f"{n},{d},{b:.12g},{inc:.12g},{g:.6g}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "bound": self.bound,
            "gap": self.gap,
            "nodes": self.nodes,
            "qp_solves": self.qp_solves,
            "wall_time": self.wall_time,
        }


def relative_gap(obj: float, bound: float) -> float:
    if not math.isfinite(obj):
        return math.inf
    return max(0.0, (obj - bound) / max(abs(obj), GAP_EPS))


def propagate(m: Miqp):
    """Fix binaries implied by rows that involve binaries only.

    Returns (lb, ub, feasible).  Continuous variables keep [0, 1].
    """
    lb = np.zeros(m.n)
    ub = np.ones(m.n)
    A = m.A.tocsr()
    rows = []
    for r in range(m.m):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        idx, vals = A.indices[lo:hi], A.data[lo:hi]
        keep = vals != 0
        idx, vals = idx[keep], vals[keep]
        if len(idx) and np.all(idx >= m.n_cont):
            rows.append((idx, vals, m.b[r]))
        elif len(idx) == 0 and abs(m.b[r]) > 1e-9:
            return lb, ub, False
    tol = 1e-9
    changed = True
    while changed:
        changed = False
        for idx, vals, rhs in rows:
            lo_c = np.minimum(vals * lb[idx], vals * ub[idx])
            hi_c = np.maximum(vals * lb[idx], vals * ub[idx])
            smin, smax = lo_c.sum(), hi_c.sum()
            if rhs < smin - tol or rhs > smax + tol:
                return lb, ub, False
            for t, j in enumerate(idx):
                if lb[j] == ub[j]:
                    continue
                rest_min, rest_max = smin - lo_c[t], smax - hi_c[t]
                ok = [rest_min + vals[t] * v - tol <= rhs <= rest_max + vals[t] * v + tol for v in (0.0, 1.0)]
                if not any(ok):
                    return lb, ub, False
                if not all(ok):
                    val = 1.0 if ok[1] else 0.0
                    lb[j] = ub[j] = val
                    changed = True
                    lo_c[t] = hi_c[t] = vals[t] * val
                    smin, smax = lo_c.sum(), hi_c.sum()
    return lb, ub, True


class _Pseudocosts:
    """Mean objective gain per unit change of each binary, down (row 0) and up (row 1)."""

    def __init__(self, n: int):
        self.sum = np.zeros((2, n))
        self.cnt = np.zeros((2, n))

    def add(self, j: int, up: int, gain: float, change: float):
        if change > INT_TOL and math.isfinite(gain):
            self.sum[up, j] += max(gain, 0.0) / change
            self.cnt[up, j] += 1

    def estimate(self, up: int) -> np.ndarray:
        known = self.cnt[up] > 0
        avg = self.sum[up][known].sum() / self.cnt[up][known].sum() if known.any() else 1.0
        return np.where(known, self.sum[up] / np.maximum(self.cnt[up], 1), avg)


def _select_pseudocost(x, nb, frac, ub, group_of, pc: _Pseudocosts) -> int:
    """Branching index with the best product of the two smallest estimated child gains."""
    up, down = pc.estimate(1), pc.estimate(0)
    best, best_j, seen = -1.0, -1, set()
    for t in np.flatnonzero(frac > INT_TOL):
        j = nb + int(t)
        if j in group_of:
            key = group_of[j][0]
            if key in seen:
                continue
            seen.add(key)
            live = [i for i in group_of[j] if ub[i] > 0]
            est = sorted(up[i] * (1.0 - x[i]) for i in live)
            score = (est[0] + 1e-6) * (est[1] + 1e-6)
        else:
            score = (down[j] * x[j] + 1e-6) * (up[j] * (1.0 - x[j]) + 1e-6)
        if score > best:
            best, best_j = score, j
    return best_j


def _free_groups(m: Miqp, lb, ub):
    groups = []
    grouped = set()
    for g in m.one_hot_groups():
        live = [j for j in g if ub[j] > 0]
        grouped.update(g)
        if any(lb[j] == 1 for j in g):
            continue
        if len(live) > 1:
            groups.append(live)
    free = [j for j in range(m.n_cont, m.n) if j not in grouped and lb[j] != ub[j]]
    return groups, free


def assignment_count(m: Miqp, lb=None, ub=None) -> int:
    if lb is None:
        lb, ub, ok = propagate(m)
        if not ok:
            return 0
    groups, free = _free_groups(m, lb, ub)
    return int(np.prod([len(g) for g in groups], dtype=object) * 2 ** len(free))


def _polish_cont(m: Miqp, v: np.ndarray) -> np.ndarray:
    """Least-norm correction of interior continuous variables onto A v = b."""
    if m.m == 0 or m.n_cont == 0:
        return v
    A = m.A.tocsc()
    best = v.copy()
    for _ in range(3):
        r = m.b - A @ best
        if np.abs(r).max() <= 1e-13:
            break
        free = np.flatnonzero((best[: m.n_cont] > 1e-9) & (best[: m.n_cont] < 1 - 1e-9))
        if free.size == 0:
            break
        step = lsmr(A[:, free], r, atol=1e-15, btol=1e-15, maxiter=10 * (free.size + m.m))[0]
        trial = best.copy()
        trial[free] += step
        if trial[: m.n_cont].min() < -1e-9 or trial[: m.n_cont].max() > 1 + 1e-9:
            break
        trial[: m.n_cont] = np.clip(trial[: m.n_cont], 0.0, 1.0)
        if m.residual(trial) >= m.residual(best):
            break
        best = trial
    return best


def _fixed_solve(m: Miqp, xb: np.ndarray):
    """Exact QP with every binary fixed; returns (v, obj) or None."""
    lb = np.concatenate([np.zeros(m.n_cont), xb])
    ub = np.concatenate([np.ones(m.n_cont), xb])
    res = solve_qp(m.H, m.q, m.A, m.b, lb, ub, m.const)
    if res.status != "optimal":
        return None
    v = _polish_cont(m, res.x)
    if m.residual(v) > 1e-7:
        return None
    return v, m.objective(v)


def _report(status, m, v, obj, bound, nodes, t0, **kw) -> SolveReport:
    fp = None if v is None else FactorPoint(v[: m.n_cont].copy(), np.round(v[m.n_cont :]))
    return SolveReport(status, fp, obj, bound, relative_gap(obj, bound) if fp is not None else math.inf, nodes, time.perf_counter() - t0, **kw)


def solve_bnb(
    m: Miqp,
    gap: float = 0.01,
    node_budget: int = 200000,
    time_limit: float | None = None,
    heuristic_every: int = 25,
    max_plunge: int = 8,
    on_node=None,
    split_groups: bool = False,
    probing: bool = True,
    branching: str = "fractional",
) -> SolveReport:
    """Best-first branch and bound; relaxations solved by the ADMM session.

    Nodes are ordered by (inherited bound, node id).  Binaries in one-hot
    groups are branched n-way on which member equals one; other binaries
    branch on 0/1.  With ``branching="pseudocost"`` the candidate whose two
    cheapest children promise the largest bound increase is chosen; gains are
    seeded by the root probes and updated after every child solve.  With
    ``"fractional"`` the most fractional binary is taken.  Ties go to the
    smallest index.  Until an incumbent exists the search is
    depth first, always entering the child the relaxation leans towards;
    afterwards it dives at most ``max_plunge`` levels before returning to
    the best-bound node.
    """
    if not 0 < gap <= 1:
        raise ValueError(f"gap must lie in (0, 1], got {gap}")
    if node_budget < 1:
        raise ValueError("node budget must be at least 1")
    if branching not in ("pseudocost", "fractional"):
        raise ValueError(f"branching must be 'pseudocost' or 'fractional', got {branching!r}")
    t0 = time.perf_counter()
    lb0, ub0, ok = propagate(m)
    if not ok:
        return _report("infeasible", m, None, math.inf, math.inf, 0, t0)
    group_of = {}
    for g in m.one_hot_groups():
        for j in g:
            group_of[j] = g
    if m.n_bin == 0 or np.all(lb0[m.n_cont :] == ub0[m.n_cont :]):
        # nothing to branch on
        res = _fixed_solve(m, lb0[m.n_cont :]) if m.n_bin else None
        if m.n_bin == 0:
            r = solve_qp(m.H, m.q, m.A, m.b, lb0, ub0)
            res = None if r.status != "optimal" else (_polish_cont(m, r.x), None)
            if res is not None:
                res = (res[0], m.objective(res[0]))
        if res is None:
            return _report("infeasible", m, None, math.inf, math.inf, 1, t0, qp_solves=1)
        v, obj = res
        return _report("optimal-at-gap", m, v, obj, obj, 1, t0, qp_solves=1, log=[(0, 0, obj, obj, 0.0)])

    sess = RelaxationSession(m.H, m.q, m.A, m.b, m.const)
    # probing: relaxation value with each free binary forced to one
    probe = np.full(m.n, -math.inf)
    pc = _Pseudocosts(m.n)
    root = sess.solve(lb0, ub0) if probing else None
    if probing:
        for j in range(m.n_cont, m.n):
            if ub0[j] == 0 or lb0[j] == 1:
                continue
            l, u = lb0.copy(), ub0.copy()
            l[j] = 1.0
            if j in group_of:
                u[[i for i in group_of[j] if i != j]] = 0.0
            r = sess.solve(l, u)
            if r.status == "infeasible":
                ub0[j] = 0.0
            elif r.status == "optimal":
                probe[j] = r.obj
                if root.status == "optimal":
                    pc.add(j, 1, r.obj - root.obj, 1.0 - root.x[j])
        for g in {tuple(g) for g in group_of.values()}:
            if not np.any(ub0[list(g)] > 0):
                return _report("infeasible", m, None, math.inf, math.inf, 0, t0, qp_solves=sess.solves)
    inc_v, inc_obj = None, math.inf
    counter = itertools.count()
    heap = [(-math.inf, next(counter), 0, lb0.copy(), ub0.copy(), None, None)]
    log, edges = [], []
    nodes = 0
    unresolved = []
    extra_solves = 0
    status = None
    bound = -math.inf
    nb = m.n_cont

    def try_incumbent(xb):
        nonlocal inc_v, inc_obj, extra_solves
        extra_solves += 1
        out = _fixed_solve(m, xb)
        if out is not None and out[1] < inc_obj - 1e-12:
            inc_v, inc_obj = out
            close_probed()

    def cutoff():
        # nodes at or above this value cannot improve the incumbent by more than the gap
        return inc_obj - gap * max(abs(inc_obj), GAP_EPS) if inc_v is not None else math.inf

    pruned = []  # bounds of nodes discarded by the gap cutoff
    closed = np.zeros(m.n, dtype=bool)  # binaries whose probe value reached the cutoff
    closed_any = False

    def close_probed():
        nonlocal closed_any
        new = (probe >= cutoff()) & ~closed
        if np.any(new):
            below = probe[new][probe[new] < inc_obj]
            if below.size:
                pruned.append(float(below.min()))
            closed[new] = True
            closed_any = True

    plunge = None  # child processed next without going through the heap
    plunge_len = 0
    stack = []  # depth-first backlog used until the first incumbent appears

    def global_bound(extra=None):
        cands = list(unresolved) + pruned + [nd[0] for nd in stack]
        if heap:
            cands.append(heap[0][0])
        if extra is not None:
            cands.append(extra)
        return min(cands) if cands else (inc_obj if inc_v is not None else math.inf)

    while heap or stack or plunge is not None:
        if inc_v is not None and stack:
            for nd in stack:
                heapq.heappush(heap, nd)
            stack.clear()
        if plunge is not None:
            node, plunge = plunge, None
        elif stack:
            node = stack.pop()
        else:
            node = heapq.heappop(heap)
            plunge_len = 0
        key, nid, depth, lb, ub, warm, br = node
        bound = global_bound(key)
        if inc_v is not None and relative_gap(inc_obj, bound) <= gap:
            stack.append(node)
            status = "optimal-at-gap"
            break
        if nodes >= node_budget or (time_limit is not None and time.perf_counter() - t0 > time_limit):
            stack.append(node)
            status = "budget-exhausted"
            break
        if not closed_any:
            pass
        elif np.any(closed[lb == 1]):
            continue  # its bound is already accounted for in ``pruned``
        elif np.any(closed & (ub > 0)):
            ub = np.where(closed, 0.0, ub)
        if key >= cutoff():
            if key < inc_obj:
                pruned.append(key)
            continue
        nodes += 1
        res = sess.solve(lb, ub, warm)
        if res.status == "infeasible":
            log.append((nid, depth, math.inf, inc_obj, relative_gap(inc_obj, bound)))
            continue
        if res.status != "optimal":
            unresolved.append(key)
            log.append((nid, depth, key, inc_obj, relative_gap(inc_obj, bound)))
            continue
        edges.append((key, res.obj))
        if br is not None:
            pc.add(br[0], br[1], res.obj - key, br[2])
        nbound = max(key, res.obj)
        x = res.x
        log.append((nid, depth, nbound, inc_obj, relative_gap(inc_obj, bound)))
        if on_node is not None:
            on_node(nid, depth, nbound, inc_obj)
        if nbound >= cutoff():
            if nbound < inc_obj:
                pruned.append(nbound)
            continue
        xb = x[nb:]
        frac = np.abs(xb - np.round(xb))
        if frac.max() <= INT_TOL:
            try_incumbent(np.round(xb))
            continue
        if nodes == 1 or nodes % heuristic_every == 0:
            try_incumbent(_round_one_hot(xb, nb, group_of, lb, ub))
        if branching == "pseudocost":
            j = _select_pseudocost(x, nb, frac, ub, group_of, pc)
        else:
            score = np.abs(xb - 0.5)
            score[frac <= INT_TOL] = np.inf
            j = nb + int(np.argmin(score))  # argmin returns the smallest index among ties
        children = []  # (preference, node)
        if j in group_of and split_groups:
            g = [i for i in group_of[j] if ub[i] > 0]
            w = x[g]
            pos = float(np.arange(len(g)) @ w / max(w.sum(), 1e-12))
            cut = min(max(int(math.floor(pos)) + 1, 1), len(g) - 1)
            for keep, drop in ((g[:cut], g[cut:]), (g[cut:], g[:cut])):
                clb, cub = lb.copy(), ub.copy()
                cub[drop] = 0.0
                if len(keep) == 1:
                    clb[keep[0]] = 1.0
                children.append((float(x[keep].sum()), (nbound, next(counter), depth + 1, clb, cub, x, None)))
        elif j in group_of:
            g = [i for i in group_of[j] if ub[i] > 0]
            for i in g:
                clb, cub = lb.copy(), ub.copy()
                clb[i] = 1.0
                cub[[k for k in g if k != i]] = 0.0
                children.append((x[i], (nbound, next(counter), depth + 1, clb, cub, x, (i, 1, 1.0 - x[i]))))
        else:
            for val in (0.0, 1.0):
                clb, cub = lb.copy(), ub.copy()
                clb[j] = cub[j] = val
                children.append((1.0 - abs(x[j] - val), (nbound, next(counter), depth + 1, clb, cub, x, (j, int(val), abs(x[j] - val)))))
        if inc_v is None:
            children.sort(key=lambda c: c[0])  # stable: ties keep creation order
            stack.extend(ch for _, ch in children[:-1])
            plunge = children[-1][1]
            continue
        if plunge_len < max_plunge:
            # follow the child the relaxation leans towards; max() keeps the first among ties
            best = max(range(len(children)), key=lambda t: children[t][0])
            plunge = children[best][1]
            plunge_len += 1
            children = children[:best] + children[best + 1 :]
        for _, ch in children:
            heapq.heappush(heap, ch)

    if status is None:
        # tree exhausted
        if unresolved:
            status = "budget-exhausted"
            bound = min(unresolved + pruned)
        elif inc_v is None:
            return _report("infeasible", m, None, math.inf, math.inf, nodes, t0, log=log, edges=edges, qp_solves=sess.solves + extra_solves)
        else:
            status = "optimal-at-gap"
            bound = min(pruned + [inc_obj])
    else:
        bound = global_bound()
        if inc_v is not None:
            bound = min(bound, inc_obj)
    if unresolved and status == "optimal-at-gap":
        status = "budget-exhausted"
    return _report(
        status,
        m,
        inc_v,
        inc_obj,
        bound,
        nodes,
        t0,
        log=log,
        edges=edges,
        qp_solves=sess.solves + extra_solves,
        unresolved=len(unresolved),
    )


def _round_one_hot(xb, nb, group_of, lb, ub):
    out = np.round(xb)
    seen = set()
    for j, g in group_of.items():
        key = tuple(g)
        if key in seen:
            continue
        seen.add(key)
        loc = [i - nb for i in g]
        vals = xb[loc].copy()
        vals[ub[g] == 0] = -1.0
        out[loc] = 0.0
        out[loc[int(np.argmax(vals))]] = 1.0
    fixed = lb[nb:] == ub[nb:]
    out[fixed] = lb[nb:][fixed]
    return out


def solve_bruteforce(m: Miqp, bin_budget: int = 20) -> SolveReport:
    """Exact optimum by enumerating binary assignments (one-hot rows prune the enumeration).

    The number of free binaries is log2 of the number of assignments left
    after propagation; above ``bin_budget`` the call is refused.
    """
    t0 = time.perf_counter()
    lb, ub, ok = propagate(m)
    if not ok:
        return _report("infeasible", m, None, math.inf, math.inf, 0, t0)
    groups, free = _free_groups(m, lb, ub)
    count = assignment_count(m, lb, ub)
    free_bits = math.log2(count) if count else 0.0
    if free_bits > bin_budget + 1e-9:
        raise BudgetError(f"{free_bits:.1f} free binaries after propagation exceed the enumeration budget of {bin_budget}")
    base = lb[m.n_cont :].copy()
    best_v, best_obj = None, math.inf
    n_eval = 0
    for choice in itertools.product(*groups):
        for bits in itertools.product((0.0, 1.0), repeat=len(free)):
            xb = base.copy()
            for g in groups:
                xb[[j - m.n_cont for j in g]] = 0.0
            xb[[j - m.n_cont for j in choice]] = 1.0
            xb[[j - m.n_cont for j in free]] = bits
            n_eval += 1
            out = _fixed_solve(m, xb)
            if out is not None and out[1] < best_obj:
                best_v, best_obj = out
    if best_v is None:
        return _report("infeasible", m, None, math.inf, math.inf, n_eval, t0, free_binaries=int(round(free_bits)))
    return _report("optimal-at-gap", m, best_v, best_obj, best_obj, n_eval, t0, qp_solves=n_eval, free_binaries=int(round(free_bits)))
