"""Convex QP subproblems: an OSQP relaxation session and a Clarabel one-shot solve."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

OSQP_SETTINGS = dict(
    verbose=False,
    eps_abs=1e-8,
    eps_rel=1e-8,
    eps_prim_inf=1e-6,
    eps_dual_inf=1e-6,
    max_iter=1000,
    polishing=True,
    polish_refine_iter=10,
)


@dataclass
class QpResult:
    status: str  # "optimal" | "infeasible" | "failed"
    x: np.ndarray | None
    obj: float


class RelaxationSession:
    """Box-bounded QP  min 1/2 v'Hv + q'v  s.t.  A v = b,  lb <= v <= ub  with warm starts.

    The matrix stays fixed; only the variable bounds change between solves.
    """

    def __init__(self, H, q, A, b, const: float = 0.0, settings=None):
        import osqp

        self._osqp = osqp
        self.n = H.shape[0]
        self.m = A.shape[0]
        self.H = sp.csc_matrix(H)
        self.q = np.asarray(q, dtype=float)
        self.A = sp.csr_matrix(A)
        self.b = np.asarray(b, dtype=float)
        self.const = float(const)
        C = sp.vstack([sp.csc_matrix(A), sp.identity(self.n, format="csc")], format="csc")
        self.C = C
        l = np.concatenate([self.b, np.zeros(self.n)])
        u = np.concatenate([self.b, np.ones(self.n)])
        self.settings = dict(OSQP_SETTINGS, **(settings or {}))
        self.solver = osqp.OSQP()
        self.solver.setup(sp.triu(self.H, format="csc"), self.q, C, l, u, **self.settings)
        self.solves = 0
        self.fallbacks = 0

    def solve(self, lb, ub, warm=None) -> QpResult:
        if np.any(np.asarray(lb) > np.asarray(ub)):
            return QpResult("infeasible", None, np.inf)
        self.solves += 1
        if self.solves > 20 and self.fallbacks > 0.5 * self.solves:
            # the splitting method keeps stalling on this problem; go straight to the interior-point solver
            self.fallbacks += 1
            return solve_qp(self.H, self.q, self.A, self.b, lb, ub, self.const)
        l = np.concatenate([self.b, lb])
        u = np.concatenate([self.b, ub])
        self.solver.update(l=l, u=u)
        if warm is not None:
            self.solver.warm_start(x=warm)
        res = self.solver.solve(raise_error=False)
        st = res.info.status_val
        S = self._osqp.SolverStatus
        if st == S.OSQP_SOLVED:
            x = np.clip(np.asarray(res.x, dtype=float), lb, ub)
            return QpResult("optimal", x, float(0.5 * x @ (self.H @ x) + self.q @ x) + self.const)
        if st == S.OSQP_PRIMAL_INFEASIBLE:
            return QpResult("infeasible", None, np.inf)
        # slow or inaccurate: settle the node with an interior-point solve
        self.fallbacks += 1
        return solve_qp(self.H, self.q, self.A, self.b, lb, ub, self.const)


def solve_qp(H, q, A, b, lb, ub, const: float = 0.0) -> QpResult:
    """min 1/2 v'Hv + q'v  s.t.  A v = b,  lb <= v <= ub  via Clarabel."""
    import clarabel

    H = sp.csc_matrix(H)
    n = H.shape[0]
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    fixed = lb == ub
    if np.any(lb > ub):
        return QpResult("infeasible", None, np.inf)
    I = sp.identity(n, format="csc")
    A = sp.csc_matrix(A)
    Aeq = sp.vstack([A, I[fixed]], format="csc")
    beq = np.concatenate([np.asarray(b, dtype=float), lb[fixed]])
    free = ~fixed
    Ac = sp.vstack([Aeq, I[free], -I[free]], format="csc")
    bc = np.concatenate([beq, ub[free], -lb[free]])
    cones = []
    if Aeq.shape[0]:
        cones.append(clarabel.ZeroConeT(Aeq.shape[0]))
    if free.sum():
        cones.append(clarabel.NonnegativeConeT(2 * int(free.sum())))
    st = clarabel.DefaultSettings()
    st.verbose = False
    st.tol_gap_abs = 1e-10
    st.tol_gap_rel = 1e-10
    st.tol_feas = 1e-10
    st.max_iter = 500
    sol = clarabel.DefaultSolver(sp.triu(H, format="csc"), np.asarray(q, dtype=float), Ac, bc, cones, st).solve()
    name = str(sol.status)
    if name in ("Solved", "AlmostSolved"):
        x = np.clip(np.asarray(sol.x, dtype=float), lb, ub)
        return QpResult("optimal", x, float(0.5 * x @ (H @ x) + np.asarray(q) @ x) + const)
    if "Infeasible" in name and "Dual" not in name:
        return QpResult("infeasible", None, np.inf)
    return QpResult("failed", None, np.nan)
