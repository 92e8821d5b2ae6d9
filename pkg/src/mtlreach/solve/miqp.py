"""MIQP assembly over the factors of a lifted set, and plan decoding."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..mtl import Formula, PropTrace, evaluate
from ..reach import LiftedIndex, LiftedReachSet, dynamics_residual
from ..zonoset import FactorPoint, polish


class AssemblyError(ValueError):
    pass


class PlanValidationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Miqp:
    """minimize 1/2 v'Hv + q'v + const  s.t.  A v = b,  0 <= v <= 1,  v[n_cont:] binary.

    ``v = [xi_c; xi_b]``.  When built from a lifted set, the objective equals
    z'Pz with z = G v + c (``decode_G``, ``decode_c``).
    """

    H: sp.csr_matrix
    q: np.ndarray
    const: float
    A: sp.csr_matrix
    b: np.ndarray
    n_cont: int
    n_bin: int
    decode_G: sp.csr_matrix | None = None
    decode_c: np.ndarray | None = None
    P: sp.csr_matrix | None = None
    index: LiftedIndex | None = None
    lifted: LiftedReachSet | None = field(default=None, repr=False)

    def __post_init__(self):
        n = self.n_cont + self.n_bin
        H = sp.csr_matrix(self.H)
        A = sp.csr_matrix(self.A)
        if H.shape != (n, n):
            raise AssemblyError(f"H has shape {H.shape}, expected {(n, n)}")
        if A.shape[1] != n or A.shape[0] != np.size(self.b):
            raise AssemblyError(f"A of shape {A.shape} inconsistent with {n} variables and {np.size(self.b)} rows")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(-1))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "const", float(self.const))

    @property
    def n(self) -> int:
        return self.n_cont + self.n_bin

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(0.5 * v @ (self.H @ v) + self.q @ v + self.const)

    def residual(self, v) -> float:
        if self.m == 0:
            return 0.0
        return float(np.abs(self.A @ np.asarray(v, dtype=float) - self.b).max())

    def one_hot_groups(self) -> list[list[int]]:
        """Groups of binary variables (full variable indices) tied by rows sum = 1."""
        A = self.A.tocsr()
        taken: set[int] = set()
        out = []
        for r in range(self.m):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            idx, vals = A.indices[lo:hi], A.data[lo:hi]
            nz = vals != 0
            idx, vals = idx[nz], vals[nz]
            if self.b[r] != 1.0 or len(idx) < 1 or np.any(idx < self.n_cont) or not np.all(vals == 1.0):
                continue
            if taken.intersection(idx.tolist()):
                continue
            taken.update(idx.tolist())
            out.append(sorted(idx.tolist()))
        return out

    def same_as(self, other: "Miqp") -> bool:
        """Bitwise equality of the optimization data."""

        def eq_sparse(X, Y):
            X, Y = sp.csr_matrix(X), sp.csr_matrix(Y)
            X.sum_duplicates()
            Y.sum_duplicates()
            X.eliminate_zeros()
            Y.eliminate_zeros()
            X.sort_indices()
            Y.sort_indices()
            return (
                X.shape == Y.shape
                and np.array_equal(X.indptr, Y.indptr)
                and np.array_equal(X.indices, Y.indices)
                and np.array_equal(X.data, Y.data)
            )

        return (
            self.n_cont == other.n_cont
            and self.n_bin == other.n_bin
            and eq_sparse(self.H, other.H)
            and eq_sparse(self.A, other.A)
            and np.array_equal(self.q, other.q)
            and np.array_equal(self.b, other.b)
            and self.const == other.const
        )


def _check_psd(name, M, strict=False):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise AssemblyError(f"{name} must be square, got {M.shape}")
    if not np.allclose(M, M.T, atol=1e-12):
        raise AssemblyError(f"{name} must be symmetric")
    lam = np.linalg.eigvalsh(M).min() if M.size else 0.0
    if strict and lam <= 0:
        raise AssemblyError(f"{name} must be positive definite (smallest eigenvalue {lam:.3g})")
    if lam < -1e-10:
        raise AssemblyError(f"{name} must be positive semidefinite (smallest eigenvalue {lam:.3g})")
    return M


def lifted_cost(index: LiftedIndex, Q, R, QN) -> sp.csr_matrix:
    """blkdiag(Q, 0, R, Q, 0, R, ..., Q_N, 0) in lifted coordinate order."""
    blocks = []
    for k in range(index.N):
        blocks += [sp.csr_matrix(Q), sp.csr_matrix((index.n_b, index.n_b)), sp.csr_matrix(R)]
    blocks += [sp.csr_matrix(QN), sp.csr_matrix((index.n_b, index.n_b))]
    return sp.block_diag(blocks, format="csr")


def assemble(lifted: LiftedReachSet, Q, R, QN=None) -> Miqp:
    idx = lifted.index
    QN = Q if QN is None else QN
    Q = _check_psd("Q", Q)
    QN = _check_psd("Q_N", QN)
    R = _check_psd("R", R, strict=True)
    if Q.shape != (idx.n_x, idx.n_x) or QN.shape != (idx.n_x, idx.n_x):
        raise AssemblyError(f"Q and Q_N must be {idx.n_x}x{idx.n_x}, got {Q.shape} and {QN.shape}")
    if R.shape != (idx.n_u, idx.n_u):
        raise AssemblyError(f"R must be {idx.n_u}x{idx.n_u}, got {R.shape}")
    Z = lifted.set
    P = lifted_cost(idx, Q, R, QN)
    G = Z.generators()
    c = Z.center
    PG = P @ G
    H = 2.0 * (G.T @ PG)
    H = ((H + H.T) * 0.5).tocsr()
    H.eliminate_zeros()
    q = 2.0 * (G.T @ (P @ c))
    const = float(c @ (P @ c))
    return Miqp(H, np.asarray(q).reshape(-1), const, Z.constraints(), Z.con_rhs, Z.n_g, Z.n_b, G, c, P, idx, lifted)


@dataclass
class PlanSolution:
    states: np.ndarray
    inputs: np.ndarray
    indicators: np.ndarray
    objective: float
    regions: tuple[str, ...] = ()
    residual: float = 0.0

    def trace(self, labels=None) -> PropTrace:
        return PropTrace.from_indicators(self.indicators, self.regions, labels)

    def active_regions(self) -> list[list[str]]:
        return [[self.regions[j] for j in np.flatnonzero(row > 0.5)] for row in self.indicators]


def decode(m: Miqp, fp: FactorPoint, formula: Formula | None = None, check: bool = True) -> PlanSolution:
    """Lifted trajectory for a factor point, validated unless ``check`` is false."""
    if m.decode_G is None or m.index is None:
        raise AssemblyError("this MIQP carries no decode map")
    lifted = m.lifted
    if lifted is not None:
        fp = polish(lifted.set, fp)
    v = np.concatenate([fp.cont, fp.bin])
    z = m.decode_G @ v + m.decode_c
    states, inds, inputs = m.index.unstack(z)
    regions = lifted.region_ids if lifted is not None else ()
    sol = PlanSolution(states, inputs, np.round(inds), m.objective(v), regions)
    if lifted is not None:
        W = lifted.sys.disturbance(lifted.maps[0])
        sol.residual = dynamics_residual(lifted.sys, W, states, inputs, np.round(inds))
    if check:
        validate_plan(sol, m, formula)
    return sol


def validate_plan(sol: PlanSolution, m: Miqp, formula: Formula | None = None, dyn_tol: float = 1e-9) -> None:
    lifted = m.lifted
    errs = []
    if not np.all((sol.indicators == 0) | (sol.indicators == 1)):
        errs.append("indicators are not 0/1")
    if lifted is not None:
        if sol.residual > dyn_tol:
            errs.append(f"dynamics residual {sol.residual:.3g} exceeds {dyn_tol:g}")
        for k in range(lifted.N + 1):
            M = lifted.maps[k]
            if not M.indicator_consistent(sol.states[k], sol.indicators[k]):
                errs.append(f"step {k}: active indicators {sol.active_regions()[k]} inconsistent with the state")
                break
        if formula is not None:
            tr = sol.trace(lifted.maps[0].labels())
            if not evaluate(formula, tr, 0):
                errs.append(f"trajectory violates {formula}")
    if errs:
        raise PlanValidationError("; ".join(errs))
