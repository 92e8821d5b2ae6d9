"""Hybrid zonotopes, H-rep polytopes and their closed-form set operations.

All sets use the [0, 1] factor basis: continuous factors live in [0, 1] and
binary factors in {0, 1}.  A hybrid zonotope is

    { Gc xi_c + Gb xi_b + c  |  Ac xi_c + Ab xi_b = b }.

Operations are pure functions returning new immutable sets.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.linalg import lsmr

EPS_EQ = 1e-8
DEFAULT_TOL = 1e-6
DENSE_COLS = 32
ENUM_BUDGET = 4096

_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


class DimensionError(ValueError):
    """Raised when operand shapes do not line up."""


class EmptySetError(ValueError):
    pass


class UnboundedSetError(ValueError):
    pass


class UndecidableError(RuntimeError):
    """Containment could not be decided within the enumeration budget."""


def _store(M, shape: tuple[int, int] | None = None):
    """Canonical matrix storage: dense below DENSE_COLS columns, CSR otherwise."""
    if M is None:
        M = np.zeros(shape)
    if sp.issparse(M):
        M = M.tocsr()
    else:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if shape is not None and M.size == 0:
            M = M.reshape(shape)
    if shape is not None and M.shape != shape:
        raise DimensionError(f"expected matrix of shape {shape}, got {M.shape}")
    if M.shape[1] < DENSE_COLS:
        return M.toarray() if sp.issparse(M) else M
    if not sp.issparse(M):
        M = sp.csr_matrix(M)
    M.eliminate_zeros()
    return M


def _dense(M) -> np.ndarray:
    return M.toarray() if sp.issparse(M) else np.asarray(M)


def _csr(M) -> sp.csr_matrix:
    return M.tocsr() if sp.issparse(M) else sp.csr_matrix(M)


def _vec(v, n: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if n is not None and v.size != n:
        raise DimensionError(f"expected vector of length {n}, got {v.size}")
    return v


# ----------------------------------------------------------------------------
# H-rep polytopes
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HPolytope:
    """{x | ineq_matrix x <= ineq_rhs, eq_matrix x = eq_rhs}; either block may have zero rows."""

    ineq_matrix: np.ndarray
    ineq_rhs: np.ndarray
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.ineq_matrix, dtype=float)
        A = np.asarray(self.eq_matrix, dtype=float)
        n = max(L.shape[1] if L.ndim == 2 else 0, A.shape[1] if A.ndim == 2 else 0)
        L = L.reshape(-1, n) if L.size else np.zeros((0, n))
        A = A.reshape(-1, n) if A.size else np.zeros((0, n))
        r = _vec(self.ineq_rhs) if np.size(self.ineq_rhs) else np.zeros(0)
        b = _vec(self.eq_rhs) if np.size(self.eq_rhs) else np.zeros(0)
        if L.shape[0] != r.size or A.shape[0] != b.size:
            raise DimensionError(
                f"H-rep rows/rhs mismatch: L {L.shape} vs r {r.shape}, A {A.shape} vs b {b.shape}"
            )
        if L.shape[1] != A.shape[1]:
            raise DimensionError(f"inequality block has {L.shape[1]} columns, equality block {A.shape[1]}")
        object.__setattr__(self, "ineq_matrix", L)
        object.__setattr__(self, "ineq_rhs", r)
        object.__setattr__(self, "eq_matrix", A)
        object.__setattr__(self, "eq_rhs", b)

    @property
    def dim(self) -> int:
        return self.ineq_matrix.shape[1]

    @property
    def n_ineq(self) -> int:
        return self.ineq_matrix.shape[0]

    @property
    def n_eq(self) -> int:
        return self.eq_matrix.shape[0]

    @classmethod
    def from_inequalities(cls, L, r) -> "HPolytope":
        L = np.atleast_2d(np.asarray(L, dtype=float))
        return cls(L, r, np.zeros((0, L.shape[1])), np.zeros(0))

    @classmethod
    def from_equalities(cls, A, b) -> "HPolytope":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls(np.zeros((0, A.shape[1])), np.zeros(0), A, b)

    @classmethod
    def entire(cls, n: int) -> "HPolytope":
        return cls(np.zeros((0, n)), np.zeros(0), np.zeros((0, n)), np.zeros(0))

    @classmethod
    def from_box(cls, lo, hi) -> "HPolytope":
        lo, hi = _vec(lo), _vec(hi)
        n = lo.size
        if np.any(hi < lo):
            raise EmptySetError(f"box with hi < lo: lo={lo}, hi={hi}")
        I = np.eye(n)
        return cls.from_inequalities(np.vstack([I, -I]), np.concatenate([hi, -lo]))

    @classmethod
    def from_vertices(cls, vertices) -> "HPolytope":
        """Convex polygon (2-D) from its vertices, any order."""
        V = np.asarray(vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 2 or V.shape[0] < 3:
            raise DimensionError("from_vertices expects at least three 2-D vertices")
        ctr = V.mean(axis=0)
        order = np.argsort(np.arctan2(V[:, 1] - ctr[1], V[:, 0] - ctr[0]))
        V = V[order]
        rows, rhs = [], []
        for i in range(len(V)):
            p, q = V[i], V[(i + 1) % len(V)]
            edge = q - p
            if np.linalg.norm(edge) < 1e-12:
                continue
            nrm = np.array([edge[1], -edge[0]])
            nrm /= np.linalg.norm(nrm)
            rows.append(nrm)
            rhs.append(nrm @ p)
        return cls.from_inequalities(np.array(rows), np.array(rhs))

    def translate(self, t) -> "HPolytope":
        t = _vec(t, self.dim)
        return HPolytope(
            self.ineq_matrix, self.ineq_rhs + self.ineq_matrix @ t, self.eq_matrix, self.eq_rhs + self.eq_matrix @ t
        )

    def violation(self, x) -> np.ndarray:
        """Largest constraint violation per point (<= 0 means inside)."""
        X = np.atleast_2d(np.asarray(x, dtype=float))
        if X.shape[1] != self.dim:
            raise DimensionError(f"point dimension {X.shape[1]} does not match polytope dimension {self.dim}")
        v = np.full(X.shape[0], -np.inf)
        if self.n_ineq:
            v = np.maximum(v, (X @ self.ineq_matrix.T - self.ineq_rhs).max(axis=1))
        if self.n_eq:
            v = np.maximum(v, np.abs(X @ self.eq_matrix.T - self.eq_rhs).max(axis=1))
        return v

    def contains(self, x, tol: float = DEFAULT_TOL) -> bool:
        return bool(self.violation(x)[0] <= tol)

    def contains_points(self, X, tol: float = DEFAULT_TOL) -> np.ndarray:
        return self.violation(X) <= tol

    def _lp(self, c, extra_ub=None):
        kw = {}
        if self.n_ineq:
            kw["A_ub"], kw["b_ub"] = self.ineq_matrix, self.ineq_rhs
        if self.n_eq:
            kw["A_eq"], kw["b_eq"] = self.eq_matrix, self.eq_rhs
        return linprog(c, bounds=[(None, None)] * self.dim, method="highs", options=_LP_OPTIONS, **kw)

    def is_empty(self) -> bool:
        res = self._lp(np.zeros(self.dim))
        return res.status == 2

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = np.empty(self.dim), np.empty(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            for sign, out in ((1.0, lo), (-1.0, hi)):
                res = self._lp(sign * e)
                if res.status == 2:
                    raise EmptySetError("polytope is empty")
                if res.status == 3:
                    raise UnboundedSetError(f"polytope is unbounded along coordinate {i}")
                out[i] = sign * res.fun
        return lo, hi

    def chebyshev_radius(self) -> float:
        """Radius of the largest inscribed ball (0 for degenerate sets, -inf when empty)."""
        if self.n_eq:
            return 0.0 if not self.is_empty() else -np.inf
        norms = np.linalg.norm(self.ineq_matrix, axis=1)
        A = np.hstack([self.ineq_matrix, norms[:, None]])
        c = np.zeros(self.dim + 1)
        c[-1] = -1.0
        bounds = [(None, None)] * self.dim + [(None, 1e6)]
        res = linprog(c, A_ub=A, b_ub=self.ineq_rhs, bounds=bounds, method="highs")
        if res.status != 0:
            return -np.inf
        return float(-res.fun)

    def intersect(self, other: "HPolytope") -> "HPolytope":
        if other.dim != self.dim:
            raise DimensionError(f"cannot intersect polytopes of dimension {self.dim} and {other.dim}")
        return HPolytope(
            np.vstack([self.ineq_matrix, other.ineq_matrix]),
            np.concatenate([self.ineq_rhs, other.ineq_rhs]),
            np.vstack([self.eq_matrix, other.eq_matrix]),
            np.concatenate([self.eq_rhs, other.eq_rhs]),
        )

    def to_constrained_zonotope(self) -> "HybridZonotope":
        """Exact constrained-zonotope form: bounding box zonotope intersected with the non-redundant rows."""
        lo, hi = self.bounding_box()
        width = hi - lo
        keep = width > 0
        G = np.diag(width)[:, keep]
        box = HybridZonotope.zonotope(G, lo)
        # rows implied by the bounding box add nothing
        L, r = self.ineq_matrix, self.ineq_rhs
        if L.shape[0]:
            worst = np.maximum(L, 0) @ hi + np.minimum(L, 0) @ lo
            needed = worst > r + 1e-12
            L, r = L[needed], r[needed]
        A, b = self.eq_matrix, self.eq_rhs
        if A.shape[0]:
            varies = np.abs(A) @ width > 1e-12
            A, b = A[varies], b[varies]
        H = HPolytope(L, r, A, b)
        if H.n_ineq == 0 and H.n_eq == 0:
            return box
        return generalized_intersection_hz(box, np.eye(self.dim), H)


# ----------------------------------------------------------------------------
# Zonotope family
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class FactorPoint:
    """A factor assignment (continuous in [0,1], binary in {0,1})."""

    cont: np.ndarray
    bin: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.cont, self.bin])


@dataclass(frozen=True, eq=False)
class HybridZonotope:
    cont_generators: object
    bin_generators: object
    center: np.ndarray
    con_cont: object
    con_bin: object
    con_rhs: np.ndarray

    def __post_init__(self):
        c = _vec(self.center)
        n = c.size
        if n < 1:
            raise DimensionError("hybrid zonotope must have dimension >= 1")
        Gc = _store(self.cont_generators, None if self.cont_generators is not None else (n, 0))
        Gb = _store(self.bin_generators, None if self.bin_generators is not None else (n, 0))
        if Gc.shape[0] != n or Gb.shape[0] != n:
            raise DimensionError(f"generator rows {Gc.shape[0]}/{Gb.shape[0]} do not match center length {n}")
        b = _vec(self.con_rhs) if self.con_rhs is not None else np.zeros(0)
        nc = b.size
        Ac = _store(self.con_cont, (nc, Gc.shape[1])) if self.con_cont is not None else _store(None, (nc, Gc.shape[1]))
        Ab = _store(self.con_bin, (nc, Gb.shape[1])) if self.con_bin is not None else _store(None, (nc, Gb.shape[1]))
        for name, M in (("Gc", Gc), ("Gb", Gb), ("Ac", Ac), ("Ab", Ab)):
            data = M.data if sp.issparse(M) else M
            if not np.all(np.isfinite(data)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "cont_generators", Gc)
        object.__setattr__(self, "bin_generators", Gb)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "con_cont", Ac)
        object.__setattr__(self, "con_bin", Ab)
        object.__setattr__(self, "con_rhs", b)

    # -- constructors -------------------------------------------------------
    @classmethod
    def zonotope(cls, G, c) -> "HybridZonotope":
        c = _vec(c)
        G = np.asarray(G, dtype=float).reshape(c.size, -1) if not sp.issparse(G) else G
        return cls(G, np.zeros((c.size, 0)), c, None, None, np.zeros(0))

    @classmethod
    def constrained_zonotope(cls, G, c, A, b) -> "HybridZonotope":
        c = _vec(c)
        return cls(G, np.zeros((c.size, 0)), c, A, None, b)

    @classmethod
    def point(cls, c) -> "HybridZonotope":
        c = _vec(c)
        return cls.zonotope(np.zeros((c.size, 0)), c)

    @classmethod
    def box(cls, lo, hi) -> "HybridZonotope":
        lo, hi = _vec(lo), _vec(hi)
        return cls.zonotope(np.diag(hi - lo), lo)

    @classmethod
    def binary_box(cls, n: int) -> "HybridZonotope":
        """{0,1}^n."""
        return cls(np.zeros((n, 0)), np.eye(n), np.zeros(n), None, None, np.zeros(0))

    # -- sizes --------------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def n_g(self) -> int:
        return self.cont_generators.shape[1]

    @property
    def n_b(self) -> int:
        return self.bin_generators.shape[1]

    @property
    def n_c(self) -> int:
        return self.con_rhs.size

    @property
    def complexity(self) -> tuple[int, int, int]:
        return (self.n_g, self.n_b, self.n_c)

    def generators(self) -> sp.csr_matrix:
        return sp.hstack([_csr(self.cont_generators), _csr(self.bin_generators)], format="csr")

    def constraints(self) -> sp.csr_matrix:
        return sp.hstack([_csr(self.con_cont), _csr(self.con_bin)], format="csr")

    # -- factor-level helpers ----------------------------------------------
    def decode(self, fp: FactorPoint) -> np.ndarray:
        return self.cont_generators @ _vec(fp.cont, self.n_g) + self.bin_generators @ _vec(fp.bin, self.n_b) + self.center

    def constraint_residual(self, fp: FactorPoint) -> float:
        if self.n_c == 0:
            return 0.0
        r = self.con_cont @ _vec(fp.cont, self.n_g) + self.con_bin @ _vec(fp.bin, self.n_b) - self.con_rhs
        return float(np.abs(r).max())

    def is_valid_factor(self, fp: FactorPoint, eps: float = EPS_EQ) -> bool:
        xc, xb = _vec(fp.cont, self.n_g), _vec(fp.bin, self.n_b)
        in_box = np.all(xc >= -eps) and np.all(xc <= 1 + eps)
        binary = np.all((xb == 0) | (xb == 1))
        return bool(in_box and binary and self.constraint_residual(fp) <= eps)

    def __repr__(self) -> str:
        return f"HybridZonotope(dim={self.dim}, n_g={self.n_g}, n_b={self.n_b}, n_c={self.n_c})"


@dataclass(frozen=True, eq=False)
class Zonotope:
    generators: np.ndarray
    center: np.ndarray

    def to_hybrid(self) -> HybridZonotope:
        return HybridZonotope.zonotope(self.generators, self.center)


@dataclass(frozen=True, eq=False)
class ConstrainedZonotope:
    generators: np.ndarray
    center: np.ndarray
    con_matrix: np.ndarray
    con_rhs: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.generators, dtype=float))
        A = np.asarray(self.con_matrix, dtype=float)
        A = A.reshape(0, G.shape[1]) if A.size == 0 else np.atleast_2d(A)
        if A.shape[1] != G.shape[1]:
            raise DimensionError(f"constraint matrix has {A.shape[1]} columns but there are {G.shape[1]} generators")

    def to_hybrid(self) -> HybridZonotope:
        return HybridZonotope.constrained_zonotope(self.generators, self.center, self.con_matrix, self.con_rhs)


def as_hybrid(Z) -> HybridZonotope:
    if isinstance(Z, HybridZonotope):
        return Z
    if isinstance(Z, (Zonotope, ConstrainedZonotope)):
        return Z.to_hybrid()
    if isinstance(Z, HPolytope):
        return Z.to_constrained_zonotope()
    raise TypeError(f"cannot interpret {type(Z).__name__} as a hybrid zonotope")


# ----------------------------------------------------------------------------
# Operations
# ----------------------------------------------------------------------------


def affine_map(Z, R, t=None) -> HybridZonotope:
    """R Z + t.  Constraints are untouched."""
    Z = as_hybrid(Z)
    R = R if sp.issparse(R) else np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape[1] != Z.dim:
        raise DimensionError(f"map of shape {R.shape} cannot act on a set of dimension {Z.dim}")
    m = R.shape[0]
    t = np.zeros(m) if t is None else _vec(t, m)
    Rs = _csr(R)
    return HybridZonotope(
        Rs @ _csr(Z.cont_generators),
        Rs @ _csr(Z.bin_generators),
        np.asarray(Rs @ Z.center).reshape(-1) + t,
        Z.con_cont,
        Z.con_bin,
        Z.con_rhs,
    )


def project(Z, dims: Sequence[int]) -> HybridZonotope:
    Z = as_hybrid(Z)
    dims = list(dims)
    S = sp.csr_matrix((np.ones(len(dims)), (np.arange(len(dims)), dims)), shape=(len(dims), Z.dim))
    return affine_map(Z, S)


def cartesian_product(X, Z) -> HybridZonotope:
    X, Z = as_hybrid(X), as_hybrid(Z)
    bd = lambda a, b: sp.block_diag([_csr(a), _csr(b)], format="csr")
    return HybridZonotope(
        bd(X.cont_generators, Z.cont_generators),
        bd(X.bin_generators, Z.bin_generators),
        np.concatenate([X.center, Z.center]),
        bd(X.con_cont, Z.con_cont),
        bd(X.con_bin, Z.con_bin),
        np.concatenate([X.con_rhs, Z.con_rhs]),
    )


def minkowski_sum(X, Y) -> HybridZonotope:
    X, Y = as_hybrid(X), as_hybrid(Y)
    if X.dim != Y.dim:
        raise DimensionError(f"Minkowski sum of sets with dimensions {X.dim} and {Y.dim}")
    bd = lambda a, b: sp.block_diag([_csr(a), _csr(b)], format="csr")
    return HybridZonotope(
        sp.hstack([_csr(X.cont_generators), _csr(Y.cont_generators)], format="csr"),
        sp.hstack([_csr(X.bin_generators), _csr(Y.bin_generators)], format="csr"),
        X.center + Y.center,
        bd(X.con_cont, Y.con_cont),
        bd(X.con_bin, Y.con_bin),
        np.concatenate([X.con_rhs, Y.con_rhs]),
    )


def generalized_intersection_hz(Z, R, H: HPolytope) -> HybridZonotope:
    """{x in Z | R x in H} for an H-rep polytope H.

    Each inequality row receives its own continuous slack generator scaled by

        s = r - L R c + sum_i |L R g_c,i| + sum_i |L R g_b,i|,

    so the result gains n_i continuous generators and n_i + n_e constraints.
    """
    Z = as_hybrid(Z)
    R = R if sp.issparse(R) else np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape[1] != Z.dim or R.shape[0] != H.dim:
        raise DimensionError(f"R of shape {R.shape} must map dimension {Z.dim} into dimension {H.dim}")
    Rs = _csr(R)
    RGc = Rs @ _csr(Z.cont_generators)
    RGb = Rs @ _csr(Z.bin_generators)
    Rc = np.asarray(Rs @ Z.center).reshape(-1)
    L = sp.csr_matrix(H.ineq_matrix)
    Ah = sp.csr_matrix(H.eq_matrix)
    n_i, n_e = H.n_ineq, H.n_eq

    LRGc, LRGb = L @ RGc, L @ RGb
    LRc = L @ Rc
    s = H.ineq_rhs - LRc + np.asarray(abs(LRGc).sum(axis=1)).reshape(-1) + np.asarray(abs(LRGb).sum(axis=1)).reshape(-1)
    # s < 0 means the halfspace misses even the relaxed set; a zero slack keeps the result empty
    s = np.maximum(s, 0.0)

    Gc = sp.hstack([_csr(Z.cont_generators), sp.csr_matrix((Z.dim, n_i))], format="csr")
    Ac = sp.vstack(
        [
            sp.hstack([_csr(Z.con_cont), sp.csr_matrix((Z.n_c, n_i))], format="csr"),
            sp.hstack([LRGc, sp.diags(s, format="csr", shape=(n_i, n_i))], format="csr"),
            sp.hstack([Ah @ RGc, sp.csr_matrix((n_e, n_i))], format="csr"),
        ],
        format="csr",
    )
    Ab = sp.vstack([_csr(Z.con_bin), LRGb, Ah @ RGb], format="csr")
    b = np.concatenate([Z.con_rhs, H.ineq_rhs - LRc, H.eq_rhs - Ah @ Rc])
    return HybridZonotope(Gc, Z.bin_generators, Z.center, Ac, Ab, b)


def intersection(Z, Y, R=None) -> HybridZonotope:
    """{x in Z | R x in Y} for a hybrid zonotope Y (R defaults to identity)."""
    Z, Y = as_hybrid(Z), as_hybrid(Y)
    R = sp.identity(Z.dim, format="csr") if R is None else _csr(R)
    if R.shape != (Y.dim, Z.dim):
        raise DimensionError(f"R of shape {R.shape} must map dimension {Z.dim} into dimension {Y.dim}")
    z = lambda r, c: sp.csr_matrix((r, c))
    Gc = sp.hstack([_csr(Z.cont_generators), z(Z.dim, Y.n_g)], format="csr")
    Gb = sp.hstack([_csr(Z.bin_generators), z(Z.dim, Y.n_b)], format="csr")
    Ac = sp.bmat(
        [
            [_csr(Z.con_cont), z(Z.n_c, Y.n_g)],
            [z(Y.n_c, Z.n_g), _csr(Y.con_cont)],
            [R @ _csr(Z.cont_generators), -_csr(Y.cont_generators)],
        ],
        format="csr",
    )
    Ab = sp.bmat(
        [
            [_csr(Z.con_bin), z(Z.n_c, Y.n_b)],
            [z(Y.n_c, Z.n_b), _csr(Y.con_bin)],
            [R @ _csr(Z.bin_generators), -_csr(Y.bin_generators)],
        ],
        format="csr",
    )
    b = np.concatenate([Z.con_rhs, Y.con_rhs, Y.center - R @ Z.center])
    return HybridZonotope(Gc, Gb, Z.center, Ac, Ab, b)


def union_of_polytopes(parts: Sequence[HPolytope]) -> HybridZonotope:
    """Union of bounded, nonempty polytopes with one binary indicator per part.

    Part i enters as a constrained zonotope <G_i, c_i, A_i, b_i> and the union is

        x = sum_i (G_i xi_i + c_i d_i),  A_i xi_i = b_i d_i,  xi_i + s_i = d_i 1,  sum_i d_i = 1,

    with d binary.  The slack rows pin xi_i to zero whenever d_i = 0, so d_i is
    an exact region indicator.
    """
    if len(parts) == 0:
        raise ValueError("union of an empty list of polytopes")
    dim = parts[0].dim
    czs = []
    for i, P in enumerate(parts):
        if P.dim != dim:
            raise DimensionError(f"part {i} has dimension {P.dim}, expected {dim}")
        if P.is_empty():
            raise EmptySetError(f"part {i} of the union is empty")
        try:
            cz = P.to_constrained_zonotope()
        except UnboundedSetError as exc:
            raise UnboundedSetError(f"part {i} of the union is unbounded: {exc}") from None
        czs.append(cz)

    K = len(czs)
    m = [cz.n_g for cz in czs]
    p = [cz.n_c for cz in czs]
    n_g = 2 * sum(m)
    n_c = sum(p) + sum(m) + 1
    Gc = sp.lil_matrix((dim, n_g))
    Gb = np.zeros((dim, K))
    Ac = sp.lil_matrix((n_c, n_g))
    Ab = np.zeros((n_c, K))
    b = np.zeros(n_c)
    col = row = 0
    for i, cz in enumerate(czs):
        mi, pi = m[i], p[i]
        xi_cols = slice(col, col + mi)
        s_cols = slice(col + mi, col + 2 * mi)
        Gc[:, xi_cols] = _dense(cz.cont_generators)
        Gb[:, i] = cz.center
        if pi:
            Ac[row : row + pi, xi_cols] = _dense(cz.con_cont)
            Ab[row : row + pi, i] = -cz.con_rhs
            row += pi
        for j in range(mi):
            Ac[row + j, col + j] = 1.0
            Ac[row + j, col + mi + j] = 1.0
            Ab[row + j, i] = -1.0
        row += mi
        col += 2 * mi
    Ab[row, :] = 1.0
    b[row] = 1.0
    return HybridZonotope(Gc.tocsr(), Gb, np.zeros(dim), Ac.tocsr(), Ab, b)


def interval_hull(Z, tighten: bool | None = None) -> tuple[np.ndarray, np.ndarray]:
    """A box guaranteed to contain Z.

    The cheap bound relaxes binaries to [0,1] and sums generator rows.  With
    ``tighten`` (default for constrained sets of dimension <= 64) each
    coordinate is additionally bounded by an LP over the relaxed constraints.
    """
    Z = as_hybrid(Z)
    G = Z.generators()
    neg, pos = G.copy(), G.copy()
    neg.data = np.minimum(neg.data, 0.0)
    pos.data = np.maximum(pos.data, 0.0)
    lo = Z.center + np.asarray(neg.sum(axis=1)).reshape(-1)
    hi = Z.center + np.asarray(pos.sum(axis=1)).reshape(-1)
    if tighten is None:
        tighten = Z.n_c > 0 and Z.dim <= 64
    if not tighten or Z.n_c == 0:
        return lo, hi
    A = Z.constraints()
    n = Z.n_g + Z.n_b
    for i in range(Z.dim):
        g = np.asarray(G[i].todense()).reshape(-1)
        for sign in (1.0, -1.0):
            res = linprog(sign * g, A_eq=A, b_eq=Z.con_rhs, bounds=[(0, 1)] * n, method="highs")
            if res.status == 2:
                raise EmptySetError("set is empty (relaxation infeasible)")
            if res.status == 0:
                val = sign * res.fun + Z.center[i]
                if sign > 0:
                    lo[i] = max(lo[i], val)
                else:
                    hi[i] = min(hi[i], val)
    return lo, hi


# ----------------------------------------------------------------------------
# Containment
# ----------------------------------------------------------------------------


def one_hot_groups(Z: HybridZonotope) -> list[list[int]]:
    """Disjoint groups of binary factors constrained by rows of the form sum(d_group) = 1."""
    if Z.n_c == 0 or Z.n_b == 0:
        return []
    Ac, Ab = _csr(Z.con_cont), _csr(Z.con_bin)
    cont_nnz = np.diff(Ac.indptr)
    taken: set[int] = set()
    groups = []
    for r in range(Z.n_c):
        if cont_nnz[r] or Z.con_rhs[r] != 1.0:
            continue
        lo, hi = Ab.indptr[r], Ab.indptr[r + 1]
        idx, vals = Ab.indices[lo:hi], Ab.data[lo:hi]
        if len(idx) < 1 or not np.all(vals == 1.0):
            continue
        if taken.intersection(idx.tolist()):
            continue
        taken.update(idx.tolist())
        groups.append(sorted(idx.tolist()))
    return groups


def binary_assignments(Z: HybridZonotope) -> tuple[int, Iterable[np.ndarray]]:
    """Count and iterator over binary assignments respecting one-hot rows."""
    groups = one_hot_groups(Z)
    grouped = {j for g in groups for j in g}
    free = [j for j in range(Z.n_b) if j not in grouped]
    count = 2 ** len(free)
    for g in groups:
        count *= len(g)

    def gen():
        for choice in itertools.product(*groups):
            for bits in itertools.product((0.0, 1.0), repeat=len(free)):
                d = np.zeros(Z.n_b)
                d[list(choice)] = 1.0
                d[free] = bits
                yield d

    return count, gen()


def _lp_continuous(Z: HybridZonotope, xb: np.ndarray, x=None, tol: float = DEFAULT_TOL, cost=None):
    """Solve for continuous factors with binaries fixed; returns xi_c or None.

    With a target point ``x`` the LP minimizes the max-norm deviation (capped
    at ``tol``) so the witness does not sit on the tolerance boundary.
    """
    n = Z.n_g
    rhs = Z.con_rhs - Z.con_bin @ xb
    if n == 0:
        if not _eq_ok(Z, np.zeros(0), xb):
            return None
        if x is not None and not np.all(np.abs(x - Z.center - Z.bin_generators @ xb) <= tol):
            return None
        return np.zeros(0)
    if x is None:
        kw = {"A_eq": Z.con_cont, "b_eq": rhs} if Z.n_c else {}
        c = np.zeros(n) if cost is None else cost
        res = linprog(c, bounds=[(0, 1)] * n, method="highs", options=_LP_OPTIONS, **kw)
        return np.clip(res.x, 0.0, 1.0) if res.status == 0 else None
    target = x - Z.center - Z.bin_generators @ xb
    Gc = _csr(Z.cont_generators)
    one = sp.csr_matrix(np.ones((Z.dim, 1)))
    kw = {
        "A_ub": sp.vstack([sp.hstack([Gc, -one]), sp.hstack([-Gc, -one])], format="csr"),
        "b_ub": np.concatenate([target, -target]),
    }
    if Z.n_c:
        kw["A_eq"] = sp.hstack([_csr(Z.con_cont), sp.csr_matrix((Z.n_c, 1))], format="csr")
        kw["b_eq"] = rhs
    c = np.zeros(n + 1)
    c[-1] = 1.0
    res = linprog(c, bounds=[(0, 1)] * n + [(0, tol)], method="highs", options=_LP_OPTIONS, **kw)
    if res.status != 0:
        return None
    return np.clip(res.x[:n], 0.0, 1.0)


def polish(Z: HybridZonotope, fp: FactorPoint, sweeps: int = 3, margin: float = 1e-9) -> FactorPoint:
    """Project continuous factors onto the equality constraints with binaries held fixed.

    Factors sitting at a bound stay put; the interior ones take the
    least-norm correction.  Returns ``fp`` unchanged if the projection would
    leave the unit box.
    """
    if Z.n_c == 0 or Z.n_g == 0:
        return fp
    xc = np.clip(_vec(fp.cont, Z.n_g), 0.0, 1.0)
    xb = _vec(fp.bin, Z.n_b)
    Ac = _csr(Z.con_cont)
    rhs = Z.con_rhs - Z.con_bin @ xb
    for _ in range(sweeps):
        r = rhs - Ac @ xc
        if np.abs(r).max() <= 1e-13:
            break
        free = np.flatnonzero((xc > margin) & (xc < 1 - margin))
        if free.size == 0:
            break
        step = lsmr(Ac[:, free], r, atol=1e-15, btol=1e-15, maxiter=10 * (free.size + Ac.shape[0]))[0]
        trial = xc.copy()
        trial[free] += step
        if trial.min() < -margin or trial.max() > 1 + margin:
            break
        xc = np.clip(trial, 0.0, 1.0)
    out = FactorPoint(xc, xb)
    return out if Z.constraint_residual(out) <= Z.constraint_residual(fp) else fp


def _eq_ok(Z, xc, xb) -> bool:
    if Z.n_c == 0:
        return True
    return bool(np.abs(Z.con_cont @ xc + Z.con_bin @ xb - Z.con_rhs).max() <= EPS_EQ)


def _relaxation_feasible(Z: HybridZonotope, x, tol) -> bool:
    """Cheap necessary test: is x near the convex relaxation?  Errs on the side of True."""
    n = Z.n_g + Z.n_b
    if n == 0:
        return bool(np.all(np.abs(x - Z.center) <= tol))
    G = Z.generators()
    one = sp.csr_matrix(np.ones((Z.dim, 1)))
    kw = {
        "A_ub": sp.vstack([sp.hstack([G, -one]), sp.hstack([-G, -one])], format="csr"),
        "b_ub": np.concatenate([x - Z.center, Z.center - x]),
    }
    if Z.n_c:
        kw["A_eq"] = sp.hstack([Z.constraints(), sp.csr_matrix((Z.n_c, 1))], format="csr")
        kw["b_eq"] = Z.con_rhs
    c = np.zeros(n + 1)
    c[-1] = 1.0
    res = linprog(c, bounds=[(0, 1)] * n + [(0, None)], method="highs", **kw)
    if res.status == 2:
        return False
    return res.status != 0 or res.fun <= tol + 1e-6


def contains(Z, x, tol: float = DEFAULT_TOL, budget: int = ENUM_BUDGET) -> tuple[bool, FactorPoint | None]:
    """Decide x in Z (to within ``tol``) and return a witness factor point.

    Binary assignments are enumerated (one-hot rows prune the enumeration)
    when their count is at most ``budget``; larger sets go through a MILP
    feasibility search.
    """
    Z = as_hybrid(Z)
    x = _vec(x)
    if x.size != Z.dim:
        raise DimensionError(f"point of dimension {x.size} tested against set of dimension {Z.dim}")
    lo, hi = interval_hull(Z, tighten=False)
    if np.any(x < lo - tol) or np.any(x > hi + tol):
        return False, None
    if not _relaxation_feasible(Z, x, tol):
        return False, None

    count, assignments = binary_assignments(Z)
    if count <= budget:
        for xb in assignments:
            xc = _lp_continuous(Z, xb, x, tol)
            if xc is not None:
                fp = _best_witness(Z, FactorPoint(xc, xb), x, tol)
                if fp is not None:
                    return True, fp
        return False, None

    xb = _milp_binaries(Z, x, tol)
    if xb is None:
        return False, None
    xc = _lp_continuous(Z, xb, x, tol)
    if xc is None:
        return False, None
    fp = _best_witness(Z, FactorPoint(xc, xb), x, tol)
    return (True, fp) if fp is not None else (False, None)


def _best_witness(Z, fp, x, tol):
    for cand in (polish(Z, fp), fp):
        if _witness_ok(Z, cand, x, tol):
            return cand
    return None


def _witness_ok(Z, fp, x, tol) -> bool:
    return bool(np.abs(Z.decode(fp) - x).max(initial=0.0) <= tol * (1 + 1e-9) + 1e-12 and Z.constraint_residual(fp) <= EPS_EQ)


def _milp_binaries(Z: HybridZonotope, x, tol):
    """Binaries of a factor point nearest to x in the max norm, or None if no point exists.

    Minimizing the deviation instead of posing a pure feasibility problem
    keeps HiGHS away from spurious infeasibility verdicts on tight tolerances;
    the caller confirms membership with an LP at fixed binaries.
    """
    try:
        from scipy.optimize import Bounds, LinearConstraint, milp
    except ImportError:  # pragma: no cover - scipy < 1.9
        raise UndecidableError(
            f"{Z.n_b} binary factors exceed the enumeration budget and no MILP solver is available"
        ) from None
    n = Z.n_g + Z.n_b
    G = Z.generators()
    t = np.ones((Z.dim, 1))
    target = x - Z.center
    cons = [
        LinearConstraint(sp.hstack([G, -t], format="csr"), -np.inf, target),
        LinearConstraint(sp.hstack([G, t], format="csr"), target, np.inf),
    ]
    if Z.n_c:
        cons.append(LinearConstraint(sp.hstack([Z.constraints(), sp.csr_matrix((Z.n_c, 1))], format="csr"), Z.con_rhs, Z.con_rhs))
    cost = np.zeros(n + 1)
    cost[-1] = 1.0
    integrality = np.concatenate([np.zeros(Z.n_g), np.ones(Z.n_b), [0]])
    ub = np.ones(n + 1)
    ub[-1] = np.inf
    res = milp(cost, constraints=cons, integrality=integrality, bounds=Bounds(np.zeros(n + 1), ub))
    if res.status == 0:
        return np.round(res.x[Z.n_g : n]) if res.x[-1] <= tol + 1e-7 else None
    if res.status == 2:
        return None
    raise UndecidableError(f"MILP search ended with status {res.status}: {res.message}")


def _random_milp_binaries(Z: HybridZonotope, rng) -> np.ndarray | None:
    """Feasible binaries minimizing a random linear objective over the factors."""
    from scipy.optimize import Bounds, LinearConstraint, milp

    n = Z.n_g + Z.n_b
    cons = [LinearConstraint(Z.constraints(), Z.con_rhs, Z.con_rhs)] if Z.n_c else []
    integrality = np.concatenate([np.zeros(Z.n_g), np.ones(Z.n_b)])
    res = milp(rng.normal(size=n), constraints=cons, integrality=integrality, bounds=Bounds(0, 1))
    return np.round(res.x[Z.n_g :]) if res.status == 0 else None


def sample(Z, n: int, rng: np.random.Generator, max_tries: int = 200) -> list[FactorPoint]:
    """Random feasible factor points (convex combinations of LP vertices per binary assignment).

    Binaries are drawn uniformly within the one-hot groups; after repeated
    misses a MILP with a random objective proposes them instead.
    """
    Z = as_hybrid(Z)
    out: list[FactorPoint] = []
    groups = one_hot_groups(Z)
    grouped = {j for g in groups for j in g}
    free = [j for j in range(Z.n_b) if j not in grouped]
    tries = misses = 0
    while len(out) < n and tries < max_tries * max(n, 1):
        tries += 1
        xb = None
        if misses >= 10 and Z.n_b:
            xb = _random_milp_binaries(Z, rng)
            if xb is None:
                break
        if xb is None:
            xb = np.zeros(Z.n_b)
            for g in groups:
                xb[rng.choice(g)] = 1.0
            xb[free] = rng.integers(0, 2, len(free))
        verts = []
        for _ in range(3):
            xc = _lp_continuous(Z, xb, cost=rng.normal(size=Z.n_g))
            if xc is None:
                break
            verts.append(xc)
        if not verts:
            misses += 1
            continue
        w = rng.dirichlet(np.ones(len(verts)))
        xc = np.clip(sum(wi * v for wi, v in zip(w, verts)), 0.0, 1.0)
        fp = polish(Z, FactorPoint(xc, xb))
        if Z.constraint_residual(fp) <= EPS_EQ:
            out.append(fp)
        else:
            misses += 1
    if len(out) < n:
        raise EmptySetError(f"could only sample {len(out)} of {n} points; set may be empty")
    return out
