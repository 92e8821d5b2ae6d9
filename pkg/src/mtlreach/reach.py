"""Region maps with exposed indicators and lifted forward reachability.

A map is one or more *layers*.  Each layer is a union of labeled polytopes in
a subset of the state coordinates (for example the planar position) whose
indicator binaries are appended to the state, so that ``[x; xi]`` lives in
the augmented map set.  Coordinates not covered by a layer are bounded by a
free set (a box by default).

The lifted set stacks ``[x_0, xi_0, u_0, x_1, xi_1, u_1, ..., x_N, xi_N]`` and
is built one step at a time by a constrained product followed by the
dynamics equality ``A x_k + W xi_k + B u_k - x_{k+1} = 0``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .mtl import OperatorPolytope
from .zonoset import (
    DEFAULT_TOL,
    DimensionError,
    HPolytope,
    HybridZonotope,
    affine_map,
    as_hybrid,
    cartesian_product,
    generalized_intersection_hz,
    intersection,
    minkowski_sum,
    project,
    union_of_polytopes,
)

ROLES = ("free", "obstacle", "goal", "key", "door", "charge", "exchange")
# overlays may not cover these
RESTRICTED_ROLES = ("obstacle", "door")


class MapError(ValueError):
    """Invalid partition: overlapping DCP regions or uncovered workspace."""


class InfeasibleStartError(ValueError):
    pass


class ClauseBindingError(ValueError):
    """An operator polytope refers to a step or region the lifted set lacks."""


@dataclass(frozen=True, eq=False)
class RegionSpec:
    id: str
    polytope: HPolytope
    disturbance: np.ndarray | None = None
    role: str = "free"
    label: str | None = None
    overlay: bool = False

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"region {self.id!r}: unknown role {self.role!r} (expected one of {', '.join(ROLES)})")
        if self.disturbance is not None:
            object.__setattr__(self, "disturbance", np.asarray(self.disturbance, dtype=float).reshape(-1))

    @property
    def prop(self) -> str:
        return self.label or self.id

    def moved(self, t) -> "RegionSpec":
        return RegionSpec(self.id, self.polytope.translate(t), self.disturbance, self.role, self.label, self.overlay)


@dataclass
class PartitionReport:
    kind: str
    overlaps: list = field(default_factory=list)  # (id_a, id_b, witness point)
    uncovered: np.ndarray | None = None
    restricted_overlays: list = field(default_factory=list)
    samples: int = 0

    @property
    def ok(self) -> bool:
        return not self.overlaps and self.uncovered is None and not self.restricted_overlays

    def describe(self) -> str:
        if self.ok:
            return f"{self.kind} partition valid ({self.samples} coverage samples)"
        msgs = []
        for a, b, w in self.overlaps:
            msgs.append(f"regions {a!r} and {b!r} overlap in their interiors near {np.round(w, 6).tolist()}")
        for a, b, w in self.restricted_overlays:
            msgs.append(f"overlay {a!r} covers restricted region {b!r} near {np.round(w, 6).tolist()}")
        if self.uncovered is not None:
            msgs.append(f"workspace point {np.round(self.uncovered, 6).tolist()} lies in no region")
        return "; ".join(msgs)


def _interior_overlap(P: HPolytope, Q: HPolytope, eps: float = 1e-7):
    """Witness of a point strictly inside both polytopes, else None."""
    if P.n_eq or Q.n_eq:
        return None
    lo1, hi1 = P.bounding_box()
    lo2, hi2 = Q.bounding_box()
    if np.any(np.minimum(hi1, hi2) - np.maximum(lo1, lo2) <= eps):
        return None
    L = np.vstack([P.ineq_matrix, Q.ineq_matrix])
    r = np.concatenate([P.ineq_rhs, Q.ineq_rhs])
    norms = np.linalg.norm(L, axis=1)
    keep = norms > 0
    L, r, norms = L[keep], r[keep], norms[keep]
    n = P.dim
    # maximize t subject to L x + t |L_i| <= r
    res = linprog(
        np.r_[np.zeros(n), -1.0],
        A_ub=np.hstack([L, norms[:, None]]),
        b_ub=r,
        bounds=[(None, None)] * n + [(None, 1.0)],
        method="highs",
    )
    if res.status == 0 and -res.fun > eps:
        return res.x[:n]
    return None


def check_partition(
    regions: Sequence[RegionSpec],
    workspace: HPolytope | None = None,
    kind: str = "DCP",
    holes: Sequence[HPolytope] = (),
    resolution: float | None = None,
) -> PartitionReport:
    """Interior-disjointness probes (DCP, and non-overlay regions of a mixed map) and grid coverage."""
    kind = kind.upper() if kind.lower() != "mixed" else "mixed"
    if kind not in ("DCP", "NCP", "mixed"):
        raise ValueError(f"partition kind must be DCP, NCP or mixed, got {kind!r}")
    rep = PartitionReport(kind)
    if kind != "NCP":
        base = [r for r in regions if kind == "DCP" or not r.overlay]
        for a, b in itertools.combinations(base, 2):
            w = _interior_overlap(a.polytope, b.polytope)
            if w is not None:
                rep.overlaps.append((a.id, b.id, w))
        if kind == "mixed":
            for a in (r for r in regions if r.overlay):
                for b in (r for r in regions if r.role in RESTRICTED_ROLES and r is not a):
                    w = _interior_overlap(a.polytope, b.polytope)
                    if w is not None:
                        rep.restricted_overlays.append((a.id, b.id, w))
    if workspace is not None:
        lo, hi = workspace.bounding_box()
        h = resolution or float(np.max(hi - lo)) / 40.0
        axes = [np.linspace(l, u, max(2, int(np.ceil((u - l) / h)) + 1)) for l, u in zip(lo, hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
        pts = pts[workspace.contains_points(pts, 1e-9)]
        for H in holes:
            # holes are closed sets; their boundary need not be covered
            pts = pts[H.violation(pts) > 1e-9]
        covered = np.zeros(len(pts), dtype=bool)
        for r in regions:
            covered |= r.polytope.contains_points(pts, 1e-9)
        rep.samples = len(pts)
        if not covered.all():
            rep.uncovered = pts[np.flatnonzero(~covered)[0]]
    return rep


@dataclass(frozen=True, eq=False)
class MapLayer:
    """Labeled regions over the state coordinates ``dims``; exactly one indicator is active."""

    regions: tuple[RegionSpec, ...]
    dims: tuple[int, ...]
    kind: str = "DCP"
    workspace: HPolytope | None = None
    holes: tuple[HPolytope, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "holes", tuple(self.holes))
        if not self.regions:
            raise ValueError("a map layer needs at least one region")
        for r in self.regions:
            if r.polytope.dim != len(self.dims):
                raise DimensionError(f"region {r.id!r} has dimension {r.polytope.dim}, layer spans {len(self.dims)} coordinates")

    def moved(self, shifts: Mapping[str, np.ndarray]) -> "MapLayer":
        regs = tuple(r.moved(shifts[r.id]) if r.id in shifts else r for r in self.regions)
        return MapLayer(regs, self.dims, self.kind, self.workspace, self.holes)


@dataclass(frozen=True, eq=False)
class FreeBlock:
    """Convex constraint on state coordinates outside every layer."""

    dims: tuple[int, ...]
    poly: HPolytope
    zono: HybridZonotope | None = None

    def as_set(self) -> HybridZonotope:
        return self.zono if self.zono is not None else self.poly.to_constrained_zonotope()


@dataclass(frozen=True, eq=False)
class AugmentedMap:
    layers: tuple[MapLayer, ...]
    free: tuple[FreeBlock, ...]
    set: HybridZonotope
    n_x: int
    reports: tuple[PartitionReport, ...] = ()
    exclusive: tuple[tuple[str, ...], ...] = ()

    @property
    def regions(self) -> tuple[RegionSpec, ...]:
        return tuple(r for layer in self.layers for r in layer.regions)

    @property
    def region_ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.regions)

    @property
    def n_b(self) -> int:
        return len(self.regions)

    @property
    def kind(self) -> str:
        kinds = {layer.kind for layer in self.layers}
        return kinds.pop() if len(kinds) == 1 else "mixed"

    @property
    def groups(self) -> tuple[tuple[int, ...], ...]:
        out, start = [], 0
        for layer in self.layers:
            out.append(tuple(range(start, start + len(layer.regions))))
            start += len(layer.regions)
        return tuple(out)

    def index_of(self, region_id: str) -> int:
        try:
            return self.region_ids.index(region_id)
        except ValueError:
            raise KeyError(f"unknown region {region_id!r}") from None

    @property
    def W(self) -> np.ndarray:
        W = np.zeros((self.n_x, self.n_b))
        for j, r in enumerate(self.regions):
            if r.disturbance is not None:
                if r.disturbance.size != self.n_x:
                    raise DimensionError(f"region {r.id!r} disturbance has length {r.disturbance.size}, state has {self.n_x}")
                W[:, j] = r.disturbance
        return W

    def regions_of(self) -> dict[str, list[str]]:
        """Proposition name -> region ids (labels plus each id on its own)."""
        out: dict[str, list[str]] = {}
        for r in self.regions:
            out.setdefault(r.prop, []).append(r.id)
            if r.prop != r.id:
                out.setdefault(r.id, [r.id])
        return out

    def labels(self) -> dict[str, str]:
        return {r.id: r.prop for r in self.regions}

    def locate(self, x, tol: float = 1e-9) -> list[list[int]] | None:
        """Per layer, indices of regions containing x; None if x leaves the map."""
        x = np.asarray(x, dtype=float)
        for fb in self.free:
            if not fb.poly.contains(x[list(fb.dims)], tol):
                return None
        out, start = [], 0
        for layer in self.layers:
            xs = x[list(layer.dims)]
            hits = [start + i for i, r in enumerate(layer.regions) if r.polytope.contains(xs, tol)]
            if not hits:
                return None
            out.append(hits)
            start += len(layer.regions)
        return out

    def assignments(self, x, tol: float = 1e-9) -> list[tuple[int, ...]]:
        """Admissible active-region tuples (one per layer) for state x."""
        hits = self.locate(x, tol)
        if hits is None:
            return []
        excl = [{self.index_of(r) for r in g} for g in self.exclusive]
        return [c for c in itertools.product(*hits) if all(len(e.intersection(c)) <= 1 for e in excl)]

    def indicator_consistent(self, x, xi, tol: float = 1e-6) -> bool:
        """Every active indicator names a region containing x, one per layer."""
        xi = np.round(np.asarray(xi, dtype=float))
        for g, layer in zip(self.groups, self.layers):
            act = [j for j in g if xi[j] == 1]
            if len(act) != 1:
                return False
            r = self.regions[act[0]]
            if not r.polytope.contains(np.asarray(x)[list(layer.dims)], tol):
                return False
        return True

    def same_structure(self, other: "AugmentedMap") -> bool:
        return self.region_ids == other.region_ids and self.n_x == other.n_x and np.array_equal(self.W, other.W)


def _permute(Z: HybridZonotope, order: Sequence[int], n: int) -> HybridZonotope:
    """Place coordinate i of Z at position order[i] of an n-vector."""
    P = sp.csr_matrix((np.ones(len(order)), (list(order), list(range(len(order))))), shape=(n, len(order)))
    return affine_map(Z, P)


def build_map(
    layers: Sequence[MapLayer] | MapLayer,
    n_x: int,
    free: Sequence[FreeBlock] = (),
    state_lo=None,
    state_hi=None,
    validate: bool = True,
    resolution: float | None = None,
    exclusive: Sequence[Sequence[str]] = (),
) -> AugmentedMap:
    """Augmented map set over [x; xi] with one one-hot indicator group per layer.

    Coordinates not claimed by a layer or a free block are bounded by
    ``state_lo``/``state_hi``.  ``exclusive`` lists region-id groups whose
    indicators may not be active together.
    """
    if isinstance(layers, MapLayer):
        layers = [layers]
    layers = tuple(layers)
    free = list(free)
    claimed = [d for layer in layers for d in layer.dims] + [d for fb in free for d in fb.dims]
    if len(set(claimed)) != len(claimed):
        raise DimensionError(f"state coordinates claimed twice: {sorted(d for d in set(claimed) if claimed.count(d) > 1)}")
    if any(d < 0 or d >= n_x for d in claimed):
        raise DimensionError(f"layer coordinates {claimed} outside a {n_x}-dimensional state")
    rest = [d for d in range(n_x) if d not in claimed]
    if rest:
        if state_lo is None or state_hi is None:
            raise ValueError(f"state coordinates {rest} need bounds (state_lo/state_hi)")
        lo, hi = np.asarray(state_lo, float), np.asarray(state_hi, float)
        free.append(FreeBlock(tuple(rest), HPolytope.from_box(lo[rest], hi[rest])))

    reports = []
    if validate:
        for layer in layers:
            rep = check_partition(layer.regions, layer.workspace, layer.kind, layer.holes, resolution)
            if not rep.ok:
                raise MapError(rep.describe())
            reports.append(rep)

    # stack [layer_1 coords, ..., free coords] then permute into state order
    pieces, order = [], []
    for layer in layers:
        pieces.append(union_of_polytopes([r.polytope for r in layer.regions]))
        order.extend(layer.dims)
    for fb in free:
        pieces.append(fb.as_set())
        order.extend(fb.dims)
    Z = pieces[0]
    for P in pieces[1:]:
        Z = cartesian_product(Z, P)
    # binaries of all layers come first in construction order since free blocks carry none
    Z = _permute(Z, order, n_x)
    n_b = Z.n_b
    aug = HybridZonotope(
        sp.vstack([sp.csr_matrix(Z.cont_generators), sp.csr_matrix((n_b, Z.n_g))], format="csr"),
        sp.vstack([sp.csr_matrix(Z.bin_generators), sp.identity(n_b, format="csr")], format="csr"),
        np.concatenate([Z.center, np.zeros(n_b)]),
        Z.con_cont,
        Z.con_bin,
        Z.con_rhs,
    )
    M = AugmentedMap(layers, tuple(free), aug, n_x, tuple(reports), tuple(tuple(e) for e in exclusive))
    for group in M.exclusive:
        idx = [M.index_of(g) for g in group]
        row = np.zeros((1, n_x + n_b))
        row[0, [n_x + j for j in idx]] = 1.0
        aug = generalized_intersection_hz(aug, sp.identity(n_x + n_b, format="csr"), HPolytope.from_inequalities(row, [1.0]))
    if M.exclusive:
        M = AugmentedMap(layers, tuple(free), aug, n_x, tuple(reports), M.exclusive)
    return M


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """x_{k+1} = A x_k + B u_k + W xi_k with u_k in ``input_set``."""

    A: np.ndarray
    B: np.ndarray
    input_set: HybridZonotope
    x0: np.ndarray
    W: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(-1))
        object.__setattr__(self, "input_set", as_hybrid(self.input_set))
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        if self.x0.size != A.shape[0]:
            raise DimensionError(f"x0 has length {self.x0.size}, A is {A.shape}")
        if self.input_set.dim != B.shape[1]:
            raise DimensionError(f"input set dimension {self.input_set.dim} does not match B with {B.shape[1]} columns")

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    def disturbance(self, M: AugmentedMap) -> np.ndarray:
        W = M.W if self.W is None else np.asarray(self.W, dtype=float)
        if W.shape != (self.n_x, M.n_b):
            raise DimensionError(f"W has shape {W.shape}, expected {(self.n_x, M.n_b)}")
        return W

    def step(self, x, u, xi, W) -> np.ndarray:
        return self.A @ x + self.B @ u + W @ xi


def forward_step(Xk: HybridZonotope, sys: LtiSystem, M_next: AugmentedMap, naive: bool = False, W=None) -> HybridZonotope:
    """One-step reachable set over [x; xi].

    The default uses the constrained product (X'_k x U x M'_{k+1}) with the
    dynamics imposed as an equality and then keeps the new block; ``naive``
    maps X'_k forward, adds the input and free binaries, and intersects with
    the next map.
    """
    n_x, n_u = sys.n_x, sys.n_u
    n_b = M_next.n_b
    W = sys.disturbance(M_next) if W is None else W
    if Xk.dim != n_x + n_b:
        raise DimensionError(f"X'_k has dimension {Xk.dim}, expected n_x + n_b = {n_x + n_b}")
    if naive:
        top = np.hstack([sys.A, W])
        lin = np.vstack([top, np.zeros((n_b, n_x + n_b))])
        Y = affine_map(Xk, lin)
        Y = minkowski_sum(Y, affine_map(sys.input_set, np.vstack([sys.B, np.zeros((n_b, n_u))])))
        bins = HybridZonotope(
            np.zeros((n_b, 0)), np.eye(n_b), np.zeros(n_b), np.zeros((0, 0)), np.zeros((0, n_b)), np.zeros(0)
        )
        Y = minkowski_sum(Y, affine_map(bins, np.vstack([np.zeros((n_x, n_b)), np.eye(n_b)])))
        return intersection(Y, M_next.set)
    P = cartesian_product(cartesian_product(Xk, sys.input_set), M_next.set)
    R = sp.hstack([sp.csr_matrix(sys.A), sp.csr_matrix(W), sp.csr_matrix(sys.B), -sp.identity(n_x), sp.csr_matrix((n_x, n_b))], format="csr")
    P = generalized_intersection_hz(P, R, HPolytope.from_equalities(np.eye(n_x), np.zeros(n_x)))
    keep = list(range(P.dim - n_x - n_b, P.dim))
    return project(P, keep)


@dataclass(frozen=True)
class LiftedIndex:
    """Coordinate bookkeeping for [x_0, xi_0, u_0, ..., x_N, xi_N]."""

    N: int
    n_x: int
    n_b: int
    n_u: int

    @property
    def block(self) -> int:
        return self.n_x + self.n_b + self.n_u

    @property
    def dim(self) -> int:
        return self.N * self.block + self.n_x + self.n_b

    def _check(self, k, last):
        if not 0 <= k <= last:
            raise IndexError(f"step {k} outside 0..{last}")

    def state(self, k: int) -> slice:
        self._check(k, self.N)
        s = k * self.block
        return slice(s, s + self.n_x)

    def bin(self, k: int) -> slice:
        self._check(k, self.N)
        s = k * self.block + self.n_x
        return slice(s, s + self.n_b)

    def input(self, k: int) -> slice:
        self._check(k, self.N - 1)
        s = k * self.block + self.n_x + self.n_b
        return slice(s, s + self.n_u)

    def coordinate(self, step: int, kind: str, component: int) -> int:
        sl = {"state": self.state, "bin": self.bin, "input": self.input}[kind](step)
        if not 0 <= component < sl.stop - sl.start:
            raise IndexError(f"{kind} component {component} out of range")
        return sl.start + component

    def entries(self):
        """All (step, kind, component) triples in coordinate order."""
        for k in range(self.N + 1):
            for kind, n in (("state", self.n_x), ("bin", self.n_b), ("input", self.n_u)):
                if kind == "input" and k == self.N:
                    continue
                for c in range(n):
                    yield (k, kind, c)

    def stack(self, states, indicators, inputs) -> np.ndarray:
        z = np.zeros(self.dim)
        for k in range(self.N + 1):
            z[self.state(k)] = states[k]
            z[self.bin(k)] = indicators[k]
            if k < self.N:
                z[self.input(k)] = inputs[k]
        return z

    def unstack(self, z):
        z = np.asarray(z, dtype=float)
        states = np.array([z[self.state(k)] for k in range(self.N + 1)])
        inds = np.array([z[self.bin(k)] for k in range(self.N + 1)])
        inputs = np.array([z[self.input(k)] for k in range(self.N)]).reshape(self.N, self.n_u)
        return states, inds, inputs


@dataclass(frozen=True, eq=False)
class LiftedReachSet:
    set: HybridZonotope
    index: LiftedIndex
    sys: LtiSystem
    maps: tuple[AugmentedMap, ...]
    clauses: tuple[OperatorPolytope, ...] = ()
    deltas: tuple[tuple[int, int, int], ...] = ()

    @property
    def N(self) -> int:
        return self.index.N

    @property
    def region_ids(self) -> tuple[str, ...]:
        return self.maps[0].region_ids

    @property
    def groups(self) -> tuple[tuple[int, ...], ...]:
        return self.maps[0].groups


def _maps_per_step(maps, N) -> tuple[AugmentedMap, ...]:
    if isinstance(maps, AugmentedMap):
        return (maps,) * (N + 1)
    maps = tuple(maps)
    if len(maps) != N + 1:
        raise ValueError(f"time-varying map needs N + 1 = {N + 1} variants, got {len(maps)}")
    for k, M in enumerate(maps[1:], 1):
        if not maps[0].same_structure(M):
            raise ValueError(f"map variant at step {k} changes region identity, order or disturbances")
    return maps


def initial_set(sys: LtiSystem, M0: AugmentedMap) -> HybridZonotope:
    """({x0} x {0,1}^n_b) intersected with the step-0 map."""
    if M0.locate(sys.x0, 1e-9) is None:
        raise InfeasibleStartError(_nearest_region_message(sys.x0, M0))
    n_x, n_b = sys.n_x, M0.n_b
    sel = np.hstack([np.eye(n_x), np.zeros((n_x, n_b))])
    return generalized_intersection_hz(M0.set, sel, HPolytope.from_equalities(np.eye(n_x), sys.x0))


def _nearest_region_message(x0, M: AugmentedMap) -> str:
    msgs = []
    for fb in M.free:
        v = fb.poly.violation(x0[list(fb.dims)])
        if v.size and v.max() > 1e-9:
            msgs.append(f"state coordinates {list(fb.dims)} violate their bounds by {v.max():.3g}")
    for layer in M.layers:
        xs = x0[list(layer.dims)]
        best = min(layer.regions, key=lambda r: float(np.max(r.polytope.violation(xs), initial=0.0)))
        gap = float(np.max(best.polytope.violation(xs), initial=0.0))
        if gap > 1e-9:
            msgs.append(f"nearest region {best.id!r} is violated by {gap:.3g} at coordinates {list(layer.dims)}")
    return "initial state " + np.array2string(x0, precision=4) + " lies outside the map: " + "; ".join(msgs)


def build_lifted(sys: LtiSystem, maps, N: int) -> LiftedReachSet:
    """Lifted set of all dynamically feasible trajectories over N steps."""
    if N < 1:
        raise ValueError(f"horizon must be at least 1, got {N}")
    maps = _maps_per_step(maps, N)
    n_x, n_u, n_b = sys.n_x, sys.n_u, maps[0].n_b
    if maps[0].n_x != n_x:
        raise DimensionError(f"map is over {maps[0].n_x} state coordinates, system has {n_x}")
    W = sys.disturbance(maps[0])
    Z = initial_set(sys, maps[0])
    for k in range(N):
        P = cartesian_product(cartesian_product(Z, sys.input_set), maps[k + 1].set)
        off = Z.dim - n_x - n_b
        R = sp.hstack(
            [
                sp.csr_matrix((n_x, off)),
                sp.csr_matrix(sys.A),
                sp.csr_matrix(W),
                sp.csr_matrix(sys.B),
                -sp.identity(n_x),
                sp.csr_matrix((n_x, n_b)),
            ],
            format="csr",
        )
        Z = generalized_intersection_hz(P, R, HPolytope.from_equalities(np.eye(n_x), np.zeros(n_x)))
    index = LiftedIndex(N, n_x, n_b, n_u)
    assert Z.dim == index.dim
    return LiftedReachSet(Z, index, sys, maps)


def reach_complexity(sys: LtiSystem, maps, N: int) -> dict[str, int]:
    """Closed-form size of the lifted set from the per-step pieces.

    X'_0 carries the step-0 map plus the n_x rows pinning x_0; every later
    X'_k contributes its map, and each transition adds n_x dynamics rows.
    """
    maps = _maps_per_step(maps, N)
    n_x = sys.n_x
    U = sys.input_set

    def piece(k):
        g, b, c = maps[k].set.complexity
        return g, b, c + (n_x if k == 0 else 0), n_x + maps[k].n_b

    n = g = b = c = 0
    for k in range(N):
        gk, bk, ck, nk = piece(k)
        n += nk + U.dim
        g += gk + U.n_g
        b += bk + U.n_b
        c += ck + U.n_c + n_x
    gN, bN, cN, nN = piece(N)
    return {"n": n + nN, "n_g": g + gN, "n_b": b + bN, "n_c": c + cN}


def resolve_clause(lifted: LiftedReachSet, clause: OperatorPolytope) -> sp.csr_matrix:
    """0/1 selection matrix with one 1 per row binding clause coordinates to lifted coordinates."""
    idx = lifted.index
    ids = lifted.region_ids
    cols = []
    for step, region in clause.coords:
        if not 0 <= step <= idx.N:
            raise ClauseBindingError(f"clause {clause.source} refers to step {step} beyond the horizon N = {idx.N}")
        if region not in ids:
            raise ClauseBindingError(f"clause {clause.source} refers to unknown region {region!r}")
        cols.append(idx.bin(step).start + ids.index(region))
    m = len(cols)
    return sp.csr_matrix((np.ones(m), (np.arange(m), cols)), shape=(m, idx.dim))


def apply_mtl(lifted: LiftedReachSet, clauses: Sequence[OperatorPolytope]) -> LiftedReachSet:
    """Intersect the lifted set with every clause polytope in turn."""
    Z = lifted.set
    deltas = list(lifted.deltas)
    for cl in clauses:
        R = resolve_clause(lifted, cl)
        before = Z.complexity
        Z = generalized_intersection_hz(Z, R, cl.poly)
        after = Z.complexity
        deltas.append(tuple(a - b for a, b in zip(after, before)))
    return LiftedReachSet(Z, lifted.index, lifted.sys, lifted.maps, lifted.clauses + tuple(clauses), tuple(deltas))


# ----------------------------------------------------------------------------
# Simulation
# ----------------------------------------------------------------------------


def simulate(sys: LtiSystem, maps, inputs, choose=None) -> tuple[np.ndarray, np.ndarray]:
    """Roll the dynamics forward; returns states (N+1, n_x) and indicators (N+1, n_b).

    ``choose(k, combos)`` picks one admissible tuple of active regions for x_k
    (default: the first); a state outside the map raises MapError.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    N = inputs.shape[0]
    maps = _maps_per_step(maps, N)
    W = sys.disturbance(maps[0])
    x = sys.x0.copy()
    states, inds = [x], []
    for k in range(N + 1):
        combos = maps[k].assignments(x)
        if not combos:
            raise MapError(f"simulated state at step {k} leaves the map: {np.round(x, 6).tolist()}")
        xi = np.zeros(maps[k].n_b)
        xi[list(choose(k, combos) if choose else combos[0])] = 1.0
        inds.append(xi)
        if k < N:
            x = sys.step(x, inputs[k], xi, W)
            states.append(x)
    return np.array(states), np.array(inds)


def dynamics_residual(sys: LtiSystem, W, states, inputs, indicators) -> float:
    worst = 0.0
    for k in range(len(inputs)):
        r = states[k + 1] - sys.step(states[k], inputs[k], indicators[k], W)
        worst = max(worst, float(np.abs(r).max(initial=0.0)))
    return worst


def _sample_input(sys: LtiSystem, rng, scale: float) -> np.ndarray:
    U = sys.input_set
    if U.n_c == 0 and U.n_b == 0:
        xi = rng.uniform(0.0, 1.0, U.n_g)
        mid = U.cont_generators @ np.full(U.n_g, 0.5) + U.center
        full = U.cont_generators @ xi + U.center
        return mid + scale * (full - mid)
    from .zonoset import sample

    fp = sample(U, 1, rng)[0]
    return U.decode(fp)


def random_trajectory(
    sys: LtiSystem,
    maps,
    N: int,
    rng: np.random.Generator,
    candidates: int = 12,
    scale: float = 1.0,
    max_expansions: int = 20000,
):
    """Randomly driven trajectory that stays inside the map, found by depth-first search.

    Inputs are drawn at random from the input set (scaled by ``scale`` about
    its center); branches that leave the map are abandoned.
    """
    maps = _maps_per_step(maps, N)
    W = sys.disturbance(maps[0])
    expansions = 0

    def options(k, x):
        combos = maps[k].assignments(x)
        rng.shuffle(combos)
        return combos

    def dfs(k, x, acc_x, acc_xi, acc_u):
        nonlocal expansions
        expansions += 1
        if expansions > max_expansions:
            return None
        for combo in options(k, x):
            xi = np.zeros(maps[k].n_b)
            xi[list(combo)] = 1.0
            if k == N:
                return acc_x + [x], acc_xi + [xi], acc_u
            for _ in range(candidates):
                u = _sample_input(sys, rng, scale * rng.uniform(0.2, 1.0))
                nx = sys.step(x, u, xi, W)
                if not maps[k + 1].assignments(nx):
                    continue
                out = dfs(k + 1, nx, acc_x + [x], acc_xi + [xi], acc_u + [u])
                if out is not None:
                    return out
        return None

    out = dfs(0, sys.x0.copy(), [], [], [])
    if out is None:
        raise MapError(f"no in-map random trajectory found within {max_expansions} expansions")
    xs, xis, us = out
    return np.array(xs), np.array(xis), np.array(us).reshape(N, sys.n_u)
