"""Metric temporal logic: formulas, trace semantics and H-rep operator encodings.

Semantics follow the discrete-time definition used throughout the package: the
left operand of ``Until`` only has to hold from ``k + t1`` onwards, not from
``k``.  :func:`conventional_until` rebuilds the textbook operator.

Every supported clause becomes one H-rep polytope over region indicator
coordinates ``(time_step, region_id)``.  Intersecting a lifted reachable set
with these polytopes enforces the formula without extra binary variables.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .zonoset import HPolytope


class HorizonError(ValueError):
    """A temporal operator reaches beyond the end of the trace or plan."""


class UnsupportedFormulaError(ValueError):
    pass


class FormulaSyntaxError(ValueError):
    pass


# ----------------------------------------------------------------------------
# AST
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class TrueF:
    def __str__(self):
        return "true"


@dataclass(frozen=True)
class Prop:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Not:
    arg: "Formula"

    def __str__(self):
        return f"(not {self.arg})"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"

    def __str__(self):
        return f"(and {self.left} {self.right})"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"

    def __str__(self):
        return f"(or {self.left} {self.right})"


def _check_bounds(op, t1, t2):
    if not (isinstance(t1, (int, np.integer)) and isinstance(t2, (int, np.integer))):
        raise TypeError(f"{op} bounds must be integers, got {t1!r}, {t2!r}")
    if not 0 <= t1 <= t2:
        raise ValueError(f"{op} bounds must satisfy 0 <= t1 <= t2, got [{t1}, {t2}]")


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"
    t1: int
    t2: int

    def __post_init__(self):
        _check_bounds("until", self.t1, self.t2)

    def __str__(self):
        return f"(until {self.t1} {self.t2} {self.left} {self.right})"


@dataclass(frozen=True)
class Eventually:
    arg: "Formula"
    t1: int
    t2: int

    def __post_init__(self):
        _check_bounds("eventually", self.t1, self.t2)

    def __str__(self):
        return f"(eventually {self.t1} {self.t2} {self.arg})"


@dataclass(frozen=True)
class Always:
    arg: "Formula"
    t1: int
    t2: int

    def __post_init__(self):
        _check_bounds("always", self.t1, self.t2)

    def __str__(self):
        return f"(always {self.t1} {self.t2} {self.arg})"


Formula = Union[TrueF, Prop, Not, And, Or, Until, Eventually, Always]


def conjunction(*fs: Formula) -> Formula:
    """Left-folded conjunction; the empty conjunction is ``true``."""
    if not fs:
        return TrueF()
    out = fs[0]
    for f in fs[1:]:
        out = And(out, f)
    return out


def propositions(f: Formula) -> set[str]:
    if isinstance(f, Prop):
        return {f.name}
    if isinstance(f, TrueF):
        return set()
    if isinstance(f, (Not, Eventually, Always)):
        return propositions(f.arg)
    return propositions(f.left) | propositions(f.right)


def time_depth(f: Formula) -> int:
    """Number of steps past k that evaluating f at k inspects."""
    if isinstance(f, (TrueF, Prop)):
        return 0
    if isinstance(f, Not):
        return time_depth(f.arg)
    if isinstance(f, (And, Or)):
        return max(time_depth(f.left), time_depth(f.right))
    if isinstance(f, Until):
        return f.t2 + max(time_depth(f.left), time_depth(f.right))
    return f.t2 + time_depth(f.arg)


# ----------------------------------------------------------------------------
# Parser: prefix s-expressions
# ----------------------------------------------------------------------------

_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def parse(text: str, horizon: int | None = None) -> Formula:
    """Parse ``(and (eventually 0 25 G1) (always 0 25 (not O1)))`` style text.

    Time bounds are integers or ``N`` (replaced by ``horizon``).  A single bound
    ``(eventually 12 G)`` denotes the singleton interval [12, 12].
    """
    tokens = _TOKEN.findall(text)
    if not tokens:
        raise FormulaSyntaxError("empty formula")
    pos = 0

    def bound(tok):
        if tok == "N":
            if horizon is None:
                raise FormulaSyntaxError("bound 'N' used without a horizon")
            return horizon
        if not re.fullmatch(r"\d+", tok):
            raise FormulaSyntaxError(f"expected an integer time bound, got {tok!r}")
        return int(tok)

    def is_bound(tok):
        return tok == "N" or re.fullmatch(r"\d+", tok) is not None

    def expr():
        nonlocal pos
        if pos >= len(tokens):
            raise FormulaSyntaxError("unexpected end of formula")
        tok = tokens[pos]
        pos += 1
        if tok == ")":
            raise FormulaSyntaxError(f"unexpected ')' at token {pos - 1}")
        if tok != "(":
            if tok == "true":
                return TrueF()
            if not re.fullmatch(r"[A-Za-z_][\w.-]*", tok):
                raise FormulaSyntaxError(f"invalid proposition name {tok!r}")
            return Prop(tok)
        if pos >= len(tokens):
            raise FormulaSyntaxError("unexpected end of formula")
        op = tokens[pos]
        pos += 1
        args = []
        while pos < len(tokens) and tokens[pos] != ")":
            if op in ("until", "eventually", "always") and len(args) < 2 and is_bound(tokens[pos]) and not (
                args and not isinstance(args[-1], int)
            ):
                args.append(bound(tokens[pos]))
                pos += 1
            else:
                args.append(expr())
        if pos >= len(tokens):
            raise FormulaSyntaxError(f"missing ')' for ({op} ...)")
        pos += 1
        return build(op, args)

    def build(op, args):
        ints = [a for a in args if isinstance(a, int)]
        subs = [a for a in args if not isinstance(a, int)]
        if op == "not":
            if len(args) != 1 or ints:
                raise FormulaSyntaxError("(not f) takes exactly one formula")
            return Not(subs[0])
        if op in ("and", "or"):
            if ints or len(subs) < 2:
                raise FormulaSyntaxError(f"({op} ...) takes at least two formulas")
            cls = And if op == "and" else Or
            out = subs[0]
            for s in subs[1:]:
                out = cls(out, s)
            return out
        if op in ("eventually", "always"):
            if len(subs) != 1 or len(ints) not in (1, 2):
                raise FormulaSyntaxError(f"({op} t1 [t2] f) takes one or two bounds and one formula")
            t1, t2 = (ints[0], ints[0]) if len(ints) == 1 else ints
            return (Eventually if op == "eventually" else Always)(subs[0], t1, t2)
        if op == "until":
            if len(subs) != 2 or len(ints) not in (1, 2):
                raise FormulaSyntaxError("(until t1 [t2] f g) takes one or two bounds and two formulas")
            t1, t2 = (ints[0], ints[0]) if len(ints) == 1 else ints
            return Until(subs[0], subs[1], t1, t2)
        raise FormulaSyntaxError(f"unknown operator {op!r}")

    f = expr()
    if pos != len(tokens):
        raise FormulaSyntaxError(f"trailing tokens after formula: {' '.join(tokens[pos:])}")
    return f


def format_formula(f: Formula) -> str:
    return str(f)


# ----------------------------------------------------------------------------
# Semantics
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PropTrace:
    """0/1 truth table, rows are steps 0..N and columns are propositions."""

    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[1] != len(self.names):
            raise ValueError(f"trace of shape {v.shape} does not match {len(self.names)} names")
        if not np.all((v == 0) | (v == 1)):
            raise ValueError("trace entries must be 0 or 1")
        object.__setattr__(self, "values", v.astype(bool))
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def N(self) -> int:
        return self.values.shape[0] - 1

    @classmethod
    def from_columns(cls, columns: Mapping[str, Sequence[int]]) -> "PropTrace":
        names = tuple(columns)
        return cls(np.array([columns[n] for n in names]).T.reshape(-1, len(names)), names)

    @classmethod
    def from_indicators(cls, indicators: np.ndarray, regions: Sequence[str], labels: Mapping[str, str] | None = None):
        """Proposition truth from region indicators; a label holds when any of its regions is active."""
        ind = np.asarray(np.round(indicators), dtype=int)
        labels = labels or {r: r for r in regions}
        names = sorted(set(labels[r] for r in regions) | set(regions))
        cols = {n: np.zeros(ind.shape[0], dtype=int) for n in names}
        for j, r in enumerate(regions):
            cols[r] = cols[r] | ind[:, j]
            cols[labels[r]] = cols[labels[r]] | ind[:, j]
        return cls.from_columns(cols)

    def holds(self, name: str, k: int) -> bool:
        try:
            j = self.names.index(name)
        except ValueError:
            raise KeyError(f"proposition {name!r} not in trace (known: {', '.join(self.names)})") from None
        return bool(self.values[k, j])


def evaluate(f: Formula, trace: PropTrace, k: int = 0) -> bool:
    """sigma |=_k f."""
    N = trace.N
    if not 0 <= k <= N:
        raise HorizonError(f"step {k} outside trace 0..{N}")

    def window(op, t1, t2, k):
        if k + t2 > N:
            raise HorizonError(f"{op}[{t1},{t2}] evaluated at step {k} needs step {k + t2} but the trace ends at {N}")
        return range(k + t1, k + t2 + 1)

    def ev(f, k):
        if isinstance(f, TrueF):
            return True
        if isinstance(f, Prop):
            return trace.holds(f.name, k)
        if isinstance(f, Not):
            return not ev(f.arg, k)
        if isinstance(f, And):
            return ev(f.left, k) and ev(f.right, k)
        if isinstance(f, Or):
            return ev(f.left, k) or ev(f.right, k)
        if isinstance(f, Until):
            start = k + f.t1
            for t in window("until", f.t1, f.t2, k):
                if ev(f.right, t) and all(ev(f.left, tp) for tp in range(start, t)):
                    return True
            return False
        if isinstance(f, Eventually):
            return any(ev(f.arg, t) for t in window("eventually", f.t1, f.t2, k))
        if isinstance(f, Always):
            return all(ev(f.arg, t) for t in window("always", f.t1, f.t2, k))
        raise TypeError(f"not a formula: {f!r}")

    return ev(f, k)


def conventional_until(f: Formula, g: Formula, t1: int, t2: int) -> Formula:
    """Until where f must hold from step k rather than from k + t1."""
    if t1 == 0:
        return Until(f, g, 0, t2)
    return And(Always(f, 0, t1 - 1), Until(f, g, t1, t2))


# ----------------------------------------------------------------------------
# Operator encodings
# ----------------------------------------------------------------------------

# added (n_g, n_b, n_c) when a lifted set is intersected with one clause polytope
TABLE_I = {
    "prop": lambda tau: (0, 0, 1),
    "not": lambda tau: (0, 0, 1),
    "and": lambda tau: (0, 0, 1),
    "or": lambda tau: (1, 0, 1),
    "until": lambda tau: (tau, 0, tau),
    "eventually": lambda tau: (1, 0, 1),
    "always": lambda tau: (0, 0, 1),
}


@dataclass(frozen=True, eq=False)
class OperatorPolytope:
    """H-rep polytope whose i-th dimension is the indicator of ``coords[i] = (step, region)``."""

    poly: HPolytope
    coords: tuple[tuple[int, str], ...]
    kind: str
    tau: int = 1
    source: Formula | None = None

    def __post_init__(self):
        if len(self.coords) != self.poly.dim:
            raise ValueError(f"{len(self.coords)} coordinates for a {self.poly.dim}-dimensional polytope")
        if len(set(self.coords)) != len(self.coords):
            raise ValueError("operator polytope coordinates must be unique")

    @property
    def delta(self) -> tuple[int, int, int]:
        """Complexity added by a generalized intersection with this polytope."""
        return (self.poly.n_ineq, 0, self.poly.n_ineq + self.poly.n_eq)

    @property
    def table_delta(self) -> tuple[int, int, int]:
        return TABLE_I[self.kind](self.tau)

    def contains_assignment(self, assignment: Mapping[tuple[int, str], float], tol: float = 1e-9) -> bool:
        x = np.array([assignment.get(c, 0.0) for c in self.coords], dtype=float)
        return self.poly.contains(x, tol)


Literal = Union[Prop, Not]


def _literal(f) -> tuple[str, bool]:
    """(proposition, negated) for π or ¬π."""
    if isinstance(f, str):
        return f, False
    if isinstance(f, Prop):
        return f.name, False
    if isinstance(f, Not) and isinstance(f.arg, Prop):
        return f.arg.name, True
    raise UnsupportedFormulaError(f"expected a proposition or its negation, got {f}")


def _lift(
    L: np.ndarray,
    r: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    lits: Sequence[tuple[int, str, bool]],
    kind: str,
    tau: int,
    regions_of: Mapping[str, Sequence[str]] | None,
    source,
) -> OperatorPolytope:
    """Map constraints over literal truth values y to region indicator coordinates.

    y = sum_{r in prop} xi_r for π and y = 1 - sum xi_r for ¬π; one-hot maps
    keep the sum in {0, 1}.
    """
    coords: list[tuple[int, str]] = []
    pos: dict[tuple[int, str], int] = {}
    for step, prop, _ in lits:
        for reg in (regions_of[prop] if regions_of is not None else (prop,)):
            if (step, reg) not in pos:
                pos[(step, reg)] = len(coords)
                coords.append((step, reg))
    T = np.zeros((len(lits), len(coords)))
    off = np.zeros(len(lits))
    for i, (step, prop, neg) in enumerate(lits):
        for reg in (regions_of[prop] if regions_of is not None else (prop,)):
            T[i, pos[(step, reg)]] += -1.0 if neg else 1.0
        off[i] = 1.0 if neg else 0.0
    L = np.asarray(L, dtype=float).reshape(-1, len(lits))
    A = np.asarray(A, dtype=float).reshape(-1, len(lits))
    poly = HPolytope(L @ T, np.asarray(r, dtype=float) - L @ off, A @ T, np.asarray(b, dtype=float) - A @ off)
    return OperatorPolytope(poly, tuple(coords), kind, tau, source)


def encode_boolean(f: Formula, k: int = 0, regions_of=None) -> OperatorPolytope:
    """π (ξ = 1), ¬π (ξ = 0), π ∧ π (ξ1 + ξ2 = 2) and π ∨ π (-ξ1 - ξ2 <= -1) at step k."""
    if isinstance(f, Prop):
        return _lift([], [], [[1.0]], [1.0], [(k, f.name, False)], "prop", 1, regions_of, f)
    if isinstance(f, Not):
        p, _ = _literal(f)
        # ¬π is a single equality row on π's indicator
        return _lift([], [], [[1.0]], [0.0], [(k, p, False)], "not", 1, regions_of, f)
    if isinstance(f, And):
        a, b = _literal(f.left), _literal(f.right)
        if a[1] or b[1]:
            raise UnsupportedFormulaError(f"conjunction clause must join two propositions: {f}")
        return _lift([], [], [[1.0, 1.0]], [2.0], [(k, a[0], False), (k, b[0], False)], "and", 1, regions_of, f)
    if isinstance(f, Or):
        a, b = _literal(f.left), _literal(f.right)
        return _lift([[-1.0, -1.0]], [-1.0], [], [], [(k, a[0], a[1]), (k, b[0], b[1])], "or", 1, regions_of, f)
    raise UnsupportedFormulaError(f"not a boolean clause over propositions: {f}")


def until_matrices(tau: int) -> tuple[np.ndarray, np.ndarray]:
    """The (tau x tau) blocks L1 (left operand) and L2 (right operand)."""
    L1 = np.zeros((tau, tau))
    L2 = np.zeros((tau, tau))
    for i in range(tau - 1):
        L1[i, : i + 1] = -1.0 / (i + 1)
        L2[i, : i + 1] = -1.0
        L2[i, i + 1] = 1.0
    L2[tau - 1, :] = -1.0
    return L1, L2


def encode_until(f, g, k: int, t1: int, t2: int, regions_of=None) -> OperatorPolytope:
    """f U[t1,t2] g as tau = t2 - t1 + 1 inequalities over 2 tau indicator coordinates."""
    tau = t2 - t1 + 1
    if tau < 1:
        raise ValueError(f"until interval [{t1}, {t2}] is empty")
    fp, fneg = _literal(f)
    gp, gneg = _literal(g)
    L1, L2 = until_matrices(tau)
    rhs = np.zeros(tau)
    rhs[-1] = -1.0
    steps = range(k + t1, k + t2 + 1)
    lits = [(t, fp, fneg) for t in steps] + [(t, gp, gneg) for t in steps]
    src = Until(f if not isinstance(f, str) else Prop(f), g if not isinstance(g, str) else Prop(g), t1, t2)
    return _lift(np.hstack([L1, L2]), rhs, [], [], lits, "until", tau, regions_of, src)


def encode_eventually(f, k: int, t1: int, t2: int, regions_of=None) -> OperatorPolytope:
    tau = t2 - t1 + 1
    p, neg = _literal(f)
    lits = [(t, p, neg) for t in range(k + t1, k + t2 + 1)]
    src = Eventually(f if not isinstance(f, str) else Prop(f), t1, t2)
    return _lift(-np.ones((1, tau)), [-1.0], [], [], lits, "eventually", tau, regions_of, src)


def encode_always(f, k: int, t1: int, t2: int, regions_of=None) -> OperatorPolytope:
    tau = t2 - t1 + 1
    p, neg = _literal(f)
    lits = [(t, p, neg) for t in range(k + t1, k + t2 + 1)]
    src = Always(f if not isinstance(f, str) else Prop(f), t1, t2)
    return _lift([], [], np.ones((1, tau)), [float(tau)], lits, "always", tau, regions_of, src)


def clauses(f: Formula) -> list[Formula]:
    """Top-level conjuncts; π ∧ π over two propositions stays a single clause."""
    if isinstance(f, And) and not (isinstance(f.left, Prop) and isinstance(f.right, Prop)):
        return clauses(f.left) + clauses(f.right)
    if isinstance(f, TrueF):
        return []
    return [f]


def compile_cnf(f: Formula, horizon: int, regions_of: Mapping[str, Sequence[str]] | None = None) -> list[OperatorPolytope]:
    """One operator polytope per conjunct of f, evaluated from step 0.

    Supported clauses: π, ¬π, π ∨ π, π ∧ π, and Until / Eventually / Always
    whose operands are π or ¬π.  Anything else is rejected.
    """
    out = []
    for c in clauses(f):
        if regions_of is not None:
            for p in propositions(c):
                if p not in regions_of:
                    raise UnsupportedFormulaError(f"proposition {p!r} in clause {c} does not name a map region")
        depth = time_depth(c)
        if depth > horizon:
            raise HorizonError(f"clause {c} reaches step {depth} beyond the horizon N = {horizon}")
        try:
            if isinstance(c, (Prop, Not, And, Or)):
                out.append(encode_boolean(c, 0, regions_of))
            elif isinstance(c, Until):
                out.append(encode_until(c.left, c.right, 0, c.t1, c.t2, regions_of))
            elif isinstance(c, Eventually):
                out.append(encode_eventually(c.arg, 0, c.t1, c.t2, regions_of))
            elif isinstance(c, Always):
                out.append(encode_always(c.arg, 0, c.t1, c.t2, regions_of))
            else:
                raise UnsupportedFormulaError(f"unsupported clause {c}")
        except UnsupportedFormulaError as exc:
            raise UnsupportedFormulaError(f"unsupported clause {c}: {exc}") from None
    return out


def exhaustive_check(kind: str, tau: int) -> int:
    """Number of binary assignments where encoding membership and semantics disagree."""
    mismatches = 0
    names = ("a", "b")
    if kind in ("prop", "not", "and", "or"):
        f = {
            "prop": Prop("a"),
            "not": Not(Prop("a")),
            "and": And(Prop("a"), Prop("b")),
            "or": Or(Prop("a"), Prop("b")),
        }[kind]
        enc = encode_boolean(f, 0)
        for bits in itertools.product((0, 1), repeat=2):
            tr = PropTrace(np.array([bits]), names)
            member = enc.contains_assignment({(0, "a"): bits[0], (0, "b"): bits[1]})
            mismatches += member != evaluate(f, tr, 0)
        return mismatches
    t1 = 1
    t2 = t1 + tau - 1
    N = t2
    if kind == "until":
        cases = [(Prop("a"), Prop("b")), (Not(Prop("a")), Prop("b"))]
        for left, right in cases:
            f = Until(left, right, t1, t2)
            enc = encode_until(left, right, 0, t1, t2)
            for bits in itertools.product((0, 1), repeat=2 * (N + 1)):
                col_a, col_b = bits[: N + 1], bits[N + 1 :]
                tr = PropTrace(np.array([col_a, col_b]).T, names)
                asg = {(t, "a"): col_a[t] for t in range(N + 1)} | {(t, "b"): col_b[t] for t in range(N + 1)}
                mismatches += enc.contains_assignment(asg) != evaluate(f, tr, 0)
        return mismatches
    enc_fn, cls = {"eventually": (encode_eventually, Eventually), "always": (encode_always, Always)}[kind]
    for arg in (Prop("a"), Not(Prop("a"))):
        f = cls(arg, t1, t2)
        enc = enc_fn(arg, 0, t1, t2)
        for bits in itertools.product((0, 1), repeat=N + 1):
            tr = PropTrace(np.array([bits, [0] * (N + 1)]).T, names)
            asg = {(t, "a"): bits[t] for t in range(N + 1)}
            mismatches += enc.contains_assignment(asg) != evaluate(f, tr, 0)
    return mismatches
