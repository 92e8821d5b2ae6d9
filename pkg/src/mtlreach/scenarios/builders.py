"""Turn a ScenarioConfig into a system, per-step maps, a formula and cost matrices."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mtl import Formula, parse, time_depth
from ..reach import AugmentedMap, FreeBlock, LtiSystem, MapLayer, RegionSpec, build_map
from ..zonoset import HPolytope, HybridZonotope
from .config import ConfigError, ScenarioConfig
from .geometry import hexagon_polytope, hexagon_zonotope, rebound_offsets, wind_vectors


@dataclass
class Problem:
    cfg: ScenarioConfig
    sys: LtiSystem
    maps: tuple[AugmentedMap, ...]
    formula: Formula
    Q: np.ndarray
    R: np.ndarray
    QN: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.cfg.horizon


def region_polytope(rc) -> HPolytope:
    if rc.lo is not None:
        return HPolytope.from_box(rc.lo, rc.hi)
    if rc.vertices is not None:
        return HPolytope.from_vertices(rc.vertices)
    return HPolytope.from_inequalities(rc.halfspaces["L"], rc.halfspaces["r"])


def region_center(rc) -> np.ndarray:
    if rc.lo is not None:
        return 0.5 * (np.asarray(rc.lo) + np.asarray(rc.hi))
    if rc.vertices is not None:
        return np.mean(rc.vertices, axis=0)
    lo, hi = region_polytope(rc).bounding_box()
    return 0.5 * (lo + hi)


def double_integrator(dt: float = 1.0, dim: int = 2, half_dt2: bool = False):
    """Position/velocity double integrator; B has zero position rows unless ``half_dt2``."""
    I = np.eye(dim)
    A = np.block([[I, dt * I], [np.zeros((dim, dim)), I]])
    top = 0.5 * dt**2 * I if half_dt2 else np.zeros((dim, dim))
    B = np.vstack([top, dt * I])
    return A, B


def _cost(cfg: ScenarioConfig, n_x: int, n_u: int, default_Q) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    c = cfg.cost
    Q = np.asarray(c.Q) if c.Q is not None else np.diag(c.Q_diag) if c.Q_diag is not None else default_Q
    R = np.asarray(c.R) if c.R is not None else np.diag(c.R_diag) if c.R_diag is not None else np.eye(n_u)
    QN = np.asarray(c.QN) if c.QN is not None else np.diag(c.QN_diag) if c.QN_diag is not None else Q
    return np.atleast_2d(Q).astype(float), np.atleast_2d(R).astype(float), np.atleast_2d(QN).astype(float)


def _free_blocks(cfg: ScenarioConfig) -> list[FreeBlock]:
    out = []
    for fc in cfg.free:
        if fc.hexagon is not None:
            ctr = fc.center or (0.0, 0.0)
            out.append(FreeBlock(tuple(fc.dims), hexagon_polytope(fc.hexagon, ctr), hexagon_zonotope(fc.hexagon, ctr)))
        else:
            out.append(FreeBlock(tuple(fc.dims), HPolytope.from_box(fc.lo, fc.hi)))
    return out


def layer_offsets(cfg: ScenarioConfig) -> dict[str, np.ndarray]:
    """Per moving region, its (N + 1, d) translation under rebound kinematics."""
    out = {}
    for lc in cfg.layers:
        ws_lo = np.asarray(cfg.workspace.lo)[: len(lc.dims)]
        ws_hi = np.asarray(cfg.workspace.hi)[: len(lc.dims)]
        for rc in lc.regions:
            if rc.velocity is None:
                continue
            if rc.lo is None:
                raise ConfigError(f"moving region {rc.id!r} must be a box")
            out[rc.id] = rebound_offsets(rc.lo, rc.hi, rc.velocity, ws_lo, ws_hi, cfg.horizon)
    return out


def build_layers(cfg: ScenarioConfig, disturbances: dict[str, np.ndarray] | None = None) -> list[MapLayer]:
    disturbances = disturbances or {}
    layers = []
    for lc in cfg.layers:
        regs = []
        for rc in lc.regions:
            d = rc.disturbance if rc.disturbance is not None else disturbances.get(rc.id)
            regs.append(RegionSpec(rc.id, region_polytope(rc), d, rc.role, rc.label, rc.overlay))
        d = len(lc.dims)
        ws = HPolytope.from_box(cfg.workspace.lo[:d], cfg.workspace.hi[:d]) if d == len(cfg.workspace.lo) else None
        holes = tuple(HPolytope.from_box(h.lo, h.hi) for h in lc.holes)
        layers.append(MapLayer(tuple(regs), tuple(lc.dims), lc.kind, ws, holes))
    return layers


def build_maps(cfg, layers, n_x, free, state_lo=None, state_hi=None, exclusive=(), validate=True) -> tuple[AugmentedMap, ...]:
    """One augmented map per step; static maps are shared."""
    offsets = layer_offsets(cfg)
    M0 = build_map(layers, n_x, free, state_lo, state_hi, validate=validate, exclusive=exclusive)
    if not offsets:
        return (M0,) * (cfg.horizon + 1)
    maps = [M0]
    for k in range(1, cfg.horizon + 1):
        moved = [layer.moved({rid: off[k] for rid, off in offsets.items()}) for layer in layers]
        maps.append(build_map(moved, n_x, free, state_lo, state_hi, validate=validate, exclusive=exclusive))
    return tuple(maps)


def _formula(cfg: ScenarioConfig) -> Formula:
    f = parse(cfg.formula, horizon=cfg.horizon)
    if time_depth(f) > cfg.horizon:
        raise ConfigError(f"formula reaches step {time_depth(f)} beyond the horizon {cfg.horizon}")
    return f


def _box_input(n_u: int, umax: float) -> HybridZonotope:
    return HybridZonotope.box(-umax * np.ones(n_u), umax * np.ones(n_u))


def build_double_integrator(cfg: ScenarioConfig, validate: bool = True) -> Problem:
    p = cfg.dynamics
    dt = float(p.get("dt", 1.0))
    vmax = float(p.get("vmax", 1.0))
    umax = float(p.get("umax", 1.0))
    A, B = double_integrator(dt, 2, bool(p.get("half_dt2", False)))
    sys = LtiSystem(A, B, _box_input(2, umax), cfg.x0)
    layers = build_layers(cfg)
    free = _free_blocks(cfg)
    maps = build_maps(cfg, layers, 4, free, [0, 0, -vmax, -vmax], [0, 0, vmax, vmax], cfg.exclusive, validate)
    Q, R, QN = _cost(cfg, 4, 2, np.diag([0.0, 0.0, 1.0, 1.0]))
    return Problem(cfg, sys, maps, _formula(cfg), Q, R, QN)


def soc_disturbances(cfg: ScenarioConfig, seed: int | None = None) -> dict[str, np.ndarray]:
    """Wind on the position rows and charge/drain on the energy row, per region."""
    p = cfg.dynamics
    charge = float(p.get("charge_rate", 0.2))
    drain = float(p.get("drain_rate", -0.1))
    wind = cfg.wind
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    regions = [rc for lc in cfg.layers for rc in lc.regions]
    if wind is not None:
        ctr = wind.center or list(0.5 * (np.asarray(cfg.workspace.lo) + np.asarray(cfg.workspace.hi)))
        V = wind_vectors([region_center(rc) for rc in regions], ctr, wind.magnitude, wind.spread_deg, rng)
    else:
        V = np.zeros((len(regions), 2))
    out = {}
    for rc, v in zip(regions, V):
        out[rc.id] = np.array([v[0], v[1], 0.0, 0.0, charge if rc.role == "charge" else drain])
    return out


def build_soc(cfg: ScenarioConfig, seed: int | None = None, validate: bool = True) -> Problem:
    p = cfg.dynamics
    dt = float(p.get("dt", 1.0))
    vmax = float(p.get("vmax", 1.0))
    umax = float(p.get("umax", 1.0))
    A2, B2 = double_integrator(dt, 2, bool(p.get("half_dt2", False)))
    A = np.zeros((5, 5))
    A[:4, :4] = A2
    A[4, 4] = 1.0
    B = np.vstack([B2, np.zeros((1, 2))])
    sys = LtiSystem(A, B, _box_input(2, umax), cfg.x0)
    dist = soc_disturbances(cfg, seed)
    layers = build_layers(cfg, dist)
    free = _free_blocks(cfg)
    lo = [0, 0, -vmax, -vmax, float(p.get("e_min", 0.0))]
    hi = [0, 0, vmax, vmax, float(p.get("e_max", 1.0))]
    maps = build_maps(cfg, layers, 5, free, lo, hi, cfg.exclusive, validate)
    Q, R, QN = _cost(cfg, 5, 2, np.diag([0.0, 0.0, 1.0, 1.0, 0.0]))
    return Problem(cfg, sys, maps, _formula(cfg), Q, R, QN, {"disturbances": dist})


def build_custom(cfg: ScenarioConfig, validate: bool = True) -> Problem:
    p = cfg.dynamics
    try:
        A = np.asarray(p["A"], float)
        B = np.asarray(p["B"], float)
    except KeyError as exc:
        raise ConfigError(f"custom dynamics need {exc.args[0]}") from None
    n_x, n_u = A.shape[0], B.shape[1]
    U = HybridZonotope.box(p.get("u_lo", [-1.0] * n_u), p.get("u_hi", [1.0] * n_u))
    sys = LtiSystem(A, B, U, cfg.x0)
    layers = build_layers(cfg)
    maps = build_maps(cfg, layers, n_x, _free_blocks(cfg), p.get("state_lo"), p.get("state_hi"), cfg.exclusive, validate)
    Q, R, QN = _cost(cfg, n_x, n_u, np.eye(n_x))
    return Problem(cfg, sys, maps, _formula(cfg), Q, R, QN)


def build_problem(cfg: ScenarioConfig, seed: int | None = None, validate: bool = True) -> Problem:
    if cfg.template == "double-integrator":
        return build_double_integrator(cfg, validate)
    if cfg.template == "double-integrator-soc":
        return build_soc(cfg, seed, validate)
    if cfg.template == "two-agent":
        from .two_agent import build_two_agent

        return build_two_agent(cfg, validate)
    return build_custom(cfg, validate)
