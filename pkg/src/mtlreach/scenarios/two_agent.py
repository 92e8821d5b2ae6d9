"""Delivery vehicle plus cargo truck with a package counter and relative-position constraints.

State ``[x1, y1, vx1, vy1, x2, y2, vx2, vy2, p, rx, ry]``: vehicle 1 delivers,
vehicle 2 is the truck, ``p`` counts the package on board and ``r`` is the
position of vehicle 1 relative to vehicle 2.  The relative position must stay
outside a hexagonal keep-out around the truck; packages change hands only
while ``r`` lies in the hexagonal exchange ring.
"""
from __future__ import annotations

import numpy as np

from ..reach import FreeBlock, LtiSystem, MapLayer, RegionSpec
from ..zonoset import HPolytope, cartesian_product
from .builders import Problem, _cost, _formula, build_layers, build_maps, double_integrator
from .config import ConfigError, ScenarioConfig
from .geometry import hexagon_polytope, hexagon_zonotope, sector, sector_normals, unicycle_from_flat

N_X = 11
P_ROW = 8
R_DIMS = (9, 10)
EXCHANGE_LABEL = "E"


def stacked_system(dt: float):
    """(A~, B~) of the two-vehicle system; the package row carries p forward unchanged."""
    A, B = double_integrator(dt, 2, half_dt2=True)
    H = np.hstack([np.eye(2), np.zeros((2, 2))])
    At = np.zeros((N_X, N_X))
    At[0:4, 0:4] = A
    At[4:8, 4:8] = A
    At[P_ROW, P_ROW] = 1.0
    At[9:11, 0:4] = H @ A
    At[9:11, 4:8] = -H @ A
    Bt = np.zeros((N_X, 4))
    Bt[0:4, 0:2] = B
    Bt[4:8, 2:4] = B
    Bt[9:11, 0:2] = H @ B
    Bt[9:11, 2:4] = -H @ B
    return At, Bt


def residual_layer(ws_lo, ws_hi, r_inner: float, r_outer: float) -> MapLayer:
    """Six wedges outside the inner hexagon plus six exchange trapezoids as overlays.

    Both hexagons have vertices at multiples of 60 degrees; the inner one has
    apothem ``r_inner`` (it circumscribes the keep-out circle), the outer one
    circumradius ``r_outer`` (it is inscribed in the exchange circle).
    """
    span = np.asarray(ws_hi, float) - np.asarray(ws_lo, float)
    lo, hi = -span, span  # S + (-S)
    ring_hi = r_outer * np.cos(np.pi / 6)
    if ring_hi <= r_inner:
        raise ConfigError(f"exchange hexagon (apothem {ring_hi:.4g}) does not reach past the keep-out apothem {r_inner}")
    regs = []
    for i in range(6):
        regs.append(RegionSpec(f"W{i}", sector(i, r_inner, None, lo, hi), role="free"))
    for i in range(6):
        regs.append(RegionSpec(f"E{i}", sector(i, r_inner, ring_hi), role="exchange", label=EXCHANGE_LABEL, overlay=True))
    keep_out = hexagon_polytope(r_inner / np.cos(np.pi / 6))
    return MapLayer(tuple(regs), R_DIMS, "mixed", HPolytope.from_box(lo, hi), (keep_out,))


def build_two_agent(cfg: ScenarioConfig, validate: bool = True) -> Problem:
    ta = dict(cfg.two_agent or {})
    dt = float(ta.get("dt", 1.5))
    r_in = float(ta.get("r_inner", 0.4))
    r_out = float(ta.get("r_outer", 0.6))
    veh = dict(ta.get("delivery", {}))
    truck = dict(ta.get("truck", {}))
    deliveries = list(ta.get("deliveries", []))
    ws_lo, ws_hi = cfg.workspace.lo, cfg.workspace.hi
    if len(cfg.x0) != N_X:
        raise ConfigError(f"two-agent x0 needs {N_X} entries, got {len(cfg.x0)}")
    x0 = np.asarray(cfg.x0, float)
    if not np.allclose(x0[9:11], x0[0:2] - x0[4:6], atol=1e-12):
        raise ConfigError("x0: relative position must equal vehicle 1 position minus vehicle 2 position")
    if len(cfg.layers) != 1 or tuple(cfg.layers[0].dims) != (0, 1):
        raise ConfigError("two-agent scenarios list exactly one layer, over the delivery vehicle position (0, 1)")
    ids = cfg.region_ids()
    missing = [d for d in deliveries if d not in ids]
    if missing:
        raise ConfigError(f"deliveries name unknown regions {missing}")

    At, Bt = stacked_system(dt)

    def accel_hex(spec):
        return hexagon_zonotope(float(spec.get("vmin", 0.05)) * float(spec.get("wmax", 1.0)))

    U = cartesian_product(accel_hex(veh), accel_hex(truck))
    sys = LtiSystem(At, Bt, U, x0)

    d_p = {}
    for d in deliveries:
        d_p[d] = -1.0
    for i in range(6):
        d_p[f"E{i}"] = 1.0

    def dist(rid):
        v = np.zeros(N_X)
        v[P_ROW] = d_p.get(rid, 0.0)
        return v

    vehicle_layer = build_layers(cfg)[0]
    vehicle_layer = MapLayer(
        tuple(RegionSpec(r.id, r.polytope, dist(r.id), r.role, r.label, r.overlay) for r in vehicle_layer.regions),
        vehicle_layer.dims,
        vehicle_layer.kind,
        vehicle_layer.workspace,
        vehicle_layer.holes,
    )
    rl = residual_layer(ws_lo, ws_hi, r_in, r_out)
    rl = MapLayer(tuple(RegionSpec(r.id, r.polytope, dist(r.id), r.role, r.label, r.overlay) for r in rl.regions), rl.dims, rl.kind, rl.workspace, rl.holes)

    def vhex(spec):
        v = float(spec.get("vmax", 1.0))
        return hexagon_polytope(v), hexagon_zonotope(v)

    free = [
        FreeBlock((2, 3), *vhex(veh)),
        FreeBlock((4, 5), HPolytope.from_box(ws_lo, ws_hi)),
        FreeBlock((6, 7), *vhex(truck)),
        FreeBlock((P_ROW,), HPolytope.from_box([0.0], [1.0])),
    ]
    exclusive = [[f"E{i}" for i in range(6)] + deliveries] if deliveries else []
    exclusive += [list(g) for g in cfg.exclusive]
    maps = build_maps(cfg, [vehicle_layer, rl], N_X, free, exclusive=exclusive, validate=validate)
    q = np.zeros(N_X)
    q[[2, 3, 6, 7]] = 1.0
    Q, R, QN = _cost(cfg, N_X, 4, np.diag(q))
    return Problem(cfg, sys, maps, _formula(cfg), Q, R, QN, {"deliveries": deliveries, "dt": dt, "r_inner": r_in, "r_outer": r_out})


def inner_margin(r, r_inner: float) -> np.ndarray:
    """Signed distance-like margin of relative positions to the keep-out hexagon (>= 0 outside)."""
    r = np.atleast_2d(np.asarray(r, float))
    return (r @ sector_normals().T).max(axis=1) - r_inner


def unicycle_commands(states: np.ndarray, inputs: np.ndarray):
    """Speed, heading and turn rate of both vehicles from a planned trajectory."""
    out = {}
    for name, sl_v, sl_a in (("delivery", slice(2, 4), slice(0, 2)), ("truck", slice(6, 8), slice(2, 4))):
        v, th, om = unicycle_from_flat(states[:, sl_v], inputs[:, sl_a])
        out[name] = {"v": v, "theta": th, "omega": om}
    return out
