"""Planar shapes and kinematic helpers shared by the scenario builders."""
from __future__ import annotations

import numpy as np

from ..zonoset import HPolytope, HybridZonotope


def hexagon_vertices(radius: float, center=(0.0, 0.0), phase_deg: float = 0.0) -> np.ndarray:
    """Regular hexagon with circumradius ``radius`` and a vertex at ``phase_deg``."""
    ang = np.deg2rad(phase_deg + 60.0 * np.arange(6))
    return np.asarray(center, dtype=float) + radius * np.column_stack([np.cos(ang), np.sin(ang)])


def hexagon_polytope(radius: float, center=(0.0, 0.0), phase_deg: float = 0.0) -> HPolytope:
    return HPolytope.from_vertices(hexagon_vertices(radius, center, phase_deg))


def hexagon_zonotope(radius: float, center=(0.0, 0.0)) -> HybridZonotope:
    """Hexagon with vertices at 0, 60, ..., 300 degrees as a 3-generator zonotope.

    With factors in [0, 1] each generator is a full edge; the centre is
    shifted by half their sum.
    """
    ang = np.deg2rad([0.0, 60.0, 120.0])
    G = radius * np.vstack([np.cos(ang), np.sin(ang)])
    c = np.asarray(center, dtype=float) - 0.5 * G.sum(axis=1)
    return HybridZonotope.zonotope(G, c)


def sector_normals(phase_deg: float = 30.0) -> np.ndarray:
    """Outward face normals of a hexagon whose vertices sit at multiples of 60 degrees."""
    ang = np.deg2rad(phase_deg + 60.0 * np.arange(6))
    return np.column_stack([np.cos(ang), np.sin(ang)])


def sector(i: int, lo_dist: float, hi_dist: float | None = None, box_lo=None, box_hi=None) -> HPolytope:
    """Part of the 60-degree cone around face normal i with lo_dist <= n_i.r (<= hi_dist)."""
    a0, a1 = np.deg2rad(60.0 * i), np.deg2rad(60.0 * (i + 1))
    n = sector_normals()[i]
    # rows read L r <= rhs; the first two keep r between the rays at a0 and a1
    rows = [[np.sin(a0), -np.cos(a0)], [-np.sin(a1), np.cos(a1)], -n]
    rhs = [0.0, 0.0, -lo_dist]
    if hi_dist is not None:
        rows.append(n)
        rhs.append(hi_dist)
    if box_lo is not None:
        for d in range(2):
            e = np.zeros(2)
            e[d] = 1.0
            rows += [e, -e]
            rhs += [box_hi[d], -box_lo[d]]
    return HPolytope.from_inequalities(np.asarray(rows, dtype=float), np.asarray(rhs, dtype=float))


def rebound_offsets(lo, hi, velocity, ws_lo, ws_hi, N: int) -> np.ndarray:
    """Translation of a box moving at constant velocity and bouncing off the workspace walls.

    Returns an (N + 1, d) array of offsets relative to step 0, using the
    closed-form triangle wave of the reflected motion.
    """
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    v = np.asarray(velocity, float)
    ws_lo, ws_hi = np.asarray(ws_lo, float), np.asarray(ws_hi, float)
    span = (ws_hi - ws_lo) - (hi - lo)
    if np.any(span < 0) or np.any(lo < ws_lo - 1e-12) or np.any(hi > ws_hi + 1e-12):
        raise ValueError("moving region must start inside the workspace")
    t = np.arange(N + 1)[:, None]
    s = (lo - ws_lo) + v * t
    out = np.empty_like(s)
    for d in range(lo.size):
        L = span[d]
        if L == 0:
            out[:, d] = 0.0
            continue
        m = np.mod(s[:, d], 2 * L)
        out[:, d] = L - np.abs(m - L)
    return out + ws_lo - lo


def wind_vectors(centers, map_center, magnitude: float, spread_deg: float, rng: np.random.Generator) -> np.ndarray:
    """Counter-clockwise swirl about ``map_center`` with a random heading perturbation per region."""
    centers = np.atleast_2d(np.asarray(centers, float))
    rel = centers - np.asarray(map_center, float)
    base = np.arctan2(rel[:, 1], rel[:, 0]) + np.pi / 2
    jitter = np.deg2rad(rng.uniform(-spread_deg, spread_deg, size=len(centers)))
    ang = base + jitter
    return magnitude * np.column_stack([np.cos(ang), np.sin(ang)])


def unicycle_from_flat(vel, acc, theta0: float = 0.0, v_eps: float = 1e-9):
    """Speed, heading and turn rate from flat-output derivatives.

    ``vel`` is (T, 2) velocities, ``acc`` is (T, 2) accelerations (rows
    beyond the last input may be dropped by the caller).  Where the speed
    vanishes the heading is held and the turn rate is zero.
    """
    vel = np.atleast_2d(np.asarray(vel, float))
    acc = np.atleast_2d(np.asarray(acc, float))
    v = np.hypot(vel[:, 0], vel[:, 1])
    theta = np.empty_like(v)
    omega = np.zeros_like(v)
    prev = theta0
    for k in range(len(v)):
        if v[k] > v_eps:
            prev = float(np.arctan2(vel[k, 1], vel[k, 0]))
            if k < len(acc):
                omega[k] = (vel[k, 0] * acc[k, 1] - vel[k, 1] * acc[k, 0]) / v[k] ** 2
        theta[k] = prev
    return v, theta, omega
