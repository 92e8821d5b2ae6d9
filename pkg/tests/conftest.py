import functools
import time
from pathlib import Path

import numpy as np
import pytest

from mtlreach.scenarios import load, run_scenario, shipped
from mtlreach.zonoset import HPolytope, HybridZonotope, cartesian_product, generalized_intersection_hz

FIXTURES = Path(__file__).parent / "fixtures"


def random_hz(rng, n=2, n_g=3, n_b=2, n_c=1, scale=1.0):
    """Random hybrid zonotope whose constraints are satisfied by a planted factor point."""
    Gc = rng.normal(size=(n, n_g)) * scale
    Gb = rng.normal(size=(n, n_b)) * scale
    c = rng.normal(size=n)
    Ac = rng.normal(size=(n_c, n_g))
    Ab = rng.normal(size=(n_c, n_b))
    xc = rng.uniform(0.2, 0.8, n_g)
    xb = rng.integers(0, 2, n_b).astype(float)
    b = Ac @ xc + Ab @ xb
    return HybridZonotope(Gc, Gb, c, Ac, Ab, b)


def random_polytope(rng, n=2, m=3):
    """Random bounded polytope: a box cut by ``m`` random halfspaces through its interior."""
    lo = rng.uniform(-2, -0.5, n)
    hi = rng.uniform(0.5, 2, n)
    L = rng.normal(size=(m, n))
    r = L @ rng.uniform(lo * 0.3, hi * 0.3) + rng.uniform(0.1, 0.6, m)
    return HPolytope.from_box(lo, hi).intersect(HPolytope.from_inequalities(L, r))


@functools.lru_cache(maxsize=None)
def _desk_run(name: str, out_root: str):
    cfg = load(shipped(name))
    t0 = time.perf_counter()
    art = run_scenario(cfg, Path(out_root) / name)
    return art, time.perf_counter() - t0


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    """Callable returning (artifacts, seconds) for a shipped scenario, solved at most once per session."""
    root = str(tmp_path_factory.mktemp("desk"))
    return lambda name: _desk_run(name, root)


__all__ = ["random_hz", "random_polytope", "FIXTURES", "cartesian_product", "generalized_intersection_hz", "np"]


def random_miqp(rng, n_cont=None, group=None, n_free=None, infeasible=False):
    """Random convex MIQP with a planted feasible point, optionally made infeasible.

    Binaries are one one-hot group of size ``group`` followed by ``n_free``
    unconstrained ones; a few dense rows tie them to the continuous block.
    Infeasibility comes from a row 2 b_i + 2 b_j = 1, which no 0/1 pair meets.
    """
    from mtlreach.solve import Miqp

    n_cont = int(rng.integers(2, 6)) if n_cont is None else n_cont
    group = int(rng.integers(0, 5)) if group is None else group
    if group == 1:
        group = 2
    n_free = int(rng.integers(1, 8)) if n_free is None else n_free
    if infeasible and group + n_free < 2:
        n_free = 2
    n_bin = group + n_free
    n = n_cont + n_bin
    M = rng.normal(size=(n, n))
    H = M @ M.T / n + 0.05 * np.eye(n)
    q = rng.normal(size=n) * 2
    xc = rng.uniform(0.2, 0.8, n_cont)
    xb = rng.integers(0, 2, n_bin).astype(float)
    if group:
        xb[:group] = 0.0
        xb[rng.integers(0, group)] = 1.0
    v = np.concatenate([xc, xb])
    rows, rhs = [], []
    for _ in range(int(rng.integers(1, 4))):
        a = rng.normal(size=n) * (rng.uniform(size=n) < 0.7)
        a[rng.integers(0, n_cont)] = rng.normal() + 2.0
        rows.append(a)
        rhs.append(a @ v)
    if group:
        a = np.zeros(n)
        a[n_cont : n_cont + group] = 1.0
        rows.append(a)
        rhs.append(1.0)
    if infeasible:
        i, j = rng.choice(np.arange(n_cont, n), 2, replace=False)
        a = np.zeros(n)
        a[[i, j]] = 2.0
        rows.append(a)
        rhs.append(1.0)
    return Miqp(H, q, 0.0, np.array(rows), np.array(rhs), n_cont, n_bin)
