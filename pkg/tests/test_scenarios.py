import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtlreach.cli import main
from mtlreach.scenarios import (
    PALETTE,
    ConfigError,
    StageError,
    dumps,
    load,
    loads,
    render_svg,
    run_scenario,
    shipped,
    validate_partition,
)
from mtlreach.scenarios.config import data_dir
from mtlreach.scenarios.geometry import hexagon_polytope, rebound_offsets, unicycle_from_flat
from mtlreach.zonoset import HPolytope

TINY = """
name = "tiny"
template = "double-integrator"
horizon = 3
formula = "(eventually 1 3 C)"
x0 = [0.4, 1.0, 0.0, 0.0]

[dynamics]
umax = 0.6

[workspace]
lo = [0.0, 0.0]
hi = [3.0, 2.0]

[[layers]]
dims = [0, 1]
kind = "DCP"

[[layers.regions]]
id = "W"
lo = [0.0, 0.0]
hi = [1.0, 2.0]

[[layers.regions]]
id = "C"
role = "goal"
lo = [1.0, 0.0]
hi = [2.0, 2.0]

[[layers.regions]]
id = "E"
lo = [2.0, 0.0]
hi = [3.0, 2.0]
"""


@pytest.fixture
def tiny_file(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(TINY)
    return p


@pytest.mark.parametrize("path", sorted(data_dir().glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_round_trip(path):
    cfg = load(path)
    again = loads(dumps(cfg))
    assert again.to_dict() == cfg.to_dict()


def test_unknown_names_and_keys_are_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="available"):
        shipped("no_such_thing")
    with pytest.raises(ConfigError, match="unknown keys"):
        loads(TINY.replace('x0 = [', 'colour = 1\nx0 = ['))
    with pytest.raises(ConfigError, match="template"):
        loads(TINY.replace("double-integrator", "submarine"))
    with pytest.raises(ConfigError, match="duplicate"):
        loads(TINY.replace('id = "E"', 'id = "W"'))
    with pytest.raises(ConfigError, match="TOML"):
        loads("name = ")


def test_partition_checks(tiny_file):
    assert all(c.ok for c in validate_partition(tiny_file))
    gap = load(tiny_file)
    gap.layers[0].regions = gap.layers[0].regions[:2]
    assert not all(c.ok for c in validate_partition(gap))


@pytest.mark.parametrize("name", ["desk_door_key", "desk_energy", "desk_tsp", "desk_two_agent"])
def test_shipped_desk_partitions(name):
    assert all(c.ok for c in validate_partition(shipped(name)))


def reflected(lo, hi, v, ws_lo, ws_hi, N):
    lo, hi, v = np.array(lo, float), np.array(hi, float), np.array(v, float)
    start = lo.copy()
    out = [np.zeros_like(lo)]
    for _ in range(N):
        lo, hi = lo + v, hi + v
        for d in range(lo.size):
            if lo[d] < ws_lo[d]:
                s = 2 * (ws_lo[d] - lo[d])
                lo[d] += s
                hi[d] += s
                v[d] = -v[d]
            elif hi[d] > ws_hi[d]:
                s = 2 * (hi[d] - ws_hi[d])
                lo[d] -= s
                hi[d] -= s
                v[d] = -v[d]
        out.append(lo - start)
    return np.array(out)


@settings(max_examples=100, deadline=None)
@given(
    st.floats(0, 4), st.floats(0, 4), st.floats(0.2, 2), st.floats(0.2, 2),
    st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.integers(1, 15),
)
def test_rebound_offsets_match_stepwise_reflection(x, y, w, h, vx, vy, N):
    lo, hi = [x, y], [x + w, y + h]
    ws_lo, ws_hi = [0.0, 0.0], [6.0, 6.0]
    got = rebound_offsets(lo, hi, [vx, vy], ws_lo, ws_hi, N)
    np.testing.assert_allclose(got, reflected(lo, hi, [vx, vy], ws_lo, ws_hi, N), atol=1e-9)


def test_rebound_offsets_reject_outside_start():
    with pytest.raises(ValueError):
        rebound_offsets([5.5], [6.5], [1.0], [0.0], [6.0], 3)


def test_hexagon_apothem():
    # vertex at 0 degrees, so the apothem points along 30 degrees
    H = hexagon_polytope(2.0)
    d = np.array([np.cos(np.pi / 6), np.sin(np.pi / 6)])
    assert H.contains((np.sqrt(3) - 1e-9) * d, 0.0) and not H.contains((np.sqrt(3) + 1e-6) * d, 0.0)
    assert H.contains([2.0 - 1e-9, 0.0], 0.0)


def test_unicycle_straight_line_has_no_turn():
    vel = np.tile([1.0, 1.0], (5, 1))
    v, theta, omega = unicycle_from_flat(vel, np.tile([0.5, 0.5], (5, 1)))
    np.testing.assert_allclose(v, np.sqrt(2))
    np.testing.assert_allclose(theta, np.pi / 4)
    np.testing.assert_array_equal(omega, 0.0)
    v, theta, omega = unicycle_from_flat(np.zeros((3, 2)), np.ones((3, 2)), theta0=0.3)
    np.testing.assert_array_equal(theta, 0.3)
    np.testing.assert_array_equal(omega, 0.0)


def test_svg_is_deterministic_and_uses_palette():
    regs = [(r, r, HPolytope.from_box([i, 0], [i + 1, 1]), False) for i, r in enumerate(PALETTE)]
    trace = np.array([[0.5, 0.5], [3.5, 0.5]])
    a = render_svg([0, 0], [len(PALETTE), 1], regs, traces=[trace], title="t")
    assert a == render_svg([0, 0], [len(PALETTE), 1], regs, traces=[trace], title="t")
    for color in PALETTE.values():
        assert f'fill="{color}"' in a
    empty = render_svg([0, 0], [1, 1], traces=[np.zeros((0, 2))])
    assert empty.startswith("<svg") and empty.rstrip().endswith("</svg>") and "polyline" not in empty


def test_run_writes_consistent_artifacts(tiny_file, tmp_path):
    art = run_scenario(tiny_file, tmp_path / "out")
    assert art.summary["status"] == "optimal-at-gap"
    assert all(art.summary["checks"].values())
    for key in ("summary", "log", "trajectory", "indicators", "plot"):
        assert art.path(key).exists()
    summary = json.loads(art.path("summary").read_text())
    lift = summary["stages"]["lift"]
    assert lift.pop("recomputed") == lift
    rows = list(csv.reader(art.path("trajectory").open()))
    assert len(rows) == 1 + 4
    again = run_scenario(tiny_file, tmp_path / "again")
    assert again.path("plot").read_text() == art.path("plot").read_text()


def test_export_mode_writes_model(tiny_file, tmp_path):
    art = run_scenario(tiny_file, tmp_path, mode="export")
    assert art.summary["status"] == "exported" and art.report is None
    assert art.path("mps").read_text().endswith("ENDATA\n")


def test_bruteforce_mode_agrees_with_bnb(tiny_file):
    a = run_scenario(tiny_file, gap=1e-6)
    b = run_scenario(tiny_file, mode="bruteforce")
    assert a.report.objective == pytest.approx(b.report.objective, rel=1e-6)


def test_stage_errors_are_tagged(tiny_file):
    with pytest.raises(StageError) as ei:
        run_scenario(loads(TINY.replace("(eventually 1 3 C)", "(eventually 1 3 Z)")))
    assert ei.value.stage == "formula"
    with pytest.raises(StageError) as ei:
        run_scenario(loads(TINY.replace("hi = [3.0, 2.0]\n\n[[layers]]", "hi = [3.0, 2.0]\n\n[cost]\nR_diag = [0.0, 0.0]\n\n[[layers]]")))
    assert ei.value.stage == "assemble"
    # goal out of reach in one step
    with pytest.raises(StageError) as ei:
        run_scenario(loads(TINY.replace("horizon = 3", "horizon = 1").replace("(eventually 1 3 C)", "(eventually 1 1 E)")))
    assert ei.value.stage == "solve"
    with pytest.raises(StageError) as ei:
        run_scenario(loads(TINY.replace("[workspace]", "[solver]\nmode = \"bruteforce\"\nbin_budget = 2\n\n[workspace]")))
    assert ei.value.stage == "solve"


def test_cli_plan_validate_and_encode_check(tiny_file, tmp_path, capsys):
    assert main(["plan", "--scenario", str(tiny_file), "--out", str(tmp_path / "p")]) == 0
    out = capsys.readouterr().out
    assert "tiny: optimal-at-gap" in out and "formula_satisfied: ok" in out
    assert main(["validate", "--scenario", str(tiny_file)]) == 0
    assert main(["encode-check", "--tau", "2"]) == 0
    assert "total mismatches 0" in capsys.readouterr().out


def test_cli_errors_exit_with_code_two(tmp_path, capsys):
    assert main(["plan", "--scenario", "no_such_scenario"]) == 2
    assert "error:" in capsys.readouterr().err
    bad = tmp_path / "bad.toml"
    bad.write_text(TINY.replace("(eventually 1 3 C)", "(eventually 1 3"))
    assert main(["plan", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "FormulaSyntaxError" in capsys.readouterr().err


def test_cli_module_entry_point(tiny_file):
    r = subprocess.run([sys.executable, "-m", "mtlreach.cli", "validate", "--scenario", str(tiny_file)], capture_output=True, text=True)
    assert r.returncode == 0 and "step 0" in r.stdout
