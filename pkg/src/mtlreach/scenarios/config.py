"""Scenario files: a TOML schema mapped onto plain dataclasses.

Schema (all matrices are row-major nested lists)::

    name = "desk-door-key"
    template = "double-integrator"   # | "double-integrator-soc" | "two-agent" | "custom"
    horizon = 12
    formula = "(and (eventually N G) ...)"   # s-expression, N = horizon
    x0 = [1.0, 0.5, 0.0, 0.0]
    seed = 0
    note = "free text"

    [dynamics]        # template parameters, or A/B for "custom"
    [cost]            # Q, R, QN as matrices or Q_diag, R_diag, QN_diag
    [solver]          # mode, gap, node_budget, time_limit, bin_budget, branching
    [workspace]       # lo, hi
    [wind]            # magnitude, spread_deg (optional, energy template)
    [two_agent]       # template block for "two-agent"

    [[layers]]        # name, dims, kind = DCP | NCP | mixed
    [[layers.holes]]  # lo, hi  (keep-out boxes, excluded from coverage)
    [[layers.regions]]
    id = "K1"
    role = "key"      # free | obstacle | goal | key | door | charge | exchange
    lo = [..]; hi = [..]          # box, or
    vertices = [[..], ..]         # convex hull, or
    halfspaces = { L = [[..]], r = [..] }
    overlay = true
    label = "K"                   # proposition name, defaults to id
    velocity = [vx, vy]           # moving region, rebounds off the workspace
    disturbance = [..]            # explicit column of W (length n_x)

    [[free]]          # dims plus lo/hi, or hexagon = radius
    exclusive = [["E", "G1"], ...]
"""
from __future__ import annotations

import copy
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

import tomli_w

TEMPLATES = ("double-integrator", "double-integrator-soc", "two-agent", "custom")
MODES = ("bnb", "bruteforce", "export")
BRANCHING = ("pseudocost", "fractional")


class ConfigError(ValueError):
    pass


def _clean(d: dict) -> dict:
    """Drop None values recursively so the TOML writer accepts the table."""
    out = {}
    for k, v in d.items():
        if v is None:
            continue
        if isinstance(v, dict):
            v = _clean(v)
        elif isinstance(v, list):
            v = [_clean(x) if isinstance(x, dict) else x for x in v]
        out[k] = v
    return out


def _floats(v):
    if v is None:
        return None
    if isinstance(v, (list, tuple)):
        return [_floats(x) for x in v]
    return float(v)


def _take(cls, raw: dict, where: str):
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return raw


@dataclass
class RegionConfig:
    id: str
    role: str = "free"
    lo: list | None = None
    hi: list | None = None
    vertices: list | None = None
    halfspaces: dict | None = None
    overlay: bool = False
    label: str | None = None
    velocity: list | None = None
    disturbance: list | None = None

    def __post_init__(self):
        shapes = [self.lo is not None or self.hi is not None, self.vertices is not None, self.halfspaces is not None]
        if sum(shapes) != 1:
            raise ConfigError(f"region {self.id!r}: give exactly one of lo/hi, vertices or halfspaces")
        if shapes[0] and (self.lo is None or self.hi is None):
            raise ConfigError(f"region {self.id!r}: a box needs both lo and hi")
        self.lo, self.hi = _floats(self.lo), _floats(self.hi)
        self.vertices = _floats(self.vertices)
        self.velocity = _floats(self.velocity)
        self.disturbance = _floats(self.disturbance)
        if self.halfspaces is not None:
            if set(self.halfspaces) != {"L", "r"}:
                raise ConfigError(f"region {self.id!r}: halfspaces needs keys L and r")
            self.halfspaces = {"L": _floats(self.halfspaces["L"]), "r": _floats(self.halfspaces["r"])}


@dataclass
class BoxConfig:
    lo: list
    hi: list

    def __post_init__(self):
        self.lo, self.hi = _floats(self.lo), _floats(self.hi)
        if len(self.lo) != len(self.hi):
            raise ConfigError("box lo and hi differ in length")


@dataclass
class LayerConfig:
    dims: list
    regions: list
    kind: str = "DCP"
    name: str = ""
    holes: list = field(default_factory=list)

    def __post_init__(self):
        self.dims = [int(d) for d in self.dims]
        self.regions = [r if isinstance(r, RegionConfig) else RegionConfig(**_take(RegionConfig, r, "region")) for r in self.regions]
        self.holes = [h if isinstance(h, BoxConfig) else BoxConfig(**_take(BoxConfig, h, "hole")) for h in self.holes]
        if self.kind.upper() not in ("DCP", "NCP", "MIXED"):
            raise ConfigError(f"layer {self.name!r}: kind must be DCP, NCP or mixed")


@dataclass
class FreeConfig:
    dims: list
    lo: list | None = None
    hi: list | None = None
    hexagon: float | None = None
    center: list | None = None

    def __post_init__(self):
        self.dims = [int(d) for d in self.dims]
        self.lo, self.hi, self.center = _floats(self.lo), _floats(self.hi), _floats(self.center)
        if (self.hexagon is None) == (self.lo is None):
            raise ConfigError(f"free block {self.dims}: give either lo/hi or hexagon")
        if self.hexagon is not None:
            self.hexagon = float(self.hexagon)
            if len(self.dims) != 2:
                raise ConfigError("a hexagon free block spans exactly two coordinates")


@dataclass
class CostConfig:
    Q: list | None = None
    R: list | None = None
    QN: list | None = None
    Q_diag: list | None = None
    R_diag: list | None = None
    QN_diag: list | None = None

    def __post_init__(self):
        for k in ("Q", "R", "QN", "Q_diag", "R_diag", "QN_diag"):
            setattr(self, k, _floats(getattr(self, k)))
        if self.Q is not None and self.Q_diag is not None:
            raise ConfigError("cost: Q and Q_diag are mutually exclusive")
        if self.R is not None and self.R_diag is not None:
            raise ConfigError("cost: R and R_diag are mutually exclusive")


@dataclass
class SolverConfig:
    mode: str = "bnb"
    gap: float = 0.01
    node_budget: int = 200000
    time_limit: float | None = None
    bin_budget: int = 20
    branching: str = "pseudocost"

    def __post_init__(self):
        if self.branching not in BRANCHING:
            raise ConfigError(f"solver branching must be one of {BRANCHING}, got {self.branching!r}")
        if self.mode not in MODES:
            raise ConfigError(f"solver mode must be one of {MODES}, got {self.mode!r}")
        self.gap = float(self.gap)
        self.node_budget = int(self.node_budget)
        self.bin_budget = int(self.bin_budget)
        if self.time_limit is not None:
            self.time_limit = float(self.time_limit)


@dataclass
class WindConfig:
    magnitude: float = 0.2
    spread_deg: float = 15.0
    center: list | None = None

    def __post_init__(self):
        self.magnitude = float(self.magnitude)
        self.spread_deg = float(self.spread_deg)
        self.center = _floats(self.center)


@dataclass
class ScenarioConfig:
    name: str
    horizon: int
    formula: str
    x0: list
    workspace: BoxConfig
    layers: list
    template: str = "double-integrator"
    dynamics: dict = field(default_factory=dict)
    cost: CostConfig = field(default_factory=CostConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    free: list = field(default_factory=list)
    wind: WindConfig | None = None
    two_agent: dict | None = None
    exclusive: list = field(default_factory=list)
    seed: int = 0
    note: str = ""

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise ConfigError(f"unknown template {self.template!r} (expected one of {', '.join(TEMPLATES)})")
        self.horizon = int(self.horizon)
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        self.x0 = _floats(self.x0)
        if isinstance(self.workspace, dict):
            self.workspace = BoxConfig(**_take(BoxConfig, self.workspace, "workspace"))
        self.layers = [l if isinstance(l, LayerConfig) else LayerConfig(**_take(LayerConfig, l, "layer")) for l in self.layers]
        self.free = [f if isinstance(f, FreeConfig) else FreeConfig(**_take(FreeConfig, f, "free")) for f in self.free]
        if isinstance(self.cost, dict):
            self.cost = CostConfig(**_take(CostConfig, self.cost, "cost"))
        if isinstance(self.solver, dict):
            self.solver = SolverConfig(**_take(SolverConfig, self.solver, "solver"))
        if isinstance(self.wind, dict):
            self.wind = WindConfig(**_take(WindConfig, self.wind, "wind"))
        self.exclusive = [list(g) for g in self.exclusive]
        self.seed = int(self.seed)
        self.dynamics = dict(self.dynamics)
        ids = [r.id for layer in self.layers for r in layer.regions]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise ConfigError(f"duplicate region ids {dup}")
        for g in self.exclusive:
            missing = [r for r in g if r not in ids]
            if missing and self.template != "two-agent":
                raise ConfigError(f"exclusive group refers to unknown regions {missing}")

    def region_ids(self) -> list[str]:
        return [r.id for layer in self.layers for r in layer.regions]

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def with_overrides(self, **solver) -> "ScenarioConfig":
        out = copy.deepcopy(self)
        for k, v in solver.items():
            if v is not None:
                setattr(out.solver, k, v)
        out.solver.__post_init__()
        return out


def from_dict(raw: dict) -> ScenarioConfig:
    raw = dict(raw)
    _take(ScenarioConfig, raw, "scenario")
    try:
        return ScenarioConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"scenario: {exc}") from exc


def loads(text: str) -> ScenarioConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return from_dict(raw)


def load(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    try:
        return loads(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def dumps(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def dump(cfg: ScenarioConfig, path) -> Path:
    path = Path(path)
    path.write_text(dumps(cfg))
    return path


def data_dir() -> Path:
    return Path(__file__).resolve().parent / "data"


def shipped(name: str) -> Path:
    """Path of a scenario file that ships with the package (name with or without .toml)."""
    p = data_dir() / (name if name.endswith(".toml") else name + ".toml")
    if not p.exists():
        avail = sorted(q.stem for q in data_dir().glob("*.toml"))
        raise ConfigError(f"no shipped scenario {name!r}; available: {', '.join(avail)}")
    return p

