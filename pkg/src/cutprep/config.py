"""Run configuration: a YAML document with mesh, geometry, material and output blocks.

Geometry entries are one-line primitives::

    plane nx ny [nz] offset        # normal . x = offset, negative side below
    circle cx cy r
    sphere cx cy cz r
    grid path/to/file              # sampled level set (see SampledGrid.write)
    union|intersection|difference <primitive> ; <primitive> [; ...]
"""
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .geometry import Composite, MaterialMap, Plane, SampledGrid, Sphere

EXPERIMENTS = ("multibeam", "brickwall", "scaling")


@dataclass
class MeshConfig:
    dim: int = 2
    elements: list = field(default_factory=lambda: [10, 10])
    origin: list = field(default_factory=lambda: [0.0, 0.0])
    h: list = field(default_factory=lambda: [0.2, 0.2])
    degree: int = 2


@dataclass
class OutputConfig:
    mesh: str = None
    clusters: str = None
    stats: str = None
    enriched: str = None
    graphs: str = None


@dataclass
class RunConfig:
    mesh: MeshConfig = field(default_factory=MeshConfig)
    geometries: list = field(default_factory=list)     # primitive strings, ordered
    material_map: dict = None                          # raw index -> material; None = identity
    void: list = field(default_factory=list)
    enrich: bool = True
    bulk_order: int = None                             # simplex rule exactness; None = 2p
    eps_snap: float = 1e-6                             # proximity band relative to h
    ranks: str = "1"
    experiment: str = None
    experiment_options: dict = field(default_factory=dict)
    seed: int = 0
    output: OutputConfig = field(default_factory=OutputConfig)

    # -- validation ------------------------------------------------------------
    def validate(self):
        m = self.mesh
        if m.dim not in (2, 3):
            raise ConfigError(f"mesh.dim must be 2 or 3, got {m.dim}")
        for name in ("elements", "origin", "h"):
            v = getattr(m, name)
            if not isinstance(v, (list, tuple)) or len(v) != m.dim:
                raise ConfigError(f"mesh.{name} must be a list of {m.dim} values")
        if any(int(e) < 1 for e in m.elements) or any(float(h) <= 0 for h in m.h):
            raise ConfigError("mesh.elements and mesh.h must be positive")
        if int(m.degree) < 1:
            raise ConfigError("mesh.degree must be >= 1")
        if self.experiment is not None and self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if not (0 < self.eps_snap < 0.5):
            raise ConfigError("eps_snap must lie in (0, 0.5)")
        self.build_geometries()
        self.build_material_map()
        return self

    def build_geometries(self, base_dir="."):
        return [parse_geometry(g, self.mesh.dim, self.eps_snap, base_dir) for g in self.geometries]

    def build_material_map(self):
        n = len(self.geometries)
        if self.material_map is None:
            return MaterialMap(n)
        table = {int(k): int(v) for k, v in self.material_map.items()}
        missing = sorted(set(range(2 ** n)) - set(table))
        if missing:
            raise ConfigError(f"material_map must cover every raw index; missing {missing[:8]}")
        return MaterialMap(n, table)

    # -- serialization -------------------------------------------------------------
    def to_dict(self):
        d = asdict(self)
        if d["material_map"] is not None:
            d["material_map"] = {int(k): int(v) for k, v in d["material_map"].items()}
        return d

    def dump(self, path=None):
        text = yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        mesh = d.pop("mesh", None) or {}
        out = d.pop("output", None) or {}
        try:
            cfg = cls(mesh=_sub(MeshConfig, mesh, "mesh"), output=_sub(OutputConfig, out, "output"), **d)
        except TypeError as e:
            raise ConfigError(f"invalid config: {e}") from None
        cfg.geometries = [str(g) for g in (cfg.geometries or [])]
        cfg.void = [int(v) for v in (cfg.void or [])]
        cfg.experiment_options = dict(cfg.experiment_options or {})
        if cfg.material_map is not None:
            cfg.material_map = {int(k): int(v) for k, v in cfg.material_map.items()}
        return cfg

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        return cls.loads(text)

    @classmethod
    def loads(cls, text):
        try:
            d = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"config is not valid YAML: {e}") from None
        if d is not None and not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(d)


def _sub(klass, d, name):
    if not isinstance(d, dict):
        raise ConfigError(f"{name} must be a mapping")
    known = {f.name for f in fields(klass)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
    return klass(**d)


def _floats(tokens, n, line):
    if len(tokens) != n:
        raise ConfigError(f"geometry {line!r}: expected {n} numbers, got {len(tokens)}")
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ConfigError(f"geometry {line!r}: non-numeric parameter") from None


def parse_geometry(line, dim, eps=1e-6, base_dir="."):
    line = str(line).strip()
    parts = line.split(None, 1)
    if not parts:
        raise ConfigError("empty geometry entry")
    kind = parts[0].lower()
    rest = parts[1] if len(parts) > 1 else ""
    if kind in ("union", "intersection", "difference"):
        kids = [parse_geometry(t, dim, eps, base_dir) for t in rest.split(";") if t.strip()]
        return Composite(kind, kids, eps_p=eps)
    tok = rest.split()
    if kind == "plane":
        v = _floats(tok, dim + 1, line)
        return Plane(v[:dim], v[dim], eps_p=eps)
    if kind in ("circle", "sphere"):
        v = _floats(tok, dim + 1, line)
        if v[dim] <= 0:
            raise ConfigError(f"geometry {line!r}: radius must be positive")
        return Sphere(v[:dim], v[dim], eps_p=eps)
    if kind == "grid":
        if len(tok) != 1:
            raise ConfigError(f"geometry {line!r}: expected one file path")
        p = Path(tok[0])
        if not p.is_absolute():
            p = Path(base_dir) / p
        if not p.exists():
            raise ConfigError(f"geometry {line!r}: file {p} not found")
        G = SampledGrid.from_file(p, eps_p=eps)
        if G.dim != dim:
            raise ConfigError(f"geometry {line!r}: grid dimension {G.dim} != mesh dim {dim}")
        return G
    raise ConfigError(f"unknown geometry kind {kind!r}")
