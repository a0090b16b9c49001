"""Implicit geometries: proximity, conservative element test, interface location."""
import math

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, GeometryDomainError, InvariantError

PLUS, ZERO, MINUS = 1, 0, -1
EPS_ROOT = 1e-10


class Geometry:
    """Level-set geometry; negative inside, positive outside.

    ``eps_p`` is the snap band relative to the element size ``h`` passed to
    the proximity queries.
    """

    kind = "abstract"

    def __init__(self, eps_p=1e-6):
        self.eps_p = float(eps_p)

    # subclasses implement phi (vectorized over leading axes) and phi_range
    def phi(self, x):
        raise NotImplementedError

    def phi_range(self, lo, hi):
        """Lower/upper bounds of phi over the closed box [lo, hi]."""
        raise NotImplementedError

    def band(self, h):
        return self.eps_p * float(np.min(h))

    def compute_proximity(self, x, h):
        """+1 / 0 / -1 per point (0 when |phi| <= eps_p*h)."""
        v = self.phi(np.asarray(x, dtype=float))
        b = self.band(h)
        return np.where(v > b, PLUS, np.where(v < -b, MINUS, ZERO)).astype(np.int8)

    def is_element_intersected(self, mesh, E):
        lo, hi = mesh.element_bounds(E)
        a, b = self.phi_range(lo, hi)
        band = self.band(mesh.h)
        return bool(a <= band and b >= -band)

    def intersected_elements(self, mesh):
        return np.array([self.is_element_intersected(mesh, E) for E in range(mesh.n_elems)], dtype=bool)

    def find_interface(self, x1, x2, h=None):
        """Edge parameter t in (0,1) where phi(x1 + t (x2-x1)) = 0."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        d = x2 - x1
        f1 = float(self.phi(x1))
        f2 = float(self.phi(x2))
        if h is not None:
            b = self.band(h)
            strict = abs(f1) > b and abs(f2) > b
        else:
            strict = f1 != 0.0 and f2 != 0.0
        if not strict or (f1 > 0) == (f2 > 0):
            raise InvariantError(f"find_interface needs strict opposite signs, got phi={f1:g}, {f2:g}")
        t = self._root(x1, d, f1, f2)
        return t

    def _root(self, x1, d, f1, f2):
        return brentq(lambda t: float(self.phi(x1 + t * d)), 0.0, 1.0, xtol=1e-14, rtol=1e-15, maxiter=200)

    # serialization helper for the config layer
    def spec_line(self):
        raise NotImplementedError


class Plane(Geometry):
    kind = "plane"

    def __init__(self, normal, offset, eps_p=1e-6):
        super().__init__(eps_p)
        n = np.asarray(normal, dtype=float)
        nn = np.linalg.norm(n)
        if nn == 0:
            raise ConfigError("plane normal must be nonzero")
        self.raw_normal = n.copy()
        self.raw_offset = float(offset)
        self.normal = n / nn
        self.offset = float(offset) / nn

    def phi(self, x):
        return np.asarray(x, dtype=float) @ self.normal - self.offset

    def phi_range(self, lo, hi):
        # linear: extremes at box corners
        pos = np.where(self.normal > 0, hi, lo)
        neg = np.where(self.normal > 0, lo, hi)
        return float(neg @ self.normal - self.offset), float(pos @ self.normal - self.offset)

    def _root(self, x1, d, f1, f2):
        # phi is affine along the segment
        return f1 / (f1 - f2)

    def spec_line(self):
        return "plane " + " ".join(_fmt(v) for v in self.raw_normal) + " " + _fmt(self.raw_offset)


class Sphere(Geometry):
    """Circle in 2D, sphere in 3D: phi = |x - c| - r."""

    kind = "sphere"

    def __init__(self, center, radius, eps_p=1e-6):
        super().__init__(eps_p)
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ConfigError("radius must be positive")

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(np.sum((x - self.center) ** 2, axis=-1)) - self.radius

    def phi_range(self, lo, hi):
        c = self.center
        nearest = np.clip(c, lo, hi)
        dmin = math.sqrt(float(np.sum((nearest - c) ** 2)))
        far = np.where(np.abs(lo - c) > np.abs(hi - c), lo, hi)
        dmax = math.sqrt(float(np.sum((far - c) ** 2)))
        return dmin - self.radius, dmax - self.radius

    def spec_line(self):
        word = "circle" if len(self.center) == 2 else "sphere"
        return word + " " + " ".join(_fmt(v) for v in self.center) + " " + _fmt(self.radius)


Circle = Sphere


class SampledGrid(Geometry):
    """Level set sampled on a regular grid, multilinearly interpolated."""

    kind = "grid"

    def __init__(self, values, origin, spacing, eps_p=1e-6, path=None):
        super().__init__(eps_p)
        self.values = np.asarray(values, dtype=float)  # shape (nx, ny[, nz])
        self.dim = self.values.ndim
        self.origin = np.asarray(origin, dtype=float)
        self.spacing = np.asarray(spacing, dtype=float)
        self.shape = np.array(self.values.shape)
        self.upper = self.origin + (self.shape - 1) * self.spacing
        self.path = path

    @classmethod
    def from_file(cls, path, eps_p=1e-6):
        with open(path) as f:
            tokens = f.read().split()
        if not tokens:
            raise ConfigError(f"empty grid file {path}")
        dim = int(tokens[0])
        if dim not in (2, 3):
            raise ConfigError(f"grid file {path}: bad dim {dim}")
        shape = [int(t) for t in tokens[1:1 + dim]]
        origin = [float(t) for t in tokens[1 + dim:1 + 2 * dim]]
        spacing = [float(t) for t in tokens[1 + 2 * dim:1 + 3 * dim]]
        vals = np.array([float(t) for t in tokens[1 + 3 * dim:]])
        if vals.size != int(np.prod(shape)):
            raise ConfigError(f"grid file {path}: expected {np.prod(shape)} values, got {vals.size}")
        # lexicographic, x fastest
        values = vals.reshape(shape[::-1]).transpose(tuple(range(dim))[::-1])
        return cls(values, origin, spacing, eps_p, path=str(path))

    def write(self, path):
        with open(path, "w") as f:
            head = [self.dim, *self.shape, *self.origin, *self.spacing]
            f.write(" ".join(_fmt(v) if isinstance(v, float) else str(int(v)) for v in head) + "\n")
            flat = self.values.transpose(tuple(range(self.dim))[::-1]).ravel()
            for i in range(0, flat.size, 8):
                f.write(" ".join(_fmt(v) for v in flat[i:i + 8]) + "\n")

    def _check(self, x):
        tol = 1e-12 * float(np.max(self.spacing))
        if np.any(x < self.origin - tol) or np.any(x > self.upper + tol):
            raise GeometryDomainError("sampled geometry queried outside its bounding box")

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        self._check(pts)
        s = (pts - self.origin) / self.spacing
        i0 = np.clip(np.floor(s).astype(np.int64), 0, self.shape - 2)
        f = s - i0
        out = np.zeros(len(pts))
        for corner in range(2 ** self.dim):
            bits = [(corner >> a) & 1 for a in range(self.dim)]
            w = np.ones(len(pts))
            idx = []
            for a, b in enumerate(bits):
                w *= f[:, a] if b else (1.0 - f[:, a])
                idx.append(i0[:, a] + b)
            out += w * self.values[tuple(idx)]
        return out.reshape(x.shape[:-1]) if x.ndim > 1 else out[0]

    def phi_range(self, lo, hi):
        self._check(np.atleast_2d(lo))
        self._check(np.atleast_2d(hi))
        a = np.clip(np.floor((lo - self.origin) / self.spacing + 1e-12).astype(int), 0, self.shape - 1)
        b = np.clip(np.ceil((hi - self.origin) / self.spacing - 1e-12).astype(int), 0, self.shape - 1)
        sl = tuple(slice(a[k], b[k] + 1) for k in range(self.dim))
        block = self.values[sl]
        return float(block.min()), float(block.max())

    def spec_line(self):
        return f"grid {self.path}"


class Composite(Geometry):
    """Boolean composition of level sets: union=min, intersection=max, difference=max(a,-b)."""

    kind = "composite"

    def __init__(self, op, children, eps_p=1e-6):
        super().__init__(eps_p)
        if op not in ("union", "intersection", "difference"):
            raise ConfigError(f"unknown boolean op {op}")
        if len(children) < 2 or (op == "difference" and len(children) != 2):
            raise ConfigError("composite geometry needs two or more children (difference: exactly two)")
        self.op = op
        self.children = list(children)

    def phi(self, x):
        vals = [c.phi(x) for c in self.children]
        if self.op == "union":
            return np.minimum.reduce(vals)
        if self.op == "intersection":
            return np.maximum.reduce(vals)
        return np.maximum(vals[0], -vals[1])

    def phi_range(self, lo, hi):
        rs = [c.phi_range(lo, hi) for c in self.children]
        if self.op == "union":
            return min(r[0] for r in rs), min(r[1] for r in rs)
        if self.op == "intersection":
            return max(r[0] for r in rs), max(r[1] for r in rs)
        (a0, a1), (b0, b1) = rs
        return max(a0, -b1), max(a1, -b0)

    def _root(self, x1, d, f1, f2):
        # piecewise smooth: bisection keeps the bracket honest
        lo, hi, flo = 0.0, 1.0, f1
        while hi - lo > 1e-13:
            mid = 0.5 * (lo + hi)
            fm = float(self.phi(x1 + mid * d))
            if fm == 0.0:
                return mid
            if (fm > 0) == (flo > 0):
                lo, flo = mid, fm
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def spec_line(self):
        return f"{self.op} " + " ; ".join(c.spec_line() for c in self.children)


def vote_proximity(values):
    """Common strict sign of a cell's vertex proximities, ignoring zeros."""
    s = set(int(v) for v in values) - {ZERO}
    if not s:
        raise InvariantError("proximity vote on all-zero vertex list")
    if len(s) > 1:
        raise InvariantError("proximity vote found mixed + and - vertices")
    return s.pop()


class MaterialMap:
    """Total map from raw material index (bit pattern over geometries) to final index."""

    def __init__(self, n_geometries, table=None):
        self.n_geometries = int(n_geometries)
        n_raw = 2 ** self.n_geometries
        if table is None:
            table = {i: i for i in range(n_raw)}
        elif not isinstance(table, dict):
            table = {i: int(v) for i, v in enumerate(table)}
        self.table = {int(k): int(v) for k, v in table.items()}
        bad = [k for k in self.table if k < 0 or k >= n_raw]
        if bad:
            raise ConfigError(f"material map keys out of range [0,{n_raw}): {bad}")

    @classmethod
    def from_function(cls, n_geometries, fn):
        return cls(n_geometries, {m: int(fn(m)) for m in range(2 ** n_geometries)})

    @property
    def materials(self):
        return sorted(set(self.table.values()))

    @property
    def n_materials(self):
        return max(self.table.values()) + 1 if self.table else 1

    def __call__(self, m_raw):
        return apply_material_map(self, m_raw)

    def is_identity(self):
        return all(k == v for k, v in self.table.items()) and len(self.table) == 2 ** self.n_geometries


def apply_material_map(mmap, m_raw):
    try:
        return mmap.table[int(m_raw)]
    except KeyError:
        raise ConfigError(f"raw material index {m_raw} is not mapped") from None


def raw_bits(m_raw, n_geometries):
    """Proximity per geometry (+1/-1) encoded in a raw material index, first geometry first."""
    return [PLUS if (m_raw >> (n_geometries - 1 - g)) & 1 else MINUS for g in range(n_geometries)]


def _fmt(v):
    return repr(float(v))
