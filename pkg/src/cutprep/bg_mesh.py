"""Structured background mesh with tensor-product B-spline basis."""
from dataclasses import dataclass, field
import itertools

import numpy as np

from . import refcells
from ._kernels import bspline_ders
from .errors import ConfigError


@dataclass
class EntityConnectivity:
    """Entity-to-cell (EtC) and cell-to-entity (CtE) maps for one rank."""

    EtC: list
    CtE: list
    entity_verts: list = field(default_factory=list)  # sorted vertex tuple per entity
    index: dict = field(default_factory=dict)  # sorted vertex tuple -> entity index

    @property
    def n_entities(self):
        return len(self.EtC)


def compute_entity_connectivity(cell_vertex_conn, r, dim=None, ctypes=None):
    """Identify rank-r entities by sorted vertex tuples.

    ``cell_vertex_conn`` is a sequence of vertex tuples (any mix of the cell
    types in :mod:`refcells`).  Entities are numbered in order of first
    appearance while scanning cells and local ordinals.
    """
    EtC, CtE, ent_verts = [], [], []
    index = {}
    for c, verts in enumerate(cell_vertex_conn):
        if ctypes is not None:
            ct = ctypes[c]
        else:
            d = dim if dim is not None else (3 if len(verts) == 8 else 2)
            ct = refcells.cell_type(len(verts), d)
        row = []
        for loc in refcells.ENTITIES[ct][r]:
            key = tuple(sorted(verts[i] for i in loc))
            e = index.get(key)
            if e is None:
                e = len(EtC)
                index[key] = e
                EtC.append([c])
                ent_verts.append(key)
            elif EtC[e][-1] != c:
                EtC[e].append(c)
            row.append(e)
        CtE.append(row)
    return EntityConnectivity(EtC, CtE, ent_verts, index)


def _open_knots(n_el, p):
    return np.concatenate([np.zeros(p), np.arange(n_el + 1, dtype=float), np.full(p, float(n_el))])


class BackgroundMesh:
    """Rectilinear Quad/Hex grid carrying an open uniform B-spline basis.

    A mesh can describe a sub-block of a larger global grid (one rank's owned
    block plus its aura).  ``block`` is the held element range, ``owned`` the
    owned range, both as (lo, hi) per axis in global element coordinates.
    Basis functions are restricted to those touching the owned block, and
    only owned elements carry an IEN.
    """

    def __init__(self, dim, elems_per_axis, origin, h, degree, block=None, owned=None, rank=0):
        if dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {dim}")
        if degree < 1:
            raise ConfigError(f"degree must be >= 1, got {degree}")
        n = tuple(int(v) for v in np.broadcast_to(np.asarray(elems_per_axis), (dim,)))
        if any(v < degree + 1 for v in n):
            raise ConfigError(f"need at least degree+1={degree + 1} elements per axis, got {n}")
        h = np.broadcast_to(np.asarray(h, dtype=float), (dim,)).copy()
        if np.any(h <= 0):
            raise ConfigError("element size h must be positive")
        self.dim = dim
        self.n = n
        self.origin = np.broadcast_to(np.asarray(origin, dtype=float), (dim,)).copy()
        self.h = h
        self.degree = int(degree)
        self.rank = rank
        self.block = tuple(block) if block is not None else tuple((0, v) for v in n)
        self.owned = tuple(owned) if owned is not None else self.block
        self.ctype = refcells.BOX[dim]
        self.knots = [_open_knots(v, self.degree) for v in n]
        self._build_grid()
        self._build_basis()
        # rank 0: entity index equals the local vertex index
        etc = [[] for _ in range(self.n_verts)]
        for e, vs in enumerate(self.elem_verts):
            for v in vs:
                etc[int(v)].append(e)
        self.entity_conn = {0: EntityConnectivity(
            etc, [list(int(v) for v in vs) for vs in self.elem_verts],
            [(v,) for v in range(self.n_verts)], {(v,): v for v in range(self.n_verts)})}
        for r in range(1, dim):
            self.entity_conn[r] = compute_entity_connectivity(
                [tuple(v) for v in self.elem_verts], r, ctypes=[self.ctype] * self.n_elems)

    # -- construction -----------------------------------------------------
    def _build_grid(self):
        dim = self.dim
        lo = np.array([b[0] for b in self.block])
        hi = np.array([b[1] for b in self.block])
        self.block_shape = tuple(hi - lo)
        ranges = [range(lo[a], hi[a]) for a in range(dim)]
        # lexicographic, x fastest
        coords = np.array([c[::-1] for c in itertools.product(*ranges[::-1])], dtype=np.int64)
        self.elem_grid = coords.reshape(-1, dim)
        self.n_elems = len(self.elem_grid)
        self.elem_global = self.global_elem_index(self.elem_grid)
        self._global_to_local = {int(g): i for i, g in enumerate(self.elem_global)}
        vshape = tuple(hi - lo + 1)
        vranges = [range(lo[a], hi[a] + 1) for a in range(dim)]
        vcoords = np.array([c[::-1] for c in itertools.product(*vranges[::-1])], dtype=np.int64)
        self.vert_grid = vcoords.reshape(-1, dim)
        self.n_verts = len(self.vert_grid)
        nv_glob = np.array(self.n) + 1
        strides = np.cumprod(np.r_[1, nv_glob[:-1]])
        self.vert_global = self.vert_grid @ strides
        self.vert_coords = self.origin + self.vert_grid * self.h
        vstr = np.cumprod(np.r_[1, np.array(vshape)[:-1]])
        offs = ((refcells.VERTS[self.ctype] + 1) / 2).astype(np.int64)
        local = self.elem_grid - lo
        self.elem_verts = np.array([(local + o) @ vstr for o in offs]).T.astype(np.int64)
        own_lo = np.array([b[0] for b in self.owned])
        own_hi = np.array([b[1] for b in self.owned])
        self.elem_owned = np.all((self.elem_grid >= own_lo) & (self.elem_grid < own_hi), axis=1)

    def _build_basis(self):
        dim, p = self.dim, self.degree
        own_lo = [b[0] for b in self.owned]
        own_hi = [b[1] for b in self.owned]
        nb_glob = np.array(self.n) + p
        self.nb_global_axis = tuple(nb_glob)
        franges = [range(own_lo[a], own_hi[a] + p) for a in range(dim)]
        fcoords = np.array([c[::-1] for c in itertools.product(*franges[::-1])], dtype=np.int64)
        self.basis_grid = fcoords.reshape(-1, dim)
        self.n_basis = len(self.basis_grid)
        bstr = np.cumprod(np.r_[1, nb_glob[:-1]])
        self.basis_global = self.basis_grid @ bstr
        g2l = {int(g): i for i, g in enumerate(self.basis_global)}
        self._basis_g2l = g2l
        loc_offsets = np.array([c[::-1] for c in itertools.product(*[range(p + 1)] * dim)], dtype=np.int64)
        self.local_basis_offsets = loc_offsets  # (p+1)^dim x dim, lexicographic x fastest
        self.ien = []
        supports = [[] for _ in range(self.n_basis)]
        for e in range(self.n_elems):
            if not self.elem_owned[e]:
                self.ien.append(np.zeros(0, dtype=np.int64))
                continue
            gb = (self.elem_grid[e] + loc_offsets) @ bstr
            row = np.array([g2l[int(g)] for g in gb], dtype=np.int64)
            self.ien.append(row)
        # supports: every element of the held block whose span touches B
        for b in range(self.n_basis):
            bi = self.basis_grid[b]
            lo = np.maximum(bi - p, 0)
            hi = np.minimum(bi, np.array(self.n) - 1)
            rngs = [range(lo[a], hi[a] + 1) for a in range(dim)]
            for c in itertools.product(*rngs[::-1]):
                g = self.global_elem_index(np.array(c[::-1]))
                supports[b].append(self._global_to_local[int(g)])
            supports[b].sort()
        self.basis_supports = supports

    # -- indexing helpers -------------------------------------------------
    def global_elem_index(self, grid):
        strides = np.cumprod(np.r_[1, np.array(self.n[:-1])])
        return np.asarray(grid) @ strides

    def local_elem(self, global_index):
        return self._global_to_local.get(int(global_index))

    def local_basis(self, global_index):
        return self._basis_g2l.get(int(global_index))

    def full_ien(self, E):
        """Global basis indices of element E (available for owned and aura elements)."""
        p = self.degree
        bstr = np.cumprod(np.r_[1, np.array(self.nb_global_axis[:-1])])
        return (self.elem_grid[E] + self.local_basis_offsets) @ bstr

    # -- entities ---------------------------------------------------------
    def get_entities_on_element(self, E, rank):
        if rank == 0:
            return list(self.elem_verts[E])
        if 0 < rank < self.dim:
            return list(self.entity_conn[rank].CtE[E])
        raise ValueError(f"invalid entity rank {rank} for dim {self.dim}")

    def get_cells_on_entity(self, rank, a):
        if rank == self.dim:
            return [a]
        return list(self.entity_conn[rank].EtC[a])

    def entity_vertices(self, rank, a):
        """Local bg vertex indices of entity (rank, a), sorted."""
        if rank == 0:
            return (int(a),)
        if rank == self.dim:
            return tuple(sorted(int(v) for v in self.elem_verts[a]))
        return self.entity_conn[rank].entity_verts[a]

    def entity_key(self, rank, a):
        """Rank-independent identity of a bg entity: sorted global vertex ids."""
        return tuple(sorted(int(self.vert_global[v]) for v in self.entity_vertices(rank, a)))

    def entity_center(self, rank, a):
        vs = self.entity_vertices(rank, a)
        return self.vert_coords[list(vs)].mean(axis=0)

    def element_bounds(self, E):
        lo = self.origin + self.elem_grid[E] * self.h
        return lo, lo + self.h

    def param_to_phys(self, E, xi):
        lo, _ = self.element_bounds(E)
        return lo + (np.asarray(xi) + 1.0) * 0.5 * self.h

    def phys_to_param(self, E, x):
        lo, _ = self.element_bounds(E)
        return 2.0 * (np.asarray(x) - lo) / self.h - 1.0

    @property
    def jac_det(self):
        """Parametric-to-physical volume scaling (constant per element)."""
        return float(np.prod(self.h / 2.0))

    def interior_facets(self):
        """Bg facets shared by two held elements: list of (F, E1, E2)."""
        r = self.dim - 1
        out = []
        for F, cells in enumerate(self.entity_conn[r].EtC):
            if len(cells) == 2:
                out.append((F, cells[0], cells[1]))
        return out

    def facet_ordinal(self, E, F):
        return self.entity_conn[self.dim - 1].CtE[E].index(F)

    # -- basis evaluation -------------------------------------------------
    def eval_basis(self, E, xi, k=0):
        """Basis values (and parametric derivatives up to order k<=2) on element E.

        ``xi`` is one point (dim,) or many (npts, dim) in [-1,1]^dim.  Returns a
        list [N, dN, d2N] truncated at order k; for many points shapes are
        (npts, nb), (npts, dim, nb), (npts, dim, dim, nb).  Entries follow
        the element's lexicographic local ordering (same as the IEN).
        """
        if k > 2:
            raise ValueError("derivative order k must be <= 2")
        xi = np.asarray(xi, dtype=float)
        single = xi.ndim == 1
        xis = np.atleast_2d(xi)
        if np.any(np.abs(xis) > 1.0 + 1e-12):
            raise ValueError("xi outside reference element")
        dim, p = self.dim, self.degree
        npts = xis.shape[0]
        per_axis = []
        for a in range(dim):
            e = self.elem_grid[E, a]
            t = e + (np.clip(xis[:, a], -1.0, 1.0) + 1.0) * 0.5
            spans = np.full(npts, e + p, dtype=np.int64)
            vals = bspline_ders(self.knots[a], p, spans, t, min(k, p))
            if k > p:
                vals = np.concatenate([vals, np.zeros((npts, k - p, p + 1))], axis=1)
            vals[:, 1:, :] *= 0.5 ** np.arange(1, k + 1)[None, :, None]  # d/dxi = 1/2 d/dt
            per_axis.append(vals)
        offs = self.local_basis_offsets
        nb = len(offs)

        def tensor(orders):
            out = np.ones((npts, nb))
            for a in range(dim):
                out *= per_axis[a][:, orders[a], :][:, offs[:, a]]
            return out

        res = [tensor([0] * dim)]
        if k >= 1:
            d1 = np.empty((npts, dim, nb))
            for a in range(dim):
                o = [0] * dim
                o[a] = 1
                d1[:, a] = tensor(o)
            res.append(d1)
        if k >= 2:
            d2 = np.empty((npts, dim, dim, nb))
            for a in range(dim):
                for b in range(dim):
                    o = [0] * dim
                    o[a] += 1
                    o[b] += 1
                    d2[:, a, b] = tensor(o)
            res.append(d2)
        if single:
            res = [r[0] for r in res]
        return res

    def eval_basis_phys(self, E, xi, k=0):
        """Like :meth:`eval_basis` but derivatives taken in physical coordinates."""
        res = self.eval_basis(E, xi, k)
        s = 2.0 / self.h
        if k >= 1:
            res[1] = res[1] * s[:, None] if res[1].ndim == 2 else res[1] * s[None, :, None]
        if k >= 2:
            if res[2].ndim == 3:
                res[2] = res[2] * s[:, None, None] * s[None, :, None]
            else:
                res[2] = res[2] * s[None, :, None, None] * s[None, None, :, None]
        return res


def build_cartesian_mesh(dim, elems_per_axis, origin, h, degree):
    return BackgroundMesh(dim, elems_per_axis, origin, h, degree)
