"""Interface-conforming foreground mesh generation.

Cut background elements are first split by a symmetric regular template
(center vertex in 2D; face centers plus body center in 3D).  Each geometry
then splits the simplices whose edges it crosses, using a fixed set of
templates.  Every foreground vertex records the lowest-rank background
entity containing it; that ancestry is the only thing later topology stages
need, so no coordinate comparisons are made after tessellation.
"""
import numpy as np

from . import refcells
from .errors import InvariantError
from .geometry import MINUS, PLUS, ZERO, vote_proximity


class EntityQueue:
    """Deduplicating request queue; indices are fixed at request time."""

    def __init__(self, base):
        self.base = base
        self.payloads = []
        self.position = {}

    def request(self, key, make_payload):
        pos = self.position.get(key)
        if pos is None:
            pos = len(self.payloads)
            self.position[key] = pos
            self.payloads.append(make_payload())
            return self.base + pos, True
        return self.base + pos, False

    def pending(self, index):
        return self.payloads[index - self.base]

    def __len__(self):
        return len(self.payloads)


class ChildMesh:
    """Vertices (with parametric coordinates) and cells inside one bg element."""

    __slots__ = ("E", "verts", "xi", "cells")

    def __init__(self, E):
        self.E = E
        self.verts = []
        self.xi = {}
        self.cells = []

    def add_vertex(self, v, xi):
        if v not in self.xi:
            self.verts.append(v)
            self.xi[v] = np.asarray(xi, dtype=float)


def assign_material(prev_m, P):
    if P == PLUS:
        return 2 * prev_m + 1
    if P == MINUS:
        return 2 * prev_m
    raise InvariantError("cell proximity must be + or -")


def find_common_ancestor(bg, E, anc1, anc2):
    """Lowest-rank entity of E whose closure holds both ancestor entities.

    Integer-only: ancestor closures are compared as bg vertex sets.  Covers
    the cases: either vertex interior -> interior; shared edge/face -> that
    entity; two bg vertices -> their edge; different faces -> interior; bg
    vertex plus edge/face -> the edge/face.
    """
    dim = bg.dim
    (r1, a1), (r2, a2) = anc1, anc2
    if r1 == dim or r2 == dim:
        return (dim, E)
    if (r1, a1) == (r2, a2):
        return (r1, a1)
    need = set(bg.entity_vertices(r1, a1)) | set(bg.entity_vertices(r2, a2))
    for rank in range(1, dim):
        conn = bg.entity_conn[rank]
        for ent in conn.CtE[E]:
            if need.issubset(conn.entity_verts[ent]):
                return (rank, ent)
    return (dim, E)


def _orient(cell, xi_of):
    """Return cell with positive parametric orientation; error on zero volume."""
    xs = np.array([xi_of(v) for v in cell])
    vol = refcells.simplex_signed_volume(xs)
    if vol == 0.0 or not np.isfinite(vol):
        raise InvariantError(f"degenerate foreground cell {cell}")
    if vol < 0:
        cell = (cell[1], cell[0]) + tuple(cell[2:])
    return cell


def _build_regular_templates():
    t2 = [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)]
    ref2 = np.vstack([refcells.VERTS[refcells.QUAD4], [[0.0, 0.0]]])
    hexv = refcells.VERTS[refcells.HEX8]
    faces = refcells.ENTITIES[refcells.HEX8][2]
    centers = np.array([hexv[list(f)].mean(axis=0) for f in faces])
    ref3 = np.vstack([hexv, centers, [[0.0, 0.0, 0.0]]])
    t3 = []
    for fo, f in enumerate(faces):
        for i in range(4):
            t3.append((f[i], f[(i + 1) % 4], 8 + fo, 14))
    out = {}
    for dim, tab, ref in ((2, t2, ref2), (3, t3, ref3)):
        fixed = [_orient(c, lambda v, ref=ref: ref[v]) for c in tab]
        out[dim] = (fixed, ref)
    return out


REGULAR_TEMPLATES = _build_regular_templates()

_PRISM_ROT = {
    0: (0, 1, 2, 3, 4, 5), 1: (1, 2, 0, 4, 5, 3), 2: (2, 0, 1, 5, 3, 4),
    3: (3, 5, 4, 0, 2, 1), 4: (4, 3, 5, 1, 0, 2), 5: (5, 4, 3, 2, 1, 0),
}


def split_quad(q, key):
    """Two triangles of quad (q0,q1,q2,q3) using the diagonal through its min-key vertex."""
    m = min(range(4), key=lambda i: key(q[i]))
    if m in (0, 2):
        return [(q[0], q[1], q[2]), (q[0], q[2], q[3])]
    return [(q[1], q[2], q[3]), (q[1], q[3], q[0])]


def split_pyramid(base, apex, key):
    return [t + (apex,) for t in split_quad(base, key)]


def split_prism(v, key):
    """Three tets of prism (a0,a1,a2 | b0,b1,b2), b_i above a_i; quad diagonals via min key."""
    m = min(range(6), key=lambda i: key(v[i]))
    V = [v[i] for i in _PRISM_ROT[m]]
    if min(key(V[1]), key(V[5])) < min(key(V[2]), key(V[4])):
        idx = ((0, 1, 2, 5), (0, 1, 5, 4), (0, 4, 5, 3))
    else:
        idx = ((0, 1, 2, 4), (0, 4, 2, 5), (0, 4, 5, 3))
    return [tuple(V[i] for i in t) for t in idx]


def template_children(cell, ps, newv, key):
    """Children of a simplex whose strictly-cut edges carry new vertices.

    ``ps`` are vertex proximities, ``newv`` maps a sorted vertex pair to the
    new vertex index.  Orientation is fixed by the caller.
    """
    n = len(cell)
    edges = refcells.ENTITIES[refcells.TRI3 if n == 3 else refcells.TET4][1]
    cut = [(cell[i], cell[j]) for i, j in edges if ps[i] * ps[j] < 0]
    if not cut:
        return [tuple(cell)]

    def nv(a, b):
        return newv[(a, b) if a < b else (b, a)]

    sign = dict(zip(cell, ps))
    if n == 3:
        if len(cut) == 1:
            a, b = cut[0]
            c = next(v for v in cell if v not in (a, b))
            m = nv(a, b)
            return [(a, m, c), (m, b, c)]
        if len(cut) == 2:
            shared = set(cut[0]) & set(cut[1])
            a = shared.pop()
            b = cut[0][0] if cut[0][1] == a else cut[0][1]
            c = cut[1][0] if cut[1][1] == a else cut[1][1]
            nab, nac = nv(a, b), nv(a, c)
            return [(a, nab, nac)] + split_quad((nab, b, c, nac), key)
        raise InvariantError(f"no triangle template for cut pattern {cut} on cell {cell}")
    # tetrahedra
    if len(cut) == 1:
        a, b = cut[0]
        c, d = [v for v in cell if v not in (a, b)]
        m = nv(a, b)
        return [(a, m, c, d), (m, b, c, d)]
    if len(cut) == 2:
        shared = set(cut[0]) & set(cut[1])
        if len(shared) != 1:
            raise InvariantError(f"no tet template for cut pattern {cut} on cell {cell}")
        a = shared.pop()
        b = cut[0][0] if cut[0][1] == a else cut[0][1]
        c = cut[1][0] if cut[1][1] == a else cut[1][1]
        d = next(v for v in cell if v not in (a, b, c))
        if sign[d] != ZERO:
            raise InvariantError(f"inconsistent tet cut pattern on cell {cell}")
        nab, nac = nv(a, b), nv(a, c)
        return [(a, nab, nac, d)] + split_pyramid((nab, b, c, nac), d, key)
    if len(cut) == 3:
        common = set(cut[0]) & set(cut[1]) & set(cut[2])
        if len(common) != 1:
            raise InvariantError(f"no tet template for cut pattern {cut} on cell {cell}")
        a = common.pop()
        b, c, d = [v for v in cell if v != a]
        nab, nac, nad = nv(a, b), nv(a, c), nv(a, d)
        return [(a, nab, nac, nad)] + split_prism((nab, nac, nad, b, c, d), key)
    if len(cut) == 4:
        a = cell[0]
        b = next(v for v in cell[1:] if sign[v] == sign[a])
        c, d = [v for v in cell if v not in (a, b)]
        nac, nad, nbc, nbd = nv(a, c), nv(a, d), nv(b, c), nv(b, d)
        return (split_prism((a, nac, nad, b, nbc, nbd), key)
                + split_prism((c, nac, nbc, d, nad, nbd), key))
    raise InvariantError(f"no tet template for cut pattern {cut} on cell {cell}")


class ForegroundMesh:
    """Foreground vertices/cells with background ancestry and child meshes."""

    def __init__(self, bg):
        self.bg = bg
        self.dim = bg.dim
        self.coords = [np.array(x) for x in bg.vert_coords]
        self.anc = [(0, i) for i in range(bg.n_verts)]
        # rank-independent identity, used for deterministic diagonal choices
        self.keys = [(0, (int(g),)) for g in bg.vert_global]
        self.cells = [tuple(int(v) for v in vs) for vs in bg.elem_verts]
        self.cell_elem = list(range(bg.n_elems))
        self.cell_mat = [0] * bg.n_elems
        self.children = []
        ref = refcells.VERTS[bg.ctype]
        for E in range(bg.n_elems):
            cm = ChildMesh(E)
            for loc, v in enumerate(bg.elem_verts[E]):
                cm.add_vertex(int(v), ref[loc])
            cm.cells.append(E)
            self.children.append(cm)
        self.n_geometries = 0
        self.regular_flags = np.zeros(bg.n_elems, dtype=bool)
        self.final = False
        # filled by topology
        self.cell_subphase = None
        self.subphases = None

    # -- basic accessors ---------------------------------------------------
    @property
    def n_verts(self):
        return len(self.coords)

    @property
    def n_cells(self):
        return len(self.cells)

    def cell_type(self, c):
        return refcells.cell_type(len(self.cells[c]), self.dim)

    def coords_array(self):
        return np.array(self.coords)

    def cell_param_volume(self, c):
        cm = self.children[self.cell_elem[c]]
        verts = self.cells[c]
        if len(verts) == 2 ** self.dim:
            return refcells.REF_VOLUME[self.bg.ctype]
        return refcells.simplex_signed_volume(np.array([cm.xi[v] for v in verts]))

    # -- regular subdivision ------------------------------------------------
    def regular_subdivision(self, geometries, flags=None):
        bg = self.bg
        if flags is None:
            flags = np.zeros(bg.n_elems, dtype=bool)
            for G in geometries:
                flags |= G.intersected_elements(bg)
        dim = self.dim
        tmpl, ref = REGULAR_TEMPLATES[dim]
        n_corner = 2 ** dim
        qv = EntityQueue(self.n_verts)
        new_cells = []
        for E in np.flatnonzero(flags):
            E = int(E)
            cm = self.children[E]
            if len(cm.cells) != 1 or self.regular_flags[E]:
                continue
            self.regular_flags[E] = True
            local = [int(v) for v in bg.elem_verts[E]]
            if dim == 2:
                ents = [(2, E)]
            else:
                ents = [(2, F) for F in bg.entity_conn[2].CtE[E]] + [(3, E)]
            for j, (r, a) in enumerate(ents):
                v, _ = qv.request((r, a), lambda r=r, a=a: (
                    bg.entity_center(r, a), (r, a), (0, bg.entity_key(r, a))))
                cm.add_vertex(v, ref[n_corner + j])
                local.append(v)
            parent = cm.cells[0]
            m = self.cell_mat[parent]
            cells = [tuple(local[i] for i in t) for t in tmpl]
            self.cells[parent] = cells[0]
            for c in cells[1:]:
                idx = self.n_cells + len(new_cells)
                new_cells.append((c, E, m))
                cm.cells.append(idx)
        self._flush(qv, new_cells)

    def _flush(self, qv, new_cells):
        for x, anc, key in qv.payloads:
            self.coords.append(np.asarray(x, dtype=float))
            self.anc.append(anc)
            self.keys.append(key)
        for c, E, m in new_cells:
            self.cells.append(c)
            self.cell_elem.append(E)
            self.cell_mat.append(m)

    # -- templated subdivision ---------------------------------------------
    def templated_subdivision(self, G, intersected=None):
        bg = self.bg
        dim = self.dim
        h = bg.h
        P = G.compute_proximity(self.coords_array(), h)
        n_old = len(P)
        if intersected is None:
            intersected = G.intersected_elements(bg)
        gidx = self.n_geometries
        qv = EntityQueue(self.n_verts)
        new_cells = []
        coords, anc, keys = self.coords, self.anc, self.keys

        def key(v):
            return keys[v] if v < n_old else qv.pending(v)[2]

        def prox(v):
            return int(P[v]) if v < n_old else ZERO

        for E in range(bg.n_elems):
            cm = self.children[E]
            if not intersected[E] or len(cm.cells) == 1:
                if intersected[E] and len(cm.cells) == 1 and not self.regular_flags[E]:
                    raise InvariantError(f"element {E} intersected by geometry {gidx} but not subdivided")
                Pe = vote_proximity([P[v] for v in bg.elem_verts[E]])
                for c in cm.cells:
                    self.cell_mat[c] = assign_material(self.cell_mat[c], Pe)
                continue
            for c in list(cm.cells):
                cell = self.cells[c]
                ps = [int(P[v]) for v in cell]
                m_prev = self.cell_mat[c]
                newv = {}
                for i, j in refcells.ENTITIES[refcells.SIMPLEX[dim]][1]:
                    if ps[i] * ps[j] >= 0:
                        continue
                    a, b = cell[i], cell[j]
                    ek = (a, b) if a < b else (b, a)
                    lo, hi = (a, b) if keys[a] < keys[b] else (b, a)

                    def make(lo=lo, hi=hi):
                        t = G.find_interface(coords[lo], coords[hi], h)
                        x = coords[lo] + t * (coords[hi] - coords[lo])
                        return (x, find_common_ancestor(bg, E, anc[lo], anc[hi]),
                                (gidx + 1, keys[lo], keys[hi]), t, lo, hi)

                    v, _ = qv.request(ek, make)
                    pay = qv.pending(v)
                    t, plo, phi_ = pay[3], pay[4], pay[5]
                    if v not in cm.xi:
                        cm.add_vertex(v, cm.xi[plo] + t * (cm.xi[phi_] - cm.xi[plo]))
                    newv[ek] = v
                if not newv:
                    self.cell_mat[c] = assign_material(m_prev, vote_proximity(ps))
                    continue
                kids = template_children(cell, ps, newv, key)
                kids = [_orient(k, cm.xi.__getitem__) for k in kids]
                mats = [assign_material(m_prev, vote_proximity([prox(v) for v in k])) for k in kids]
                for k, m in zip(kids[:-1], mats[:-1]):
                    idx = self.n_cells + len(new_cells)
                    new_cells.append((k, E, m))
                    cm.cells.append(idx)
                self.cells[c] = kids[-1]
                self.cell_mat[c] = mats[-1]
        # strip helper fields before flushing
        qv.payloads = [p[:3] for p in qv.payloads]
        self._flush(qv, new_cells)
        self.n_geometries += 1

    def apply_material_map(self, mmap):
        from .geometry import apply_material_map

        self.raw_mat = list(self.cell_mat)
        self.cell_mat = [apply_material_map(mmap, m) for m in self.raw_mat]
        self.final = True


def tessellate(bg, geometries, material_map=None):
    """Regular subdivision followed by one templated pass per geometry."""
    fg = ForegroundMesh(bg)
    flags = [G.intersected_elements(bg) for G in geometries]
    union = np.zeros(bg.n_elems, dtype=bool)
    for f in flags:
        union |= f
    fg.regular_subdivision(geometries, union)
    for G, f in zip(geometries, flags):
        fg.templated_subdivision(G, f)
    if material_map is not None:
        fg.apply_material_map(material_map)
    else:
        fg.raw_mat = list(fg.cell_mat)
        fg.final = True
    return fg
