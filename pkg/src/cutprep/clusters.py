"""Bulk, side and ghost integration clusters."""
from dataclasses import dataclass, field

import numpy as np

from . import refcells
from .errors import InvariantError
from .quadrature import facet_rule, map_simplex, simplex_rule, tensor_gauss


@dataclass
class Cluster:
    kind: str           # "bulk" | "side" | "ghost"
    bucket: int         # material (bulk, ghost) or material-pair key (side)
    s: int              # subphase index (rank local)
    E: int              # bg element (rank local)
    u: int
    xi: np.ndarray      # (npts, dim) parametric
    w: np.ndarray       # (npts,) parametric measure
    n: np.ndarray = None  # (npts, dim) physical unit normals
    facets: list = field(default_factory=list)

    @property
    def npts(self):
        return len(self.w)


@dataclass
class ClusterPair:
    kind: str  # "interface" | "ghost"
    leader: Cluster
    follower: Cluster


@dataclass
class ClusterSets:
    bulk: dict = field(default_factory=dict)       # material -> [Cluster]
    side: dict = field(default_factory=dict)       # k -> [Cluster]
    interface: dict = field(default_factory=dict)  # k -> [ClusterPair]
    ghost: dict = field(default_factory=dict)      # material -> [ClusterPair]
    n_materials: int = 1

    def all_clusters(self):
        for d in (self.bulk, self.side):
            for lst in d.values():
                yield from lst
        for lst in self.ghost.values():
            for pr in lst:
                yield pr.leader
                yield pr.follower

    def counts(self):
        return {
            "bulk": sum(len(v) for v in self.bulk.values()),
            "side": sum(len(v) for v in self.side.values()),
            "interface_pairs": sum(len(v) for v in self.interface.values()),
            "ghost_pairs": sum(len(v) for v in self.ghost.values()),
        }


def pair_key(m_i, m_j, n_m):
    return m_i * n_m + m_j + 1


def map_param_gauss_points(fg, c, degree):
    """Quadrature of fg cell c in its bg element's parametric space."""
    cm = fg.children[fg.cell_elem[c]]
    verts = fg.cells[c]
    dim = fg.dim
    if len(verts) == 2 ** dim:  # untouched box cell covers the reference element
        return tensor_gauss(degree // 2 + 1, dim)
    xs = np.array([cm.xi[v] for v in verts])
    x, w = map_simplex(simplex_rule(dim, degree), xs)
    if np.any(w <= 0):
        raise InvariantError(f"degenerate foreground cell {c}")
    return x, w


def physical_facet_weights(bg, w, n):
    """Convert parametric facet weights to physical ones given physical normals."""
    D = bg.h / 2.0
    return w * np.prod(D) / np.linalg.norm(n * D, axis=-1)


def create_bulk_clusters(fg, owned=None, order=None):
    bg = fg.bg
    order = 2 * bg.degree if order is None else order
    owned = bg.elem_owned if owned is None else owned
    out = {}
    for sp in fg.subphases:
        if not owned[sp.E]:
            continue
        xs, ws = [], []
        for c in sp.cells:
            x, w = map_param_gauss_points(fg, c, order)
            xs.append(x)
            ws.append(w)
        cl = Cluster("bulk", sp.material, sp.index, sp.E, sp.u, np.vstack(xs), np.concatenate(ws))
        out.setdefault(sp.material, []).append(cl)
    return out


def _outward_normal(coords_seq):
    xs = np.asarray(coords_seq)
    if xs.shape[1] == 2:
        t = xs[1] - xs[0]
        n = np.array([t[1], -t[0]])
    else:
        n = np.cross(xs[1] - xs[0], xs[2] - xs[0])
    return n / np.linalg.norm(n)


def find_connecting_facets(fg, s1, s2):
    """(fg facet, leader cell, ordinal) for facets joining subphases s1 and s2, ascending facet id."""
    fconn = fg.fconn
    cs = fg.cell_subphase
    out = []
    for c in fg.subphases[s1].cells:
        for o, f in enumerate(fconn.CtE[c]):
            for c2 in fconn.EtC[f]:
                if c2 != c and cs[c2] == s2:
                    out.append((f, c, o, c2))
    out.sort()
    return out


def create_side_clusters(fg, sub_ids=None, owned=None, void=(), n_materials=None, order=None):
    bg = fg.bg
    dim = fg.dim
    order = 2 * bg.degree if order is None else order
    owned = bg.elem_owned if owned is None else owned
    sub_ids = sub_ids if sub_ids is not None else [s + 1 for s in range(len(fg.subphases))]
    n_m = n_materials if n_materials is not None else max(sp.material for sp in fg.subphases) + 1
    void = set(void)
    rule = facet_rule(dim, order)
    side, inter = {}, {}
    GI = fg.graphs.G_I
    sps = fg.subphases
    for s1 in range(len(sps)):
        E1 = sps[s1].E
        if not owned[E1]:
            continue
        for s2 in GI[s1]:
            if sub_ids[s1] <= sub_ids[s2]:
                continue
            E2 = sps[s2].E
            facets = find_connecting_facets(fg, s1, s2)
            if not facets:
                raise InvariantError(f"interface pair ({s1},{s2}) has no connecting facet")
            cm1, cm2 = fg.children[E1], fg.children[E2]
            xi1, xi2, w1, w2, nrm, fids = [], [], [], [], [], []
            for f, c1, o1, c2 in facets:
                ct = fg.cell_type(c1)
                seq = [fg.cells[c1][i] for i in refcells.facets(ct)[o1]]
                a, wa = map_simplex(rule, np.array([cm1.xi[v] for v in seq]))
                b, wb = map_simplex(rule, np.array([cm2.xi[v] for v in seq]))
                n = _outward_normal([fg.coords[v] for v in seq])
                xi1.append(a)
                xi2.append(b)
                w1.append(wa)
                w2.append(wb)
                nrm.append(np.tile(n, (len(wa), 1)))
                fids.append(f)
            nrm = np.vstack(nrm)
            m_i, m_j = sps[s1].material, sps[s2].material
            k1, k2 = pair_key(m_i, m_j, n_m), pair_key(m_j, m_i, n_m)
            D1 = Cluster("side", k1, s1, E1, sps[s1].u, np.vstack(xi1), np.concatenate(w1), nrm, fids)
            D2 = Cluster("side", k2, s2, E2, sps[s2].u, np.vstack(xi2), np.concatenate(w2), -nrm, fids)
            if m_i in void and m_j in void:
                continue
            if m_j in void:
                side.setdefault(k1, []).append(D1)
                continue
            if m_i in void:
                side.setdefault(k2, []).append(D2)
                continue
            side.setdefault(k1, []).append(D1)
            side.setdefault(k2, []).append(D2)
            inter.setdefault(k1, []).append(ClusterPair("interface", D1, D2))
            inter.setdefault(k2, []).append(ClusterPair("interface", D2, D1))
    return side, inter


def generate_ghost_clusters(fg, sub_ids=None, owned=None, void=(), n_points=None):
    bg = fg.bg
    dim = bg.dim
    owned = bg.elem_owned if owned is None else owned
    sub_ids = sub_ids if sub_ids is not None else [s + 1 for s in range(len(fg.subphases))]
    npt = bg.degree + 1 if n_points is None else n_points
    pts, wts = tensor_gauss(npt, dim - 1)
    bconn = bg.entity_conn[dim - 1]
    n_u = [len(x) for x in fg.elem_subphases]
    GS = fg.graphs.G_S
    sps = fg.subphases
    out = {}
    for s1 in range(len(sps)):
        E1 = sps[s1].E
        if not owned[E1] or sps[s1].material in void:
            continue
        for s2 in GS[s1]:
            E2 = sps[s2].E
            if not (n_u[E1] > 1 or n_u[E2] > 1) or sub_ids[s1] <= sub_ids[s2]:
                continue
            F = set(bconn.CtE[E1]) & set(bconn.CtE[E2])
            if len(F) != 1:
                raise InvariantError(f"no unique bg facet between elements {E1} and {E2}")
            F = F.pop()
            o1 = bconn.CtE[E1].index(F)
            axis, side1 = refcells.box_facet_axis(o1, dim)
            tang = [a for a in range(dim) if a != axis]
            xi1 = np.empty((len(wts), dim))
            xi1[:, tang] = pts
            xi1[:, axis] = side1
            xi2 = xi1.copy()
            xi2[:, axis] = -side1
            n = np.zeros((len(wts), dim))
            n[:, axis] = side1
            m = sps[s1].material
            D1 = Cluster("ghost", m, s1, E1, sps[s1].u, xi1, wts.copy(), n, [F])
            D2 = Cluster("ghost", m, s2, E2, sps[s2].u, xi2, wts.copy(), -n, [F])
            out.setdefault(m, []).append(ClusterPair("ghost", D1, D2))
    return out


def create_clusters(fg, sub_ids=None, owned=None, void=(), n_materials=None, order=None):
    cs = ClusterSets()
    cs.bulk = create_bulk_clusters(fg, owned, order)
    cs.side, cs.interface = create_side_clusters(fg, sub_ids, owned, void, n_materials, order)
    cs.ghost = generate_ghost_clusters(fg, sub_ids, owned, void)
    cs.n_materials = n_materials if n_materials is not None else max(sp.material for sp in fg.subphases) + 1
    return cs
