"""Brute-force reference computations that share no code with the pipeline's topology,
plus the seeded random configuration generator they are checked on."""
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from cutprep.bg_mesh import build_cartesian_mesh
from cutprep.geometry import MaterialMap, Plane, Sphere


def components(n, edges):
    if n == 0:
        return np.zeros(0, dtype=int)
    e = np.array(list(edges) or [(0, 0)], dtype=int).reshape(-1, 2)
    A = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    return connected_components(A, directed=False)[1]


def oracle_subphases(fg):
    """Per element: same-material cells joined when they share dim vertices (a facet)."""
    dim = fg.dim
    out = []
    for cm in fg.children:
        cells = sorted(cm.cells)
        edges = []
        for i, a in enumerate(cells):
            for j in range(i + 1, len(cells)):
                b = cells[j]
                if fg.cell_mat[a] == fg.cell_mat[b] and len(set(fg.cells[a]) & set(fg.cells[b])) >= dim:
                    edges.append((i, j))
        lab = components(len(cells), edges)
        groups = {}
        for c, k in zip(cells, lab):
            groups.setdefault(k, set()).add(c)
        out.extend(frozenset(g) for g in groups.values())
    return set(out)


def _boundary_intervals_2d(fg, c, bg, E):
    """Physical intervals of cell c's edges lying on each side of element E: {(axis, side): [(lo, hi)]}."""
    verts = fg.cells[c]
    xi = np.array([fg.children[E].xi[v] for v in verts])
    x = bg.param_to_phys(E, xi)
    out = {}
    n = len(verts)
    for k in range(n):
        a, b = k, (k + 1) % n
        for axis in range(2):
            for side in (-1.0, 1.0):
                if abs(xi[a, axis] - side) < 1e-12 and abs(xi[b, axis] - side) < 1e-12:
                    t = 1 - axis
                    lo, hi = sorted((x[a, t], x[b, t]))
                    out.setdefault((axis, side), []).append((lo, hi))
    return out


def oracle_levels_2d(fg, tol=1e-12):
    """Enrichment-level count per background basis from geometric facet overlaps (2D only)."""
    bg = fg.bg
    subs = sorted(oracle_subphases(fg), key=lambda g: min(g))
    of_cell = {}
    for i, g in enumerate(subs):
        for c in g:
            of_cell[c] = i
    elem_of = [fg.cell_elem[min(g)] for g in subs]
    mat = [fg.cell_mat[min(g)] for g in subs]
    iv = {}
    for cm in fg.children:
        for c in cm.cells:
            iv[c] = _boundary_intervals_2d(fg, c, bg, cm.E)
    # cross-element links between neighbouring elements through a shared facet
    link = set()
    for F, E1, E2 in bg.interior_facets():
        d = bg.elem_grid[E2] - bg.elem_grid[E1]
        axis = int(np.flatnonzero(d)[0])
        s1 = 1.0 if d[axis] > 0 else -1.0
        for c1 in fg.children[E1].cells:
            for (lo1, hi1) in iv[c1].get((axis, s1), []):
                for c2 in fg.children[E2].cells:
                    for (lo2, hi2) in iv[c2].get((axis, -s1), []):
                        if min(hi1, hi2) - max(lo1, lo2) > tol * float(bg.h.max()):
                            a, b = of_cell[c1], of_cell[c2]
                            if mat[a] == mat[b]:
                                link.add((min(a, b), max(a, b)))
    counts = np.zeros(bg.n_basis, dtype=int)
    for B in range(bg.n_basis):
        sup = set(bg.basis_supports[B])
        nodes = [i for i in range(len(subs)) if elem_of[i] in sup]
        pos = {s: k for k, s in enumerate(nodes)}
        edges = [(pos[a], pos[b]) for a, b in link if a in pos and b in pos]
        lab = components(len(nodes), edges)
        counts[B] = len(set(lab.tolist()))
    return counts, subs


def random_config(rng):
    """Random circles/planes with a random material map on a small 2D mesh."""
    n = int(rng.integers(4, 8))
    p = int(rng.integers(1, 3))
    n = max(n, p + 1)
    geoms = []
    for _ in range(int(rng.integers(1, 4))):
        if rng.random() < 0.6:
            geoms.append(Sphere(rng.uniform(0.2, 1.8, 2), rng.uniform(0.15, 0.9)))
        else:
            ang = rng.uniform(0, 2 * np.pi)
            geoms.append(Plane([np.cos(ang), np.sin(ang)], rng.uniform(-0.5, 2.0)))
    k = len(geoms)
    n_mat = int(rng.integers(1, 2 ** k + 1))
    table = {m: int(rng.integers(0, n_mat)) for m in range(2 ** k)}
    return build_cartesian_mesh(2, (n, n), 0.0, 2.0 / n, p), geoms, MaterialMap(k, table)
