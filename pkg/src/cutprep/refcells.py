"""Local numbering convention for Quad4, Hex8, Tri3 and Tet4 cells.

Every table here is global: background and foreground code both index
entities through these ordinals.  Facets are listed with outward orientation
for positively oriented cells (counter-clockwise edges in 2D, outward
right-hand normals in 3D).

Quad4 vertices (reference coordinates)::

    3 (-1, 1) ---- 2 (1, 1)
    |                 |
    0 (-1,-1) ---- 1 (1,-1)

Hex8: vertices 0-3 as the quad at z=-1, vertices 4-7 above them at z=+1.
Edges: bottom ring, top ring, then verticals; so edge 11 joins vertices 3 and 7.
"""
import numpy as np

QUAD4, HEX8, TRI3, TET4 = "quad4", "hex8", "tri3", "tet4"

VERTS = {
    QUAD4: np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float),
    HEX8: np.array(
        [[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
         [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]], dtype=float),
    TRI3: np.array([[0, 0], [1, 0], [0, 1]], dtype=float),
    TET4: np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float),
}

# rank -> tuple of local-vertex tuples, in ordinal order
ENTITIES = {
    QUAD4: {
        0: ((0,), (1,), (2,), (3,)),
        1: ((0, 1), (1, 2), (2, 3), (3, 0)),
    },
    HEX8: {
        0: tuple((i,) for i in range(8)),
        1: ((0, 1), (1, 2), (2, 3), (3, 0),
            (4, 5), (5, 6), (6, 7), (7, 4),
            (0, 4), (1, 5), (2, 6), (3, 7)),
        2: ((0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6),
            (3, 0, 4, 7), (0, 3, 2, 1), (4, 5, 6, 7)),
    },
    TRI3: {
        0: ((0,), (1,), (2,)),
        1: ((0, 1), (1, 2), (2, 0)),
    },
    TET4: {
        0: ((0,), (1,), (2,), (3,)),
        1: ((0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (2, 3)),
        2: ((0, 1, 3), (1, 2, 3), (0, 3, 2), (0, 2, 1)),
    },
}

DIM = {QUAD4: 2, HEX8: 3, TRI3: 2, TET4: 3}
NVERT = {QUAD4: 4, HEX8: 8, TRI3: 3, TET4: 4}
BOX = {2: QUAD4, 3: HEX8}
SIMPLEX = {2: TRI3, 3: TET4}
VTK_ID = {QUAD4: 9, HEX8: 12, TRI3: 5, TET4: 10}
REF_VOLUME = {QUAD4: 4.0, HEX8: 8.0, TRI3: 0.5, TET4: 1.0 / 6.0}


def cell_type(nverts, dim):
    if dim == 2:
        return {4: QUAD4, 3: TRI3}[nverts]
    return {8: HEX8, 4: TET4}[nverts]


def facets(ctype):
    return ENTITIES[ctype][DIM[ctype] - 1]


def box_facet_axis(ordinal, dim):
    """(axis, side) of a box facet ordinal; side is -1 or +1."""
    if dim == 2:
        return ((1, -1), (0, 1), (1, 1), (0, -1))[ordinal]
    return ((1, -1), (0, 1), (1, 1), (0, -1), (2, -1), (2, 1))[ordinal]


def simplex_signed_volume(xs):
    """Signed measure of a simplex given vertex coordinates (n+1, n)."""
    xs = np.asarray(xs, dtype=float)
    m = xs[1:] - xs[0]
    return np.linalg.det(m) / (2.0 if xs.shape[1] == 2 else 6.0)
