"""Facet descendants, subphases and subphase graphs of a foreground mesh."""
from collections import deque
from dataclasses import dataclass, field

from .bg_mesh import compute_entity_connectivity
from .errors import InvariantError


@dataclass
class Subphase:
    index: int
    E: int
    u: int
    material: int
    cells: list
    id: int = 0


@dataclass
class SubphaseGraphs:
    G_S: list = field(default_factory=list)  # sorted neighbor lists
    G_I: list = field(default_factory=list)


def flood_fill(adjacency, labels):
    """Connected components over equal-label edges.

    Returns a list of component ids (1-based), numbered in order of each
    component's smallest node index.
    """
    n = len(adjacency)
    comp = [0] * n
    nxt = 1
    for start in range(n):
        if comp[start]:
            continue
        comp[start] = nxt
        lab = labels[start]
        dq = deque([start])
        while dq:
            a = dq.popleft()
            for b in adjacency[a]:
                if not comp[b] and labels[b] == lab:
                    comp[b] = nxt
                    dq.append(b)
        nxt += 1
    return comp


def facet_connectivity(fg):
    """Rank dim-1 entity connectivity of the foreground cells."""
    return compute_entity_connectivity(fg.cells, fg.dim - 1, dim=fg.dim)


def compute_bg_facet_descendants(fg, fconn):
    """Map bg facet index -> fg facets lying on it (interior bg facets only)."""
    bg = fg.bg
    dim = bg.dim
    bconn = bg.entity_conn[dim - 1]
    cache = {}

    def cells_of(anc):
        s = cache.get(anc)
        if s is None:
            s = frozenset(bg.get_cells_on_entity(*anc))
            cache[anc] = s
        return s

    DF = {}
    for f, verts in enumerate(fconn.entity_verts):
        common = None
        for v in verts:
            s = cells_of(fg.anc[v])
            common = s if common is None else common & s
            if len(common) < 2:
                break
        if len(common) != 2:
            continue
        E1, E2 = sorted(common)
        F = set(bconn.CtE[E1]) & set(bconn.CtE[E2])
        if len(F) != 1:
            raise InvariantError(f"elements {E1},{E2} share {len(F)} facets")
        DF.setdefault(F.pop(), []).append(f)
    return DF


def generate_subphases(fg, fconn):
    """Per-element flood fill over the child-mesh dual graph (material-equality edges)."""
    if not fg.final:
        raise InvariantError("material map must be applied before building subphases")
    EtC, CtE = fconn.EtC, fconn.CtE
    mats = fg.cell_mat
    subphases = []
    cell_s = [-1] * fg.n_cells
    seeds = []
    for E, cm in enumerate(fg.children):
        cells = sorted(cm.cells)
        pos = {c: i for i, c in enumerate(cells)}
        adj = [[] for _ in cells]
        for i, c in enumerate(cells):
            for f in CtE[c]:
                for c2 in EtC[f]:
                    if c2 != c and c2 in pos:
                        adj[i].append(pos[c2])
        comp = flood_fill(adj, [mats[c] for c in cells])
        base = len(subphases)
        groups = {}
        for i, k in enumerate(comp):
            groups.setdefault(k, []).append(cells[i])
        for k in sorted(groups):
            grp = groups[k]
            s = len(subphases)
            subphases.append(Subphase(s, E, k - 1, mats[grp[0]], grp))
            for c in grp:
                cell_s[c] = s
        for i, nb in enumerate(adj):
            for j in nb:
                if comp[i] != comp[j]:
                    seeds.append((base + comp[i] - 1, base + comp[j] - 1))
    fg.subphases = subphases
    fg.cell_subphase = cell_s
    fg.elem_subphases = [[] for _ in fg.children]
    for sp in subphases:
        fg.elem_subphases[sp.E].append(sp.index)
    fg._gi_seeds = seeds
    return subphases


def generate_subphase_graphs(fg, DF, fconn):
    bg = fg.bg
    n = len(fg.subphases)
    GS = [set() for _ in range(n)]
    GI = [set() for _ in range(n)]
    for a, b in fg._gi_seeds:
        GI[a].add(b)
        GI[b].add(a)
    cs = fg.cell_subphase
    sp = fg.subphases
    EtC = fconn.EtC
    for F, E1, E2 in bg.interior_facets():
        facets = DF.get(F, [])
        if len(fg.children[E1].cells) == 1 or len(fg.children[E2].cells) == 1:
            side = {E1: set(), E2: set()}
            for f in facets:
                for c in EtC[f]:
                    E = fg.cell_elem[c]
                    if E in side:
                        side[E].add(cs[c])
            if len(side[E1]) != 1 or len(side[E2]) != 1:
                raise InvariantError(
                    f"bg facet {F}: expected one subphase per side next to an uncut element, "
                    f"got {len(side[E1])} and {len(side[E2])}")
            s1, s2 = side[E1].pop(), side[E2].pop()
            if sp[s1].material != sp[s2].material:
                raise InvariantError(f"bg facet {F}: material jump next to an uncut element")
            GS[s1].add(s2)
            GS[s2].add(s1)
            continue
        for f in facets:
            cells = EtC[f]
            if len(cells) != 2:
                continue
            s1, s2 = cs[cells[0]], cs[cells[1]]
            if sp[s1].E == sp[s2].E:
                continue
            G = GS if sp[s1].material == sp[s2].material else GI
            G[s1].add(s2)
            G[s2].add(s1)
    graphs = SubphaseGraphs([sorted(x) for x in GS], [sorted(x) for x in GI])
    fg.graphs = graphs
    return graphs


def export_graph(adj, path, ids=None):
    """Adjacency list text, one line per node: ``id: n1,n2,...``."""
    ids = ids if ids is not None else list(range(len(adj)))
    with open(path, "w") as f:
        for s, nb in enumerate(adj):
            f.write(f"{ids[s]}: " + ",".join(str(ids[t]) for t in nb) + "\n")


def build_topology(fg):
    """Facet connectivity, descendants, subphases and graphs in pipeline order."""
    fconn = facet_connectivity(fg)
    DF = compute_bg_facet_descendants(fg, fconn)
    generate_subphases(fg, fconn)
    generate_subphase_graphs(fg, DF, fconn)
    fg.fconn = fconn
    fg.DF = DF
    return fconn, DF
