"""Module invariant checks on a finished pipeline run; each raises InvariantError on failure."""
import numpy as np

from .. import refcells
from ..errors import InvariantError


def check_tessellation(fg, tol=1e-12):
    """Positive cell volumes and exact parametric volume per child mesh."""
    ref = refcells.REF_VOLUME[fg.bg.ctype]
    vols = np.array([fg.cell_param_volume(c) for c in range(fg.n_cells)])
    if np.any(vols <= 0):
        raise InvariantError(f"non-positive foreground cell volume in cells {np.flatnonzero(vols <= 0)[:10]}")
    for cm in fg.children:
        tot = vols[cm.cells].sum()
        if abs(tot - ref) > tol * ref * max(1, len(cm.cells)):
            raise InvariantError(f"child mesh of element {cm.E} covers volume {tot}, expected {ref}")


def check_clusters(res, tol=1e-12):
    """Bulk coverage, pair coincidence/antiparallel normals and interface pair counts."""
    bg, fg, cs = res.bg, res.fg, res.clusters
    h = float(np.max(bg.h))
    seen = {}
    for lst in cs.bulk.values():
        for cl in lst:
            seen[cl.s] = seen.get(cl.s, 0) + 1
            if np.any(cl.w <= 0) or np.any(np.abs(cl.xi) > 1 + 1e-12):
                raise InvariantError(f"bulk cluster of subphase {cl.s} has invalid points")
    for sp in fg.subphases:
        want = 1 if bg.elem_owned[sp.E] else 0
        if seen.get(sp.index, 0) != want:
            raise InvariantError(f"subphase {sp.index} appears in {seen.get(sp.index, 0)} bulk clusters")
    worst = 0.0
    for kind, groups in (("interface", cs.interface), ("ghost", cs.ghost)):
        for lst in groups.values():
            for pr in lst:
                a, b = pr.leader, pr.follower
                if a.npts != b.npts:
                    raise InvariantError(f"{kind} pair with unequal point counts")
                xa = bg.param_to_phys(a.E, a.xi)
                xb = bg.param_to_phys(b.E, b.xi)
                d = float(np.max(np.abs(xa - xb)))
                worst = max(worst, d)
                if d > tol * h:
                    raise InvariantError(f"{kind} pair points differ by {d} (subphases {a.s}, {b.s})")
                if not np.allclose(a.n, -b.n, rtol=0, atol=1e-12):
                    raise InvariantError(f"{kind} pair normals are not antiparallel")
                if not np.allclose(np.linalg.norm(a.n, axis=1), 1.0, atol=1e-12):
                    raise InvariantError(f"{kind} pair normals are not unit length")
    # every non-void G_I edge of an owned leader appears as two directed pairs
    void = set(res.void)
    GI = fg.graphs.G_I
    sub_ids = res.sub_ids
    expected = 0
    for s1 in range(len(fg.subphases)):
        if not bg.elem_owned[fg.subphases[s1].E]:
            continue
        for s2 in GI[s1]:
            if sub_ids[s1] > sub_ids[s2] and fg.subphases[s1].material not in void \
                    and fg.subphases[s2].material not in void:
                expected += 2
    got = sum(len(v) for v in cs.interface.values())
    if got != expected:
        raise InvariantError(f"expected {expected} directed interface pairs, found {got}")
    return worst


def independent_ghost_facets(res):
    """Bg facets that should carry ghost pairs, by direct scan over facet-adjacent elements."""
    bg, fg = res.bg, res.fg
    void = set(res.void)
    out = set()
    for F, E1, E2 in bg.interior_facets():
        if len(fg.elem_subphases[E1]) < 2 and len(fg.elem_subphases[E2]) < 2:
            continue
        if not (bg.elem_owned[E1] or bg.elem_owned[E2]):
            continue
        mats1 = {fg.subphases[s].material for s in fg.elem_subphases[E1]} - void
        mats2 = {fg.subphases[s].material for s in fg.elem_subphases[E2]} - void
        # a shared material may still be disconnected across F; check the graph
        for s in fg.elem_subphases[E1]:
            if fg.subphases[s].material in mats1 & mats2 and any(fg.subphases[t].E == E2 for t in fg.graphs.G_S[s]):
                out.add(F)
    return out


def check_ghost_completeness(res):
    got = set()
    for lst in res.clusters.ghost.values():
        for pr in lst:
            got.update(pr.leader.facets)
    want = independent_ghost_facets(res)
    if got != want:
        raise InvariantError(f"ghost facets differ from scan: missing {sorted(want - got)[:5]}, "
                             f"extra {sorted(got - want)[:5]}")


def check_enrichment(res, n_points=3, seed=0):
    from ..enrichment import enriched_partition_of_unity_check

    pts = [(cl.s, cl.xi[:n_points]) for lst in res.clusters.bulk.values() for cl in lst]
    rep = enriched_partition_of_unity_check(res.bg, res.fg, res.Xi, res.table, pts, seed)
    if rep["pu_max_error"] > 1e-12 or rep["psi_max_difference"] > 1e-12 or not rep["levels_disjoint"]:
        raise InvariantError(f"enrichment check failed: {rep}")
    return rep


def check_result(res, n_points=3):
    check_tessellation(res.fg)
    check_clusters(res)
    check_ghost_completeness(res)
    check_enrichment(res, n_points)
