"""Exporters: legacy VTK foreground mesh, cluster JSON lines, enriched table, graphs, stats.

All exporters accept a list of per-rank PipelineResults and merge them by
global IDs so serial and parallel runs produce comparable files.
"""
import json

import numpy as np

from . import refcells
from .errors import InvariantError


def _g(x):
    return format(float(x), ".17g")


def _num_list(a):
    return "[" + ",".join(_g(v) for v in np.ravel(a)) + "]"


# -- mesh ----------------------------------------------------------------------------
def owned_leaf_cells(res):
    fg, bg = res.fg, res.bg
    return [c for cm in fg.children if bg.elem_owned[cm.E] for c in sorted(cm.cells)]


def collect_mesh(results):
    """Merged (points, cells, cell types, material, subphase id, bg element) arrays."""
    pts = {}
    cells = []
    for res in results:
        fg, bg = res.fg, res.bg
        vids = fg.vertex_ids
        for c in owned_leaf_cells(res):
            conn = []
            for v in fg.cells[c]:
                gid = int(vids[v])
                if gid <= 0:
                    raise InvariantError(f"vertex {v} of owned cell {c} has no global id")
                x = np.asarray(fg.coords[v], dtype=float)
                if gid in pts and not np.allclose(pts[gid], x, rtol=0, atol=1e-12 * float(np.max(bg.h))):
                    raise InvariantError(f"vertex id {gid} has different coordinates on different ranks")
                pts.setdefault(gid, x)
                conn.append(gid)
            s = fg.cell_subphase[c]
            cells.append((int(res.cell_ids[c]), conn, refcells.VTK_ID[fg.cell_type(c)], int(fg.cell_mat[c]),
                          int(res.sub_ids[s]), int(bg.elem_global[fg.cell_elem[c]])))
    cells.sort(key=lambda t: t[0])
    gids = sorted(pts)
    row = {g: i for i, g in enumerate(gids)}
    X = np.array([pts[g] for g in gids]).reshape(-1, results[0].bg.dim)
    return (X, [[row[g] for g in t[1]] for t in cells], [t[2] for t in cells],
            [t[3] for t in cells], [t[4] for t in cells], [t[5] for t in cells])


def write_vtk(results, path, title="cutprep foreground mesh"):
    X, conn, types, mat, sub, elem = collect_mesh(results)
    if X.shape[1] == 2:
        X = np.c_[X, np.zeros(len(X))]
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(X)} double"]
    lines += [" ".join(_g(v) for v in x) for x in X]
    size = sum(len(c) + 1 for c in conn)
    lines.append(f"CELLS {len(conn)} {size}")
    lines += [" ".join(str(v) for v in [len(c)] + c) for c in conn]
    lines.append(f"CELL_TYPES {len(conn)}")
    lines += [str(t) for t in types]
    lines.append(f"CELL_DATA {len(conn)}")
    for name, data in (("material", mat), ("subphase", sub), ("bg_element", elem)):
        lines += [f"SCALARS {name} int 1", "LOOKUP_TABLE default"] + [str(v) for v in data]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return len(X), len(conn)


def read_vtk(path):
    """Minimal reader for files written by ``write_vtk``."""
    tok = open(path).read().split("\n")
    i = 0
    out = {"cell_data": {}}
    while i < len(tok):
        line = tok[i].strip()
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            out["points"] = np.array([[float(v) for v in tok[i + 1 + k].split()] for k in range(n)])
            i += n
        elif line.startswith("CELLS"):
            n = int(line.split()[1])
            out["cells"] = [[int(v) for v in tok[i + 1 + k].split()[1:]] for k in range(n)]
            i += n
        elif line.startswith("CELL_TYPES"):
            n = int(line.split()[1])
            out["types"] = [int(tok[i + 1 + k]) for k in range(n)]
            i += n
        elif line.startswith("SCALARS"):
            name = line.split()[1]
            n = len(out["cells"])
            out["cell_data"][name] = [int(tok[i + 2 + k]) for k in range(n)]
            i += n + 1
        i += 1
    return out


# -- clusters ------------------------------------------------------------------------
def _cluster_record(res, cl):
    bg = res.bg
    x = bg.param_to_phys(cl.E, cl.xi)
    rec = ('{"subphase":%d,"element":%d,"u":%d,"ien":%s,"xi":%s,"x":%s,"w":%s'
           % (res.sub_ids[cl.s], int(bg.elem_global[cl.E]), cl.u,
              json.dumps([int(i) for i in res.ien_ids(cl.s)], separators=(",", ":")),
              "[" + ",".join(_num_list(p) for p in cl.xi) + "]",
              "[" + ",".join(_num_list(p) for p in x) + "]", _num_list(cl.w)))
    if cl.n is not None:
        rec += ',"n":[' + ",".join(_num_list(p) for p in cl.n) + "]"
    return rec + "}"


def cluster_lines(results):
    """One JSON object per cluster or pair, sorted by (kind, bucket, subphase IDs)."""
    rows = []
    for res in results:
        cs = res.clusters
        for kind, groups in (("bulk", cs.bulk), ("side", cs.side)):
            for b, lst in groups.items():
                for cl in lst:
                    key = (kind, int(b), res.sub_ids[cl.s], 0)
                    rows.append((key, '{"kind":"%s","bucket":%d,"cluster":%s}' % (kind, b, _cluster_record(res, cl))))
        for kind, groups in (("interface", cs.interface), ("ghost", cs.ghost)):
            for b, lst in groups.items():
                for pr in lst:
                    key = (kind, int(b), res.sub_ids[pr.leader.s], res.sub_ids[pr.follower.s])
                    rows.append((key, '{"kind":"%s","bucket":%d,"leader":%s,"follower":%s}'
                                 % (kind, b, _cluster_record(res, pr.leader), _cluster_record(res, pr.follower))))
    rows.sort(key=lambda r: r[0])
    return [r[1] for r in rows]


def write_clusters(results, path):
    lines = cluster_lines(results)
    with open(path, "w") as f:
        for ln in lines:
            f.write(ln + "\n")
    return len(lines)


def read_clusters(path):
    with open(path) as f:
        return [json.loads(ln) for ln in f if ln.strip()]


# -- enriched table / graphs --------------------------------------------------------
def enriched_rows(results):
    """(id, global basis, level, owner, sorted subphase IDs of the level) per enriched basis.

    Each row is taken from the owning rank; other ranks only cross-check the basis.
    """
    rows, basis = {}, {}
    for res in results:
        for eb in res.table:
            i, B = int(eb.id), int(res.bg.basis_global[eb.B])
            if basis.setdefault(i, B) != B:
                raise InvariantError(f"enriched id {i} names different bases on different ranks")
            if int(eb.owner) == res.rank or i not in rows:
                rows[i] = (i, B, int(eb.eps), int(eb.owner),
                           tuple(sorted(int(res.sub_ids[s]) for s in eb.group)))
    return [rows[k] for k in sorted(rows)]


def write_enriched(results, path):
    rows = enriched_rows(results)
    with open(path, "w") as f:
        f.write("# id basis level owner subphases\n")
        for r in rows:
            f.write(f"{r[0]} {r[1]} {r[2]} {r[3]} {','.join(map(str, r[4]))}\n")
    return len(rows)


def graph_edges(results, which):
    """Undirected subphase-ID edges of G_S or G_I merged over ranks."""
    edges = set()
    for res in results:
        adj = getattr(res.fg.graphs, which)
        for s, nb in enumerate(adj):
            for t in nb:
                a, b = res.sub_ids[s], res.sub_ids[t]
                edges.add((min(a, b), max(a, b)))
    return sorted(edges)


def write_graphs(results, path):
    with open(path, "w") as f:
        for which in ("G_S", "G_I"):
            for a, b in graph_edges(results, which):
                f.write(f"{which} {a} {b}\n")


# -- stats ------------------------------------------------------------------------------
def run_stats(results, contexts=None):
    from .parallel import memory_proxy, mesh_overheads

    st = {
        "ranks": len(results),
        "fg_cells": sum(len(owned_leaf_cells(r)) for r in results),
        "subphases": len({r.sub_ids[sp.index] for r in results for sp in r.fg.subphases
                          if r.bg.elem_owned[sp.E]}),
        "enriched_bases": len(enriched_rows(results)),
        "memory_records": [memory_proxy(r) for r in results],
    }
    for kind in ("bulk", "side", "interface", "ghost"):
        st[f"{kind}_clusters"] = sum(len(v) for r in results for v in getattr(r.clusters, kind).values())
    if contexts is not None:
        st["lambda_loc"], st["lambda_glob"] = mesh_overheads(contexts)
    else:
        st["lambda_loc"] = st["lambda_glob"] = 1.0
    stage = {}
    for r in results:
        for k, v in r.timings.items():
            stage[k] = max(stage.get(k, 0.0), v)
    st["stage_times"] = stage
    return st


def format_stats(st):
    rows = [(k, st[k]) for k in ("ranks", "fg_cells", "subphases", "enriched_bases")]
    rows += [(f"{k}_clusters", st[f"{k}_clusters"]) for k in ("bulk", "side", "interface", "ghost")]
    rows += [("lambda_loc", f"{st['lambda_loc']:.6g}"), ("lambda_glob", f"{st['lambda_glob']:.6g}"),
             ("memory_records", " ".join(str(m) for m in st["memory_records"]))]
    lines = ["# memory column is a retained-record count per rank, not bytes"]
    lines += [f"{k:<20}{v}" for k, v in rows]
    lines.append(f"{'stage':<32}max_rank_seconds")
    for k, v in st["stage_times"].items():
        lines.append(f"  {k:<30}{v:.6f}")
    return "\n".join(lines) + "\n"
