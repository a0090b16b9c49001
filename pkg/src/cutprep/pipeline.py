"""Single-rank driver: tessellate, build topology, enrich, create clusters."""
from dataclasses import dataclass, field
import time

import numpy as np

from .clusters import ClusterSets, create_bulk_clusters, create_side_clusters, generate_ghost_clusters
from .enrichment import unzip_interpolation_mesh
from .errors import CutprepError
from .geometry import MaterialMap
from .tessellation import ForegroundMesh
from .topology import compute_bg_facet_descendants, facet_connectivity, generate_subphase_graphs, generate_subphases

STAGES = (
    "initialize",
    "regular_subdivision",
    "templated_subdivision",
    "communicate_vertex_cell_ids",
    "material_map",
    "facet_connectivity",
    "bg_facet_descendants",
    "subphases",
    "subphase_graphs",
    "communicate_subphase_ids",
    "unzip",
    "communicate_enriched_ids",
    "bulk_clusters",
    "side_clusters",
    "ghost_clusters",
)


@dataclass
class PipelineResult:
    bg: object
    fg: object
    Xi: list
    table: list
    clusters: object
    materials: list
    void: tuple
    timings: dict = field(default_factory=dict)
    rank: int = 0
    cell_ids: list = None
    sub_ids: list = None
    enr_ids: list = None
    aura_ien: dict = field(default_factory=dict)  # aura subphase -> owner's enriched-ID IEN

    def ien_ids(self, s):
        """Enriched-ID IEN of the unzipped element of subphase s."""
        if s in self.aura_ien:
            return self.aura_ien[s]
        return [int(self.enr_ids[l]) for l in self.Xi[s].ien]


class StageError(CutprepError):
    def __init__(self, stage, rank, err):
        super().__init__(f"stage '{stage}' on rank {rank}: {err}")
        self.stage = stage
        self.rank = rank
        self.original = err
        self.exit_code = getattr(err, "exit_code", 1)


class _StageTimer:
    def __init__(self, timings, name, rank, clock=time.perf_counter):
        self.timings, self.name, self.rank, self.clock = timings, name, rank, clock

    def __enter__(self):
        self.t0 = self.clock()

    def __exit__(self, et, ev, tb):
        self.timings[self.name] = self.timings.get(self.name, 0.0) + self.clock() - self.t0
        if ev is not None and not isinstance(ev, StageError):
            raise StageError(self.name, self.rank, ev) from ev
        return False


def run_serial(bg, geometries, material_map=None, void=(), enrich=True, quad_order=None, comm=None,
               clock=time.perf_counter):
    """Run every stage on one (possibly rank-local) background mesh.

    ``comm`` is an optional hook object with methods ``vertex_cell_ids``,
    ``subphase_ids``, ``enriched_ids`` and ``aura_iens`` used for parallel runs; without it
    ids are 1..n in local order.  ``clock`` times the stages.
    """
    timings = {}
    rank = bg.rank

    def stage(name):
        return _StageTimer(timings, name, rank, clock)

    mmap = material_map or MaterialMap(len(geometries))
    with stage("initialize"):
        fg = ForegroundMesh(bg)
        flags = [G.intersected_elements(bg) for G in geometries]
        union = np.zeros(bg.n_elems, dtype=bool)
        for f in flags:
            union |= f
    with stage("regular_subdivision"):
        fg.regular_subdivision(geometries, union)
    with stage("templated_subdivision"):
        for G, f in zip(geometries, flags):
            fg.templated_subdivision(G, f)
    with stage("communicate_vertex_cell_ids"):
        if comm:
            cell_ids = comm.vertex_cell_ids(fg)
        else:
            cell_ids = list(range(1, fg.n_cells + 1))
            fg.vertex_ids = list(range(1, fg.n_verts + 1))
    with stage("material_map"):
        fg.apply_material_map(mmap)
    with stage("facet_connectivity"):
        fconn = facet_connectivity(fg)
        fg.fconn = fconn
    with stage("bg_facet_descendants"):
        DF = compute_bg_facet_descendants(fg, fconn)
        fg.DF = DF
    with stage("subphases"):
        generate_subphases(fg, fconn)
    with stage("subphase_graphs"):
        generate_subphase_graphs(fg, DF, fconn)
    with stage("communicate_subphase_ids"):
        sub_ids = comm.subphase_ids(fg, cell_ids) if comm else list(range(1, len(fg.subphases) + 1))
        for sp, i in zip(fg.subphases, sub_ids):
            sp.id = i
    with stage("unzip"):
        Xi, table = unzip_interpolation_mesh(bg, fg, enrich=enrich)
    with stage("communicate_enriched_ids"):
        enr_ids = comm.enriched_ids(bg, fg, table, sub_ids) if comm else list(range(1, len(table) + 1))
        for eb, i in zip(table, enr_ids):
            eb.id = i
    n_m = max(mmap.n_materials, 1)
    res = PipelineResult(bg, fg, Xi, table, None, mmap.materials, tuple(void), timings, rank,
                         cell_ids, sub_ids, enr_ids)
    cs = ClusterSets(n_materials=n_m)
    with stage("bulk_clusters"):
        cs.bulk = create_bulk_clusters(fg, order=quad_order)
    with stage("side_clusters"):
        cs.side, cs.interface = create_side_clusters(fg, sub_ids, void=void, n_materials=n_m, order=quad_order)
    with stage("ghost_clusters"):
        cs.ghost = generate_ghost_clusters(fg, sub_ids, void=void)
        res.clusters = cs
        if comm:
            comm.aura_iens(res)
    return res
