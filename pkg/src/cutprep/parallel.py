"""Simulated distributed execution with owned blocks, aura and ID communication.

Ranks run as threads that talk only through an in-process transport with
per-(source, destination, tag) FIFO channels.  IDs of owned entities come
from prefix sums of per-rank owned counts; non-owned entities obtain the
owner's ID by sending identifying payloads and receiving answers.
"""
from collections import defaultdict
from dataclasses import dataclass, field
import itertools
import json
import threading
import time

import numpy as np

from .bg_mesh import BackgroundMesh
from .errors import ConfigError, CutprepError, InvariantError, ProtocolError
from .pipeline import StageError, run_serial

RECV_TIMEOUT = 120.0


# -- transport ---------------------------------------------------------------
class _Aborted(ProtocolError):
    pass


class InProcessTransport:
    """Mailbox shared by all simulated ranks.

    Messages are byte strings.  The log is kept per channel, so its sorted
    serialization does not depend on thread scheduling.
    """

    def __init__(self, n_ranks, timeout=RECV_TIMEOUT):
        self.n_ranks = n_ranks
        self.timeout = timeout
        self._boxes = defaultdict(list)
        self._cv = threading.Condition()
        self._log = defaultdict(list)
        self._error = None

    def send(self, src, dst, tag, data: bytes):
        if not 0 <= dst < self.n_ranks:
            raise ProtocolError(f"rank {src}: send to invalid rank {dst}")
        with self._cv:
            self._boxes[(src, dst, tag)].append(data)
            self._log[(src, dst, tag)].append(data)
            self._cv.notify_all()

    def recv(self, dst, src, tag):
        key = (src, dst, tag)
        deadline = time.monotonic() + self.timeout
        with self._cv:
            while not self._boxes[key]:
                if self._error is not None:
                    raise _Aborted(f"rank {dst}: aborted while waiting for {tag!r} from rank {src}")
                left = deadline - time.monotonic()
                if left <= 0:
                    raise ProtocolError(f"rank {dst}: no answer from rank {src} for {tag!r}")
                self._cv.wait(left)
            return self._boxes[key].pop(0)

    def abort(self, err):
        with self._cv:
            if self._error is None:
                self._error = err
            self._cv.notify_all()

    def endpoint(self, rank):
        return Endpoint(self, rank)

    def message_log(self) -> bytes:
        """Byte serialization of every message, sorted by channel then FIFO position."""
        out = []
        for (src, dst, tag) in sorted(self._log):
            for i, data in enumerate(self._log[(src, dst, tag)]):
                out.append(f"{src} {dst} {tag} {i} {len(data)}\n".encode() + data + b"\n")
        return b"".join(out)


class Endpoint:
    def __init__(self, transport, rank):
        self.t = transport
        self.rank = rank

    @property
    def size(self):
        return self.t.n_ranks

    def send_obj(self, dst, tag, obj):
        self.t.send(self.rank, dst, tag, json.dumps(obj, separators=(",", ":")).encode())

    def recv_obj(self, src, tag):
        return json.loads(self.t.recv(self.rank, src, tag))

    def allgather(self, tag, value):
        for q in range(self.size):
            if q != self.rank:
                self.send_obj(q, tag, value)
        return [value if q == self.rank else self.recv_obj(q, tag) for q in range(self.size)]


def _tuplify(x):
    return tuple(_tuplify(v) for v in x) if isinstance(x, list) else x


# -- decomposition -------------------------------------------------------------
@dataclass
class RankContext:
    rank: int
    grid_index: tuple
    owned: tuple           # per-axis (lo, hi) global element range
    block: tuple           # owned plus aura, clipped
    neighbors: list        # ranks sharing held/owned overlap
    bg: BackgroundMesh = None
    endpoint: Endpoint = None

    @property
    def n_owned(self):
        return int(np.prod([hi - lo for lo, hi in self.owned]))

    @property
    def n_held(self):
        return int(np.prod([hi - lo for lo, hi in self.block]))

    @property
    def aura(self):
        """Global indices of held but not owned elements."""
        return [int(g) for g, o in zip(self.bg.elem_global, self.bg.elem_owned) if not o]


@dataclass
class Decomposition:
    dim: int
    n: tuple
    rank_grid: tuple
    degree: int
    contexts: list

    def owner_of_grid(self, c):
        """Owner rank of the element at global grid coordinate c."""
        chunk = [n // r for n, r in zip(self.n, self.rank_grid)]
        rc = [int(ci) // ch for ci, ch in zip(c, chunk)]
        return _rank_index(rc, self.rank_grid)

    def owner_of_elem(self, g):
        c = []
        for n in self.n:
            c.append(g % n)
            g //= n
        return self.owner_of_grid(c)


def _rank_index(rc, grid):
    idx, stride = 0, 1
    for c, r in zip(rc, grid):
        idx += c * stride
        stride *= r
    return idx


def parse_rank_grid(text, dim):
    """'2x2' -> (2, 2); a single number means that many ranks along x."""
    try:
        parts = [int(v) for v in str(text).lower().split("x")]
    except ValueError:
        raise ConfigError(f"invalid rank grid {text!r}") from None
    if any(v < 1 for v in parts) or len(parts) > dim:
        raise ConfigError(f"invalid rank grid {text!r} for dim {dim}")
    return tuple(parts + [1] * (dim - len(parts)))


def decompose(dim, elems_per_axis, origin, h, degree, rank_grid):
    """Block partition with aura width ``degree`` (clipped at the domain boundary)."""
    n = tuple(int(v) for v in np.broadcast_to(np.asarray(elems_per_axis), (dim,)))
    grid = tuple(rank_grid) + (1,) * (dim - len(rank_grid))
    for a in range(dim):
        if n[a] % grid[a]:
            raise ConfigError(f"rank grid {grid} does not divide elements per axis {n}")
    chunk = [n[a] // grid[a] for a in range(dim)]
    p = int(degree)
    ctxs = []
    for rc in itertools.product(*[range(g) for g in grid[::-1]]):
        rc = rc[::-1]
        owned = tuple((rc[a] * chunk[a], (rc[a] + 1) * chunk[a]) for a in range(dim))
        if all(g == 1 for g in grid):
            block = owned
        else:
            block = tuple((max(lo - p, 0), min(hi + p, n[a])) for a, (lo, hi) in enumerate(owned))
        ctxs.append(RankContext(_rank_index(rc, grid), tuple(rc), owned, block, []))
    for c in ctxs:
        for d in ctxs:
            if c.rank != d.rank and (_overlap(c.block, d.owned) or _overlap(d.block, c.owned)):
                c.neighbors.append(d.rank)
    dec = Decomposition(dim, n, grid, p, ctxs)
    for c in ctxs:
        c.bg = BackgroundMesh(dim, n, origin, h, p, block=c.block, owned=c.owned, rank=c.rank)
    return dec


def _overlap(a, b):
    return all(max(x[0], y[0]) < min(x[1], y[1]) for x, y in zip(a, b))


# -- ID communication ----------------------------------------------------------
def communicate_ids(ep, neighbors, owners, payloads, resolve, tag):
    """Assign globally consistent 1-based IDs.

    ``owners[i]`` is the owner rank of local entity i, ``payloads[i]`` its
    identifying payload (JSON-serializable) and ``resolve(payload)`` returns
    the owner-local entity index or None.
    """
    me = ep.rank
    n = len(owners)
    own_idx = [i for i in range(n) if owners[i] == me]
    counts = ep.allgather(tag + ":count", len(own_idx))
    offset = 1 + sum(counts[:me])
    ids = [0] * n
    for k, i in enumerate(own_idx):
        ids[i] = offset + k
    requests = defaultdict(list)
    for i in range(n):
        if owners[i] != me:
            if owners[i] not in neighbors:
                raise ProtocolError(f"rank {me}: owner rank {owners[i]} of {tag} entity is not a neighbor")
            requests[owners[i]].append(i)
    for q in neighbors:
        ep.send_obj(q, tag + ":req", [payloads[i] for i in requests[q]])
    for q in neighbors:
        answers = []
        for pl in ep.recv_obj(q, tag + ":req"):
            i = resolve(_tuplify(pl))
            if i is None or owners[i] != me:
                err = ProtocolError(f"rank {me}: cannot resolve {tag} request from rank {q}: payload {pl}")
                ep.t.abort(err)
                raise err
            answers.append(ids[i])
        ep.send_obj(q, tag + ":ans", answers)
    for q in neighbors:
        ans = ep.recv_obj(q, tag + ":ans")
        if len(ans) != len(requests[q]):
            raise ProtocolError(f"rank {me}: {tag} answer count mismatch from rank {q}")
        for i, v in zip(requests[q], ans):
            ids[i] = v
    return ids


class RankComm:
    """Hooks called by the single-rank driver to make IDs parallel consistent."""

    def __init__(self, ctx, dec):
        self.ctx = ctx
        self.dec = dec
        self.ep = ctx.endpoint
        self.bg = ctx.bg

    def _elem_owner(self, E):
        return self.dec.owner_of_grid(self.bg.elem_grid[E])

    # identifying payloads
    def cell_payload(self, fg, c):
        E = fg.cell_elem[c]
        return [int(self.bg.elem_global[E]), self._cell_pos[E][c]]

    def vertex_cell_ids(self, fg):
        bg = self.bg
        self._cell_pos = [{c: i for i, c in enumerate(sorted(cm.cells))} for cm in fg.children]
        owners = [self._elem_owner(E) for E in fg.cell_elem]
        payloads = [self.cell_payload(fg, c) for c in range(fg.n_cells)]
        lookup = {tuple(p): c for c, p in enumerate(payloads)}
        cell_ids = communicate_ids(self.ep, self.ctx.neighbors, owners, payloads,
                                   lambda pl: lookup.get(pl), "cell")
        # vertices: only those in an owned element get ids (aura-only ones never leave the rank)
        elems_of = defaultdict(list)
        for E, cm in enumerate(fg.children):
            for v in cm.verts:
                elems_of[v].append(E)
        v_owner, v_pay, v_idx = [], [], []
        for v in range(fg.n_verts):
            Es = elems_of.get(v, [])
            if not any(bg.elem_owned[E] for E in Es):
                continue
            r, a = fg.anc[v]
            adj = bg.get_cells_on_entity(r, a) if r < bg.dim else [a]
            cand = [E for E in adj if v in fg.children[E].xi]
            Emin = min(cand, key=lambda E: int(bg.elem_global[E]))
            v_owner.append(self._elem_owner(Emin))
            v_pay.append(json.loads(json.dumps(fg.keys[v])))
            v_idx.append(v)
        key_lookup = {_tuplify(p): k for k, p in enumerate(v_pay)}
        vids = communicate_ids(self.ep, self.ctx.neighbors, v_owner, v_pay,
                               lambda pl: key_lookup.get(pl), "vertex")
        fg.vertex_ids = [0] * fg.n_verts
        for v, i in zip(v_idx, vids):
            fg.vertex_ids[v] = i
        return cell_ids

    def subphase_ids(self, fg, cell_ids):
        owners = [self._elem_owner(sp.E) for sp in fg.subphases]
        payloads = [cell_ids[sp.cells[0]] for sp in fg.subphases]
        by_cell = {cid: c for c, cid in enumerate(cell_ids)}
        cs = fg.cell_subphase

        def resolve(pl):
            c = by_cell.get(pl)
            return None if c is None else cs[c]

        return communicate_ids(self.ep, self.ctx.neighbors, owners, payloads, resolve, "subphase")

    def enriched_ids(self, bg, fg, table, sub_ids):
        owners, payloads = [], []
        for eb in table:
            gsup = bg.basis_supports[eb.B]
            Emin = min(gsup, key=lambda E: int(bg.elem_global[E]))
            owners.append(self._elem_owner(Emin))
            payloads.append([min(sub_ids[s] for s in eb.group), int(bg.basis_global[eb.B])])
        sid_to_s = {i: s for s, i in enumerate(sub_ids)}
        by_key = {}
        for l, eb in enumerate(table):
            for s in eb.group:
                by_key[(sub_ids[s], int(bg.basis_global[eb.B]))] = l
        self._sub_ids = sub_ids
        self._sid_to_s = sid_to_s
        return communicate_ids(self.ep, self.ctx.neighbors, owners, payloads,
                               lambda pl: by_key.get(pl), "enriched")

    def aura_iens(self, res):
        """Fetch enriched-ID IENs of aura subphases referenced by this rank's clusters."""
        bg, fg = res.bg, res.fg
        need = set()
        for cl in res.clusters.all_clusters():
            if not bg.elem_owned[cl.E]:
                need.add(cl.s)
        for lst in res.clusters.interface.values():
            for pr in lst:
                for cl in (pr.leader, pr.follower):
                    if not bg.elem_owned[cl.E]:
                        need.add(cl.s)
        by_owner = defaultdict(list)
        for s in sorted(need):
            by_owner[self._elem_owner(fg.subphases[s].E)].append(s)
        me = self.ep.rank
        for q in self.ctx.neighbors:
            self.ep.send_obj(q, "ien:req", [res.sub_ids[s] for s in by_owner[q]])
        for q in self.ctx.neighbors:
            ans = []
            for sid in self.ep.recv_obj(q, "ien:req"):
                s = self._sid_to_s.get(sid)
                if s is None or not bg.elem_owned[fg.subphases[s].E]:
                    err = ProtocolError(f"rank {me}: cannot resolve IEN request from rank {q}: subphase {sid}")
                    self.ep.t.abort(err)
                    raise err
                ans.append(res.ien_ids(s))
            self.ep.send_obj(q, "ien:ans", ans)
        res.aura_ien = {}
        for q in self.ctx.neighbors:
            ans = self.ep.recv_obj(q, "ien:ans")
            if len(ans) != len(by_owner[q]):
                raise ProtocolError(f"rank {me}: IEN answer count mismatch from rank {q}")
            for s, ien in zip(by_owner[q], ans):
                res.aura_ien[s] = [int(i) for i in ien]


def exchange_aura_iens(comm, res):
    comm.aura_iens(res)
    return res


# -- driver ---------------------------------------------------------------------
@dataclass
class ParallelRun:
    decomposition: Decomposition
    results: list
    transport: InProcessTransport
    wall_time: float = 0.0

    @property
    def contexts(self):
        return self.decomposition.contexts


def run_parallel(dim, elems_per_axis, origin, h, degree, rank_grid, geometries, material_map=None,
                 void=(), enrich=True, quad_order=None, timeout=RECV_TIMEOUT):
    """Run the pipeline on every rank of ``rank_grid`` as concurrent threads."""
    dec = decompose(dim, elems_per_axis, origin, h, degree, rank_grid)
    tr = InProcessTransport(len(dec.contexts), timeout)
    results = [None] * len(dec.contexts)
    errors = [None] * len(dec.contexts)

    def work(ctx):
        try:
            ctx.endpoint = tr.endpoint(ctx.rank)
            comm = RankComm(ctx, dec)
            results[ctx.rank] = run_serial(ctx.bg, geometries, material_map, void, enrich, quad_order,
                                           comm=comm, clock=time.thread_time)
        except BaseException as e:  # noqa: BLE001 - propagated to the caller below
            errors[ctx.rank] = e
            tr.abort(e)

    t0 = time.perf_counter()
    if len(dec.contexts) == 1:
        work(dec.contexts[0])
    else:
        threads = [threading.Thread(target=work, args=(c,), name=f"rank{c.rank}") for c in dec.contexts]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    wall = time.perf_counter() - t0
    primary = [e for e in errors if e is not None and not _is_abort(e)]
    if primary or any(errors):
        raise (primary or [e for e in errors if e is not None])[0]
    return ParallelRun(dec, results, tr, wall)


def _is_abort(e):
    return isinstance(e, _Aborted) or (isinstance(e, StageError) and isinstance(e.original, _Aborted))


# -- overheads ----------------------------------------------------------------------
@dataclass
class OverheadReport:
    lambda_loc: float
    lambda_glob: float
    t: float
    M: float
    eta: float = 1.0
    mu: float = 1.0
    n_ranks: int = 1
    stage_times: dict = field(default_factory=dict)


def memory_proxy(res):
    """Retained record count of one rank (stand-in for allocated memory)."""
    fg = res.fg
    npts = sum(len(c.w) for c in res.clusters.all_clusters())
    return (fg.n_verts + fg.n_cells + len(fg.subphases) + len(res.table)
            + sum(len(x.ien) for x in res.Xi) + npts)


def mesh_overheads(contexts):
    held = [c.n_held for c in contexts]
    owned = [c.n_owned for c in contexts]
    lam_loc = max(hh / o for hh, o in zip(held, owned))
    lam_glob = sum(held) / sum(owned)
    return lam_loc, lam_glob


def compute_overheads(contexts, timings, size, baseline=None, memory=None):
    """Overheads and efficiencies of a run relative to ``baseline``.

    ``timings`` is a list of per-rank stage-time dicts; the run time is the
    slowest rank's total.  ``baseline`` is an OverheadReport-like object
    with fields ``t``, ``M``, ``n_ranks`` and a ``size`` attribute.
    """
    lam_loc, lam_glob = mesh_overheads(contexts)
    t = max(sum(tm.values()) for tm in timings)
    M = float(sum(memory)) if memory is not None else float(sum(c.n_held for c in contexts))
    stage = {}
    for tm in timings:
        for k, v in tm.items():
            stage[k] = max(stage.get(k, 0.0), v)
    rep = OverheadReport(lam_loc, lam_glob, t, M, n_ranks=len(contexts), stage_times=stage)
    rep.size = size
    if baseline is not None:
        rep.eta = efficiency(size / baseline.size, len(contexts) / baseline.n_ranks, t / baseline.t)
        rep.mu = memory_efficiency(size / baseline.size, M / baseline.M)
    return rep


def efficiency(size_ratio, rank_ratio, time_ratio):
    if rank_ratio <= 0 or time_ratio <= 0:
        raise ConfigError("baseline rank count and time must be positive")
    return size_ratio / (rank_ratio * time_ratio)


def memory_efficiency(size_ratio, memory_ratio):
    if memory_ratio <= 0:
        raise ConfigError("baseline memory must be positive")
    return size_ratio / memory_ratio


def parallel_overheads(run, baseline=None, size=None):
    size = size if size is not None else int(np.prod(run.decomposition.n))
    return compute_overheads(run.contexts, [r.timings for r in run.results], size, baseline,
                             [memory_proxy(r) for r in run.results])


# -- serial/parallel comparison ----------------------------------------------------
def _sub_key(res, s):
    sp = res.fg.subphases[s]
    return (int(res.bg.elem_global[sp.E]), sp.u)


def enriched_canonical(res):
    """Map enriched id -> (global basis index, smallest (global element, u) of its level)."""
    out = {}
    for eb in res.table:
        out[int(eb.id)] = (int(res.bg.basis_global[eb.B]), min(_sub_key(res, s) for s in eb.group))
    return out


def merged_enriched_table(results):
    table = {}
    for res in results:
        for i, key in enriched_canonical(res).items():
            if table.setdefault(i, key) != key:
                raise InvariantError(f"enriched id {i} names different bases on different ranks")
    if len(set(table.values())) != len(table):
        raise InvariantError("two enriched ids name the same enriched basis")
    return table


def _cluster_key(res, cl, canon):
    ien = tuple(sorted(canon[i] for i in res.ien_ids(cl.s)))
    return (cl.kind, int(cl.bucket), int(res.bg.elem_global[cl.E]), cl.u, ien, len(cl.w),
            round(float(cl.w.sum()), 9))


def cluster_multiset(results):
    """Decomposition-independent multiset of cluster and cluster-pair keys."""
    table = merged_enriched_table(results)
    out = []
    for res in results:
        cs = res.clusters
        for lst in cs.bulk.values():
            out.extend(_cluster_key(res, c, table) for c in lst)
        for lst in cs.side.values():
            out.extend(_cluster_key(res, c, table) for c in lst)
        for k, lst in cs.interface.items():
            for pr in lst:
                out.append(("pair", k) + tuple(sorted([_cluster_key(res, pr.leader, table),
                                                       _cluster_key(res, pr.follower, table)])))
        for m, lst in cs.ghost.items():
            for pr in lst:
                out.append(("ghost-pair", m) + tuple(sorted([_cluster_key(res, pr.leader, table),
                                                             _cluster_key(res, pr.follower, table)])))
    return sorted(out)


def compare_runs(serial_results, parallel_results):
    """True when cluster multisets and enriched tables agree up to ID relabeling."""
    t1 = sorted(merged_enriched_table(serial_results).values())
    t2 = sorted(merged_enriched_table(parallel_results).values())
    return t1 == t2 and cluster_multiset(serial_results) == cluster_multiset(parallel_results)
