import threading

import numpy as np
import pytest

from cutprep.errors import ConfigError, ProtocolError
from cutprep.geometry import SampledGrid, Sphere
from cutprep.parallel import (InProcessTransport, communicate_ids, compare_runs, compute_overheads, decompose,
                              efficiency, memory_efficiency, mesh_overheads, parallel_overheads,
                              parse_rank_grid, run_parallel)
from cutprep.pipeline import StageError

CIRCLE = [Sphere([1.0, 1.0], 0.6)]


def run_threads(n, fn):
    errors = [None] * n
    out = [None] * n

    def wrap(r):
        try:
            out[r] = fn(r)
        except BaseException as e:  # noqa: BLE001
            errors[r] = e

    ts = [threading.Thread(target=wrap, args=(r,)) for r in range(n)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    return out, errors


def test_transport_fifo_and_log_order():
    tr = InProcessTransport(2)
    tr.send(1, 0, "b", b"x")
    tr.send(0, 1, "a", b"1")
    tr.send(0, 1, "a", b"2")
    assert tr.recv(1, 0, "a") == b"1"
    assert tr.recv(1, 0, "a") == b"2"
    log = tr.message_log()
    assert log.index(b"0 1 a 0") < log.index(b"0 1 a 1") < log.index(b"1 0 b 0")


def test_transport_timeout_and_abort():
    tr = InProcessTransport(2, timeout=0.05)
    with pytest.raises(ProtocolError):
        tr.recv(0, 1, "never")
    tr2 = InProcessTransport(2, timeout=5.0)
    tr2.abort(RuntimeError("boom"))
    with pytest.raises(ProtocolError):
        tr2.recv(0, 1, "x")
    with pytest.raises(ProtocolError):
        tr2.send(0, 7, "x", b"")


def test_communicate_ids_matches_global_enumeration():
    # 3 ranks each hold entities 0..9 of a global list; entity g is owned by g % 3
    tr = InProcessTransport(3, timeout=10)

    def work(r):
        held = [g for g in range(10) if g % 3 == r or (g + r) % 2 == 0]
        owners = [g % 3 for g in held]
        payloads = [[g, "e"] for g in held]
        lookup = {(g, "e"): i for i, g in enumerate(held)}
        ids = communicate_ids(tr.endpoint(r), [q for q in range(3) if q != r], owners, payloads,
                              lambda pl: lookup.get(pl), "t")
        return dict(zip(held, ids))

    out, errors = run_threads(3, work)
    assert not any(errors)
    merged = {}
    for d in out:
        for g, i in d.items():
            assert merged.setdefault(g, i) == i
    # owner-major numbering from prefix sums of owned counts
    order = sorted(range(10), key=lambda g: (g % 3, g))
    assert [merged[g] for g in order] == list(range(1, 11))


def test_communicate_ids_unresolvable_payload_raises():
    tr = InProcessTransport(2, timeout=10)

    def work(r):
        owners = [0, 1]
        payloads = [["a"], ["b"]] if r == 0 else [["zzz"], ["b"]]
        lookup = {("a",): 0, ("b",): 1} if r == 0 else {("b",): 1}
        return communicate_ids(tr.endpoint(r), [1 - r], owners, payloads, lambda pl: lookup.get(pl), "t")

    _, errors = run_threads(2, work)
    assert all(isinstance(e, ProtocolError) for e in errors)


def test_parse_rank_grid():
    assert parse_rank_grid("2x2", 2) == (2, 2)
    assert parse_rank_grid("4", 2) == (4, 1)
    assert parse_rank_grid("2x1x2", 3) == (2, 1, 2)
    for bad in ("0x2", "axb", "2x2x2"):
        with pytest.raises(ConfigError):
            parse_rank_grid(bad, 2)


def test_decomposition_blocks_and_overheads():
    dec = decompose(2, (12, 12), 0.0, 1 / 6, 2, (2, 2))
    for c in dec.contexts:
        assert c.n_owned == 36 and c.n_held == 64
        assert len(c.aura) == 28
        assert sorted(c.neighbors) == sorted(set(range(4)) - {c.rank})
    lam_loc, lam_glob = mesh_overheads(dec.contexts)
    assert lam_loc == pytest.approx(64 / 36) and lam_glob == pytest.approx(64 / 36)
    # 4x2 grid: x chunks of 3 with aura 2 -> held widths 5 (end) or 7 (middle); y: 6 + 2
    dec = decompose(2, (12, 12), 0.0, 1 / 6, 2, (4, 2))
    lam_loc, lam_glob = mesh_overheads(dec.contexts)
    assert lam_loc == pytest.approx(56 / 18)
    assert lam_glob == pytest.approx((2 * 40 + 2 * 56) * 2 / 144)
    with pytest.raises(ConfigError):
        decompose(2, (12, 12), 0.0, 1 / 6, 2, (5, 1))


def test_single_rank_has_no_aura():
    dec = decompose(2, (6, 6), 0.0, 1.0, 2, (1, 1))
    assert dec.contexts[0].n_held == dec.contexts[0].n_owned == 36
    assert mesh_overheads(dec.contexts) == (1.0, 1.0)


def test_owner_lookup_covers_every_element():
    dec = decompose(2, (8, 4), 0.0, 1.0, 1, (4, 2))
    for c in dec.contexts:
        for g, own in zip(c.bg.elem_global, c.bg.elem_owned):
            assert (dec.owner_of_elem(int(g)) == c.rank) == bool(own)


def test_serial_parallel_equivalence_2x1_and_log_determinism():
    ser = run_parallel(2, (8, 8), 0.0, 0.25, 2, (1, 1), CIRCLE, void=(1,))
    a = run_parallel(2, (8, 8), 0.0, 0.25, 2, (2, 1), CIRCLE, void=(1,))
    b = run_parallel(2, (8, 8), 0.0, 0.25, 2, (2, 1), CIRCLE, void=(1,))
    assert compare_runs(ser.results, a.results)
    assert a.transport.message_log() == b.transport.message_log()


def test_parallel_ids_are_unique_and_dense():
    run = run_parallel(2, (8, 8), 0.0, 0.25, 2, (2, 2), CIRCLE, void=(1,))
    owned_sub = set()
    for res in run.results:
        for sp in res.fg.subphases:
            if res.bg.elem_owned[sp.E]:
                assert res.sub_ids[sp.index] not in owned_sub
                owned_sub.add(res.sub_ids[sp.index])
    assert owned_sub == set(range(1, len(owned_sub) + 1))


def test_overhead_formulas():
    assert efficiency(2.0, 2.0, 1.0) == pytest.approx(1.0)
    assert efficiency(1.0, 4.0, 0.5) == pytest.approx(0.5)
    assert memory_efficiency(2.0, 2.5) == pytest.approx(0.8)
    with pytest.raises(ConfigError):
        efficiency(1.0, 0.0, 1.0)
    run1 = run_parallel(2, (8, 8), 0.0, 0.25, 1, (1, 1), CIRCLE, void=(1,))
    base = parallel_overheads(run1)
    run4 = run_parallel(2, (8, 8), 0.0, 0.25, 1, (2, 2), CIRCLE, void=(1,))
    rep = parallel_overheads(run4, base)
    assert rep.n_ranks == 4 and rep.lambda_loc == pytest.approx(25 / 16)
    assert rep.mu == pytest.approx(base.M / rep.M)
    rep2 = compute_overheads(run4.contexts, [{"a": 1.0}] * 4, 64, base)
    assert rep2.eta == pytest.approx(1.0 / (4 * (1.0 / base.t)))


def test_rank_error_propagates_with_exit_code():
    # the sampled geometry covers only the left half of the domain
    vals = np.ones((5, 9))
    G = SampledGrid(vals, (0.0, 0.0), (0.25, 0.25))
    with pytest.raises(StageError) as ei:
        run_parallel(2, (8, 8), 0.0, 0.25, 1, (2, 1), [G], timeout=10)
    assert ei.value.exit_code == ConfigError.exit_code
