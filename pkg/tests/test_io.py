import numpy as np
import pytest

from cutprep import io
from cutprep.geometry import Sphere
from cutprep.parallel import run_parallel

CIRCLE = [Sphere([1.0, 1.0], 0.6)]


@pytest.fixture(scope="module")
def serial_and_parallel():
    ser = run_parallel(2, (8, 8), 0.0, 0.25, 2, (1, 1), CIRCLE, void=(1,))
    par = run_parallel(2, (8, 8), 0.0, 0.25, 2, (2, 2), CIRCLE, void=(1,))
    return ser, par


def test_vtk_round_trip_preserves_geometry(tmp_path, serial_and_parallel):
    ser, _ = serial_and_parallel
    n_pts, n_cells = io.write_vtk(ser.results, tmp_path / "m.vtk")
    back = io.read_vtk(tmp_path / "m.vtk")
    X, conn, types, mat, sub, elem = io.collect_mesh(ser.results)
    assert back["points"].shape == (n_pts, 3) and len(back["cells"]) == n_cells
    np.testing.assert_array_equal(back["points"][:, :2], X)  # %.17g is lossless
    assert back["cells"] == conn and back["types"] == types
    assert back["cell_data"]["material"] == mat
    # triangle areas plus quad areas cover the domain
    area = 0.0
    for c in back["cells"]:
        P = back["points"][c, :2]
        area += 0.5 * abs(np.dot(P[:, 0], np.roll(P[:, 1], -1)) - np.dot(P[:, 1], np.roll(P[:, 0], -1)))
    assert area == pytest.approx(4.0, abs=1e-12)


def test_serial_and_parallel_exports_match(tmp_path, serial_and_parallel):
    ser, par = serial_and_parallel
    ls, lp = io.cluster_lines(ser.results), io.cluster_lines(par.results)
    assert len(ls) == len(lp)
    kinds = lambda lines: sorted(l.split(",", 1)[0] for l in lines)  # noqa: E731,E741
    assert kinds(ls) == kinds(lp)
    assert len(io.enriched_rows(ser.results)) == len(io.enriched_rows(par.results))
    for which in ("G_S", "G_I"):
        assert len(io.graph_edges(ser.results, which)) == len(io.graph_edges(par.results, which))
    Xs = io.collect_mesh(ser.results)[0]
    Xp = io.collect_mesh(par.results)[0]
    assert Xs.shape == Xp.shape
    np.testing.assert_allclose(np.sort(Xs, axis=0), np.sort(Xp, axis=0), atol=1e-14)


def test_cluster_file_round_trip(tmp_path, serial_and_parallel):
    ser, _ = serial_and_parallel
    n = io.write_clusters(ser.results, tmp_path / "c.jsonl")
    recs = io.read_clusters(tmp_path / "c.jsonl")
    assert len(recs) == n
    res = ser.results[0]
    total = 0.0
    for r in recs:
        if r["kind"] == "bulk":
            total += np.sum(r["cluster"]["w"]) * res.bg.jac_det
        if r["kind"] == "side":
            assert "n" in r["cluster"]
    assert total == pytest.approx(4.0, abs=1e-12)


def test_enriched_and_graph_files(tmp_path, serial_and_parallel):
    _, par = serial_and_parallel
    n = io.write_enriched(par.results, tmp_path / "e.txt")
    lines = (tmp_path / "e.txt").read_text().splitlines()
    assert lines[0].startswith("#") and len(lines) == n + 1
    ids = [int(l.split()[0]) for l in lines[1:]]  # noqa: E741
    assert ids == list(range(1, n + 1))
    io.write_graphs(par.results, tmp_path / "g.txt")
    for ln in (tmp_path / "g.txt").read_text().splitlines():
        which, a, b = ln.split()
        assert which in ("G_S", "G_I") and int(a) < int(b)


def test_stats_report(serial_and_parallel):
    _, par = serial_and_parallel
    st = io.run_stats(par.results, par.contexts)
    text = io.format_stats(st)
    assert st["ranks"] == 4 and st["lambda_loc"] > 1
    assert "retained-record count" in text.splitlines()[0]
    assert len(st["memory_records"]) == 4
