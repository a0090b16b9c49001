import numpy as np
import pytest

from cutprep.bg_mesh import build_cartesian_mesh
from cutprep.enrichment import enriched_partition_of_unity_check, enrichment_levels, unzip_interpolation_mesh
from cutprep.geometry import Plane, Sphere
from cutprep.pipeline import run_serial
from cutprep.verify.experiments import MultibeamConfig, multibeam_setup
from cutprep.verify.invariants import check_enrichment

from oracles import oracle_levels_2d


def bulk_points(res):
    return [(cl.s, cl.xi) for lst in res.clusters.bulk.values() for cl in lst]


@pytest.mark.parametrize("fixture", ["circle_run", "two_material_run", "plane_run"])
def test_partition_of_unity_and_indicator_equivalence(fixture, request):
    res = request.getfixturevalue(fixture)
    rep = enriched_partition_of_unity_check(res.bg, res.fg, res.Xi, res.table, bulk_points(res))
    assert rep["pu_max_error"] < 1e-12
    assert rep["psi_max_difference"] < 1e-12
    assert rep["levels_disjoint"]
    assert rep["n_points"] > 0


def test_unzipped_ien_rewritten_once(two_material_run):
    res = two_material_run
    bg = res.bg
    for ue in res.Xi:
        assert len(ue.ien) == len(bg.ien[ue.E])
        assert len(set(ue.ien.tolist())) == len(ue.ien)
        np.testing.assert_array_equal([res.table[l].B for l in ue.ien], bg.ien[ue.E])
        for l in ue.ien:
            assert ue.s in res.table[l].group


def test_level_groups_partition_the_support(two_material_run):
    res = two_material_run
    fg, bg = res.fg, res.bg
    by_B = {}
    for eb in res.table:
        by_B.setdefault(eb.B, []).append(set(eb.group))
    for B, groups in by_B.items():
        S_B = {s for E in bg.basis_supports[B] for s in fg.elem_subphases[E]}
        assert set().union(*groups) == S_B
        assert sum(len(g) for g in groups) == len(S_B)


def test_without_enrichment_every_basis_has_one_level(two_material_run):
    res = two_material_run
    Xi, table = unzip_interpolation_mesh(res.bg, res.fg, enrich=False)
    np.testing.assert_array_equal(enrichment_levels(table, res.bg.n_basis), 1)


def test_enrichment_separates_beams():
    cfg = MultibeamConfig(n_beams=3, beam_height=3.0)
    bg, geoms, mmap, _ = multibeam_setup(cfg)
    res = run_serial(bg, geoms, mmap, void=(0,))
    want, _ = oracle_levels_2d(res.fg)
    got = enrichment_levels(res.table, bg.n_basis)
    np.testing.assert_array_equal(got, want)
    # some basis function in the beam region sees solid in two beams plus void gaps
    solid_levels = np.zeros(bg.n_basis, dtype=int)
    for eb in res.table:
        if res.fg.subphases[eb.group[0]].material == 1:
            solid_levels[eb.B] += 1
    assert solid_levels.max() >= 2
    check_enrichment(res)


def test_basis_outside_all_subphases_has_no_levels():
    # with every subphase owned, each basis has at least one level; no empty-support case on a full mesh
    bg = build_cartesian_mesh(2, (4, 4), 0.0, 0.5, 2)
    res = run_serial(bg, [Sphere([1.0, 1.0], 0.5)])
    assert enrichment_levels(res.table, bg.n_basis).min() >= 1


def test_3d_partition_of_unity():
    bg = build_cartesian_mesh(3, (3, 3, 3), 0.0, 1.0 / 3, 1)
    res = run_serial(bg, [Plane([1.0, 0.5, 0.2], 0.6)])
    rep = enriched_partition_of_unity_check(res.bg, res.fg, res.Xi, res.table, bulk_points(res))
    assert rep["pu_max_error"] < 1e-12 and rep["psi_max_difference"] < 1e-12
