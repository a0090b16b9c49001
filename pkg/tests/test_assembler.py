import numpy as np
import pytest
from scipy.interpolate import BSpline

from cutprep.bg_mesh import _open_knots, build_cartesian_mesh
from cutprep.errors import InvariantError
from cutprep.geometry import Sphere
from cutprep.pipeline import run_serial
from cutprep.verify.assembler import (BC, GhostParams, MaterialParams, NitscheParams, SingularSystemError,
                                      assemble, condition_number, error_norms, solve)
from cutprep.verify.experiments import plane_grid

ALL = lambda x, n: np.ones(len(x), dtype=bool)  # noqa: E731


def greville(bg):
    """Physical Greville abscissae per basis function (reproduce linear fields)."""
    p = bg.degree
    out = np.zeros((bg.n_basis, 2))
    for a in range(2):
        kn = _open_knots(bg.n[a], p)
        g = np.array([kn[i + 1:i + p + 1].mean() for i in range(bg.n[a] + p)])
        out[:, a] = bg.origin[a] + g[bg.basis_grid[:, a]] * bg.h[a]
    return out


def coefficients(res, system, field):
    """Enriched coefficients of a linear vector field via Greville abscissae of each level's basis."""
    G = greville(res.bg)
    c = np.zeros(system.K.shape[0])
    for eb in res.table:
        if int(eb.id) in system.index:
            v = np.atleast_1d(field(G[eb.B]))
            for k in range(system.ncomp):
                c[system.dof(int(eb.id), k)] = v[k]
    return c


def one_d_matrices(n_el, p, h):
    kn = _open_knots(n_el, p)
    nb = n_el + p
    xg, wg = np.polynomial.legendre.leggauss(p + 2)
    Kx = np.zeros((nb, nb))
    Mx = np.zeros((nb, nb))
    for e in range(n_el):
        t = e + (xg + 1) / 2
        w = wg / 2
        vals, ders = [], []
        for i in range(nb):
            c = np.zeros(nb)
            c[i] = 1
            sp = BSpline(kn, c, p)
            vals.append(sp(t))
            ders.append(sp(t, 1))
        V, D = np.array(vals), np.array(ders) / h
        Mx += (V * w) @ V.T * h
        Kx += (D * w) @ D.T * h
    return Kx, Mx


def test_uncut_diffusion_stiffness_matches_tensor_oracle():
    n, p, h, E = 4, 2, 0.5, 2.5
    bg = build_cartesian_mesh(2, (n, n), 0.0, h, p)
    res = run_serial(bg, [Sphere([50.0, 50.0], 1.0)])
    mats = {1: MaterialParams(E)}
    S = assemble(res, mats, physics="diffusion")
    order = [res.table[res.enr_ids.index(int(i))].B for i in S.ids]
    Kx, Mx = one_d_matrices(n, p, h)
    K_ref = E * (np.kron(Mx, Kx) + np.kron(Kx, Mx))  # x index fastest
    np.testing.assert_allclose(S.K, K_ref[np.ix_(order, order)], atol=1e-12)


def bimaterial_box(E0=1.0, E1=3.0, n=10):
    """Box [0.23,1.77]x[0.21,1.79] split at x=1.07 into materials 1 and 2; outside void (0)."""
    geoms, mmap = plane_grid([0.23, 1.07, 1.77], [0.21, 1.79],
                             lambda ix, iy: 0 if iy != 1 or ix in (0, 3) else ix)
    bg = build_cartesian_mesh(2, (n, n), 0.0, 2.0 / n, 2)
    res = run_serial(bg, geoms, mmap, void=(0,))
    mats = {0: MaterialParams(1.0, 0.3, void=True), 1: MaterialParams(E0, 0.3), 2: MaterialParams(E1, 0.3)}
    return res, mats


def test_rigid_modes_have_zero_energy_with_all_terms():
    res, mats = bimaterial_box()
    S = assemble(res, mats, physics="elasticity")
    for mode in (lambda x: np.array([1.0, 0.0]), lambda x: np.array([0.0, 1.0]),
                 lambda x: np.array([-x[1], x[0]])):
        c = coefficients(res, S, mode)
        assert np.abs(S.K @ c).max() < 1e-10 * np.abs(S.K).max()


def test_stiffness_is_symmetric_for_symmetric_nitsche():
    res, mats = bimaterial_box()
    bcs = [BC("dirichlet", ALL, lambda x: np.zeros((len(x), 2)))]
    S = assemble(res, mats, bcs, "elasticity")
    np.testing.assert_allclose(S.K, S.K.T, atol=1e-12 * np.abs(S.K).max())
    S2 = assemble(res, mats, bcs, "elasticity", nitsche=NitscheParams(sign=-1))
    assert not np.allclose(S2.K, S2.K.T)
    S3 = assemble(res, mats, bcs, "elasticity", nitsche=NitscheParams(weighting="volume"))
    np.testing.assert_allclose(S3.K, S3.K.T, atol=1e-12 * np.abs(S3.K).max())
    with pytest.raises(InvariantError):
        assemble(res, mats, bcs, "elasticity", nitsche=NitscheParams(weighting="harmonic"))


@pytest.mark.parametrize("sign, weighting", [(1, "stiffness"), (-1, "stiffness"), (1, "volume")])
def test_bimaterial_patch_test_diffusion(sign, weighting):
    # u = a x (material 1), u = b (x - c) + a c (material 2) with E1 a = E2 b: flux continuous
    E0, E1, c = 1.0, 3.0, 1.07
    res, mats = bimaterial_box(E0, E1)
    a = 0.9
    b = E0 * a / E1

    def exact(x):
        return np.where(x[:, 0] < c, a * x[:, 0], b * (x[:, 0] - c) + a * c)[:, None]

    def grad(x):
        g = np.zeros((len(x), 1, 2))
        g[:, 0, 0] = np.where(x[:, 0] < c, a, b)
        return g

    nit = NitscheParams(sign=sign, weighting=weighting, beta_volume=10.0)
    S = assemble(res, mats, [BC("dirichlet", ALL, exact)], "diffusion", nitsche=nit)
    u, _ = solve(S)
    err = error_norms(res, S, u, mats, exact, grad)
    assert err["L2"] < 1e-9 and err["H1_semi"] < 1e-9


def test_linear_elastic_patch_test_on_circle():
    bg = build_cartesian_mesh(2, (8, 8), 0.0, 0.25, 2)
    res = run_serial(bg, [Sphere([1.02, 0.97], 0.63)], void=(1,))
    mats = {0: MaterialParams(200.0, 0.3), 1: MaterialParams(1.0, 0.3, void=True)}
    A = np.array([[0.01, -0.02], [0.03, 0.015]])
    exact = lambda x: x @ A.T + np.array([0.1, -0.2])  # noqa: E731
    grad = lambda x: np.broadcast_to(A, (len(x), 2, 2))  # noqa: E731
    S = assemble(res, mats, [BC("dirichlet", ALL, exact)], "elasticity")
    u, _ = solve(S)
    err = error_norms(res, S, u, mats, exact, grad)
    assert err["L2"] < 1e-9 and err["H1_semi"] < 1e-9


def test_ghost_term_vanishes_on_global_polynomials(two_material_run):
    res = two_material_run
    mats = {0: MaterialParams(1.0), 1: MaterialParams(5.0)}
    S = assemble(res, mats, physics="diffusion", terms={"ghost"})
    assert np.abs(S.K).max() > 0
    # least-squares fit of a global quadratic on the uncut basis, copied to every level
    bg = res.bg
    rng = np.random.default_rng(0)
    rows, rhs = [], []
    f = lambda x: 1 + 2 * x[:, 0] - x[:, 1] + 0.5 * x[:, 0] ** 2 - 0.3 * x[:, 0] * x[:, 1] + x[:, 1] ** 2  # noqa
    for E in range(bg.n_elems):
        xi = rng.uniform(-1, 1, (12, 2))
        N = bg.eval_basis(E, xi)[0]
        R = np.zeros((12, bg.n_basis))
        R[:, bg.ien[E]] = N
        rows.append(R)
        rhs.append(f(bg.param_to_phys(E, xi)))
    coef_B = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)[0]
    c = np.zeros(S.K.shape[0])
    for eb in res.table:
        if int(eb.id) in S.index:
            c[S.dof(int(eb.id))] = coef_B[eb.B]
    assert np.abs(S.K @ c).max() < 1e-9 * np.abs(S.K).max() * np.abs(c).max()


def test_ghost_orders_are_configurable(circle_run):
    mats = {0: MaterialParams(1.0), 1: MaterialParams(1.0, void=True)}
    K1 = assemble(circle_run, mats, physics="diffusion", terms={"ghost"}, ghost=GhostParams(orders=(1,))).K
    K2 = assemble(circle_run, mats, physics="diffusion", terms={"ghost"}, ghost=GhostParams(orders=(2,))).K
    K12 = assemble(circle_run, mats, physics="diffusion", terms={"ghost"}).K
    np.testing.assert_allclose(K1 + K2, K12, atol=1e-14)
    assert GhostParams().gamma(2, 3.0, 0.5) == pytest.approx(0.01 * 3.0 * 0.125)


def test_free_body_is_reported_singular():
    res, mats = bimaterial_box(n=6)
    S = assemble(res, mats, physics="elasticity")
    with pytest.raises(SingularSystemError) as ei:
        solve(S)
    assert ei.value.exit_code == 3
    assert ei.value.dofs and all(comp in (0, 1) for _, comp in ei.value.dofs)


def test_condition_number_matches_numpy():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((8, 8))
    assert condition_number(A @ A.T + np.eye(8)) == pytest.approx(np.linalg.cond(A @ A.T + np.eye(8)), rel=1e-8)
    assert condition_number(A) == pytest.approx(np.linalg.cond(A), rel=1e-8)


def test_neumann_load_balances_body_force():
    # total load vector equals integral of traction plus body force for a constant test field
    res, mats = bimaterial_box()
    bcs = [BC("neumann", lambda x, n: n[:, 0] > 0.9, lambda x: np.tile([2.0, 0.0], (len(x), 1)))]
    S = assemble(res, mats, bcs, "elasticity", body_force=lambda x: np.tile([0.0, -1.0], (len(x), 1)))
    one_x = coefficients(res, S, lambda x: np.array([1.0, 0.0]))
    one_y = coefficients(res, S, lambda x: np.array([0.0, 1.0]))
    height = 1.79 - 0.21
    area = (1.77 - 0.23) * height
    assert F_dot(S, one_x) == pytest.approx(2.0 * height, rel=1e-10)
    assert F_dot(S, one_y) == pytest.approx(-area, rel=1e-10)


def F_dot(S, c):
    return float(S.F @ c)
