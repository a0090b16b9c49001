"""Dense 2D assembler consuming clusters: diffusion and plane-stress elasticity.

Terms: bulk stiffness, body force, Neumann traction, Nitsche Dirichlet,
Nitsche interface coupling with stiffness-weighted or volume-fraction-weighted
averages, and ghost penalties on jumps of normal derivatives up to the basis
degree.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .._kernels import scatter_add
from ..clusters import physical_facet_weights
from ..errors import CutprepError, InvariantError


class SingularSystemError(CutprepError):
    exit_code = 3

    def __init__(self, msg, dofs):
        super().__init__(msg)
        self.dofs = dofs


@dataclass
class MaterialParams:
    E: float = 1.0
    nu: float = 0.0
    void: bool = False


@dataclass
class NitscheParams:
    beta: float = None   # default 2 (p+1)^2
    sign: int = 1        # +1 symmetric, -1 non-symmetric
    gamma_D: float = None  # explicit overrides (absolute values)
    gamma_I: float = None
    # "stiffness": w_m = E_l / (E_m + E_l), gamma_I = beta E_eff / h
    # "volume": w_m ~ |S_m| / E_m per subphase pair, gamma_I = beta_volume |Gamma| / sum(|S| / E)
    weighting: str = "stiffness"
    beta_volume: float = 2.0

    def beta_for(self, p):
        return 2.0 * (p + 1) ** 2 if self.beta is None else self.beta


@dataclass
class GhostParams:
    alpha: float = 0.01
    enabled: bool = True
    orders: tuple = None  # default 1..p

    def gamma(self, k, E, h):
        return self.alpha * E * h ** (2 * k - 1)


@dataclass
class BC:
    """Boundary condition on boundary side clusters.

    ``where(x, n)`` returns a boolean mask over points; ``value(x)`` returns
    prescribed values (Dirichlet) or tractions/fluxes (Neumann) with shape
    (npts, ncomp).
    """

    kind: str
    where: object
    value: object


@dataclass
class AssembledSystem:
    K: np.ndarray
    F: np.ndarray
    ids: np.ndarray          # enriched ids, sorted; row block i <-> ids[i]
    ncomp: int
    index: dict = field(default_factory=dict)  # id -> block index

    def dof(self, ident, comp=0):
        return self.index[ident] * self.ncomp + comp


def _const(v):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return lambda x: np.tile(v, (len(x), 1))


def elasticity_matrix(E, nu):
    c = E / (1.0 - nu * nu)
    return c * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]])


class _Evaluator:
    """Per-cluster operators: values V, gradient operator B, traction T."""

    def __init__(self, res, physics, materials, ids_index):
        self.res = res
        self.bg = res.bg
        self.physics = physics
        self.nc = 1 if physics == "diffusion" else 2
        self.materials = materials
        self.index = ids_index

    def dofs(self, s):
        ien = self.res.ien_ids(s)
        try:
            blocks = [self.index[i] for i in ien]
        except KeyError as e:
            raise InvariantError(f"cluster references unknown enriched id {e.args[0]}") from None
        nc = self.nc
        return np.array([b * nc + c for b in blocks for c in range(nc)], dtype=np.int64)

    def basis(self, cl, k):
        return self.bg.eval_basis_phys(cl.E, cl.xi, k)

    def V(self, N):
        npts, nb = N.shape
        nc = self.nc
        out = np.zeros((npts, nc, nb * nc))
        for c in range(nc):
            out[:, c, c::nc] = N
        return out

    def B(self, dN):
        """Strain (Voigt) or gradient operator, shape (npts, 3|2, nb*nc)."""
        npts, dim, nb = dN.shape
        if self.physics == "diffusion":
            return dN
        out = np.zeros((npts, 3, 2 * nb))
        out[:, 0, 0::2] = dN[:, 0]
        out[:, 1, 1::2] = dN[:, 1]
        out[:, 2, 0::2] = dN[:, 1]
        out[:, 2, 1::2] = dN[:, 0]
        return out

    def D(self, m):
        mp = self.materials[m]
        if self.physics == "diffusion":
            return mp.E * np.eye(2)
        return elasticity_matrix(mp.E, mp.nu)

    def T(self, dN, n, m):
        """Flux/traction operator sigma(u).n, shape (npts, nc, nb*nc)."""
        B = self.B(dN)
        DB = np.einsum("ij,qjk->qik", self.D(m), B)
        if self.physics == "diffusion":
            return np.einsum("qi,qik->qk", n, DB)[:, None, :]
        Nm = np.zeros((len(n), 2, 3))
        Nm[:, 0, 0] = n[:, 0]
        Nm[:, 0, 2] = n[:, 1]
        Nm[:, 1, 1] = n[:, 1]
        Nm[:, 1, 2] = n[:, 0]
        return np.einsum("qij,qjk->qik", Nm, DB)


def active_ids(res, materials):
    ids = set()
    for m, lst in res.clusters.bulk.items():
        if materials[m].void:
            continue
        for cl in lst:
            ids.update(res.ien_ids(cl.s))
    return np.array(sorted(ids), dtype=np.int64)


def _materials_of_key(k, n_m):
    k -= 1
    return k // n_m, k % n_m


ALL_TERMS = frozenset({"bulk", "boundary", "interface", "ghost"})


def assemble(res, materials, bcs=(), physics="elasticity", nitsche=None, ghost=None, body_force=None,
             terms=ALL_TERMS):
    """Assemble the dense system over active (non-void) enriched ids.

    ``terms`` selects residual contributions; matrices assembled with
    disjoint term sets on the same run share the DOF ordering and add up.
    """
    terms = set(terms)
    if res.bg.dim != 2:
        raise InvariantError("the verification assembler supports 2D meshes only")
    nitsche = nitsche or NitscheParams()
    ghost = ghost or GhostParams()
    ids = active_ids(res, materials)
    index = {int(i): j for j, i in enumerate(ids)}
    ev = _Evaluator(res, physics, materials, index)
    nc = ev.nc
    ndof = len(ids) * nc
    K = np.zeros((ndof, ndof))
    F = np.zeros(ndof)
    bg = res.bg
    p = bg.degree
    h = float(np.max(bg.h))
    J = bg.jac_det
    s = nitsche.sign
    beta = nitsche.beta_for(p)
    cs = res.clusters

    # bulk
    for m, lst in cs.bulk.items():
        if materials[m].void or "bulk" not in terms:
            continue
        Dm = ev.D(m)
        for cl in lst:
            N, dN = ev.basis(cl, 1)
            w = cl.w * J
            Bq = ev.B(dN)
            Ke = np.einsum("q,qia,ij,qjb->ab", w, Bq, Dm, Bq)
            d = ev.dofs(cl.s)
            scatter_add(K, d, d, Ke)
            if body_force is not None:
                x = bg.param_to_phys(cl.E, cl.xi)
                f = np.atleast_2d(body_force(x)).reshape(len(w), nc)
                np.add.at(F, d, np.einsum("q,qca,qc->a", w, ev.V(N), f))

    # boundary side clusters: Dirichlet (Nitsche) and Neumann
    for k, lst in cs.side.items():
        m_i, m_j = _materials_of_key(k, cs.n_materials)
        if materials[m_i].void or not materials[m_j].void or "boundary" not in terms:
            continue
        for cl in lst:
            x = bg.param_to_phys(cl.E, cl.xi)
            d = ev.dofs(cl.s)
            for bc in bcs:
                mask = np.asarray(bc.where(x, cl.n), dtype=bool)
                if not mask.any():
                    continue
                N, dN = bg.eval_basis_phys(cl.E, cl.xi[mask], 1)
                w = physical_facet_weights(bg, cl.w[mask], cl.n[mask])
                g = np.atleast_2d(bc.value(x[mask])).reshape(mask.sum(), nc)
                V = ev.V(N)
                if bc.kind == "neumann":
                    np.add.at(F, d, np.einsum("q,qca,qc->a", w, V, g))
                    continue
                T = ev.T(dN, cl.n[mask], m_i)
                gam = nitsche.gamma_D if nitsche.gamma_D is not None else beta * materials[m_i].E / h
                Ke = (-np.einsum("q,qca,qcb->ab", w, V, T) - s * np.einsum("q,qca,qcb->ab", w, T, V)
                      + gam * np.einsum("q,qca,qcb->ab", w, V, V))
                Fe = -s * np.einsum("q,qca,qc->a", w, T, g) + gam * np.einsum("q,qca,qc->a", w, V, g)
                scatter_add(K, d, d, Ke)
                np.add.at(F, d, Fe)

    # interface pairs (each undirected pair once: leader material < follower material)
    if "interface" in terms:
        if nitsche.weighting not in ("stiffness", "volume"):
            raise InvariantError(f"unknown interface weighting {nitsche.weighting!r}")
        if nitsche.weighting == "volume":
            vol = _subphase_measures(res)
            gamma_len = _interface_measures(res)
        for k, lst in cs.interface.items():
            m, l = _materials_of_key(k, cs.n_materials)
            if m >= l or materials[m].void or materials[l].void:
                continue
            Em, El = materials[m].E, materials[l].E
            wm, wl = El / (Em + El), Em / (Em + El)
            Eeff = wm * Em + wl * El
            gam = nitsche.gamma_I if nitsche.gamma_I is not None else beta * Eeff / h
            for pr in lst:
                a, b = pr.leader, pr.follower
                n = a.n
                N1, dN1 = ev.basis(a, 1)
                N2, dN2 = ev.basis(b, 1)
                w = physical_facet_weights(bg, a.w, n)
                if nitsche.weighting == "volume":
                    c_m, c_l = vol[a.s] / Em, vol[b.s] / El
                    wm, wl = c_m / (c_m + c_l), c_l / (c_m + c_l)
                    if nitsche.gamma_I is None:
                        gam = nitsche.beta_volume * gamma_len[(a.s, b.s)] / (c_m + c_l)
                Jmp = np.concatenate([ev.V(N1), -ev.V(N2)], axis=2)
                Avg = np.concatenate([wm * ev.T(dN1, n, m), wl * ev.T(dN2, n, l)], axis=2)
                Ke = (-np.einsum("q,qca,qcb->ab", w, Jmp, Avg) - s * np.einsum("q,qca,qcb->ab", w, Avg, Jmp)
                      + gam * np.einsum("q,qca,qcb->ab", w, Jmp, Jmp))
                d = np.concatenate([ev.dofs(a.s), ev.dofs(b.s)])
                scatter_add(K, d, d, Ke)

    # ghost penalty
    if ghost.enabled and "ghost" in terms:
        orders = ghost.orders or tuple(range(1, p + 1))
        kmax = max(orders) if orders else 0
        for m, lst in cs.ghost.items():
            if materials[m].void:
                continue
            for pr in lst:
                a, b = pr.leader, pr.follower
                n = a.n
                ra = bg.eval_basis_phys(a.E, a.xi, kmax)
                rb = bg.eval_basis_phys(b.E, b.xi, kmax)
                w = physical_facet_weights(bg, a.w, n)
                d = np.concatenate([ev.dofs(a.s), ev.dofs(b.s)])
                for k in orders:
                    ga = _normal_derivative(ra, n, k)
                    gb = _normal_derivative(rb, n, k)
                    Jk = np.concatenate([ev.V(ga), -ev.V(gb)], axis=2)
                    gam = ghost.gamma(k, materials[m].E, h)
                    scatter_add(K, d, d, gam * np.einsum("q,qca,qcb->ab", w, Jk, Jk))
    return AssembledSystem(K, F, ids, nc, index)


def _subphase_measures(res):
    """Physical measure of every subphase from its bulk cluster."""
    vol = {}
    for lst in res.clusters.bulk.values():
        for cl in lst:
            vol[cl.s] = vol.get(cl.s, 0.0) + float(np.sum(cl.w)) * res.bg.jac_det
    return vol


def _interface_measures(res):
    """Physical interface measure shared by each (leader, follower) subphase pair."""
    out = {}
    for lst in res.clusters.interface.values():
        for pr in lst:
            a = pr.leader
            key = (a.s, pr.follower.s)
            out[key] = out.get(key, 0.0) + float(np.sum(physical_facet_weights(res.bg, a.w, a.n)))
    return out


def _normal_derivative(res_k, n, k):
    if k == 1:
        return np.einsum("qi,qia->qa", n, res_k[1])
    if k == 2:
        return np.einsum("qi,qj,qija->qa", n, n, res_k[2])
    raise ValueError("normal derivatives implemented up to order 2")


def condition_number(K):
    """Ratio of extreme singular values (eigenvalue magnitudes when symmetric)."""
    if K.size == 0:
        return 1.0
    if np.allclose(K, K.T, rtol=0, atol=1e-12 * max(1.0, np.abs(K).max())):
        ev = np.abs(scipy.linalg.eigvalsh(0.5 * (K + K.T)))
    else:
        ev = scipy.linalg.svdvals(K)
    lo = ev.min()
    return float(ev.max() / lo) if lo > 0 else float("inf")


def solve(system, rcond=1e-13):
    K, F = system.K, system.F
    U, sv, Vt = np.linalg.svd(K) if K.shape[0] <= 400 else (None, None, None)
    if sv is None:
        sv = scipy.linalg.svdvals(K)
    if sv.size and sv.min() <= rcond * sv.max():
        if Vt is None:
            _, _, Vt = np.linalg.svd(K)
        null = Vt[sv <= rcond * sv.max()]
        dofs = sorted(set(int(i) for v in null for i in np.flatnonzero(np.abs(v) > 0.1 * np.abs(v).max())))
        nc = system.ncomp
        named = sorted(set((int(system.ids[d // nc]), d % nc) for d in dofs))
        raise SingularSystemError(f"singular system: {len(null)} zero-energy modes on (id, comp) {named[:12]}",
                                  named)
    return np.linalg.solve(K, F), float(sv.max() / sv.min()) if sv.size else 1.0


def evaluate_solution(res, system, u, materials, points=None):
    """Yield (cluster, x, w_phys, values, grads) for non-void bulk clusters."""
    ev = _Evaluator(res, "diffusion" if system.ncomp == 1 else "elasticity", materials, system.index)
    bg = res.bg
    for m, lst in res.clusters.bulk.items():
        if materials[m].void:
            continue
        for cl in lst:
            N, dN = bg.eval_basis_phys(cl.E, cl.xi, 1)
            d = ev.dofs(cl.s)
            coef = u[d].reshape(-1, system.ncomp)  # (nb, nc)
            vals = N @ coef
            grads = np.einsum("qib,bc->qci", dN, coef)
            yield m, cl, bg.param_to_phys(cl.E, cl.xi), cl.w * bg.jac_det, vals, grads


def error_norms(res, system, u, materials, exact, exact_grad):
    l2 = h1 = ref_l2 = ref_h1 = 0.0
    for m, cl, x, w, vals, grads in evaluate_solution(res, system, u, materials):
        ue = np.asarray(exact(x)).reshape(len(w), -1)
        ge = np.asarray(exact_grad(x)).reshape(len(w), system.ncomp, -1)
        l2 += np.sum(w * np.sum((vals - ue) ** 2, axis=1))
        h1 += np.sum(w * np.sum((grads - ge) ** 2, axis=(1, 2)))
        ref_l2 += np.sum(w * np.sum(ue ** 2, axis=1))
        ref_h1 += np.sum(w * np.sum(ge ** 2, axis=(1, 2)))
    return {"L2": float(np.sqrt(l2)), "H1_semi": float(np.sqrt(h1)),
            "L2_rel": float(np.sqrt(l2 / ref_l2)) if ref_l2 > 0 else float("nan"),
            "H1_rel": float(np.sqrt(h1 / ref_h1)) if ref_h1 > 0 else float("nan")}


def stresses(res, system, u, materials):
    """Plane-stress (sxx, syy, sxy) at every non-void bulk quadrature point, with coordinates."""
    xs, sig = [], []
    for m, cl, x, w, vals, grads in evaluate_solution(res, system, u, materials):
        eps = np.stack([grads[:, 0, 0], grads[:, 1, 1], grads[:, 0, 1] + grads[:, 1, 0]], axis=1)
        D = elasticity_matrix(materials[m].E, materials[m].nu)
        sig.append(eps @ D.T)
        xs.append(x)
    return np.vstack(xs), np.vstack(sig)


def solve_and_measure(system, res=None, materials=None, exact=None, exact_grad=None):
    u, cond = solve(system)
    out = {"solution": u, "condition": cond}
    if exact is not None:
        out.update(error_norms(res, system, u, materials, exact, exact_grad))
    return out
