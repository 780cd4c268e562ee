"""Mixed and least-squares mixed discretizations of the Poisson problem.

Both solvers work on an all-Dirichlet boundary (the scalar unknown vanishes
on the whole boundary).  The mixed method pairs conforming RTN_p fluxes with
the broken P_p multiplier; the least-squares method couples the flux with a
continuous P_q potential through the first-order system functional
  l^2 ||div p - f||^2 + ||p + grad u||^2 ,
whose bilinear form is coercive with constant 1/8 in the scaled norm.
"""

from __future__ import annotations

from dataclasses import dataclass
import warnings as _warnings

import numpy as np
import scipy.sparse as sp

from . import polys
from .elements import rtn_space, scalar_basis
from .fields import AnalyticField
from .linsolve import SparseFactor
from .projections import ScalarPWField
from .projector import ConformingRTNField
from .quadpolicy import QuadPolicy
from .quadrature import quad_rule


class ModelProblemError(ValueError):
    pass


@dataclass
class PoissonProblem:
    """-laplace(u) = f with u = 0 on the whole boundary."""

    mesh: object
    f: callable  # pts -> values
    u: callable | None = None
    grad_u: callable | None = None
    sigma: AnalyticField | None = None  # exact flux -grad u as a field
    l_omega: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.mesh.edges_with_label("neumann"):
            raise ModelProblemError(
                "model problems require an all-Dirichlet boundary"
            )
        if not self.l_omega:
            self.l_omega = self.mesh.diameter()

    def residual_check(self, n_points=20, seed=0, tol=1e-9):
        """Spot-check -laplace(u) = f by comparing f against the divergence
        of the manufactured flux at random interior points."""
        if self.sigma is None:
            return 0.0
        rng = np.random.default_rng(seed)
        lo = self.mesh.vertices.min(axis=0)
        hi = self.mesh.vertices.max(axis=0)
        pts = lo + (hi - lo) * rng.random((n_points, 2))
        fv = np.asarray(self.f(pts), float)
        dv = self.sigma.eval_div(pts)
        scale = max(np.abs(fv).max(), 1e-300)
        defect = np.abs(fv - dv).max() / scale
        if defect > tol:
            raise ModelProblemError(f"manufactured pair inconsistent: {defect:.2e}")
        return defect


def manufactured_sine(mesh) -> PoissonProblem:
    """u = sin(pi x) sin(pi y), f = 2 pi^2 u, flux = -grad u."""

    def u(pts):
        return np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])

    def grad_u(pts):
        return np.stack(
            [
                np.pi * np.cos(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1]),
                np.pi * np.sin(np.pi * pts[:, 0]) * np.cos(np.pi * pts[:, 1]),
            ],
            axis=1,
        )

    def f(pts):
        return 2 * np.pi**2 * u(pts)

    sigma = AnalyticField(
        name="sine_flux", v=lambda pts: -grad_u(pts), div=f, divergence_free=False
    )
    return PoissonProblem(mesh=mesh, f=f, u=u, grad_u=grad_u, sigma=sigma, name="sine")


def manufactured_bubble(mesh) -> PoissonProblem:
    """u = x(1-x) y(1-y): flux in RTN_3 exactly, potential in P_4."""

    def u(pts):
        x, y = pts[:, 0], pts[:, 1]
        return x * (1 - x) * y * (1 - y)

    def grad_u(pts):
        x, y = pts[:, 0], pts[:, 1]
        return np.stack(
            [(1 - 2 * x) * y * (1 - y), x * (1 - x) * (1 - 2 * y)], axis=1
        )

    def f(pts):
        x, y = pts[:, 0], pts[:, 1]
        return 2 * y * (1 - y) + 2 * x * (1 - x)

    sigma = AnalyticField(
        name="bubble_flux", v=lambda pts: -grad_u(pts), div=f, poly_degree=3
    )
    return PoissonProblem(
        mesh=mesh, f=f, u=u, grad_u=grad_u, sigma=sigma, name="bubble"
    )


def _flux_system(prob, p, policy):
    """Shared conforming-mass / divergence blocks and data moments."""
    mesh = prob.mesh
    space = rtn_space(mesh, p)
    nt = mesh.num_triangles
    sdim = space.elements[0].sdim
    n = space.ndof
    rowsM, colsM, valsM = [], [], []
    rowsB, colsB, valsB = [], [], []
    fmom = np.zeros(nt * sdim)
    for k in range(nt):
        el = space.elements[k]
        tri, _, _ = policy.element_rules(el, key=("tri", k))
        pts = el.quad_points(tri)
        gm = space.element_dof_map(k)
        rowsM.append(np.repeat(gm, len(gm)))
        colsM.append(np.tile(gm, len(gm)))
        valsM.append(el.M.ravel())
        rr = k * sdim + np.arange(sdim)
        rowsB.append(np.repeat(rr, len(gm)))
        colsB.append(np.tile(gm, sdim))
        valsB.append(el.Bdiv.ravel())
        fmom[rr] = el.scalar_moments(np.asarray(prob.f(pts), float), tri)
    M = sp.coo_matrix(
        (np.concatenate(valsM), (np.concatenate(rowsM), np.concatenate(colsM))),
        shape=(n, n),
    ).tocsr()
    B = sp.coo_matrix(
        (np.concatenate(valsB), (np.concatenate(rowsB), np.concatenate(colsB))),
        shape=(nt * sdim, n),
    ).tocsr()
    return space, M, B, fmom


def solve_mixed(prob: PoissonProblem, p: int):
    """Dual mixed method: (sigma_M, v) - (u_M, div v) = 0, (div sigma_M, q) = (f, q).

    The second block makes div sigma_M equal the broken projection of f in
    coefficients.
    """
    policy = QuadPolicy(p, field=prob.sigma, degree=None)
    space, M, B, fmom = _flux_system(prob, p, policy)
    nt = prob.mesh.num_triangles
    sdim = space.elements[0].sdim
    A = sp.bmat([[M, -B.T], [-B, None]], format="csc")
    b = np.concatenate([np.zeros(space.ndof), -fmom])
    sol = SparseFactor(A).solve(b)
    sigma = ConformingRTNField(prob.mesh, p, sol[: space.ndof])
    u = ScalarPWField(prob.mesh, p, sol[space.ndof :].reshape(nt, sdim))
    res = np.linalg.norm(A @ sol - b) / max(np.linalg.norm(b), 1e-300)
    div_defect = float(np.abs((B @ sigma.dofs) - fmom).max())
    return {
        "sigma": sigma,
        "u": u,
        "kkt_residual": res,
        "div_constraint_defect": div_defect,
    }


# -- continuous Lagrange spaces --------------------------------------------------------


class LagrangeSpace:
    """Continuous piecewise P_q with zero boundary trace, equispaced nodes."""

    def __init__(self, mesh, q: int):
        if q < 1:
            raise ModelProblemError("Lagrange degree must be >= 1")
        if q > 4:
            _warnings.warn(
                f"equispaced Lagrange nodes of degree {q} are ill-conditioned",
                RuntimeWarning,
            )
        self.mesh = mesh
        self.q = q
        self.n_edge = q - 1
        self.n_int = (q - 1) * (q - 2) // 2
        self.n_nodes = (
            mesh.num_vertices
            + mesh.num_edges * self.n_edge
            + mesh.num_triangles * self.n_int
        )
        ref_nodes = []
        classify = []
        for i in range(q + 1):
            for j in range(q + 1 - i):
                ref_nodes.append((i / q, j / q))
                lam = (1 - (i + j) / q, i / q, j / q)
                if max(lam) == 1.0:
                    classify.append(("v", int(np.argmax(lam))))
                elif min(lam) == 0.0:
                    z = lam.index(0.0)
                    # node on the edge opposite vertex z
                    classify.append(("e", z))
                else:
                    classify.append(("i", None))
        self.ref_nodes = np.array(ref_nodes)
        self.classify = classify
        V = polys.eval_monomials(q, self.ref_nodes).T
        self.nodal = np.linalg.solve(V, np.eye(len(ref_nodes)))  # cols: basis coeffs
        self._elem_nodes = [self._element_nodes(k) for k in range(mesh.num_triangles)]
        self.boundary_nodes = self._boundary_nodes()
        self.free = np.ones(self.n_nodes, dtype=bool)
        self.free[self.boundary_nodes] = False
        self.free_index = np.flatnonzero(self.free)
        self.pos = -np.ones(self.n_nodes, dtype=int)
        self.pos[self.free_index] = np.arange(len(self.free_index))

    def _edge_node_id(self, e, frac_num):
        return self.mesh.num_vertices + e * self.n_edge + (frac_num - 1)

    def _element_nodes(self, k):
        mesh = self.mesh
        tri = mesh.triangles[k]
        q = self.q
        ids = []
        i_int = 0
        for (i, j), (kind, data) in zip(
            [(i, j) for i in range(q + 1) for j in range(q + 1 - i)], self.classify
        ):
            lam = (1 - (i + j) / q, i / q, j / q)
            if kind == "v":
                ids.append(int(tri[data]))
            elif kind == "e":
                z = data
                la, lb = [m for m in range(3) if m != z]
                va, vb = int(tri[la]), int(tri[lb])
                e = mesh.tri_edges[k, z]
                # fraction along the global lower -> higher direction
                num = round(lam[lb] * q) if va < vb else round(lam[la] * q)
                ids.append(self._edge_node_id(e, num))
            else:
                base = (
                    self.mesh.num_vertices
                    + self.mesh.num_edges * self.n_edge
                    + k * self.n_int
                )
                ids.append(base + i_int)
                i_int += 1
        return np.array(ids, dtype=int)

    def _boundary_nodes(self):
        mesh = self.mesh
        out = set()
        for e in mesh.boundary_edges():
            a, b = mesh.edges[e]
            out.add(int(a))
            out.add(int(b))
            for t in range(1, self.q):
                out.add(self._edge_node_id(e, t))
        return np.array(sorted(out), dtype=int)

    def node_coords(self):
        mesh = self.mesh
        coords = np.zeros((self.n_nodes, 2))
        coords[: mesh.num_vertices] = mesh.vertices
        for e in range(mesh.num_edges):
            a, b = mesh.edges[e]
            for t in range(1, self.q):
                coords[self._edge_node_id(e, t)] = mesh.vertices[a] + (
                    t / self.q
                ) * mesh.edge_vector(e)
        for k in range(mesh.num_triangles):
            ids = self._elem_nodes[k]
            xs = mesh.triangle_coords(k)
            for local, (i, j) in enumerate(
                [(i, j) for i in range(self.q + 1) for j in range(self.q + 1 - i)]
            ):
                lam = np.array([1 - (i + j) / self.q, i / self.q, j / self.q])
                coords[ids[local]] = lam @ xs
        return coords

    def basis_values(self, refpts):
        return self.nodal.T @ polys.eval_monomials(self.q, refpts)

    def basis_grads_ref(self, refpts):
        gx, gy = polys.eval_monomials_grad(self.q, refpts)
        return self.nodal.T @ gx, self.nodal.T @ gy

    def eval_element(self, nodal_values, k, refpts):
        ids = self._elem_nodes[k]
        return nodal_values[ids] @ self.basis_values(refpts)

    def eval_grad_element(self, nodal_values, k, refpts):
        gx, gy = self.basis_grads_ref(refpts)
        el_vals = nodal_values[self._elem_nodes[k]]
        space = rtn_space(self.mesh, 0)
        Binv = space.elements[k].Binv
        gref = np.stack([el_vals @ gx, el_vals @ gy], axis=1)
        return gref @ Binv


def _lagrange_stiffness(ls: LagrangeSpace, rule):
    mesh = ls.mesh
    space = rtn_space(mesh, 0)
    nn = ls.n_nodes
    gx, gy = ls.basis_grads_ref(rule.points)
    rows, cols, vals = [], [], []
    rhs_template = np.zeros(nn)
    for k in range(mesh.num_triangles):
        el = space.elements[k]
        grad_ref = np.stack([gx, gy], axis=2)
        grad = np.einsum("dc,nqc->nqd", el.Binv.T, grad_ref)
        w = rule.weights * el.detB
        Sk = np.einsum("q,nqd,mqd->nm", w, grad, grad)
        ids = ls._elem_nodes[k]
        rows.append(np.repeat(ids, len(ids)))
        cols.append(np.tile(ids, len(ids)))
        vals.append(Sk.ravel())
    S = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nn, nn),
    ).tocsr()
    return S


def solve_ls_mixed(prob: PoissonProblem, p: int, q: int):
    """Least-squares mixed method: minimize the first-order system functional
    over conforming RTN_p fluxes and zero-trace P_q potentials."""
    mesh = prob.mesh
    policy = QuadPolicy(p, field=prob.sigma, degree=None)
    space, M, B, fmom = _flux_system(prob, p, policy)
    ls = LagrangeSpace(mesh, q)
    l2 = prob.l_omega**2
    nt = mesh.num_triangles
    sdim = space.elements[0].sdim
    # D = B^T B is (div, div) on conforming dofs thanks to the orthonormal
    # scalar basis; G couples fluxes with potential gradients
    D = (B.T @ B).tocsr()
    rule = quad_rule(2 * (p + 1) + 2 * q)
    gxr, gyr = ls.basis_grads_ref(rule.points)
    rowsG, colsG, valsG = [], [], []
    for k in range(nt):
        el = space.elements[k]
        grad_ref = np.stack([gxr, gyr], axis=2)
        grad = np.einsum("dc,nqc->nqd", el.Binv.T, grad_ref)
        w = rule.weights * el.detB
        bv = el.basis_values_ref(rule.points)
        Gk = np.einsum("q,nqd,kqd->nk", w, grad, bv)
        ids = ls._elem_nodes[k]
        gm = space.element_dof_map(k)
        rowsG.append(np.repeat(ids, len(gm)))
        colsG.append(np.tile(gm, len(ids)))
        valsG.append(Gk.ravel())
    G = sp.coo_matrix(
        (np.concatenate(valsG), (np.concatenate(rowsG), np.concatenate(colsG))),
        shape=(ls.n_nodes, space.ndof),
    ).tocsr()
    S = _lagrange_stiffness(ls, quad_rule(2 * q))
    fr = ls.free_index
    A = sp.bmat(
        [
            [l2 * D + M, G[fr].T],
            [G[fr], S[fr][:, fr]],
        ],
        format="csc",
    )
    b = np.concatenate([l2 * (B.T @ fmom), np.zeros(len(fr))])
    sol = SparseFactor(A).solve(b)
    sigma = ConformingRTNField(mesh, p, sol[: space.ndof])
    u = np.zeros(ls.n_nodes)
    u[fr] = sol[space.ndof :]
    res = np.linalg.norm(A @ sol - b) / max(np.linalg.norm(b), 1e-300)
    return {
        "sigma": sigma,
        "u": u,
        "space": ls,
        "kkt_residual": res,
        "blocks": {"M": M, "B": B, "D": D, "G": G, "S": S, "fmom": fmom, "l2": l2},
    }


# -- error evaluation -------------------------------------------------------------------


def flux_error(prob: PoissonProblem, sigma_h: ConformingRTNField, *, quad_degree=None):
    """||sigma - sigma_h|| over the mesh by elementwise quadrature."""
    mesh = prob.mesh
    p = sigma_h.p
    policy = QuadPolicy(p, field=prob.sigma, degree=quad_degree)
    space = rtn_space(mesh, p)
    total = 0.0
    for k in range(mesh.num_triangles):
        el = space.elements[k]
        tri, _, _ = policy.element_rules(el, key=("tri", k))
        pts = el.quad_points(tri)
        diff = prob.sigma.eval(pts) - sigma_h.eval(pts, elem=k)
        total += el.norm_sq(diff, tri)
    return np.sqrt(total)


def flux_div_error(prob: PoissonProblem, sigma_h: ConformingRTNField, *, quad_degree=None):
    """||div(sigma - sigma_h)|| over the mesh."""
    mesh = prob.mesh
    p = sigma_h.p
    policy = QuadPolicy(p, field=prob.sigma, degree=quad_degree)
    space = rtn_space(mesh, p)
    total = 0.0
    for k in range(mesh.num_triangles):
        el = space.elements[k]
        tri, _, _ = policy.element_rules(el, key=("tri", k))
        pts = el.quad_points(tri)
        diff = prob.sigma.eval_div(pts) - sigma_h.eval_div(pts, elem=k)
        total += el.norm_sq(diff, tri)
    return np.sqrt(total)


def potential_h1_error(prob: PoissonProblem, ls: LagrangeSpace, u_h, *, quad_degree=None):
    """||grad(u - u_h)|| by elementwise quadrature."""
    mesh = prob.mesh
    rule = quad_rule(quad_degree or (2 * ls.q + 10))
    space = rtn_space(mesh, 0)
    total = 0.0
    for k in range(mesh.num_triangles):
        el = space.elements[k]
        pts = el.map_to_phys(rule.points)
        diff = prob.grad_u(pts) - ls.eval_grad_element(u_h, k, rule.points)
        total += el.norm_sq(diff, (pts, rule.weights * el.detB))
    return np.sqrt(total)


def h1_best_global(prob: PoissonProblem, q: int):
    """Elliptic projection: the H1-best zero-trace P_q approximation of u."""
    mesh = prob.mesh
    ls = LagrangeSpace(mesh, q)
    S = _lagrange_stiffness(ls, quad_rule(2 * q))
    rule = quad_rule(2 * q + 10)
    space = rtn_space(mesh, 0)
    rhs = np.zeros(ls.n_nodes)
    gx, gy = ls.basis_grads_ref(rule.points)
    for k in range(mesh.num_triangles):
        el = space.elements[k]
        grad_ref = np.stack([gx, gy], axis=2)
        grad = np.einsum("dc,nqc->nqd", el.Binv.T, grad_ref)
        w = rule.weights * el.detB
        gu = prob.grad_u(el.map_to_phys(rule.points))
        rhs[ls._elem_nodes[k]] += np.einsum("q,nqd,qd->n", w, grad, gu)
    fr = ls.free_index
    uh = np.zeros(ls.n_nodes)
    uh[fr] = SparseFactor(S[fr][:, fr].tocsc()).solve(rhs[fr])
    return ls, uh, potential_h1_error(prob, ls, uh)


def h1_best_local_sum(prob: PoissonProblem, q: int, *, quad_degree=None):
    """Root sum of elementwise unconstrained H1-best errors min ||grad(u - w)||_K."""
    mesh = prob.mesh
    rule = quad_rule(quad_degree or (2 * q + 10))
    space = rtn_space(mesh, 0)
    sb = scalar_basis(q)
    gx, gy = polys.eval_monomials_grad(q, rule.points)
    gx = sb.rows @ gx
    gy = sb.rows @ gy
    total = 0.0
    for k in range(mesh.num_triangles):
        el = space.elements[k]
        grad_ref = np.stack([gx, gy], axis=2)[1:]  # drop the constant
        grad = np.einsum("dc,nqc->nqd", el.Binv.T, grad_ref)
        w = rule.weights * el.detB
        gu = prob.grad_u(el.map_to_phys(rule.points))
        Gm = np.einsum("q,nqd,mqd->nm", w, grad, grad)
        r = np.einsum("q,nqd,qd->n", w, grad, gu)
        c = np.linalg.lstsq(Gm, r, rcond=None)[0]
        resid = gu - np.einsum("n,nqd->qd", c, grad)
        total += el.norm_sq(resid, (None, w))
    return np.sqrt(total)


def ls_functional_value(res, pair_flux, pair_pot):
    """A(p, v; p, v) from the assembled blocks (diagonal of the bilinear form)."""
    blocks = res["blocks"]
    M, D, G, S, l2 = blocks["M"], blocks["D"], blocks["G"], blocks["S"], blocks["l2"]
    p_, v_ = pair_flux, pair_pot
    return (
        float(v_ @ (S @ v_))
        + 2 * float(v_ @ (G @ p_))
        + float(p_ @ (M @ p_))
        + l2 * float(p_ @ (D @ p_))
    )


def coercivity_witness(res, n_pairs=20, seed=0):
    """Minimum slack of A(p,v;p,v) >= (1/8)(||p||^2 + l^2 ||div p||^2 + ||grad v||^2)
    over random discrete pairs (normalized)."""
    blocks = res["blocks"]
    M, D, G, S, l2 = blocks["M"], blocks["D"], blocks["G"], blocks["S"], blocks["l2"]
    nf = M.shape[0]
    ls = res["space"]
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n_pairs):
        p_ = rng.standard_normal(nf)
        v_ = np.zeros(ls.n_nodes)
        v_[ls.free_index] = rng.standard_normal(len(ls.free_index))
        lhs = ls_functional_value(res, p_, v_)
        rhs = (
            float(p_ @ (M @ p_))
            + l2 * float(p_ @ (D @ p_))
            + float(v_ @ (S @ v_))
        )
        worst = min(worst, (lhs - rhs / 8.0) / max(rhs, 1e-300))
    return worst


def apriori_checks(prob_builder, p: int, q: int, meshes, *, quad_degree=None):
    """Cross-checks tying the solvers to the best-approximation machinery.

    Per mesh: (a) the mixed flux error against the constrained global best,
    (b) the least-squares total error against flux-best + H1-best with the
    worst-case factor 17, (c) the divergence bound slack, (d) the H1
    global/local best ratio (recorded only).
    """
    from .best_approx import global_best

    out = []
    for mesh in meshes:
        prob = prob_builder(mesh)
        prob.residual_check()
        mixed = solve_mixed(prob, p)
        err_mixed = flux_error(prob, mixed["sigma"], quad_degree=quad_degree)
        glob = global_best(prob.sigma, p, mesh, quad_degree=quad_degree)
        a_defect = abs(err_mixed - glob["Eglob_l2"]) / max(glob["Eglob_l2"], 1e-300)
        lsres = solve_ls_mixed(prob, p, q)
        err_ls = flux_error(prob, lsres["sigma"], quad_degree=quad_degree)
        err_h1 = potential_h1_error(prob, lsres["space"], lsres["u"], quad_degree=quad_degree)
        _, _, h1_glob = h1_best_global(prob, q)
        h1_loc = h1_best_local_sum(prob, q, quad_degree=quad_degree)
        denom = glob["Eglob_l2"] + h1_glob
        R = (err_ls + err_h1) / max(denom, 1e-300)
        # divergence bound: l^2 ||div(s - s_LS)||^2 <= l^2 osc^2 + H1 err^2 + flux-best^2
        div_err = flux_div_error(prob, lsres["sigma"], quad_degree=quad_degree)
        osc = _div_oscillation(prob, p, quad_degree=quad_degree)
        l2 = prob.l_omega**2
        slack = (l2 * osc**2 + err_h1**2 + glob["Eglob_l2"] ** 2) - l2 * div_err**2
        scale = max(l2 * div_err**2, l2 * osc**2, 1e-300)
        out.append(
            {
                "mesh_h": mesh.h_max,
                "mixed_vs_globalbest": a_defect,
                "err_mixed": err_mixed,
                "Eglob_l2": glob["Eglob_l2"],
                "ls_ratio": R,
                "err_ls": err_ls,
                "err_h1": err_h1,
                "h1_best_global": h1_glob,
                "h1_best_local_sum": h1_loc,
                "h1_glob_over_loc": (h1_glob / h1_loc) if h1_loc > 0 else 0.0,
                "div_bound_slack": slack / scale,
                "coercivity_witness": coercivity_witness(lsres),
            }
        )
    return out


def _div_oscillation(prob, p, *, quad_degree=None):
    """||div sigma - Pi_p div sigma|| (unweighted) over the mesh."""
    mesh = prob.mesh
    policy = QuadPolicy(p, field=prob.sigma, degree=quad_degree)
    space = rtn_space(mesh, p)
    total = 0.0
    for k in range(mesh.num_triangles):
        el = space.elements[k]
        tri, _, _ = policy.element_rules(el, key=("tri", k))
        pts = el.quad_points(tri)
        dv = prob.sigma.eval_div(pts)
        proj = el.scalar_values(el.scalar_moments(dv, tri), pts)
        total += el.norm_sq(dv - proj, tri)
    return np.sqrt(total)


def galerkin_orthogonality(prob, res, n_pairs=20, seed=0):
    """Residual of the least-squares orthogonality on random discrete pairs.

    The exact pair satisfies A(s, u; p, v) = l^2 (f, div p); the discrete
    residual against discrete test pairs measures solver fidelity.
    """
    blocks = res["blocks"]
    M, D, G, S, fmom, l2 = (
        blocks["M"],
        blocks["D"],
        blocks["G"],
        blocks["S"],
        blocks["fmom"],
        blocks["l2"],
    )
    B = blocks["B"]
    ls = res["space"]
    sig = res["sigma"].dofs
    u = res["u"]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        p_ = rng.standard_normal(M.shape[0])
        v_ = np.zeros(ls.n_nodes)
        v_[ls.free_index] = rng.standard_normal(len(ls.free_index))
        # A(sig, u; p_, v_) - l^2 (f, div p_)
        lhs = (
            float(v_ @ (S @ u))
            + float(v_ @ (G @ sig))
            + float(u @ (G @ p_))
            + float(sig @ (M @ p_))
            + l2 * float(sig @ (D @ p_))
        )
        rhs = l2 * float(fmom @ (B @ p_))
        scale = max(abs(lhs), abs(rhs), 1e-300)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst
