"""Brute-force reference implementations, kept independent of the library's
solve paths: exact monomial integrals, normal-equation least squares, and
null-space constrained minimization."""

from fractions import Fraction

import numpy as np
from scipy.linalg import null_space

from hdivkit import polys
from hdivkit.elements import rtn_space
from hdivkit.quadrature import gauss01, quad_rule

# -- exact integrals on the reference triangle ---------------------------------------


def exact_integral(a, b):
    return polys.mono_integral(a, b)


def exact_l2_misfit_const(coeff_pairs):
    """|| f - mean(f) ||^2 on the reference triangle for f = sum c x^a y^b,
    computed with exact rational arithmetic."""
    area = Fraction(1, 2)
    mean = sum(Fraction(c) * exact_integral(a, b) for c, (a, b) in coeff_pairs) / area
    # int f^2
    sq = Fraction(0)
    for c1, (a1, b1) in coeff_pairs:
        for c2, (a2, b2) in coeff_pairs:
            sq += Fraction(c1) * Fraction(c2) * exact_integral(a1 + a2, b1 + b2)
    return sq - area * mean * mean


# -- dense constrained least squares via the null-space method --------------------------


def nullspace_constrained_min(M, b, B, g):
    """argmin 1/2 x^T M x - b^T x subject to B x = g, solved by a particular
    solution plus a null-space parametrization (independent of any KKT path)."""
    M = np.asarray(M, float)
    B = np.atleast_2d(np.asarray(B, float))
    x0 = np.linalg.lstsq(B, np.asarray(g, float), rcond=None)[0]
    N = null_space(B)
    if N.size == 0:
        return x0
    y = np.linalg.solve(N.T @ M @ N, N.T @ (np.asarray(b, float) - M @ x0))
    return x0 + N @ y


def element_kkt_oracle(mesh, k, p, v_eval, div_eval, quad_degree=30):
    """Divergence-constrained element fit assembled from plain quadrature and
    solved by the null-space method."""
    space = rtn_space(mesh, p)
    el = space.elements[k]
    rule = quad_rule(quad_degree)
    pts = el.map_to_phys(rule.points)
    w = rule.weights * el.detB
    bv = el.basis_values_ref(rule.points)
    M = np.einsum("q,kqd,lqd->kl", w, bv, bv)
    b = np.einsum("q,kqd,qd->k", w, bv, v_eval(pts))
    g = el.scalar_moments(div_eval(pts), (pts, w))
    return nullspace_constrained_min(M, b, el.Bdiv, g)


def patch_oracle(mesh, patch, p, theta_coeffs, chi, g):
    """Patch equilibration by the null-space method on the active dofs.

    For interior/Neumann patches the incompatible component of g is removed
    against the constant direction first (same data handling, different
    solver algebra).
    """
    from hdivkit.local_solve import PatchSpace

    space = rtn_space(mesh, p)
    ps = PatchSpace.build(patch, space)
    nd = ps.ndof
    sdim = space.elements[0].sdim
    M = np.zeros((nd, nd))
    b = np.zeros(nd)
    B = np.zeros((len(patch.tris) * sdim, nd))
    grhs = np.zeros(len(patch.tris) * sdim)
    for t_idx, k in enumerate(patch.tris):
        k = int(k)
        el = space.elements[k]
        m = ps.elem_maps[k]
        act = m >= 0
        ia = m[act]
        M[np.ix_(ia, ia)] += el.M[np.ix_(act, act)]
        b[ia] += el.M[act] @ chi[k]
        B[t_idx * sdim : (t_idx + 1) * sdim, ia] = el.Bdiv[:, act]
        grhs[t_idx * sdim : (t_idx + 1) * sdim] = g[k]
    if patch.kind in ("interior", "neumann"):
        kern = np.zeros(len(patch.tris) * sdim)
        for t_idx, k in enumerate(patch.tris):
            kern[t_idx * sdim] = np.sqrt(space.elements[int(k)].area)
        grhs = grhs - kern * (kern @ grhs) / (kern @ kern)
    return nullspace_constrained_min(M, b, B, grhs), ps


def projector_oracle(v, p, mesh, quad_degree=None):
    """End-to-end projection error computed through the brute-force patch
    path at doubled quadrature degree."""
    from hdivkit.local_solve import build_patch_problem, theta_field
    from hdivkit.mesh import vertex_patches
    from hdivkit.projector import ConformingRTNField
    from hdivkit.quadpolicy import QuadPolicy

    qd = quad_degree or (2 * (2 * p + 14))
    policy = QuadPolicy(p, field=v, degree=qd, self_check=False)
    theta = theta_field(v, p, mesh, policy=policy)
    space = rtn_space(mesh, p)
    sigma = ConformingRTNField(mesh, p)
    for patch in vertex_patches(mesh):
        prob = build_patch_problem(patch, theta, v, p, mesh, policy=policy)
        s = nullspace_constrained_min(
            prob.M,
            prob.rhs,
            prob.B,
            prob.grhs
            - (
                prob.kernel * (prob.kernel @ prob.grhs) / (prob.kernel @ prob.kernel)
                if prob.kernel is not None
                else 0.0
            ),
        )
        sigma.dofs[prob.pspace.global_dof_map(space)] += s
    err2 = 0.0
    rule = quad_rule(qd)
    for k in range(mesh.num_triangles):
        el = space.elements[k]
        pts = el.map_to_phys(rule.points)
        diff = v.eval(pts, elem=k) - sigma.eval(pts, elem=k)
        err2 += el.norm_sq(diff, rule)
    return np.sqrt(err2), sigma


def edge_projection_oracle(mesh, e, g_eval, p):
    """1D least squares against monomials of the arclength parameter with
    dense normal equations and high-order Gauss quadrature."""
    a, b = mesh.edges[e]
    pa = mesh.vertices[a]
    vec = mesh.edge_vector(e)
    L = mesh.edge_length(e)
    t, w = gauss01(40)
    pts = pa[None, :] + t[:, None] * vec[None, :]
    V = np.vander(t, p + 1, increasing=True).T  # rows: monomials t^i
    G = (V * w) @ V.T
    r = (V * w) @ np.asarray(g_eval(pts), float)
    c = np.linalg.solve(G, r)
    return c @ V  # projected values at the Gauss points
