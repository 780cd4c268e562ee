"""Scalar and Raviart-Thomas-Nedelec bases, Piola mapping, element matrices.

The scalar basis on a physical triangle K is the reference orthonormal basis
pulled through the affine map and rescaled by 1/sqrt(det B), so it is
L2(K)-orthonormal; scalar coefficient vectors therefore carry the L2 norm
directly and the scalar mass matrix is the identity.

The vector basis on K is dual to the classical face-and-interior degrees of
freedom, evaluated against globally oriented data:
  * edge dofs integrate v.n against Legendre polynomials that are
    L2-orthonormal on the edge, parametrized lower -> higher endpoint with
    the global unit normal (tangent rotated by -90 degrees);
  * interior dofs integrate v against the L2(K)-orthonormal scalar basis of
    one degree less, component by component.
Because the edge data is global, coefficient vectors of fields on neighboring
elements agree on the shared edge dofs exactly when the normal trace is
continuous; no sign flips are needed during assembly.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import legval

from . import polys
from .quadrature import TriangleRule, gauss01, quad_rule


def rtn_dim(p: int) -> int:
    return (p + 1) * (p + 3)


class ElementGeometryError(ValueError):
    pass


class BasisConsistencyError(RuntimeError):
    pass


# -- reference scalar basis -------------------------------------------------------


class ScalarBasis:
    """L2-orthonormal basis of P_degree on the reference triangle."""

    def __init__(self, degree: int):
        self.degree = degree
        self.dim = polys.tri_dim(degree)
        self.rows = polys.scalar_orthonormal(degree)

    def eval(self, pts) -> np.ndarray:
        """Basis values at reference points; shape (dim, npts)."""
        return self.rows @ polys.eval_monomials(self.degree, pts)

    def eval_grad(self, pts):
        """Reference gradients; two arrays of shape (dim, npts)."""
        gx, gy = polys.eval_monomials_grad(self.degree, pts)
        return self.rows @ gx, self.rows @ gy


@lru_cache(maxsize=None)
def scalar_basis(degree: int) -> ScalarBasis:
    return ScalarBasis(degree)


# -- reference RTN primal set --------------------------------------------------------


def _rtn_raw_fractions(p: int):
    """Raw generating set of RTN_p: P_p^2 plus x * (homogeneous degree p)."""
    comp_deg = p + 1
    n = polys.tri_dim(comp_deg)
    idx = {ab: k for k, ab in enumerate(polys.exponents(comp_deg))}
    members = []
    for a, b in polys.exponents(p):
        cx = [Fraction(0)] * n
        cx[idx[(a, b)]] = Fraction(1)
        members.append((cx, [Fraction(0)] * n))
    for a, b in polys.exponents(p):
        cy = [Fraction(0)] * n
        cy[idx[(a, b)]] = Fraction(1)
        members.append(([Fraction(0)] * n, cy))
    for a in range(p, -1, -1):
        b = p - a
        cx = [Fraction(0)] * n
        cy = [Fraction(0)] * n
        cx[idx[(a + 1, b)]] = Fraction(1)
        cy[idx[(a, b + 1)]] = Fraction(1)
        members.append((cx, cy))
    return members


class RTNBasis:
    """Orthonormalized generating set of RTN_p on the reference triangle.

    ``prim_x`` / ``prim_y`` hold monomial coefficients (degree p+1) of the
    components; ``div_rows`` expands each divergence in the orthonormal
    scalar basis of degree p.  All combinations are produced by rational
    Gram-Schmidt.
    """

    def __init__(self, p: int):
        if p < 0:
            raise ValueError("polynomial degree must be >= 0")
        self.degree = p
        self.dim = rtn_dim(p)
        members = _rtn_raw_fractions(p)
        comp_deg = p + 1
        gram = polys.gram_fraction(comp_deg, comp_deg)
        n = len(members)
        G = [
            [
                sum(
                    (cx1[i] * cx2[j] + cy1[i] * cy2[j]) * gram[i][j]
                    for i in range(len(cx1))
                    for j in range(len(cx2))
                    if (cx1[i] != 0 or cy1[i] != 0) and (cx2[j] != 0 or cy2[j] != 0)
                )
                for (cx2, cy2) in members
            ]
            for (cx1, cy1) in members
        ]
        R = polys.orthonormal_rows_from_gram(G)
        raw_x = np.array([[float(v) for v in cx] for cx, _ in members])
        raw_y = np.array([[float(v) for v in cy] for _, cy in members])
        self.prim_x = R @ raw_x
        self.prim_y = R @ raw_y
        # divergence of each member, expanded in the orthonormal scalar basis
        sb = scalar_basis(p)
        div_mono = np.zeros((n, polys.tri_dim(p)))
        for k in range(n):
            dx, _ = polys.poly_dx(self.prim_x[k], comp_deg)
            dy, _ = polys.poly_dy(self.prim_y[k], comp_deg)
            div_mono[k] = dx + dy
        # coefficients alpha solve rows^T alpha = div (rows is lower triangular)
        self.div_rows = np.linalg.solve(sb.rows.T, div_mono.T)  # (sdim, nprim)
        G1 = polys.gram(comp_deg, comp_deg)
        self.gram_xx = self.prim_x @ G1 @ self.prim_x.T
        self.gram_xy = self.prim_x @ G1 @ self.prim_y.T
        self.gram_yy = self.prim_y @ G1 @ self.prim_y.T

    def eval(self, pts):
        """Component values at reference points; shape (nprim, npts, 2)."""
        mono = polys.eval_monomials(self.degree + 1, pts)
        out = np.empty((self.dim, mono.shape[1], 2))
        out[:, :, 0] = self.prim_x @ mono
        out[:, :, 1] = self.prim_y @ mono
        return out


@lru_cache(maxsize=None)
def rtn_reference(p: int) -> RTNBasis:
    return RTNBasis(p)


# -- edge dof polynomials -------------------------------------------------------------


def edge_dof_values(p: int, t, length: float) -> np.ndarray:
    """L2(edge)-orthonormal Legendre values q_i(t), i = 0..p; shape (p+1, nt)."""
    t = np.asarray(t, float)
    out = np.empty((p + 1, len(t)))
    u = 2 * t - 1
    for i in range(p + 1):
        c = np.zeros(i + 1)
        c[i] = 1.0
        out[i] = np.sqrt((2 * i + 1) / length) * legval(u, c)
    return out


# -- physical element ---------------------------------------------------------------

_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_EDGE_SLOTS = ((1, 2), (2, 0), (0, 1))  # edge slot j is opposite vertex j


class ElementRTN:
    """RTN_p basis on one physical triangle, dual to the global dofs.

    ``edge_dirs`` gives the directed local vertex pair of each edge slot
    (meshes pass the lower -> higher global ordering; standalone triangles
    default to local index order, which matches on the reference element).
    """

    def __init__(self, coords, p: int, edge_dirs=None):
        self.coords = np.asarray(coords, float).reshape(3, 2)
        self.p = p
        X0 = self.coords[0]
        B = np.column_stack([self.coords[1] - X0, self.coords[2] - X0])
        detB = B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]
        if detB <= 0:
            raise ElementGeometryError(
                f"triangle must be counterclockwise and nondegenerate (det={detB:g})"
            )
        self.X0, self.B, self.detB = X0, B, detB
        self.Binv = np.linalg.inv(B)
        self.area = detB / 2
        sides = [
            np.linalg.norm(self.coords[(j + 1) % 3] - self.coords[j]) for j in range(3)
        ]
        self.h = max(sides)
        if edge_dirs is None:
            edge_dirs = [(min(a, b), max(a, b)) for a, b in _EDGE_SLOTS]
        self.edge_dirs = list(edge_dirs)
        self.edge_len = []
        self.edge_normal = []
        for la, lb in self.edge_dirs:
            vec = self.coords[lb] - self.coords[la]
            L = np.linalg.norm(vec)
            self.edge_len.append(float(L))
            self.edge_normal.append(np.array([vec[1], -vec[0]]) / L)
        self.ref = rtn_reference(p)
        self.ndof = self.ref.dim
        self.sdim = polys.tri_dim(p)
        self.idim = polys.tri_dim(p - 1) if p >= 1 else 0
        self._build_dual()
        self._build_matrices()

    # dof layout: edge slot j gets dofs j*(p+1)..j*(p+1)+p, then interior
    # x-moments, then interior y-moments.

    def n_edge_dofs(self):
        return 3 * (self.p + 1)

    def map_to_phys(self, refpts):
        refpts = np.atleast_2d(refpts)
        return refpts @ self.B.T + self.X0

    def map_to_ref(self, physpts):
        physpts = np.atleast_2d(physpts)
        return (physpts - self.X0) @ self.Binv.T

    def piola_values(self, refvals):
        """Contravariant Piola transform of reference values (n, npts, 2)."""
        return np.einsum("dc,knc->knd", self.B, refvals) / self.detB

    def _edge_ref_points(self, slot, t):
        la, lb = self.edge_dirs[slot]
        a, b = _REF_VERTS[la], _REF_VERTS[lb]
        return a[None, :] + np.outer(t, b - a)

    def _dofs_of_refvals(self, ref_evaluator, n1d, tri_rule):
        """Dof vectors of Piola-mapped reference functions.

        ``ref_evaluator(pts)`` returns reference values (n, npts, 2).
        """
        p = self.p
        rows = []
        t, wt = gauss01(n1d)
        for slot in range(3):
            refpts = self._edge_ref_points(slot, t)
            vals = self.piola_values(ref_evaluator(refpts))
            vn = vals @ self.edge_normal[slot]
            q = edge_dof_values(p, t, self.edge_len[slot])
            dof = np.einsum("g,ig,ng->in", wt * self.edge_len[slot], q, vn)
            rows.append(dof)
        if self.idim:
            vals = self.piola_values(ref_evaluator(tri_rule.points))
            phi = scalar_basis(p - 1).eval(tri_rule.points)
            w = tri_rule.weights * np.sqrt(self.detB)
            dofx = np.einsum("g,ig,ng->in", w, phi, vals[:, :, 0])
            dofy = np.einsum("g,ig,ng->in", w, phi, vals[:, :, 1])
            rows += [dofx, dofy]
        return np.vstack(rows)  # (ndof, n)

    def _build_dual(self):
        p = self.p
        rule = quad_rule(max(2 * p, 1))
        D = self._dofs_of_refvals(self.ref.eval, p + 2, rule)
        try:
            self.C = np.linalg.solve(D, np.eye(self.ndof))
        except np.linalg.LinAlgError as exc:
            raise BasisConsistencyError("singular dof matrix") from exc

    def _build_matrices(self):
        S = self.B.T @ self.B
        Mtil = (
            S[0, 0] * self.ref.gram_xx
            + S[0, 1] * (self.ref.gram_xy + self.ref.gram_xy.T)
            + S[1, 1] * self.ref.gram_yy
        ) / self.detB
        self.M = self.C.T @ Mtil @ self.C
        self.M = (self.M + self.M.T) / 2
        self.Bdiv = (self.ref.div_rows @ self.C) / np.sqrt(self.detB)

    # -- evaluation -----------------------------------------------------------------

    def basis_values_ref(self, refpts):
        """Physical values of the dual basis at reference points: (ndof, npts, 2)."""
        prim = self.ref.eval(refpts)
        vals = self.piola_values(prim)
        return np.einsum("jk,jnd->knd", self.C, vals)

    def eval_coeffs(self, coeffs, physpts):
        """Field values sum_k c_k Phi_k at physical points; (npts, 2)."""
        refpts = self.map_to_ref(physpts)
        prim = self.ref.eval(refpts)
        combo = self.C @ np.asarray(coeffs, float)
        ref = np.einsum("j,jnd->nd", combo, prim)
        return (ref @ self.B.T) / self.detB

    def eval_div_coeffs(self, coeffs, physpts):
        """Divergence values of the coefficient field at physical points."""
        refpts = self.map_to_ref(physpts)
        phi = scalar_basis(self.p).eval(refpts) / np.sqrt(self.detB)
        return (self.Bdiv @ np.asarray(coeffs, float)) @ phi

    def ref_poly_of(self, coeffs):
        """Reference component polynomials of the coefficient field (before Piola)."""
        combo = self.C @ np.asarray(coeffs, float)
        return combo @ self.ref.prim_x, combo @ self.ref.prim_y

    def scalar_values(self, scoeffs, physpts):
        """Values of a scalar field given in the orthonormal P_p(K) basis."""
        refpts = self.map_to_ref(physpts)
        phi = scalar_basis(self.p).eval(refpts) / np.sqrt(self.detB)
        return np.asarray(scoeffs, float) @ phi

    # -- dofs of general fields --------------------------------------------------------

    def dofs_of_field(self, eval_fn, *, edge_rules=None, tri_rule=None, n1d=None):
        """Dof vector of an arbitrary field given by ``eval_fn(physpts) -> (n, 2)``.

        ``edge_rules`` may give per-slot (t, w) 1D rules (used for singular
        integrands); otherwise an ``n1d``-point Gauss rule is used on every
        edge.  ``tri_rule`` supplies the interior points/weights: either a
        TriangleRule (reference coords) or a (physpts, physweights) pair.
        """
        p = self.p
        dof = np.empty(self.ndof)
        for slot in range(3):
            if edge_rules is not None and edge_rules[slot] is not None:
                t, wt = edge_rules[slot]
            else:
                t, wt = gauss01(n1d)
            pts = self.map_to_phys(self._edge_ref_points(slot, t))
            vn = eval_fn(pts) @ self.edge_normal[slot]
            q = edge_dof_values(p, t, self.edge_len[slot])
            dof[slot * (p + 1) : (slot + 1) * (p + 1)] = (
                q * (wt * self.edge_len[slot] * vn)
            ).sum(axis=1)
        if self.idim:
            pts, w = self._interior_rule(tri_rule)
            vals = eval_fn(pts)
            phi = scalar_basis(p - 1).eval(self.map_to_ref(pts)) / np.sqrt(self.detB)
            base = 3 * (p + 1)
            dof[base : base + self.idim] = (phi * (w * vals[:, 0])).sum(axis=1)
            dof[base + self.idim :] = (phi * (w * vals[:, 1])).sum(axis=1)
        return dof

    def _interior_rule(self, tri_rule):
        if isinstance(tri_rule, TriangleRule):
            return self.map_to_phys(tri_rule.points), tri_rule.weights * self.detB
        pts, w = tri_rule
        return np.atleast_2d(pts), np.asarray(w, float)

    # -- moments --------------------------------------------------------------------

    def rtn_moments(self, values, rule):
        """(f, Phi_k)_K for field values at the rule's points; rule as above."""
        if isinstance(rule, TriangleRule):
            vals = self.basis_values_ref(rule.points)
            w = rule.weights * self.detB
        else:
            pts, w = rule
            vals = self.basis_values_ref(self.map_to_ref(pts))
        return np.einsum("q,kqd,qd->k", np.asarray(w, float), vals, values, optimize=True)

    def scalar_moments(self, values, rule):
        """(f, phi_m)_K against the orthonormal scalar P_p basis."""
        if isinstance(rule, TriangleRule):
            phi = scalar_basis(self.p).eval(rule.points) / np.sqrt(self.detB)
            w = rule.weights * self.detB
        else:
            pts, w = rule
            phi = scalar_basis(self.p).eval(self.map_to_ref(pts)) / np.sqrt(self.detB)
        return phi @ (np.asarray(w, float) * np.asarray(values, float))

    def norm_sq(self, values, rule):
        """Quadrature of |values|^2 over the element."""
        if isinstance(rule, TriangleRule):
            w = rule.weights * self.detB
        else:
            _, w = rule
        values = np.asarray(values, float)
        if values.ndim == 1:
            return float(np.sum(np.asarray(w, float) * values**2))
        return float(np.sum(np.asarray(w, float) * np.einsum("qd,qd->q", values, values)))

    def quad_points(self, rule):
        if isinstance(rule, TriangleRule):
            return self.map_to_phys(rule.points)
        return np.atleast_2d(rule[0])


# -- public spec operations -----------------------------------------------------------


def rtn_basis(p: int) -> ElementRTN:
    """Reference-element RTN_p basis dual to the edge/interior dofs."""
    if p < 0:
        raise ValueError("polynomial degree must be >= 0")
    return ElementRTN(_REF_VERTS, p)


def piola_map(coords, ref_values):
    """Contravariant Piola transform onto the triangle with given vertices.

    ``ref_values`` has shape (npts, 2) (or (n, npts, 2)); returns the mapped
    physical values w(x) = B w_ref(x_ref) / det B.
    """
    coords = np.asarray(coords, float).reshape(3, 2)
    B = np.column_stack([coords[1] - coords[0], coords[2] - coords[0]])
    detB = B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]
    if detB <= 0:
        raise ElementGeometryError("Piola map requires positive orientation")
    vals = np.asarray(ref_values, float)
    return np.einsum("dc,...c->...d", B, vals) / detB


def element_matrices(coords, p: int, edge_dirs=None):
    """Mass, divergence-coupling and scalar mass matrices on a triangle.

    The scalar basis is L2(K)-orthonormal, so W_K is the identity (the |K|
    scale is absorbed into the basis) and B_K[m, k] = (div Phi_k, phi_m)_K.
    """
    el = ElementRTN(coords, p, edge_dirs)
    return {"M": el.M, "B": el.Bdiv, "W": np.eye(el.sdim), "element": el}


# -- mesh-wide space -----------------------------------------------------------------


class RTNSpace:
    """Per-element RTN bases over a mesh plus the global dof layout.

    Global dofs: edge e owns slots e*(p+1)..e*(p+1)+p; element k owns
    ne*(p+1) + k*p*(p+1) + local interior slots.  Fields with continuous
    normal trace share edge dofs verbatim.
    """

    def __init__(self, mesh, p: int):
        self.mesh = mesh
        self.p = p
        self.elements = [
            ElementRTN(mesh.triangle_coords(k), p, mesh.tri_edge_dirs(k))
            for k in range(mesh.num_triangles)
        ]
        self.ndof_edge = (p + 1) * mesh.num_edges
        self.n_int = p * (p + 1)
        self.ndof = self.ndof_edge + self.n_int * mesh.num_triangles

    def element_dof_map(self, k):
        """Global dof index of each local dof on element k."""
        p = self.p
        out = np.empty(self.elements[k].ndof, dtype=int)
        for slot in range(3):
            e = self.mesh.tri_edges[k, slot]
            out[slot * (p + 1) : (slot + 1) * (p + 1)] = np.arange(
                e * (p + 1), (e + 1) * (p + 1)
            )
        base = self.ndof_edge + k * self.n_int
        out[3 * (p + 1) :] = np.arange(base, base + self.n_int)
        return out

    def neumann_edge_dofs(self):
        """Global dof indices pinned to zero by the no-flux boundary condition."""
        p = self.p
        out = []
        for e in self.mesh.edges_with_label("neumann"):
            out.extend(range(e * (p + 1), (e + 1) * (p + 1)))
        return np.array(out, dtype=int)


def rtn_space(mesh, p: int) -> RTNSpace:
    key = ("rtn_space", p)
    if key not in mesh._cache:
        mesh._cache[key] = RTNSpace(mesh, p)
    return mesh._cache[key]
