"""Per-element quadrature selection for a given field and polynomial degree.

Polynomial (discrete) fields get exact-degree rules.  Analytic fields use a
configurable high-order rule (default degree 2p + 10) with an optional
one-step degree-doubling self-check whose failures are recorded as warnings,
never raised.  Fields that declare a corner singularity r^gamma get radially
weighted product rules on elements having the corner as a vertex, Gauss-Jacobi
edge rules on edges leaving the corner, and escalated degrees on nearby
elements, which keeps moment errors near roundoff even for singular data.
"""

from __future__ import annotations

import numpy as np

from .quadrature import TriangleRule, corner_rule, edge_npts, gauss01, jacobi01, quad_rule


class QuadPolicy:
    def __init__(self, p, field=None, degree=None, self_check=True):
        self.p = p
        self.field = field
        poly_deg = getattr(field, "poly_degree", None) if field is not None else None
        if poly_deg is not None:
            self.base_degree = poly_deg + p + 3
            self.self_check = False
        else:
            # 2p + 14 keeps the discrete divergence-theorem defect of trig
            # data below 1e-12 even on h ~ 1 elements
            self.base_degree = int(degree) if degree is not None else 2 * p + 14
            self.self_check = bool(self_check)
        self.singularity = getattr(field, "singularity", None) if field is not None else None
        self._cache = {}

    # -- classification -------------------------------------------------------------

    def _corner_vertex(self, el):
        """Local index of the singular corner if it is a vertex of the element."""
        if self.singularity is None:
            return None
        c = np.asarray(self.singularity.center, float)
        d = np.linalg.norm(el.coords - c, axis=1)
        j = int(np.argmin(d))
        if d[j] <= 1e-12 * max(1.0, el.h):
            return j
        return None

    def _escalated_degree(self, el):
        if self.singularity is None:
            return self.base_degree
        c = np.asarray(self.singularity.center, float)
        dist = np.linalg.norm(el.coords.mean(axis=0) - c)
        ratio = dist / el.h
        if ratio < 3.0:
            return max(self.base_degree, 40)
        if ratio < 8.0:
            return max(self.base_degree, 26)
        return self.base_degree

    # -- rules ------------------------------------------------------------------------

    def element_rules(self, el, key=None):
        """(tri_rule, edge_rules, check_tri_rule) for one element.

        ``tri_rule`` is a TriangleRule (reference coords) or a physical
        (points, weights) pair; ``edge_rules`` is a list of 3 entries, each
        None (use the default Gauss count) or an explicit (t, w) pair on
        [0, 1]; ``check_tri_rule`` backs the degree-doubling self-check.
        """
        if key is not None and key in self._cache:
            return self._cache[key]
        corner = self._corner_vertex(el)
        if corner is not None:
            gamma = self.singularity.gamma
            n_th = max(20, self.base_degree // 2 + 10)
            n_r = max(12, self.base_degree // 2 + 4)
            wr = corner_rule(el.coords, corner, gamma, n_th, n_r)
            wr_chk = corner_rule(el.coords, corner, gamma, n_th + 8, n_r + 6)
            tri = (wr.points, wr.weights)
            chk = (wr_chk.points, wr_chk.weights)
            edges = []
            for slot in range(3):
                la, lb = el.edge_dirs[slot]
                if la == corner or lb == corner:
                    t, w = jacobi01(max(12, self.p + 8), gamma)
                    if lb == corner:  # singular endpoint at t = 1
                        t = 1.0 - t
                    edges.append((t, w))
                else:
                    edges.append(gauss01(edge_npts(max(self.base_degree, 30))))
            out = (tri, edges, chk)
        else:
            deg = self._escalated_degree(el)
            tri = quad_rule(deg + self.p)
            chk = quad_rule(2 * (deg + self.p)) if self.self_check else None
            n1 = edge_npts(deg + self.p)
            edges = [gauss01(n1)] * 3
            out = (tri, edges, chk)
        if key is not None:
            self._cache[key] = out
        return out

    def n1d(self):
        return edge_npts(self.base_degree + self.p)
