"""Conforming 2D simplicial meshes: construction, refinement, IO, vertex patches.

Conventions baked in here and relied on everywhere else:
  * triangles are stored counterclockwise, rotated so the smallest vertex
    index comes first;
  * edges are sorted vertex pairs, listed lexicographically; the global
    tangent runs lower index -> higher index and the global unit normal is
    the tangent rotated by -90 degrees;
  * ``tri_edges[k, j]`` is the edge opposite local vertex j, and
    ``tri_edge_sign[k, j]`` is +1 when the global normal points out of the
    triangle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
_LABELS = (DIRICHLET, NEUMANN)


class MeshError(ValueError):
    pass


def _canonical_triangles(vertices, triangles):
    tris = np.array(triangles, dtype=int)
    verts = np.asarray(vertices, dtype=float)
    out = np.empty_like(tris)
    for k, (a, b, c) in enumerate(tris):
        xa, xb, xc = verts[a], verts[b], verts[c]
        area2 = (xb[0] - xa[0]) * (xc[1] - xa[1]) - (xb[1] - xa[1]) * (xc[0] - xa[0])
        if abs(area2) < 1e-14 * max(1.0, np.abs([xa, xb, xc]).max()) ** 2:
            raise MeshError(f"triangle {k} {tuple((a, b, c))} is degenerate")
        tri = [a, b, c] if area2 > 0 else [a, c, b]
        r = int(np.argmin(tri))
        out[k] = tri[r:] + tri[:r]
    return out


class Mesh:
    """A validated conforming triangulation with labeled boundary."""

    def __init__(self, vertices, triangles, boundary_labels, *, check_hanging=False):
        self.vertices = np.array(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (n, 2) array")
        self.triangles = _canonical_triangles(self.vertices, triangles)
        order = np.lexsort(
            (self.triangles[:, 2], self.triangles[:, 1], self.triangles[:, 0])
        )
        self.triangles = self.triangles[order]
        self._build_edges()
        self._apply_labels(boundary_labels)
        self._geometry()
        self._validate(check_hanging)
        self._cache = {}

    # -- construction helpers -------------------------------------------------

    def _build_edges(self):
        nt = len(self.triangles)
        raw = {}
        for k in range(nt):
            a, b, c = self.triangles[k]
            for pair in ((b, c), (c, a), (a, b)):
                key = (min(pair), max(pair))
                raw.setdefault(key, []).append(k)
        self.edges = np.array(sorted(raw.keys()), dtype=int).reshape(-1, 2)
        eidx = {tuple(e): i for i, e in enumerate(self.edges)}
        self.edge_tris = -np.ones((len(self.edges), 2), dtype=int)
        for key, ks in raw.items():
            if len(ks) > 2:
                raise MeshError(f"edge {key} belongs to {len(ks)} triangles")
            i = eidx[key]
            self.edge_tris[i, : len(ks)] = sorted(ks)
        self.tri_edges = np.empty((nt, 3), dtype=int)
        for k in range(nt):
            a, b, c = self.triangles[k]
            for j, pair in enumerate(((b, c), (c, a), (a, b))):
                self.tri_edges[k, j] = eidx[(min(pair), max(pair))]
        # orientation sign: +1 iff the global normal points out of the triangle
        self.tri_edge_sign = np.empty((nt, 3), dtype=int)
        for k in range(nt):
            cen = self.vertices[self.triangles[k]].mean(axis=0)
            for j in range(3):
                e = self.tri_edges[k, j]
                mid = self.vertices[self.edges[e]].mean(axis=0)
                n = self.edge_normal(e)
                self.tri_edge_sign[k, j] = 1 if np.dot(n, mid - cen) > 0 else -1

    def _apply_labels(self, boundary_labels):
        self.boundary_labels = {}
        eidx = {tuple(e): i for i, e in enumerate(self.edges)}
        for item in boundary_labels.items() if isinstance(boundary_labels, dict) else boundary_labels:
            (a, b), label = item
            key = (min(a, b), max(a, b))
            if key not in eidx:
                raise MeshError(f"labeled edge {key} does not exist")
            e = eidx[key]
            if self.edge_tris[e, 1] != -1:
                raise MeshError(f"edge {key} is interior but carries a boundary label")
            if label not in _LABELS:
                raise MeshError(f"unknown boundary label {label!r} on edge {key}")
            if e in self.boundary_labels:
                raise MeshError(f"edge {key} labeled twice")
            self.boundary_labels[e] = label

    def _geometry(self):
        nt = len(self.triangles)
        self.h = np.empty(nt)
        self.rho = np.empty(nt)
        self.area = np.empty(nt)
        for k in range(nt):
            xs = self.vertices[self.triangles[k]]
            sides = [np.linalg.norm(xs[(j + 1) % 3] - xs[j]) for j in range(3)]
            area = 0.5 * abs(
                (xs[1, 0] - xs[0, 0]) * (xs[2, 1] - xs[0, 1])
                - (xs[1, 1] - xs[0, 1]) * (xs[2, 0] - xs[0, 0])
            )
            self.area[k] = area
            self.h[k] = max(sides)
            self.rho[k] = 4 * area / sum(sides)  # inscribed-circle diameter
        self.kappa = float(np.max(self.h / self.rho))
        self.h_max = float(np.max(self.h))

    def _validate(self, check_hanging):
        nv, ne, nt = len(self.vertices), len(self.edges), len(self.triangles)
        used = np.zeros(nv, dtype=bool)
        used[self.triangles.ravel()] = True
        if not used.all():
            raise MeshError(f"vertex {int(np.flatnonzero(~used)[0])} is unused")
        if check_hanging:
            self._check_hanging_nodes()
        if nv - ne + nt != 1:
            raise MeshError(
                f"Euler characteristic V-E+T = {nv - ne + nt} != 1 "
                "(mesh must triangulate a simply connected domain)"
            )
        for e in range(ne):
            if self.edge_tris[e, 1] == -1 and e not in self.boundary_labels:
                raise MeshError(
                    f"boundary edge {tuple(self.edges[e])} is missing a label"
                )

    def _check_hanging_nodes(self):
        # a vertex strictly inside a single-triangle edge means a hanging node
        for e in np.flatnonzero(self.edge_tris[:, 1] == -1):
            a, b = self.edges[e]
            pa, pb = self.vertices[a], self.vertices[b]
            d = pb - pa
            L2 = d @ d
            rel = self.vertices - pa
            t = (rel @ d) / L2
            dist2 = np.einsum("ij,ij->i", rel, rel) - t**2 * L2
            inside = (t > 1e-12) & (t < 1 - 1e-12) & (dist2 < 1e-16 * L2)
            inside[[a, b]] = False
            if inside.any():
                v = int(np.flatnonzero(inside)[0])
                raise MeshError(
                    f"hanging node: vertex {v} lies inside edge {tuple(self.edges[e])}"
                )

    # -- queries ---------------------------------------------------------------

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def num_triangles(self):
        return len(self.triangles)

    def triangle_coords(self, k):
        return self.vertices[self.triangles[k]]

    def edge_vector(self, e):
        a, b = self.edges[e]
        return self.vertices[b] - self.vertices[a]

    def edge_length(self, e):
        return float(np.linalg.norm(self.edge_vector(e)))

    def edge_normal(self, e):
        """Global unit normal: lower->higher tangent rotated by -90 degrees."""
        t = self.edge_vector(e)
        t = t / np.linalg.norm(t)
        return np.array([t[1], -t[0]])

    def is_boundary_edge(self, e):
        return self.edge_tris[e, 1] == -1

    def interior_edges(self):
        return np.flatnonzero(self.edge_tris[:, 1] != -1)

    def boundary_edges(self):
        return np.flatnonzero(self.edge_tris[:, 1] == -1)

    def edges_with_label(self, label):
        return sorted(e for e, lab in self.boundary_labels.items() if lab == label)

    def tri_edge_dirs(self, k):
        """Directed local vertex pairs (lo->hi by global index), per edge slot."""
        tri = self.triangles[k]
        out = []
        for j, (la, lb) in enumerate(((1, 2), (2, 0), (0, 1))):
            if tri[la] < tri[lb]:
                out.append((la, lb))
            else:
                out.append((lb, la))
        return out

    def diameter(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    # -- serialization ----------------------------------------------------------

    def to_dict(self):
        boundary = [
            {"edge": [int(self.edges[e, 0]), int(self.edges[e, 1])], "label": lab}
            for e, lab in sorted(self.boundary_labels.items())
        ]
        return {
            "vertices": [[float(x), float(y)] for x, y in self.vertices],
            "triangles": [[int(a), int(b), int(c)] for a, b, c in self.triangles],
            "boundary": boundary,
        }


def save_mesh(mesh: Mesh, path):
    with open(path, "w") as f:
        json.dump(mesh.to_dict(), f, indent=1)
        f.write("\n")


def load_mesh(path) -> Mesh:
    with open(path) as f:
        data = json.load(f)
    return mesh_from_dict(data)


def mesh_from_dict(data) -> Mesh:
    try:
        vertices = data["vertices"]
        triangles = data["triangles"]
        boundary = data["boundary"]
    except (KeyError, TypeError) as exc:
        raise MeshError(f"mesh file missing field: {exc}") from exc
    labels = []
    for item in boundary:
        labels.append(((item["edge"][0], item["edge"][1]), item["label"]))
    return Mesh(vertices, triangles, labels, check_hanging=True)


# -- generators ------------------------------------------------------------------


def _rule_label(rule, mid, lo, hi):
    if rule == "all-dirichlet":
        return DIRICHLET
    if rule == "all-neumann":
        return NEUMANN
    if rule == "left-neumann":
        return NEUMANN if abs(mid[0] - lo[0]) < 1e-12 else DIRICHLET
    raise MeshError(f"unknown boundary label rule {rule!r}")


def _label_boundary(vertices, triangles, rule):
    """Labels for the 1-incident edges of a raw triangle list."""
    raw = {}
    for tri in triangles:
        a, b, c = tri
        for pair in ((b, c), (c, a), (a, b)):
            key = (min(pair), max(pair))
            raw[key] = raw.get(key, 0) + 1
    verts = np.asarray(vertices, float)
    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    labels = []
    for key, count in raw.items():
        if count == 1:
            mid = (verts[key[0]] + verts[key[1]]) / 2
            labels.append((key, _rule_label(rule, mid, lo, hi)))
    return labels


def build_structured(n: int, domain=((0.0, 0.0), (1.0, 1.0)), labels="all-dirichlet"):
    """Uniform n x n grid on an axis-aligned rectangle, cells split along the
    (i, j) -> (i+1, j+1) diagonal."""
    if n < 1:
        raise MeshError("n must be >= 1")
    (x0, y0), (x1, y1) = domain
    if not (x1 > x0 and y1 > y0):
        raise MeshError("domain must have positive extent")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    vertices = [(x, y) for y in ys for x in xs]
    vid = lambda i, j: j * (n + 1) + i
    triangles = []
    for j in range(n):
        for i in range(n):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            triangles.append((a, b, c))
            triangles.append((a, c, d))
    return Mesh(vertices, triangles, _label_boundary(vertices, triangles, labels))


def build_lshape(n: int, labels="all-dirichlet"):
    """L-shaped domain (-1,1)^2 minus the quadrant x>0, y<0; n cells per unit.

    The reentrant corner sits exactly at the origin, which is always a mesh
    vertex.
    """
    if n < 1:
        raise MeshError("n must be >= 1")
    m = 2 * n
    xs = np.linspace(-1.0, 1.0, m + 1)
    vid = {}
    vertices = []
    for j in range(m + 1):
        for i in range(m + 1):
            x, y = xs[i], xs[j]
            if x > 1e-12 and y < -1e-12:
                continue
            vid[(i, j)] = len(vertices)
            vertices.append((x, y))
    triangles = []
    for j in range(m):
        for i in range(m):
            xc = (xs[i] + xs[i + 1]) / 2
            yc = (xs[j] + xs[j + 1]) / 2
            if xc > 0 and yc < 0:
                continue
            a, b = vid[(i, j)], vid[(i + 1, j)]
            c, d = vid[(i + 1, j + 1)], vid[(i, j + 1)]
            triangles.append((a, b, c))
            triangles.append((a, c, d))
    return Mesh(vertices, triangles, _label_boundary(vertices, triangles, labels))


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: each triangle splits into 4 similar children."""
    verts = [tuple(v) for v in mesh.vertices]
    mid = {}

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in mid:
            mid[key] = len(verts)
            verts.append(tuple((mesh.vertices[a] + mesh.vertices[b]) / 2))
        return mid[key]

    triangles = []
    for a, b, c in mesh.triangles:
        mab, mbc, mca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        triangles += [(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)]
    labels = []
    for e, lab in mesh.boundary_labels.items():
        a, b = mesh.edges[e]
        m = midpoint(a, b)
        labels += [((a, m), lab), ((m, b), lab)]
    return Mesh(verts, triangles, labels)


# -- vertex patches ----------------------------------------------------------------

INTERIOR = "interior"


@dataclass
class VertexPatch:
    """All triangles around one vertex plus the edge bookkeeping the local
    equilibration problems need."""

    vertex: int
    kind: str  # interior | dirichlet | neumann
    tris: np.ndarray
    local_index: dict  # triangle -> local index of the patch vertex
    edges_at_vertex: list
    fa_int: list  # edges containing the vertex, excluding Dirichlet boundary edges
    gamma_d_edges: list  # Dirichlet boundary edges containing the vertex
    active_edges: list  # edges whose dofs are free in the patch space
    boundary_edges: list = field(default_factory=list)  # edges of the patch boundary

    def hat_grad(self, mesh: Mesh, k: int) -> np.ndarray:
        """Gradient of the hat function on triangle k (constant vector)."""
        xs = mesh.triangle_coords(k)
        B = np.column_stack([xs[1] - xs[0], xs[2] - xs[0]])
        Binv_T = np.linalg.inv(B).T
        ghat = {0: (-1.0, -1.0), 1: (1.0, 0.0), 2: (0.0, 1.0)}[self.local_index[k]]
        return Binv_T @ np.asarray(ghat)

    def hat_values(self, mesh: Mesh, k: int, pts) -> np.ndarray:
        """Hat function evaluated at physical points inside triangle k."""
        xs = mesh.triangle_coords(k)
        B = np.column_stack([xs[1] - xs[0], xs[2] - xs[0]])
        lam = np.linalg.solve(B, (np.atleast_2d(pts) - xs[0]).T)
        la = self.local_index[k]
        if la == 0:
            return 1.0 - lam[0] - lam[1]
        return lam[la - 1]


def vertex_patches(mesh: Mesh):
    """One patch per mesh vertex, classified interior/dirichlet/neumann.

    A vertex touching any Dirichlet boundary edge is Dirichlet (the Dirichlet
    boundary is treated as a closed set, so this covers interface vertices).
    """
    nv = mesh.num_vertices
    tris_at = [[] for _ in range(nv)]
    for k, tri in enumerate(mesh.triangles):
        for v in tri:
            tris_at[v].append(k)
    edges_at = [[] for _ in range(nv)]
    for e, (a, b) in enumerate(mesh.edges):
        edges_at[a].append(e)
        edges_at[b].append(e)
    patches = []
    for v in range(nv):
        bdry = [e for e in edges_at[v] if mesh.is_boundary_edge(e)]
        if not bdry:
            kind = INTERIOR
        elif any(mesh.boundary_labels[e] == DIRICHLET for e in bdry):
            kind = DIRICHLET
        else:
            kind = NEUMANN
        gamma_d = [e for e in bdry if mesh.boundary_labels.get(e) == DIRICHLET]
        fa_int = [e for e in edges_at[v] if e not in gamma_d]
        interior_at = [e for e in edges_at[v] if not mesh.is_boundary_edge(e)]
        active = sorted(interior_at + (gamma_d if kind == DIRICHLET else []))
        tris = np.array(sorted(tris_at[v]), dtype=int)
        local = {
            int(k): int(np.flatnonzero(mesh.triangles[k] == v)[0]) for k in tris
        }
        patch_edges = set()
        for k in tris:
            patch_edges.update(mesh.tri_edges[k])
        boundary = sorted(
            e
            for e in patch_edges
            if v not in mesh.edges[e] or mesh.is_boundary_edge(e)
        )
        patches.append(
            VertexPatch(
                vertex=v,
                kind=kind,
                tris=tris,
                local_index=local,
                edges_at_vertex=sorted(edges_at[v]),
                fa_int=sorted(fa_int),
                gamma_d_edges=sorted(gamma_d),
                active_edges=active,
                boundary_edges=boundary,
            )
        )
    return patches
