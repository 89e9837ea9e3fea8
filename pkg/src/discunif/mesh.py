"""Polar triangulations of the closed unit disc and their discrete calculus.

The mesh is ring-structured: a center vertex, ``n_r`` concentric rings at radii
j/n_r with ``n_th`` vertices each, and a union-jack diagonal pattern between
rings so vertex stencils stay close to point-symmetric.  The outer ring lies on
the unit circle and always contains the three normalization vertices 1, i, -1,
which is why ``n_th`` must be divisible by 4.

Discrete calculus follows linear (P1) elements: fields live on vertices,
derivatives are per-triangle constants, and area-weighted averaging moves
per-triangle data back to vertices.  The Wirtinger pair d/dz, d/dz-bar is
exposed directly since the solver and the map diagnostics are phrased in terms
of it.

Meshes are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import json

import numpy as np
import scipy.sparse as sp

from .errors import MeshError, PointLocationError

__all__ = ["DiscMesh", "build_disc_mesh"]


class DiscMesh:
    """Triangulated closed unit disc with an ordered boundary loop.

    Attributes
    ----------
    vertices : complex ndarray, shape (n_v,)
        Vertex positions, |z| <= 1.
    triangles : int ndarray, shape (n_t, 3)
        Positively oriented index triples.
    boundary : int ndarray, shape (n_th,)
        Counterclockwise boundary loop starting at z = 1; |z| = 1 on it.
    marked : tuple of int
        Indices of the vertices at 1, i, -1.
    """

    def __init__(self, vertices, triangles, boundary, marked, n_r, n_th):
        self.vertices = np.asarray(vertices, dtype=complex)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.boundary = np.asarray(boundary, dtype=np.int64)
        self.marked = tuple(int(i) for i in marked)
        self.n_r = int(n_r)
        self.n_th = int(n_th)
        self._cache = {}
        self._validate()
        self._build_operators()

    # -- construction -----------------------------------------------------

    def _validate(self):
        v, t = self.vertices, self.triangles
        if np.any(np.abs(v) > 1 + 1e-12):
            raise MeshError("vertex outside the closed unit disc")
        a = self.signed_areas()
        if np.any(a <= 1e-14):
            raise MeshError(f"degenerate or misoriented triangle (min area {a.min():.3e})")
        if np.any(np.abs(np.abs(v[self.boundary]) - 1.0) > 1e-12):
            raise MeshError("boundary vertex off the unit circle")
        # every interior edge must be shared by exactly two triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        keys = np.sort(edges, axis=1)
        _, counts = np.unique(keys, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        n_bnd_edges = int(np.sum(counts == 1))
        if n_bnd_edges != len(self.boundary):
            raise MeshError("boundary loop does not match the triangulation boundary")

    def signed_areas(self):
        z = self.vertices[self.triangles]
        e1 = z[:, 1] - z[:, 0]
        e2 = z[:, 2] - z[:, 0]
        return 0.5 * (e1.real * e2.imag - e1.imag * e2.real)

    def _build_operators(self):
        v, t = self.vertices, self.triangles
        n_t = len(t)
        area = self.signed_areas()
        # gradient of the hat function at local vertex l is perp(opposite edge)/(2A)
        e = np.stack([v[t[:, 2]] - v[t[:, 1]],
                      v[t[:, 0]] - v[t[:, 2]],
                      v[t[:, 1]] - v[t[:, 0]]], axis=1)
        rows = np.repeat(np.arange(n_t), 3)
        cols = t.ravel()
        gx = (-e.imag / (2 * area[:, None])).ravel()
        gy = (e.real / (2 * area[:, None])).ravel()
        shape = (n_t, len(v))
        self.areas = area
        self.Dx = sp.csr_matrix((gx, (rows, cols)), shape=shape)
        self.Dy = sp.csr_matrix((gy, (rows, cols)), shape=shape)
        self.Dz = (self.Dx - 1j * self.Dy) * 0.5
        self.Dzbar = (self.Dx + 1j * self.Dy) * 0.5
        self.centroids = v[t].mean(axis=1)
        self.is_boundary = np.zeros(len(v), dtype=bool)
        self.is_boundary[self.boundary] = True
        self.interior = np.flatnonzero(~self.is_boundary)
        # vertex weights for area-weighted averaging of per-triangle data
        w = np.repeat(area / 3.0, 3)
        self._avg = sp.csr_matrix((w, (cols, rows)), shape=(len(v), n_t))
        lumped = np.asarray(self._avg.sum(axis=1)).ravel()
        self._avg = sp.diags(1.0 / lumped) @ self._avg
        self.vertex_areas = lumped
        self._tri_neighbors = self._neighbor_table()

    def _neighbor_table(self):
        t = self.triangles
        table = -np.ones((len(t), 3), dtype=np.int64)
        owner = {}
        for ti in range(len(t)):
            for l in range(3):
                a, b = t[ti, (l + 1) % 3], t[ti, (l + 2) % 3]
                key = (min(a, b), max(a, b))
                if key in owner:
                    tj, lj = owner.pop(key)
                    table[ti, l] = tj
                    table[tj, lj] = ti
                else:
                    owner[key] = (ti, l)
        return table

    # -- basic queries ------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def triangle_to_vertex(self, values):
        """Area-weighted average of per-triangle data onto vertices."""
        return self._avg @ np.asarray(values)

    def vertex_to_triangle(self, values):
        """Per-triangle mean of the three vertex values (centroid sampling)."""
        return np.asarray(values)[self.triangles].mean(axis=1)

    # -- differential and integral operators --------------------------------

    def wirtinger(self, f):
        """Per-triangle Wirtinger derivatives of a vertex field.

        Returns ``(fz, fzbar)`` with fz = (f_x - i f_y)/2 and
        fzbar = (f_x + i f_y)/2 computed from the P1 interpolant.
        """
        f = np.asarray(f)
        if not np.all(np.isfinite(f)):
            raise ValueError("field contains non-finite values")
        return self.Dz @ f, self.Dzbar @ f

    def gradient(self, f):
        """Per-triangle (f_x, f_y) of a real vertex field."""
        f = np.asarray(f, dtype=float)
        return self.Dx @ f, self.Dy @ f

    def integrate_interior(self, density):
        """Sum of per-triangle density times Euclidean triangle area."""
        density = np.asarray(density, dtype=float)
        if density.shape != (self.n_triangles,):
            raise ValueError("density must be per-triangle")
        return float(np.dot(density, self.areas))

    def integrate_boundary(self, density, metric=None):
        """Trapezoidal integral of a per-boundary-vertex density against arclength.

        With a metric, edge lengths use sqrt(g(tau, tau)) for the Euclidean edge
        vector tau, averaged between the two endpoint metrics.
        """
        density = np.asarray(density, dtype=float)
        b = self.boundary
        if density.shape != (len(b),):
            raise ValueError("density must be per-boundary-vertex")
        z = self.vertices[b]
        tau = np.roll(z, -1) - z
        if metric is None:
            ell = np.abs(tau)
        else:
            tx, ty = tau.real, tau.imag
            g11, g12, g22 = metric.g11[b], metric.g12[b], metric.g22[b]
            q = g11 * tx**2 + 2 * g12 * tx * ty + g22 * ty**2
            qn = np.roll(g11, -1) * tx**2 + 2 * np.roll(g12, -1) * tx * ty + np.roll(g22, -1) * ty**2
            ell = 0.5 * (np.sqrt(q) + np.sqrt(qn))
        pair = 0.5 * (density + np.roll(density, -1))
        return float(np.dot(ell, pair))

    def boundary_normal(self):
        """Outward Euclidean unit normal at the boundary vertices (z/|z|)."""
        z = self.vertices[self.boundary]
        return z / np.abs(z)

    # -- point location and interpolation ------------------------------------

    def _barycentric(self, tri, p):
        i, j, k = self.triangles[tri]
        return _bary(self.vertices[i], self.vertices[j], self.vertices[k], p)

    def _polar_seed(self, p):
        """Triangle guesses from the ring/sector structure."""
        r = abs(p)
        th = np.angle(p) % (2 * np.pi)
        n_r, n_th = self.n_r, self.n_th
        k = min(int(th / (2 * np.pi / n_th)), n_th - 1)
        band = min(int(r * n_r), n_r - 1)
        out = []
        for j in (band, max(band - 1, 0), min(band + 1, n_r - 1)):
            if j == 0:
                out.append(k)
            else:
                base = n_th + 2 * n_th * (j - 1)
                out.extend((base + 2 * k, base + 2 * k + 1))
        return out

    def locate(self, p, tol=1e-12):
        """Containing triangle and barycentric coordinates of point ``p``.

        Points up to 1e-9 outside the disc are clamped radially; points in the
        sliver between the boundary polygon and the circle are projected onto
        the nearest boundary edge.  Raises :class:`PointLocationError` when no
        triangle can be assigned.
        """
        p = complex(p)
        if abs(p) > 1 + 1e-9:
            raise PointLocationError(p, "point outside the closed disc")
        if abs(p) > 1:
            p = p / abs(p)
        for tri in self._polar_seed(p):
            lam = self._barycentric(tri, p)
            if lam.min() >= -tol:
                return tri, np.clip(lam, 0.0, None)
        found = _walk(self.vertices, self.triangles, self._tri_neighbors,
                      p, self._polar_seed(p)[0])
        if found is not None:
            tri, lam, onbnd = found
            if not onbnd:
                return tri, lam
        return self._clamp_to_boundary(p)

    def _clamp_to_boundary(self, p):
        b = self.boundary
        z = self.vertices[b]
        a, c = z, np.roll(z, -1)
        d = c - a
        t = np.clip(((p - a) * np.conj(d)).real / np.abs(d) ** 2, 0.0, 1.0)
        proj = a + t * d
        k = int(np.argmin(np.abs(proj - p)))
        if abs(proj[k] - p) > 2e-2:
            raise PointLocationError(p)
        seg = a[k] + t[k] * d[k]
        return self._edge_triangle(b[k], b[(k + 1) % len(b)], seg)

    def _edge_triangle(self, va, vb, p):
        rows = np.flatnonzero(np.any(self.triangles == va, axis=1)
                              & np.any(self.triangles == vb, axis=1))
        tri = int(rows[0])
        lam = self._barycentric(tri, p)
        lam = np.clip(lam, 0.0, None)
        lam /= lam.sum()
        return tri, lam

    def interpolate(self, f, p):
        """Barycentric interpolation of a vertex field at a point of the disc."""
        f = np.asarray(f)
        tri, lam = self.locate(p)
        return (f[self.triangles[tri]] * lam).sum()

    def locate_many(self, points, coords=None, seeds=None):
        """Vectorized point location; returns (tri indices, barycentric coords).

        ``coords`` swaps in alternative vertex positions with the same
        connectivity (used to invert maps); ``seeds`` provides starting
        triangles for the walk.
        """
        points = np.asarray(points, dtype=complex)
        coords = self.vertices if coords is None else np.asarray(coords, dtype=complex)
        n = len(points)
        if seeds is None:
            seeds = np.array([self._polar_seed(p)[0] for p in points], dtype=np.int64)
        else:
            seeds = np.asarray(seeds, dtype=np.int64).copy()
        tri_out = np.full(n, -1, dtype=np.int64)
        lam_out = np.zeros((n, 3))
        active = np.arange(n)
        cur = seeds.copy()
        max_steps = 4 * self.n_triangles
        for _ in range(max_steps):
            if len(active) == 0:
                break
            tv = self.triangles[cur]
            za, zb, zc = coords[tv[:, 0]], coords[tv[:, 1]], coords[tv[:, 2]]
            lam = _bary_batch(za, zb, zc, points[active])
            inside = lam.min(axis=1) >= -1e-12
            if np.any(inside):
                idx = active[inside]
                tri_out[idx] = cur[inside]
                lam_out[idx] = np.clip(lam[inside], 0.0, None)
            rest = ~inside
            if not np.any(rest):
                active = active[:0]
                break
            worst = np.argmin(lam[rest], axis=1)
            nxt = self._tri_neighbors[cur[rest], worst]
            hit_bnd = nxt < 0
            if np.any(hit_bnd):
                stuck = active[rest][hit_bnd]
                for i_pt, tri in zip(stuck, cur[rest][hit_bnd]):
                    tri_out[i_pt], lam_out[i_pt] = _resolve_stuck(
                        coords, self.triangles, self._tri_neighbors, points[i_pt], tri)
            active = active[rest][~hit_bnd]
            cur = nxt[~hit_bnd]
        for i_pt in np.flatnonzero(tri_out < 0):
            tri_out[i_pt], lam_out[i_pt] = _resolve_stuck(
                coords, self.triangles, self._tri_neighbors, points[i_pt], int(seeds[i_pt]))
        return tri_out, lam_out

    def interpolate_many(self, f, points, seeds=None):
        """Vectorized barycentric interpolation at many points."""
        f = np.asarray(f)
        tri, lam = self.locate_many(points, seeds=seeds)
        return (f[self.triangles[tri]] * lam).sum(axis=1)

    # -- vertex neighborhoods -------------------------------------------------

    def adjacency(self):
        """Boolean vertex adjacency with self-loops (CSR)."""
        key = "adjacency"
        if key not in self._cache:
            t = self.triangles
            rows = np.concatenate([t[:, 0], t[:, 1], t[:, 2], t[:, 0], t[:, 1], t[:, 2]])
            cols = np.concatenate([t[:, 1], t[:, 2], t[:, 0], t[:, 2], t[:, 0], t[:, 1]])
            n = self.n_vertices
            a = sp.csr_matrix((np.ones(len(rows), dtype=bool), (rows, cols)), shape=(n, n))
            a = a + sp.eye(n, dtype=bool, format="csr")
            self._cache[key] = a.astype(bool)
        return self._cache[key]

    def vertex_rings(self, depth):
        """CSR matrix whose row v flags all vertices within graph distance ``depth``."""
        key = ("rings", depth)
        if key not in self._cache:
            a = self.adjacency()
            out = a.copy()
            for _ in range(depth - 1):
                out = (out @ a).astype(bool)
            out = out.tocsr()
            out.sort_indices()
            self._cache[key] = out
        return self._cache[key]

    # -- serialization ---------------------------------------------------------

    def to_json_dict(self):
        return {
            "n_r": self.n_r,
            "n_th": self.n_th,
            "vertices": [[float(z.real), float(z.imag)] for z in self.vertices],
            "triangles": self.triangles.tolist(),
            "boundary": self.boundary.tolist(),
            "marked": list(self.marked),
        }

    def to_json(self):
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, doc):
        verts = np.array([complex(p[0], p[1]) for p in doc["vertices"]])
        return cls(verts, doc["triangles"], doc["boundary"], doc["marked"],
                   doc["n_r"], doc["n_th"])

    @classmethod
    def from_json(cls, text):
        return cls.from_json_dict(json.loads(text))


def build_disc_mesh(n_r, n_th):
    """Build the polar disc triangulation with rings at radii j/n_r.

    Parameters
    ----------
    n_r : int
        Number of rings, at least 8.
    n_th : int
        Vertices per ring, at least 16 and divisible by 4 so that the
        normalization vertices 1, i, -1 land exactly on the mesh.
    """
    n_r, n_th = int(n_r), int(n_th)
    if n_r < 8:
        raise MeshError(f"n_r must be >= 8, got {n_r}")
    if n_th < 16 or n_th % 4 != 0:
        raise MeshError(f"n_th must be >= 16 and divisible by 4, got {n_th}")

    theta = 2 * np.pi * np.arange(n_th) / n_th
    ring = np.exp(1j * theta)
    verts = [np.zeros(1, dtype=complex)]
    for j in range(1, n_r + 1):
        verts.append((j / n_r) * ring)
    verts = np.concatenate(verts)
    outer = slice(1 + (n_r - 1) * n_th, 1 + n_r * n_th)
    verts[outer] = verts[outer] / np.abs(verts[outer])

    def idx(j, k):
        return 1 + (j - 1) * n_th + (k % n_th)

    tris = []
    k = np.arange(n_th)
    tris.append(np.stack([np.zeros(n_th, dtype=np.int64), idx(1, k), idx(1, k + 1)], axis=1))
    for j in range(1, n_r):
        a, b = idx(j, k), idx(j, k + 1)
        c, d = idx(j + 1, k + 1), idx(j + 1, k)
        # union-jack alternation of the quad diagonal keeps stencils symmetric
        even = (j + k) % 2 == 0
        t1 = np.where(even[:, None], np.stack([a, d, c], axis=1), np.stack([a, d, b], axis=1))
        t2 = np.where(even[:, None], np.stack([a, c, b], axis=1), np.stack([d, c, b], axis=1))
        tris.extend([t1, t2])
    tris = np.concatenate(tris)

    boundary = idx(n_r, k)
    marked = (idx(n_r, 0), idx(n_r, n_th // 4), idx(n_r, n_th // 2))
    return DiscMesh(verts, tris, boundary, marked, n_r, n_th)


# ---------------------------------------------------------------------------
# point-location helpers

def _bary(za, zb, zc, p):
    d = (zb.real - za.real) * (zc.imag - za.imag) - (zb.imag - za.imag) * (zc.real - za.real)
    l1 = ((zb.real - p.real) * (zc.imag - p.imag) - (zb.imag - p.imag) * (zc.real - p.real)) / d
    l2 = ((zc.real - p.real) * (za.imag - p.imag) - (zc.imag - p.imag) * (za.real - p.real)) / d
    return np.array([l1, l2, 1.0 - l1 - l2])


def _bary_batch(za, zb, zc, p):
    d = (zb.real - za.real) * (zc.imag - za.imag) - (zb.imag - za.imag) * (zc.real - za.real)
    l1 = ((zb.real - p.real) * (zc.imag - p.imag) - (zb.imag - p.imag) * (zc.real - p.real)) / d
    l2 = ((zc.real - p.real) * (za.imag - p.imag) - (zc.imag - p.imag) * (za.real - p.real)) / d
    return np.stack([l1, l2, 1.0 - l1 - l2], axis=1)


def _walk(coords, triangles, neighbors, p, start, max_steps=None):
    """Straight walk by most-negative barycentric coordinate.

    Returns (triangle, barycentric, hit_boundary) or None if the walk cycles.
    """
    if max_steps is None:
        max_steps = 4 * len(triangles)
    cur = int(start)
    prev = -1
    for _ in range(max_steps):
        i, j, k = triangles[cur]
        lam = _bary(coords[i], coords[j], coords[k], p)
        if lam.min() >= -1e-12:
            return cur, np.clip(lam, 0.0, None), False
        order = np.argsort(lam)
        stepped = False
        for l in order:
            if lam[l] >= -1e-12:
                break
            nxt = neighbors[cur, l]
            if nxt >= 0 and nxt != prev:
                prev, cur = cur, int(nxt)
                stepped = True
                break
        if not stepped:
            nxt = neighbors[cur, int(order[0])]
            if nxt < 0:
                return cur, lam, True
            prev, cur = cur, int(nxt)
    return None


def _resolve_stuck(coords, triangles, neighbors, p, seed):
    """Brute-force fallback: best triangle by least-negative barycentric."""
    found = _walk(coords, triangles, neighbors, p, seed)
    if found is not None and not found[2]:
        return found[0], found[1]
    za = coords[triangles[:, 0]]
    zb = coords[triangles[:, 1]]
    zc = coords[triangles[:, 2]]
    lam = _bary_batch(za, zb, zc, np.full(len(triangles), p, dtype=complex))
    best = int(np.argmax(lam.min(axis=1)))
    lam_best = lam[best]
    if lam_best.min() < -2e-2:
        raise PointLocationError(p)
    lam_best = np.clip(lam_best, 0.0, None)
    return best, lam_best / lam_best.sum()
