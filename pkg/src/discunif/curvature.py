"""Gauss and geodesic curvature, conformal transformation checks, set membership.

Two evaluation paths coexist.  Metrics with analytic sources use exact
symbolic derivatives of their components: Gauss curvature through the Brioschi
determinant formula, geodesic curvature through Christoffel symbols along the
boundary circle, and the conformal family e^{2u} g0 through the closed forms
K = -e^{-2u} (u_xx + u_yy) and k = e^{-u} (1 + du/dr).  Discrete metrics go
through moving-least-squares polynomial fits over vertex ring neighborhoods,
which supply the first and second component derivatives the same formulas
need.  The symbolic path acts as the oracle for the discrete one.

Membership in the curvature-defined sets (K >= 0, K > 0, K = 0 and the
boundary analogues on k) is decided from margins with a resolution-aware
tolerance tol(h) = max(1e-6, 10 h^2), h = 1/n_r: exact zero is unattainable
discretely.  Gauss curvature is evaluated at interior vertices and geodesic
curvature at boundary vertices; margins are taken over those sets only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import expr as ex
from .metric import ComponentsSource, ConformalSource, MetricField

__all__ = [
    "CurvatureReport", "gauss_curvature", "geodesic_curvature",
    "conformal_curvature_check", "membership", "gauss_bonnet",
    "curvature_report", "membership_tolerance", "SET_NAMES",
]

SET_NAMES = ("I", "II", "III", "I∂", "II∂", "III∂")

_MLS_DEGREE = 3          # cubic fits: second derivatives stay O(h^2) on any stencil
_MLS_RINGS = 2


def membership_tolerance(mesh):
    """Resolution-aware tolerance for equality/strictness decisions."""
    h = 1.0 / mesh.n_r
    return max(1e-6, 10.0 * h * h)


# ---------------------------------------------------------------------------
# moving-least-squares derivative estimation

def _mls_operators(mesh, degree=_MLS_DEGREE, rings=_MLS_RINGS):
    """Sparse operators mapping vertex data to derivative estimates.

    Returns a dict with keys "x", "y", "xx", "xy", "yy".  Each row of an
    operator holds the weighted polynomial-fit coefficients of one vertex
    stencil.  Fits run in locally rotated radial/tangential coordinates with
    per-axis scaling: polar stencils are strongly anisotropic near the center
    and would be hopelessly ill-conditioned in raw Cartesian monomials.
    Boundary-adjacent stencils that cannot poise the fit widen by one ring.
    """
    key = ("mls", degree, rings)
    if key in mesh._cache:
        return mesh._cache[key]

    ncoef = (degree + 1) * (degree + 2) // 2
    ring2 = mesh.vertex_rings(rings)
    ring3 = mesh.vertex_rings(rings + 1)
    n = mesh.n_vertices
    stencils = []
    for v in range(n):
        nb = ring2.indices[ring2.indptr[v]:ring2.indptr[v + 1]]
        if len(nb) < ncoef + 3:
            nb = ring3.indices[ring3.indptr[v]:ring3.indptr[v + 1]]
        stencils.append(nb)

    powers = [(a - b, b) for a in range(degree + 1) for b in range(a + 1)]
    local_rows = {(1, 0): powers.index((1, 0)), (0, 1): powers.index((0, 1)),
                  (2, 0): powers.index((2, 0)), (1, 1): powers.index((1, 1)),
                  (0, 2): powers.index((0, 2))}
    names = ("x", "y", "xx", "xy", "yy")

    order = np.argsort([len(s) for s in stencils], kind="stable")
    rows = {name: [] for name in names}
    cols = {name: [] for name in names}
    vals = {name: [] for name in names}
    i = 0
    z = mesh.vertices
    while i < len(order):
        m = len(stencils[order[i]])
        j = i
        while j < len(order) and len(stencils[order[j]]) == m:
            j += 1
        batch = order[i:j]
        nb = np.stack([stencils[v] for v in batch])          # (B, m)
        dx = z[nb].real - z[batch, None].real
        dy = z[nb].imag - z[batch, None].imag
        phi = np.angle(np.where(np.abs(z[batch]) > 1e-12, z[batch], 1.0))
        cph, sph = np.cos(phi)[:, None], np.sin(phi)[:, None]
        xi = cph * dx + sph * dy                             # radial
        eta = -sph * dx + cph * dy                           # tangential
        sxi = np.abs(xi).max(axis=1, keepdims=True) * 1.05
        seta = np.abs(eta).max(axis=1, keepdims=True) * 1.05
        xi, eta = xi / sxi, eta / seta
        d2 = xi**2 + eta**2
        w = (1.0 - d2 / (d2.max(axis=1, keepdims=True) * 1.05)) ** 2
        design = np.stack([xi**a * eta**b for (a, b) in powers], axis=2)
        wd = design * w[:, :, None]
        gram = np.einsum("bmi,bmj->bij", wd, design)
        gram += 1e-13 * np.trace(gram, axis1=1, axis2=2)[:, None, None] * np.eye(ncoef)
        rhs = np.transpose(wd, (0, 2, 1))                    # (B, ncoef, m)
        coef = np.linalg.solve(gram, rhs)                    # (B, ncoef, m)

        # local derivatives (chain rule through the per-axis scaling)
        loc = {}
        for (a, b), ridx in local_rows.items():
            fac = float(math.factorial(a) * math.factorial(b))
            loc[(a, b)] = coef[:, ridx, :] * (fac / (sxi**a * seta**b))
        c1, s1 = cph, sph
        glob = {
            "x": c1 * loc[(1, 0)] - s1 * loc[(0, 1)],
            "y": s1 * loc[(1, 0)] + c1 * loc[(0, 1)],
            "xx": c1**2 * loc[(2, 0)] - 2 * c1 * s1 * loc[(1, 1)] + s1**2 * loc[(0, 2)],
            "xy": c1 * s1 * (loc[(2, 0)] - loc[(0, 2)]) + (c1**2 - s1**2) * loc[(1, 1)],
            "yy": s1**2 * loc[(2, 0)] + 2 * c1 * s1 * loc[(1, 1)] + c1**2 * loc[(0, 2)],
        }
        for name in names:
            rows[name].append(np.repeat(batch, m))
            cols[name].append(nb.ravel())
            vals[name].append(glob[name].ravel())
        i = j

    ops = {}
    for name in names:
        ops[name] = sp.csr_matrix(
            (np.concatenate(vals[name]),
             (np.concatenate(rows[name]), np.concatenate(cols[name]))),
            shape=(n, n))
    mesh._cache[key] = ops
    return ops


def _component_derivatives(g, orders):
    """Derivative arrays of (g11, g12, g22) at vertices.

    ``orders`` is an iterable of strings from {"", "x", "y", "xx", "xy", "yy"}.
    Analytic sources differentiate exactly; discrete metrics use the MLS
    operators.
    """
    mesh = g.mesh
    x, yv = mesh.vertices.real, mesh.vertices.imag
    out = {}
    if isinstance(g.source, (ConformalSource, ComponentsSource)):
        if isinstance(g.source, ConformalSource):
            u = g.source.u
            w = ex.exp(ex.Const(2.0) * u)
            exprs = {"g11": w, "g12": ex.Const(0.0), "g22": w}
        else:
            exprs = {"g11": g.source.e11, "g12": g.source.e12, "g22": g.source.e22}
        for comp, e in exprs.items():
            for od in orders:
                d = e
                for var in od:
                    d = ex.differentiate(d, var)
                out[(comp, od)] = ex.evaluate(d, x, yv) + np.zeros_like(x)
    else:
        ops = _mls_operators(mesh)
        data = {"g11": g.g11, "g12": g.g12, "g22": g.g22}
        for comp, arr in data.items():
            for od in orders:
                out[(comp, od)] = arr.copy() if od == "" else ops[od] @ arr
    return out


# ---------------------------------------------------------------------------
# curvature kernels

def _brioschi(d):
    """Gauss curvature from component derivatives (Brioschi determinant form)."""
    E, F, G = d[("g11", "")], d[("g12", "")], d[("g22", "")]
    Ex, Ey, Eyy = d[("g11", "x")], d[("g11", "y")], d[("g11", "yy")]
    Fx, Fy, Fxy = d[("g12", "x")], d[("g12", "y")], d[("g12", "xy")]
    Gx, Gy, Gxx = d[("g22", "x")], d[("g22", "y")], d[("g22", "xx")]

    a11 = -0.5 * Eyy + Fxy - 0.5 * Gxx
    a12, a13 = 0.5 * Ex, Fx - 0.5 * Ey
    a21, a23 = Fy - 0.5 * Gx, F
    a31, a32 = 0.5 * Gy, F
    det1 = (a11 * (E * G - F * F) - a12 * (a21 * G - a23 * a31)
            + a13 * (a21 * a32 - E * a31))
    b12, b13 = 0.5 * Ey, 0.5 * Gx
    det2 = (0.0 * E - b12 * (b12 * G - F * b13) + b13 * (b12 * F - E * b13))
    return (det1 - det2) / (E * G - F * F) ** 2


def _christoffel_boundary_k(g, d):
    """Geodesic curvature of the boundary circle from first component derivatives."""
    mesh = g.mesh
    b = mesh.boundary
    z = mesh.vertices[b]
    xb, yb = z.real, z.imag

    E, F, G = d[("g11", "")][b], d[("g12", "")][b], d[("g22", "")][b]
    dgx = np.array([[d[("g11", "x")][b], d[("g12", "x")][b]],
                    [d[("g12", "x")][b], d[("g22", "x")][b]]])
    dgy = np.array([[d[("g11", "y")][b], d[("g12", "y")][b]],
                    [d[("g12", "y")][b], d[("g22", "y")][b]]])
    dg = [dgx, dgy]
    det = E * G - F * F
    ginv = np.array([[G / det, -F / det], [-F / det, E / det]])

    v = np.array([-yb, xb])                       # d/dtheta of e^{i theta}
    acc0 = np.array([-xb, -yb])                   # second theta derivative
    gam_vv = np.zeros((2, len(b)))
    for k in range(2):
        for i in range(2):
            for j in range(2):
                gam = 0.0
                for l in range(2):
                    gam = gam + ginv[k][l] * (dg[i][l][j] + dg[j][l][i] - dg[l][i][j])
                gam_vv[k] += 0.5 * gam * v[i] * v[j]
    acc = acc0 + gam_vv

    gv = np.array([E * v[0] + F * v[1], F * v[0] + G * v[1]])
    jv = np.array([-gv[1], gv[0]]) / np.sqrt(det)
    g_acc_jv = (acc[0] * (E * jv[0] + F * jv[1]) + acc[1] * (F * jv[0] + G * jv[1]))
    speed = np.sqrt(v[0] * gv[0] + v[1] * gv[1])
    return g_acc_jv / speed**3


def gauss_curvature(g):
    """Gauss curvature at mesh vertices (meaningful on the interior).

    Conformal sources use K = -e^{-2u} Lap u with exact symbolic derivatives;
    component sources use the Brioschi formula with exact derivatives; discrete
    metrics use the MLS-fit derivatives.
    """
    mesh = g.mesh
    if isinstance(g.source, ConformalSource):
        u = g.source.u
        lap = ex.differentiate(ex.differentiate(u, "x"), "x") + \
            ex.differentiate(ex.differentiate(u, "y"), "y")
        x, yv = mesh.vertices.real, mesh.vertices.imag
        e2u = np.exp(2.0 * (ex.evaluate(u, x, yv) + np.zeros_like(x)))
        return -(ex.evaluate(lap, x, yv) + np.zeros_like(x)) / e2u
    d = _component_derivatives(g, ("", "x", "y", "xx", "xy", "yy"))
    return _brioschi(d)


def geodesic_curvature(g):
    """Geodesic curvature of the boundary circle, per boundary vertex."""
    mesh = g.mesh
    if isinstance(g.source, ConformalSource):
        u = g.source.u
        ux, uy = ex.differentiate(u, "x"), ex.differentiate(u, "y")
        z = mesh.vertices[mesh.boundary]
        xb, yb = z.real, z.imag
        du_dr = (ex.evaluate(ux, xb, yb) + np.zeros_like(xb)) * xb + \
            (ex.evaluate(uy, xb, yb) + np.zeros_like(xb)) * yb
        uu = ex.evaluate(u, xb, yb) + np.zeros_like(xb)
        return np.exp(-uu) * (1.0 + du_dr)
    d = _component_derivatives(g, ("", "x", "y"))
    return _christoffel_boundary_k(g, d)


# ---------------------------------------------------------------------------
# conformal transformation identities

def _as_discrete(g):
    """Forget the analytic source so the discrete path is exercised."""
    return MetricField(g.mesh, g.g11, g.g12, g.g22)


def _laplace_beltrami_expr(g_exprs, u):
    """Expression for (1/sqrt(det g)) d_i (sqrt(det g) g^{ij} d_j u)."""
    e11, e12, e22 = g_exprs
    det = e11 * e22 - e12**2
    root = ex.sqrt(det)
    ux, uy = ex.differentiate(u, "x"), ex.differentiate(u, "y")
    flux_x = root * (e22 * ux - e12 * uy) / det
    flux_y = root * (e11 * uy - e12 * ux) / det
    divergence = ex.differentiate(flux_x, "x") + ex.differentiate(flux_y, "y")
    return divergence / root


def _source_exprs(g):
    if isinstance(g.source, ConformalSource):
        w = ex.exp(ex.Const(2.0) * g.source.u)
        return w, ex.Const(0.0), w
    if isinstance(g.source, ComponentsSource):
        return g.source.e11, g.source.e12, g.source.e22
    raise ValueError("metric has no analytic source")


def conformal_curvature_check(g, u):
    """Residuals of the conformal curvature transformation identities.

    Checks e^{2u} K_{e^{2u} g} = K_g - Lap_g u on interior vertices and
    e^{u} k_{e^{2u} g} = k_g + nu(u) on boundary vertices, with the outward
    g-unit normal nu.  Curvatures on both sides run through the discrete
    (MLS) path applied to the sampled metrics, so the residual measures the
    identity at mesh resolution; Lap_g u and nu(u) use exact symbolic
    derivatives.  Requires analytic sources for both ``g`` and ``u``.
    """
    if u.expr is None:
        raise ValueError("conformal factor needs an analytic source")
    mesh = g.mesh
    g_exprs = _source_exprs(g)
    from .metric import conformal_scale  # local import to avoid cycle at load

    g_scaled = conformal_scale(g, u)
    K_scaled = gauss_curvature(_as_discrete(g_scaled))
    K_base = gauss_curvature(_as_discrete(g))

    x, yv = mesh.vertices.real, mesh.vertices.imag
    lap_expr = _laplace_beltrami_expr(g_exprs, u.expr)
    lap_u = ex.evaluate(lap_expr, x, yv) + np.zeros_like(x)

    e2u = np.exp(2.0 * u.values)
    lhs_K = e2u * K_scaled
    rhs_K = K_base - lap_u
    interior = mesh.interior
    residual_K = float(np.abs(lhs_K[interior] - rhs_K[interior]).max())

    k_scaled = geodesic_curvature(_as_discrete(g_scaled))
    k_base = geodesic_curvature(_as_discrete(g))

    b = mesh.boundary
    zb = mesh.vertices[b]
    xb, yb = zb.real, zb.imag
    E, F, G = (ex.evaluate(e, xb, yb) + np.zeros_like(xb) for e in g_exprs)
    det = E * G - F * F
    v = np.array([-yb, xb])
    gv = np.array([E * v[0] + F * v[1], F * v[0] + G * v[1]])
    nu = -np.array([-gv[1], gv[0]]) / np.sqrt(det)        # outward, g-unit
    speed = np.sqrt(v[0] * gv[0] + v[1] * gv[1])
    nu /= speed
    ux = ex.evaluate(ex.differentiate(u.expr, "x"), xb, yb) + np.zeros_like(xb)
    uy = ex.evaluate(ex.differentiate(u.expr, "y"), xb, yb) + np.zeros_like(xb)
    nu_u = nu[0] * ux + nu[1] * uy

    eu = np.exp(u.values[b])
    residual_k = float(np.abs(eu * k_scaled - (k_base + nu_u)).max())
    return residual_K, residual_k


# ---------------------------------------------------------------------------
# totals and membership

def gauss_bonnet(g):
    """Total curvature: interior integral of K dA_g plus boundary integral of k ds_g."""
    mesh = g.mesh
    if isinstance(g.source, (ConformalSource, ComponentsSource)):
        cx, cy = mesh.centroids.real, mesh.centroids.imag
        if isinstance(g.source, ConformalSource):
            uexpr = g.source.u
            lap = ex.differentiate(ex.differentiate(uexpr, "x"), "x") + \
                ex.differentiate(ex.differentiate(uexpr, "y"), "y")
            # K sqrt(det) = -e^{-2u} Lap(u) e^{2u} = -Lap(u)
            density = -(ex.evaluate(lap, cx, cy) + np.zeros_like(cx))
        else:
            d = {}
            exprs = {"g11": g.source.e11, "g12": g.source.e12, "g22": g.source.e22}
            for comp, e in exprs.items():
                for od in ("", "x", "y", "xx", "xy", "yy"):
                    de = e
                    for var in od:
                        de = ex.differentiate(de, var)
                    d[(comp, od)] = ex.evaluate(de, cx, cy) + np.zeros_like(cx)
            det = d[("g11", "")] * d[("g22", "")] - d[("g12", "")] ** 2
            density = _brioschi(d) * np.sqrt(det)
    else:
        K = gauss_curvature(g)
        density = mesh.vertex_to_triangle(K * np.sqrt(g.det()))
    total_K = mesh.integrate_interior(density)
    k = geodesic_curvature(g)
    total_k = mesh.integrate_boundary(k, metric=g)
    return total_K + total_k


def _margins(g, K=None, k=None):
    mesh = g.mesh
    if K is None:
        K = gauss_curvature(g)
    if k is None:
        k = geodesic_curvature(g)
    Ki = K[mesh.interior]
    return {
        "I": float(Ki.min()),
        "II": float(Ki.min()),
        "III": float(-np.abs(Ki).max()),
        "I∂": float(k.min()),
        "II∂": float(k.min()),
        "III∂": float(-np.abs(k).max()),
    }


def _parse_sets(name):
    parts = name.replace("&", "∩").split("∩")
    out = []
    for p in parts:
        p = p.strip().replace("b", "∂").replace("d", "∂")
        if p not in SET_NAMES:
            raise ValueError(f"unknown curvature set {p!r}")
        out.append(p)
    return out


def membership(g, set_name):
    """Membership and margin of ``g`` in a curvature set or intersection.

    Sets: I (K >= 0), II (K > 0), III (K = 0) and the boundary analogues
    I∂, II∂, III∂ on k; intersections join with "∩" (ASCII aliases: "&" for
    the intersection, "b" or "d" for the boundary mark).  The margin of an
    intersection is the minimum of the member margins.
    """
    sets = _parse_sets(set_name)
    margins = _margins(g)
    tol = membership_tolerance(g.mesh)
    member = True
    margin = np.inf
    for s in sets:
        m = margins[s]
        if s in ("II", "II∂"):
            member = member and (m > tol)
        else:
            member = member and (m >= -tol)
        margin = min(margin, m)
    return member, float(margin)


@dataclass(frozen=True)
class CurvatureReport:
    """Curvature summary: fields, Gauss-Bonnet total, and per-set margins."""

    K: np.ndarray                 # per interior vertex, mesh.interior order
    k: np.ndarray                 # per boundary vertex, mesh.boundary order
    gauss_bonnet_total: float
    margins: dict
    tolerance: float

    def to_json_dict(self):
        return {
            "gauss_bonnet_total": self.gauss_bonnet_total,
            "gauss_bonnet_defect": self.gauss_bonnet_total - 2.0 * np.pi,
            "tolerance": self.tolerance,
            "margins": dict(self.margins),
            "K_interior": self.K.tolist(),
            "k_boundary": self.k.tolist(),
        }


def curvature_report(g):
    """Full curvature report for one metric."""
    mesh = g.mesh
    K = gauss_curvature(g)
    k = geodesic_curvature(g)
    total = gauss_bonnet(g)
    margins = _margins(g, K=K, k=k)
    return CurvatureReport(K[mesh.interior], k, float(total), margins,
                           membership_tolerance(mesh))
