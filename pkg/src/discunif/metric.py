"""Riemannian metrics on the disc and the conformal-class calculus.

A metric is stored as per-vertex components (g11, g12, g22) in Cartesian
coordinates, optionally backed by an analytic source (expression components or
a conformal factor over the flat metric) so curvature kernels can use exact
derivatives.  The canonical representative of a conformal class is its
Beltrami coefficient: ``mu_from_metric`` realizes the quotient map, and
``metric_from_mu`` its section through 4g = rho |dz + mu dzbar|^2.

All values are immutable after construction and the operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import BeltramiBoundError, PositivityError
from .mesh import DiscMesh

__all__ = [
    "MetricField", "BeltramiField", "ConformalFactor",
    "ConformalSource", "ComponentsSource",
    "mu_from_metric", "metric_from_mu", "conformal_scale",
    "convex_combination", "volume_ratio", "builtin_metric", "flat_metric",
    "metric_from_json_dict", "metric_to_json_dict",
    "radial_stretch_exprs", "boundary_twist_exprs", "pullback_exprs",
]

MU_BOUND = 1.0 - 1e-6


@dataclass(frozen=True)
class ConformalSource:
    """Analytic source e^{2u} g0 with u an expression."""
    u: ex.Expr


@dataclass(frozen=True)
class ComponentsSource:
    """Analytic source with expression components (g11, g12, g22)."""
    e11: ex.Expr
    e12: ex.Expr
    e22: ex.Expr


@dataclass(frozen=True)
class MetricField:
    """Positive-definite symmetric 2-tensor sampled at mesh vertices."""

    mesh: DiscMesh
    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray
    source: ConformalSource | ComponentsSource | None = None

    def __post_init__(self):
        for name in ("g11", "g12", "g22"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.mesh.n_vertices
        if not (self.g11.shape == self.g12.shape == self.g22.shape == (n,)):
            raise ValueError("component arrays must be per-vertex")
        bad = ~((self.g11 > 0) & (self.det() > 0) & np.isfinite(self.g11)
                & np.isfinite(self.g12) & np.isfinite(self.g22))
        if np.any(bad):
            raise PositivityError(int(np.flatnonzero(bad)[0]))

    def det(self):
        return self.g11 * self.g22 - self.g12**2

    def trace(self):
        return self.g11 + self.g22

    @classmethod
    def from_components(cls, mesh, g11, g12, g22, source=None):
        return cls(mesh, g11, g12, g22, source)

    @classmethod
    def from_conformal_expr(cls, mesh, u):
        x, y = mesh.vertices.real, mesh.vertices.imag
        s = np.exp(2.0 * ex.evaluate(u, x, y))
        return cls(mesh, s, np.zeros_like(s), s, ConformalSource(u))

    @classmethod
    def from_component_exprs(cls, mesh, e11, e12, e22):
        x, y = mesh.vertices.real, mesh.vertices.imag
        broadcast = np.zeros_like(x)
        vals = [np.asarray(ex.evaluate(e, x, y)) + broadcast for e in (e11, e12, e22)]
        return cls(mesh, vals[0], vals[1], vals[2], ComponentsSource(e11, e12, e22))


@dataclass(frozen=True)
class BeltramiField:
    """Per-vertex Beltrami coefficient with sup norm strictly below 1."""

    mesh: DiscMesh
    values: np.ndarray
    c: float = field(init=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.mesh.n_vertices,):
            raise ValueError("Beltrami field must be per-vertex")
        if not np.all(np.isfinite(vals)):
            raise BeltramiBoundError("Beltrami field has non-finite entries")
        c = float(np.abs(vals).max())
        if c > MU_BOUND:
            raise BeltramiBoundError(f"sup |mu| = {c:.8f} exceeds the bound {MU_BOUND}")
        object.__setattr__(self, "c", c)


@dataclass(frozen=True)
class ConformalFactor:
    """Per-vertex conformal exponent, optionally backed by an expression."""

    mesh: DiscMesh
    values: np.ndarray
    expr: ex.Expr | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.mesh.n_vertices,):
            raise ValueError("conformal factor must be per-vertex")
        if not np.all(np.isfinite(vals)):
            raise ValueError("conformal factor has non-finite entries")

    @classmethod
    def from_expression(cls, mesh, u):
        x, y = mesh.vertices.real, mesh.vertices.imag
        vals = ex.evaluate(u, x, y) + np.zeros_like(x)
        return cls(mesh, vals, u)

    @classmethod
    def zero(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_vertices), ex.Const(0.0))


# ---------------------------------------------------------------------------
# conformal-class calculus

def mu_from_metric(g):
    """Beltrami coefficient and conformal weight of a metric.

    Returns ``(mu, rho)`` with rho = (g11+g22) + 2 sqrt(det g) and
    mu = ((g11 - g22) + 2i g12) / rho, so that 4g = rho |dz + mu dzbar|^2.
    """
    rho = g.trace() + 2.0 * np.sqrt(g.det())
    mu = ((g.g11 - g.g22) + 2j * g.g12) / rho
    return BeltramiField(g.mesh, mu), rho


def metric_from_mu(mu):
    """Canonical metric |dz + mu dzbar|^2 of a Beltrami coefficient."""
    m = mu.values
    g11 = np.abs(1.0 + m) ** 2
    g22 = np.abs(1.0 - m) ** 2
    g12 = 2.0 * m.imag
    return MetricField(mu.mesh, g11, g12, g22)


def conformal_scale(g, u):
    """Pointwise rescaling e^{2u} g; analytic sources are propagated."""
    vals = u.values if isinstance(u, ConformalFactor) else np.asarray(u, dtype=float)
    if vals.max() > 300.0:
        raise ValueError("conformal factor too large (e^{2u} would overflow)")
    s = np.exp(2.0 * vals)
    source = None
    u_expr = u.expr if isinstance(u, ConformalFactor) else None
    if u_expr is not None and isinstance(g.source, ConformalSource):
        source = ConformalSource(g.source.u + u_expr)
    elif u_expr is not None and isinstance(g.source, ComponentsSource):
        w = ex.exp(ex.Const(2.0) * u_expr)
        source = ComponentsSource(w * g.source.e11, w * g.source.e12, w * g.source.e22)
    return MetricField(g.mesh, s * g.g11, s * g.g12, s * g.g22, source)


def convex_combination(g, u1, u2, t1, t2):
    """Scale ``g`` by the fiber-convex combination e^{2(t1 u1 + t2 u2)}."""
    if t1 < 0 or t2 < 0 or abs(t1 + t2 - 1.0) > 1e-12:
        raise ValueError("weights must be nonnegative and sum to 1")
    vals = t1 * u1.values + t2 * u2.values
    comb_expr = None
    if u1.expr is not None and u2.expr is not None:
        comb_expr = ex.Const(t1) * u1.expr + ex.Const(t2) * u2.expr
    return conformal_scale(g, ConformalFactor(g.mesh, vals, comb_expr))


def volume_ratio(g0, g, n):
    """Pointwise (sqrt(det g0) / sqrt(det g))^{2/n}; strictly positive."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return (g0.det() / g.det()) ** (1.0 / n)


# ---------------------------------------------------------------------------
# builtin families

def radial_stretch_exprs(a):
    """Component expressions of the map z (a + (1-a) |z|^2)."""
    r2 = ex.X**2 + ex.Y**2
    s = ex.Const(a) + ex.Const(1.0 - a) * r2
    return ex.X * s, ex.Y * s


def boundary_twist_exprs(beta):
    """Component expressions of the map z e^{2 i beta x y}."""
    phase = ex.Const(2.0 * beta) * ex.X * ex.Y
    return (ex.X * ex.cos(phase) - ex.Y * ex.sin(phase),
            ex.X * ex.sin(phase) + ex.Y * ex.cos(phase))


def pullback_exprs(p, q, base=None):
    """Component expressions of (p, q)* g for an analytic map and analytic base g.

    ``base`` is a (e11, e12, e22) triple of expressions; defaults to the flat
    metric.  Base components are composed with the map before contraction with
    the Jacobian.
    """
    px, py = ex.differentiate(p, "x"), ex.differentiate(p, "y")
    qx, qy = ex.differentiate(q, "x"), ex.differentiate(q, "y")
    if base is None:
        b11, b12, b22 = ex.Const(1.0), ex.Const(0.0), ex.Const(1.0)
    else:
        sub = {"x": p, "y": q}
        b11, b12, b22 = (ex.substitute(e, sub) for e in base)
    e11 = b11 * px**2 + ex.Const(2.0) * b12 * px * qx + b22 * qx**2
    e12 = b11 * px * py + b12 * (px * qy + py * qx) + b22 * qx * qy
    e22 = b11 * py**2 + ex.Const(2.0) * b12 * py * qy + b22 * qy**2
    return e11, e12, e22


def cap_expr(t):
    """Conformal factor log(2 / (1 + t r^2)) of the curvature-t cap."""
    return ex.log(ex.Const(2.0) / (ex.Const(1.0) + ex.Const(t) * (ex.X**2 + ex.Y**2)))


def flat_metric(mesh):
    return MetricField.from_conformal_expr(mesh, ex.Const(0.0))


def builtin_metric(name, params, mesh):
    """Construct one of the builtin metric families.

    Names: ``flat``; ``cap`` (t in (0, 1]); ``conformal`` (u expression);
    ``components`` (three expressions); ``pullback_radial`` (a in (0, 1]);
    ``pullback_twist`` (|beta| < 0.5).
    """
    params = dict(params or {})

    def need(key, lo=None, hi=None, strict_lo=False):
        if key not in params:
            raise ValueError(f"builtin {name!r} requires parameter {key!r}")
        val = float(params[key])
        if lo is not None and (val <= lo if strict_lo else val < lo):
            raise ValueError(f"parameter {key}={val} out of range for {name!r}")
        if hi is not None and val > hi:
            raise ValueError(f"parameter {key}={val} out of range for {name!r}")
        return val

    if name == "flat":
        return flat_metric(mesh)
    if name == "cap":
        t = need("t", lo=0.0, hi=1.0, strict_lo=True)
        return MetricField.from_conformal_expr(mesh, cap_expr(t))
    if name == "conformal":
        u = params.get("u")
        if u is None:
            raise ValueError("builtin 'conformal' requires parameter 'u'")
        return MetricField.from_conformal_expr(mesh, u if isinstance(u, ex.Expr) else ex.parse(str(u)))
    if name == "components":
        comps = []
        for key in ("g11", "g12", "g22"):
            if key not in params:
                raise ValueError(f"builtin 'components' requires parameter {key!r}")
            val = params[key]
            comps.append(val if isinstance(val, ex.Expr) else ex.parse(str(val)))
        return MetricField.from_component_exprs(mesh, *comps)
    if name == "pullback_radial":
        a = need("a", lo=0.0, hi=1.0, strict_lo=True)
        p, q = radial_stretch_exprs(a)
        return MetricField.from_component_exprs(mesh, *pullback_exprs(p, q))
    if name == "pullback_twist":
        beta = need("beta")
        if abs(beta) >= 0.5:
            raise ValueError(f"parameter beta={beta} out of range for 'pullback_twist'")
        p, q = boundary_twist_exprs(beta)
        return MetricField.from_component_exprs(mesh, *pullback_exprs(p, q))
    raise ValueError(f"unknown builtin metric {name!r}")


# ---------------------------------------------------------------------------
# serialization

def metric_to_json_dict(g):
    """JSON document for a metric; analytic sources serialize as expressions."""
    if isinstance(g.source, ConformalSource):
        return {"type": "conformal", "u": ex.to_string(g.source.u)}
    if isinstance(g.source, ComponentsSource):
        return {"type": "components",
                "g11": ex.to_string(g.source.e11),
                "g12": ex.to_string(g.source.e12),
                "g22": ex.to_string(g.source.e22)}
    return {"type": "discrete",
            "g11": g.g11.tolist(), "g12": g.g12.tolist(), "g22": g.g22.tolist()}


def metric_from_json_dict(doc, mesh):
    """Rebuild a metric from its JSON document on the given mesh."""
    kind = doc.get("type")
    if kind == "conformal":
        return MetricField.from_conformal_expr(mesh, ex.parse(doc["u"]))
    if kind == "components":
        return MetricField.from_component_exprs(
            mesh, ex.parse(doc["g11"]), ex.parse(doc["g12"]), ex.parse(doc["g22"]))
    if kind == "discrete":
        return MetricField(mesh, np.asarray(doc["g11"], dtype=float),
                           np.asarray(doc["g12"], dtype=float),
                           np.asarray(doc["g22"], dtype=float))
    if kind == "builtin":
        return builtin_metric(doc["name"], doc.get("params", {}), mesh)
    raise ValueError(f"unknown metric document type {kind!r}")
