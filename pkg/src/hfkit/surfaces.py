"""Closed-form oracle surfaces and the Weierstrass axis curves of g = exp(alpha z)."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .geometry import (
    AnalyticGraph,
    MeshPatch,
    MultiGraph,
    PolarGrid,
    PolarRect,
    graph_embed,
    grid_triangles,
)


class RepresentationWarning(UserWarning):
    """The requested region cannot be represented as a graph."""


# ------------------------------------------------------- analytic graphs


def helicoid_graph(a):
    def f(rho, theta):
        z = np.zeros_like(rho)
        return a * theta, z, a + z, z, z, z

    return AnalyticGraph(f, f"helicoid(a={a!r})")


def plane_graph(slope=(0.0, 0.0)):
    p1, p2 = float(slope[0]), float(slope[1])

    def f(rho, theta):
        c, s = np.cos(theta), np.sin(theta)
        lin = p1 * c + p2 * s
        ang = -p1 * s + p2 * c
        return rho * lin, lin, rho * ang, np.zeros_like(rho), ang, -rho * lin

    return AnalyticGraph(f, f"plane(slope=({p1!r}, {p2!r}))")


def catenoid_graph(neck):
    c = float(neck)

    def f(rho, theta):
        q = np.sqrt(rho**2 - c**2)
        z = np.zeros_like(rho)
        return c * np.arccosh(rho / c), c / q, z, -c * rho / q**3, z, z

    return AnalyticGraph(f, f"catenoid(neck={c!r})")


def expression_graph(expr: str):
    """Analytic graph from a sympy expression in ``rho`` and ``theta``."""
    import sympy

    r, t = sympy.symbols("rho theta", positive=True)
    e = sympy.sympify(expr, locals={"rho": r, "theta": t})
    parts = [e, e.diff(r), e.diff(t), e.diff(r, 2), e.diff(r, t), e.diff(t, 2)]
    fns = [sympy.lambdify((r, t), p, "numpy") for p in parts]

    def f(rho, theta):
        return tuple(np.broadcast_to(np.asarray(fn(rho, theta), float), np.shape(rho)) for fn in fns)

    return AnalyticGraph(f, f"expr({expr})")


# ----------------------------------------------------------- helicoids


@dataclass
class HelicoidModel:
    """Helicoid ``translation + rotation @ (s cos t, s sin t, pitch t)``."""

    pitch: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.pitch == 0:
            raise ValueError("helicoid pitch must be nonzero")
        self.rotation = np.asarray(self.rotation, float).reshape(3, 3)
        self.translation = np.asarray(self.translation, float).reshape(3)
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-12):
            raise ValueError("helicoid frame rotation is not orthonormal to 1e-12")

    @property
    def axis(self):
        return self.rotation[:, 2]

    def to_local(self, pts):
        return (np.asarray(pts, float) - self.translation) @ self.rotation

    def to_world(self, pts_local):
        return np.asarray(pts_local, float) @ self.rotation.T + self.translation

    def point(self, s, t):
        s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
        loc = np.stack([s * np.cos(t), s * np.sin(t), self.pitch * t], axis=-1)
        return self.to_world(loc)

    def normal(self, s, t):
        a = self.pitch
        s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
        n = np.stack([a * np.sin(t), -a * np.cos(t), s], axis=-1) / np.sqrt(a * a + s * s)[..., None]
        return n @ self.rotation.T

    def A2(self, s):
        a = self.pitch
        return 2.0 * a * a / (a * a + np.asarray(s, float) ** 2) ** 2

    def project(self, pts):
        """Closest points: returns ``(s, t, signed offset along the normal)``."""
        loc = self.to_local(pts)
        t, e1, e2 = kernels.project_helicoid(loc, self.pitch)
        s = loc[:, 0] * np.cos(t) + loc[:, 1] * np.sin(t)
        foot = self.point(s, t)
        n = self.normal(s, t)
        off = np.einsum("ij,ij->i", np.asarray(pts, float) - foot, n)
        return s, t, off

    def to_dict(self):
        return {"pitch": self.pitch, "rotation": self.rotation.tolist(),
                "translation": self.translation.tolist()}


def helicoid_mesh(model: HelicoidModel, s_max, theta1, theta2, n_s, n_t, ball=None):
    """Ruled-parametrization mesh including the axis (odd ``n_s`` puts a row on it).

    With ``ball`` the mesh is trimmed to triangles whose vertices all lie in
    the ball of that radius about the model origin.
    """
    s = np.linspace(-s_max, s_max, n_s)
    t = np.linspace(theta1, theta2, n_t)
    S, T = np.meshgrid(s, t, indexing="ij")
    verts = model.point(S, T).reshape(-1, 3)
    normals = model.normal(S, T).reshape(-1, 3)
    A2 = model.A2(S).reshape(-1)
    tris = grid_triangles(n_s, n_t)
    params = np.stack([S.ravel(), T.ravel()], axis=1)
    m = MeshPatch(verts, tris, normals, A2).orient_to_normals()
    if ball is not None:
        r = np.linalg.norm(verts - model.translation, axis=1)
        keep_t = np.all(r[m.triangles] <= ball, axis=1)
        m, keep_v = _compact(m, keep_t)
        params = params[keep_v]
    m.source = {"kind": "helicoid", "pitch": model.pitch}
    return m, params


def _compact(m: MeshPatch, keep_tri):
    tris = m.triangles[keep_tri]
    used = np.zeros(m.n_vertices, bool)
    used[tris.ravel()] = True
    remap = -np.ones(m.n_vertices, np.int64)
    remap[used] = np.arange(int(used.sum()))
    A2 = None if m.A2 is None else m.A2[used]
    return MeshPatch(m.vertices[used], remap[tris], m.normals[used], A2, m.source), used


def catenoid_mesh(neck, t_max, n_t, n_phi, phi_span=2 * math.pi):
    """Catenoid ``(c cosh t cos phi, c cosh t sin phi, c t)`` as a mesh."""
    c = float(neck)
    t = np.linspace(-t_max, t_max, n_t)
    closed = abs(phi_span - 2 * math.pi) < 1e-12
    phi = np.linspace(0.0, phi_span, n_phi, endpoint=not closed)
    T, P = np.meshgrid(t, phi, indexing="ij")
    verts = np.stack([c * np.cosh(T) * np.cos(P), c * np.cosh(T) * np.sin(P), c * T], -1).reshape(-1, 3)
    normals = (np.stack([np.cos(P), np.sin(P), -np.sinh(T)], -1) / np.cosh(T)[..., None]).reshape(-1, 3)
    A2 = (2.0 / (c * c * np.cosh(T) ** 4)).reshape(-1)
    tris = grid_triangles(n_t, n_phi)
    if closed:
        i = np.arange(n_t - 1)
        a = i * n_phi + n_phi - 1
        b = (i + 1) * n_phi + n_phi - 1
        cc = (i + 1) * n_phi
        d = i * n_phi
        tris = np.concatenate([tris, np.stack([a, b, cc], 1), np.stack([a, cc, d], 1)])
    m = MeshPatch(verts, tris, normals, A2).orient_to_normals()
    m.source = {"kind": "catenoid", "neck": c}
    return m


def plane_mesh(half_width, n, slope=(0.0, 0.0)):
    x = np.linspace(-half_width, half_width, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    Z = slope[0] * X + slope[1] * Y
    verts = np.stack([X, Y, Z], -1).reshape(-1, 3)
    nrm = np.array([-slope[0], -slope[1], 1.0])
    nrm = np.tile(nrm / np.linalg.norm(nrm), (len(verts), 1))
    m = MeshPatch(verts, grid_triangles(n, n), nrm, np.zeros(len(verts))).orient_to_normals()
    m.source = {"kind": "plane", "slope": list(map(float, slope))}
    return m


@dataclass
class Region:
    """Sampling region for :func:`make_surface`.

    ``r1 > 0`` requests a graph over ``[r1, r2] x [theta1, theta2]``;
    ``r1 <= 0`` requests a mesh reaching the axis.
    """

    r1: float = 1.0
    r2: float = 4.0
    theta1: float = -math.pi
    theta2: float = math.pi
    n_rho: int = 33
    n_theta: int = 65
    geometric: bool = True
    ball: Optional[float] = None

    def to_dict(self):
        return dict(self.__dict__)


def make_surface(kind, params=None, region: Region | None = None):
    """Generate an oracle surface: ``(MultiGraph or None, MeshPatch)``.

    ``kind`` is ``"helicoid"`` (params ``pitch``), ``"plane"`` (``slope``),
    ``"catenoid"`` (``neck``) or ``"expr"`` (``expr``, a sympy string in
    ``rho`` and ``theta``). Graphs carry their analytic derivatives.
    """
    params = dict(params or {})
    region = region or Region()
    source = {"kind": kind, **params, "region": region.to_dict()}
    if kind == "helicoid":
        a = float(params.get("pitch", 1.0))
        if a == 0:
            raise ValueError("helicoid pitch must be nonzero")
        analytic = helicoid_graph(a)
    elif kind == "plane":
        slope = tuple(float(v) for v in params.get("slope", (0.0, 0.0)))
        analytic = plane_graph(slope)
    elif kind == "catenoid":
        c = float(params.get("neck", 1.0))
        if not c > 0:
            raise ValueError("catenoid neck radius must be positive")
        analytic = catenoid_graph(c)
    elif kind == "expr":
        analytic = expression_graph(params["expr"])
    else:
        raise ValueError(f"unknown surface kind {kind!r}")

    graph_ok = region.r1 > 0 and not (kind == "catenoid" and region.r1 <= analytic_neck(params))
    if not graph_ok:
        if kind == "expr":
            raise ValueError("expression surfaces need a graph region with r1 > 0")
        warnings.warn(f"{kind}: region is not representable as a graph; returning mesh only",
                      RepresentationWarning, stacklevel=2)
        return None, _axis_mesh(kind, params, region)

    grid = PolarGrid.build(PolarRect(region.r1, region.r2, region.theta1, region.theta2),
                           region.n_rho, region.n_theta, region.geometric)
    rho, theta = grid.mesh()
    u = MultiGraph(grid, analytic(rho, theta).u, analytic=analytic, source=source)
    return u, graph_embed(u)


def analytic_neck(params):
    return float(params.get("neck", 1.0))


def _axis_mesh(kind, params, region):
    R = region.r2
    if kind == "helicoid":
        a = float(params.get("pitch", 1.0))
        m, _ = helicoid_mesh(HelicoidModel(a), R, region.theta1, region.theta2,
                             2 * (region.n_rho // 2) + 1, region.n_theta, ball=region.ball)
        return m
    if kind == "plane":
        return plane_mesh(R, region.n_rho, params.get("slope", (0.0, 0.0)))
    c = analytic_neck(params)
    t_max = math.acosh(max(R / c, 1.0 + 1e-9))
    return catenoid_mesh(c, t_max, region.n_rho, region.n_theta)


def attach_analytic(source):
    """Rebuild the analytic attachment recorded in a graph's ``source``."""
    if not source:
        return None
    kind = source.get("kind")
    if kind == "helicoid":
        return helicoid_graph(float(source.get("pitch", 1.0)))
    if kind == "plane":
        return plane_graph(tuple(source.get("slope", (0.0, 0.0))))
    if kind == "catenoid":
        return catenoid_graph(float(source.get("neck", 1.0)))
    if kind == "expr":
        return expression_graph(source["expr"])
    return None


# ----------------------------------------------------- Weierstrass curves


@dataclass(frozen=True)
class WeierstrassAlpha:
    alpha1: float
    alpha2: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha1) and math.isfinite(self.alpha2)):
            raise ValueError("alpha must be finite")
        if not self.abs2 > 0:
            raise ValueError("alpha must be nonzero (|alpha|^2 underflows to 0)")

    @property
    def abs2(self):
        return self.alpha1**2 + self.alpha2**2


@dataclass
class CurveSamples:
    t: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("curve parameters must be strictly increasing")

    def to_csv(self):
        lines = ["t,x1,x2"]
        for t, (x1, x2) in zip(self.t, self.points):
            lines.append(f"{float(t)!r},{float(x1)!r},{float(x2)!r}")
        return "\n".join(lines) + "\n"


def weierstrass_xy(alpha: WeierstrassAlpha, t):
    """Image of the imaginary axis z = i t under the surface with
    g = exp(alpha z) and height differential dz."""
    a1, a2 = alpha.alpha1, alpha.alpha2
    t = np.asarray(t, float)
    inv = 1.0 / alpha.abs2
    x1 = inv * (a2 * np.sinh(a2 * t) * np.sin(a1 * t) - a1 * np.cosh(a2 * t) * np.cos(a1 * t))
    x2 = inv * (a2 * np.sinh(a2 * t) * np.cos(a1 * t) + a1 * np.cosh(a2 * t) * np.sin(a1 * t))
    return x1, x2


def weierstrass_curve(alpha: WeierstrassAlpha, t_range, n) -> CurveSamples:
    if n < 2:
        raise ValueError("need at least 2 samples")
    t = np.linspace(t_range[0], t_range[1], int(n))
    x1, x2 = weierstrass_xy(alpha, t)
    return CurveSamples(t, np.stack([x1, x2], axis=1))


@dataclass
class EmbeddednessVerdict:
    embedded: bool
    min_distance: float
    witness: Optional[tuple] = None

    def to_dict(self):
        return {"embedded": self.embedded, "min_distance": self.min_distance,
                "witness": None if self.witness is None else list(self.witness)}


def embeddedness_verdict(c: CurveSamples, tol) -> EmbeddednessVerdict:
    """Brute-force check over all non-adjacent segment pairs of the polyline."""
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    if len(c.t) < 16:
        raise ValueError("need at least 16 samples")
    best, arg = kernels.segment_min_distance(c.points)
    i = int(np.argmin(best))
    d = float(best[i])
    if d < tol:
        j = int(arg[i])
        return EmbeddednessVerdict(False, d, (float(c.t[i]), float(c.t[j])))
    return EmbeddednessVerdict(True, d, None)
