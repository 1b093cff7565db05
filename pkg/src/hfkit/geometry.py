"""Polar grids, multivalued graphs, triangle meshes and the basic geometric
operations on them (embedding, derivatives, separation, curvature, cones).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.sparse.csgraph import connected_components

from . import kernels
from .stencils import d1, d2

TWO_PI = 2.0 * math.pi
DEFAULT_R_MAX = 1.0e4


@dataclass(frozen=True)
class PolarRect:
    """Closed polar rectangle [r1, r2] x [theta1, theta2]; r2 may be ``math.inf``."""

    r1: float
    r2: float
    theta1: float
    theta2: float

    def __post_init__(self):
        if not self.r1 > 0:
            raise ValueError(f"r1 must be positive, got {self.r1}")
        if not self.r2 > self.r1:
            raise ValueError(f"r2 must exceed r1, got r1={self.r1}, r2={self.r2}")
        if not self.theta2 > self.theta1:
            raise ValueError("theta2 must exceed theta1")

    def contains(self, rho, theta, rtol=1e-12):
        rho = np.asarray(rho)
        theta = np.asarray(theta)
        tr = rtol * max(1.0, self.r1)
        tt = rtol * max(1.0, abs(self.theta1), abs(self.theta2))
        return (
            (rho >= self.r1 - tr)
            & (rho <= self.r2 + tr * max(1.0, self.r2 if math.isfinite(self.r2) else 1.0))
            & (theta >= self.theta1 - tt)
            & (theta <= self.theta2 + tt)
        )


@dataclass(frozen=True)
class PolarGrid:
    """Tensor grid over a finite polar rectangle.

    Radial nodes are uniform in ``xi = log(rho)`` when ``geometric`` (so
    ``h_rho / rho`` is constant) and uniform in ``rho`` otherwise.
    """

    rect: PolarRect
    n_rho: int
    n_theta: int
    geometric: bool = True
    truncated_from: Optional[float] = None

    def __post_init__(self):
        if self.n_rho < 4 or self.n_theta < 8:
            raise ValueError(
                f"grid needs n_rho >= 4 and n_theta >= 8, got {self.n_rho} x {self.n_theta}"
            )
        if not math.isfinite(self.rect.r2):
            raise ValueError("use PolarGrid.build to grid an unbounded rectangle")

    @classmethod
    def build(cls, rect, n_rho, n_theta, geometric=True, r_max=DEFAULT_R_MAX):
        truncated = None
        if not math.isfinite(rect.r2):
            if r_max <= rect.r1:
                raise ValueError("r_max must exceed r1")
            truncated = rect.r2
            rect = PolarRect(rect.r1, float(r_max), rect.theta1, rect.theta2)
        return cls(rect, int(n_rho), int(n_theta), bool(geometric), truncated)

    @cached_property
    def xi(self):
        if self.geometric:
            return np.linspace(math.log(self.rect.r1), math.log(self.rect.r2), self.n_rho)
        return np.linspace(self.rect.r1, self.rect.r2, self.n_rho)

    @cached_property
    def rho(self):
        rho = np.exp(self.xi) if self.geometric else self.xi.copy()
        rho[0], rho[-1] = self.rect.r1, self.rect.r2
        return rho

    @cached_property
    def theta(self):
        return np.linspace(self.rect.theta1, self.rect.theta2, self.n_theta)

    @property
    def h_xi(self):
        return (self.xi[-1] - self.xi[0]) / (self.n_rho - 1)

    @property
    def h_theta(self):
        return (self.rect.theta2 - self.rect.theta1) / (self.n_theta - 1)

    @property
    def shape(self):
        return (self.n_rho, self.n_theta)

    def mesh(self):
        """Broadcast ``(rho, theta)`` node arrays of shape ``(n_rho, n_theta)``."""
        return np.meshgrid(self.rho, self.theta, indexing="ij")

    def theta_shift(self, dtheta):
        """Index offset equal to ``dtheta``, or None if not commensurate."""
        k = dtheta / self.h_theta
        kr = round(k)
        if abs(k - kr) < 1e-9 * max(1.0, abs(k)):
            return int(kr)
        return None

    def theta_index(self, value):
        """Index of the node at ``value`` if one exists (within 1e-9 h)."""
        k = (value - self.rect.theta1) / self.h_theta
        kr = round(k)
        if abs(k - kr) < 1e-9 and 0 <= kr < self.n_theta:
            return int(kr)
        return None

    def rho_index(self, value):
        idx = int(np.argmin(np.abs(self.rho - value)))
        if abs(self.rho[idx] - value) <= 1e-12 * max(1.0, value):
            return idx
        return None

    def sub_theta(self, j0, j1):
        """Grid restricted to theta nodes ``j0..j1`` inclusive."""
        rect = PolarRect(self.rect.r1, self.rect.r2, float(self.theta[j0]), float(self.theta[j1]))
        return PolarGrid(rect, self.n_rho, j1 - j0 + 1, self.geometric, self.truncated_from)

    def to_dict(self):
        return {
            "r1": self.rect.r1,
            "r2": self.rect.r2,
            "theta1": self.rect.theta1,
            "theta2": self.rect.theta2,
            "n_rho": self.n_rho,
            "n_theta": self.n_theta,
            "geometric": self.geometric,
            "truncated_from": None if self.truncated_from is None else str(self.truncated_from),
        }

    @classmethod
    def from_dict(cls, d):
        rect = PolarRect(float(d["r1"]), float(d["r2"]), float(d["theta1"]), float(d["theta2"]))
        tf = d.get("truncated_from")
        return cls(rect, int(d["n_rho"]), int(d["n_theta"]), bool(d["geometric"]),
                   None if tf is None else float(tf))


@dataclass
class PolarDerivs:
    """Polar partial derivatives of u at broadcastable (rho, theta) points."""

    rho: np.ndarray
    theta: np.ndarray
    u: np.ndarray
    ur: np.ndarray
    ut: np.ndarray
    urr: np.ndarray
    urt: np.ndarray
    utt: np.ndarray

    def grad(self):
        """Cartesian gradient, trailing axis (u_x, u_y)."""
        c, s = np.cos(self.theta), np.sin(self.theta)
        gt = self.ut / self.rho
        return np.stack([c * self.ur - s * gt, s * self.ur + c * gt], axis=-1)

    def grad_norm2(self):
        return self.ur**2 + (self.ut / self.rho) ** 2

    def hess_polar(self):
        """Hessian in the orthonormal frame (e_rho, e_theta)."""
        r = self.rho
        hrr = self.urr
        hrt = self.urt / r - self.ut / r**2
        htt = self.utt / r**2 + self.ur / r
        return np.stack([np.stack([hrr, hrt], -1), np.stack([hrt, htt], -1)], -2)

    def hess(self):
        hp = self.hess_polar()
        c, s = np.cos(self.theta), np.sin(self.theta)
        c, s = np.broadcast_to(c, hp.shape[:-2]), np.broadcast_to(s, hp.shape[:-2])
        rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
        return rot @ hp @ np.swapaxes(rot, -1, -2)


@dataclass(frozen=True)
class AnalyticGraph:
    """Closed-form u and its polar derivatives.

    ``func(rho, theta)`` returns ``(u, u_r, u_t, u_rr, u_rt, u_tt)``.
    """

    func: Callable
    label: str = "analytic"

    def __call__(self, rho, theta):
        rho, theta = np.broadcast_arrays(np.asarray(rho, float), np.asarray(theta, float))
        vals = [np.broadcast_to(np.asarray(v, float), rho.shape) for v in self.func(rho, theta)]
        return PolarDerivs(rho, theta, *vals)


@dataclass
class MultiGraph:
    """Sampled multivalued graph u over a polar grid, with an explicit frame.

    The embedded surface is ``rotation @ Phi_u + center``.
    """

    grid: PolarGrid
    values: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    analytic: Optional[AnalyticGraph] = None
    source: Optional[dict] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-12):
            raise ValueError("frame rotation is not orthonormal")

    @property
    def winding(self):
        """Number of full turns spanned by the angular domain."""
        return (self.grid.rect.theta2 - self.grid.rect.theta1) / TWO_PI

    def with_values(self, values, analytic=None, source=None):
        return MultiGraph(self.grid, values, self.center.copy(), self.rotation.copy(),
                          analytic, source)

    def first_nonfinite(self):
        bad = np.argwhere(~np.isfinite(self.values))
        return None if len(bad) == 0 else tuple(int(k) for k in bad[0])


@dataclass
class GridField:
    """Node-aligned values on a polar grid (trailing axes allowed)."""

    values: np.ndarray
    units: str
    grid: Optional[PolarGrid] = None

    @property
    def is_empty(self):
        return self.grid is None or self.values.size == 0

    def sup(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


ScalarField = GridField
VectorField = GridField


def polar_derivatives(u: MultiGraph, use_analytic=True) -> PolarDerivs:
    """Polar derivatives at every node: analytic when attached, otherwise
    second-order finite differences in ``(xi, theta)``."""
    rho, theta = u.grid.mesh()
    if use_analytic and u.analytic is not None:
        return u.analytic(rho, theta)
    g = u.grid
    try:
        uxi = d1(u.values, g.h_xi, axis=0)
        uxixi = d2(u.values, g.h_xi, axis=0)
    except ValueError as exc:
        raise ValueError(f"{exc} (radial)") from None
    try:
        ut = d1(u.values, g.h_theta, axis=1)
        utt = d2(u.values, g.h_theta, axis=1)
    except ValueError as exc:
        raise ValueError(f"{exc} (angular)") from None
    uxit = d1(uxi, g.h_theta, axis=1)
    if g.geometric:
        ur = uxi / rho
        urr = (uxixi - uxi) / rho**2
        urt = uxit / rho
    else:
        ur, urr, urt = uxi, uxixi, uxit
    return PolarDerivs(rho, theta, u.values, ur, ut, urr, urt, utt)


def derivatives(u: MultiGraph, use_analytic=True):
    """Cartesian gradient ``(..., 2)`` and Hessian ``(..., 2, 2)`` fields."""
    pd = polar_derivatives(u, use_analytic)
    return (GridField(pd.grad(), "dimensionless", u.grid),
            GridField(pd.hess(), "1/length", u.grid))


def graph_A2(grad, hess):
    """|A|^2 of the graph z = u(x, y) from Cartesian gradient and Hessian."""
    p = np.asarray(grad)
    H = np.asarray(hess)
    w2 = 1.0 + np.sum(p * p, axis=-1)
    ginv = np.eye(2) - p[..., :, None] * p[..., None, :] / w2[..., None, None]
    m = ginv @ H
    return np.einsum("...ij,...ji->...", m, m) / w2


def graph_normals(grad):
    p = np.asarray(grad)
    n = np.concatenate([-p, np.ones(p.shape[:-1] + (1,))], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def separation(u: MultiGraph) -> GridField:
    """w(rho, theta) = u(rho, theta + 2 pi) - u(rho, theta) on the overlap domain.

    Returns an empty field when the angular span is below one full turn.
    """
    g = u.grid
    span = g.rect.theta2 - g.rect.theta1
    if span < TWO_PI - 1e-12:
        return GridField(np.empty((g.n_rho, 0)), "length", None)
    k = g.theta_shift(TWO_PI)
    if k is not None:
        w = u.values[:, k:] - u.values[:, : g.n_theta - k]
        if w.shape[1] < 1:
            return GridField(np.empty((g.n_rho, 0)), "length", None)
        sub = g.sub_theta(0, g.n_theta - 1 - k) if w.shape[1] >= 8 else None
        return GridField(w, "length", sub)
    # non-commensurate angular spacing: spline along each row
    keep = g.theta <= g.rect.theta2 - TWO_PI + 1e-12
    th = g.theta[keep]
    spl = CubicSpline(g.theta, u.values, axis=1)
    w = spl(th + TWO_PI) - u.values[:, keep]
    sub = g.sub_theta(0, int(np.count_nonzero(keep)) - 1) if w.shape[1] >= 8 else None
    return GridField(w, "length", sub)


# ---------------------------------------------------------------- meshes


@dataclass
class MeshPatch:
    """Oriented triangle mesh with per-vertex unit normals and optional |A|^2."""

    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray
    A2: Optional[np.ndarray] = None
    source: Optional[dict] = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.normals = np.ascontiguousarray(self.normals, dtype=float)
        n = len(self.vertices)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise ValueError("triangle references a missing vertex")
        if self.normals.shape != self.vertices.shape:
            raise ValueError("one normal per vertex required")
        nrm = np.linalg.norm(self.normals, axis=1)
        if np.any(np.abs(nrm - 1.0) > 1e-12):
            raise ValueError("normals must be unit length to 1e-12")
        if self.A2 is not None:
            self.A2 = np.asarray(self.A2, dtype=float).reshape(n)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def transformed(self, rotation, translation=(0.0, 0.0, 0.0)):
        R = np.asarray(rotation, float)
        t = np.asarray(translation, float)
        return MeshPatch(self.vertices @ R.T + t, self.triangles.copy(),
                         _unit(self.normals @ R.T), None if self.A2 is None else self.A2.copy(),
                         self.source)

    def scaled(self, lam):
        A2 = None if self.A2 is None else self.A2 / lam**2
        return MeshPatch(self.vertices * lam, self.triangles.copy(), self.normals.copy(), A2,
                         self.source)

    def with_A2(self, A2):
        return MeshPatch(self.vertices, self.triangles, self.normals, A2, self.source)

    @cached_property
    def edges(self):
        """Unique undirected edges (sorted pairs) and triangle-to-edge map."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        uniq, inv = np.unique(e, axis=0, return_inverse=True)
        tri_edges = inv.reshape(3, -1).T
        return uniq, tri_edges

    @cached_property
    def edge_triangle_count(self):
        uniq, tri_edges = self.edges
        return np.bincount(tri_edges.ravel(), minlength=len(uniq))

    @cached_property
    def boundary_vertices(self):
        uniq, _ = self.edges
        b = uniq[self.edge_triangle_count == 1]
        mask = np.zeros(self.n_vertices, bool)
        mask[b.ravel()] = True
        return mask

    @cached_property
    def adjacency(self):
        uniq, _ = self.edges
        n = self.n_vertices
        data = np.ones(2 * len(uniq))
        rows = np.concatenate([uniq[:, 0], uniq[:, 1]])
        cols = np.concatenate([uniq[:, 1], uniq[:, 0]])
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))

    @cached_property
    def components(self):
        _, labels = connected_components(self.adjacency, directed=False)
        return labels

    def ring(self, k=1):
        """CSR (ptr, idx) of the k-ring of every vertex, excluding itself."""
        A = self.adjacency
        R = A.copy()
        acc = A.copy()
        for _ in range(k - 1):
            R = R @ A
            acc = acc + R
        acc = acc.tocsr()
        acc.setdiag(0)
        acc.eliminate_zeros()
        acc.sort_indices()
        return acc.indptr.astype(np.int64), acc.indices.astype(np.int64)

    def triangle_areas(self):
        v = self.vertices
        t = self.triangles
        return 0.5 * np.linalg.norm(np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]]), axis=1)

    def diameter(self):
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def check_degenerate(self, rel=1e-14):
        scale = max(self.diameter(), 1e-300) ** 2
        bad = np.nonzero(self.triangle_areas() < rel * scale)[0]
        if len(bad):
            raise ValueError(f"degenerate triangles (area < {rel:g} x scale^2): {bad[:20].tolist()}")

    def orient_to_normals(self):
        """Flip triangle winding where it disagrees with the vertex normals."""
        v, t = self.vertices, self.triangles
        fn = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        vn = self.normals[t].sum(axis=1)
        flip = np.einsum("ij,ij->i", fn, vn) < 0
        t = t.copy()
        t[flip] = t[flip][:, ::-1]
        return MeshPatch(v, t, self.normals, self.A2, self.source)


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def area_weighted_normals(vertices, triangles):
    v, t = vertices, triangles
    fn = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    n = np.zeros_like(v)
    for k in range(3):
        np.add.at(n, t[:, k], fn)
    return _unit(n)


def grid_triangles(n_i, n_j):
    """Two triangles per cell of an ``n_i x n_j`` node lattice (row-major ids)."""
    i, j = np.meshgrid(np.arange(n_i - 1), np.arange(n_j - 1), indexing="ij")
    a = (i * n_j + j).ravel()
    b = ((i + 1) * n_j + j).ravel()
    c = ((i + 1) * n_j + j + 1).ravel()
    d = (i * n_j + j + 1).ravel()
    return np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])


def graph_embed(u: MultiGraph) -> MeshPatch:
    """Mesh of ``Phi_u`` over the grid; sheets stacked over the same planar
    point remain distinct vertices."""
    bad = u.first_nonfinite()
    if bad is not None:
        raise ValueError(f"non-finite graph value at node {bad}")
    rho, theta = u.grid.mesh()
    pts = np.stack([rho * np.cos(theta), rho * np.sin(theta), u.values], axis=-1).reshape(-1, 3)
    pd = polar_derivatives(u)
    grad = pd.grad()
    normals = graph_normals(grad).reshape(-1, 3)
    A2 = graph_A2(grad, pd.hess()).reshape(-1)
    R = u.rotation
    verts = pts @ R.T + u.center
    tris = grid_triangles(*u.grid.shape)
    return MeshPatch(verts, tris, _unit(normals @ R.T), A2, u.source)


# ------------------------------------------------------------- curvature


@dataclass
class QuadricFit:
    """Per-vertex local quadric ``z = A x^2 + B xy + C y^2 + D x + E y`` in the
    frame (t1, t2, n)."""

    t1: np.ndarray
    t2: np.ndarray
    coeffs: np.ndarray

    @property
    def grad(self):
        return self.coeffs[:, 3:5]

    @property
    def hess(self):
        a, b, c = self.coeffs[:, 0], self.coeffs[:, 1], self.coeffs[:, 2]
        return np.stack([np.stack([2 * a, b], -1), np.stack([b, 2 * c], -1)], -2)

    @property
    def A2(self):
        return graph_A2(self.grad, self.hess)

    def shape_operator(self):
        """Weingarten map S = g^-1 II in the (t1, t2) basis; Dn = -S."""
        p = self.grad
        w2 = 1.0 + np.sum(p * p, axis=-1)
        ginv = np.eye(2) - p[:, :, None] * p[:, None, :] / w2[:, None, None]
        return ginv @ self.hess / np.sqrt(w2)[:, None, None]

    def dn(self):
        """Differential of the normal as 3x3 maps acting on tangent vectors."""
        S = self.shape_operator()
        T = np.stack([self.t1, self.t2], axis=-1)  # (n, 3, 2)
        return -T @ S @ np.swapaxes(T, -1, -2)


def tangent_basis(normals):
    n = np.asarray(normals, float)
    k = np.argmin(np.abs(n), axis=1)
    e = np.zeros_like(n)
    e[np.arange(len(n)), k] = 1.0
    t1 = _unit(np.cross(n, e))
    t2 = np.cross(n, t1)
    return t1, t2


def quadric_fit(m: MeshPatch, rings=2) -> QuadricFit:
    ptr, idx = m.ring(rings)
    t1, t2 = tangent_basis(m.normals)
    coeffs, ok = kernels.quadric_fit(m.vertices, m.normals, t1, t2, ptr, idx)
    if not np.all(ok):
        bad = np.nonzero(~ok)[0]
        raise ValueError(f"quadric fit underdetermined at vertices {bad[:20].tolist()}")
    return QuadricFit(t1, t2, coeffs)


def second_fundamental(obj, use_analytic=True) -> GridField | np.ndarray:
    """|A|^2 per node (graphs, via the graph curvature formula) or per vertex
    (meshes, via a 2-ring quadric fit in the normal frame)."""
    if isinstance(obj, MultiGraph):
        pd = polar_derivatives(obj, use_analytic)
        return GridField(graph_A2(pd.grad(), pd.hess()), "1/length^2", obj.grid)
    if isinstance(obj, MeshPatch):
        obj.check_degenerate()
        return quadric_fit(obj).A2
    raise TypeError(f"expected MultiGraph or MeshPatch, got {type(obj).__name__}")


# ------------------------------------------------------------------ cones


@dataclass(frozen=True)
class Cone:
    """C_delta(y): points whose height offset is at most delta times their
    horizontal distance from the vertex."""

    vertex: tuple
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("cone slope must be positive")


def cone_membership(p, cone: Cone):
    p = np.asarray(p, float)
    y = np.asarray(cone.vertex, float)
    d = p - y
    return (d[..., 2] ** 2) <= cone.delta**2 * (d[..., 0] ** 2 + d[..., 1] ** 2)
