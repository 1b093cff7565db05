"""Gauss map, log branches, level sets of x3 and the axis/spiral decomposition."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .geometry import MeshPatch, MultiGraph, polar_derivatives

MASK_GRAD = 1e-10


class FlatPatchError(ValueError):
    pass


class PathTooCoarse(ValueError):
    pass


# ----------------------------------------------------------- Gauss map


@dataclass
class GaussField:
    """Stereographic Gauss map g and |grad_Sigma x3| per node (masked where
    the normal is vertical)."""

    g: np.ndarray
    grad_x3: np.ndarray
    mask: np.ndarray
    shape: tuple = ()

    def __post_init__(self):
        live = ~self.mask
        if np.any(self.g[live] == 0):
            raise ValueError("Gauss map vanishes at an unmasked node")
        gx = self.grad_x3[live]
        if np.any((gx < -1e-15) | (gx > 1 + 1e-15)):
            raise ValueError("|grad x3| outside [0, 1]")

    def _flat(self, path):
        p = np.asarray(path)
        if p.ndim == 2 and self.g.ndim == 2:
            return np.ravel_multi_index((p[:, 0], p[:, 1]), self.g.shape)
        return p.astype(np.int64)


def gauss_from_graph(u: MultiGraph, use_analytic=True) -> GaussField:
    """g = -(u_rho + i u_theta / rho) e^{i theta} / (W - 1).

    |grad_Sigma x3| is computed separately as the length of the tangential
    part of e3, using the normal from Phi_rho x Phi_theta.
    """
    pd = polar_derivatives(u, use_analytic)
    rho, theta = pd.rho, pd.theta
    gn2 = pd.grad_norm2()
    W = np.sqrt(1.0 + gn2)
    mask = np.sqrt(gn2) < MASK_GRAD
    if np.all(mask):
        raise FlatPatchError("flat patch: |grad u| < 1e-10 at every node")
    with np.errstate(divide="ignore", invalid="ignore"):
        # W - 1 = |grad u|^2 / (W + 1) avoids cancellation
        g = -(pd.ur + 1j * pd.ut / rho) * np.exp(1j * theta) * (W + 1.0) / gn2
    g = np.where(mask, 0.0, g)
    c, s = np.cos(theta), np.sin(theta)
    # Phi_rho = (c, s, u_r), Phi_theta = (-rho s, rho c, u_t)
    nx = s * pd.ut - pd.ur * rho * c
    ny = -(c * pd.ut) - pd.ur * rho * s
    nz = rho * (c * c + s * s)
    nn = np.sqrt(nx * nx + ny * ny + nz * nz)
    grad_x3 = np.hypot(nx, ny) / nn
    return GaussField(g, grad_x3, mask, u.grid.shape)


def gauss_from_mesh(m: MeshPatch) -> GaussField:
    """g = (n1 + i n2) / (1 - n3) from the vertex normals."""
    n = m.normals
    horiz = np.hypot(n[:, 0], n[:, 1])
    mask = horiz < MASK_GRAD
    if np.all(mask):
        raise FlatPatchError("flat patch: every normal is vertical")
    with np.errstate(divide="ignore", invalid="ignore"):
        # (n1 + i n2) / (1 - n3) = (1 + n3) / (n1 - i n2) is stable near the north pole
        g = np.where(n[:, 2] > 0, (1.0 + n[:, 2]) / (n[:, 0] - 1j * n[:, 1]),
                     (n[:, 0] + 1j * n[:, 1]) / (1.0 - n[:, 2]))
    g = np.where(mask, 0.0, g)
    return GaussField(g, horiz, mask, (m.n_vertices,))


def check_gauss_identity(f: GaussField) -> float:
    """sup over unmasked nodes of | |grad x3| - 2|g| / (1 + |g|^2) |."""
    live = ~f.mask
    if not np.any(live):
        raise FlatPatchError("flat patch: all nodes masked")
    a = np.abs(f.g[live])
    # 2|g|/(1+|g|^2) written symmetric in |g| and 1/|g|
    rhs = 2.0 / (a + 1.0 / a)
    return float(np.max(np.abs(f.grad_x3[live] - rhs)))


@dataclass
class LogBranch:
    h1: np.ndarray
    h2: np.ndarray
    nodes: np.ndarray

    @property
    def h(self):
        return self.h1 + 1j * self.h2


def log_gauss_branch(f: GaussField, path, max_jump=math.pi / 2) -> LogBranch:
    """h = log g continued along a node chain: h1 = log|g| and h2 unwrapped
    from the principal argument at the first node."""
    idx = f._flat(path)
    gf = f.g.reshape(-1)[idx]
    mk = f.mask.reshape(-1)[idx]
    if np.any(mk) or np.any(gf == 0):
        raise ValueError("Gauss map vanishes or is masked on the path")
    ang = np.angle(gf)
    d = np.diff(ang)
    d = (d + math.pi) % (2 * math.pi) - math.pi
    big = np.flatnonzero(np.abs(d) > max_jump)
    if len(big):
        raise PathTooCoarse(f"path too coarse: phase jump {d[big[0]]:.3f} between path nodes "
                            f"{int(big[0])} and {int(big[0]) + 1}")
    h2 = ang[0] + np.concatenate([[0.0], np.cumsum(d)])
    return LogBranch(np.log(np.abs(gf)), h2, idx)


def check_h_inequality(f: GaussField, branch: LogBranch, slack=1e-12):
    """Largest excess of |grad x3| over 2 exp(-|h1|) along a branch (<= 0 passes)."""
    gx = f.grad_x3.reshape(-1)[branch.nodes]
    return float(np.max(gx - 2.0 * np.exp(-np.abs(branch.h1)) - slack))


# ------------------------------------------------------------ level sets


@dataclass
class LevelSetTrace:
    level: float
    polylines: list
    closed: list
    perturbed: bool = False

    @property
    def count(self):
        return len(self.polylines)

    def to_csv(self):
        lines = ["chain,index,x1,x2,x3"]
        for k, pl in enumerate(self.polylines):
            for i, p in enumerate(pl):
                lines.append(f"{k},{i},{float(p[0])!r},{float(p[1])!r},{float(p[2])!r}")
        return "\n".join(lines) + "\n"


class LevelTracer:
    """Reusable contouring of x3 on one mesh (edge topology computed once)."""

    def __init__(self, m: MeshPatch):
        self.m = m
        cnt = m.edge_triangle_count
        if np.any(cnt > 2):
            bad = np.flatnonzero(cnt > 2)
            uniq, _ = m.edges
            raise ValueError(f"non-manifold edges: {uniq[bad[:10]].tolist()}")
        self.z = m.vertices[:, 2]
        self.zmin, self.zmax = float(self.z.min()), float(self.z.max())
        if self.zmax - self.zmin <= 0:
            raise ValueError("degenerate level set: mesh lies at constant height")

    def trace(self, c) -> LevelSetTrace:
        m, z = self.m, self.z
        if not self.zmin <= c <= self.zmax:
            raise ValueError(f"level {c} outside mesh height range [{self.zmin}, {self.zmax}]")
        perturbed = False
        bump = 1e-12 * (self.zmax - self.zmin)
        while np.any(z == c):
            c = c + bump
            perturbed = True
        uniq, tri_edges = m.edges
        above = z > c
        crosses = above[uniq[:, 0]] != above[uniq[:, 1]]
        tri_hit = crosses[tri_edges]
        live = np.flatnonzero(tri_hit.sum(axis=1) == 2)
        if len(live) == 0:
            return LevelSetTrace(float(c), [], [], perturbed)
        # crossing points on edges
        ce = np.flatnonzero(crosses)
        a, b = uniq[ce, 0], uniq[ce, 1]
        t = (c - z[a]) / (z[b] - z[a])
        pts = m.vertices[a] + t[:, None] * (m.vertices[b] - m.vertices[a])
        local = -np.ones(len(uniq), np.int64)
        local[ce] = np.arange(len(ce))
        pairs = local[tri_edges[live][tri_hit[live]].reshape(-1, 2)]
        n = len(ce)
        G = sp.csr_matrix((np.ones(2 * len(pairs)), (np.concatenate([pairs[:, 0], pairs[:, 1]]),
                                                     np.concatenate([pairs[:, 1], pairs[:, 0]]))),
                          shape=(n, n))
        ncomp, lab = connected_components(G, directed=False)
        deg = np.diff(G.indptr)
        polylines, closed = [], []
        for k in range(ncomp):
            members = np.flatnonzero(lab == k)
            ends = members[deg[members] == 1]
            start = int(ends[0]) if len(ends) else int(members[0])
            order = _walk(G, start, len(members))
            pl = pts[order]
            is_closed = len(ends) == 0
            if is_closed:
                pl = np.vstack([pl, pl[:1]])
            polylines.append(pl)
            closed.append(is_closed)
        return LevelSetTrace(float(c), polylines, closed, perturbed)


def _walk(G, start, count):
    order = [start]
    prev, cur = -1, start
    ptr, idx = G.indptr, G.indices
    for _ in range(count - 1):
        nb = idx[ptr[cur]:ptr[cur + 1]]
        nxt = [v for v in nb if v != prev]
        if not nxt:
            break
        prev, cur = cur, int(nxt[0])
        if cur == start:
            break
        order.append(cur)
    return np.asarray(order)


def trace_level_set(m: MeshPatch, c) -> LevelSetTrace:
    """Contour x3 = c over the mesh and assemble the crossing segments into chains."""
    return LevelTracer(m).trace(c)


# --------------------------------------------------------- decomposition

R_A, R_S1, R_S2 = 0, 1, 2
LABEL_NAMES = {R_A: "R_A", R_S1: "R_S1", R_S2: "R_S2"}


@dataclass
class DecompositionLabeling:
    labels: np.ndarray
    epsilon0: float
    gamma0: float
    status: str
    axis_point: Optional[np.ndarray] = None
    ra_violations: list = field(default_factory=list)
    rs_violations: list = field(default_factory=list)
    orientation: int = 0
    absorbed: int = 0

    @property
    def ok(self):
        return not self.ra_violations and not self.rs_violations

    def counts(self):
        return {LABEL_NAMES[k]: int(np.count_nonzero(self.labels == k)) for k in LABEL_NAMES}

    def to_dict(self):
        return {"epsilon0": self.epsilon0, "gamma0": self.gamma0, "status": self.status,
                "counts": self.counts(), "orientation": self.orientation,
                "absorbed_components": self.absorbed,
                "ra_violations": self.ra_violations[:100],
                "rs_violations": self.rs_violations[:100],
                "n_ra_violations": len(self.ra_violations),
                "n_rs_violations": len(self.rs_violations),
                "axis_point": None if self.axis_point is None else self.axis_point.tolist()}

    def to_csv(self, m: MeshPatch):
        lines = ["vertex,x1,x2,x3,label"]
        for i, (p, l) in enumerate(zip(m.vertices, self.labels)):
            lines.append(f"{i},{float(p[0])!r},{float(p[1])!r},{float(p[2])!r},{LABEL_NAMES[int(l)]}")
        return "\n".join(lines) + "\n"


def _induced_components(m: MeshPatch, keep):
    A = m.adjacency
    idx = np.flatnonzero(keep)
    sub = A[idx][:, idx]
    n, lab = connected_components(sub, directed=False)
    full = -np.ones(m.n_vertices, np.int64)
    full[idx] = lab
    return n, full


def axial_utheta(m: MeshPatch, axis_point):
    """u_theta of the surface seen as a graph over the plane, about a vertical
    axis through ``axis_point``: (n1 x2 - n2 x1) / n3 in centered coordinates.
    Independent of the normal's orientation."""
    x = m.vertices - axis_point
    n = m.normals
    with np.errstate(divide="ignore", invalid="ignore"):
        return (n[:, 0] * x[:, 1] - n[:, 1] * x[:, 0]) / n[:, 2]


def decompose(m: MeshPatch, pairs, epsilon0=0.5, R1_multiplier=3.0) -> DecompositionLabeling:
    """Label vertices R_A (near the blow-up pairs, steep) or R_S1 / R_S2.

    R_A is the union of components, among vertices within R1_multiplier * s_i
    of a pair center with |grad x3| >= epsilon0, that contain a pair center,
    enlarged by every complementary component that avoids the mesh boundary.
    The rest splits by the sign of n3. Violations of |grad x3| >= epsilon0 on
    R_A and of strict spiraling on R_S are listed, not raised.
    """
    if not 0 < epsilon0 < 1:
        raise ValueError("epsilon0 must lie in (0, 1)")
    gamma0 = math.log(2.0 / epsilon0)
    n3 = m.normals[:, 2]
    grad_x3 = np.hypot(m.normals[:, 0], m.normals[:, 1])
    pairs = list(pairs)
    split = np.where(n3 >= 0, R_S1, R_S2)
    if not pairs:
        return DecompositionLabeling(split.astype(np.int64), epsilon0, gamma0,
                                     "flat: decomposition vacuous")
    centers = np.array([p.y for p in pairs])
    radii = np.array([R1_multiplier * p.s for p in pairs])
    near = np.zeros(m.n_vertices, bool)
    for y, r in zip(centers, radii):
        near |= np.sum((m.vertices - y) ** 2, axis=1) <= r * r
    cand = near & (grad_x3 >= epsilon0)
    _, lab = _induced_components(m, cand)
    cv = np.array([p.vertex if p.vertex >= 0 else int(np.argmin(np.sum((m.vertices - p.y) ** 2, 1)))
                   for p in pairs])
    seed = {int(lab[v]) for v in cv if lab[v] >= 0}
    ra = np.isin(lab, list(seed)) & (lab >= 0)
    # absorb bounded complementary components
    ncomp, clab = _induced_components(m, ~ra)
    bnd = m.boundary_vertices
    touches = np.zeros(ncomp, bool)
    touches[np.unique(clab[bnd & (clab >= 0)])] = True
    absorb = (clab >= 0) & ~touches[np.maximum(clab, 0)]
    n_abs = len(np.unique(clab[absorb]))
    ra |= absorb
    labels = np.where(ra, R_A, split).astype(np.int64)

    ra_bad = [int(i) for i in np.flatnonzero(ra & (grad_x3 < epsilon0))]
    axis_point = centers.mean(axis=0)
    rs = ~ra
    ut = axial_utheta(m, axis_point)
    sigma = 0
    rs_bad = []
    if np.any(rs):
        # vertical normals (n3 = 0) give nan and count as violations
        fin = rs & np.isfinite(ut)
        med = float(np.median(ut[fin])) if np.any(fin) else 0.0
        sigma = 1 if med > 0 else -1
        rs_bad = [int(i) for i in np.flatnonzero(rs & ~(sigma * ut > 0))]
    return DecompositionLabeling(labels, epsilon0, gamma0, "ok" if not (ra_bad or rs_bad) else
                                 "violations", axis_point, ra_bad, rs_bad, sigma, n_abs)
