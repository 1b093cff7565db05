"""Sheet certification, gradient decay, blow-up pairs and the between-sheets region."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import minimize_scalar
from scipy.sparse.csgraph import dijkstra

from . import kernels
from .geometry import (
    TWO_PI,
    GridField,
    MeshPatch,
    MultiGraph,
    PolarDerivs,
    graph_normals,
    polar_derivatives,
    separation,
)
from .mse import residual_from_derivs

SINGULAR_W = 1e-14
ON_SHEET_RTOL = 1e-12


class NotEmbeddedError(ValueError):
    """The separation w vanishes somewhere: the multivalued graph is not embedded."""

    def __init__(self, msg, nodes):
        super().__init__(msg)
        self.nodes = nodes


# ------------------------------------------------------------ flatness


def _frob(H):
    return np.sqrt(np.sum(H * H, axis=(-2, -1)))


def _separation_derivs(u: MultiGraph, use_analytic=True):
    """Separation w and its polar derivatives on the overlap sub-grid."""
    w = separation(u)
    if w.grid is None:
        raise ValueError("separation domain is empty or has fewer than 8 angular nodes;"
                         " the angular span must exceed 2 pi by at least 7 grid steps")
    rho, theta = w.grid.mesh()
    if use_analytic and u.analytic is not None:
        a = u.analytic(rho, theta + TWO_PI)
        b = u.analytic(rho, theta)
        parts = [x - y for x, y in zip((a.u, a.ur, a.ut, a.urr, a.urt, a.utt),
                                       (b.u, b.ur, b.ut, b.urr, b.urt, b.utt))]
        return w, PolarDerivs(rho, theta, *parts)
    return w, polar_derivatives(MultiGraph(w.grid, w.values), use_analytic=False)


@dataclass
class FlatnessResult:
    total: GridField
    terms: dict
    sup: float
    term_sup: dict
    singular: np.ndarray

    def to_csv(self):
        g = self.total.grid
        rho, theta = g.mesh()
        names = list(self.terms)
        lines = ["rho,theta,total," + ",".join(names)]
        cols = [rho.ravel(), theta.ravel(), self.total.values.ravel()] + [
            self.terms[k].ravel() for k in names]
        for row in zip(*cols):
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def flatness_terms(u: MultiGraph, use_analytic=True) -> FlatnessResult:
    """|grad u| + rho |Hess u| + 4 rho |grad w| / |w| + rho^2 |Hess w| / |w| on
    the domain where w is defined (Frobenius norm for Hessians)."""
    w, dw = _separation_derivs(u, use_analytic)
    nt = w.values.shape[1]
    scale = max(1.0, float(np.max(np.abs(u.values))))
    singular = np.abs(w.values) < SINGULAR_W * scale
    if np.any(singular):
        nodes = [tuple(int(k) for k in ij) for ij in np.argwhere(singular)]
        raise NotEmbeddedError(
            f"separation w vanishes at {len(nodes)} nodes (first: {nodes[:10]}); graph not embedded",
            nodes)
    du = polar_derivatives(u, use_analytic)
    sl = (slice(None), slice(0, nt))
    rho = w.grid.mesh()[0]
    grad_u = np.sqrt(du.grad_norm2()[sl])
    hess_u = _frob(du.hess_polar()[sl])
    aw = np.abs(w.values)
    terms = {
        "grad_u": grad_u,
        "rho_hess_u": rho * hess_u,
        "grad_w": 4.0 * rho * np.sqrt(dw.grad_norm2()) / aw,
        "hess_w": rho**2 * _frob(dw.hess_polar()) / aw,
    }
    total = sum(terms.values())
    return FlatnessResult(GridField(total, "dimensionless", w.grid), terms, float(total.max()),
                          {k: float(v.max()) for k, v in terms.items()}, singular)


# ---------------------------------------------------------- certificates


@dataclass
class SheetCertificate:
    kind: str
    epsilon: float
    N: float
    scale: float
    center: np.ndarray
    checks: dict
    verdict: bool
    margin: float
    reasons: list = field(default_factory=list)
    normalization: Optional[dict] = None
    tangent_plane: Optional[dict] = None

    def __post_init__(self):
        if self.verdict:
            for name, c in self.checks.items():
                if not c["value"] <= c["bound"]:
                    raise ValueError(f"true verdict with failing check {name}")
        if self.kind == "strong" and not self.epsilon < 1.0 / TWO_PI:
            raise ValueError("strong sheets need epsilon < 1/(2 pi)")

    def to_dict(self):
        return {"kind": self.kind, "epsilon": self.epsilon, "N": self.N, "scale": self.scale,
                "center": np.asarray(self.center).tolist(), "checks": self.checks,
                "verdict": self.verdict, "margin": self.margin, "reasons": list(self.reasons),
                "normalization": self.normalization, "tangent_plane": self.tangent_plane}


def _ray_values(u: MultiGraph, field_vals, theta0=0.0):
    """Linear interpolation of a node field along the ray theta = theta0."""
    th = u.grid.theta
    if not th[0] - 1e-12 <= theta0 <= th[-1] + 1e-12:
        raise ValueError(f"ray theta={theta0} outside the angular domain")
    j = int(np.clip(np.searchsorted(th, theta0) - 1, 0, len(th) - 2))
    t = (theta0 - th[j]) / (th[j + 1] - th[j])
    t = min(max(t, 0.0), 1.0)
    return (1 - t) * field_vals[:, j] + t * field_vals[:, j + 1]


def fit_decay(rho, g):
    """Least-squares fit ``g ~ L + A rho^b`` with b in [-3, 0] (relative weights).

    Returns ``(L, A, b)``.
    """
    rho = np.asarray(rho, float)
    g = np.asarray(g, float)
    if np.all(g <= 1e-300):
        return 0.0, 0.0, -3.0
    wts = 1.0 / np.maximum(g, 1e-300)

    def solve(b):
        M = np.stack([np.ones_like(rho), rho**b], 1) * wts[:, None]
        coef, *_ = np.linalg.lstsq(M, g * wts, rcond=None)
        r = M @ coef - g * wts
        return float(r @ r), coef

    res = minimize_scalar(lambda b: solve(b)[0], bounds=(-3.0, 0.0), method="bounded",
                          options={"xatol": 1e-10})
    grid = np.linspace(-3.0, 0.0, 61)
    coarse = min(grid, key=lambda b: solve(b)[0])
    b = float(res.x) if solve(res.x)[0] <= solve(coarse)[0] else float(coarse)
    L, A = solve(b)[1]
    return float(L), float(A), b


def tangent_plane_fit(u: MultiGraph, use_analytic=True):
    """Mean unit normal over the outer annulus (outer quarter in log-radius)."""
    pd = polar_derivatives(u, use_analytic)
    n = graph_normals(pd.grad())
    k = max(1, u.grid.n_rho // 4)
    m = n[-k:].reshape(-1, 3).mean(axis=0)
    m = m / np.linalg.norm(m)
    m = u.rotation @ m
    return {"normal": m.tolist(), "tilt": float(math.acos(min(1.0, abs(m[2]))))}


def certify_sheet(u: MultiGraph, epsilon, N, kind="weak", scale=None, residual_tol=1e-8,
                  use_analytic=True) -> SheetCertificate:
    """Check the weak or strong N-valued epsilon-sheet conditions on
    ``[scale, r2] x [-pi N, pi N]``.

    Weak: minimal-equation residual, |grad u| <= eps, cone |u| <= eps rho,
    and w != 0. Strong adds the flatness sup <= eps and the decay-fit proxy
    for the gradient normalization at infinity.
    """
    if kind not in ("weak", "strong"):
        raise ValueError(f"unknown sheet kind {kind!r}")
    if kind == "strong" and not epsilon < 1.0 / TWO_PI:
        raise ValueError("strong sheets need epsilon < 1/(2 pi)")
    g = u.grid
    s = g.rect.r1 if scale is None else float(scale)
    half = math.pi * N
    tol = 1e-9 * max(1.0, half)
    if g.rect.r1 > s * (1 + 1e-12) or g.rect.theta1 > -half + tol or g.rect.theta2 < half - tol:
        raise ValueError(f"insufficient domain: need [{s:g}, r2] x [{-half:g}, {half:g}], have "
                         f"[{g.rect.r1:g}, {g.rect.r2:g}] x [{g.rect.theta1:g}, {g.rect.theta2:g}]")
    rho, theta = g.mesh()
    dom = (rho >= s * (1 - 1e-12)) & (np.abs(theta) <= half + tol)
    interior = np.zeros_like(dom)
    interior[1:-1, 1:-1] = True
    pd = polar_derivatives(u, use_analytic)
    res = np.abs(residual_from_derivs(pd))
    res_dom = dom & (interior if (u.analytic is None or not use_analytic) else True)
    grad = np.sqrt(pd.grad_norm2())
    checks = {}
    reasons = []

    def record(name, value, bound):
        checks[name] = {"value": float(value), "bound": float(bound)}
        if not value <= bound:
            reasons.append(f"{name}: {value:.6g} > {bound:.6g}")

    record("residual", res[res_dom].max() if res_dom.any() else 0.0, residual_tol)
    record("grad", grad[dom].max(), epsilon)
    cone_ratio = np.abs(u.values[dom]) / (epsilon * rho[dom]) if epsilon > 0 else np.where(
        u.values[dom] == 0, 0.0, np.inf)
    record("cone", float(np.max(cone_ratio)), 1.0)

    w = separation(u)
    if w.values.size:
        wmin = float(np.min(np.abs(w.values[rho[:, : w.values.shape[1]] >= s * (1 - 1e-12)])))
        thr = SINGULAR_W * max(1.0, float(np.max(np.abs(u.values))))
        embedded = wmin >= thr
        checks["separation"] = {"value": thr / max(wmin, 1e-300), "bound": 1.0}
        if not embedded:
            reasons.append("not embedded as multigraph")
    normalization = None
    if kind == "strong":
        flat = flatness_terms(u, use_analytic)
        fr = flat.total.grid.mesh()[0]
        fth = flat.total.grid.mesh()[1]
        fdom = (fr >= s * (1 - 1e-12)) & (np.abs(fth) <= half + tol)
        record("flatness", flat.total.values[fdom].max() if fdom.any() else 0.0, epsilon)
        ray = _ray_values(u, grad)
        sel = (g.rho >= s * (1 - 1e-12))
        idx = np.flatnonzero(sel)
        outer = idx[len(idx) // 2:]
        L, A, b = fit_decay(g.rho[outer], ray[outer])
        normalization = {"grad_at_rho_max": float(ray[-1]), "limit": L, "amplitude": A,
                         "exponent": b}
        record("normalization_exponent", b, -0.25)
        record("normalization_limit", abs(L), 1e-3)
    verdict = not reasons
    margin = min(c["bound"] - c["value"] for c in checks.values())
    return SheetCertificate(kind, float(epsilon), float(N), s, u.center.copy(), checks,
                            verdict, float(margin), reasons, normalization,
                            tangent_plane_fit(u, use_analytic))


def decay_check(u: MultiGraph, epsilon, c_decay=1.0, scale=None, use_analytic=True):
    """|grad u|(rho, 0) <= c_decay eps rho^(-5/12) along the theta = 0 ray.

    Returns ``(ok, worst ratio |grad u| / (eps rho^(-5/12)))``; 0/0 counts as 0.
    """
    pd = polar_derivatives(u, use_analytic)
    ray = _ray_values(u, np.sqrt(pd.grad_norm2()))
    rho = u.grid.rho
    sel = rho >= (u.grid.rect.r1 if scale is None else scale) * (1 - 1e-12)
    num = ray[sel]
    den = epsilon * rho[sel] ** (-5.0 / 12.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(num == 0, 0.0, num / den)
    worst = float(np.max(ratio)) if ratio.size else 0.0
    return bool(worst <= c_decay), worst


# ------------------------------------------------------- blow-up pairs


@dataclass
class BlowUpPair:
    y: np.ndarray
    s: float
    C: float
    A2: float
    vertex: int = -1

    def __post_init__(self):
        lhs, rhs = 4 * self.A2, 4 * self.C**2 / self.s**2
        if abs(lhs - rhs) > 1e-10 * max(abs(lhs), 1e-300):
            raise ValueError("blow-up pair normalization 4|A|^2 = 4 C^2 s^-2 violated")

    def to_dict(self):
        return {"y": np.asarray(self.y).tolist(), "s": self.s, "C": self.C, "A2": self.A2,
                "vertex": self.vertex}


@dataclass
class BlowUpReport:
    pairs: list
    n_candidates: int
    discarded_exit: int
    tol: float

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def to_dict(self):
        return {"pairs": [p.to_dict() for p in self.pairs], "n_candidates": self.n_candidates,
                "discarded_exit": self.discarded_exit, "tol": self.tol}


def _local_maxima(m: MeshPatch, A2):
    ptr, idx = m.ring(1)
    nb_max = np.full(m.n_vertices, -np.inf)
    counts = np.diff(ptr)
    has = counts > 0
    nb_max[has] = np.maximum.reduceat(A2[idx], ptr[:-1][has])
    return A2 >= nb_max


def _intrinsic_ball_sup(m, A2, cand, radii):
    uniq, _ = m.edges
    lengths = np.linalg.norm(m.vertices[uniq[:, 0]] - m.vertices[uniq[:, 1]], axis=1)
    import scipy.sparse as sp
    n = m.n_vertices
    G = sp.csr_matrix((np.concatenate([lengths, lengths]),
                       (np.concatenate([uniq[:, 0], uniq[:, 1]]),
                        np.concatenate([uniq[:, 1], uniq[:, 0]]))), shape=(n, n))
    sup = np.zeros(len(cand))
    exits = np.zeros(len(cand), bool)
    bmask = m.boundary_vertices
    for k, (i, r) in enumerate(zip(cand, radii)):
        d = dijkstra(G, indices=int(i), limit=float(r) * (1 + 1e-12))
        inside = np.isfinite(d)
        sup[k] = A2[inside].max()
        exits[k] = bool(np.any(inside & (d < r) & bmask))
    return sup, exits


def detect_blowup_pairs(m: MeshPatch, C, within=None, tol=1e-6, metric="extrinsic") -> BlowUpReport:
    """Vertices y with s = C/|A|(y) such that sup of |A|^2 over the ball
    B_s(y) (same mesh component) is at most 4|A|^2(y)(1 + tol).

    Candidates are 1-ring local maxima of |A|^2 (optionally within distance
    ``within`` of the origin). Balls that reach the mesh boundary are
    discarded and counted. Output is sorted by x3, then |A|^2 descending.
    """
    if m.A2 is None:
        raise ValueError("mesh has no |A|^2 values")
    if not C > 0:
        raise ValueError("C must be positive")
    A2 = np.asarray(m.A2, float)
    cand = np.flatnonzero((A2 > 0) & _local_maxima(m, A2))
    if within is not None:
        cand = cand[np.linalg.norm(m.vertices[cand], axis=1) <= within]
    if len(cand) == 0:
        return BlowUpReport([], 0, 0, tol)
    radii = C / np.sqrt(A2[cand])
    if metric == "extrinsic":
        sup, exits = kernels.ball_sup(m.vertices, A2, m.components, cand, radii, m.boundary_vertices)
    elif metric == "intrinsic":
        sup, exits = _intrinsic_ball_sup(m, A2, cand, radii)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    ok = sup <= 4.0 * A2[cand] * (1.0 + tol)
    keep = ok & ~exits
    pairs = [BlowUpPair(m.vertices[i].copy(), float(r), float(C), float(A2[i]), int(i))
             for i, r in zip(cand[keep], radii[keep])]
    pairs.sort(key=lambda p: (p.y[2], -p.A2, p.vertex))
    return BlowUpReport(pairs, int(len(cand)), int(np.count_nonzero(ok & exits)), tol)


# ------------------------------------------------------------- region E


@dataclass(frozen=True)
class Membership:
    inside: bool
    reason: str

    def __bool__(self):
        return self.inside


def region_E_membership(u1: MultiGraph, p, N=2) -> Membership:
    """Is p strictly between the bottom sheet u1(rho, theta - pi N) and the
    top sheet u1(rho, theta + (N + 2) pi), with theta taken in [-2 pi, 0)?"""
    g = u1.grid
    lo_needed, hi_needed = -2 * math.pi - math.pi * N, (N + 2) * math.pi
    tol = 1e-9
    if g.rect.theta1 > lo_needed + tol or g.rect.theta2 < hi_needed - tol:
        raise ValueError(f"u1 must cover theta in [{lo_needed:g}, {hi_needed:g}]")
    q = u1.rotation.T @ (np.asarray(p, float) - u1.center)
    rho = math.hypot(q[0], q[1])
    if not g.rect.r1 <= rho <= g.rect.r2:
        return Membership(False, "outside-annulus")
    theta = math.atan2(q[1], q[0])
    if theta >= 0:
        theta -= TWO_PI
    interp = RegularGridInterpolator((g.rho, g.theta), u1.values, method="linear")
    lo = float(interp([rho, max(theta - math.pi * N, g.theta[0])])[0])
    hi = float(interp([rho, min(theta + (N + 2) * math.pi, g.theta[-1])])[0])
    t = q[2]
    # heights within round-off of a sheet count as on it (the inequalities are strict)
    eps = ON_SHEET_RTOL * max(1.0, abs(lo), abs(hi))
    if t <= lo + eps:
        return Membership(False, "on-bottom-sheet" if t >= lo - eps else "below-bottom-sheet")
    if t >= hi - eps:
        return Membership(False, "on-top-sheet" if t <= hi + eps else "above-top-sheet")
    return Membership(True, "between")
