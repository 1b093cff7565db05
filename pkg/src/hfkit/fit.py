"""Normal graphs between surfaces, the distortion of x -> x + nu n, helicoid fitting
and the bi-Lipschitz estimate against a fitted helicoid."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from . import kernels
from .geometry import MeshPatch, quadric_fit, second_fundamental, tangent_basis
from .surfaces import HelicoidModel

log = logging.getLogger(__name__)


class NotAGraphError(ValueError):
    """Some normal line of the base misses the target or meets it more than once."""

    def __init__(self, msg, zero, multiple):
        super().__init__(msg)
        self.zero = zero
        self.multiple = multiple


class FitError(RuntimeError):
    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


# -------------------------------------------------------- normal graphs


@dataclass
class NormalGraph:
    base: MeshPatch
    nu: np.ndarray
    grad_nu: np.ndarray
    reconstruction_error: Optional[float] = None

    def __post_init__(self):
        if not np.isfinite(self.sup_norm):
            raise ValueError("normal graph sup norm is not finite")

    @property
    def sup_norm(self):
        return float(np.max(np.abs(self.nu) + np.linalg.norm(self.grad_nu, axis=1)))

    def target_points(self):
        return self.base.vertices + self.nu[:, None] * self.base.normals

    def to_dict(self):
        return {"n_vertices": int(len(self.nu)), "sup_norm": self.sup_norm,
                "nu_max": float(np.max(np.abs(self.nu))),
                "grad_nu_max": float(np.max(np.linalg.norm(self.grad_nu, axis=1))),
                "reconstruction_error": self.reconstruction_error}


def tangent_gradient(m: MeshPatch, values, t1=None, t2=None):
    """Least-squares tangential gradient of a vertex function over the 1-ring.

    Returns ``(grad3, coords)``: the 3-vector gradient and its components in
    the tangent basis ``(t1, t2)``.
    """
    if t1 is None:
        t1, t2 = tangent_basis(m.normals)
    ptr, idx = m.ring(1)
    owner = np.repeat(np.arange(m.n_vertices), np.diff(ptr))
    d = m.vertices[idx] - m.vertices[owner]
    a = np.einsum("ij,ij->i", d, t1[owner])
    b = np.einsum("ij,ij->i", d, t2[owner])
    dv = values[idx] - values[owner]
    n = m.n_vertices
    M = np.zeros((n, 2, 2))
    r = np.zeros((n, 2))
    np.add.at(M, (owner, 0, 0), a * a)
    np.add.at(M, (owner, 0, 1), a * b)
    np.add.at(M, (owner, 1, 1), b * b)
    np.add.at(r, (owner, 0), a * dv)
    np.add.at(r, (owner, 1), b * dv)
    M[:, 1, 0] = M[:, 0, 1]
    det = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] ** 2
    scale = np.maximum(M[:, 0, 0] + M[:, 1, 1], 1e-300)
    if np.any(det <= 1e-12 * scale**2):
        bad = np.flatnonzero(det <= 1e-12 * scale**2)
        raise ValueError(f"1-ring too degenerate for a tangent gradient at vertices {bad[:20].tolist()}")
    g1 = (M[:, 1, 1] * r[:, 0] - M[:, 0, 1] * r[:, 1]) / det
    g2 = (M[:, 0, 0] * r[:, 1] - M[:, 0, 1] * r[:, 0]) / det
    coords = np.stack([g1, g2], 1)
    return g1[:, None] * t1 + g2[:, None] * t2, coords


def normal_graph_from_values(base: MeshPatch, nu) -> NormalGraph:
    nu = np.asarray(nu, float)
    grad, _ = tangent_gradient(base, nu)
    return NormalGraph(base, nu, grad)


def _search_radius(base: MeshPatch):
    if base.A2 is not None and np.max(base.A2) > 0:
        return 0.5 / math.sqrt(float(np.max(base.A2)))
    return 0.05 * base.diameter()


def build_normal_graph(base: MeshPatch, target: MeshPatch, search=None, paired=False) -> NormalGraph:
    """nu at each base vertex: signed distance along the base normal to the
    unique crossing with the target within |t| <= search.

    With ``paired=True`` the target vertices correspond to the base vertices
    and the reconstruction error max |base + nu n - target| is recorded.
    """
    search = _search_radius(base) if search is None else float(search)
    tv, tt = target.vertices, target.triangles
    A, B, C = tv[tt[:, 0]], tv[tt[:, 1]], tv[tt[:, 2]]
    cent = (A + B + C) / 3.0
    circ = np.max(np.linalg.norm(np.stack([A, B, C], 1) - cent[:, None], axis=2), axis=1)
    # a triangle can meet the segment only if its centroid lies within
    # search + its circumradius of the segment's midpoint (the base vertex)
    tree = cKDTree(base.vertices)
    lists = tree.query_ball_point(cent, search + circ + 1e-12)
    counts = np.array([len(l) for l in lists], np.int64)
    tri = np.repeat(np.arange(len(cent)), counts)
    ray = np.fromiter((k for l in lists for k in l), np.int64, int(counts.sum()))
    order = np.lexsort((tri, ray))
    ray, idx = ray[order], tri[order]
    ptr = np.searchsorted(ray, np.arange(base.n_vertices + 1)).astype(np.int64)
    count, t = kernels.ray_hits(base.vertices, base.normals, A, B, C, ptr, idx, search)
    zero = np.flatnonzero(count == 0)
    many = np.flatnonzero(count > 1)
    if len(zero) or len(many):
        raise NotAGraphError(
            f"target is not a normal graph over the base: {len(zero)} vertices without an "
            f"intersection (first {zero[:10].tolist()}), {len(many)} with several "
            f"(first {many[:10].tolist()})", zero, many)
    grad, _ = tangent_gradient(base, t)
    err = None
    if paired and len(tv) == base.n_vertices:
        err = float(np.max(np.linalg.norm(base.vertices + t[:, None] * base.normals - tv, axis=1)))
    return NormalGraph(base, t, grad, err)


# ---------------------------------------------------------- distortion


@dataclass
class DistortionReport:
    sigma_min: np.ndarray
    sigma_max: np.ndarray
    scale_factor: float
    sup_norm: float
    model: Optional[HelicoidModel] = None
    fit_residual: Optional[float] = None

    def __post_init__(self):
        if np.any(self.sigma_min > self.sigma_max):
            raise ValueError("sigma_min exceeds sigma_max")

    @property
    def interval(self):
        return float(np.min(self.sigma_min)), float(np.max(self.sigma_max))

    def to_dict(self):
        lo, hi = self.interval
        d = {"interval": [lo, hi], "scale_factor": self.scale_factor,
             "sup_norm": self.sup_norm, "n_vertices": int(len(self.sigma_min))}
        if self.model is not None:
            d["model"] = self.model.to_dict()
            d["fit_residual"] = self.fit_residual
        return d

    def to_csv(self):
        lines = ["vertex,sigma_min,sigma_max"]
        for i, (a, b) in enumerate(zip(self.sigma_min, self.sigma_max)):
            lines.append(f"{i},{float(a)!r},{float(b)!r}")
        return "\n".join(lines) + "\n"


def _sv_3x2(M):
    """Singular values of stacked 3x2 maps from the 2x2 Gram matrix."""
    G = np.swapaxes(M, -1, -2) @ M
    a, b, d = G[:, 0, 0], G[:, 0, 1], G[:, 1, 1]
    mid = 0.5 * (a + d)
    rad = np.sqrt(0.25 * (a - d) ** 2 + b * b)
    return np.sqrt(np.maximum(mid - rad, 0.0)), np.sqrt(mid + rad)


def phi_distortion(ng: NormalGraph) -> DistortionReport:
    """Singular values of d phi for phi(x) = x + nu(x) n(x) on each tangent plane.

    In the orthonormal frame (t1, t2, n) of the base quadric fit,
    d phi(e_i) = e_i + <grad nu, e_i> n + nu Dn(e_i) with Dn = -S.
    The base is rescaled so that |A| <= 1; singular values do not change
    under that rescaling and the factor is recorded.
    """
    base = ng.base
    if base.A2 is None:
        raise ValueError("base mesh has no |A|^2 values")
    amax = math.sqrt(float(np.max(base.A2)))
    lam = 1.0 / amax if amax > 1.0 else 1.0
    if lam != 1.0:
        base = base.scaled(lam)
    nu = ng.nu * lam
    q = quadric_fit(base)
    S = q.shape_operator()
    _, g = tangent_gradient(base, nu, q.t1, q.t2)
    n = len(nu)
    M = np.zeros((n, 3, 2))
    M[:, 0, 0] = 1.0 - nu * S[:, 0, 0]
    M[:, 0, 1] = -nu * S[:, 0, 1]
    M[:, 1, 0] = -nu * S[:, 1, 0]
    M[:, 1, 1] = 1.0 - nu * S[:, 1, 1]
    M[:, 2, 0] = g[:, 0]
    M[:, 2, 1] = g[:, 1]
    smin, smax = _sv_3x2(M)
    return DistortionReport(smin, smax, lam, ng.sup_norm)


# --------------------------------------------------------- helicoid fit


@dataclass
class HelicoidFit:
    model: HelicoidModel
    residual: float
    max_distance: float
    restarts: list
    converged: bool = True

    def to_dict(self):
        return {"model": self.model.to_dict(), "residual": self.residual,
                "max_distance": self.max_distance, "restarts": self.restarts,
                "converged": self.converged, "heuristic": True}


def _model_from_params(x):
    R = Rotation.from_rotvec(x[:3]).as_matrix()
    return R, x[3:6], x[6]


def _residuals(x, P, w=None):
    R, T, a = _model_from_params(x)
    if abs(a) < 1e-12:
        a = 1e-12
    loc = (P - T) @ R
    _, e1, e2 = kernels.project_helicoid(loc, a)
    if w is not None:
        e1, e2 = e1 * w, e2 * w
    return np.concatenate([e1, e2])


def helicoid_distance(model: HelicoidModel, pts):
    _, e1, e2 = kernels.project_helicoid(model.to_local(pts), model.pitch)
    return np.hypot(e1, e2)


def _frame_with_axis(axis):
    axis = axis / np.linalg.norm(axis)
    t1, t2 = tangent_basis(axis[None, :])
    return np.stack([t1[0], t2[0], axis], axis=1)


def _pitch_guess(patch: MeshPatch, frame, c0, A2):
    """Median of (n1 x2 - n2 x1) / n3 about the trial axis (equal to the pitch
    on a helicoid, independent of orientation); falls back to max |A|, which
    is sqrt(2) / |a| on the axis."""
    x = (patch.vertices - c0) @ frame
    n = patch.normals @ frame
    ok = np.abs(n[:, 2]) > 0.3
    if np.count_nonzero(ok) >= 10:
        est = np.median((n[ok, 0] * x[ok, 1] - n[ok, 1] * x[ok, 0]) / n[ok, 2])
        if abs(est) > 1e-9:
            return float(est)
    return math.sqrt(2.0 / float(np.max(A2)))


def fit_helicoid(patch: MeshPatch, restarts=8, seed=0) -> HelicoidFit:
    """Best-fit helicoid by least squares on closest-point distances.

    Initial axis from the |A|^2-weighted centroid and principal direction;
    initial pitch from the angular slope of the patch about that axis.
    Restarts cycle pitch sign and axial phase; the best local optimum is
    returned. This is a heuristic with no global guarantee.
    """
    if patch.n_vertices < 100:
        raise ValueError("helicoid fit needs at least 100 vertices")
    A2 = patch.A2 if patch.A2 is not None else second_fundamental(patch)
    if not np.max(A2) > 1e-6:
        raise ValueError("patch is flat (max |A|^2 <= 1e-6); a helicoid fit is meaningless")
    P = patch.vertices
    wts = A2 / A2.sum()
    c0 = wts @ P
    cov = (P - c0).T @ ((P - c0) * wts[:, None])
    evals, evecs = np.linalg.eigh(cov)
    axis = evecs[:, -1]
    base_frame = _frame_with_axis(axis)
    a0 = _pitch_guess(patch, base_frame, c0, A2)
    rng = np.random.default_rng(seed)
    diam = patch.diameter()
    # restarts use distance-damped weights so far vertices of wide patches
    # do not swamp the axis region; the polish step is unweighted
    damp = 1.0 / (1.0 + np.linalg.norm(P - c0, axis=1) / abs(a0))
    trials = []
    best = None
    for k in range(restarts):
        sign = 1.0 if k % 2 == 0 else -1.0
        phase = (k // 2) * math.pi / 4 + 1e-3 * rng.standard_normal()
        Rz = Rotation.from_rotvec(np.array([0.0, 0.0, phase])).as_matrix()
        R0 = base_frame @ Rz
        x0 = np.concatenate([Rotation.from_matrix(R0).as_rotvec(), c0, [sign * a0]])
        try:
            res = least_squares(_residuals, x0, args=(P, damp), method="trf", x_scale="jac",
                                ftol=1e-10, xtol=1e-10, gtol=1e-10, max_nfev=40)
        except (ValueError, np.linalg.LinAlgError) as exc:
            trials.append({"restart": k, "status": "error", "message": str(exc)})
            continue
        rms = math.sqrt(2.0 * res.cost / float(np.sum(damp**2)))
        trials.append({"restart": k, "status": int(res.status), "weighted_rms": rms,
                       "pitch": float(res.x[6])})
        # status 0 only means the short budget ran out; the best start is polished below
        if res.status >= 0 and np.all(np.isfinite(res.x)) and (best is None or rms < best[1]):
            best = (res.x, rms)
        log.debug("helicoid fit restart %d: status %d rms %.3e", k, res.status, rms)
    if best is None:
        raise FitError("helicoid fit failed in every restart", trials)
    res = least_squares(_residuals, best[0], args=(P,), method="trf", x_scale="jac",
                        ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=400)
    if res.status < 0 or not np.all(np.isfinite(res.x)):
        raise FitError("helicoid fit broke down while polishing the best restart",
                       {"x": best[0].tolist(), "weighted_rms": best[1], "restarts": trials})
    # an exhausted polish budget is reported, not raised: patches far from any
    # helicoid (the negative controls) still get a model to be judged against
    converged = res.status > 0
    if not converged:
        log.info("helicoid fit polish stopped at its evaluation budget")
    best = (res.x, math.sqrt(2.0 * res.cost / len(P)))
    R, T, a = _model_from_params(best[0])
    # canonical frame: shift the translation along the axis to the foot of
    # the |A|^2-weighted centroid, adjusting the phase by the screw symmetry
    model = HelicoidModel(float(a), R, T)
    model = _canonical(model, c0)
    d = helicoid_distance(model, P)
    if best[1] > 1e-3 * diam:
        log.info("helicoid fit residual %.3e is large relative to diameter %.3e", best[1], diam)
    return HelicoidFit(model, float(math.sqrt(np.mean(d * d))), float(d.max()), trials, converged)


def _canonical(model: HelicoidModel, ref):
    """Equivalent model whose translation is the axis point nearest ``ref``."""
    loc = model.to_local(np.asarray(ref)[None, :])[0]
    h = loc[2]
    # a screw motion by height h = a * phi maps the helicoid to itself
    phi = h / model.pitch
    Rz = Rotation.from_rotvec([0.0, 0.0, phi]).as_matrix()
    R = model.rotation @ Rz
    T = model.translation + h * model.axis
    return HelicoidModel(model.pitch, R, T)


def helicoid_models_equivalent(m1: HelicoidModel, m2: HelicoidModel, extent=3.0, tol=1e-6):
    """Compare two helicoids modulo their screw symmetry by sampling one near
    its axis point and measuring the distance to the other (both ways)."""
    s = np.linspace(-extent, extent, 21)
    t = np.linspace(-extent / max(abs(m1.pitch), 1e-12), extent / max(abs(m1.pitch), 1e-12), 21)
    S, Tt = np.meshgrid(s, t, indexing="ij")
    p1 = m1.point(S, Tt).reshape(-1, 3)
    p2 = m2.point(S, Tt * m1.pitch / m2.pitch).reshape(-1, 3)
    d = max(float(helicoid_distance(m2, p1).max()), float(helicoid_distance(m1, p2).max()))
    return d <= tol, d


# ------------------------------------------------------ bi-Lipschitz


def model_base(patch: MeshPatch, model: HelicoidModel) -> MeshPatch:
    """Closest points of the patch vertices on the model helicoid, with the
    patch's connectivity and the model's analytic normals and |A|^2."""
    s, t, _ = model.project(patch.vertices)
    verts = model.point(s, t)
    normals = model.normal(s, t)
    base = MeshPatch(verts, patch.triangles, normals, model.A2(s), {"kind": "helicoid-base"})
    return base.orient_to_normals()


def bilipschitz_estimate(patch: MeshPatch, model: HelicoidModel, search=None,
                         fit_residual=None) -> DistortionReport:
    """Distortion interval of the normal-graph map from the model helicoid
    (sampled at the patch's closest points) onto the patch."""
    base = model_base(patch, model)
    base.check_degenerate()
    ng = build_normal_graph(base, patch, search=search, paired=True)
    rep = phi_distortion(ng)
    rep.model = model
    rep.fit_residual = fit_residual
    return rep
