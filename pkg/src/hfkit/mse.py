"""Minimal surface equation on polar grids: residual, Newton-Dirichlet solver, perturbation runs."""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import GridField, MultiGraph, PolarDerivs, PolarGrid, polar_derivatives
from .stencils import d1_matrix, d2_matrix

log = logging.getLogger(__name__)


class LinearSolveError(RuntimeError):
    pass


# ------------------------------------------------------------ residual


def _mse_terms(rho, p, q, P, Q, S):
    """Numerator N of the polar minimal surface operator and W = sqrt(1 + |grad u|^2).

    The operator div(grad u / W) equals N / W^3.
    """
    r2 = rho * rho
    N = ((1.0 + q * q / r2) * P - 2.0 * p * q * Q / r2 + (1.0 + p * p) * S / r2
         + p * (1.0 + p * p) / rho + 2.0 * p * q * q / (r2 * rho))
    W = np.sqrt(1.0 + p * p + q * q / r2)
    return N, W


def residual_from_derivs(d: PolarDerivs):
    N, W = _mse_terms(d.rho, d.ur, d.ut, d.urr, d.urt, d.utt)
    return N / W**3


def mse_residual(u: MultiGraph, use_analytic=True) -> GridField:
    """Pointwise div(grad u / sqrt(1 + |grad u|^2)) at every node.

    Boundary nodes use one-sided stencils when no analytic derivatives are attached.
    """
    return GridField(residual_from_derivs(polar_derivatives(u, use_analytic)), "1/length", u.grid)


# ------------------------------------------------------------- config


@dataclass
class SolveConfig:
    max_newton_iters: int = 50
    residual_tol: float = 1e-10
    damping: str = "line-search"
    initial_guess: Union[str, MultiGraph] = "harmonic-extension"
    max_halvings: int = 20
    divergence_window: int = 5

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be at least 1")
        if self.damping not in ("none", "line-search"):
            raise ValueError(f"unknown damping {self.damping!r}")
        if isinstance(self.initial_guess, str) and self.initial_guess not in ("zero", "harmonic-extension"):
            raise ValueError(f"unknown initial guess {self.initial_guess!r}")

    def to_dict(self):
        ig = self.initial_guess if isinstance(self.initial_guess, str) else "given"
        return {"max_newton_iters": self.max_newton_iters, "residual_tol": self.residual_tol,
                "damping": self.damping, "initial_guess": ig, "max_halvings": self.max_halvings}


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    solution: MultiGraph
    history: list = field(default_factory=list)
    message: str = ""
    max_principle: Optional[bool] = None
    seconds: float = 0.0
    residual_tol: float = np.inf

    def __post_init__(self):
        if self.converged and not self.residual <= self.residual_tol:
            raise ValueError("converged report with residual above tolerance")

    def to_dict(self):
        return {"iterations": self.iterations, "residual": self.residual,
                "converged": self.converged, "message": self.message,
                "max_principle": self.max_principle,
                "history": [dict(h) for h in self.history]}

    def history_csv(self):
        lines = ["iteration,residual_sup,numerator_l2,step"]
        for h in self.history:
            lines.append(f"{h['iteration']},{float(h['residual_sup'])!r},{float(h['numerator_l2'])!r},{float(h['step'])!r}")
        return "\n".join(lines) + "\n"


# ----------------------------------------------------------- operators


class _Operators:
    """Sparse matrices mapping nodal values to (p, q, P, Q, S) on the full grid."""

    def __init__(self, grid: PolarGrid):
        nr, nt = grid.shape
        Ir, It = sp.identity(nr, format="csr"), sp.identity(nt, format="csr")
        D1r, D2r = d1_matrix(nr, grid.h_xi), d2_matrix(nr, grid.h_xi)
        D1t, D2t = d1_matrix(nt, grid.h_theta), d2_matrix(nt, grid.h_theta)
        Dx = sp.kron(D1r, It, format="csr")
        Dxx = sp.kron(D2r, It, format="csr")
        Dt = sp.kron(Ir, D1t, format="csr")
        Dtt = sp.kron(Ir, D2t, format="csr")
        Dxt = (Dx @ Dt).tocsr()
        rho = np.repeat(grid.rho, nt)
        self.rho = rho
        if grid.geometric:
            inv = sp.diags(1.0 / rho)
            inv2 = sp.diags(1.0 / rho**2)
            self.Mp = (inv @ Dx).tocsr()
            self.MP = (inv2 @ (Dxx - Dx)).tocsr()
            self.MQ = (inv @ Dxt).tocsr()
        else:
            self.Mp, self.MP, self.MQ = Dx, Dxx, Dxt
        self.Mq, self.MS = Dt, Dtt
        mask = np.zeros((nr, nt), bool)
        mask[1:-1, 1:-1] = True
        self.interior = np.flatnonzero(mask.ravel())
        self.edge = np.flatnonzero(~mask.ravel())

    def fields(self, v):
        return self.Mp @ v, self.Mq @ v, self.MP @ v, self.MQ @ v, self.MS @ v

    def residual(self, v):
        p, q, P, Q, S = self.fields(v)
        N, W = _mse_terms(self.rho, p, q, P, Q, S)
        return (N / W**3)[self.interior]

    def numerator(self, v):
        p, q, P, Q, S = self.fields(v)
        return _mse_terms(self.rho, p, q, P, Q, S)[0][self.interior]

    def jacobian(self, v, normalized=False):
        """Jacobian of N (default) or of N / W^3 with respect to interior values."""
        rho = self.rho
        r2 = rho * rho
        p, q, P, Q, S = self.fields(v)
        N, W = _mse_terms(rho, p, q, P, Q, S)
        W3, W5 = W**3, W**5
        dN = {
            "P": 1.0 + q * q / r2,
            "Q": -2.0 * p * q / r2,
            "S": (1.0 + p * p) / r2,
            "p": -2.0 * q * Q / r2 + 2.0 * p * S / r2 + (1.0 + 3.0 * p * p) / rho + 2.0 * q * q / (r2 * rho),
            "q": 2.0 * q * P / r2 - 2.0 * p * Q / r2 + 4.0 * p * q / (r2 * rho),
        }
        if normalized:
            dR = {k: v_ / W3 for k, v_ in dN.items()}
            dR["p"] = dR["p"] - 3.0 * N / W5 * p
            dR["q"] = dR["q"] - 3.0 * N / W5 * q / r2
        else:
            dR = dN
        mats = {"p": self.Mp, "q": self.Mq, "P": self.MP, "Q": self.MQ, "S": self.MS}
        J = sum(sp.diags(dR[k]) @ mats[k] for k in mats)
        return J.tocsr()[self.interior][:, self.interior]

    def laplacian(self):
        """Flat Laplacian u_rr + u_r / rho + u_tt / rho^2 as a matrix."""
        rho = self.rho
        L = self.MP + sp.diags(1.0 / rho) @ self.Mp + sp.diags(1.0 / rho**2) @ self.MS
        return L.tocsr()


# -------------------------------------------------------------- solver


Boundary = Union[np.ndarray, dict, MultiGraph]


def boundary_array(grid: PolarGrid, boundary: Boundary) -> np.ndarray:
    """Full-grid array whose edge rows and columns carry the Dirichlet data.

    ``boundary`` may be a grid-shaped array (only edges are read), a MultiGraph
    on the same grid, or a dict with ``inner``, ``outer`` (length n_theta) and
    ``start``, ``end`` (length n_rho) edge arrays.
    """
    nr, nt = grid.shape
    if isinstance(boundary, MultiGraph):
        arr = boundary.values.copy()
    elif isinstance(boundary, dict):
        arr = np.zeros((nr, nt))
        arr[0, :] = np.asarray(boundary["inner"], float)
        arr[-1, :] = np.asarray(boundary["outer"], float)
        arr[:, 0] = np.asarray(boundary["start"], float)
        arr[:, -1] = np.asarray(boundary["end"], float)
    else:
        arr = np.array(boundary, dtype=float)
    if arr.shape != (nr, nt):
        raise ValueError(f"boundary shape {arr.shape} != grid shape {(nr, nt)}")
    edges = np.concatenate([arr[0], arr[-1], arr[:, 0], arr[:, -1]])
    if not np.all(np.isfinite(edges)):
        raise ValueError("boundary values must be finite")
    out = np.zeros_like(arr)
    out[0], out[-1], out[:, 0], out[:, -1] = arr[0], arr[-1], arr[:, 0], arr[:, -1]
    return out


def _factor(J):
    try:
        lu = spla.splu(J.tocsc())
    except RuntimeError as exc:
        raise LinearSolveError(f"sparse factorization failed: {exc}") from None
    return lu


def _initial(ops: _Operators, grid, bnd, cfg: SolveConfig):
    v = bnd.ravel().copy()
    ig = cfg.initial_guess
    if isinstance(ig, MultiGraph):
        if ig.values.shape != grid.shape:
            raise ValueError("initial guess lives on a different grid")
        v[ops.interior] = ig.values.ravel()[ops.interior]
    elif ig == "harmonic-extension":
        L = ops.laplacian()
        A = L[ops.interior][:, ops.interior]
        rhs = -(L[ops.interior][:, ops.edge] @ v[ops.edge])
        v[ops.interior] = _factor(A).solve(rhs)
    return v


def solve_dirichlet(grid: PolarGrid, boundary: Boundary, cfg: SolveConfig | None = None,
                    frame_from: MultiGraph | None = None, source=None) -> SolveReport:
    """Damped Newton iteration on the discretized minimal surface equation.

    Unknowns are the interior nodes; boundary nodes hold the Dirichlet data.
    ``iterations`` counts Newton passes including the one that detects
    convergence, so data that already solves the equation reports 1.
    """
    cfg = cfg or SolveConfig()
    t0 = time.perf_counter()
    bnd = boundary_array(grid, boundary)
    ops = _Operators(grid)
    v = _initial(ops, grid, bnd, cfg)
    history = []
    increases = 0
    converged = False
    msg = "max_newton_iters reached"
    # Newton runs on the quasilinear numerator N; N / W^3 decays for steep
    # iterates, which lets a line search on it drift toward spurious minima.
    R = ops.numerator(v)
    it = 0
    for it in range(1, cfg.max_newton_iters + 1):
        rsup = float(np.max(np.abs(ops.residual(v)))) if R.size else 0.0
        rl2 = float(np.linalg.norm(R))
        if not np.isfinite(rsup):
            msg = "residual became non-finite"
            break
        if rsup <= cfg.residual_tol:
            converged = True
            msg = "converged"
            history.append({"iteration": it, "residual_sup": rsup, "numerator_l2": rl2, "step": 0.0})
            break
        J = ops.jacobian(v)
        delta = _factor(J).solve(-R)
        if not np.all(np.isfinite(delta)):
            raise LinearSolveError("linear solve produced non-finite update")
        lam = 1.0
        trial = v.copy()
        accepted = False
        n_try = cfg.max_halvings + 1 if cfg.damping == "line-search" else 1
        for _ in range(n_try):
            trial[ops.interior] = v[ops.interior] + lam * delta
            Rt = ops.numerator(trial)
            if np.linalg.norm(Rt) < rl2:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            # undamped exploratory step; counts toward the divergence window
            lam = 1.0
            trial[ops.interior] = v[ops.interior] + delta
            Rt = ops.numerator(trial)
            increases += 1
        else:
            increases = 0
        history.append({"iteration": it, "residual_sup": rsup, "numerator_l2": rl2, "step": lam})
        v, R = trial, Rt
        if increases >= cfg.divergence_window:
            msg = f"diverged: residual increased on {increases} consecutive steps"
            break
    else:
        # loop exhausted without break: final residual check
        rsup = float(np.max(np.abs(ops.residual(v)))) if R.size else 0.0
        if rsup <= cfg.residual_tol:
            converged = True
            msg = "converged"

    R = ops.residual(v)
    rsup = float(np.max(np.abs(R))) if R.size else 0.0
    values = v.reshape(grid.shape)
    if frame_from is not None:
        sol = MultiGraph(grid, values, frame_from.center.copy(), frame_from.rotation.copy(), source=source)
    else:
        sol = MultiGraph(grid, values, source=source)
    mp = None
    if converged:
        mp = check_max_principle(values)
        if not mp:
            warnings.warn("discrete maximum principle violated by converged solution", RuntimeWarning)
    rep = SolveReport(it, rsup, converged, sol, history, msg, mp, time.perf_counter() - t0,
                      cfg.residual_tol)
    log.info("solve_dirichlet: %s after %d iterations (residual %.3e)", msg, it, rsup)
    return rep


def check_max_principle(values, tol=1e-9):
    edge = np.concatenate([values[0], values[-1], values[:, 0], values[:, -1]])
    inner = values[1:-1, 1:-1]
    if inner.size == 0:
        return True
    scale = tol * max(1.0, float(np.max(np.abs(edge))))
    return bool(inner.max() <= edge.max() + scale and inner.min() >= edge.min() - scale)


# ------------------------------------------------------- perturbation


def boundary_oscillation(u: MultiGraph):
    v = u.values
    edge = np.concatenate([v[0], v[-1], v[:, 0], v[:, -1]])
    return float(edge.max() - edge.min())


def bump_array(grid: PolarGrid, bump) -> np.ndarray:
    """Evaluate a boundary bump on the grid edges.

    ``bump`` is a callable ``f(rho, theta)`` applied on all four edges, a dict
    of per-edge callables or arrays (``inner``, ``outer``, ``start``, ``end``),
    or a grid-shaped array.
    """
    rho, theta = grid.mesh()
    if callable(bump):
        return boundary_array(grid, np.asarray(bump(rho, theta), float) * np.ones(grid.shape))
    if isinstance(bump, dict):
        nr, nt = grid.shape
        parts = {}
        for key, n, r, t in (("inner", nt, rho[0], theta[0]), ("outer", nt, rho[-1], theta[-1]),
                             ("start", nr, rho[:, 0], theta[:, 0]), ("end", nr, rho[:, -1], theta[:, -1])):
            f = bump.get(key, 0.0)
            parts[key] = np.asarray(f(r, t), float) * np.ones(n) if callable(f) else np.broadcast_to(
                np.asarray(f, float), (n,)).copy()
        # corners are shared: radial edges win so an outer-only bump stays continuous
        out = boundary_array(grid, parts)
        for key, row in (("inner", 0), ("outer", -1)):
            if key in bump:
                out[row, :] = parts[key]
        return out
    return boundary_array(grid, bump)


def perturb_and_solve(base: MultiGraph, boundary_bump, cfg: SolveConfig | None = None) -> SolveReport:
    """Re-solve with the base boundary data plus a bump, starting from the base."""
    cfg = cfg or SolveConfig()
    bump = bump_array(base.grid, boundary_bump)
    scale = boundary_oscillation(base)
    bsup = float(np.max(np.abs(bump)))
    if bsup > 0.2 * scale:
        warnings.warn(f"bump sup {bsup:.3g} exceeds 0.2 x boundary oscillation ({scale:.3g});"
                      " convergence is not expected", RuntimeWarning)
    cfg = SolveConfig(cfg.max_newton_iters, cfg.residual_tol, cfg.damping, base,
                      cfg.max_halvings, cfg.divergence_window)
    src = {"kind": "perturbed", "base": base.source, "bump_sup": bsup}
    return solve_dirichlet(base.grid, base.values + bump, cfg, frame_from=base, source=src)
