"""Complex gradient, Laurent coefficient, broken-circle oscillation and the spiraling threshold."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .geometry import GridField, MultiGraph, polar_derivatives

DEFAULT_SAMPLES = 512


def complex_gradient(u: MultiGraph, use_analytic=True) -> GridField:
    """f = u_x - i u_y on the full grid."""
    pd = polar_derivatives(u, use_analytic)
    g = pd.grad()
    return GridField(g[..., 0] - 1j * g[..., 1], "dimensionless", u.grid)


# ------------------------------------------------------ circle sampling


class CircleSampler:
    """Values of u, u_rho and u_theta on the broken circle theta in [-pi, pi].

    Analytic graphs are evaluated exactly. Sampled graphs are interpolated by
    cubic splines (in the radial grid variable, then in theta); u_theta is the
    derivative of the theta spline, so its integral over the circle equals the
    spline jump u(pi) - u(-pi) up to quadrature error. On grids with nodes at
    +-pi the samples refine the knots by an even factor, which makes composite
    Simpson exact for the piecewise-quadratic derivative.
    """

    def __init__(self, u: MultiGraph, n=DEFAULT_SAMPLES, use_analytic=True):
        if n < 256:
            raise ValueError("broken circle needs at least 256 samples")
        self.u = u
        g = u.grid
        if g.rect.theta1 > -math.pi + 1e-12 or g.rect.theta2 < math.pi - 1e-12:
            raise ValueError("angular domain must contain [-pi, pi]")
        self.analytic = u.analytic if use_analytic else None
        j0, j1 = g.theta_index(-math.pi), g.theta_index(math.pi)
        if self.analytic is None and j0 is not None and j1 is not None:
            k = j1 - j0
            f = max(2, 2 * math.ceil(n / (2 * k)))
            self.theta = np.linspace(-math.pi, math.pi, k * f + 1)
            self.theta[::f] = g.theta[j0 : j1 + 1]
        else:
            m = n + (n % 2)
            self.theta = np.linspace(-math.pi, math.pi, m + 1)
        if self.analytic is None:
            pd = polar_derivatives(u, use_analytic=False)
            self._ur = pd.ur
            self._su = CubicSpline(g.xi, u.values, axis=0)
            self._sr = CubicSpline(g.xi, pd.ur, axis=0)

    def _check(self, rho):
        r = self.u.grid.rect
        if not r.r1 * (1 - 1e-12) <= rho <= r.r2 * (1 + 1e-12):
            raise ValueError(f"radius {rho:g} outside the radial domain [{r.r1:g}, {r.r2:g}]")

    def _rows(self, rho):
        g = self.u.grid
        i = g.rho_index(rho)
        if i is not None:
            return self.u.values[i], self._ur[i]
        x = math.log(rho) if g.geometric else rho
        return self._su(x), self._sr(x)

    def at(self, rho):
        """``(theta, u, u_rho, u_theta)`` along the broken circle of radius rho."""
        self._check(rho)
        th = self.theta
        if self.analytic is not None:
            d = self.analytic(np.full_like(th, rho), th)
            return th, d.u, d.ur, d.ut
        row_u, row_r = self._rows(rho)
        g = self.u.grid
        su = CubicSpline(g.theta, row_u)
        sr = CubicSpline(g.theta, row_r)
        return th, su(th), sr(th), su(th, 1)

    def f(self, rho):
        th, _, ur, ut = self.at(rho)
        return th, (ur - 1j * ut / rho) * np.exp(-1j * th)

    def w(self, rho):
        """Separation at theta = -pi on this circle: u(rho, pi) - u(rho, -pi)."""
        th, uu, _, _ = self.at(rho)
        return float(uu[-1] - uu[0])


def _default_radii(u: MultiGraph, lo):
    rho = u.grid.rho
    return rho[rho >= lo * (1 - 1e-12)]


# -------------------------------------------------------------- Laurent


@dataclass
class LaurentFit:
    r1: float
    rho0: float
    c: complex
    radii: np.ndarray
    remainder_sup: np.ndarray
    closure_defect: float
    C0: float
    C0_fitted: float
    epsilon: float
    w_r1: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.remainder_sup)):
            raise ValueError("remainder table must be finite")
        if np.any(np.diff(self.radii) <= 0):
            raise ValueError("table radii must increase")

    @property
    def bound_rhs(self):
        return (self.C0 * self.r1**-0.25 / self.radii
                + self.C0 * self.epsilon * abs(self.w_r1) / self.r1)

    def to_dict(self):
        return {"r1": self.r1, "rho0": self.rho0, "c": [self.c.real, self.c.imag],
                "radii": self.radii.tolist(), "remainder_sup": self.remainder_sup.tolist(),
                "bound_rhs": self.bound_rhs.tolist(), "closure_defect": self.closure_defect,
                "C0": self.C0, "C0_fitted": self.C0_fitted, "epsilon": self.epsilon,
                "w_r1": self.w_r1}


def laurent_coefficient(sampler: CircleSampler, rho0):
    """c = (1 / 2 pi i) \\oint f dzeta over the broken circle |zeta| = rho0.

    Returns ``(c, closure defect |zeta f(pi) - zeta f(-pi)|)``.
    """
    th, f = sampler.f(rho0)
    zf = f * rho0 * np.exp(1j * th)
    c = complex(simpson(zf.real, x=th), simpson(zf.imag, x=th)) / (2 * math.pi)
    return c, float(abs(zf[-1] - zf[0]))


def laurent_fit(u: MultiGraph, r1, radii=None, rho0=None, epsilon=0.0, C0=None,
                n=DEFAULT_SAMPLES, use_analytic=True) -> LaurentFit:
    """Fit f = c / zeta + g(zeta) and tabulate sup |g| over broken circles.

    c is the zeta^-1 contour coefficient at rho0 (default 2 r1). With
    ``C0=None`` the smallest constant making the remainder bound hold on the
    table is reported as both ``C0`` and ``C0_fitted``.
    """
    rho0 = 2.0 * r1 if rho0 is None else float(rho0)
    sampler = CircleSampler(u, n, use_analytic)
    radii = _default_radii(u, 2.0 * r1) if radii is None else np.asarray(radii, float)
    if len(radii) == 0:
        raise ValueError(f"no tabulation radii in [{2 * r1:g}, {u.grid.rect.r2:g}]")
    for r in (r1, rho0, *radii):
        sampler._check(r)
    c, defect = laurent_coefficient(sampler, rho0)
    rem = []
    for r in radii:
        th, f = sampler.f(r)
        rem.append(float(np.max(np.abs(f - c / (r * np.exp(1j * th))))))
    rem = np.asarray(rem)
    w1 = sampler.w(r1)
    base = r1**-0.25 / radii + epsilon * abs(w1) / r1
    fitted = float(np.max(rem / base))
    return LaurentFit(float(r1), rho0, c, radii, rem, defect,
                      fitted if C0 is None else float(C0), fitted, float(epsilon), w1)


# ---------------------------------------------------------- oscillation


@dataclass
class OscResult:
    rho: float
    osc: float
    rho_quarter: float
    w_abs: float
    min_utheta: float
    max_utheta: float
    integral_utheta: float

    def bound(self, C, epsilon):
        return C * (self.rho_quarter + epsilon * self.w_abs)

    def to_dict(self):
        return dict(self.__dict__)


def broken_circle_osc(u: MultiGraph, rho, n=DEFAULT_SAMPLES, use_analytic=True,
                      sampler: CircleSampler | None = None) -> OscResult:
    """max - min of u_theta over the broken circle, with rho^(-1/4) and |w(rho, -pi)|."""
    sampler = sampler or CircleSampler(u, n, use_analytic)
    th, uu, _, ut = sampler.at(rho)
    return OscResult(float(rho), float(ut.max() - ut.min()), float(rho) ** -0.25,
                     abs(float(uu[-1] - uu[0])), float(ut.min()), float(ut.max()),
                     float(simpson(ut, x=th)))


# ------------------------------------------------------------ spiraling


@dataclass
class SpiralReport:
    C2: float
    epsilon: float
    C3: float
    radii: np.ndarray
    min_utheta: np.ndarray
    rhs: np.ndarray
    osc: Optional[np.ndarray] = None
    w_abs: Optional[np.ndarray] = None

    def __post_init__(self):
        if math.isfinite(self.C3):
            beyond = self.radii >= self.C3
            if not np.all(self.min_utheta[beyond] >= self.rhs[beyond]):
                raise ValueError("spiral report violates its own threshold")

    @property
    def finite(self):
        return math.isfinite(self.C3)

    def to_dict(self):
        return {"C2": self.C2, "epsilon": self.epsilon,
                "C3": self.C3 if self.finite else "inf",
                "radii": self.radii.tolist(), "min_utheta": self.min_utheta.tolist(),
                "rhs": self.rhs.tolist()}

    def to_csv(self):
        lines = ["rho,min_utheta,rhs,osc,rho_quarter,w_abs"]
        for k, r in enumerate(self.radii):
            osc = "" if self.osc is None else repr(float(self.osc[k]))
            wa = "" if self.w_abs is None else repr(float(self.w_abs[k]))
            lines.append(f"{float(r)!r},{float(self.min_utheta[k])!r},{float(self.rhs[k])!r},"
                         f"{osc},{float(r) ** -0.25!r},{wa}")
        return "\n".join(lines) + "\n"


def separation_floor(u: MultiGraph, n=DEFAULT_SAMPLES, use_analytic=True):
    """min over theta in [-pi, pi) of |w| at the innermost radius: the default C2."""
    from .geometry import separation

    if use_analytic and u.analytic is not None:
        th = np.linspace(-math.pi, math.pi, n + 1)
        r = np.full_like(th, u.grid.rect.r1)
        return float(np.min(np.abs(u.analytic(r, th + 2 * math.pi).u - u.analytic(r, th).u)))
    w = separation(u)
    if w.values.size == 0:
        raise ValueError("angular span below one turn: separation undefined")
    return float(np.min(np.abs(w.values[0])))


def spiral_threshold(u: MultiGraph, C2, epsilon, radii=None, n=DEFAULT_SAMPLES,
                     use_analytic=True) -> SpiralReport:
    """C3 = smallest tabulated radius from which min u_theta >= (C2 / 8 pi) rho^-eps
    holds at every larger tabulated radius; infinity when the last radius fails."""
    sampler = CircleSampler(u, n, use_analytic)
    radii = u.grid.rho.copy() if radii is None else np.asarray(radii, float)
    mins, rhs, oscs, ws = [], [], [], []
    for r in radii:
        o = broken_circle_osc(u, r, sampler=sampler)
        mins.append(o.min_utheta)
        oscs.append(o.osc)
        ws.append(o.w_abs)
        rhs.append(C2 / (8 * math.pi) * r ** (-epsilon))
    mins, rhs = np.asarray(mins), np.asarray(rhs)
    ok = mins >= rhs
    C3 = math.inf
    if ok.size and ok[-1]:
        bad = np.flatnonzero(~ok)
        start = 0 if len(bad) == 0 else bad[-1] + 1
        C3 = float(radii[start])
    return SpiralReport(float(C2), float(epsilon), C3, radii, mins, rhs,
                        np.asarray(oscs), np.asarray(ws))
