"""Hot numeric kernels.

Each kernel has a numba implementation (``_*_nb``) and a pure-numpy
implementation (``_*_np``); the public wrapper dispatches on
:func:`hfkit._accel.use_numba`. Both paths compute the same quantities with
the same algorithm, so results agree to rounding.
"""
import numpy as np

from ._accel import njit, prange, use_numba

# ------------------------------------------------------------ quadric fit


@njit(cache=True, parallel=True)
def _quadric_nb(V, N, T1, T2, ptr, idx):
    n = V.shape[0]
    out = np.zeros((n, 5))
    ok = np.zeros(n, np.bool_)
    for i in prange(n):
        lo, hi = ptr[i], ptr[i + 1]
        m = hi - lo
        if m < 5:
            continue
        X = np.empty(m)
        Y = np.empty(m)
        Z = np.empty(m)
        L = 0.0
        for k in range(m):
            j = idx[lo + k]
            d0 = V[j, 0] - V[i, 0]
            d1 = V[j, 1] - V[i, 1]
            d2 = V[j, 2] - V[i, 2]
            X[k] = d0 * T1[i, 0] + d1 * T1[i, 1] + d2 * T1[i, 2]
            Y[k] = d0 * T2[i, 0] + d1 * T2[i, 1] + d2 * T2[i, 2]
            Z[k] = d0 * N[i, 0] + d1 * N[i, 1] + d2 * N[i, 2]
            L += np.sqrt(X[k] * X[k] + Y[k] * Y[k])
        L /= m
        if L <= 0.0:
            continue
        ATA = np.zeros((5, 5))
        ATb = np.zeros(5)
        row = np.empty(5)
        for k in range(m):
            x = X[k] / L
            y = Y[k] / L
            z = Z[k] / L
            row[0] = x * x
            row[1] = x * y
            row[2] = y * y
            row[3] = x
            row[4] = y
            for a in range(5):
                ATb[a] += row[a] * z
                for b in range(5):
                    ATA[a, b] += row[a] * row[b]
        U, s, Vt = np.linalg.svd(ATA)
        if s[4] <= 1e-12 * s[0]:
            continue
        c = Vt.T @ ((U.T @ ATb) / s)
        out[i, 0] = c[0] / L
        out[i, 1] = c[1] / L
        out[i, 2] = c[2] / L
        out[i, 3] = c[3]
        out[i, 4] = c[4]
        ok[i] = True
    return out, ok


def _quadric_np(V, N, T1, T2, ptr, idx):
    n = V.shape[0]
    counts = np.diff(ptr)
    owner = np.repeat(np.arange(n), counts)
    d = V[idx] - V[owner]
    X = np.einsum("ij,ij->i", d, T1[owner])
    Y = np.einsum("ij,ij->i", d, T2[owner])
    Z = np.einsum("ij,ij->i", d, N[owner])
    Lsum = np.bincount(owner, weights=np.sqrt(X * X + Y * Y), minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        L = Lsum / counts
    Lo = L[owner]
    x, y, z = X / Lo, Y / Lo, Z / Lo
    rows = np.stack([x * x, x * y, y * y, x, y], axis=1)
    ATA = np.zeros((n, 5, 5))
    ATb = np.zeros((n, 5))
    for a in range(5):
        ATb[:, a] = np.bincount(owner, weights=rows[:, a] * z, minlength=n)
        for b in range(5):
            ATA[:, a, b] = np.bincount(owner, weights=rows[:, a] * rows[:, b], minlength=n)
    ok = (counts >= 5) & (L > 0)
    ATA[~ok] = np.eye(5)
    ATb[~ok] = 0.0
    U, s, Vt = np.linalg.svd(ATA)
    ok &= s[:, 4] > 1e-12 * s[:, 0]
    s = np.where(s > 0, s, 1.0)
    c = np.einsum("nji,nj->ni", Vt, np.einsum("nji,nj->ni", U, ATb) / s)
    out = np.zeros((n, 5))
    Ls = np.where(ok, L, 1.0)
    out[:, 0] = c[:, 0] / Ls
    out[:, 1] = c[:, 1] / Ls
    out[:, 2] = c[:, 2] / Ls
    out[:, 3] = c[:, 3]
    out[:, 4] = c[:, 4]
    out[~ok] = 0.0
    return out, ok


def quadric_fit(V, N, T1, T2, ptr, idx):
    args = [np.ascontiguousarray(a, dtype=float) for a in (V, N, T1, T2)]
    ptr = np.ascontiguousarray(ptr, dtype=np.int64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if use_numba():
        return _quadric_nb(*args, ptr, idx)
    return _quadric_np(*args, ptr, idx)


# ------------------------------------------------- segment-pair distance


@njit(cache=True)
def _pt_seg_nb(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    L2 = dx * dx + dy * dy
    t = 0.0
    if L2 > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / L2
        t = min(1.0, max(0.0, t))
    qx = ax + t * dx - px
    qy = ay + t * dy - py
    return np.sqrt(qx * qx + qy * qy)


@njit(cache=True)
def _seg_seg_nb(ax, ay, bx, by, cx, cy, dx, dy):
    d1 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    d2 = (bx - ax) * (dy - ay) - (by - ay) * (dx - ax)
    d3 = (dx - cx) * (ay - cy) - (dy - cy) * (ax - cx)
    d4 = (dx - cx) * (by - cy) - (dy - cy) * (bx - cx)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return 0.0
    r = _pt_seg_nb(ax, ay, cx, cy, dx, dy)
    r = min(r, _pt_seg_nb(bx, by, cx, cy, dx, dy))
    r = min(r, _pt_seg_nb(cx, cy, ax, ay, bx, by))
    r = min(r, _pt_seg_nb(dx, dy, ax, ay, bx, by))
    return r


@njit(cache=True, parallel=True)
def _segmin_nb(P):
    n = P.shape[0] - 1
    best = np.full(n, np.inf)
    arg = np.full(n, -1, np.int64)
    for i in prange(n):
        ax, ay, bx, by = P[i, 0], P[i, 1], P[i + 1, 0], P[i + 1, 1]
        for j in range(i + 2, n):
            d = _seg_seg_nb(ax, ay, bx, by, P[j, 0], P[j, 1], P[j + 1, 0], P[j + 1, 1])
            if d < best[i]:
                best[i] = d
                arg[i] = j
    return best, arg


def _pt_seg_np(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    L2 = dx * dx + dy * dy
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(L2 > 0, ((px - ax) * dx + (py - ay) * dy) / np.where(L2 > 0, L2, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    qx = ax + t * dx - px
    qy = ay + t * dy - py
    return np.sqrt(qx * qx + qy * qy)


def _seg_seg_np(ax, ay, bx, by, cx, cy, dx, dy):
    d1 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    d2 = (bx - ax) * (dy - ay) - (by - ay) * (dx - ax)
    d3 = (dx - cx) * (ay - cy) - (dy - cy) * (ax - cx)
    d4 = (dx - cx) * (by - cy) - (dy - cy) * (bx - cx)
    cross = (((d1 > 0) & (d2 < 0)) | ((d1 < 0) & (d2 > 0))) & (
        ((d3 > 0) & (d4 < 0)) | ((d3 < 0) & (d4 > 0))
    )
    r = np.minimum(_pt_seg_np(ax, ay, cx, cy, dx, dy), _pt_seg_np(bx, by, cx, cy, dx, dy))
    r = np.minimum(r, _pt_seg_np(cx, cy, ax, ay, bx, by))
    r = np.minimum(r, _pt_seg_np(dx, dy, ax, ay, bx, by))
    return np.where(cross, 0.0, r)


def _segmin_np(P, block=64):
    n = P.shape[0] - 1
    best = np.full(n, np.inf)
    arg = np.full(n, -1, np.int64)
    A, B = P[:-1], P[1:]
    J = np.arange(n)
    for i0 in range(0, n, block):
        I = np.arange(i0, min(n, i0 + block))
        ax, ay = A[I, 0][:, None], A[I, 1][:, None]
        bx, by = B[I, 0][:, None], B[I, 1][:, None]
        d = _seg_seg_np(ax, ay, bx, by, A[None, :, 0], A[None, :, 1], B[None, :, 0], B[None, :, 1])
        d = np.where(J[None, :] >= I[:, None] + 2, d, np.inf)
        k = np.argmin(d, axis=1)
        v = d[np.arange(len(I)), k]
        best[I] = v
        arg[I] = np.where(np.isfinite(v), k, -1)
    return best, arg


def segment_min_distance(P):
    """For each segment i of the polyline P, the nearest non-adjacent later
    segment: returns ``(dist[i], j[i])``."""
    P = np.ascontiguousarray(P, dtype=float)
    if use_numba():
        return _segmin_nb(P)
    return _segmin_np(P)


# ------------------------------------------------------------- ball sup


@njit(cache=True, parallel=True)
def _ballsup_nb(X, vals, comp, cand, radii, bmask):
    m = cand.shape[0]
    sup = np.zeros(m)
    exits = np.zeros(m, np.bool_)
    n = X.shape[0]
    for k in prange(m):
        i = cand[k]
        r2 = radii[k] * radii[k]
        s = vals[i]
        e = False
        for j in range(n):
            if comp[j] != comp[i]:
                continue
            dx = X[j, 0] - X[i, 0]
            dy = X[j, 1] - X[i, 1]
            dz = X[j, 2] - X[i, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 <= r2:
                if vals[j] > s:
                    s = vals[j]
                if d2 < r2 and bmask[j]:
                    e = True
        sup[k] = s
        exits[k] = e
    return sup, exits


def _ballsup_np(X, vals, comp, cand, radii, bmask):
    m = cand.shape[0]
    sup = np.zeros(m)
    exits = np.zeros(m, bool)
    for k in range(m):
        i = cand[k]
        same = comp == comp[i]
        d2 = np.sum((X - X[i]) ** 2, axis=1)
        r2 = radii[k] ** 2
        inside = same & (d2 <= r2)
        sup[k] = max(vals[i], float(np.max(vals[inside])))
        exits[k] = bool(np.any(same & (d2 < r2) & bmask))
    return sup, exits


def ball_sup(X, vals, comp, cand, radii, bmask):
    """Max of ``vals`` over the closed ball of radius ``radii[k]`` about each
    candidate vertex (same component only), and whether the open ball reaches
    a boundary vertex."""
    X = np.ascontiguousarray(X, dtype=float)
    vals = np.ascontiguousarray(vals, dtype=float)
    comp = np.ascontiguousarray(comp, dtype=np.int64)
    cand = np.ascontiguousarray(cand, dtype=np.int64)
    radii = np.ascontiguousarray(radii, dtype=float)
    bmask = np.ascontiguousarray(bmask, dtype=np.bool_)
    if use_numba():
        return _ballsup_nb(X, vals, comp, cand, radii, bmask)
    return _ballsup_np(X, vals, comp, cand, radii, bmask)


# ------------------------------------------------------------- ray casts


@njit(cache=True, parallel=True)
def _rays_nb(O, D, A, B, C, ptr, idx, tmax, bary_eps, t_merge):
    n = O.shape[0]
    count = np.zeros(n, np.int64)
    tbest = np.full(n, np.nan)
    for i in prange(n):
        lo, hi = ptr[i], ptr[i + 1]
        ts = np.empty(hi - lo)
        nh = 0
        for k in range(lo, hi):
            f = idx[k]
            e1 = B[f] - A[f]
            e2 = C[f] - A[f]
            d = D[i]
            p = np.cross(d, e2)
            det = e1[0] * p[0] + e1[1] * p[1] + e1[2] * p[2]
            if abs(det) < 1e-300:
                continue
            s = O[i] - A[f]
            uu = (s[0] * p[0] + s[1] * p[1] + s[2] * p[2]) / det
            if uu < -bary_eps or uu > 1.0 + bary_eps:
                continue
            q = np.cross(s, e1)
            vv = (d[0] * q[0] + d[1] * q[1] + d[2] * q[2]) / det
            if vv < -bary_eps or uu + vv > 1.0 + bary_eps:
                continue
            t = (e2[0] * q[0] + e2[1] * q[1] + e2[2] * q[2]) / det
            if abs(t) <= tmax:
                ts[nh] = t
                nh += 1
        if nh == 0:
            continue
        ts2 = np.sort(ts[:nh])
        c = 1
        for k in range(1, nh):
            if ts2[k] - ts2[k - 1] > t_merge:
                c += 1
        count[i] = c
        b = ts2[0]
        for k in range(nh):
            if abs(ts2[k]) < abs(b):
                b = ts2[k]
        tbest[i] = b
    return count, tbest


def _rays_np(O, D, A, B, C, ptr, idx, tmax, bary_eps, t_merge):
    n = O.shape[0]
    owner = np.repeat(np.arange(n), np.diff(ptr))
    f = idx
    e1 = B[f] - A[f]
    e2 = C[f] - A[f]
    d = D[owner]
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    good = np.abs(det) >= 1e-300
    det = np.where(good, det, 1.0)
    s = O[owner] - A[f]
    uu = np.einsum("ij,ij->i", s, p) / det
    q = np.cross(s, e1)
    vv = np.einsum("ij,ij->i", d, q) / det
    t = np.einsum("ij,ij->i", e2, q) / det
    hit = (good & (uu >= -bary_eps) & (uu <= 1 + bary_eps) & (vv >= -bary_eps)
           & (uu + vv <= 1 + bary_eps) & (np.abs(t) <= tmax))
    ho, ht = owner[hit], t[hit]
    order = np.lexsort((ht, ho))
    ho, ht = ho[order], ht[order]
    count = np.zeros(n, np.int64)
    tbest = np.full(n, np.nan)
    if len(ho):
        new = np.ones(len(ho), bool)
        new[1:] = (ho[1:] != ho[:-1]) | (np.diff(ht) > t_merge)
        count = np.bincount(ho[new], minlength=n).astype(np.int64)
        absd = np.abs(ht)
        # first minimal |t| within each owner, scanning in sorted order
        key = np.lexsort((np.arange(len(ho)), absd, ho))
        first = np.ones(len(key), bool)
        first[1:] = ho[key][1:] != ho[key][:-1]
        tbest[ho[key][first]] = ht[key][first]
    return count, tbest


def ray_hits(O, D, A, B, C, ptr, idx, tmax, bary_eps=1e-9, t_merge=1e-9):
    """Intersect lines ``O + t D`` (|t| <= tmax) with candidate triangles.

    Returns the number of distinct hits (hits closer than ``t_merge`` are one
    hit, e.g. a line through a shared edge) and the hit with smallest |t|.
    """
    arr = [np.ascontiguousarray(a, dtype=float) for a in (O, D, A, B, C)]
    ptr = np.ascontiguousarray(ptr, dtype=np.int64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if use_numba():
        return _rays_nb(*arr, ptr, idx, float(tmax), float(bary_eps), float(t_merge))
    return _rays_np(*arr, ptr, idx, float(tmax), float(bary_eps), float(t_merge))


# ------------------------------------------------ helicoid projection


@njit(cache=True, parallel=True)
def _helproj_nb(P, a, iters):
    n = P.shape[0]
    th = np.empty(n)
    e1 = np.empty(n)
    e2 = np.empty(n)
    for i in prange(n):
        x, y, z = P[i, 0], P[i, 1], P[i, 2]
        phi = np.arctan2(y, x)
        k0 = np.round((z / a - phi) / np.pi)
        best = np.inf
        tb = phi
        for dk in range(-1, 2):
            t = phi + (k0 + dk) * np.pi
            r = (z - a * t) ** 2
            if r < best:
                best = r
                tb = t
        t = tb
        for _ in range(iters):
            c = np.cos(t)
            s = np.sin(t)
            r1 = x * s - y * c
            sr = x * c + y * s
            F = r1 * sr - a * (z - a * t)
            dF = sr * sr - r1 * r1 + a * a
            if dF <= 0.0:
                break
            step = F / dF
            if step > 0.785:
                step = 0.785
            elif step < -0.785:
                step = -0.785
            t -= step
            if abs(step) < 1e-15 * (1.0 + abs(t)):
                break
        th[i] = t
        e1[i] = x * np.sin(t) - y * np.cos(t)
        e2[i] = z - a * t
    return th, e1, e2


def _helproj_np(P, a, iters):
    x, y, z = P[:, 0], P[:, 1], P[:, 2]
    phi = np.arctan2(y, x)
    k0 = np.round((z / a - phi) / np.pi)
    cands = phi[:, None] + (k0[:, None] + np.array([-1.0, 0.0, 1.0])) * np.pi
    r = (z[:, None] - a * cands) ** 2
    t = cands[np.arange(len(x)), np.argmin(r, axis=1)]
    active = np.ones(len(x), bool)
    for _ in range(iters):
        if not active.any():
            break
        c, s = np.cos(t), np.sin(t)
        r1 = x * s - y * c
        sr = x * c + y * s
        F = r1 * sr - a * (z - a * t)
        dF = sr * sr - r1 * r1 + a * a
        active &= dF > 0
        step = np.clip(F / np.where(dF > 0, dF, 1.0), -0.785, 0.785)
        step = np.where(active, step, 0.0)
        t = t - step
        active &= ~(np.abs(step) < 1e-15 * (1.0 + np.abs(t)))
    return t, x * np.sin(t) - y * np.cos(t), z - a * t


def project_helicoid(P, a, iters=30):
    """Closest-point parameters on the helicoid ``(s cos t, s sin t, a t)``
    for points in its own frame: returns ``(t, e_perp, e_height)``; the
    distance is ``hypot(e_perp, e_height)`` and ``s = x cos t + y sin t``."""
    P = np.ascontiguousarray(P, dtype=float)
    if use_numba():
        return _helproj_nb(P, float(a), int(iters))
    return _helproj_np(P, float(a), int(iters))
