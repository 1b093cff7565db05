"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 3] [--quick]

Each kernel runs once per backend to warm up (numba compile, caches), then
the best of ``--repeat`` runs is reported. Results are checked to agree
before timing.
"""
import argparse
import math
import timeit

import numpy as np

from hfkit import kernels, set_backend
from hfkit.geometry import tangent_basis
from hfkit.surfaces import HelicoidModel, WeierstrassAlpha, helicoid_mesh, weierstrass_curve


def setup(quick):
    n = 41 if quick else 81
    m, _ = helicoid_mesh(HelicoidModel(1.0), 6.0, -2 * math.pi, 2 * math.pi, n, 2 * n)
    ptr, idx = m.ring(2)
    T1, T2 = tangent_basis(m.normals)
    curve = weierstrass_curve(WeierstrassAlpha(0.25, 1.0), (-12, 12), 1024 if quick else 4096)
    A2 = m.A2
    cand = np.flatnonzero(A2 >= 0.5 * A2.max())
    radii = np.sqrt(2.0) / np.sqrt(A2[cand])
    rng = np.random.default_rng(0)
    P = rng.normal(size=(20000 if quick else 200000, 3)) * 5
    tri = m.triangles
    A, B, C = m.vertices[tri[:, 0]], m.vertices[tri[:, 1]], m.vertices[tri[:, 2]]
    k = 100 if quick else 400
    O = m.vertices[:k] - m.normals[:k]
    D = m.normals[:k]
    # every ray tests every triangle: worst case for the inner loop
    rptr = np.arange(0, k * len(tri) + 1, len(tri), dtype=np.int64)
    ridx = np.tile(np.arange(len(tri), dtype=np.int64), k)
    cases = {
        "quadric_fit": lambda: kernels.quadric_fit(m.vertices, m.normals, T1, T2, ptr, idx),
        "segment_min_distance": lambda: kernels.segment_min_distance(curve.points),
        "ball_sup": lambda: kernels.ball_sup(m.vertices, A2, m.components, cand, radii,
                                             m.boundary_vertices),
        "project_helicoid": lambda: kernels.project_helicoid(P, 1.0),
        "ray_hits": lambda: kernels.ray_hits(O, D, A, B, C, rptr, ridx, 2.0),
    }
    return cases


def _flat(res):
    if isinstance(res, tuple):
        return [np.asarray(r, float).ravel() for r in res]
    return [np.asarray(res, float).ravel()]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="small inputs (also used by the tests)")
    args = ap.parse_args()
    cases = setup(args.quick)
    print(f"{'kernel':24s} {'numpy [s]':>11s} {'numba [s]':>11s} {'speedup':>8s}")
    for name, fn in cases.items():
        times, outs = {}, {}
        for b in ("numpy", "numba"):
            set_backend(b)
            outs[b] = fn()
            times[b] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        for x, y in zip(_flat(outs["numpy"]), _flat(outs["numba"])):
            if not np.allclose(x, y, rtol=1e-9, atol=1e-12, equal_nan=True):
                raise SystemExit(f"{name}: backends disagree")
        print(f"{name:24s} {times['numpy']:11.4f} {times['numba']:11.4f} "
              f"{times['numpy'] / times['numba']:8.1f}x")
    set_backend("numba")


if __name__ == "__main__":
    main()
