import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from hfkit import backend, kernels, set_backend
from hfkit._accel import NUMBA_AVAILABLE
from hfkit.geometry import tangent_basis
from hfkit.surfaces import HelicoidModel, WeierstrassAlpha, helicoid_mesh, weierstrass_curve

ROOT = Path(__file__).resolve().parent.parent

pytestmark = pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")


def both(fn):
    """Run ``fn`` under each backend and return the two results."""
    prev = backend()
    try:
        out = {}
        for b in ("numpy", "numba"):
            set_backend(b)
            out[b] = fn()
        return out["numpy"], out["numba"]
    finally:
        set_backend(prev)


def close(a, b, rtol=1e-9, atol=1e-12):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(np.asarray(x, float), np.asarray(y, float), rtol=rtol, atol=atol,
                           equal_nan=True) for x, y in zip(a, b))


@pytest.fixture(scope="module")
def mesh():
    m, _ = helicoid_mesh(HelicoidModel(1.0), 3.0, -math.pi, math.pi, 21, 41)
    return m


def test_quadric_fit_agrees(mesh):
    ptr, idx = mesh.ring(2)
    T1, T2 = tangent_basis(mesh.normals)
    a, b = both(lambda: kernels.quadric_fit(mesh.vertices, mesh.normals, T1, T2, ptr, idx))
    assert close(a, b)


def test_segment_distance_agrees():
    for alpha in ((0.0, 1.0), (1.0, 1.0), (0.25, 1.0)):
        c = weierstrass_curve(WeierstrassAlpha(*alpha), (-6, 6), 512)
        a, b = both(lambda: kernels.segment_min_distance(c.points))
        assert close(a, b)


def test_ball_sup_agrees(mesh):
    A2 = mesh.A2
    cand = np.flatnonzero(A2 >= 0.5 * A2.max())
    radii = np.sqrt(2.0) / np.sqrt(A2[cand])
    a, b = both(lambda: kernels.ball_sup(mesh.vertices, A2, mesh.components, cand, radii,
                                         mesh.boundary_vertices))
    assert close(a, b)


def test_project_helicoid_agrees():
    P = np.random.default_rng(1).normal(size=(500, 3)) * 3
    a, b = both(lambda: kernels.project_helicoid(P, 1.3))
    assert close(a, b, rtol=1e-8, atol=1e-10)


def test_ray_hits_agree(mesh):
    tri = mesh.triangles
    A, B, C = (mesh.vertices[tri[:, k]] for k in range(3))
    k = 30
    O = mesh.vertices[:k] - 0.5 * mesh.normals[:k]
    D = mesh.normals[:k]
    ptr = np.arange(0, k * len(tri) + 1, len(tri), dtype=np.int64)
    idx = np.tile(np.arange(len(tri), dtype=np.int64), k)
    a, b = both(lambda: kernels.ray_hits(O, D, A, B, C, ptr, idx, 2.0))
    assert close(a, b)


def test_set_backend_validates():
    with pytest.raises(ValueError):
        set_backend("fortran")
    prev = set_backend("numpy")
    assert backend() == "numpy"
    set_backend(prev)


def _env(**extra):
    env = dict(os.environ)
    env.update(extra)
    return env


def test_env_disables_numba():
    code = "import hfkit; print(hfkit.backend())"
    r = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                       env=_env(HF_NO_NUMBA="1"))
    assert r.stdout.strip() == "numpy", r.stderr


def test_thread_cap():
    code = "import hfkit, numba; print(numba.get_num_threads())"
    r = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                       env=_env(HF_THREADS="1"))
    assert r.stdout.strip() == "1", r.stderr


def test_benchmark_quick():
    r = subprocess.run([sys.executable, str(ROOT / "benchmarks" / "bench_kernels.py"), "--quick",
                        "--repeat", "1"], capture_output=True, text=True, timeout=600)
    assert r.returncode == 0, r.stderr
    assert "ray_hits" in r.stdout
