import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from hfkit.geometry import second_fundamental
from hfkit.mse import mse_residual
from hfkit.surfaces import (CurveSamples, HelicoidModel, Region, RepresentationWarning,
                            WeierstrassAlpha, embeddedness_verdict, helicoid_mesh, make_surface,
                            weierstrass_curve, weierstrass_xy)


def test_helicoid_graph_four_turns():
    u, m = make_surface("helicoid", {"pitch": 1.0}, Region(1, 4, -4 * math.pi, 4 * math.pi, 9, 65))
    assert u.winding == pytest.approx(4.0)
    assert np.allclose(u.values, u.grid.mesh()[1], atol=0)
    assert m.n_vertices == 9 * 65


def test_plane_is_flat():
    u, _ = make_surface("plane", {}, Region())
    assert np.all(u.values == 0)
    assert np.all(second_fundamental(u).values == 0)


def test_catenoid_solves_equation():
    u, _ = make_surface("catenoid", {"neck": 1.0}, Region(1.5, 4, -math.pi, math.pi, 17, 33))
    assert np.allclose(u.values, np.arccosh(u.grid.mesh()[0]))
    assert mse_residual(u).sup() <= 1e-10


@pytest.mark.parametrize("kind,params", [("helicoid", {"pitch": 0.5}), ("helicoid", {"pitch": -2.0}),
                                         ("plane", {"slope": (0.3, -0.2)}),
                                         ("catenoid", {"neck": 0.7}),
                                         ("expr", {"expr": "2*theta"})])
def test_generated_surfaces_are_minimal(kind, params):
    u, _ = make_surface(kind, params, Region(1, 5, -2 * math.pi, 2 * math.pi, 17, 65))
    assert mse_residual(u).sup() <= 1e-10


def test_expression_derivatives_match_closed_form():
    u, _ = make_surface("expr", {"expr": "theta + rho**(-0.25)*sin(theta)"}, Region())
    rho, th = u.grid.mesh()
    d = u.analytic(rho, th)
    assert np.allclose(d.ut, 1 + rho**-0.25 * np.cos(th), atol=1e-14)
    assert np.allclose(d.ur, -0.25 * rho**-1.25 * np.sin(th), atol=1e-14)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        make_surface("helicoid", {"pitch": 0.0})
    with pytest.raises(ValueError):
        make_surface("catenoid", {"neck": -1.0})
    with pytest.raises(ValueError):
        make_surface("torus", {})


def test_mesh_only_with_warning():
    with pytest.warns(RepresentationWarning):
        u, m = make_surface("catenoid", {"neck": 1.0}, Region(0.5, 4))
    assert u is None and m.n_vertices > 0
    with pytest.warns(RepresentationWarning):
        u, m = make_surface("helicoid", {"pitch": 1.0}, Region(0, 3, ball=3.0))
    assert u is None
    assert np.linalg.norm(m.vertices, axis=1).max() <= 3.0 + 1e-9


# ------------------------------------------------------------- helicoid model


@given(st.floats(-4, 4), st.floats(-6, 6), st.floats(0.3, 3), st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_model_projection_roundtrip(s, t, a, rotvec):
    R = Rotation.from_rotvec(rotvec).as_matrix()
    model = HelicoidModel(a, R, np.array([1.0, -2.0, 0.5]))
    p = model.point(np.array([s]), np.array([t]))
    off = 0.05 * model.normal(np.array([s]), np.array([t]))
    s2, t2, d = model.project(p + off)
    assert np.allclose(model.point(s2, t2), p, atol=1e-8)
    assert d[0] == pytest.approx(0.05, abs=1e-8)


def test_model_rejects_bad_frames():
    with pytest.raises(ValueError):
        HelicoidModel(0.0)
    with pytest.raises(ValueError):
        HelicoidModel(1.0, rotation=np.diag([1.0, 1.0, 1.1]))


def test_model_curvature_closed_form():
    m = HelicoidModel(1.0)
    assert m.A2(0.0) == 2.0
    assert m.A2(1.0) == 0.5


def test_helicoid_mesh_normals_are_unit_and_oriented():
    m, params = helicoid_mesh(HelicoidModel(1.0), 2.0, -3.0, 3.0, 11, 21)
    assert np.allclose(np.linalg.norm(m.normals, axis=1), 1.0, atol=1e-12)
    assert np.allclose(m.A2, HelicoidModel(1.0).A2(params[:, 0]))
    assert np.all(m.edge_triangle_count <= 2)


# ----------------------------------------------------------- Weierstrass


def test_weierstrass_examples():
    x1, x2 = weierstrass_xy(WeierstrassAlpha(0.0, 1.0), np.array([1.0]))
    assert x1[0] == pytest.approx(0.0, abs=1e-15) and x2[0] == pytest.approx(math.sinh(1.0), rel=1e-15)
    t = np.linspace(0, 6, 13)
    x1, x2 = weierstrass_xy(WeierstrassAlpha(1.0, 0.0), t)
    assert np.allclose(x1, -np.cos(t), atol=1e-15) and np.allclose(x2, np.sin(t), atol=1e-15)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_weierstrass_at_zero(a1, a2):
    if not a1 * a1 + a2 * a2 > 0:
        with pytest.raises(ValueError):
            WeierstrassAlpha(a1, a2)
        return
    x1, x2 = weierstrass_xy(WeierstrassAlpha(a1, a2), np.array([0.0]))
    assert x1[0] == pytest.approx(-a1 / (a1 * a1 + a2 * a2), rel=1e-14, abs=1e-300)
    assert x2[0] == 0.0


@given(st.floats(-2, 2), st.floats(0.2, 2), st.floats(0.5, 4), st.floats(-3, 3))
def test_weierstrass_homothety(a1, a2, lam, t):
    p = np.array(weierstrass_xy(WeierstrassAlpha(a1, a2), np.array([t])))
    q = np.array(weierstrass_xy(WeierstrassAlpha(lam * a1, lam * a2), np.array([t / lam])))
    assert np.allclose(q, p / lam, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(p).max()))


def test_weierstrass_rejects_zero_alpha():
    with pytest.raises(ValueError):
        WeierstrassAlpha(0.0, 0.0)


def test_curve_samples_must_increase():
    with pytest.raises(ValueError):
        CurveSamples(np.array([0.0, 0.0, 1.0]), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        weierstrass_curve(WeierstrassAlpha(0, 1), (0, 1), 1)


def test_embeddedness_examples():
    line = weierstrass_curve(WeierstrassAlpha(0.0, 1.0), (-3, 3), 256)
    assert embeddedness_verdict(line, 1e-9).embedded
    circle = weierstrass_curve(WeierstrassAlpha(1.0, 0.0), (0, 4 * math.pi), 256)
    v = embeddedness_verdict(circle, 1e-9)
    assert not v.embedded
    t1, t2 = v.witness
    assert abs(abs(t2 - t1) - 2 * math.pi) < 0.1
    spiral = weierstrass_curve(WeierstrassAlpha(1.0, 1.0), (-6, 6), 4096)
    assert not embeddedness_verdict(spiral, 1e-9).embedded


def test_embeddedness_preconditions():
    c = weierstrass_curve(WeierstrassAlpha(0.0, 1.0), (-1, 1), 64)
    with pytest.raises(ValueError):
        embeddedness_verdict(c, 0.0)
    with pytest.raises(ValueError):
        embeddedness_verdict(weierstrass_curve(WeierstrassAlpha(0, 1), (-1, 1), 15), 1e-9)


def test_curve_csv_roundtrip():
    c = weierstrass_curve(WeierstrassAlpha(0.25, 1.0), (-1, 1), 17)
    rows = np.loadtxt(c.to_csv().splitlines(), delimiter=",", skiprows=1)
    assert np.array_equal(rows[:, 0], c.t) and np.array_equal(rows[:, 1:], c.points)
