import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from hfkit.geometry import (Cone, MeshPatch, MultiGraph, PolarGrid, PolarRect, cone_membership,
                            derivatives, graph_embed, second_fundamental, separation)
from hfkit.stencils import d1, d2, d1_matrix, d2_matrix
from hfkit.surfaces import HelicoidModel, helicoid_graph, helicoid_mesh

from conftest import grid, sampled


# -------------------------------------------------------------- stencils


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_stencils_exact_on_quadratics(a, b, c):
    x = np.linspace(-1.0, 2.0, 9)
    f = a * x**2 + b * x + c
    h = x[1] - x[0]
    assert np.allclose(d1(f, h), 2 * a * x + b, atol=1e-11)
    assert np.allclose(d2(f, h), 2 * a, atol=1e-9)
    assert np.allclose(d1_matrix(9, h) @ f, 2 * a * x + b, atol=1e-11)
    assert np.allclose(d2_matrix(9, h) @ f, 2 * a, atol=1e-9)


def test_stencil_too_coarse_names_minimum():
    with pytest.raises(ValueError, match="at least 4"):
        d1(np.zeros(3), 0.1)


# ----------------------------------------------------------------- types


def test_polar_rect_invariants():
    with pytest.raises(ValueError):
        PolarRect(0.0, 1.0, 0, 1)
    with pytest.raises(ValueError):
        PolarRect(2.0, 1.0, 0, 1)
    with pytest.raises(ValueError):
        PolarRect(1.0, 2.0, 1, 1)


def test_grid_minimum_and_truncation():
    with pytest.raises(ValueError, match="n_theta >= 8"):
        grid(1, 2, 0, 1, 4, 7)
    g = PolarGrid.build(PolarRect(1.0, math.inf, 0, 2 * math.pi), 8, 16, r_max=50.0)
    assert g.rect.r2 == 50.0 and g.truncated_from == math.inf
    assert g.to_dict()["truncated_from"] == "inf"


def test_geometric_grid_has_constant_ratio():
    g = grid(1, 64, 0, 1, 13, 8)
    r = g.rho
    assert np.allclose(r[1:] / r[:-1], 2.0 ** 0.5, rtol=1e-13)
    assert np.all(np.diff(g.theta) > 0)


def test_multigraph_rejects_bad_shapes_and_frames():
    g = grid(1, 2, 0, 1, 4, 8)
    with pytest.raises(ValueError):
        MultiGraph(g, np.zeros((4, 9)))
    with pytest.raises(ValueError):
        MultiGraph(g, np.zeros((4, 8)), rotation=2 * np.eye(3))


def test_mesh_patch_validates_normals():
    v = np.eye(3)
    with pytest.raises(ValueError, match="unit"):
        MeshPatch(v, np.array([[0, 1, 2]]), 2 * np.eye(3))
    with pytest.raises(ValueError, match="missing vertex"):
        MeshPatch(v, np.array([[0, 1, 3]]), np.eye(3))


# --------------------------------------------------------------- embedding


def test_embed_flat_annulus():
    g = grid(1, 2, 0, 2 * math.pi, 5, 17)
    m = graph_embed(sampled(g, lambda r, t: 0 * r))
    assert np.all(m.vertices[:, 2] == 0)
    assert np.allclose(np.hypot(m.vertices[:, 0], m.vertices[:, 1]).min(), 1.0)


def test_embed_helicoid_node():
    g = grid(1, 4, -math.pi, math.pi, 5, 9)
    m = graph_embed(sampled(g, lambda r, t: t))
    i = g.theta_index(math.pi)
    assert np.allclose(m.vertices[i], [-1.0, 0.0, math.pi], atol=1e-15)


def test_embed_two_turns_keeps_sheets_apart():
    g = grid(1, 2, -2 * math.pi, 2 * math.pi, 4, 17)
    m = graph_embed(sampled(g, lambda r, t: t))
    # theta and theta + 2 pi land over the same planar point at different heights
    v = m.vertices.reshape(4, 17, 3)
    assert np.allclose(v[:, 0, :2], v[:, 8, :2], atol=1e-12)
    assert np.allclose(v[:, 8, 2] - v[:, 0, 2], 2 * math.pi)
    assert len(np.unique(m.triangles)) == m.n_vertices


def test_embed_rejects_nonfinite():
    g = grid(1, 2, 0, 1, 4, 8)
    vals = np.zeros(g.shape)
    vals[2, 5] = np.nan
    with pytest.raises(ValueError, match=r"\(2, 5\)"):
        graph_embed(MultiGraph(g, vals))


@given(st.floats(-50, 50))
def test_embed_vertical_translation(c):
    g = grid(1, 3, 0, 4, 6, 9)
    u = sampled(g, lambda r, t: np.sin(t) / r)
    m0 = graph_embed(u)
    m1 = graph_embed(u.with_values(u.values + c))
    assert np.array_equal(m1.vertices[:, :2], m0.vertices[:, :2])
    assert np.array_equal(m1.vertices[:, 2], m0.vertices[:, 2] + c)


# ------------------------------------------------------------ derivatives


def test_derivatives_of_constant():
    g = grid(1, 3, 0, 2, 6, 9)
    gr, he = derivatives(sampled(g, lambda r, t: 0 * r + 3.0))
    assert np.all(gr.values == 0) and np.all(he.values == 0)


def test_derivatives_helicoid_closed_form():
    g = grid(1, 4, -math.pi, math.pi, 9, 33)
    gr, _ = derivatives(sampled(g, lambda r, t: t))
    i = g.rho_index(2.0)
    assert np.allclose(np.linalg.norm(gr.values[i], axis=-1), 0.5, atol=1e-12)
    rho, _ = g.mesh()
    assert np.allclose(np.linalg.norm(gr.values, axis=-1), 1 / rho, atol=1e-12)


def test_derivatives_tilted_plane():
    g = grid(1, 3, -math.pi, math.pi, 17, 65)
    gr, _ = derivatives(sampled(g, lambda r, t: r * np.cos(t)))
    err = np.abs(gr.values - np.array([1.0, 0.0])).max()
    assert err < 5e-3


def _grad_error(n):
    # u = sin(theta) / rho has |grad u| = rho^-2
    g = grid(1, 4, 0, 2 * math.pi, n, n)
    gr, _ = derivatives(sampled(g, lambda r, t: np.sin(t) / r))
    rho, _ = g.mesh()
    return np.abs(np.linalg.norm(gr.values, axis=-1) - rho**-2).max()


def test_derivatives_second_order():
    # u = a theta is differentiated exactly by the stencils (see
    # test_derivatives_helicoid_closed_form), so the order is measured on a
    # function with curvature in both directions
    e = [_grad_error(n) for n in (17, 33, 65)]
    ratios = [e[0] / e[1], e[1] / e[2]]
    assert all(3.5 <= q <= 4.5 for q in ratios), ratios


# ------------------------------------------------------------- separation


def test_separation_helicoid_and_periodic_invariance():
    g = grid(1, 3, -2 * math.pi, 2 * math.pi, 5, 33)
    w = separation(sampled(g, lambda r, t: t))
    assert np.allclose(w.values, 2 * math.pi, atol=1e-14)
    w2 = separation(sampled(g, lambda r, t: t + 0.1 * np.sin(t)))
    assert np.abs(w2.values - 2 * math.pi).max() <= 1e-12


@given(st.floats(-1, 1), st.integers(1, 3), st.floats(0, 6))
def test_separation_periodic_invariance_property(amp, k, phase):
    g = grid(1, 3, -2 * math.pi, 2 * math.pi, 5, 33)
    base = sampled(g, lambda r, t: t * r)
    pert = sampled(g, lambda r, t: t * r + amp * np.cos(k * t + phase) * r)
    assert np.abs(separation(base).values - separation(pert).values).max() <= 1e-12


def test_separation_zero_and_empty():
    g = grid(1, 3, -2 * math.pi, 2 * math.pi, 5, 33)
    assert np.all(separation(sampled(g, lambda r, t: 0 * r)).values == 0)
    g1 = grid(1, 3, 0, math.pi, 5, 17)
    assert separation(sampled(g1, lambda r, t: t)).is_empty


# --------------------------------------------------------------- curvature


def test_A2_plane_and_helicoid():
    g = grid(1, 4, -math.pi, math.pi, 9, 33)
    assert np.all(second_fundamental(sampled(g, lambda r, t: 0 * r)).values == 0)
    u = MultiGraph(g, g.mesh()[1], analytic=helicoid_graph(1.0))
    A2 = second_fundamental(u).values
    assert np.allclose(A2[0], 0.5, rtol=1e-14)


def test_A2_mesh_on_axis():
    m, params = helicoid_mesh(HelicoidModel(1.0), 2.0, -2.0, 2.0, 41, 81)
    A2 = second_fundamental(m)
    s = params[:, 0]
    axis = np.abs(s) < 1e-12
    assert np.allclose(A2[axis], 2.0, rtol=2e-2)


def test_A2_graph_and_mesh_cross_check():
    g = grid(1.5, 3, -math.pi, math.pi, 33, 129)
    u = MultiGraph(g, g.mesh()[1], analytic=helicoid_graph(1.0))
    exact = second_fundamental(u).values.reshape(-1)
    m = graph_embed(u)
    fitted = second_fundamental(m)
    # the 2-ring quadric is one-sided within two rings of the boundary
    inner = np.zeros(g.shape, bool)
    inner[2:-2, 2:-2] = True
    inner = inner.reshape(-1)
    assert np.abs(fitted[inner] - exact[inner]).max() / exact.max() < 2e-2


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_A2_rigid_invariance(rotvec, shift):
    m, _ = helicoid_mesh(HelicoidModel(1.0), 2.0, -2.0, 2.0, 13, 25)
    R = Rotation.from_rotvec(rotvec).as_matrix()
    a = second_fundamental(m)
    b = second_fundamental(m.transformed(R, shift))
    assert np.abs(a - b).max() <= 1e-8


def test_degenerate_triangle_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0.0]])
    n = np.tile([0, 0, 1.0], (4, 1))
    m = MeshPatch(v, np.array([[0, 1, 2], [0, 1, 3]]), n)
    with pytest.raises(ValueError, match="degenerate"):
        second_fundamental(m)


# ------------------------------------------------------------------ cones


def test_cone_examples():
    c = Cone((0.0, 0.0, 0.0), 1.0)
    assert cone_membership((0, 0, 0), c)
    assert not cone_membership((1, 0, 2), c)
    assert cone_membership((3, 4, 5), c)
    with pytest.raises(ValueError):
        Cone((0, 0, 0), 0.0)


@given(st.floats(0.1, 5), st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_cone_formula(delta, x, y, z):
    c = Cone((0.5, -0.5, 1.0), delta)
    p = np.array([x, y, z])
    d = p - np.array(c.vertex)
    assert cone_membership(p, c) == (d[2] ** 2 <= delta**2 * (d[0] ** 2 + d[1] ** 2))
