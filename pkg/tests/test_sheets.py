import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hfkit.geometry import MeshPatch, MultiGraph
from hfkit.sheets import (BlowUpPair, NotEmbeddedError, certify_sheet, decay_check,
                          detect_blowup_pairs, flatness_terms, region_E_membership)
from hfkit.surfaces import HelicoidModel, Region, helicoid_graph, helicoid_mesh, make_surface

from conftest import grid, sampled


def helicoid(r1, r2, turns, n_rho=33, n_theta=97, a=1.0):
    g = grid(r1, r2, -turns * math.pi, turns * math.pi, n_rho, n_theta)
    return MultiGraph(g, a * g.mesh()[1], analytic=helicoid_graph(a))


# --------------------------------------------------------------- flatness


def test_flatness_helicoid_at_rho_10():
    u = helicoid(1, 100, 3)
    fl = flatness_terms(u)
    g = fl.total.grid
    i = g.rho_index(10.0)
    assert g.rho[i] == pytest.approx(10.0)
    # |grad u| = 1/rho and rho |Hess u| = sqrt(2)/rho; w = 2 pi is constant
    assert np.allclose(fl.total.values[i], 0.1 * (1 + math.sqrt(2)), rtol=1e-12)
    assert fl.term_sup["grad_w"] == 0 and fl.term_sup["hess_w"] == 0


def test_flatness_sampled_matches_analytic():
    u = helicoid(1, 100, 3)
    a = flatness_terms(u).total.values
    b = flatness_terms(u, use_analytic=False).total.values
    assert np.abs(a - b)[1:-1].max() < 1e-8


def test_flatness_zero_graph_not_embedded():
    g = grid(1, 10, -2 * math.pi, 2 * math.pi, 9, 33)
    with pytest.raises(NotEmbeddedError) as exc:
        flatness_terms(sampled(g, lambda r, t: 0 * r))
    assert len(exc.value.nodes) > 0


def test_flatness_radial_correction_keeps_w():
    g = grid(4, 100, -2 * math.pi, 2 * math.pi, 33, 65)
    u = sampled(g, lambda r, t: t + 0.01 * r**-0.5)
    fl = flatness_terms(u)
    # w is still 2 pi, so the w-terms are round-off only and the u-terms carry the sup
    assert fl.term_sup["grad_w"] < 1e-10 and fl.term_sup["hess_w"] < 1e-8
    assert fl.term_sup["grad_u"] + fl.term_sup["rho_hess_u"] == pytest.approx(fl.sup, rel=1e-9)


def test_flatness_needs_overlap():
    g = grid(1, 10, 0, math.pi, 9, 33)
    with pytest.raises(ValueError, match="separation domain"):
        flatness_terms(sampled(g, lambda r, t: t))


def test_flatness_csv_columns():
    u = helicoid(1, 10, 2, 9, 65)
    fl = flatness_terms(u)
    rows = fl.to_csv().splitlines()
    assert rows[0] == "rho,theta,total,grad_u,rho_hess_u,grad_w,hess_w"
    assert len(rows) == fl.total.values.size + 1


# ---------------------------------------------------------- certificates


def test_certify_weak_helicoid_thresholds(helicoid_sheet):
    # the cone |theta| <= 0.1 rho needs rho >= 20 pi on two turns
    assert not certify_sheet(helicoid_sheet, 0.1, 2, scale=20).verdict
    cert = certify_sheet(helicoid_sheet, 0.1, 2, scale=63)
    assert cert.verdict, cert.reasons
    # first node at or beyond rho = 63 carries the gradient sup
    assert cert.checks["grad"]["value"] <= 1 / 63


def test_certify_weak_close_to_axis(helicoid_sheet):
    cert = certify_sheet(helicoid_sheet, 0.1, 2, scale=2)
    assert not cert.verdict
    assert any(r.startswith("grad") for r in cert.reasons)


def test_certify_plane():
    g = grid(1, 100, -2 * math.pi, 2 * math.pi, 17, 33)
    u = sampled(g, lambda r, t: 0 * r)
    cert = certify_sheet(u, 0.1, 2)
    assert not cert.verdict
    assert cert.reasons == ["not embedded as multigraph"]
    with pytest.raises(NotEmbeddedError):
        certify_sheet(u, 0.1, 2, kind="strong")


def test_certify_strong(helicoid_sheet):
    cert = certify_sheet(helicoid_sheet, 0.15, 2, kind="strong", scale=63)
    assert cert.verdict, cert.reasons
    assert cert.normalization["exponent"] == pytest.approx(-1.0, abs=1e-6)
    assert abs(cert.normalization["limit"]) <= 1e-3
    with pytest.raises(ValueError, match="1/\\(2 pi\\)"):
        certify_sheet(helicoid_sheet, 0.2, 2, kind="strong")


def test_certify_insufficient_domain(helicoid_sheet):
    with pytest.raises(ValueError, match="insufficient domain"):
        certify_sheet(helicoid_sheet, 0.1, 4)
    with pytest.raises(ValueError, match="insufficient domain"):
        certify_sheet(helicoid_sheet, 0.1, 2, scale=0.5)


@given(st.floats(0.1, 0.159))
def test_certify_monotone_in_epsilon(eps):
    u = helicoid(1, 100, 2, 33, 65)
    base = certify_sheet(u, 0.1, 2, scale=63)
    assert base.verdict
    assert certify_sheet(u, eps, 2, scale=63).verdict


def test_certify_perturbed_sheet(perturbed_sheet):
    cert = certify_sheet(perturbed_sheet, 0.1, 2, scale=63)
    assert cert.checks["residual"]["value"] <= 1e-8
    assert cert.verdict, cert.reasons


def test_certificate_invariant():
    from hfkit.sheets import SheetCertificate
    with pytest.raises(ValueError):
        SheetCertificate("weak", 0.1, 2, 1.0, np.zeros(3), {"grad": {"value": 2.0, "bound": 1.0}},
                         True, -1.0)


# ------------------------------------------------------------------ decay


def test_decay_helicoid_passes(helicoid_sheet):
    eps = 0.1
    start = eps ** (-12 / 7)
    ok, worst = decay_check(helicoid_sheet, eps, scale=start)
    assert ok and worst <= 1.0


def test_decay_slow_field_fails():
    g = grid(1, 1e6, -math.pi, math.pi, 61, 33)
    # |grad u| = rho^-1/4 along theta = 0
    u = sampled(g, lambda r, t: (4 / 3) * r**0.75)
    ok, worst = decay_check(u, 0.1)
    assert not ok and worst > 1


def test_decay_zero_epsilon():
    g = grid(1, 10, -math.pi, math.pi, 9, 17)
    assert decay_check(sampled(g, lambda r, t: 0 * r), 0.0) == (True, 0.0)
    ok, worst = decay_check(sampled(g, lambda r, t: t), 0.0)
    assert not ok and worst == math.inf


# --------------------------------------------------------------- blow-up


def test_blowup_axis(ball_mesh):
    rep = detect_blowup_pairs(ball_mesh, math.sqrt(2), within=3)
    assert len(rep) > 0
    for p in rep:
        assert math.hypot(p.y[0], p.y[1]) <= 1e-2
        assert p.s == pytest.approx(1.0, rel=1e-9)
    z = [p.y[2] for p in rep]
    assert z == sorted(z)


def test_blowup_plane_empty():
    m, _ = helicoid_mesh(HelicoidModel(1.0), 2.0, -1.0, 1.0, 9, 9)
    flat = MeshPatch(m.vertices * [1, 1, 0] + [0, 0, 0], m.triangles, np.tile([0, 0, 1.0], (81, 1)),
                     np.zeros(81))
    assert len(detect_blowup_pairs(flat, math.sqrt(2))) == 0


def test_blowup_large_C_discarded(helicoid_patch):
    rep = detect_blowup_pairs(helicoid_patch, 10.0)
    assert len(rep) == 0 and rep.discarded_exit > 0


def test_blowup_scale_equivariance(ball_mesh):
    a = detect_blowup_pairs(ball_mesh, math.sqrt(2), within=3)
    b = detect_blowup_pairs(ball_mesh.scaled(2.0), math.sqrt(2), within=6)
    assert len(a) == len(b)
    for p, q in zip(a, b):
        assert np.allclose(q.y, 2 * p.y, atol=1e-6) and q.s == pytest.approx(2 * p.s, rel=1e-6)
        assert q.C == p.C


def test_blowup_intrinsic_agrees_on_axis(ball_mesh):
    a = detect_blowup_pairs(ball_mesh, math.sqrt(2), within=2)
    b = detect_blowup_pairs(ball_mesh, math.sqrt(2), within=2, metric="intrinsic")
    assert [p.vertex for p in a] == [p.vertex for p in b]


def test_blowup_errors():
    m, _ = helicoid_mesh(HelicoidModel(1.0), 2.0, -1.0, 1.0, 9, 9)
    with pytest.raises(ValueError, match="A\\|\\^2"):
        detect_blowup_pairs(m.with_A2(None), 1.0)
    with pytest.raises(ValueError):
        detect_blowup_pairs(m, 0.0)
    with pytest.raises(ValueError, match="normalization"):
        BlowUpPair(np.zeros(3), 1.0, 1.0, 2.0)


# --------------------------------------------------------------- region E


@pytest.fixture(scope="module")
def u1():
    return helicoid(1, 10, 4, 19, 161)


def test_region_E_mid_sheet(u1):
    th = -0.7
    p = (3 * math.cos(th), 3 * math.sin(th), th + math.pi)
    m = region_E_membership(u1, p)
    assert m and m.reason == "between"


def test_region_E_on_outer_sheets(u1):
    th = -2 * math.pi + 0.4
    for t in (th - 2 * math.pi, th + 4 * math.pi):
        m = region_E_membership(u1, (2 * math.cos(th), 2 * math.sin(th), t))
        assert not m and m.reason.startswith("on-")
    below = region_E_membership(u1, (2 * math.cos(th), 2 * math.sin(th), th - 2 * math.pi - 1e-6))
    assert below.reason == "below-bottom-sheet"


def test_region_E_outside_annulus(u1):
    m = region_E_membership(u1, (0.5, 0.0, 0.0))
    assert not m and m.reason == "outside-annulus"


def test_region_E_requires_span():
    with pytest.raises(ValueError, match="cover"):
        region_E_membership(helicoid(1, 10, 2, 9, 33), (2.0, 0.0, 0.0))


# --------------------------------------------------------- spiral together


def test_helicoid_copies_spiral_together():
    u, _ = make_surface("helicoid", {"pitch": 1.0}, Region(1, 50, -2 * math.pi, 2 * math.pi, 17, 65))
    g = u.grid
    j0, j2 = g.theta_index(0.0), g.theta_index(2 * math.pi)
    u2 = u.values + math.pi
    assert np.all(u.values[:, j0] < u2[:, j0])
    assert np.all(u2[:, j0] < u.values[:, j2])
