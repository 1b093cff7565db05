import math
import sys
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hfkit import mse
from hfkit.geometry import MultiGraph, PolarGrid, PolarRect, graph_embed
from hfkit.surfaces import HelicoidModel, Region, helicoid_mesh, make_surface

settings.register_profile("hf", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow,
                                                 HealthCheck.function_scoped_fixture])
settings.load_profile("hf")


def grid(r1, r2, t1, t2, n_rho, n_theta, geometric=True):
    return PolarGrid.build(PolarRect(r1, r2, t1, t2), n_rho, n_theta, geometric)


def sampled(g, func):
    """MultiGraph of ``func(rho, theta)`` with no closed form attached."""
    rho, theta = g.mesh()
    return MultiGraph(g, func(rho, theta))


@pytest.fixture(scope="session")
def helicoid_sheet():
    """u = theta on [1, 100] x [-3 pi, 3 pi], closed form attached."""
    u, _ = make_surface("helicoid", {"pitch": 1.0},
                        Region(1, 100, -3 * math.pi, 3 * math.pi, 49, 97))
    return u


@pytest.fixture(scope="session")
def perturbed_sheet(helicoid_sheet):
    """Solver output for the helicoid plus 0.05 sin(theta) on the outer edge."""
    rep = mse.perturb_and_solve(helicoid_sheet, {"outer": lambda r, t: 0.05 * np.sin(t)})
    assert rep.converged
    return rep.solution


@pytest.fixture(scope="session")
def perturbed_small(helicoid_sheet):
    rep = mse.perturb_and_solve(helicoid_sheet, {"outer": lambda r, t: 0.01 * np.sin(t)})
    assert rep.converged
    return rep.solution


@pytest.fixture(scope="session")
def ball_mesh():
    """Helicoid a=1 clipped to the ball of radius 6 (reaches the axis)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, m = make_surface("helicoid", {"pitch": 1.0},
                            Region(0, 6, -2 * math.pi, 2 * math.pi, 61, 121, ball=6.0))
    return m


@pytest.fixture(scope="session")
def helicoid_patch():
    m, _ = helicoid_mesh(HelicoidModel(1.0), 3.0, -3.0, 3.0, 31, 61)
    return m


@pytest.fixture(scope="session")
def perturbed_mesh(perturbed_small):
    return graph_embed(perturbed_small)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance PASS/FAIL lines after the run (they are captured otherwise)."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
