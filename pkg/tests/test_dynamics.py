import numpy as np
import pytest

from qrwd.base_map import g_eval
from qrwd.core import Rectangle
from qrwd.dynamics import (M_DEPTH, SHOOT_CENTER, SHOOT_RADIUS, ToyConfig, ToyInstance, center_chain,
                           centers, containment_suite, escape_time_field, fixed_point_residual,
                           iterate_orbit, koebe_check, oscillation_waypoints, real_line_deviation,
                           shoot)
from qrwd.qrmap import ParameterSequence

# 30-digit acosh(z/2) applied three times to i h_n for the fixture heights
IDENTITY_CENTERS = {1: 0.30467305864980126 + 0.9077515966893965j,
                    2: 0.26103665058974773 + 0.6306410444645705j,
                    3: 0.26482151106818796 + 0.5544372661818587j}


@pytest.fixture(scope="module")
def identity_instance(toy_cfg, toy_params):
    return ToyInstance(toy_cfg, toy_params, mu_scale=0)


def test_depth_is_three(toy_instance):
    assert M_DEPTH == 3 and toy_instance.M == 3


def test_identity_phi_centers(identity_instance):
    cs = centers(identity_instance)
    for n, ref in IDENTITY_CENTERS.items():
        assert cs[n] == pytest.approx(ref, abs=1e-13)


def test_identity_phi_containment(identity_instance):
    assert containment_suite(identity_instance, 200)["pass"]


def test_center_chain_recursion(toy_instance):
    for n in toy_instance.schedule.indices:
        ch = center_chain(n, toy_instance)
        assert max(ch.residuals) < 1e-9
        assert ch.in_Q
        # g undoes each pullback step, and phi carries hat_c to c
        assert g_eval(ch.hat_c[0]) == pytest.approx(complex(toy_instance.phi(1j * toy_instance.h(n))), abs=1e-9)
        for hat, c in zip(ch.hat_c, ch.c):
            assert complex(toy_instance.phi(hat)) == c


def test_containment_and_negative_control(toy_instance):
    rep = containment_suite(toy_instance, 1000)
    assert rep["pass"]
    assert all(r > 0 for r in rep["Rprime"].values())
    assert not containment_suite(toy_instance, 200, shrink=0.1)["pass"]


def test_terminal_center_lies_in_shooting_disc(toy_instance):
    c = center_chain(toy_instance.N, toy_instance).c_n
    assert abs(c - SHOOT_CENTER) < SHOOT_RADIUS


def test_fixture_is_a_fixed_point(toy_instance):
    cs = centers(toy_instance)
    for n in range(toy_instance.params.N, toy_instance.params.T + 1):
        if n + 1 in cs:
            assert abs(toy_instance.params.get(n) - cs[n + 1]) < 1e-6


@pytest.mark.parametrize("n", [1, 2, 3])
def test_koebe_quarter_bound(toy_instance, n):
    assert koebe_check(toy_instance, n)["pass"]


def test_oscillation_waypoints(toy_instance):
    for n in (2, 3):
        rep = oscillation_waypoints(toy_instance, n)
        assert rep["visits_disc"] and rep["returns_near_w"]


def test_shoot_degenerate_zero_mu(toy_cfg):
    res = shoot(toy_cfg, mu_scale=0)
    assert res["converged"] and res["iterations"] <= 2
    assert fixed_point_residual(toy_cfg, res["w"], mu_scale=0) == 0
    assert res["w"].w == pytest.approx([IDENTITY_CENTERS[2], IDENTITY_CENTERS[3]], abs=1e-13)


def test_shoot_needs_two_squares():
    with pytest.raises(ValueError):
        shoot(ToyConfig(d=(2,), h=(10 * np.pi,)), mu_scale=0)


def test_identity_limit_is_linear(toy_cfg):
    w = tuple(IDENTITY_CENTERS[n] for n in (2, 3))
    params = ParameterSequence(w, 1, 0.5)
    dev = {}
    for s in (1.0, 0.5, 0.25):
        cs = centers(ToyInstance(toy_cfg, params, mu_scale=s))
        dev[s] = max(abs(cs[n] - IDENTITY_CENTERS[n]) for n in cs)
    assert dev[0.25] < dev[0.5] < dev[1.0] < 1e-2
    assert 1.5 < dev[0.5] / dev[0.25] < 2.5
    assert 1.5 < dev[1.0] / dev[0.5] < 2.5


def test_iterate_orbit_examples():
    g = lambda z: 2 * np.cosh(z)
    rec = iterate_orbit(g, 3.0, bailout=1e3)
    assert rec.classification == "escaping" and rec.escape_index <= 3
    assert rec.points[1] == pytest.approx(20.135323991555532)
    rec = iterate_orbit(lambda z: z / 2, 1.0, max_iter=20)
    assert rec.classification == "bounded"
    rec = iterate_orbit(lambda z: z + 1, 0.0, window=Rectangle(0j, 3.0, 3.0))
    assert rec.classification == "undecided" and rec.flags == ["left window"]
    rec = iterate_orbit(lambda z: np.exp(z), 800.0)
    assert rec.classification == "escaping"


def test_escape_time_field():
    g = lambda z: 2 * np.cosh(z)
    win = Rectangle(3 + 0j, 0.5, 0.5)
    a = escape_time_field(g, win, (8, 8), 20, 1e3)
    assert a.shape == (8, 8) and a.max() <= 3 and a.min() >= 1
    b = escape_time_field(g, win, (8, 8), 20, 1e3)
    assert np.array_equal(a, b)
    inner = escape_time_field(lambda z: z / 2, Rectangle(0j, 1.0, 1.0), (4, 4), 10)
    assert np.all(inner == -1)


def test_escape_time_rows_run_top_to_bottom():
    f = escape_time_field(lambda z: np.where(z.imag > 0, 1e6, 0), Rectangle(0j, 1.0, 1.0), (2, 2), 3)
    assert list(f[:, 0]) == [1, -1]


def test_real_line_deviation_identity(identity_instance):
    assert real_line_deviation(identity_instance.phi) < 1e-15
