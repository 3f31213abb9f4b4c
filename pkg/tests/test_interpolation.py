import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qrwd.core import Rectangle, hyperbolic_distance_H
from qrwd.interpolation import (Cell, CellPair, ConstructionError, CurvePair, OrientationViolation,
                                Phi2, Phi3, RhoMap, assert_orientation, build_G, build_linear_interp,
                                build_phi1, build_phi2, build_phi3, build_rho, compose_mu,
                                curve_constants, estimate_dilatation, k_of, piece_from_function,
                                theorem_constants, wirtinger)


def interp_piece(im):
    return piece_from_function("interp", im.at, im.source)


def test_linear_interp_identity():
    cp = CurvePair(lambda t: 1j * t, lambda t: 1 + 1j * t, 1.0, lambda t: 1j + 0 * t, lambda t: 1j + 0 * t)
    im = build_linear_interp(cp, 1.0)
    S, T = np.meshgrid(np.linspace(0, 1, 9), np.linspace(0, 1, 9))
    assert np.allclose(im(S, T), S + 1j * T)
    assert np.max(np.abs(im.mu(S, T))) < 1e-15
    assert im.mu_bound < 1e-6


def test_linear_interp_affine_case():
    cp = CurvePair(lambda t: 1j * t, lambda t: 2 + 1j * t, 1.0)
    th, vmin, vmax, lmin, lmax = curve_constants(cp)
    s0, r = theorem_constants(max(th, 1e-12), vmin, vmax, lmin, lmax)
    assert s0 == pytest.approx(2.0)
    im = build_linear_interp(cp, s0)
    S, T = np.meshgrid(np.linspace(0, 2, 9), np.linspace(0, 1, 9))
    assert np.allclose(im(S, T), S + 1j * T)
    assert estimate_dilatation(interp_piece(im), 64, seams=False)["sup_K"] == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("s0", [1 / math.sqrt(2), math.sqrt(2)])
def test_linear_interp_annulus_sector(s0):
    cp = CurvePair(lambda t: np.exp(1j * t), lambda t: 2 * np.exp(1j * t), math.pi / 2,
                   lambda t: 1j * np.exp(1j * t), lambda t: 2j * np.exp(1j * t))
    th, vmin, vmax, lmin, lmax = curve_constants(cp)
    assert th < 1e-12 and (vmin, vmax) == pytest.approx((1, 2)) and (lmin, lmax) == pytest.approx((1, 1))
    # radius of the hyperbolic disc about i holding s0 * gamma_j' / (gamma2 - gamma1)
    q = s0 * vmax / lmin
    r = 2 * math.atanh(abs((q - 1) / (q + 1)))
    im = build_linear_interp(cp, s0)
    rep = estimate_dilatation(interp_piece(im), 128, seams=False)
    assert rep["sup_mu"] <= math.tanh(r / 2) + 1e-6
    if s0 < 1:
        assert theorem_constants(1e-12, vmin, vmax, lmin, lmax)[0] == pytest.approx(s0)


def test_theorem_constants_examples():
    s0, r = theorem_constants(1e-12, 1, 1, 1, 1)
    assert s0 == 1 and r < 1e-11
    s0, r = theorem_constants(math.pi / 4, 1, 1, 1, 1)
    assert s0 == 1
    assert r == pytest.approx(2 * math.atanh(math.tan(math.pi / 8)), abs=1e-14)
    assert r == pytest.approx(0.881373587019543, abs=1e-13)
    # the same radius is the hyperbolic distance from i to i e^{-i pi/4}
    assert r == pytest.approx(hyperbolic_distance_H(1j, 1j * np.exp(-1j * math.pi / 4)), abs=1e-12)
    s0, r = theorem_constants(math.pi / 4, 2, 2, 1, 1)
    assert s0 == pytest.approx(0.5)
    assert r == pytest.approx(0.881373587019543, abs=1e-13)
    with pytest.raises(ValueError):
        theorem_constants(0.0, 1, 1, 1, 1)
    with pytest.raises(ValueError):
        theorem_constants(0.5, 2, 1, 1, 1)


def test_linear_interp_rejects_bad_curves():
    cp = CurvePair(lambda t: -1j * t, lambda t: 1 - 1j * t, 1.0)
    with pytest.raises(ConstructionError):
        build_linear_interp(cp, 1.0)
    cp = CurvePair(lambda t: 1j * t, lambda t: 1j * t, 1.0)
    with pytest.raises(ConstructionError):
        build_linear_interp(cp, 1.0)


def test_cell_pair_rejects_nonconvex():
    tgt = Cell.quad(0, 1, 1 + 1j, 1j)
    with pytest.raises(ConstructionError):
        CellPair((0, 1j, 1 + 1j, 1), tgt)


unit = st.floats(0.0, 1.0)


@given(unit, unit)
def test_cell_invert_round_trip(s, t):
    c = Cell.quad(0, 2 + 0.3j, 2.2 + 1.8j, -0.1 + 1.5j)
    s2, t2 = c.invert(c(s, t))
    assert (float(s2), float(t2)) == pytest.approx((s, t), abs=1e-10)


@given(st.floats(0, 0.95), st.floats(-math.pi, math.pi))
def test_compose_mu_self_is_zero(a, th):
    m = a * np.exp(1j * th)
    assert compose_mu(m, m) == pytest.approx(0.0, abs=1e-12)
    assert k_of(a) >= 1


# --- pieces ---------------------------------------------------------------------------

@pytest.mark.parametrize("d", [1, 2, 5])
def test_phi1_is_a_homeomorphism_onto_omega(d):
    p = build_phi1(d).meta["map"]
    L, R = p.L, p.R
    x = (np.arange(60) + 0.5) / 60 * L
    q = (x[None, :] + 1j * x[:, None]).ravel()
    z = p(q)
    assert np.all(np.abs(z) >= R - 1e-9)
    assert np.all((z.real >= -1e-9) & (z.real <= L + 1e-9) & (z.imag >= -1e-9) & (z.imag <= L + 1e-9))
    back, _ = p.inverse(z)
    assert np.max(np.abs(back - q)) < 1e-9
    # corner and arc rules: (0,0) -> R, the left edge -> the segment above iR
    assert p(np.array([0j]))[0] == pytest.approx(R)
    assert p(np.array([1j * L]))[0] == pytest.approx(1j * L)


@pytest.mark.parametrize("d", [1, 2, 3, 6])
def test_phi3_boundary_rules(d):
    p = Phi3(d)
    t = np.linspace(0, p.top, 50)
    top = (1 - 0) * p.y_d
    left = 1j * np.linspace(0, top, 50)
    assert np.allclose(np.abs(p(left)), 1.0)
    right = 1 + 1j * t
    assert np.max(np.abs(p(right) - 2 * np.cosh(right))) < 1e-12
    bottom = np.linspace(0, 1, 50) + 0j
    assert np.all(np.abs(p(bottom).imag) < 1e-12)


@pytest.mark.parametrize("d", [1, 2, 3, 8])
def test_phi2_boundary_rules(d):
    p = Phi2(d)
    v = {k: val + 1j * p.shift for k, val in p.vertices.items()}
    u = np.linspace(0, 1, 40)
    for a, b in (("b", "c"), ("c", "e"), ("e", "m")):
        z = v[a] + u * (v[b] - v[a])
        assert np.max(np.abs(p(z) - 2 * np.cosh(z))) < 1e-9 * np.max(np.abs(2 * np.cosh(z)))
    z = v["a"] + u * (v["m"] - v["a"])
    assert np.max(np.abs(p(z) - np.exp(1j * d * math.pi * z.imag / p.R))) < 1e-9


@pytest.mark.parametrize("d", [1, 2, 3])
def test_pieces_declared_bounds_match_estimates(d):
    for build in (build_phi1, build_phi2, build_phi3):
        piece = build(d)
        rep = assert_orientation(estimate_dilatation(piece, 128))
        assert rep["sup_K"] <= piece.declared_dilatation_bound * 1.02
        assert rep["seam_jump"] < 1e-6


def test_g_boundary_and_symmetry():
    for d in (1, 3):
        g = build_G(d).meta["map"]
        bd = Rectangle(0j, g.L, g.L).boundary(2000)
        assert np.max(np.abs(g(bd) - 2 * np.cosh(bd)) / np.abs(2 * np.cosh(bd))) < 1e-9
        th = np.linspace(0, 2 * math.pi, 400)
        zc = g.R * (1 + 1e-12) * np.exp(1j * th)
        assert np.max(np.abs(g(zc) - (zc / g.R) ** (2 * d))) < 1e-9
        assert g(np.array([0j]))[0] == 0


@given(st.floats(-18.8, 18.8), st.floats(-18.8, 18.8))
def test_g_even_and_real_symmetric(x, y):
    g = build_G(3).meta["map"]
    z = np.array([complex(x, y)])
    assert g(-z)[0] == g(z)[0]
    w = g(z)[0]
    assert abs(g(np.conj(z))[0] - np.conj(w)) <= 1e-14 * (1 + abs(w))


def test_g_dilatation_d3_finite():
    piece = build_G(3)
    rep = estimate_dilatation(piece, 256)
    diam = 2 * math.sqrt(2) * piece.meta["map"].L
    assert math.isfinite(rep["sup_K"]) and rep["orientation_violations"] == 0
    assert rep["seam_jump"] < 1e-6 * diam
    assert rep["sup_K"] <= piece.declared_dilatation_bound * 1.02


# --- rho ------------------------------------------------------------------------------

@pytest.mark.parametrize("w", [0.3 + 0.2j, -0.5j, 0.6])
def test_rho_rules(w):
    rho = RhoMap(w)
    th = np.linspace(0, 2 * math.pi, 200)
    circ = np.exp(1j * th)
    assert np.max(np.abs(rho(circ) - circ)) < 1e-10
    small = 0.125 * np.sqrt(np.linspace(0, 1, 50))[:, None] * circ[None, :]
    assert np.max(np.abs(rho(small) - (small + w))) < 1e-10


def test_rho_mu_matches_finite_differences():
    rho = RhoMap(0.4 - 0.1j)
    z = 0.5 * np.exp(1j * np.linspace(0, 6, 30))
    fz, fzb = wirtinger(rho, z, 1e-5)
    assert np.allclose(fzb / fz, rho.mu(z), atol=1e-8)
    rep = estimate_dilatation(build_rho(0.4 - 0.1j), 256)
    assert rep["sup_K"] <= rho.sup_k() * (1 + 1e-6)
    assert rep["sup_K"] >= rho.sup_k() * 0.95


def test_rho_rejects_large_w():
    with pytest.raises(ValueError):
        RhoMap(0.75)


# --- estimator ------------------------------------------------------------------------

def test_estimator_identity_and_constant_mu():
    box = Rectangle(0j, 1.0, 1.0)
    ident = piece_from_function("id", lambda z: z, box)
    assert estimate_dilatation(ident, 64)["sup_K"] == pytest.approx(1.0, abs=1e-9)
    aff = piece_from_function("aff", lambda z: z + 0.5 * np.conj(z), box)
    assert estimate_dilatation(aff, 64)["sup_K"] == pytest.approx(3.0, abs=1e-6)


def test_estimator_flags_orientation_reversal():
    rep = estimate_dilatation(piece_from_function("conj", np.conj, Rectangle(0j, 1.0, 1.0)), 64)
    assert rep["orientation_violations"] > 0
    with pytest.raises(OrientationViolation):
        assert_orientation(rep)
    with pytest.raises(ValueError):
        estimate_dilatation(piece_from_function("id", lambda z: z, Rectangle(0j, 1.0, 1.0)), 16)
