"""End-to-end acceptance checks, one criterion per marker; a summary table prints at the end of the run."""
import json
import math
import time

import numpy as np
import pytest

from qrwd.base_map import build_schedule, factorial_domination, radius_for, reference_orbit, verify_growth
from qrwd.beltrami import (constant_mu_field, disc_constant_field, disc_constant_map, radial_field,
                           radial_map, solve_mrmt)
from qrwd.cli import main, matching_identity
from qrwd.core import Rectangle
from qrwd.dynamics import (ToyConfig, ToyInstance, fixed_point_residual, iterate_orbit,
                           real_line_deviation, shoot, verify_inclusions)
from qrwd.estimates import (DiscFamily, case1_bound, case2_bound, disc_pole_integral, inclusion_sweep,
                            inner_radius_log, key_inequality_terms, random_case_config)
from qrwd.interpolation import (CurvePair, InterpolationMap, RhoMap, build_G, build_rho,
                                curve_constants, estimate_dilatation, piece_from_function,
                                theorem_constants, wirtinger)
from qrwd.qrmap import (ParameterSequence, QRMap, check_squares_disjoint, local_degree, max_modulus,
                        multi_count, multi_heights, seam_continuity, support_regions)

criterion = pytest.mark.criterion


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s, budget {self.seconds}s"


def fixture_params(fx):
    return ParameterSequence(tuple(complex(a, b) for a, b in fx["w_star"]), 1, 0.5)


# 1 ------------------------------------------------------------------------------------

@criterion(1, "matching identity for the two cosh-power definitions")
def test_matching_identity():
    with Budget(1):
        for d in range(1, 51):
            R = radius_for(d)
            assert R == pytest.approx((d - 1 / 3) * math.pi, rel=1e-15)
            assert abs(2 * np.cosh(1j * R) - (-1) ** d) < 1e-10
            assert abs((1j * R / R) ** (2 * d) - (-1) ** d) < 1e-12
        assert matching_identity(50)["pass"]


# 2 ------------------------------------------------------------------------------------

@criterion(2, "growth inequalities and factorial domination")
def test_growth_suite():
    with Budget(1):
        rep = verify_growth(build_schedule(11), range(3, 11))
        assert [r["n"] for r in rep["rows"]] == list(range(3, 11))
        for r in rep["rows"]:
            assert all(r[k] for k in ("x_growth", "radius_ratio", "height_ratio", "spacing")), r
        dom = factorial_domination(range(1, 11))
        assert sorted(dom) == list(range(1, 11)) and all(dom.values())


# 3 ------------------------------------------------------------------------------------

def random_curve_pair(rng):
    t0, L = rng.uniform(0.5, 2.0, 2)
    v1, v2 = rng.uniform(0.5, 2, 2)
    a1, a2 = rng.uniform(-0.1, 0.1, 2)
    k1, k2 = rng.uniform(0.5, 3, 2)
    b1, b2 = rng.uniform(-0.2, 0.2, 2)
    return CurvePair(lambda t: a1 * np.sin(k1 * t) + 1j * (v1 * t + b1 * t * t),
                     lambda t: L + a2 * np.sin(k2 * t) + 1j * (v2 * t + b2 * t * t), t0,
                     lambda t: a1 * k1 * np.cos(k1 * t) + 1j * (v1 + 2 * b1 * t),
                     lambda t: a2 * k2 * np.cos(k2 * t) + 1j * (v2 + 2 * b2 * t))


@criterion(3, "linear interpolation dilatation bound on random curve pairs")
def test_linear_interpolation_bound():
    rng = np.random.default_rng(0)
    with Budget(10):
        for _ in range(20):
            cp = random_curve_pair(rng)
            th, vmin, vmax, lmin, lmax = curve_constants(cp, 20001)
            s0, r = theorem_constants(th, vmin, vmax, lmin, lmax)
            im = InterpolationMap(cp, s0, r)
            n = 128
            S, T = np.meshgrid((np.arange(n) + 0.5) / n * s0, (np.arange(n) + 0.5) / n * cp.t0)
            bound = math.tanh(r / 2) + 1e-6
            assert np.abs(im.mu(S, T)).max() <= bound
            fd = estimate_dilatation(piece_from_function("interp", im.at, im.source), n, seams=False)
            assert fd["sup_mu"] <= bound


# 4 ------------------------------------------------------------------------------------

@criterion(4, "cosh-power interpolation G for d = 1..8")
def test_cosh_power_interpolation():
    sup_k = {}
    with Budget(120):
        for d in range(1, 9):
            piece = build_G(d)
            g = piece.meta["map"]
            bd = Rectangle(0j, g.L, g.L).boundary(4000)
            ref = 2 * np.cosh(bd)
            assert np.max(np.abs(g(bd) - ref) / np.abs(ref)) < 1e-9
            zc = g.R * (1 + 1e-13) * np.exp(2j * np.pi * np.arange(4000) / 4000)
            assert np.max(np.abs(g(zc) - (zc / g.R) ** (2 * d))) < 1e-9
            rng = np.random.default_rng(d)
            z = rng.uniform(-g.L, g.L, 1000) + 1j * rng.uniform(-g.L, g.L, 1000)
            w = g(z)
            assert np.max(np.abs(g(-z) - w)) <= 1e-12 * np.max(np.abs(w))
            assert np.max(np.abs(g(np.conj(z)) - np.conj(w))) <= 1e-12 * np.max(np.abs(w))
            rep = estimate_dilatation(piece, 512)
            assert rep["orientation_violations"] == 0
            assert rep["seam_jump"] < 1e-6
            assert math.isfinite(rep["sup_K"])
            sup_k[d] = rep["sup_K"]
    assert max(sup_k.values()) <= 2 * max(sup_k[d] for d in (1, 2, 3))


# 5 ------------------------------------------------------------------------------------

@criterion(5, "shift map rho_w on a 5x5 parameter grid")
def test_shift_map_grid():
    th = np.exp(2j * np.pi * np.arange(512) / 512)
    small = 0.125 * np.sqrt(np.linspace(0, 1, 20))[:, None] * th[None, :]
    sup_k = []
    with Budget(30):
        for a in np.linspace(-0.49, 0.49, 5):
            for b in np.linspace(-0.49, 0.49, 5):
                w = complex(a, b)
                assert abs(w) < 0.7
                rho = RhoMap(w)
                assert np.max(np.abs(rho(th) - th)) < 1e-10
                assert np.max(np.abs(rho(small) - (small + w))) < 1e-10
                rep = estimate_dilatation(build_rho(w), 256)
                assert rep["orientation_violations"] == 0
                sup_k.append(rep["sup_K"])
    assert max(sup_k) / min(sup_k) - 1 < 0.5, f"sup K ranges over [{min(sup_k):.3f}, {max(sup_k):.3f}]"


# 6 ------------------------------------------------------------------------------------

@criterion(6, "disc pole integral bound")
def test_disc_pole_bound():
    rng = np.random.default_rng(6)
    with Budget(30):
        for _ in range(100):
            alpha = complex(*rng.normal(size=2) * 3)
            beta = complex(*rng.normal(size=2) * 3)
            r = float(rng.uniform(0.05, 5))
            assert disc_pole_integral(alpha, r, beta) <= 2 * math.pi * r * (1 + 1e-3)
        for r in (0.1, 1.0, 7.0):
            c = complex(*rng.normal(size=2))
            assert disc_pole_integral(c, r, c) == pytest.approx(2 * math.pi * r, rel=1e-3)


# 7 ------------------------------------------------------------------------------------

@criterion(7, "key inequality case bounds")
def test_key_inequality_cases():
    rng = np.random.default_rng(7)
    with Budget(60):
        for case, bound in ((1, case1_bound), (2, case2_bound)):
            for _ in range(50):
                beta, gamma, zeta, r = random_case_config(rng, case)
                val = key_inequality_terms(0j, beta, gamma, DiscFamily.of([(zeta, r)]))[0]
                assert val <= bound(zeta, r), (case, beta, gamma, zeta, r)


# 8 ------------------------------------------------------------------------------------

@criterion(8, "Beltrami solver against exact oracles")
def test_beltrami_solver():
    box = Rectangle(0j, 2.0, 2.0)
    with Budget(120):
        phi = solve_mrmt(constant_mu_field(0, box, (256, 256)))
        assert phi.sup_deviation() < 1e-12
        for label, field, exact in (
                ("disc", lambda n: disc_constant_field(0.2, box, (n, n)), lambda z: disc_constant_map(z, 0.2)),
                ("radial", lambda n: radial_field(1.5, box, (n, n)), lambda z: radial_map(z, 1.5))):
            err = {}
            for n in (512, 1024):
                phi = solve_mrmt(field(n))
                assert phi(0j) == 0 and phi(1 + 0j) == 1
                err[n] = float(np.max(np.abs(phi.values - exact(phi.nodes()))))
            # the support radius is 1 in both oracles
            assert err[512] < 0.02, (label, err)
            assert err[512] / err[1024] >= 1.5, (label, err)


# 9 ------------------------------------------------------------------------------------

@criterion(9, "quasiregular map assembly")
def test_qr_assembly(toy_cfg, fixture_data):
    s = toy_cfg.schedule()
    p = fixture_params(fixture_data)
    with Budget(120):
        for variant in ("even", "symmetric"):
            rep = seam_continuity(QRMap(s, p, variant), 256)
            assert rep["crossings"] > 0 and rep["max_relative_jump"] < 1e-8
        m = QRMap(s, p)
        rng = np.random.default_rng(9)
        box = m.bounding_box()
        z = rng.uniform(box.x0, box.x1, 20000) + 1j * rng.uniform(box.y0, box.y1, 20000)
        assert np.array_equal(m(-z), m(z))
        # holomorphic outside the support: keep stencils clear of it, and stay R/4 away from
        # the critical points, where f_z vanishes to order 2d - 1 and differences lose all digits
        h = 1e-4
        near = m.support_mask(z)
        for dz in (h, -h, 1j * h, -1j * h):
            near |= m.support_mask(z + 2 * dz)
        for sq in m.squares:
            near |= np.abs(z - sq.center) < sq.R / 4
        out = z[~near]
        fz, fzb = wirtinger(m, out, h)
        assert out.size > 10000
        assert np.max(np.abs(fzb / fz)) < 1e-6
        assert len(support_regions(s)) == 2 * len(s.entries)
        for e in s.entries:
            assert e.h_val > 4 * e.d_val * math.pi
            assert local_degree(m, e.n) == 2 * e.d_val
        top = max(abs(sq.center) + sq.half * math.sqrt(2) for sq in m.squares)
        for r in top + np.array([1.0, 10.0, 50.0, 200.0]):
            assert max_modulus(r, m) == pytest.approx(2 * math.cosh(r), rel=1e-9)


# 10 ------------------------------------------------------------------------------------

@criterion(10, "inner radius ledger and inclusion sweep")
def test_inclusion_ledger():
    with Budget(1):
        orbit = reference_orbit(11)
        for n in range(1, 11):
            lg = inner_radius_log(n, 1.0, orbit)
            hand = -(n * 1.0 + sum(orbit[j] for j in range(1, n)) + orbit[0] + orbit[n - 1])
            assert lg == hand or (lg - hand).sign == 0
        s = build_schedule(11)
        n1 = {C5: inclusion_sweep(C5, s)["N1"] for C5 in (1.0, 1e2, 1e4)}
        assert set(n1.values()) == {3}


# 11 ------------------------------------------------------------------------------------

@criterion(11, "shooting on the bundled fixture from two starts")
def test_shooting(toy_cfg, fixture_data):
    with Budget(600):
        runs = []
        for key in ("w_start", "w_start_alt"):
            w0 = [complex(a, b) for a, b in fixture_data[key]]
            res = shoot(toy_cfg, w0, tol=1e-6, max_iter=30)
            assert res["converged"] and res["contraction"] < 1
            assert fixed_point_residual(toy_cfg, res["w"]) < 1e-2
            runs.append(np.array(res["w"].w))
        assert np.max(np.abs(runs[0] - runs[1])) < 1e-2
        assert np.max(np.abs(runs[0] - np.array(fixture_params(fixture_data).w))) < 1e-2


# 12 ------------------------------------------------------------------------------------

@criterion(12, "post-shooting inclusions")
def test_inclusions(toy_instance):
    with Budget(120):
        rep = verify_inclusions(toy_instance)
        rows = {r["n"]: r for r in rep["rows"]}
        assert sorted(rows) == [1, 2]
        for r in rows.values():
            assert r["image_margin"] > 0, r
            assert r["inclusion_margin"] > 0, r


@criterion(12, "post-shooting inclusions")
def test_inclusions_negative_control():
    with Budget(120):
        cfg = ToyConfig(d=(1, 1, 1), h=None)
        inst = ToyInstance(cfg, ParameterSequence((0.5, 0.5), 1, 0.5))
        rep = verify_inclusions(inst)
        assert not rep["pass"]


# 13 ------------------------------------------------------------------------------------

@criterion(13, "symmetric variant preserves the real line")
def test_symmetric_variant(fixture_data):
    with Budget(60):
        cfg = ToyConfig.from_json(dict(fixture_data["toy"], variant="symmetric"))
        inst = ToyInstance(cfg, fixture_params(fixture_data))
        assert real_line_deviation(inst.phi) < 1e-6
        rng = np.random.default_rng(13)
        xs = rng.uniform(-15, 15, 100)
        assert np.max(np.abs(inst.f(xs + 0j).imag)) < 1e-6 * inst.window.half_height
        cls = [iterate_orbit(inst.f, x, 100, 20.0).classification for x in xs]
        assert cls == ["escaping"] * 100


# 14 ------------------------------------------------------------------------------------

@criterion(14, "multi-square variant")
def test_multi_square_variant():
    with Budget(60):
        ds = [1, 2, 2, 2]
        s = build_schedule(4, "toy", {"d": ds, "first_index": 3, "h": multi_heights(ds, 2, 3)})
        m = QRMap(s, ParameterSequence.constant(3, 6, 0.5), "multi", 2)
        for e in s.entries:
            ups = [sq for sq in m.squares if sq.n == e.n]
            assert len(ups) == min(e.n - 2, 2) == multi_count(e.n, 2)
            assert len([sq for sq in m.squares if sq.n == -e.n]) == len(ups)
        check_squares_disjoint(m.squares)
        rep = seam_continuity(m, 256)
        assert rep["crossings"] > 0 and rep["max_relative_jump"] < 1e-8


# 15 ------------------------------------------------------------------------------------

@criterion(15, "deterministic reports and images")
def test_determinism(tmp_path):
    cfg = tmp_path / "run.json"
    out = tmp_path / "out"
    cfg.write_text(json.dumps({"command": "report", "rng_seed": 7, "n_random": 5,
                               "image_resolution": 128, "output_dir": str(out)}))
    blobs = []
    for _ in range(2):
        assert main(["--config", str(cfg)]) == 0
        blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        for p in out.iterdir():
            p.unlink()
    assert set(blobs[0]) == {"report.json", "render.ppm"}
    assert blobs[0] == blobs[1]
