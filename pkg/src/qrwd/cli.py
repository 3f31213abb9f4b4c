"""Command-line entry point: ``qrwd <command> [--config path] [--key value ...]``.

Every run writes ``<output_dir>/<command>.json`` containing the resolved config, the
library version, per-suite results and an overall status. Exit codes: 0 all suites
pass, 1 some suite failed, 2 usage or config error, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .io import write_image, write_json, write_orbit_csv

log = logging.getLogger("qrwd")

COMMANDS = ("schedule", "verify", "dilatation", "solve", "shoot", "render", "report")
PIECES = ("G", "phi1", "phi2", "phi3", "rho")
# isolated bilinear folds appear next to strongly distorted disc centers
JACOBIAN_MIN_FRACTION = 0.999
FIXTURE_RENDER_FRACTION = 0.75


class ConfigError(ValueError):
    """Bad configuration: unknown key, wrong type or out-of-range value."""


def _between(lo, hi, lo_open=False, hi_open=False):
    def check(v):
        return (v > lo if lo_open else v >= lo) and (v < hi if hi_open else v <= hi)
    check.text = f"{'(' if lo_open else '['}{lo}, {hi}{')' if hi_open else ']'}"
    return check


def _one_of(*opts):
    check = lambda v: v in opts
    check.text = "one of " + ", ".join(map(str, opts))
    return check


@dataclass(frozen=True)
class Option:
    default: object
    kind: type
    check: object = None
    help: str = ""


# the documented defaults; flags and file keys share these names
OPTIONS = {
    "command": Option("verify", str, _one_of(*COMMANDS), "suite to run"),
    "schedule_mode": Option("true_scale", str, _one_of("true_scale", "toy"), "schedule family"),
    "nmax": Option(10, int, _between(3, 40), "largest schedule index"),
    "toy_params": Option(None, dict, None, "toy schedule {d, gap_factor, first_index, h}; null = fixture"),
    "tol": Option(1e-8, float, _between(0, 1, lo_open=True, hi_open=True), "Neumann series tolerance"),
    "max_terms": Option(200, int, _between(1, 10000), "Neumann series cap"),
    "resolution": Option(256, int, _between(128, 4096), "solver grid per axis"),
    "dilatation_resolution": Option(256, int, _between(64, 2048), "estimator grid per axis"),
    "d_values": Option([1, 2, 3], list, None, "degrees for the dilatation suite"),
    "pieces": Option(["G", "phi1", "phi2", "phi3"], list, None, "pieces for the dilatation suite"),
    "rho_w": Option([0.3, 0.2], list, None, "w for the rho piece as [re, im]"),
    "delta1": Option(0.1, float, _between(0, 1, lo_open=True, hi_open=True), "key inequality delta_1"),
    "C": Option(1.0, float, _between(0, math.inf, lo_open=True), "key inequality constant"),
    "K": Option(2.0, float, _between(1, math.inf), "dilatation bound of the disc family"),
    "C5": Option(1.0, float, _between(0, math.inf), "inner radius constant"),
    "n_random": Option(20, int, _between(1, 10000), "randomized cases per estimate suite"),
    "window": Option([-4.0, 4.0, -4.0, 4.0], list, None, "render window [x0, x1, y0, y1]"),
    "image_resolution": Option(256, int, _between(8, 4096), "render pixels per axis"),
    "max_iter": Option(50, int, _between(1, 100000), "escape iterations"),
    "bailout": Option(1000.0, float, _between(10, math.inf, lo_open=True), "escape radius"),
    "render_map": Option("cosh", str, _one_of("cosh", "fixture"), "map to render"),
    "orbit_start": Option(None, list, None, "optional [re, im] start for an orbit CSV"),
    "fixture": Option(None, str, None, "fixture JSON path; null = bundled"),
    "w0": Option(None, list, None, "shooting start as [[re, im], ...]; null = fixture start"),
    "shoot_tol": Option(1e-6, float, _between(0, 1, lo_open=True), "shooting increment tolerance"),
    "shoot_max_iter": Option(30, int, _between(1, 1000), "shooting iteration cap"),
    "output_dir": Option("qrwd_out", str, None, "directory for reports and images"),
    "figures": Option(False, bool, None, "also write matplotlib PNG figures"),
    "rng_seed": Option(0, int, _between(0, 2**63 - 1), "seed for randomized suites"),
}


def defaults() -> dict:
    return {k: copy.deepcopy(o.default) for k, o in OPTIONS.items()}


def _coerce(key, value):
    opt = OPTIONS[key]
    if value is None:
        if opt.default is None:
            return None
        raise ConfigError(f"{key}: must not be null")
    kind = opt.kind
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if (kind is int and isinstance(value, bool)) or not isinstance(value, kind):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {type(value).__name__}")
    if opt.check is not None and not opt.check(value):
        raise ConfigError(f"{key}: {value!r} outside {opt.check.text}")
    return value


def _validate_nested(cfg):
    w = cfg["window"]
    if len(w) != 4 or not all(isinstance(v, (int, float)) for v in w) or not (w[0] < w[1] and w[2] < w[3]):
        raise ConfigError("window: need [x0, x1, y0, y1] with x0 < x1 and y0 < y1")
    cfg["window"] = [float(v) for v in w]
    for i, d in enumerate(cfg["d_values"]):
        if not isinstance(d, int) or isinstance(d, bool) or not 1 <= d <= 200:
            raise ConfigError(f"d_values[{i}]: expected an integer in [1, 200]")
    for i, p in enumerate(cfg["pieces"]):
        if p not in PIECES:
            raise ConfigError(f"pieces[{i}]: {p!r} not one of {', '.join(PIECES)}")
    rw = cfg["rho_w"]
    if len(rw) != 2 or abs(complex(*rw)) >= 0.75:
        raise ConfigError("rho_w: need [re, im] with modulus < 3/4")
    tp = cfg["toy_params"]
    if tp is not None:
        allowed = {"d", "gap_factor", "first_index", "h"}
        for k in tp:
            if k not in allowed:
                raise ConfigError(f"toy_params.{k}: unknown key")
        ds = tp.get("d")
        if not isinstance(ds, list) or not ds or not all(isinstance(d, int) and d >= 1 for d in ds):
            raise ConfigError("toy_params.d: expected a non-empty list of integers >= 1")
        if "gap_factor" in tp and not (isinstance(tp["gap_factor"], (int, float)) and tp["gap_factor"] > 0):
            raise ConfigError("toy_params.gap_factor: expected a positive number")
        if "first_index" in tp and not (isinstance(tp["first_index"], int) and tp["first_index"] >= 1):
            raise ConfigError("toy_params.first_index: expected an integer >= 1")
        if tp.get("h") is not None and (not isinstance(tp["h"], list) or len(tp["h"]) != len(ds)):
            raise ConfigError("toy_params.h: expected a list as long as d")
    if cfg["orbit_start"] is not None and len(cfg["orbit_start"]) != 2:
        raise ConfigError("orbit_start: need [re, im]")
    if cfg["w0"] is not None:
        for i, v in enumerate(cfg["w0"]):
            if not (isinstance(v, list) and len(v) == 2):
                raise ConfigError(f"w0[{i}]: need [re, im]")
    return cfg


def resolve(values: dict) -> dict:
    """Defaults overlaid with values, every key checked."""
    cfg = defaults()
    for k, v in values.items():
        if k not in OPTIONS:
            raise ConfigError(f"{k}: unknown key")
        cfg[k] = _coerce(k, v)
    return _validate_nested(cfg)


def _parse_flag(key, text):
    kind = OPTIONS[key].kind
    if kind is str:
        return None if text == "null" else text
    if kind is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected true or false, got {text!r}")
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None


def load_config_file(path) -> dict:
    text = Path(path).read_text()
    if not text.strip():
        return {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def parse_config(path=None, flags=None) -> dict:
    """File values, then flags (already split into key/value pairs), over the defaults."""
    values = load_config_file(path) if path else {}
    for k, v in (flags or {}).items():
        if k not in OPTIONS:
            raise ConfigError(f"{k}: unknown key")
        values[k] = _parse_flag(k, v) if isinstance(v, str) else v
    return resolve(values)


def _split_flags(rest):
    flags = {}
    i = 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(rest):
                raise ConfigError(f"{key}: missing value")
            val = rest[i + 1]
            i += 2
        flags[key.replace("-", "_")] = val
    return flags


def parse_args(argv) -> dict:
    ap = argparse.ArgumentParser(prog="qrwd", add_help=True,
                                 description="Finite-order wandering-domain construction toolkit.")
    ap.add_argument("--config", default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    ns, rest = ap.parse_known_args(argv)
    # the command may come first as a bare word; every other token is a --key value flag
    command = rest.pop(0) if rest and not rest[0].startswith("-") else None
    flags = _split_flags(rest)
    if command is not None:
        if command not in COMMANDS:
            raise ConfigError(f"command: {command!r} not one of {', '.join(COMMANDS)}")
        if "command" in flags and flags["command"] != command:
            raise ConfigError("command: positional and --command disagree")
        flags["command"] = command
    if ns.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    return parse_config(ns.config, flags)


# --- fixture ---------------------------------------------------------------------------

def load_fixture(path=None) -> dict:
    if path is None:
        text = resources.files("qrwd").joinpath("data/toy_fixture.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def _toy_config(cfg, fixture):
    from .dynamics import ToyConfig
    base = dict(fixture["toy"])
    if cfg["toy_params"] is not None:
        base.update(cfg["toy_params"])
        base.setdefault("h", None)
    base["resolution"] = [cfg["resolution"], cfg["resolution"]]
    base["tol"] = cfg["tol"]
    base["max_terms"] = cfg["max_terms"]
    return ToyConfig.from_json(base)


def _schedule(cfg):
    from .base_map import build_schedule
    if cfg["schedule_mode"] == "true_scale":
        return build_schedule(cfg["nmax"], "true_scale")
    return _toy_config(cfg, load_fixture(cfg["fixture"])).schedule()


# --- suites ------------------------------------------------------------------------------

def matching_identity(d_max: int = 50) -> dict:
    from .base_map import radius_for
    worst_cosh = worst_pow = 0.0
    for d in range(1, d_max + 1):
        R = radius_for(d)
        worst_cosh = max(worst_cosh, abs(2 * np.cosh(1j * R) - (-1) ** d))
        worst_pow = max(worst_pow, abs((1j * R / R) ** (2 * d) - (-1) ** d))
    return {"d_max": d_max, "cosh_error": float(worst_cosh), "power_error": float(worst_pow),
            "pass": bool(worst_cosh < 1e-10 and worst_pow < 1e-12)}


def suite_schedule(cfg, out):
    from .base_map import check_disjoint, verify_growth
    s = _schedule(cfg)
    if s.mode == "toy":
        try:
            check_disjoint(s)
            ok = True
        except ValueError:
            ok = False
    else:
        # at true scale disjointness of consecutive squares is the spacing inequality
        ok = all(r["spacing"] for r in verify_growth(s, range(3, cfg["nmax"] + 1))["rows"])
    write_json(out / "schedule_entries.json", s.to_json())
    return {"schedule": s.to_json(), "disjoint": ok, "pass": ok}


def suite_verify(cfg, out):
    from .base_map import (COVERING_CROSSOVER, check_rect_covering, covering_crossover,
                           factorial_domination, verify_growth)
    res = {"matching_identity": matching_identity()}
    if cfg["schedule_mode"] == "true_scale":
        s = _schedule(cfg)
        growth = verify_growth(s, range(3, cfg["nmax"] + 1))
        fact = factorial_domination(range(1, cfg["nmax"] + 1))
        res["growth"] = growth
        res["factorial_domination"] = {str(k): v for k, v in fact.items()}
        res["growth"]["pass"] = growth["status"] == "pass"
        res["factorial_domination"]["pass"] = all(fact.values())
        if cfg["figures"]:
            from .plotting import growth_figure
            growth_figure(growth["rows"], out / "growth.png")
    xc = covering_crossover()
    cover = [check_rect_covering(x) for x in (1.6, 2.0, 3.0, 5.0)]
    res["covering"] = {"crossover": xc, "crossover_matches": abs(xc - COVERING_CROSSOVER) < 1e-12,
                       "checks": cover, "pass": all(c["pass"] for c in cover)}
    res["pass"] = all(v.get("pass", True) for v in res.values() if isinstance(v, dict))
    return res


def _piece(name, d, cfg):
    from .interpolation import build_G, build_phi1, build_phi2, build_phi3, build_rho
    if name == "rho":
        return build_rho(complex(*cfg["rho_w"]))
    return {"G": build_G, "phi1": build_phi1, "phi2": build_phi2, "phi3": build_phi3}[name](d)


def suite_dilatation(cfg, out):
    from .interpolation import estimate_dilatation
    rows = []
    for name in cfg["pieces"]:
        for d in ([None] if name == "rho" else cfg["d_values"]):
            p = _piece(name, d, cfg)
            r = estimate_dilatation(p, cfg["dilatation_resolution"])
            r["declared"] = p.declared_dilatation_bound
            r["pass"] = bool(r["orientation_violations"] == 0 and math.isfinite(r["sup_K"])
                             and r["seam_jump"] < 1e-6)
            rows.append(r)
    if cfg["figures"] and "G" in cfg["pieces"]:
        from .plotting import dilatation_figure
        g = [r for r in rows if r["piece"] == "G"]
        dilatation_figure([r["d"] for r in g], [r["sup_K"] for r in g], [r["declared"] for r in g],
                          out / "dilatation.png")
    return {"rows": rows, "pass": all(r["pass"] for r in rows)}


def _instance(cfg, fixture, params=None):
    from .dynamics import ToyInstance
    from .qrmap import ParameterSequence
    tc = _toy_config(cfg, fixture)
    if params is None:
        w = fixture.get("w_star") if cfg["toy_params"] is None else None
        sched = tc.schedule()
        n_w = sched.top - sched.N
        w = [complex(*v) for v in w] if w else [0.5] * n_w
        params = ParameterSequence(tuple(w), sched.N, 0.5)
    return ToyInstance(tc, params)


def suite_solve(cfg, out):
    from .beltrami import field_to_bytes, gridmap_to_bytes
    from .io import atomic_write_bytes
    inst = _instance(cfg, load_fixture(cfg["fixture"]))
    phi = inst.phi
    res_hist = phi.meta.get("residuals", [])
    atomic_write_bytes(out / "mu_field.bin", field_to_bytes(inst.field))
    atomic_write_bytes(out / "phi_map.bin", gridmap_to_bytes(phi))
    jac = phi.jacobian_positive_fraction()
    final = res_hist[-1] if res_hist else 0.0
    return {"terms": phi.meta.get("terms"), "residuals": res_hist, "sup_mu": inst.field.sup,
            "jacobian_positive_fraction": jac, "sup_deviation": phi.sup_deviation(),
            "box": inst.window.to_json(), "pass": bool(jac >= JACOBIAN_MIN_FRACTION and final < cfg["tol"])}


def suite_shoot(cfg, out):
    from .dynamics import fixed_point_residual, shoot
    fx = load_fixture(cfg["fixture"])
    tc = _toy_config(cfg, fx)
    w0 = cfg["w0"] if cfg["w0"] is not None else fx.get("w_start")
    w0 = [complex(*v) for v in w0] if w0 else None
    r = shoot(tc, w0, tol=cfg["shoot_tol"], max_iter=cfg["shoot_max_iter"], log=log.info)
    resid = fixed_point_residual(tc, r["w"])
    ok = r["converged"] and r["contraction"] < 1 and resid < 1e-2
    return {"w_star": [[v.real, v.imag] for v in r["w"].w], "converged": r["converged"],
            "iterations": r["iterations"], "increments": r["increments"],
            "contraction": r["contraction"], "residual_from_scratch": resid,
            "excursions_outside_shooting_disc": r["excursions"], "pass": bool(ok)}


def suite_render(cfg, out):
    from .core import Rectangle
    from .dynamics import escape_time_field, iterate_orbit
    x0, x1, y0, y1 = cfg["window"]
    win = Rectangle(complex((x0 + x1) / 2, (y0 + y1) / 2), (x1 - x0) / 2, (y1 - y0) / 2)
    if cfg["render_map"] == "cosh":
        fmap = lambda z: 2 * np.cosh(z)
    else:
        inst = _instance(cfg, load_fixture(cfg["fixture"]))
        # f needs phi^{-1}; stay well inside the solver box
        lim = FIXTURE_RENDER_FRACTION * min(inst.window.half_width, inst.window.half_height)
        if max(abs(v) for v in cfg["window"]) > lim or cfg["bailout"] > lim:
            raise ConfigError(f"window/bailout: fixture renders need |coordinates| and bailout <= {lim:.6g}")
        fmap = inst.f
    n = cfg["image_resolution"]
    field = escape_time_field(fmap, win, (n, n), cfg["max_iter"], cfg["bailout"])
    digest = write_image(field, out / "render.ppm")
    res = {"image": "render.ppm", "sha256": digest, "shape": [n, n],
           "interior_pixels": int((field < 0).sum()), "pass": True}
    if cfg["orbit_start"] is not None:
        orb = iterate_orbit(fmap, complex(*cfg["orbit_start"]), cfg["max_iter"], cfg["bailout"])
        write_orbit_csv(out / "orbit.csv", orb.points)
        res["orbit"] = {"classification": orb.classification, "escape_index": orb.escape_index,
                        "length": len(orb.points)}
        if cfg["figures"]:
            from .plotting import orbit_figure
            orbit_figure(orb.points, out / "orbit.png")
    if cfg["figures"]:
        from .plotting import escape_figure
        escape_figure(field, win, out / "render.png")
    return res


def suite_estimates(cfg):
    from .estimates import (DiscFamily, case1_bound, case2_bound, disc_pole_integral,
                            inclusion_sweep, key_inequality_terms, random_case_config,
                            schedule_separation_log)
    from .base_map import build_schedule
    rng = np.random.default_rng(cfg["rng_seed"])
    worst_b1 = 0.0
    for _ in range(cfg["n_random"]):
        a = complex(*rng.normal(size=2) * 3)
        b = complex(*rng.normal(size=2) * 3)
        r = float(rng.uniform(0.1, 3))
        worst_b1 = max(worst_b1, disc_pole_integral(a, r, b) / (2 * math.pi * r))
    cases = {}
    for case, bound in ((1, case1_bound), (2, case2_bound)):
        worst = 0.0
        for _ in range(cfg["n_random"]):
            beta, gamma, zeta, r = random_case_config(rng, case, cfg["delta1"])
            val = key_inequality_terms(0j, beta, gamma, DiscFamily.of([(zeta, r)], cfg["K"]))[0]
            worst = max(worst, val / bound(zeta, r))
        cases[f"case{case}_worst_ratio"] = worst
    s = build_schedule(max(cfg["nmax"], 4), "true_scale")
    sweep = inclusion_sweep(cfg["C5"], s, cfg["nmax"])
    sep = schedule_separation_log(s, 3, cfg["nmax"])
    return {"B1_worst_ratio": worst_b1, **cases,
            "inclusion_sweep": {"N1": sweep["N1"], "results": {str(k): v for k, v in sweep["results"].items()}},
            "separation_min_ratio": sep["min_ratio"], "C1_half_holds": sep["C1_half_holds"],
            "delta1": cfg["delta1"], "C": cfg["C"], "K": cfg["K"], "C5": cfg["C5"],
            "pass": bool(worst_b1 <= 1 + 1e-3 and all(v <= 1 for v in cases.values())
                         and sweep["N1"] is not None and sep["C1_half_holds"])}


def suite_report(cfg, out):
    sub = dict(cfg, schedule_mode="true_scale")
    res = {"verify": suite_verify(sub, out), "estimates": suite_estimates(sub),
           "render": suite_render(dict(sub, render_map="cosh"), out)}
    res["pass"] = all(v["pass"] for v in res.values())
    return res


SUITES = {"schedule": suite_schedule, "verify": suite_verify, "dilatation": suite_dilatation,
          "solve": suite_solve, "shoot": suite_shoot, "render": suite_render, "report": suite_report}


def run(cfg: dict) -> int:
    out = Path(cfg["output_dir"])
    cmd = cfg["command"]
    results = SUITES[cmd](cfg, out)
    status = "pass" if results.get("pass") else "fail"
    write_json(out / f"{cmd}.json", {"version": __version__, "command": cmd, "config": cfg,
                                     "results": results, "status": status})
    print(f"{cmd}: {status} ({out / (cmd + '.json')})")
    return 0 if status == "pass" else 1


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_args(argv)
    except ConfigError as exc:
        print(f"qrwd: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"qrwd: cannot read config: {exc}", file=sys.stderr)
        return 3
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return run(cfg)
    except ConfigError as exc:
        print(f"qrwd: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"qrwd: I/O error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"qrwd: {cfg['command']} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
