"""The model map 2cosh, its inverse branch on the half-strip, orbits and schedules."""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (DECODE_LIMIT, LOG_CUTOFF, TWO_PI, Disc, DomainError, LogReal,
                   OutOfRange, Rectangle, as_complex, log_factorial, logreal_encode,
                   logreal_exp)

EXP_LIMIT = 700.0
X_STAR = 5.0 / 3.0
# Smallest x for which both covering inequalities hold; located once by
# bisection (see covering_crossover) and frozen here.
COVERING_CROSSOVER = 1.5120202243820002


def g_eval(z):
    """2cosh z for scalars or arrays."""
    if np.ndim(z) == 0:
        z = as_complex(z)
        if abs(z.real) > EXP_LIMIT:
            raise OutOfRange(f"Re z = {z.real} overflows 2cosh")
        return 2.0 * cmath.cosh(z)
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z.real) > EXP_LIMIT):
        raise OutOfRange("Re z overflows 2cosh")
    return 2.0 * np.cosh(z)


def g_deriv(z):
    return 2.0 * np.sinh(z)


def on_slit(w):
    w = np.asarray(w)
    return (w.imag == 0) & (w.real <= 2.0)


def g_inverse_branch(w):
    """Preimage of w under 2cosh in S+ = {Re > 0, |Im| < pi}."""
    scalar = np.ndim(w) == 0
    w = np.asarray(w, dtype=complex)
    if np.any(on_slit(w)):
        raise DomainError("argument lies on the slit (-inf, 2]")
    z = np.arccosh(w / 2.0)
    # one Newton step on 2cosh z = w
    z = z - (2.0 * np.cosh(z) - w) / (2.0 * np.sinh(z))
    return complex(z) if scalar else z


def in_half_strip(z):
    z = np.asarray(z)
    return (z.real > 0) & (np.abs(z.imag) < math.pi)


def reference_orbit(n_max: int) -> list[LogReal]:
    """x_0 = 1/2, x_{k+1} = 2cosh x_k, switching to log scale once x_k >= 700."""
    if not 0 <= n_max <= 64:
        raise ValueError("n_max must lie in [0, 64]")
    xs = [logreal_encode(0.5)]
    x = 0.5
    for _ in range(n_max):
        prev = xs[-1]
        if not prev.is_nested and prev.logmag < math.log(EXP_LIMIT):
            x = prev.to_float()
            xs.append(logreal_encode(2.0 * math.cosh(x)))
            continue
        # log x_{k+1} = x_k + log(1 + e^{-2 x_k}); correction dropped once x_k > 40
        if not prev.is_nested and prev.logmag < DECODE_LIMIT:
            xk = prev.to_float()
            lm = xk + math.log1p(math.exp(-2 * xk)) if xk <= LOG_CUTOFF else xk
            xs.append(LogReal(1, lm))
        else:
            xs.append(logreal_exp(prev))
    return xs


def critical_orbit(n_max: int) -> list[LogReal]:
    """v_0 = 0, v_{k+1} = 2cosh v_k, in the same log-scale scheme."""
    vs = [LogReal(0)]
    for _ in range(n_max):
        prev = vs[-1]
        if prev.sign == 0 or (not prev.is_nested and prev.logmag < math.log(EXP_LIMIT)):
            vs.append(logreal_encode(2.0 * math.cosh(prev.to_float())))
        elif not prev.is_nested and prev.logmag < DECODE_LIMIT:
            vs.append(LogReal(1, prev.to_float()))
        else:
            vs.append(logreal_exp(prev))
    return vs


# --- schedule --------------------------------------------------------------

@dataclass(frozen=True)
class ScheduleEntry:
    n: int
    x: LogReal
    d: LogReal
    R: LogReal
    h: LogReal
    floor_skipped: bool = False
    # toy-only plain values and regions
    d_val: int | None = None
    R_val: float | None = None
    h_val: float | None = None
    x_val: float | None = None

    @property
    def E_plus(self) -> Rectangle:
        s = 2 * self.d_val * math.pi
        return Rectangle(1j * self.h_val, s, s)

    @property
    def E_minus(self) -> Rectangle:
        s = 2 * self.d_val * math.pi
        return Rectangle(-1j * self.h_val, s, s)

    @property
    def D_plus(self) -> Disc:
        return Disc(1j * self.h_val, self.R_val)

    @property
    def D_minus(self) -> Disc:
        return Disc(-1j * self.h_val, self.R_val)

    @property
    def Q(self) -> Rectangle:
        return Rectangle(self.x_val, 1.0, math.pi)

    def to_json(self) -> dict:
        out = {"n": self.n, "x": self.x.to_json(), "d": self.d.to_json(),
               "R": self.R.to_json(), "h": self.h.to_json(),
               "floor_skipped": self.floor_skipped}
        if self.d_val is not None:
            out.update(d_val=self.d_val, R_val=self.R_val, h_val=self.h_val, x_val=self.x_val)
        return out

    @classmethod
    def from_json(cls, d: dict) -> "ScheduleEntry":
        return cls(n=d["n"], x=LogReal.from_json(d["x"]), d=LogReal.from_json(d["d"]),
                   R=LogReal.from_json(d["R"]), h=LogReal.from_json(d["h"]),
                   floor_skipped=d.get("floor_skipped", False), d_val=d.get("d_val"),
                   R_val=d.get("R_val"), h_val=d.get("h_val"), x_val=d.get("x_val"))


@dataclass(frozen=True)
class Schedule:
    mode: str
    entries: tuple
    N: int
    params: dict = field(default_factory=dict)

    def __getitem__(self, n: int) -> ScheduleEntry:
        for e in self.entries:
            if e.n == n:
                return e
        raise KeyError(n)

    @property
    def indices(self) -> list[int]:
        return [e.n for e in self.entries]

    @property
    def top(self) -> int:
        return self.entries[-1].n

    def require_toy(self):
        if self.mode != "toy":
            raise ValueError("operation needs a toy schedule; true-scale regions are not representable")

    def to_json(self) -> dict:
        return {"mode": self.mode, "N": self.N, "params": self.params,
                "entries": [e.to_json() for e in self.entries]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, d: dict) -> "Schedule":
        return cls(mode=d["mode"], N=d["N"], params=d.get("params", {}),
                   entries=tuple(ScheduleEntry.from_json(e) for e in d["entries"]))


def radius_for(d: int) -> float:
    return (d - 1.0 / 3.0) * math.pi


def toy_heights(ds, gap_factor: float = 1.5) -> list[float]:
    """Smallest multiples of 2pi keeping consecutive squares (and E_{+-first}) apart."""
    hs = []
    for k, d in enumerate(ds):
        half = 2 * d * math.pi
        if k == 0:
            need = half * (1.0 + gap_factor)
        else:
            half_prev = 2 * ds[k - 1] * math.pi
            need = hs[-1] + half_prev + half + gap_factor * (half_prev + half)
        m = math.ceil(need / TWO_PI - 1e-12)
        hs.append(m * TWO_PI)
    return hs


def build_schedule(n_max: int, mode: str = "true_scale", toy_params: dict | None = None) -> Schedule:
    if mode == "true_scale":
        return _true_schedule(n_max)
    if mode != "toy":
        raise ValueError(f"unknown schedule mode {mode!r}")
    p = dict(toy_params or {})
    ds = [int(d) for d in p.get("d", [])]
    if not ds:
        raise ValueError("toy schedule needs a non-empty d list")
    if any(d < 1 for d in ds):
        raise ValueError("toy d_n must be >= 1")
    gap = float(p.get("gap_factor", 1.5))
    if gap <= 0:
        raise ValueError("gap_factor must be positive")
    first = int(p.get("first_index", 1))
    hs = p.get("h")
    hs = [float(h) for h in hs] if hs is not None else toy_heights(ds, gap)
    if len(hs) != len(ds):
        raise ValueError("h list must match d list")
    entries = []
    for k, (d, h) in enumerate(zip(ds, hs)):
        if abs(h / TWO_PI - round(h / TWO_PI)) > 1e-9:
            raise ValueError("toy h_n must be a multiple of 2pi")
        R = radius_for(d)
        x = math.asinh(h / 2.0)
        entries.append(ScheduleEntry(n=first + k, x=logreal_encode(x), d=logreal_encode(d),
                                     R=logreal_encode(R), h=logreal_encode(h),
                                     d_val=d, R_val=R, h_val=h, x_val=x))
    sched = Schedule("toy", tuple(entries), first,
                     {"d": ds, "gap_factor": gap, "first_index": first, "h": hs})
    check_disjoint(sched)
    return sched


def check_disjoint(s: Schedule):
    e = s.entries
    if e[0].h_val - 2 * e[0].d_val * math.pi <= 0:
        raise ValueError("E_{+first} and E_{-first} overlap")
    for a, b in zip(e, e[1:]):
        if (b.h_val - 2 * b.d_val * math.pi) - (a.h_val + 2 * a.d_val * math.pi) <= 0:
            raise ValueError(f"squares E_{a.n} and E_{b.n} overlap")


def _true_schedule(n_max: int) -> Schedule:
    if not 1 <= n_max <= 63:
        raise ValueError("n_max must lie in [1, 63]")
    xs = reference_orbit(n_max + 1)
    pi = logreal_encode(math.pi)
    entries = []
    for n in range(1, n_max + 1):
        x, x1 = xs[n], xs[n + 1]
        exact = n <= 2
        if exact:
            d_int = math.floor(x1.to_float() / x.to_float())
            d = logreal_encode(d_int)
            h = logreal_encode(TWO_PI * math.floor((x1.to_float() + math.pi) / TWO_PI))
        else:
            d = x1 / x
            h = x1 + pi
        R = (d - logreal_encode(1.0 / 3.0)) * pi
        entries.append(ScheduleEntry(n=n, x=x, d=d, R=R, h=h, floor_skipped=not exact))
    return Schedule("true_scale", tuple(entries), 3)


# --- growth inequalities ---------------------------------------------------

def _fact2(n: int) -> LogReal:
    return LogReal(1, 2.0 * log_factorial(n))


def _small(v: LogReal) -> float:
    """A LogReal known to be modest or tiny, as a float (underflow to 0)."""
    if v.sign == 0:
        return 0.0
    lm = v.logmag
    if isinstance(lm, LogReal) or lm < -DECODE_LIMIT:
        if v.logmag < 0 if not isinstance(lm, LogReal) else lm.sign < 0:
            return 0.0
        raise OutOfRange("expected a small quantity")
    return v.to_float()


def growth_logs(xs: list, n: int) -> dict:
    """Logs of h_n and R_n and of R_n/h_n, arranged so huge orbit terms cancel exactly.

    With floors skipped, h_n = x_{n+1} + pi and R_n = pi (x_{n+1}/x_n - 1/3), so
    R_n/h_n = (pi/x_n)(1 - x_n/(3 x_{n+1}))/(1 + pi/x_{n+1}).
    """
    x, x1 = xs[n], xs[n + 1]
    inv_x = _small(logreal_encode(1.0) / x)
    inv_x1 = _small(logreal_encode(1.0) / x1)
    q = _small(x / x1)
    log_h = x1.log() + logreal_encode(math.log1p(math.pi * inv_x1))
    log_R = x1.log() - x.log() + logreal_encode(math.log(math.pi) + math.log1p(-q / 3.0))
    ratio = (logreal_encode(math.log(math.pi) + math.log1p(-q / 3.0) - math.log1p(math.pi * inv_x1))
             - x.log())
    return {"log_h": log_h, "log_R": log_R, "log_ratio": ratio, "inv_x": inv_x, "inv_x1": inv_x1}


def verify_growth(s: Schedule, n_range=range(3, 11)) -> dict:
    if s.mode != "true_scale":
        return {"status": "not-applicable: toy inequalities checked individually", "rows": []}
    n_range = list(n_range)
    if min(n_range) < 3:
        raise ValueError("growth inequalities are stated for n >= 3")
    xs = reference_orbit(max(n_range) + 3)
    enc = logreal_encode
    rows = []
    for n in n_range:
        lf2 = 2.0 * log_factorial(n)
        a, b = growth_logs(xs, n), growth_logs(xs, n + 1)
        # h_n + (3+6n) R_n = x_{n+1} (1 + pi/x_{n+1} + (3+6n) pi (1/x_n - 1/(3 x_{n+1})))
        lhs = xs[n + 1].log() + enc(math.log1p(
            math.pi * a["inv_x1"] + (3 + 6 * n) * math.pi * (a["inv_x"] - a["inv_x1"] / 3.0)))
        # h_{n+1} - 3 R_{n+1} = x_{n+2} (1 + pi/x_{n+2} - 3 pi/x_{n+1} + pi/x_{n+2})
        rhs = enc(math.log(6.0) - lf2) + xs[n + 2].log() + enc(math.log1p(
            2 * math.pi * b["inv_x1"] - 3 * math.pi * b["inv_x"]))
        rows.append({
            "n": n,
            "x_growth": bool(xs[n + 1].log() > enc(lf2) + xs[n].log()),
            "radius_ratio": bool(a["log_ratio"] < enc(math.log(TWO_PI) - lf2)),
            "height_ratio": bool(b["log_h"] - a["log_h"] > enc(lf2)),
            "spacing": bool(lhs < rhs),
        })
    tail = 0.0
    for n in range(6, max(n_range) + 1):
        lr = growth_logs(xs, n)["log_ratio"]
        if lr > enc(-DECODE_LIMIT):
            tail += math.exp(lr.to_float())
    cauchy = tail < 1e-6
    ok = all(all(v for k, v in r.items() if k != "n") for r in rows) and cauchy
    return {"status": "pass" if ok else "fail", "rows": rows,
            "cauchy_tail": tail, "cauchy_tail_below_1e-6": bool(cauchy)}


def factorial_domination(n_range=range(1, 11)) -> dict:
    """x_n > (n!)^2 for each n in range."""
    xs = reference_orbit(max(n_range))
    return {n: bool(xs[n] > _fact2(n)) for n in n_range}


# --- covering --------------------------------------------------------------

def covering_inequalities(x: float) -> tuple[bool, bool]:
    return (2 * math.sinh(x + 1) > 2 * math.exp(x),
            0.5 * math.exp(x) > 2 * math.cosh(x - 1))


def covering_crossover(lo=1.0, hi=X_STAR, iters=200) -> float:
    """Bisection for the smallest x where both inequalities of the covering check hold."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if all(covering_inequalities(mid)):
            hi = mid
        else:
            lo = mid
    return hi


def check_rect_covering(x: float, n_samples: int = 4000) -> dict:
    if not x > 1:
        raise ValueError("x must exceed 1")
    a, b = covering_inequalities(x)
    Q = Rectangle(complex(x, 0), 1.0, math.pi)
    pts = Q.boundary(n_samples)
    img = g_eval(pts)
    mod = np.abs(img)
    on_neg_real = (np.abs(img.imag) <= 1e-9 * (1 + mod)) & (img.real < 0)
    lo, hi = 0.5 * math.exp(x), 2 * math.exp(x)
    inside = (mod > lo * (1 + 1e-12)) & (mod < hi * (1 - 1e-12)) & ~on_neg_real
    return {"x": x, "outer_ellipse": a, "inner_ellipse": b,
            "boundary_outside_annulus": bool(not inside.any()),
            "pass": bool(a and b and not inside.any())}


# --- real orbits -------------------------------------------------------------

@dataclass
class OrbitRecord:
    points: list
    classification: str
    escape_index: int | None = None
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if (self.escape_index is not None) != (self.classification == "escaping"):
            raise ValueError("escape_index present iff escaping")


def real_orbit_classify(x0: float, fmap=None, bailout: float = 1e3, max_iter: int = 100) -> OrbitRecord:
    if not bailout > 10:
        raise ValueError("bailout must exceed 10")
    fmap = fmap or (lambda t: 2.0 * math.cosh(t))
    pts = [x0]
    x = x0
    for k in range(1, max_iter + 1):
        try:
            x = fmap(x)
        except OverflowError:
            return OrbitRecord(pts, "escaping", k)
        pts.append(x)
        if abs(x) > bailout:
            return OrbitRecord(pts, "escaping", k)
    return OrbitRecord(pts, "undecided")
