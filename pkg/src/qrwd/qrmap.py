"""Global quasiregular maps g_w built from 2cosh, the cosh-power maps G_n and shifts rho_w."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .base_map import Schedule, radius_for
from .core import TWO_PI, Rectangle
from .interpolation import GMap, QRPiece, RhoMap, grid_nodes, seam_jumps

VARIANTS = ("even", "symmetric", "multi")
KINDS = ("outside", "annulus", "disc", "annulus_multi", "disc_multi")


@dataclass(frozen=True)
class RegionLabel:
    kind: str
    n: int = 0
    j: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")


@dataclass(frozen=True)
class ParameterSequence:
    """Critical values w_N, ..., w_T and a fill value beyond T; extra holds (n, j) entries."""

    w: tuple
    N: int
    fill_value: complex = 0.5
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(complex(v) for v in self.w))
        vals = list(self.w) + list(self.extra.values()) + [complex(self.fill_value)]
        if any(abs(v) >= 0.75 for v in vals):
            raise ValueError("parameters must lie in the disc of radius 3/4")

    @classmethod
    def constant(cls, N: int, T: int, value=0.5):
        return cls(tuple([complex(value)] * (T - N + 1)), N, complex(value))

    @property
    def T(self) -> int:
        return self.N + len(self.w) - 1

    def get(self, n: int, j: int = 0) -> complex:
        if j:
            return complex(self.extra.get((n, j), self.fill_value))
        if self.N <= n <= self.T:
            return self.w[n - self.N]
        return complex(self.fill_value)

    def replace(self, values) -> "ParameterSequence":
        return ParameterSequence(tuple(values), self.N, self.fill_value, dict(self.extra))

    def in_shooting_disc(self) -> bool:
        return all(abs(v - 0.5) <= 0.125 for v in self.w)

    def to_json(self) -> dict:
        return {"N": self.N, "w": [[v.real, v.imag] for v in self.w],
                "fill_value": [self.fill_value.real, self.fill_value.imag],
                "extra": [[n, j, v.real, v.imag] for (n, j), v in sorted(self.extra.items())]}

    @classmethod
    def from_json(cls, d: dict) -> "ParameterSequence":
        extra = {(int(n), int(j)): complex(a, b) for n, j, a, b in d.get("extra", [])}
        fv = d.get("fill_value", [0.5, 0.0])
        return cls(tuple(complex(a, b) for a, b in d["w"]), int(d["N"]), complex(*fv), extra)


@dataclass(frozen=True)
class Square:
    """One square E (or E^j) with its disc: center, half-degree, parameter and conjugation flag."""

    n: int  # signed level
    j: int
    center: complex
    d: int
    conj: bool

    @property
    def half(self) -> float:
        return 2 * self.d * math.pi

    @property
    def R(self) -> float:
        return radius_for(self.d)

    @property
    def rect(self) -> Rectangle:
        return Rectangle(self.center, self.half, self.half)


@lru_cache(maxsize=None)
def gmap_for(d: int) -> GMap:
    return GMap(d)


def multi_count(n: int, q: int) -> int:
    return max(0, min(n - 2, q))


def build_squares(s: Schedule, variant: str = "even", q: int = 2) -> list[Square]:
    s.require_toy()
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    out = []
    for e in s.entries:
        js = range(multi_count(e.n, q)) if variant == "multi" else range(1)
        for j in js:
            h = e.h_val + 6 * j * e.R_val
            out.append(Square(e.n, j, 1j * h, e.d_val, False))
            out.append(Square(-e.n, j, -1j * h, e.d_val, variant != "even"))
    check_squares_disjoint(out)
    return out


def check_squares_disjoint(squares):
    """Open squares must not overlap; shared edges are allowed."""
    for a_i, a in enumerate(squares):
        for b in squares[a_i + 1:]:
            ox = a.half + b.half - abs(a.center.real - b.center.real)
            oy = a.half + b.half - abs(a.center.imag - b.center.imag)
            if ox > 1e-9 and oy > 1e-9:
                raise ValueError(f"squares at levels {a.n},{a.j} and {b.n},{b.j} overlap")


def multi_heights(ds, q: int = 2, first_index: int = 3, gap_factor: float = 1.5) -> list[float]:
    """Base heights (multiples of 2pi) leaving room for the stacked squares of each level."""
    hs = []
    top = None
    for k, d in enumerate(ds):
        n = first_index + k
        half = 2 * d * math.pi
        need = half * (1 + gap_factor) if top is None else top + half * (1 + gap_factor)
        h = math.ceil(need / TWO_PI - 1e-12) * TWO_PI
        hs.append(h)
        top = h + 6 * max(multi_count(n, q) - 1, 0) * radius_for(d) + half
    return hs


class QRMap:
    """g_w on a toy schedule; evaluate returns values and integer region labels."""

    def __init__(self, s: Schedule, params: ParameterSequence, variant: str = "even", q: int = 2):
        self.schedule = s
        self.params = params
        self.variant = variant
        self.q = q
        self.squares = build_squares(s, variant, q)
        self._rho = {}
        for sq in self.squares:
            w = params.get(abs(sq.n), sq.j)
            self._rho[(sq.n, sq.j)] = RhoMap(np.conj(w) if sq.conj else w)

    def rho(self, sq: Square) -> RhoMap:
        return self._rho[(sq.n, sq.j)]

    def evaluate(self, z):
        z = np.asarray(z, dtype=complex)
        out = 2 * np.cosh(z)
        lab = np.zeros(z.shape, dtype=int)
        done = np.zeros(z.shape, dtype=bool)
        for k, sq in enumerate(self.squares):
            u = z - sq.center
            m = ~done & (np.abs(u.real) <= sq.half) & (np.abs(u.imag) <= sq.half)
            if not m.any():
                continue
            done |= m
            v, gl = gmap_for(sq.d).evaluate(u[m])
            disc = np.abs(u[m]) <= sq.R
            if disc.any():
                rv, rl = self.rho(sq).evaluate(v[disc])
                v[disc] = rv
                gl[disc] = 900 + rl
            out[m] = v
            lab[m] = 1000 * (k + 1) + gl
        return out, lab

    def __call__(self, z):
        return self.evaluate(z)[0]

    def region_arrays(self, z):
        """(square index or -1, in-disc flag) for each point."""
        z = np.asarray(z, dtype=complex)
        idx = np.full(z.shape, -1)
        disc = np.zeros(z.shape, dtype=bool)
        for k, sq in enumerate(self.squares):
            u = z - sq.center
            m = (idx < 0) & (np.abs(u.real) <= sq.half) & (np.abs(u.imag) <= sq.half)
            idx[m] = k
            disc |= m & (np.abs(u) <= sq.R)
        return idx, disc

    def classify(self, z) -> RegionLabel:
        idx, disc = self.region_arrays(np.array([complex(z)]))
        if idx[0] < 0:
            return RegionLabel("outside")
        sq = self.squares[idx[0]]
        suffix = "_multi" if self.variant == "multi" else ""
        return RegionLabel(("disc" if disc[0] else "annulus") + suffix, sq.n, sq.j)

    def support_mask(self, z):
        """Points of the closed annuli E minus D(center, (1/8)^(1/2d) R) carrying the Beltrami coefficient."""
        z = np.asarray(z, dtype=complex)
        m = np.zeros(z.shape, dtype=bool)
        for reg in support_regions(self.schedule, self.variant, self.q):
            u = z - reg["center"]
            m |= (np.abs(u.real) <= reg["half"]) & (np.abs(u.imag) <= reg["half"]) & (np.abs(u) > reg["inner_radius"])
        return m

    def bounding_box(self, margin: float = 1.0) -> Rectangle:
        x = max(sq.half for sq in self.squares) + margin
        y = max(abs(sq.center.imag) + sq.half for sq in self.squares) + margin
        return Rectangle(0j, x, y)

    def piece(self, box: Rectangle | None = None) -> QRPiece:
        box = box or self.bounding_box()
        return QRPiece(f"g_w[{self.variant}]", box, self.evaluate, lambda z: box.contains(z),
                       critical_points=tuple(sq.center for sq in self.squares))

    def config(self) -> dict:
        return {"variant": self.variant, "q": self.q, "schedule": self.schedule.to_json(),
                "params": self.params.to_json()}


def seam_continuity(m: QRMap, resolution: int = 256, delta_rel: float = 1e-13) -> dict:
    """Largest relative two-sided jump of m across any label change, square by square.

    Each square (padded by 5%) gets its own grid; crossings are located by bisection
    and the map is compared at +-delta along the grid edge, delta = delta_rel * |z|.
    """
    worst, crossings = 0.0, 0
    for sq in m.squares:
        box = Rectangle(sq.center, 1.05 * sq.half, 1.05 * sq.half)
        piece = QRPiece("g_w", box, m.evaluate, lambda z: box.contains(z))
        Z, _, _ = grid_nodes(box, resolution)
        lab = m.evaluate(Z)[1]
        jump, n = seam_jumps(piece, Z, lab, delta=delta_rel * (abs(sq.center) + sq.half))
        worst, crossings = max(worst, jump), crossings + n
    return {"max_relative_jump": worst, "crossings": crossings}


def classify(z, s: Schedule, variant: str = "even", q: int = 2) -> RegionLabel:
    squares = build_squares(s, variant, q)
    z = complex(z)
    suffix = "_multi" if variant == "multi" else ""
    for sq in squares:
        u = z - sq.center
        if abs(u.real) <= sq.half and abs(u.imag) <= sq.half:
            return RegionLabel(("disc" if abs(u) <= sq.R else "annulus") + suffix, sq.n, sq.j)
    return RegionLabel("outside")


def gw_eval(z, s: Schedule, p: ParameterSequence):
    return QRMap(s, p, "even")(z)


def gw_symmetric_eval(z, s: Schedule, p: ParameterSequence):
    return QRMap(s, p, "symmetric")(z)


def gw_multi_eval(z, s: Schedule, p: ParameterSequence, q: int = 2):
    return QRMap(s, p, "multi", q)(z)


def principal_power(z, p_order: int):
    """z^(p/2) on the principal branch (plane slit along the negative reals)."""
    z = np.asarray(z, dtype=complex)
    if p_order % 2 and np.any(z == 0):
        raise ValueError("z = 0 is a branch point for odd order")
    return np.abs(z) ** (p_order / 2) * np.exp(1j * np.angle(z) * (p_order / 2))


def gpw_eval(z, p_order: int, s: Schedule, p: ParameterSequence, gmap: QRMap | None = None):
    if p_order < 1:
        raise ValueError("order must be a positive integer")
    gmap = gmap or QRMap(s, p, "even")
    return gmap(principal_power(z, p_order))


def support_regions(s: Schedule, variant: str = "even", q: int = 2) -> list[dict]:
    regions = []
    for sq in build_squares(s, variant, q):
        regions.append({"n": sq.n, "j": sq.j, "center": sq.center, "half": sq.half,
                        "inner_radius": 0.125 ** (1.0 / (2 * sq.d)) * sq.R})
    return regions


def shifted_rectangle(x: float) -> Rectangle:
    """Q'(x) = {|Re z - x| < 1, -pi/2 < Im z < 3pi/2}, used for the order-1/2 chain."""
    return Rectangle(complex(x, math.pi / 2), 1.0, math.pi)


def max_modulus(r: float, fmap, n_samples: int = 4096, iters: int = 80) -> float:
    if not r > 0:
        raise ValueError("r must be positive")
    th = TWO_PI * np.arange(n_samples) / n_samples
    vals = np.abs(fmap(r * np.exp(1j * th)))
    k = int(np.argmax(vals))
    best = float(vals[k])
    step = TWO_PI / n_samples
    a, b = th[k] - step, th[k] + step
    f = lambda t: float(np.abs(fmap(np.array([r * np.exp(1j * t)])))[0])
    gr = (math.sqrt(5) - 1) / 2
    c, d = b - gr * (b - a), a + gr * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = f(d)
    return max(best, fc, fd)


def winding_number(fmap, center: complex, radius: float, target: complex, n_samples: int = 4096) -> int:
    """Winding of fmap around target along the circle, summing argument increments."""
    th = TWO_PI * np.arange(n_samples + 1) / n_samples
    v = fmap(center + radius * np.exp(1j * th)) - target
    inc = np.angle(v[1:] / v[:-1])
    return int(round(float(np.sum(inc)) / TWO_PI))


def local_degree(m: QRMap, n: int) -> int:
    sq = next(s for s in m.squares if s.n == n and s.j == 0)
    return winding_number(m, sq.center, sq.R / 4, m.params.get(n))
