"""Quasiregular interpolation: linear-interpolation cells, the cosh-power map G,
the shift map rho_w, and a finite-difference dilatation estimator."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Rectangle, hyperbolic_distance_H, mobius_M

E_MINUS = math.e - 1.0 / math.e


class ConstructionError(ValueError):
    """Hypotheses of the linear interpolation theorem fail at a sample."""


class OrientationViolation(RuntimeError):
    """Estimated |mu| >= 1 somewhere in a piece claimed quasiregular."""


def param_mu(Ps, Pt):
    """Beltrami coefficient of a map given its partials along s and t (z = s + it)."""
    return (Ps + 1j * Pt) / (Ps - 1j * Pt)


def compose_mu(mu_outer, mu_inner):
    """|mu| of outer o inner^{-1} from the two coefficients at the same parameter point."""
    return np.abs(mu_outer - mu_inner) / np.abs(1.0 - np.conj(mu_inner) * mu_outer)


def k_of(mu_abs):
    mu_abs = np.asarray(mu_abs, dtype=float)
    with np.errstate(divide="ignore"):
        return (1.0 + mu_abs) / (1.0 - mu_abs)


# --- Linear Interpolation Theorem ------------------------------------------

@dataclass(frozen=True)
class CurvePair:
    gamma1: Callable
    gamma2: Callable
    t0: float
    dgamma1: Callable | None = None
    dgamma2: Callable | None = None

    def derivs(self, t):
        h = 1e-6 * max(self.t0, 1.0)
        d1 = self.dgamma1(t) if self.dgamma1 else (self.gamma1(t + h) - self.gamma1(t - h)) / (2 * h)
        d2 = self.dgamma2(t) if self.dgamma2 else (self.gamma2(t + h) - self.gamma2(t - h)) / (2 * h)
        return d1, d2


@dataclass(frozen=True)
class InterpolationMap:
    curves: CurvePair
    s0: float
    certified_r: float

    @property
    def source(self) -> Rectangle:
        return Rectangle(complex(self.s0 / 2, self.curves.t0 / 2), self.s0 / 2, self.curves.t0 / 2)

    def __call__(self, s, t):
        lam = np.asarray(s) / self.s0
        return (1 - lam) * self.curves.gamma1(t) + lam * self.curves.gamma2(t)

    def at(self, z):
        z = np.asarray(z, dtype=complex)
        return self(z.real, z.imag)

    def mu(self, s, t):
        """Exact coefficient -M(Phi_t / Phi_s)."""
        g1, g2 = self.curves.gamma1(t), self.curves.gamma2(t)
        d1, d2 = self.curves.derivs(t)
        lam = np.asarray(s) / self.s0
        Ps = (g2 - g1) / self.s0
        Pt = (1 - lam) * d1 + lam * d2
        return -mobius_M(Pt / Ps)

    @property
    def mu_bound(self) -> float:
        return math.tanh(self.certified_r / 2)


def enclosing_radius(cp: CurvePair, s0: float, n_samples: int = 1000) -> float:
    """Smallest r with s0*gamma_j'/(gamma2-gamma1) in the hyperbolic disc D_H(i, r) at samples."""
    t = np.linspace(0.0, cp.t0, n_samples)
    g1, g2 = cp.gamma1(t), cp.gamma2(t)
    d1, d2 = cp.derivs(t)
    gap = g2 - g1
    if np.any(np.abs(gap) == 0):
        raise ConstructionError("curves meet")
    if np.any(d1 == 0) or np.any(d2 == 0):
        raise ConstructionError("curve derivative vanishes")
    q = np.concatenate([s0 * d1 / gap, s0 * d2 / gap])
    if np.any(q.imag <= 0):
        raise ConstructionError("derivative ratio leaves the upper half-plane")
    return float(max(hyperbolic_distance_H(complex(v), 1j) for v in q))


def build_linear_interp(cp: CurvePair, s0: float, n_samples: int = 1000) -> InterpolationMap:
    r = enclosing_radius(cp, s0, n_samples)
    return InterpolationMap(cp, float(s0), 1.05 * r)


def theorem_constants(theta, v_min, v_max, l_min, l_max):
    if not 0 < theta < math.pi / 2:
        raise ValueError("theta must lie in (0, pi/2)")
    if not (0 < v_min <= v_max and 0 < l_min <= l_max):
        raise ValueError("need 0 < v_min <= v_max and 0 < l_min <= l_max")
    s0 = math.sqrt(l_min * l_max / (v_min * v_max))
    q = s0 * v_max / l_min * complex(math.cos(theta), math.sin(theta))
    r = 2 * math.atanh(abs((q - 1) / (q + 1)))
    return s0, r


def curve_constants(cp: CurvePair, n_samples: int = 2001):
    """(theta, v_min, v_max, l_min, l_max) measured on samples of a curve pair."""
    t = np.linspace(0.0, cp.t0, n_samples)
    gap = cp.gamma2(t) - cp.gamma1(t)
    d1, d2 = cp.derivs(t)
    args = np.angle(np.concatenate([d1 / gap, d2 / gap]))
    theta = float(np.max(np.abs(args - math.pi / 2)))
    v = np.abs(np.concatenate([d1, d2]))
    l = np.abs(gap)
    return theta, float(v.min()), float(v.max()), float(l.min()), float(l.max())


# --- cells on the unit parameter square -------------------------------------

def segment(p, q):
    p, q = complex(p), complex(q)
    return (lambda t: p + (q - p) * np.asarray(t)), (lambda t: (q - p) * np.ones_like(np.asarray(t, dtype=float)))


@dataclass
class Cell:
    """Phi(s, t) = (1-s) g1(t) + s g2(t) on [0,1]^2."""

    g1: Callable
    dg1: Callable
    g2: Callable
    dg2: Callable

    @classmethod
    def quad(cls, z00, z10, z11, z01):
        g1, dg1 = segment(z00, z01)
        g2, dg2 = segment(z10, z11)
        return cls(g1, dg1, g2, dg2)

    def __call__(self, s, t):
        return (1 - s) * self.g1(t) + s * self.g2(t)

    def partials(self, s, t):
        return self.g2(t) - self.g1(t), (1 - s) * self.dg1(t) + s * self.dg2(t)

    def mu(self, s, t):
        return param_mu(*self.partials(s, t))

    def invert(self, z, tol=1e-13, maxit=60):
        z = np.asarray(z, dtype=complex)
        s = np.full(z.shape, 0.5)
        t = np.full(z.shape, 0.5)
        for _ in range(maxit):
            F = self(s, t) - z
            Fs, Ft = self.partials(s, t)
            det = Fs.real * Ft.imag - Ft.real * Fs.imag
            ds = -(F.real * Ft.imag - Ft.real * F.imag) / det
            dt = -(Fs.real * F.imag - F.real * Fs.imag) / det
            s = np.clip(s + ds, -0.5, 1.5)
            t = np.clip(t + dt, -0.5, 1.5)
            if z.size == 0 or np.max(np.abs(ds) + np.abs(dt)) < tol:
                break
        return s, t


def convex_quad_contains(corners, z, eps=1e-12):
    """Points inside the closed convex quad with CCW corners."""
    z = np.asarray(z, dtype=complex)
    inside = np.ones(z.shape, dtype=bool)
    c = list(corners)
    for p, q in zip(c, c[1:] + c[:1]):
        e = q - p
        cross = e.real * (z.imag - p.imag) - e.imag * (z.real - p.real)
        inside &= cross >= -eps * abs(e)
    return inside


@dataclass
class CellPair:
    """A source quad (bilinear) and a target cell sharing one unit parameter square."""

    corners: tuple  # source z00, z10, z11, z01 (CCW)
    target: Cell

    def __post_init__(self):
        self.source = Cell.quad(*self.corners)
        c = self.corners
        ccw = [c[0], c[1], c[2], c[3]]
        for k in range(4):
            p, q, r = ccw[k], ccw[(k + 1) % 4], ccw[(k + 2) % 4]
            if ((q - p).conjugate() * (r - q)).imag <= 0:
                raise ConstructionError("source quad must be convex and counter-clockwise")

    def contains(self, z):
        return convex_quad_contains(self.corners, z)

    def forward(self, z):
        s, t = self.source.invert(z)
        return self.target(s, t), s, t

    def mu_at_param(self, s, t):
        return compose_mu(self.target.mu(s, t), self.source.mu(s, t))


# --- Phi1 : Q -> Omega --------------------------------------------------------

class Phi1:
    """Four-cell homeomorphism of Q = [0, 2d pi]^2 onto Omega = (E minus D_R) in the first quadrant."""

    def __init__(self, d: int):
        if not 1 <= d <= 64:
            raise ValueError("d must lie in [1, 64]")
        self.d = d
        self.R = R = (d - 1.0 / 3.0) * math.pi
        self.L = L = 2 * d * math.pi
        self.xm = xm = 1.5 * d * math.pi
        self.p1 = p1 = complex(xm, R)
        self.p2 = p2 = complex(xm, 1.5 * R)
        arc = lambda t: R * np.exp(1j * (math.pi / 2) * np.asarray(t))
        darc = lambda t: 1j * (math.pi / 2) * R * np.exp(1j * (math.pi / 2) * np.asarray(t))
        g2, dg2 = segment(xm, p2)
        self.sources = [
            Cell.quad(xm, L, complex(L, R), p1),
            Cell.quad(p1, complex(L, R), complex(L, L), complex(xm, L)),
            Cell.quad(1j * R, p1, complex(xm, L), 1j * L),
            Cell.quad(0, xm, p1, 1j * R),
        ]
        self.targets = [
            Cell.quad(xm, L, complex(L, R), p2),
            Cell.quad(p2, complex(L, R), complex(L, L), complex(xm, L)),
            Cell.quad(1j * R, p2, complex(xm, L), 1j * L),
            Cell(arc, darc, g2, dg2),
        ]
        self.rects = [(xm, L, 0.0, R), (xm, L, R, L), (0.0, xm, R, L), (0.0, xm, 0.0, R)]

    def source_cell(self, q):
        q = np.asarray(q, dtype=complex)
        right = q.real >= self.xm
        low = q.imag <= self.R
        return np.where(right, np.where(low, 0, 1), np.where(low, 3, 2))

    def target_cell(self, z):
        """Cell index of points of Omega."""
        z = np.asarray(z, dtype=complex)
        L, R, xm, p2 = self.L, self.R, self.xm, self.p2
        right = z.real >= xm
        # line p2 -> L + iR
        y_a = p2.imag + (R - p2.imag) * (z.real - xm) / (L - xm)
        # line iR -> p2
        y_b = R + (p2.imag - R) * z.real / xm
        return np.where(right, np.where(z.imag <= y_a, 0, 1), np.where(z.imag <= y_b, 3, 2))

    def _source_param(self, k, q):
        x0, x1, y0, y1 = self.rects[k]
        return (q.real - x0) / (x1 - x0), (q.imag - y0) / (y1 - y0)

    def __call__(self, q):
        q = np.asarray(q, dtype=complex)
        out = np.empty(q.shape, dtype=complex)
        cell = self.source_cell(q)
        for k in range(4):
            m = cell == k
            s, t = self._source_param(k, q[m])
            out[m] = self.targets[k](s, t)
        return out

    def inverse(self, z):
        """Phi1^{-1}(z) and the cell index."""
        z = np.asarray(z, dtype=complex)
        out = np.empty(z.shape, dtype=complex)
        cell = self.target_cell(z)
        for k in range(4):
            m = cell == k
            if not m.any():
                continue
            s, t = self.targets[k].invert(z[m])
            x0, x1, y0, y1 = self.rects[k]
            out[m] = complex(1, 0) * (x0 + s * (x1 - x0)) + 1j * (y0 + t * (y1 - y0))
        return out, cell

    def mu(self, q):
        """Exact Beltrami coefficient of Phi1 at source points (rectangular sources)."""
        q = np.asarray(q, dtype=complex)
        out = np.empty(q.shape, dtype=complex)
        cell = self.source_cell(q)
        for k in range(4):
            m = cell == k
            s, t = self._source_param(k, q[m])
            x0, x1, y0, y1 = self.rects[k]
            Ps, Pt = self.targets[k].partials(s, t)
            out[m] = param_mu(Ps / (x1 - x0), Pt / (y1 - y0))
        return out


# --- Phi3 : S -> annulus -------------------------------------------------------

class Phi3:
    """Phi3 = Phi32 o Phi31^{-1} on the trapezoid S with vertices 0, 1, 1+(d-1/2)pi i, y_d i."""

    def __init__(self, d: int):
        self.d = d
        self.R = (d - 1.0 / 3.0) * math.pi
        self.y_d = (2 * d - 1) / (2 * d) * self.R
        self.top = (d - 0.5) * math.pi
        self.a = self.y_d / self.top

    def source_param(self, z):
        z = np.asarray(z, dtype=complex)
        s = z.real
        t = z.imag / ((1 - s) * self.a + s)
        return s, t

    def contains(self, z, eps=1e-12):
        z = np.asarray(z, dtype=complex)
        top = (1 - z.real) * self.y_d + z.real * self.top
        return (z.real >= -eps) & (z.real <= 1 + eps) & (z.imag >= -eps) & (z.imag <= top + eps)

    @staticmethod
    def outer(s, t):
        return (1 - s) * np.exp(1j * t) + s * 2 * np.cosh(1 + 1j * t)

    def __call__(self, z):
        s, t = self.source_param(z)
        return self.outer(s, t)

    def mu(self, z):
        s, t = self.source_param(z)
        a = self.a
        Ss, St = 1 + 1j * t * (1 - a), 1j * ((1 - s) * a + s)
        Ts = 2 * np.cosh(1 + 1j * t) - np.exp(1j * t)
        Tt = 1j * (1 - s) * np.exp(1j * t) + 2j * s * np.sinh(1 + 1j * t)
        return compose_mu(param_mu(Ts, Tt), param_mu(Ss, St))


# --- Phi2 : T -> A_* ------------------------------------------------------------

# Interior vertices I1..I4 of the six-cell subdivision of the shifted trapezoid
# and their images (odd-d frame); tuned numerically for a small d-uniform dilatation.
PHI2_SOURCE = (complex(0.6027001, 1.71072128), complex(0.59091004, 2.20600933),
               complex(0.2273805, 2.14670403), complex(0.25288134, 2.01192116))
PHI2_TARGET = (complex(-0.85419909, 1.58006788), complex(-1.87358402, 1.20350986),
               complex(-1.54187675, 0.46024526), complex(-1.39834678, 0.51000911))
# height of the extra circle-arc vertex, as a fraction of the way from a to m
PHI2_ARC_SPLIT = 0.34774078


class Phi2:
    """Six-cell map from the trapezoid T onto A_* honoring the boundary rules on every edge.

    Works in the frame shifted down by (d-1)pi i, where only the lower-left
    vertex a depends on d; images are computed for odd d and multiplied by (-1)^(d-1).
    Cells: two on the circle edge a-x-m, one each on the ellipse b-c, the
    hyperbola c-e and the real segment e-m, and a core quad I1 I2 I3 I4.
    """

    def __init__(self, d: int, source=PHI2_SOURCE, target=PHI2_TARGET, arc_split=PHI2_ARC_SPLIT):
        self.d = d
        self.R = R = (d - 1.0 / 3.0) * math.pi
        self.shift = (d - 1) * math.pi
        self.sign = -1.0 if (d - 1) % 2 else 1.0
        ya = (1.0 / 6.0 + 1.0 / (6.0 * d)) * math.pi
        ym = 2 * math.pi / 3
        a, b, c = complex(0, ya), complex(1, math.pi / 2), complex(1, 5 * math.pi / 6)
        e, m = complex(0, 5 * math.pi / 6), complex(0, ym)
        x = complex(0, ya + arc_split * (ym - ya))
        self.vertices = dict(a=a, b=b, c=c, e=e, m=m, x=x)
        I1, I2, I3, I4 = (complex(p) for p in source)
        J1, J2, J3, J4 = (complex(p) for p in target)
        cosh2 = lambda z: 2 * np.cosh(z)
        dcosh2 = lambda z: 2 * np.sinh(z)

        def along(p, q):
            return (lambda t: cosh2(p + (q - p) * np.asarray(t)),
                    lambda t: dcosh2(p + (q - p) * np.asarray(t)) * (q - p))

        # circle rule exp(i d pi y / R), written in the shifted odd-d frame
        th = lambda y: d * math.pi * (y + self.shift) / R - self.shift

        def arc(y0, y1):
            f = lambda t: np.exp(1j * th(y0 + (y1 - y0) * np.asarray(t)))
            return f, lambda t: 1j * d * math.pi / R * (y1 - y0) * f(t)

        xi = complex(np.exp(1j * th(x.imag)))
        seg = segment
        self.cells = [
            CellPair((a, b, I1, x), Cell(*arc(ya, x.imag), *seg(2j * math.sinh(1), J1))),
            CellPair((I1, b, c, I2), Cell(*seg(J1, J2), *along(b, c))),
            CellPair((I2, c, e, I3), Cell(*seg(J2, J3), *along(c, e))),
            CellPair((I3, e, m, I4), Cell(*seg(J3, J4), *along(e, m))),
            CellPair((x, I1, I4, m), Cell(*arc(x.imag, ym), *seg(J1, J4))),
            CellPair((I1, I2, I3, I4), Cell(*seg(J1, J4), *seg(J2, J3))),
        ]
        self.x_image = xi

    def to_frame(self, z):
        return np.asarray(z, dtype=complex) - 1j * self.shift

    def contains(self, z, eps=1e-12):
        zt = self.to_frame(z)
        v = self.vertices
        return convex_quad_contains((v["a"], v["b"], v["c"], v["e"]), zt, eps)

    def cell_index(self, z):
        zt = self.to_frame(z)
        idx = np.full(zt.shape, -1)
        for k, cp in enumerate(self.cells):
            m = (idx < 0) & cp.contains(zt)
            idx[m] = k
        return idx

    def __call__(self, z, return_index=False):
        zt = self.to_frame(z)
        out = np.full(zt.shape, np.nan + 0j)
        idx = self.cell_index(z)
        for k, cp in enumerate(self.cells):
            m = idx == k
            if m.any():
                out[m] = cp.forward(zt[m])[0]
        out = self.sign * out
        return (out, idx) if return_index else out

    def mu(self, z):
        zt = self.to_frame(z)
        out = np.full(zt.shape, np.nan)
        idx = self.cell_index(z)
        for k, cp in enumerate(self.cells):
            m = idx == k
            if m.any():
                s, t = cp.source.invert(zt[m])
                out[m] = cp.mu_at_param(s, t)
        return out


# --- pieces and G ------------------------------------------------------------------

@dataclass
class QRPiece:
    """A region-labelled map: evaluate(z) -> (values, integer labels)."""

    name: str
    box: Rectangle
    evaluate: Callable
    inside: Callable
    d: int | None = None
    declared_dilatation_bound: float | None = None
    critical_points: tuple = ()
    mu_exact: Callable | None = None
    meta: dict = field(default_factory=dict)

    def __call__(self, z):
        return self.evaluate(np.asarray(z, dtype=complex))[0]

    def label(self, z):
        return self.evaluate(np.asarray(z, dtype=complex))[1]


class CheckG:
    """The map on Q assembled from Phi2 on T, Phi3 on S and 2cosh elsewhere."""

    def __init__(self, d: int):
        self.d = d
        self.phi2 = Phi2(d)
        self.phi3 = Phi3(d)

    def region(self, q):
        q = np.asarray(q, dtype=complex)
        in_s = self.phi3.contains(q)
        in_t = ~in_s & self.phi2.contains(q)
        return in_s, in_t

    def __call__(self, q):
        q = np.asarray(q, dtype=complex)
        out = 2 * np.cosh(q)
        lab = np.zeros(q.shape, dtype=int)
        in_s, in_t = self.region(q)
        if in_s.any():
            out[in_s] = self.phi3(q[in_s])
            lab[in_s] = 1
        if in_t.any():
            v, idx = self.phi2(q[in_t], return_index=True)
            out[in_t] = v
            lab[in_t] = 2 + idx
        return out, lab

    def mu(self, q):
        q = np.asarray(q, dtype=complex)
        out = np.zeros(q.shape, dtype=complex)
        in_s, in_t = self.region(q)
        # returns the complex coefficient where available; magnitudes elsewhere
        if in_s.any():
            s, t = self.phi3.source_param(q[in_s])
            a = self.phi3.a
            Ss, St = 1 + 1j * t * (1 - a), 1j * ((1 - s) * a + s)
            Ts = 2 * np.cosh(1 + 1j * t) - np.exp(1j * t)
            Tt = 1j * (1 - s) * np.exp(1j * t) + 2j * s * np.sinh(1 + 1j * t)
            out[in_s] = _compose_complex(param_mu(Ts, Tt), param_mu(Ss, St), Ss, St)
        if in_t.any():
            zt = self.phi2.to_frame(q[in_t])
            idx = self.phi2.cell_index(q[in_t])
            vals = np.zeros(zt.shape, dtype=complex)
            for k, cp in enumerate(self.phi2.cells):
                m = idx == k
                if m.any():
                    s, t = cp.source.invert(zt[m])
                    Ss, St = cp.source.partials(s, t)
                    vals[m] = _compose_complex(cp.target.mu(s, t), cp.source.mu(s, t), Ss, St)
            out[in_t] = vals
        return out


def _compose_complex(mu_t, mu_s, Ss, St):
    """Complex coefficient of T o S^{-1} at S(p) from coefficients and partials of S at p."""
    Sz = (Ss - 1j * St) / 2
    return (mu_t - mu_s) / (1 - np.conj(mu_s) * mu_t) * (Sz / np.conj(Sz))


class GMap:
    """Cosh-power interpolation G on the square E = [-2d pi, 2d pi]^2."""

    def __init__(self, d: int, R: float | None = None):
        if not 1 <= d <= 64:
            raise ValueError("d must lie in [1, 64]")
        self.d = d
        self.R = (d - 1.0 / 3.0) * math.pi
        if R is not None and abs(R - self.R) > 1e-12 * self.R:
            raise ValueError("R must equal (d - 1/3) pi")
        self.L = 2 * d * math.pi
        self.phi1 = Phi1(d)
        self.check = CheckG(d)

    def quadrant_eval(self, z):
        """G on the closed first quadrant of E, with labels."""
        z = np.asarray(z, dtype=complex)
        out = np.empty(z.shape, dtype=complex)
        lab = np.zeros(z.shape, dtype=int)
        disc = np.abs(z) <= self.R
        out[disc] = (z[disc] / self.R) ** (2 * self.d)
        om = ~disc
        if om.any():
            q, cell = self.phi1.inverse(z[om])
            v, l2 = self.check(q)
            out[om] = v
            lab[om] = 1 + 10 * cell + l2
        return out, lab

    def evaluate(self, z):
        z = np.asarray(z, dtype=complex)
        w = np.abs(z.real) + 1j * np.abs(z.imag)
        v, lab = self.quadrant_eval(w)
        flip = np.sign(z.real) * np.sign(z.imag) < 0
        v = np.where(flip, np.conj(v), v)
        quad = (z.real < 0) * 1 + (z.imag < 0) * 2
        lab = np.where(lab == 0, 0, lab + 100 * quad)
        return v, lab

    def __call__(self, z):
        return self.evaluate(z)[0]

    def mu_abs_on_Q(self, q):
        """Exact |mu_G| at Phi1(q), from the coefficients of the check map and Phi1."""
        mg = self.check.mu(q)
        mp = self.phi1.mu(q)
        return np.abs(mg - mp) / np.abs(1 - np.conj(mp) * mg)

    def sampled_bound(self, n: int = 400) -> float:
        x = (np.arange(n) + 0.5) / n * self.L
        q = (x[None, :] + 1j * x[:, None]).ravel()
        k = float(np.max(k_of(self.mu_abs_on_Q(q))))
        # the thin cells S and T need their own sampling
        y = (np.arange(n) + 0.5) / n * (self.d - 1.0 / 6.0) * math.pi
        xs = (np.arange(n // 4) + 0.5) / (n // 4)
        q2 = (xs[None, :] + 1j * y[:, None]).ravel()
        return max(k, float(np.max(k_of(self.mu_abs_on_Q(q2)))))


def build_phi1(d: int) -> QRPiece:
    p = Phi1(d)
    L = p.L

    def ev(q):
        return p(q), p.source_cell(q)

    bound = float(np.max(k_of(np.abs(p.mu(_unit_samples(Rectangle(complex(L / 2, L / 2), L / 2, L / 2), 300))))))
    return QRPiece("phi1", Rectangle(complex(L / 2, L / 2), L / 2, L / 2), ev,
                   lambda q: (q.real >= 0) & (q.real <= L) & (q.imag >= 0) & (q.imag <= L),
                   d=d, declared_dilatation_bound=bound, mu_exact=lambda q: np.abs(p.mu(q)),
                   meta={"map": p})


def build_phi2(d: int) -> QRPiece:
    p = Phi2(d)
    v = p.vertices
    lo = v["a"].imag + p.shift
    hi = v["e"].imag + p.shift
    box = Rectangle(complex(0.5, (lo + hi) / 2), 0.5, (hi - lo) / 2)

    def ev(z):
        return p(z, return_index=True)

    samples = _unit_samples(box, 300)
    samples = samples[p.contains(samples)]
    bound = float(np.max(k_of(p.mu(samples))))
    return QRPiece("phi2", box, ev, p.contains, d=d, declared_dilatation_bound=bound,
                   mu_exact=p.mu, meta={"map": p})


def build_phi3(d: int) -> QRPiece:
    p = Phi3(d)
    box = Rectangle(complex(0.5, p.top / 2), 0.5, p.top / 2)

    def ev(z):
        z = np.asarray(z, dtype=complex)
        return p(z), np.zeros(z.shape, dtype=int)

    samples = _unit_samples(box, 300)
    samples = samples[p.contains(samples)]
    bound = float(np.max(k_of(p.mu(samples))))
    return QRPiece("phi3", box, ev, p.contains, d=d, declared_dilatation_bound=bound,
                   mu_exact=p.mu, meta={"map": p})


def build_G(d: int, R: float | None = None) -> QRPiece:
    g = GMap(d, R)
    L = g.L
    box = Rectangle(0j, L, L)
    inside = lambda z: (np.abs(z.real) <= L) & (np.abs(z.imag) <= L)
    return QRPiece("G", box, g.evaluate, inside, d=d, declared_dilatation_bound=g.sampled_bound(),
                   critical_points=(0j,), meta={"map": g})


def _unit_samples(box: Rectangle, n: int) -> np.ndarray:
    x = box.x0 + (np.arange(n) + 0.5) / n * (box.x1 - box.x0)
    y = box.y0 + (np.arange(n) + 0.5) / n * (box.y1 - box.y0)
    return (x[None, :] + 1j * y[:, None]).ravel()


# --- shift map rho_w -------------------------------------------------------------

RHO_INNER = 0.125 * math.exp(0.1)
RHO_OUTER = math.exp(-0.02)
RHO_SECTORS = 8


class RhoMap:
    """Identity near the unit circle, translation by w on a disc containing D_{1/8}.

    In polar coordinates each middle-band cell is the linear interpolation
    between the translated inner circle and the fixed outer circle, so
    rho_w(z) = z + lam(|z|) w with lam falling linearly from 1 to 0.
    """

    def __init__(self, w, r_in=RHO_INNER, r_out=RHO_OUTER, sectors=RHO_SECTORS):
        w = complex(w)
        if abs(w) >= 0.75:
            raise ValueError("|w| must be < 3/4")
        self.w, self.r_in, self.r_out, self.sectors = w, r_in, r_out, sectors

    def lam(self, r):
        return np.clip((self.r_out - r) / (self.r_out - self.r_in), 0.0, 1.0)

    def evaluate(self, z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        band = (r > self.r_in).astype(int) + (r >= self.r_out).astype(int)
        sector = np.floor((np.angle(z) + math.pi) / (2 * math.pi) * self.sectors).astype(int) % self.sectors
        lab = np.where(band == 1, 10 + sector, band)
        return z + self.lam(r) * self.w, lab

    def __call__(self, z):
        return self.evaluate(z)[0]

    def mu(self, z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        mid = (r > self.r_in) & (r < self.r_out)
        dl = np.where(mid, -1.0 / (self.r_out - self.r_in), 0.0)
        rr = np.where(r > 0, r, 1.0)
        fz = 1 + self.w * dl * np.conj(z) / (2 * rr)
        fzb = self.w * dl * z / (2 * rr)
        return fzb / fz

    def sup_k(self):
        a = abs(self.w) / (2 * (self.r_out - self.r_in))
        return float(k_of(a / (1 - a))) if a < 1 else math.inf


def build_rho(w) -> QRPiece:
    rho = RhoMap(w)
    inside = lambda z: np.abs(z) <= 1.0
    return QRPiece("rho", Rectangle(0j, 1.0, 1.0), rho.evaluate, inside,
                   declared_dilatation_bound=rho.sup_k(), mu_exact=lambda z: np.abs(rho.mu(z)),
                   meta={"map": rho, "w": [rho.w.real, rho.w.imag]})


def piece_from_function(name, f, box: Rectangle, inside=None, labels=None) -> QRPiece:
    """Wrap a plain vectorized map as a single-region piece."""
    inside = inside or (lambda z: box.contains(z))

    def ev(z):
        z = np.asarray(z, dtype=complex)
        lab = labels(z) if labels else np.zeros(z.shape, dtype=int)
        return f(z), lab

    return QRPiece(name, box, ev, inside)


# --- dilatation estimator -------------------------------------------------------------

NEIGHBOURS = np.exp(1j * np.pi / 4 * np.arange(8))


def wirtinger(f, z, h):
    """(f_z, f_zbar) by central differences at h and h/2 with Richardson extrapolation."""

    def cd(step):
        fx = (f(z + step) - f(z - step)) / (2 * step)
        fy = (f(z + 1j * step) - f(z - 1j * step)) / (2 * step)
        return fx, fy

    fx1, fy1 = cd(h)
    fx2, fy2 = cd(h / 2)
    fx = (4 * fx2 - fx1) / 3
    fy = (4 * fy2 - fy1) / 3
    return (fx - 1j * fy) / 2, (fx + 1j * fy) / 2


def grid_nodes(box: Rectangle, nx: int, ny: int | None = None):
    ny = ny or nx
    x = np.linspace(box.x0, box.x1, nx)
    y = np.linspace(box.y0, box.y1, ny)
    return x[None, :] + 1j * y[:, None], x[1] - x[0], y[1] - y[0]


def seam_jumps(piece: QRPiece, Z, lab, delta=None, iters=60):
    """Max relative jump of the map across label changes between horizontally/vertically adjacent nodes."""
    pairs = []
    for a, b, la, lb in ((Z[:, :-1], Z[:, 1:], lab[:, :-1], lab[:, 1:]),
                         (Z[:-1, :], Z[1:, :], lab[:-1, :], lab[1:, :])):
        m = (la != lb) & (la >= 0) & (lb >= 0)
        pairs.append((a[m], b[m], la[m]))
    za = np.concatenate([p[0] for p in pairs])
    zb = np.concatenate([p[1] for p in pairs])
    l0 = np.concatenate([p[2] for p in pairs])
    if za.size == 0:
        return 0.0, 0
    scale = float(np.max(np.abs([piece.box.half_width, piece.box.half_height])))
    delta = delta or 1e-10 * scale
    lo, hi = np.zeros(za.shape), np.ones(za.shape)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        same = piece.label(za + mid * (zb - za)) == l0
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    u = (zb - za) / np.abs(zb - za)
    zs = za + 0.5 * (lo + hi) * (zb - za)
    fa, fb = piece(zs - delta * u), piece(zs + delta * u)
    rel = np.abs(fa - fb) / (1 + np.maximum(np.abs(fa), np.abs(fb)))
    return float(np.nanmax(rel)), int(za.size)


def estimate_dilatation(piece: QRPiece, grid_res: int = 256, seams: bool = True, crit_cells: float = 8.0):
    if grid_res < 64:
        raise ValueError("grid_res must be >= 64")
    Z, dx, dy = grid_nodes(piece.box, grid_res)
    h = min(dx, dy) / 8
    inner = np.zeros(Z.shape, dtype=bool)
    inner[1:-1, 1:-1] = True
    vals, lab = piece.evaluate(Z)
    lab = np.where(piece.inside(Z), lab, -1)
    keep = inner & (lab >= 0)
    near_seam = np.zeros(Z.shape, dtype=bool)
    for u in NEIGHBOURS:
        zn = Z + 2 * h * u
        ok = piece.inside(zn)
        keep &= ok
        near_seam |= ok & inner & (lab >= 0) & (piece.label(zn) != lab)
    excluded_seam = int((keep & near_seam).sum())
    keep &= ~near_seam
    near_crit = np.zeros(Z.shape, dtype=bool)
    for c in piece.critical_points:
        near_crit |= np.abs(Z - c) < crit_cells * max(dx, dy)
    excluded_crit = int((keep & near_crit).sum())
    keep &= ~near_crit
    pts = Z[keep]
    fz, fzb = wirtinger(piece, pts, h)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.abs(fzb / fz)
    mu = np.where(np.isfinite(mu), mu, np.inf)
    k = int(np.argmax(mu)) if mu.size else 0
    sup_mu = float(mu[k]) if mu.size else 0.0
    report = {
        "piece": piece.name,
        "d": piece.d,
        "grid_res": grid_res,
        "sup_mu": sup_mu,
        "sup_K": float(k_of(sup_mu)) if sup_mu < 1 else math.inf,
        "argmax": [float(pts[k].real), float(pts[k].imag)] if mu.size else [0.0, 0.0],
        "seam_jump": 0.0,
        "excluded_band": excluded_seam + excluded_crit,
        "orientation_violations": int((mu >= 1).sum()),
        "n_points": int(mu.size),
    }
    if seams:
        report["seam_jump"], report["n_seam_crossings"] = seam_jumps(piece, Z, lab)
    return report


def assert_orientation(report):
    if report["orientation_violations"]:
        raise OrientationViolation(
            f"{report['piece']}: |mu| >= 1 at {report['orientation_violations']} points, e.g. {report['argmax']}")
    return report
