"""Toy-scale dynamics: center chains, containment checks, shooting for the critical
values, inclusion checks, orbits and escape-time fields."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .base_map import Schedule, build_schedule, g_inverse_branch
from .beltrami import ComposedMap, GridMap, invert_gridmap, sample_mu, solve_mrmt
from .core import DomainError, Rectangle
from .qrmap import ParameterSequence, QRMap, shifted_rectangle

M_DEPTH = 3
SHOOT_CENTER = 0.5
SHOOT_RADIUS = 0.125


@dataclass(frozen=True)
class ToyConfig:
    d: tuple = (2, 3, 4)
    gap_factor: float = 1.5
    h: tuple | None = (10 * math.pi, 60 * math.pi, 100 * math.pi)
    first_index: int = 1
    resolution: tuple = (256, 256)
    margin: float = 2.0
    tol: float = 1e-8
    max_terms: int = 200
    variant: str = "even"
    order: int = 2

    def schedule(self) -> Schedule:
        p = {"d": list(self.d), "gap_factor": self.gap_factor, "first_index": self.first_index}
        if self.h is not None:
            p["h"] = list(self.h)
        return build_schedule(len(self.d), "toy", p)

    def to_json(self) -> dict:
        return {"d": list(self.d), "gap_factor": self.gap_factor, "first_index": self.first_index,
                "h": None if self.h is None else list(self.h),
                "resolution": list(self.resolution), "margin": self.margin, "tol": self.tol,
                "max_terms": self.max_terms, "variant": self.variant, "order": self.order}

    @classmethod
    def from_json(cls, d: dict) -> "ToyConfig":
        d = dict(d)
        for k in ("d", "resolution", "h"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


def identity_gridmap(box: Rectangle, resolution) -> GridMap:
    nx, ny = resolution
    x = np.linspace(box.x0, box.x1, nx)
    y = np.linspace(box.y0, box.y1, ny)
    return GridMap(box, (nx, ny), x[None, :] + 1j * y[:, None], meta={"terms": 0, "residuals": []})


class ToyInstance:
    """A toy schedule, its map g_w, the solved phi and f = g_w o phi^{-1}."""

    def __init__(self, cfg: ToyConfig, params: ParameterSequence, mu_scale: float = 1.0):
        self.cfg = cfg
        self.schedule = cfg.schedule()
        self.params = params
        self.M = M_DEPTH
        self.g = QRMap(self.schedule, params, cfg.variant)
        self.window = self.g.bounding_box(cfg.margin)
        self.mu_scale = mu_scale
        if mu_scale == 0:
            self.field = None
            self.phi = identity_gridmap(self.window, cfg.resolution)
        else:
            self.field = sample_mu(self.g, self.g.support_mask, self.window, cfg.resolution, scale=mu_scale)
            self.phi = solve_mrmt(self.field, cfg.tol, cfg.max_terms)
        self.f = ComposedMap(self.g, self.phi)
        self._rprime = {}

    @property
    def N(self) -> int:
        return self.schedule.N

    @property
    def top(self) -> int:
        return self.schedule.top

    @property
    def T(self) -> int:
        return self.top - 1

    def h(self, n: int) -> float:
        return self.schedule[n].h_val

    def R(self, n: int) -> float:
        return self.schedule[n].R_val

    def phi_at(self, z):
        return self.phi(z)

    def pullback(self, w):
        """One step of phi o g^{-1}."""
        return self.phi(g_inverse_branch(w))

    # -- centers -------------------------------------------------------------------
    def chain_map(self, z):
        """Psi = (phi o g^{-1})^M, the branch sending a neighbourhood of phi(i h_n) to U_n."""
        for _ in range(self.M):
            z = self.pullback(z)
        return z

    def chain_derivative(self, z) -> complex:
        """|Psi'| by the chain rule along the pullback orbit."""
        der = 1.0 + 0j
        z = complex(z)
        for _ in range(self.M):
            u = complex(g_inverse_branch(z))
            der *= 1.0 / (2 * np.sinh(u))
            der *= self.phi_derivative(u)
            z = complex(self.phi(u))
        return der

    def phi_derivative(self, z) -> complex:
        """phi_z by central differences on the grid interpolant."""
        hstep = 0.5 * min(self.phi.dx, self.phi.dy)
        fx = (self.phi(z + hstep) - self.phi(z - hstep)) / (2 * hstep)
        fy = (self.phi(z + 1j * hstep) - self.phi(z - 1j * hstep)) / (2 * hstep)
        return complex((fx - 1j * fy) / 2)

    def rprime(self, n: int) -> float:
        if n not in self._rprime:
            self._rprime[n] = inscribed_radius(self, n)
        return self._rprime[n]

    def in_U(self, n: int, z):
        """Membership in U_n: f^M(z) lies in D(phi(i h_n), R'_n)."""
        z = np.asarray(z, dtype=complex)
        center = complex(self.phi(1j * self.h(n)))
        ok = np.ones(z.shape, dtype=bool)
        w = z.copy()
        for _ in range(self.M):
            nxt = np.full(w.shape, np.nan + 0j)
            inside = ok & self.window.contains(w)
            if inside.any():
                pre = invert_gridmap(self.phi, w[inside], strict=False)
                good = np.isfinite(pre)
                vals = np.full(pre.shape, np.nan + 0j)
                vals[good] = self.g(pre[good])
                nxt[inside] = vals
            ok &= np.isfinite(nxt)
            w = np.where(ok, nxt, 0)
        return ok & (np.abs(w - center) < self.rprime(n))


@dataclass
class CenterChain:
    n: int
    hat_c: list
    c: list
    c_n: complex
    residuals: list = field(default_factory=list)
    in_Q: bool = True


def center_chain(n: int, inst: ToyInstance) -> CenterChain:
    z = complex(inst.phi(1j * inst.h(n)))
    hats, cs, res = [], [], []
    for k in range(inst.M):
        hat = complex(g_inverse_branch(z))
        res.append(abs(2 * np.cosh(hat) - z))
        hats.append(hat)
        z = complex(inst.phi(hat))
        cs.append(z)
    q = inst.schedule[n].Q
    in_q = bool(q.contains(hats[0]))
    if not in_q:
        raise DomainError(f"chain point {hats[0]} at level {n} leaves Q_{n}")
    return CenterChain(n, hats, cs, z, res, in_q)


def centers(inst: ToyInstance) -> dict:
    return {n: center_chain(n, inst).c_n for n in inst.schedule.indices}


RPRIME_SAFETY = 0.999


def inscribed_radius(inst: ToyInstance, n: int, n_dirs: int = 1024, iters: int = 40) -> float:
    """Largest rho with D(phi(i h_n), rho) inside phi(D(i h_n, R_n/2)), by radial bisection."""
    c = 1j * inst.h(n)
    pc = complex(inst.phi(c))
    half = inst.R(n) / 2
    u = np.exp(2j * np.pi * np.arange(n_dirs) / n_dirs)
    lo = np.zeros(n_dirs)
    hi = np.full(n_dirs, 2.0 * inst.R(n))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pre = invert_gridmap(inst.phi, pc + mid * u, strict=False)
        inside = np.isfinite(pre) & (np.abs(pre - c) <= half)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    # directions are sampled; back off slightly so the whole circle stays inside
    return RPRIME_SAFETY * float(lo.min())


def inner_radius_measured(inst: ToyInstance, n: int, n_dirs: int = 128, iters: int = 30) -> float:
    """Largest rho with D(c_n, rho) inside U_n, by radial bisection."""
    c = center_chain(n, inst).c_n
    u = np.exp(2j * np.pi * np.arange(n_dirs) / n_dirs)
    lo = np.zeros(n_dirs)
    # Psi is close to linear at this scale; the Koebe bound gives a safe upper start
    hi = np.full(n_dirs, 8 * abs(inst.chain_derivative(inst.phi(1j * inst.h(n)))) * inst.rprime(n) + 1e-12)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = inst.in_U(n, c + mid * u)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return float(lo.min())


# --- containment ---------------------------------------------------------------------

def containment_suite(inst: ToyInstance, n_samples: int = 1000, shrink: float = 1.0) -> dict:
    """Boundary-sampled containments of the pullback chain at toy depth.

    shrink < 1 contracts the target windows g(Q_n) (negative control).
    """
    s = inst.schedule
    items = []
    for e in s.entries:
        n = e.n
        Q = e.Q
        # phi(D_{+n}) inside g(Q_n): every boundary point has a preimage under g in Q_n
        ring = inst.phi(1j * e.h_val + e.R_val * np.exp(2j * np.pi * np.arange(n_samples) / n_samples))
        pre = g_inverse_branch(ring)
        qs = Rectangle(Q.center, Q.half_width * shrink, Q.half_height * shrink)
        ok = qs.contains(pre)
        margin = float(np.min(np.minimum(qs.half_width - np.abs(pre.real - qs.center.real),
                                         qs.half_height - np.abs(pre.imag - qs.center.imag))))
        items.append({"check": f"phi(D_{n}) in g(Q_{n})", "pass": bool(ok.all()), "margin": margin})
        # the chain from Q_n lands near the base point after M - 1 further pullbacks
        bd = qs.boundary(n_samples)
        img = bd
        for _ in range(inst.M):
            img = inst.phi(img) if _ == 0 else inst.pullback(img)
        dist = float(np.max(np.abs(img - SHOOT_CENTER)))
        # not attainable at toy heights; reported, not gated
        items.append({"check": f"chain image of Q_{n} in D(1/2, 1/8)", "pass": dist < SHOOT_RADIUS,
                      "margin": SHOOT_RADIUS - dist, "informational": True})
    for n in s.indices:
        rp = inst.rprime(n)
        items.append({"check": f"R'_{n} = C4 R_{n}", "pass": rp > 0, "C4": rp / inst.R(n), "Rprime": rp})
    return {"items": items, "pass": all(i["pass"] for i in items if not i.get("informational")),
            "Rprime": {n: inst.rprime(n) for n in s.indices}}


# --- shooting -----------------------------------------------------------------------------

def shoot_map(cfg: ToyConfig, params: ParameterSequence, mu_scale: float = 1.0):
    """w -> (c_{n+1}(w))_{N <= n <= T} together with the instance."""
    inst = ToyInstance(cfg, params, mu_scale)
    cs = centers(inst)
    new = [cs[n + 1] for n in range(params.N, params.T + 1)]
    return new, inst


def shoot(cfg: ToyConfig, w0=None, tol: float = 1e-6, max_iter: int = 30, mu_scale: float = 1.0,
          log=None) -> dict:
    sched = cfg.schedule()
    N, T = sched.N, sched.top - 1
    if T < N:
        raise ValueError("shooting needs at least two squares")
    w0 = list(w0) if w0 is not None else [0.5] * (T - N + 1)
    params = ParameterSequence(tuple(w0), N, 0.5)
    history, incs, excursions = [], [], []
    converged = False
    for k in range(max_iter):
        new, _ = shoot_map(cfg, params, mu_scale)
        inc = max(abs(a - b) for a, b in zip(new, params.w))
        incs.append(inc)
        history.append([[v.real, v.imag] for v in new])
        if any(abs(v - SHOOT_CENTER) > SHOOT_RADIUS for v in new):
            excursions.append(k)
        if log:
            log(f"iteration {k}: increment {inc:.3e}")
        params = params.replace(new)
        if inc < tol:
            converged = True
            break
    ratios = [b / a for a, b in zip(incs, incs[1:]) if a > 0]
    contraction = max(ratios[-3:]) if ratios else 0.0
    return {"w": params, "converged": converged, "iterations": len(incs), "increments": incs,
            "contraction": contraction, "excursions": excursions, "history": history}


def fixed_point_residual(cfg: ToyConfig, params: ParameterSequence, mu_scale: float = 1.0) -> float:
    """sup_n |w_n - c_{n+1}(w)|, rebuilt from scratch."""
    new, _ = shoot_map(cfg, params, mu_scale)
    return max(abs(a - b) for a, b in zip(new, params.w))


# --- inclusions ------------------------------------------------------------------------------

def verify_inclusions(inst: ToyInstance, n_samples: int = 512) -> dict:
    rows = []
    th = np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    for n in range(inst.params.N, inst.params.T + 1):
        if n + 1 > inst.top:
            break
        wn = inst.params.get(n)
        d = inst.schedule[n].d_val
        small = 0.5 ** (2 * d)
        center = complex(inst.phi(1j * inst.h(n)))
        img = inst.f(center + inst.rprime(n) * th)
        first = small - float(np.max(np.abs(img - wn)))
        chain = center_chain(n + 1, inst)
        rho_hat = inner_radius_measured(inst, n + 1)
        second = rho_hat - (abs(wn - chain.c_n) + small)
        rows.append({"n": n, "d": d, "image_margin": first, "rho_hat": rho_hat,
                     "target_radius": small, "center_gap": abs(wn - chain.c_n),
                     "inclusion_margin": second, "pass": bool(first > 0 and second > 0)})
    return {"rows": rows, "pass": all(r["pass"] for r in rows) and bool(rows)}


def koebe_check(inst: ToyInstance, n: int, slack: float = 0.05) -> dict:
    center = complex(inst.phi(1j * inst.h(n)))
    der = abs(inst.chain_derivative(center))
    bound = 0.25 * der * inst.rprime(n)
    rho = inner_radius_measured(inst, n)
    return {"n": n, "rho_hat": rho, "koebe_lower": bound, "pass": rho >= bound * (1 - slack)}


def oscillation_waypoints(inst: ToyInstance, n: int, steps: int | None = None) -> dict:
    """Orbit of c_n under f: the disc at level n after M steps, then near w_n."""
    z = center_chain(n, inst).c_n
    orbit = [z]
    for _ in range(steps or inst.M + 1):
        z = complex(inst.f(np.array([z]))[0])
        orbit.append(z)
    center = complex(inst.phi(1j * inst.h(n)))
    hit_disc = abs(orbit[inst.M] - center) < inst.rprime(n)
    back = abs(orbit[inst.M + 1] - inst.params.get(n)) < 0.5 ** (2 * inst.schedule[n].d_val)
    return {"orbit": orbit, "visits_disc": bool(hit_disc), "returns_near_w": bool(back)}


# --- orbits and fields -------------------------------------------------------------------------

@dataclass
class Orbit:
    points: list
    classification: str
    escape_index: int | None = None
    flags: list = field(default_factory=list)


def iterate_orbit(fmap, z0, max_iter: int = 100, bailout: float = 1e3, window: Rectangle | None = None) -> Orbit:
    z = complex(z0)
    pts = [z]
    for k in range(1, max_iter + 1):
        if window is not None and not window.contains(z):
            return Orbit(pts, "undecided", None, ["left window"])
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                z = complex(np.asarray(fmap(np.array([z])))[0])
        except (OverflowError, DomainError) as exc:
            if isinstance(exc, OverflowError):
                return Orbit(pts, "escaping", k)
            return Orbit(pts, "undecided", None, ["left window"])
        pts.append(z)
        if not np.isfinite(z) or abs(z) > bailout:
            return Orbit(pts, "escaping", k)
    return Orbit(pts, "bounded" if all(abs(p) <= bailout for p in pts) else "undecided")


def escape_time_field(fmap, window: Rectangle, resolution, max_iter: int = 50, bailout: float = 1e3):
    """First-escape iteration per pixel (rows top to bottom); -1 marks pixels that never escape."""
    nx, ny = resolution
    x = window.x0 + (np.arange(nx) + 0.5) * (window.x1 - window.x0) / nx
    y = window.y1 - (np.arange(ny) + 0.5) * (window.y1 - window.y0) / ny
    z = (x[None, :] + 1j * y[:, None]).ravel()
    out = np.full(z.shape, -1, dtype=np.int32)
    alive = np.ones(z.shape, dtype=bool)
    for k in range(1, max_iter + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            # 2cosh overflows beyond Re ~ 710: those points escape now
            zi = z[idx]
            big = np.abs(zi.real) > 700
            nz = np.full(zi.shape, np.inf + 0j)
            if (~big).any():
                nz[~big] = fmap(zi[~big])
        esc = ~np.isfinite(nz) | (np.abs(nz) > bailout)
        out[idx[esc]] = k
        alive[idx[esc]] = False
        z[idx[~esc]] = nz[~esc]
    return out.reshape(ny, nx)


def real_line_deviation(phi: GridMap, n_samples: int = 1000) -> float:
    """sup |Im phi(x)| over real samples in the solver box, relative to the box scale."""
    box = phi.box
    x = np.linspace(box.x0, box.x1, n_samples)
    scale = max(box.half_width, box.half_height)
    return float(np.max(np.abs(phi(x + 0j).imag)) / scale)


def chain_p1_rectangles(s: Schedule) -> list:
    """The shifted rectangles Q'_n used by the order-1/2 pullback chain."""
    return [shifted_rectangle(e.x_val) for e in s.entries]
