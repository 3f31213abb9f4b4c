"""Singular area integrals over discs, disc-family checks, and the log-scale inclusion ledger."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .base_map import Schedule, _small, growth_logs, reference_orbit
from .core import Disc, LogReal, logreal_encode

H_CASE = 6.0
ETA_CASE = 0.25
DEFAULT_DELTA1 = 0.1
DEFAULT_C = 1.0


def _quad(f, a, b, points=None, epsrel=1e-10):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        return quad(f, a, b, points=points, epsabs=0.0, epsrel=epsrel, limit=200)[0]


def _ray_interval(c: complex, r: float, theta: float):
    """[rho1, rho2] of the ray from 0 in direction theta inside the disc D(c, r), or None."""
    u = complex(math.cos(theta), math.sin(theta))
    b = (c.conjugate() * u).real
    disc = b * b - (abs(c) ** 2 - r * r)
    if disc <= 0:
        return None
    s = math.sqrt(disc)
    lo, hi = b - s, b + s
    if hi <= 0:
        return None
    return max(lo, 0.0), hi


def _angular_range(c: complex, r: float):
    """Angles hitting D(c, r) from the origin, as (start, end) with breakpoints."""
    if abs(c) <= r:
        return 0.0, 2 * math.pi, None
    half = math.asin(min(1.0, r / abs(c)))
    a = math.atan2(c.imag, c.real)
    return a - half, a + half, [a]


def disc_pole_integral(alpha, r: float, beta) -> float:
    """Area integral of 1/|z - beta| over D(alpha, r), in polar coordinates about beta."""
    if not r > 0:
        raise ValueError("r must be positive")
    c = (complex(alpha) - complex(beta)) / r
    # radial integral of (1/rho) rho drho is the chord length; scale out r
    lo, hi, pts = _angular_range(c, 1.0)

    def chord(th):
        iv = _ray_interval(c, 1.0, th)
        return 0.0 if iv is None else iv[1] - iv[0]

    return r * _quad(chord, lo, hi, points=pts)


def _polar_area_integral(F, c: complex, r: float, epsrel=1e-9):
    """Area integral of F over D(c, r) in polar coordinates about 0, F(z) * rho integrable."""
    lo, hi, pts = _angular_range(c, r)

    def inner(th):
        iv = _ray_interval(c, r, th)
        if iv is None:
            return 0.0
        u = complex(math.cos(th), math.sin(th))
        return _quad(lambda rho: F(rho * u) * rho, iv[0], iv[1], epsrel=epsrel)

    return _quad(inner, lo, hi, points=pts, epsrel=epsrel)


@dataclass(frozen=True)
class DiscFamily:
    discs: tuple
    K: float = 2.0

    @classmethod
    def of(cls, pairs, K=2.0):
        return cls(tuple(Disc(complex(z), float(r)) for z, r in pairs), K)


def key_inequality_terms(alpha, beta, gamma, family: DiscFamily) -> list[float]:
    """Per-disc integrals of |beta - alpha| / |(z - alpha)(z - beta)(z - gamma)|."""
    a, b, g = complex(alpha), complex(beta), complex(gamma)
    out = []
    for D in family.discs:
        # work about the singularity nearest the disc, in units of the disc radius
        p = min((a, b, g), key=lambda s: abs(s - D.center))
        sc = D.radius
        A, B, G = (a - p) / sc, (b - p) / sc, (g - p) / sc
        c = (D.center - p) / sc
        w = abs(B - A)
        F = lambda z: w / (abs(z - A) * abs(z - B) * abs(z - G))
        out.append(_polar_area_integral(F, c, 1.0))
    return out


def key_inequality_rhs(alpha, beta, gamma, family: DiscFamily, C: float = DEFAULT_C,
                       delta1: float = DEFAULT_DELTA1, detail: bool = False):
    a, b, g = complex(alpha), complex(beta), complex(gamma)
    if not 0 < abs(g - a) <= delta1 * abs(b - a):
        raise ValueError("need 0 < |gamma - alpha| <= delta1 |beta - alpha|")
    terms = key_inequality_terms(a, b, g, family)
    total = C * (family.K - 1) * sum(terms)
    if detail:
        return {"value": total, "per_disc": terms, "C": C, "delta1": delta1, "K": family.K}
    return total


def case_threshold(H=H_CASE, eta=ETA_CASE) -> float:
    return (1 + H * eta) / (H - 1)


def case1_bound(zeta, r, H=H_CASE, eta=ETA_CASE) -> float:
    return 8 * H * (1 + eta) / (3 * (H - 1)) * 2 * math.pi * r / abs(zeta)


def case2_bound(zeta, r, H=H_CASE) -> float:
    return 16 * math.pi * H / 3 * r * r / abs(zeta) ** 2


def which_case(beta, zeta, H=H_CASE, eta=ETA_CASE) -> int:
    return 1 if abs(complex(beta) - complex(zeta)) <= case_threshold(H, eta) * abs(complex(zeta)) else 2


def random_case_config(rng, case: int, delta1=DEFAULT_DELTA1, eta=ETA_CASE, H=H_CASE):
    """(beta, gamma, zeta, r) with alpha = 0 in the regime |gamma| <= 1/delta1, |zeta| >= 4/delta1."""
    zeta = (4 / delta1) * (1 + 9 * rng.random()) * np.exp(2j * np.pi * rng.random())
    r = abs(zeta) * min(eta, delta1) * (0.05 + 0.95 * rng.random())
    t = case_threshold(H, eta) * abs(zeta)
    while True:
        if case == 1:
            beta = zeta + t * math.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random())
        else:
            beta = zeta + t * (1.0001 + 3 * rng.random()) * np.exp(2j * np.pi * rng.random())
        if abs(beta) > 0 and which_case(beta, zeta, H, eta) == case:
            break
    gmax = min(1 / delta1, delta1 * abs(beta))
    gamma = gmax * (0.05 + 0.95 * rng.random()) * np.exp(2j * np.pi * rng.random())
    return complex(beta), complex(gamma), complex(zeta), float(r)


# --- family checks ---------------------------------------------------------------

def separation_constant(family: DiscFamily, n_samples: int = 256) -> float:
    """min over pairs of boundary samples of |z - z'| / sqrt(|z z'|)."""
    th = 2 * np.pi * np.arange(n_samples) / n_samples
    bds = [D.center + D.radius * np.exp(1j * th) for D in family.discs]
    best = math.inf
    for i in range(len(bds)):
        for j in range(i + 1, len(bds)):
            z, w = bds[i][:, None], bds[j][None, :]
            best = min(best, float(np.min(np.abs(z - w) / np.sqrt(np.abs(z * w)))))
    return best


def check_assumption(family: DiscFamily, delta1: float = DEFAULT_DELTA1) -> dict:
    far = [abs(D.center) >= 4 for D in family.discs]
    ratio = [D.radius / abs(D.center) if D.center != 0 else math.inf for D in family.discs]
    small = [q <= min(0.25, delta1) for q in ratio]
    partial = np.cumsum(ratio).tolist() if ratio else []
    c1 = separation_constant(family) if len(family.discs) > 1 else math.inf
    return {"centers_far": all(far), "radius_ratio_small": all(small),
            "violations": [k for k, (a, b) in enumerate(zip(far, small)) if not (a and b)],
            "partial_sums": partial, "C1": c1, "delta1": delta1, "K": family.K}


def schedule_separation_log(s: Schedule, n_lo: int = 3, n_hi: int = 10, scale: float = 3.0) -> dict:
    """Lower bounds for |z - z'|/sqrt|z z'| over the discs D(+-i h_n, scale R_n), via log-scale ratios.

    Same level: (2 - 2 s R/h)/(1 + s R/h). Levels n < m: the pair ratio is at least
    sqrt(h_m/h_n) (1 - s R_m/h_m - h_n/h_m - s R_n/h_m) / sqrt((1 + s R_m/h_m)(1 + s R_n/h_n)).
    """
    if s.mode != "true_scale":
        raise ValueError("needs the true-scale schedule")
    xs = reference_orbit(n_hi + 2)
    q = {}
    for n in range(n_lo, n_hi + 1):
        lg = growth_logs(xs, n)
        q[n] = (lg["log_h"], _small(LogReal(1, lg["log_ratio"])))
    same = {n: (2 - 2 * scale * rh) / (1 + scale * rh) for n, (_, rh) in q.items()}
    cross = {}
    for n in q:
        for m in q:
            if m <= n:
                continue
            lhn, rhn = q[n]
            lhm, rhm = q[m]
            log_ratio = lhn - lhm  # log(h_n/h_m)
            hn_hm = _small(LogReal(1, log_ratio))
            rn_hm = rhn * hn_hm
            lin = 1 - scale * rhm - hn_hm - scale * rn_hm
            lr = -0.5 * log_ratio + logreal_encode(math.log(lin)
                                                  - 0.5 * math.log((1 + scale * rhm) * (1 + scale * rhn)))
            cross[(n, m)] = lr
    lows = list(same.values())
    if cross:
        worst_cross = min(cross.values())
        lows.append(math.exp(worst_cross.to_float()) if worst_cross < logreal_encode(700.0) else math.inf)
    return {"same_level": same, "min_ratio": min(lows), "C1_half_holds": min(lows) >= 0.5}


# --- inner radius / inclusion ledger ---------------------------------------------------

def inner_radius_log(n: int, C5: float, orbit: list) -> LogReal:
    """log rho_n = -n C5 - sum_{j<n} x_j - x_{n-1}."""
    if n < 1 or len(orbit) < n:
        raise ValueError("orbit must cover indices 0..n-1")
    tot = logreal_encode(n * C5)
    for j in range(n):
        tot = tot + orbit[j]
    tot = tot + orbit[n - 1]
    return -tot


def inclusion_check(n: int, C5: float, s: Schedule, orbit: list | None = None) -> bool:
    """(1/2)^(2 d_n) < rho_{n+1}, i.e. 2 d_n log 2 > (n+1) C5 + sum_{j<=n} x_j + x_n."""
    if s.mode != "true_scale":
        raise ValueError("needs the true-scale schedule")
    orbit = orbit or reference_orbit(n + 1)
    lhs = logreal_encode(2 * math.log(2)) * s[n].d
    rhs = -inner_radius_log(n + 1, C5, orbit)
    return bool(lhs > rhs)


def inclusion_sweep(C5: float, s: Schedule, n_hi: int = 10) -> dict:
    """Truth values for n in [N, n_hi] and the smallest N1 from which all pass."""
    orbit = reference_orbit(n_hi + 1)
    res = {n: inclusion_check(n, C5, s, orbit) for n in range(s.N, n_hi + 1)}
    n1 = None
    for n in sorted(res, reverse=True):
        if not res[n]:
            break
        n1 = n
    return {"C5": C5, "results": res, "N1": n1}
