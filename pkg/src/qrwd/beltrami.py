"""Beltrami equation solver on a uniform grid: Neumann series with cell-integrated
Beurling and Cauchy kernels applied as aperiodic FFT convolutions."""
from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.spatial import cKDTree

from .core import DomainError, Rectangle
from .interpolation import wirtinger

K_MAX = 0.95
MAGIC = b"QRWD"
VERSION = 1
_KIND_FIELD, _KIND_MAP = 0, 1


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (last residual {residual:.3e})")
        self.residual = residual


def _workers():
    v = os.environ.get("QRWD_THREADS")
    return max(1, int(v)) if v else 1


def grid(box: Rectangle, nx: int, ny: int):
    x = np.linspace(box.x0, box.x1, nx)
    y = np.linspace(box.y0, box.y1, ny)
    return x[None, :] + 1j * y[:, None], x[1] - x[0], y[1] - y[0]


@dataclass(frozen=True)
class BeltramiField:
    box: Rectangle
    resolution: tuple
    samples: np.ndarray  # shape (ny, nx)
    k_max: float = K_MAX

    def __post_init__(self):
        nx, ny = self.resolution
        if self.samples.shape != (ny, nx):
            raise ValueError("samples shape must be (ny, nx)")
        if not 0 < self.k_max <= K_MAX:
            raise ValueError("k_max must lie in (0, 0.95]")
        if self.sup >= self.k_max:
            raise ValueError(f"sup |mu| = {self.sup:.4f} reaches k_max = {self.k_max}")

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.samples))) if self.samples.size else 0.0

    def nodes(self):
        return grid(self.box, *self.resolution)[0]

    def scaled(self, s: float) -> "BeltramiField":
        return BeltramiField(self.box, self.resolution, s * self.samples, self.k_max)


def sample_mu(fmap, support, box: Rectangle, resolution, scale: float = 1.0, k_max: float = K_MAX) -> BeltramiField:
    """Finite-difference Beltrami coefficient of fmap at grid nodes inside support, 0 elsewhere."""
    nx, ny = resolution
    if nx < 128 or ny < 128:
        raise ValueError("resolution must be >= 128 per axis")
    Z, dx, dy = grid(box, nx, ny)
    mask = support(Z) if support is not None else np.ones(Z.shape, dtype=bool)
    mu = np.zeros(Z.shape, dtype=complex)
    if mask.any():
        pts = Z[mask]
        fz, fzb = wirtinger(fmap, pts, 1e-3 * min(dx, dy))
        est = fzb / fz
        bad = ~np.isfinite(est) | (np.abs(est) >= k_max)
        if bad.any():
            z0 = pts[np.argmax(bad)]
            raise ValueError(f"|mu| >= {k_max} at {z0.real:.6g}{z0.imag:+.6g}i")
        mu[mask] = scale * est
    return BeltramiField(box, (nx, ny), mu, k_max)


# --- kernels ---------------------------------------------------------------------

def _F(a, b):
    """Antiderivative of log(a^2 + b^2) in a."""
    r2 = a * a + b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(r2 > 0, a * np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
        t3 = np.where(b != 0, 2 * b * np.arctan(a / np.where(b != 0, b, 1.0)), 0.0)
    return t1 - 2 * a + t3


def cauchy_cell_integral(xc, yc, hx, hy):
    """Integral of 1/w over the rectangle centered at xc + i yc with half sides hx, hy."""
    xa, xb, ya, yb = xc - hx, xc + hx, yc - hy, yc + hy
    loop = ((_F(xb, ya) - _F(xa, ya)) - (_F(xb, yb) - _F(xa, yb))
            - 1j * (_F(yb, xb) - _F(ya, xb)) + 1j * (_F(yb, xa) - _F(ya, xa)))
    return -loop / 2j


def beurling_cell_integral(xc, yc, hx, hy):
    """Principal-value integral of 1/w^2 over the same rectangle."""
    xa, xb, ya, yb = xc - hx, xc + hx, yc - hy, yc + hy
    a, b, c, d = xa + 1j * ya, xb + 1j * ya, xb + 1j * yb, xa + 1j * yb
    loop = np.log(b / a) - np.log(c / b) + np.log(d / c) - np.log(a / d)
    return loop / 2j


class Kernels:
    """FFT-ready Cauchy and Beurling kernels for an (ny, nx) grid with spacing dx, dy."""

    def __init__(self, nx, ny, dx, dy):
        self.nx, self.ny = nx, ny
        self.shape = (2 * ny, 2 * nx)
        m = np.fft.fftfreq(2 * nx, 1.0 / (2 * nx))
        n = np.fft.fftfreq(2 * ny, 1.0 / (2 * ny))
        X = m[None, :] * dx
        Y = n[:, None] * dy
        kp = cauchy_cell_integral(X, Y, dx / 2, dy / 2) / math.pi
        ks = -beurling_cell_integral(X, Y, dx / 2, dy / 2) / math.pi
        w = _workers()
        self.P_hat = sfft.fft2(kp, workers=w)
        self.S_hat = sfft.fft2(ks, workers=w)

    def _apply(self, khat, h):
        w = _workers()
        pad = np.zeros(self.shape, dtype=complex)
        pad[: self.ny, : self.nx] = h
        out = sfft.ifft2(sfft.fft2(pad, workers=w) * khat, workers=w)
        return out[: self.ny, : self.nx]

    def S(self, h):
        return self._apply(self.S_hat, h)

    def P(self, h):
        return self._apply(self.P_hat, h)


# --- grid map ---------------------------------------------------------------------

@dataclass
class GridMap:
    box: Rectangle
    resolution: tuple
    values: np.ndarray  # shape (ny, nx), normalized images of the nodes
    normalization: tuple = (0j, 1 + 0j)  # raw phi(0), phi(1) before the affine step
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        nx, ny = self.resolution
        self.dx = (self.box.x1 - self.box.x0) / (nx - 1)
        self.dy = (self.box.y1 - self.box.y0) / (ny - 1)
        self._tree = None

    def nodes(self):
        return grid(self.box, *self.resolution)[0]

    def _cell(self, z):
        z = np.asarray(z, dtype=complex)
        if np.any(~self.box.contains(z)):
            raise DomainError("point outside the solver box")
        nx, ny = self.resolution
        u = (z.real - self.box.x0) / self.dx
        v = (z.imag - self.box.y0) / self.dy
        i = np.clip(np.floor(u).astype(int), 0, nx - 2)
        j = np.clip(np.floor(v).astype(int), 0, ny - 2)
        return i, j, u - i, v - j

    def corners(self, i, j):
        V = self.values
        return V[j, i], V[j, i + 1], V[j + 1, i + 1], V[j + 1, i]

    def bilinear(self, z):
        i, j, s, t = self._cell(z)
        v00, v10, v11, v01 = self.corners(i, j)
        return (1 - s) * (1 - t) * v00 + s * (1 - t) * v10 + s * t * v11 + (1 - s) * t * v01

    def __setattr__(self, name, value):
        if name == "values":
            # cached lookups depend on the node images
            self.__dict__.update(_tree=None, _bounds=None, _anc=None)
        super().__setattr__(name, value)

    def _anchors(self):
        # re-anchoring the interpolant makes phi(0) = 0 and phi(1) = 1 hold exactly in floating point
        if self.__dict__.get("_anc") is None:
            anc = (0j, 1 + 0j)
            if self.box.contains(0j) and self.box.contains(1 + 0j):
                a, b = complex(self.bilinear(0j)), complex(self.bilinear(1 + 0j))
                anc = (a, b - a)
            self._anc = anc
        return self._anc

    def __call__(self, z):
        a, scale = self._anchors()
        v = self.bilinear(z)
        return v if (a, scale) == (0j, 1 + 0j) else (v - a) / scale

    def jacobian_positive_fraction(self) -> float:
        V = self.values
        a = V[:-1, 1:] - V[:-1, :-1]
        b = V[1:, :-1] - V[:-1, :-1]
        jac = (np.conj(a) * b).imag
        return float(np.mean(jac > 0))

    def sup_deviation(self) -> float:
        return float(np.max(np.abs(self.values - self.nodes())))

    @property
    def cell_bounds(self):
        """Bounding boxes (xmin, xmax, ymin, ymax) of the image cells."""
        if getattr(self, "_bounds", None) is None:
            V = self.values
            c = np.stack([V[:-1, :-1], V[:-1, 1:], V[1:, 1:], V[1:, :-1]])
            self._bounds = (c.real.min(0), c.real.max(0), c.imag.min(0), c.imag.max(0))
        return self._bounds

    @property
    def tree(self):
        if self._tree is None:
            V = self.values.ravel()
            self._tree = cKDTree(np.column_stack([V.real, V.imag]))
        return self._tree


def solve_mrmt(field: BeltramiField, tol: float = 1e-8, max_terms: int = 200) -> GridMap:
    mu = field.samples
    if field.sup >= K_MAX:
        raise ValueError("sup |mu| must be < 0.95")
    nx, ny = field.resolution
    Z, dx, dy = grid(field.box, nx, ny)
    ker = Kernels(nx, ny, dx, dy)
    h = mu.copy()
    history = []
    converged = not np.any(mu)
    for _ in range(max_terms if not converged else 0):
        h_new = mu * (1 + ker.S(h))
        inc = float(np.max(np.abs(h_new - h)))
        history.append(inc)
        h = h_new
        if inc < tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError("Neumann series did not converge", history[-1] if history else math.inf)
    raw = Z + ker.P(h) if np.any(h) else Z.copy()
    gm = GridMap(field.box, (nx, ny), raw)
    a, b = complex(gm.bilinear(0j)), complex(gm.bilinear(1 + 0j))
    gm.values = (raw - a) / (b - a)
    gm.normalization = (a, b)
    gm.meta = {"terms": len(history), "residuals": history, "tol": tol,
               "sup_mu": field.sup}
    return gm


# --- inversion and composition ---------------------------------------------------------

def _bilinear_newton(v00, v10, v11, v01, target, iters=40, tol=1e-12):
    s = np.full(target.shape, 0.5)
    t = np.full(target.shape, 0.5)
    for _ in range(iters):
        F = (1 - s) * (1 - t) * v00 + s * (1 - t) * v10 + s * t * v11 + (1 - s) * t * v01 - target
        Fs = (1 - t) * (v10 - v00) + t * (v11 - v01)
        Ft = (1 - s) * (v01 - v00) + s * (v11 - v10)
        det = Fs.real * Ft.imag - Ft.real * Fs.imag
        det = np.where(det == 0, 1e-300, det)
        ds = -(F.real * Ft.imag - Ft.real * F.imag) / det
        dt = -(Fs.real * F.imag - F.real * Fs.imag) / det
        s, t = np.clip(s + ds, -2, 3), np.clip(t + dt, -2, 3)
        if np.max(np.abs(ds) + np.abs(dt), initial=0.0) < tol:
            break
    return s, t


def _invert_by_bounds(phi: GridMap, z: complex, eps: float):
    x0, x1, y0, y1 = phi.cell_bounds
    jj, ii = np.nonzero((x0 <= z.real) & (z.real <= x1) & (y0 <= z.imag) & (z.imag <= y1))
    if ii.size == 0:
        return None
    s, t = _bilinear_newton(*phi.corners(ii, jj), np.full(ii.shape, z))
    ok = np.flatnonzero((s >= -eps) & (s <= 1 + eps) & (t >= -eps) & (t <= 1 + eps))
    if ok.size == 0:
        return None
    k = ok[0]
    return complex(phi.box.x0 + (ii[k] + s[k]) * phi.dx, phi.box.y0 + (jj[k] + t[k]) * phi.dy)


def invert_gridmap(phi: GridMap, target, k: int = 6, strict: bool = True):
    """Preimage of target under the bilinear interpolant of phi.

    Non-strict mode returns nan for targets outside the image instead of raising.
    """
    scalar = np.ndim(target) == 0
    tg = np.atleast_1d(np.asarray(target, dtype=complex)).ravel()
    nx, ny = phi.resolution
    out = np.full(tg.shape, np.nan + 0j)
    todo = np.arange(tg.size)
    _, nn = phi.tree.query(np.column_stack([tg.real, tg.imag]), k=k)
    nn = np.atleast_2d(nn)
    eps = 1e-9
    for c in range(k):
        for di, dj in ((0, 0), (-1, 0), (0, -1), (-1, -1)):
            if todo.size == 0:
                break
            node = nn[todo, c]
            i = np.clip(node % nx + di, 0, nx - 2)
            j = np.clip(node // nx + dj, 0, ny - 2)
            v = phi.corners(i, j)
            s, t = _bilinear_newton(*v, tg[todo])
            ok = (s >= -eps) & (s <= 1 + eps) & (t >= -eps) & (t <= 1 + eps)
            out[todo[ok]] = (phi.box.x0 + (i[ok] + s[ok]) * phi.dx) + 1j * (phi.box.y0 + (j[ok] + t[ok]) * phi.dy)
            todo = todo[~ok]
    left = []
    for idx in todo:
        z = _invert_by_bounds(phi, tg[idx], eps)
        if z is None:
            left.append(idx)
        else:
            out[idx] = z
    todo = np.array(left, dtype=int)
    if todo.size and strict:
        raise DomainError(f"{todo.size} target(s) outside the image of the grid, e.g. {tg[todo[0]]}")
    out = out.reshape(np.shape(target)) if not scalar else complex(out[0])
    return out


class ComposedMap:
    """f = g o phi^{-1} with phi a grid map."""

    def __init__(self, gw, phi: GridMap):
        self.gw, self.phi = gw, phi

    def evaluate(self, z):
        pre = invert_gridmap(self.phi, z)
        if hasattr(self.gw, "evaluate"):
            return self.gw.evaluate(pre)
        v = self.gw(pre)
        return v, np.zeros(np.shape(v), dtype=int)

    def __call__(self, z):
        return self.evaluate(z)[0]


def compose_fw(gw, phi: GridMap) -> ComposedMap:
    return ComposedMap(gw, phi)


def approximate_holomorphy(f: ComposedMap, points, h=None) -> float:
    """Largest finite-difference |mu_f| over the given points."""
    h = h or 1e-3 * min(f.phi.dx, f.phi.dy)
    fz, fzb = wirtinger(f, np.asarray(points, dtype=complex), h)
    return float(np.max(np.abs(fzb / fz)))


# --- oracles and checks -------------------------------------------------------------

def constant_mu_field(k: complex, box: Rectangle, resolution) -> BeltramiField:
    nx, ny = resolution
    return BeltramiField(box, (nx, ny), np.full((ny, nx), complex(k)))


def disc_constant_field(k: complex, box: Rectangle, resolution, radius: float = 1.0) -> BeltramiField:
    """mu = k on the disc |z| < radius, 0 outside."""
    nx, ny = resolution
    Z, _, _ = grid(box, nx, ny)
    return BeltramiField(box, (nx, ny), np.where(np.abs(Z) < radius, complex(k), 0j))


def disc_constant_map(z, k: complex, radius: float = 1.0):
    """Exact normalized solution for disc_constant_field: z + k zbar inside, z + k r^2/z outside."""
    z = np.asarray(z, dtype=complex)
    r2 = radius * radius
    inside = np.abs(z) < radius
    zz = np.where(inside, 1.0, z)
    f = np.where(inside, z + k * np.conj(z), z + k * r2 / zz)
    one = 1 + k if radius > 1 else 1 + k * r2
    return f / one


def radial_mu(z, alpha: float):
    z = np.asarray(z, dtype=complex)
    inside = (np.abs(z) < 1) & (z != 0)
    zz = np.where(inside, z, 1.0)
    return np.where(inside, (alpha - 1) / (alpha + 1) * zz / np.conj(zz), 0j)


def radial_map(z, alpha: float):
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = z * np.where(r > 0, r, 1.0) ** (alpha - 1)
    return np.where(r < 1, inner, z)


def radial_field(alpha: float, box: Rectangle, resolution) -> BeltramiField:
    nx, ny = resolution
    Z, _, _ = grid(box, nx, ny)
    return BeltramiField(box, (nx, ny), radial_mu(Z, alpha))


def beurling_norm_ratio(h: np.ndarray, box: Rectangle) -> float:
    """||S h||_2 / ||h||_2 for a grid function h on box."""
    ny, nx = h.shape
    _, dx, dy = grid(box, nx, ny)
    ker = Kernels(nx, ny, dx, dy)
    return float(np.linalg.norm(ker.S(h)) / np.linalg.norm(h))


# --- binary container -------------------------------------------------------------------

_HEADER = struct.Struct("<4sII4dII2d2d")


def _pack(kind, box, resolution, extra, arr):
    nx, ny = resolution
    a, b = extra
    head = _HEADER.pack(MAGIC, VERSION, kind, box.x0, box.x1, box.y0, box.y1, nx, ny,
                        a.real, a.imag, b.real, b.imag)
    body = np.ascontiguousarray(arr, dtype="<c16").tobytes()
    return head + body


def _unpack(data: bytes):
    if len(data) < _HEADER.size:
        raise ValueError("truncated container")
    magic, version, kind, x0, x1, y0, y1, nx, ny, ar, ai, br, bi = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("bad magic")
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    body = data[_HEADER.size:]
    if len(body) != nx * ny * 16:
        raise ValueError("payload size mismatch")
    arr = np.frombuffer(body, dtype="<c16").reshape(ny, nx).astype(complex)
    box = Rectangle(complex((x0 + x1) / 2, (y0 + y1) / 2), (x1 - x0) / 2, (y1 - y0) / 2)
    return kind, box, (nx, ny), (complex(ar, ai), complex(br, bi)), arr


def field_to_bytes(f: BeltramiField) -> bytes:
    return _pack(_KIND_FIELD, f.box, f.resolution, (complex(f.k_max), 0j), f.samples)


def gridmap_to_bytes(g: GridMap) -> bytes:
    return _pack(_KIND_MAP, g.box, g.resolution, g.normalization, g.values)


def from_bytes(data: bytes):
    kind, box, res, extra, arr = _unpack(data)
    if kind == _KIND_FIELD:
        return BeltramiField(box, res, arr, extra[0].real)
    if kind == _KIND_MAP:
        return GridMap(box, res, arr, extra)
    raise ValueError(f"unknown container kind {kind}")
