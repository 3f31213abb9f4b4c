"""Scalar and geometric primitives: log-scale reals, metrics, small shapes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import total_ordering

import numpy as np

TWO_PI = 2.0 * math.pi
LOG_CUTOFF = 40.0
DECODE_LIMIT = 700.0


class DomainError(ValueError):
    """Argument outside the domain of a map (slit, pole, bad half-plane)."""


class OutOfRange(OverflowError):
    """A value cannot be represented as an ordinary float."""


def as_complex(z) -> complex:
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DomainError(f"non-finite complex value {z!r}")
    return z


@total_ordering
@dataclass(frozen=True)
class LogReal:
    """sign * exp(logmag); logmag is ignored when sign == 0.

    ``logmag`` is normally a float. For towers of exponentials whose
    logarithm itself overflows it may be another LogReal; values that fit in a
    float are always stored as floats so equality stays canonical.
    """

    sign: int
    logmag: "float | LogReal" = 0.0

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError("sign must be -1, 0 or +1")
        if self.sign == 0:
            object.__setattr__(self, "logmag", 0.0)
            return
        lm = self.logmag
        if isinstance(lm, LogReal):
            if lm.sign == 0 or not lm.is_nested and abs(lm.logmag) < DECODE_LIMIT:
                object.__setattr__(self, "logmag", logreal_decode(lm))
        else:
            lm = float(lm)
            if not math.isfinite(lm):
                raise ValueError("logmag must be finite")
            object.__setattr__(self, "logmag", lm)

    @property
    def is_nested(self) -> bool:
        return isinstance(self.logmag, LogReal)

    @property
    def level(self) -> int:
        """Number of exponentials stacked above a float (1 for a plain LogReal)."""
        return 1 + self.logmag.level if self.is_nested else 1

    @classmethod
    def from_log(cls, logmag: float) -> "LogReal":
        return cls(1, float(logmag))

    def __eq__(self, other):
        if not isinstance(other, LogReal):
            return NotImplemented
        return self.sign == other.sign and (self.sign == 0 or self.logmag == other.logmag)

    def __hash__(self):
        return hash((self.sign, self.logmag))

    def __lt__(self, other):
        if not isinstance(other, LogReal):
            return NotImplemented
        if self.sign != other.sign:
            return self.sign < other.sign
        if self.sign == 0:
            return False
        a, b = self.logmag, other.logmag
        if isinstance(a, LogReal) or isinstance(b, LogReal):
            a, b = _lr(a), _lr(b)
        return a < b if self.sign > 0 else a > b

    def __neg__(self):
        return LogReal(-self.sign, self.logmag)

    def __add__(self, other):
        return logreal_arith(self, _lr(other), "add")

    __radd__ = __add__

    def __sub__(self, other):
        return logreal_arith(self, _lr(other), "sub")

    def __rsub__(self, other):
        return logreal_arith(_lr(other), self, "sub")

    def __mul__(self, other):
        return logreal_arith(self, _lr(other), "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        return logreal_arith(self, _lr(other), "div")

    def __rtruediv__(self, other):
        return logreal_arith(_lr(other), self, "div")

    def to_float(self) -> float:
        return logreal_decode(self)

    def log(self) -> "LogReal":
        """Natural log of a positive value, as a LogReal."""
        if self.sign != 1:
            raise DomainError("log of a non-positive LogReal")
        return _lr(self.logmag)

    def to_json(self) -> dict:
        lm = self.logmag.to_json() if self.is_nested else self.logmag
        return {"sign": self.sign, "logmag": lm}

    @classmethod
    def from_json(cls, d: dict) -> "LogReal":
        lm = d["logmag"]
        return cls(int(d["sign"]), cls.from_json(lm) if isinstance(lm, dict) else float(lm))

    def __repr__(self):
        return f"LogReal({self.sign}, {self.logmag!r})"


def _lr(x) -> LogReal:
    return x if isinstance(x, LogReal) else logreal_encode(x)


def logreal_encode(x: float) -> LogReal:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError("cannot encode a non-finite real")
    if x == 0.0:
        return LogReal(0)
    return LogReal(1 if x > 0 else -1, math.log(abs(x)))


def logreal_exp(x) -> LogReal:
    """exp of a float or LogReal, as a LogReal."""
    return LogReal(1, x)


def logreal_decode(v: LogReal) -> float:
    if v.sign == 0:
        return 0.0
    if v.is_nested or abs(v.logmag) >= DECODE_LIMIT:
        raise OutOfRange(f"logmag {v.logmag} outside the decodable range")
    return v.sign * math.exp(v.logmag)


def logreal_arith(a: LogReal, b: LogReal, op: str) -> LogReal:
    if op == "mul":
        if a.sign == 0 or b.sign == 0:
            return LogReal(0)
        return LogReal(a.sign * b.sign, a.logmag + b.logmag)
    if op == "div":
        if b.sign == 0:
            raise ZeroDivisionError("LogReal division by zero")
        if a.sign == 0:
            return LogReal(0)
        return LogReal(a.sign * b.sign, a.logmag - b.logmag)
    if op == "sub":
        return logreal_arith(a, -b, "add")
    if op != "add":
        raise ValueError(f"unknown op {op!r}")
    if a.sign == 0:
        return b
    if b.sign == 0:
        return a
    if a.is_nested or b.is_nested:
        la, lb = _lr(a.logmag), _lr(b.logmag)
        big, small = (a, b) if la >= lb else (b, a)
        gap_lr = _lr(big.logmag) - _lr(small.logmag)
        if gap_lr > LogReal(1, math.log(LOG_CUTOFF)):
            return big
        gap = logreal_decode(gap_lr)
    else:
        big, small = (a, b) if a.logmag >= b.logmag else (b, a)
        gap = big.logmag - small.logmag
        if gap > LOG_CUTOFF:
            return big
    if big.sign == small.sign:
        corr = math.log1p(math.exp(-gap))
    elif gap == 0.0:
        return LogReal(0)
    else:
        corr = math.log1p(-math.exp(-gap))
    lm = big.logmag + corr if not big.is_nested else big.logmag + logreal_encode(corr)
    return LogReal(big.sign, lm)


def log_factorial(n: int) -> float:
    return math.lgamma(n + 1)


# --- metrics -------------------------------------------------------------

def hyperbolic_distance_H(z, w) -> float:
    """Poincare distance in the upper half-plane."""
    z, w = as_complex(z), as_complex(w)
    if z.imag <= 0 or w.imag <= 0:
        raise DomainError("points must lie in the upper half-plane")
    ratio = abs(z - w) / abs(z - w.conjugate())
    return 2.0 * math.atanh(min(ratio, 1.0))


def cylinder_norm(w) -> float:
    w = complex(w)
    y = math.remainder(w.imag, TWO_PI)
    return math.hypot(w.real, y)


def mobius_M(z):
    """(z - i)/(z + i); accepts scalars or arrays."""
    if np.ndim(z) == 0:
        z = as_complex(z)
        if z == -1j:
            raise DomainError("pole of M at -i")
        return (z - 1j) / (z + 1j)
    z = np.asarray(z, dtype=complex)
    if np.any(z == -1j):
        raise DomainError("pole of M at -i")
    return (z - 1j) / (z + 1j)


# --- shapes --------------------------------------------------------------

@dataclass(frozen=True)
class Rectangle:
    center: complex
    half_width: float
    half_height: float

    def __post_init__(self):
        if not (self.half_width > 0 and self.half_height > 0):
            raise ValueError("rectangle half sizes must be positive")
        object.__setattr__(self, "center", as_complex(self.center))

    @property
    def x0(self):
        return self.center.real - self.half_width

    @property
    def x1(self):
        return self.center.real + self.half_width

    @property
    def y0(self):
        return self.center.imag - self.half_height

    @property
    def y1(self):
        return self.center.imag + self.half_height

    def contains(self, z, closed=True):
        z = np.asarray(z)
        dx = np.abs(z.real - self.center.real)
        dy = np.abs(z.imag - self.center.imag)
        if closed:
            return (dx <= self.half_width) & (dy <= self.half_height)
        return (dx < self.half_width) & (dy < self.half_height)

    def boundary(self, n: int) -> np.ndarray:
        """n points spread along the perimeter, counter-clockwise from the lower-left corner."""
        corners = np.array([complex(self.x0, self.y0), complex(self.x1, self.y0),
                            complex(self.x1, self.y1), complex(self.x0, self.y1)])
        return polygon_boundary(corners, n)

    def to_json(self):
        return {"center": [self.center.real, self.center.imag],
                "half_width": self.half_width, "half_height": self.half_height}


@dataclass(frozen=True)
class Disc:
    center: complex
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disc radius must be positive")
        object.__setattr__(self, "center", as_complex(self.center))

    def contains(self, z, closed=True):
        r = np.abs(np.asarray(z) - self.center)
        return r <= self.radius if closed else r < self.radius

    def boundary(self, n: int) -> np.ndarray:
        t = np.arange(n) * (TWO_PI / n)
        return self.center + self.radius * np.exp(1j * t)

    def to_json(self):
        return {"center": [self.center.real, self.center.imag], "radius": self.radius}


@dataclass(frozen=True)
class EllipseRegion:
    semi_major: float
    semi_minor: float

    def __post_init__(self):
        if not (self.semi_major >= self.semi_minor > 0):
            raise ValueError("need semi_major >= semi_minor > 0")

    @classmethod
    def cosh_ellipse(cls, R: float) -> "EllipseRegion":
        return cls(2.0 * math.cosh(R), 2.0 * math.sinh(R))

    def residual(self, z):
        z = np.asarray(z)
        return (z.real / self.semi_major) ** 2 + (z.imag / self.semi_minor) ** 2 - 1.0

    def contains(self, z):
        return self.residual(z) < 0


def polygon_boundary(corners, n: int) -> np.ndarray:
    corners = np.asarray(corners, dtype=complex)
    closed = np.append(corners, corners[0])
    seg = np.abs(np.diff(closed))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.arange(n) * (cum[-1] / n)
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = (s - cum[k]) / seg[k]
    return closed[k] + frac * (closed[k + 1] - closed[k])
