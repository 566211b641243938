"""Weight expression algebra on the half line (0, oo).

Weights are nonnegative a.e.-finite measurable functions represented as
small expression trees: primitives (pure powers, exponentials, log-powers,
tabulated data) and combinators (products, sums, piecewise glue, capping,
scaling, real powers).  The tree form keeps three things available that a
bare callable loses:

* exact local integrals ``int_a^b w**s dt`` where a closed form exists
  (powers, exponentials and their products via incomplete gamma), with an
  adaptive quadrature fallback elsewhere;
* symbolic endpoint orders feeding exact finiteness verdicts;
* a stable text serialization, e.g. ``piecewise([0,1]: power(0); [1,inf]:
  power(-2))``, used by the scenario runner.

The identically-zero weight is allowed (``Weight.zero()``) so degenerate
problem inputs collapse to zero constants instead of being rejected.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special as _sp

from .errors import WeightParseError
from .exponents import Exponent
from .orders import (
    ExpOrder,
    Order,
    PolyOrder,
    ZERO_ORDER,
    limit_kind,
    order_add,
    order_mul,
    order_pow,
)

__all__ = [
    "Weight",
    "Power",
    "Exp",
    "LogPower",
    "Tabulated",
    "Product",
    "Sum",
    "Piecewise",
    "Cap",
    "Scale",
    "PowerOf",
    "Func",
    "parse_weight",
    "register_parser_extension",
]

_MAX_EXP = 700.0


def _safe_exp(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return np.exp(np.clip(x, -_MAX_EXP * 1.05, _MAX_EXP * 1.05))


def _num(x: float) -> str:
    return repr(float(x))


class Weight:
    """Base class; concrete nodes are frozen dataclasses below."""

    def __call__(self, t: float) -> float:
        return float(self.values(np.array([float(t)]))[0])

    def values(self, ts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value_side(self, t: float, side: int) -> float:
        """One-sided value; only piecewise nodes distinguish sides."""
        return self(t)

    @property
    def breakpoints(self) -> tuple:
        return ()

    def order_zero(self) -> Optional[Order]:
        return None

    def order_inf(self) -> Optional[Order]:
        return None

    @property
    def is_zero(self) -> bool:
        return False

    def _canonical(self) -> Optional[tuple]:
        """(coef, alpha, rate) when w(t) = coef * t**alpha * exp(rate*t)."""
        return None

    def serialize(self) -> str:
        raise NotImplementedError

    def __mul__(self, other: "Weight") -> "Weight":
        if isinstance(other, Weight):
            return Product((self, other))
        return NotImplemented

    def __add__(self, other: "Weight") -> "Weight":
        if isinstance(other, Weight):
            return Sum((self, other))
        return NotImplemented

    @staticmethod
    def zero() -> "Weight":
        return Scale(0.0, Power(0.0))

    @staticmethod
    def one() -> "Weight":
        return Power(0.0)

    # -- integration -----------------------------------------------------

    def power_integral_err(self, s: float, a: float, b: float) -> tuple[float, float]:
        """int_a^b w**s dt with an error bound; inf on divergence."""
        s = float(s)
        a = float(a)
        b = float(b)
        if not b > a:
            return 0.0, 0.0
        if self.is_zero:
            if s > 0:
                return 0.0, 0.0
            return math.inf, 0.0
        cache = self._pi_cache()
        key = (s, a, b)
        hit = cache.get(key)
        if hit is not None:
            return hit
        canon = self._canonical()
        if canon is not None:
            coef, alpha, rate = canon
            if coef == 0.0:
                out = (0.0, 0.0) if s > 0 else (math.inf, 0.0)
            else:
                base = _int_power_exp(alpha * s, rate * s, a, b)
                val = (coef ** s) * base if math.isfinite(base) else math.inf
                out = (val, abs(val) * 1e-13 if math.isfinite(val) else 0.0)
        else:
            out = self._numeric_power_integral(s, a, b)
        if len(cache) < 200_000:
            cache[key] = out
        return out

    def power_integral(self, s: float, a: float, b: float) -> float:
        return self.power_integral_err(s, a, b)[0]

    def _pi_cache(self) -> dict:
        cache = getattr(self, "_cache", None)
        if cache is None:
            object.__setattr__(self, "_cache", {})
            cache = self._cache
        return cache

    def _numeric_power_integral(self, s, a, b) -> tuple[float, float]:
        from .quadrature import integrate_raw

        oz = order_pow(self.order_zero(), s)
        oi = order_pow(self.order_inf(), s)

        def f(t: float) -> float:
            v = self(t)
            if v == 0.0:
                return 0.0 if s > 0 else math.inf
            if math.isinf(v):
                return math.inf if s > 0 else 0.0
            try:
                return v ** s
            except OverflowError:
                return math.inf
        return integrate_raw(
            f, a, b, breakpoints=self.breakpoints, order_zero=oz, order_inf=oi
        )

    def sup_on(self, a: float, b: float) -> float:
        """Essential supremum over (a, b)."""
        if self.is_zero or not b > a:
            return 0.0
        from .quadrature import supremum

        return supremum(
            self,
            a,
            b,
            breakpoints=self.breakpoints,
            order_zero=self.order_zero(),
            order_inf=self.order_inf(),
        )


def _int_power_exp(m: float, r: float, a: float, b: float) -> float:
    """int_a^b t**m * exp(r*t) dt with extended-real endpoint handling."""
    if r == 0.0:
        e = m + 1.0
        if abs(e) < 1e-14:
            if a == 0.0 or math.isinf(b):
                return math.inf
            return math.log(b / a)
        if math.isinf(b):
            if e > 0:
                return math.inf
            return -(a ** e) / e if a > 0 else math.inf
        if a == 0.0:
            if e < 0:
                return math.inf
            return (b ** e) / e
        lo = a ** e
        if math.isinf(lo) or lo == 0.0:
            hi = b ** e
            return (hi - lo) / e if math.isfinite(lo) else math.inf
        # expm1/log1p keep narrow cells accurate where b**e - a**e cancels
        return lo * math.expm1(e * math.log1p((b - a) / a)) / e
    if m == 0.0:
        # (e^{rb} - e^{ra}) / r without cancellation
        if math.isinf(b):
            return math.inf if r > 0 else math.exp(r * a) / (-r)
        lead = r * b if r > 0 else r * a
        if lead > _MAX_EXP:
            return math.inf
        width = r * (a - b) if r > 0 else r * (b - a)
        return -math.exp(lead) * math.expm1(width) / abs(r)
    if r > 0:
        if math.isinf(b):
            return math.inf
        if a == 0.0 and m <= -1.0:
            return math.inf
        return _numeric_power_exp(m, r, a, b)
    # r < 0
    c = -r
    if a == 0.0 and m <= -1.0:
        return math.inf
    mp = m + 1.0
    if mp > 0:
        scale = _sp.gamma(mp) / c ** mp
        if math.isinf(scale):
            return _numeric_power_exp(m, r, a, b)
        upper_a = _sp.gammaincc(mp, c * a) if a > 0 else 1.0
        if math.isinf(b):
            return scale * upper_a
        upper_b = _sp.gammaincc(mp, c * b)
        diff = upper_a - upper_b
        if 0.0 < upper_a and diff < 1e-8 * upper_a:
            # the incomplete-gamma difference has cancelled; integrate the
            # narrow cell directly
            return _numeric_power_exp(m, r, a, b)
        return scale * max(diff, 0.0)
    return _numeric_power_exp(m, r, a, b)


def _numeric_power_exp(m: float, r: float, a: float, b: float) -> float:
    from .quadrature import integrate_raw

    oz = PolyOrder(m, 0.0)
    oi = ExpOrder(r, m) if r != 0 else PolyOrder(m, 0.0)

    def f(t: float) -> float:
        lt = m * math.log(t) + r * t
        if lt > _MAX_EXP:
            return math.inf
        return math.exp(lt)

    val, _ = integrate_raw(f, a, b, order_zero=oz, order_inf=oi, tol_abs=1e-12, tol_rel=1e-12)
    return val


# -- primitives ----------------------------------------------------------


@dataclass(frozen=True)
class Power(Weight):
    """t**alpha"""

    alpha: float
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def values(self, ts):
        with np.errstate(divide="ignore", over="ignore"):
            return np.power(np.asarray(ts, dtype=float), self.alpha)

    def order_zero(self):
        return PolyOrder(self.alpha)

    def order_inf(self):
        return PolyOrder(self.alpha)

    def _canonical(self):
        return (1.0, self.alpha, 0.0)

    def serialize(self):
        return f"power({_num(self.alpha)})"


@dataclass(frozen=True)
class Exp(Weight):
    """exp(rate*t)"""

    rate: float
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def values(self, ts):
        return _safe_exp(self.rate * np.asarray(ts, dtype=float))

    def order_zero(self):
        return PolyOrder(0.0)

    def order_inf(self):
        if self.rate == 0:
            return PolyOrder(0.0)
        return ExpOrder(self.rate)

    def _canonical(self):
        return (1.0, 0.0, self.rate)

    def serialize(self):
        return f"exp({_num(self.rate)})"


@dataclass(frozen=True)
class LogPower(Weight):
    """t**alpha * (1 + |log t|)**beta"""

    alpha: float
    beta: float
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def values(self, ts):
        ts = np.asarray(ts, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            return np.power(ts, self.alpha) * np.power(
                1.0 + np.abs(np.log(ts)), self.beta
            )

    @property
    def breakpoints(self):
        return (1.0,)

    def order_zero(self):
        return PolyOrder(self.alpha, self.beta)

    def order_inf(self):
        return PolyOrder(self.alpha, self.beta)

    def serialize(self):
        return f"logpower({_num(self.alpha)}, {_num(self.beta)})"


@dataclass(frozen=True)
class Tabulated(Weight):
    """Log-log linear interpolation through sample points, extrapolated as
    a power law continuing the boundary segments."""

    ts: tuple
    vs: tuple
    path: Optional[str] = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if len(self.ts) != len(self.vs) or len(self.ts) < 2:
            raise ValueError("tabulated weight needs at least two samples")
        t = np.asarray(self.ts, dtype=float)
        v = np.asarray(self.vs, dtype=float)
        if np.any(t[:-1] >= t[1:]) or t[0] <= 0:
            raise ValueError("tabulated abscissae must be positive and strictly increasing")
        if np.any(v <= 0):
            raise ValueError("tabulated values must be positive")
        object.__setattr__(self, "_lt", np.log(t))
        object.__setattr__(self, "_lv", np.log(v))

    @staticmethod
    def from_csv(path: str | Path) -> "Tabulated":
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                try:
                    rows.append((float(parts[0]), float(parts[1])))
                except ValueError:
                    continue  # header line
        if len(rows) < 2:
            raise WeightParseError(f"{path}: expected at least two t,value rows")
        ts, vs = zip(*rows)
        return Tabulated(tuple(ts), tuple(vs), path=str(path))

    def values(self, ts):
        ts = np.asarray(ts, dtype=float)
        lt = np.log(np.clip(ts, 1e-300, None))
        grid, vals = self._lt, self._lv
        # linear continuation of the boundary segments in log-log space
        k = np.clip(np.searchsorted(grid, lt) - 1, 0, len(grid) - 2)
        slope = (vals[k + 1] - vals[k]) / (grid[k + 1] - grid[k])
        out = vals[k] + slope * (lt - grid[k])
        return np.exp(np.clip(out, -_MAX_EXP, _MAX_EXP))

    @property
    def breakpoints(self):
        return tuple(float(t) for t in self.ts)

    def _slope(self, last: bool) -> float:
        g, v = self._lt, self._lv
        i = len(g) - 2 if last else 0
        return float((v[i + 1] - v[i]) / (g[i + 1] - g[i]))

    def order_zero(self):
        return PolyOrder(self._slope(last=False))

    def order_inf(self):
        return PolyOrder(self._slope(last=True))

    def serialize(self):
        if self.path is None:
            raise WeightParseError("tabulated weight without a source path cannot be serialized")
        return f"tab({self.path})"


@dataclass(frozen=True)
class Func(Weight):
    """Wrapper for a black-box nonnegative callable (internal use).

    Orders and breakpoints may be supplied; without them, finiteness
    verdicts fall back to dyadic fitting.  Not serializable.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    order0: Optional[Order] = None
    orderoo: Optional[Order] = None
    breaks: tuple = ()
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def values(self, ts):
        return np.asarray(self.fn(np.asarray(ts, dtype=float)), dtype=float)

    @property
    def breakpoints(self):
        return self.breaks

    def order_zero(self):
        return self.order0

    def order_inf(self):
        return self.orderoo

    def serialize(self):
        raise WeightParseError("black-box weights cannot be serialized")


# -- combinators ---------------------------------------------------------


def _flatten(parts, cls):
    out = []
    for p in parts:
        if isinstance(p, cls):
            out.extend(p.parts)
        else:
            out.append(p)
    return tuple(out)


@dataclass(frozen=True)
class Product(Weight):
    parts: tuple
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "parts", _flatten(self.parts, Product))

    def values(self, ts):
        out = np.ones(len(np.atleast_1d(ts)), dtype=float)
        for p in self.parts:
            v = p.values(ts)
            zero = (out == 0.0) | (v == 0.0)
            with np.errstate(invalid="ignore", over="ignore"):
                out = out * v
            out[zero] = 0.0
        return out

    def value_side(self, t, side):
        r = 1.0
        for p in self.parts:
            v = p.value_side(t, side)
            if v == 0.0:
                return 0.0
            r *= v
        return r

    @property
    def breakpoints(self):
        bps = []
        for p in self.parts:
            bps.extend(p.breakpoints)
        return tuple(sorted(set(bps)))

    @property
    def is_zero(self):
        return any(p.is_zero for p in self.parts)

    def order_zero(self):
        o = PolyOrder(0.0)
        for p in self.parts:
            o = order_mul(o, p.order_zero())
        return o

    def order_inf(self):
        o = PolyOrder(0.0)
        for p in self.parts:
            o = order_mul(o, p.order_inf())
        return o

    def _canonical(self):
        coef, alpha, rate = 1.0, 0.0, 0.0
        for p in self.parts:
            c = p._canonical()
            if c is None:
                return None
            coef *= c[0]
            alpha += c[1]
            rate += c[2]
        return (coef, alpha, rate)

    def serialize(self):
        return " * ".join(p.serialize() for p in self.parts)


@dataclass(frozen=True)
class Sum(Weight):
    parts: tuple
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "parts", _flatten(self.parts, Sum))

    def values(self, ts):
        out = np.zeros(len(np.atleast_1d(ts)), dtype=float)
        for p in self.parts:
            out = out + p.values(ts)
        return out

    def value_side(self, t, side):
        return sum(p.value_side(t, side) for p in self.parts)

    @property
    def breakpoints(self):
        bps = []
        for p in self.parts:
            bps.extend(p.breakpoints)
        return tuple(sorted(set(bps)))

    @property
    def is_zero(self):
        return all(p.is_zero for p in self.parts)

    def order_zero(self):
        o = ZERO_ORDER
        for p in self.parts:
            o = order_add(o, p.order_zero(), "zero")
        return o

    def order_inf(self):
        o = ZERO_ORDER
        for p in self.parts:
            o = order_add(o, p.order_inf(), "inf")
        return o

    def power_integral_err(self, s, a, b):
        if float(s) == 1.0 and not any(p._canonical() is None for p in self.parts):
            vals = [p.power_integral_err(1.0, a, b) for p in self.parts]
            return sum(v for v, _ in vals), sum(e for _, e in vals)
        return super().power_integral_err(s, a, b)

    def serialize(self):
        return " + ".join(p.serialize() for p in self.parts)


@dataclass(frozen=True)
class Piecewise(Weight):
    """Pieces ((a, b, weight), ...) tiling (0, oo); value is taken from the
    piece whose half-open interval [a, b) contains t."""

    pieces: tuple
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        ps = tuple((float(a), float(b), w) for a, b, w in self.pieces)
        if not ps:
            raise ValueError("piecewise weight needs at least one piece")
        if ps[0][0] != 0.0 or not math.isinf(ps[-1][1]):
            raise ValueError("pieces must start at 0 and end at inf")
        for (a1, b1, _), (a2, b2, _) in zip(ps, ps[1:]):
            if b1 != a2:
                raise ValueError("pieces must tile (0, inf) without gaps")
        object.__setattr__(self, "pieces", ps)

    def values(self, ts):
        ts = np.asarray(ts, dtype=float)
        out = np.zeros_like(ts)
        for a, b, w in self.pieces:
            mask = (ts >= a) & (ts < b)
            if np.any(mask):
                out[mask] = w.values(ts[mask])
        return out

    def value_side(self, t, side):
        t = float(t)
        for a, b, w in self.pieces:
            if (a < t < b) or (side >= 0 and t == a) or (side < 0 and t == b):
                return w.value_side(t, side)
        return self(t)

    @property
    def breakpoints(self):
        bps = set()
        for a, b, w in self.pieces:
            if a > 0:
                bps.add(a)
            bps.update(x for x in w.breakpoints if a < x < b)
        return tuple(sorted(bps))

    @property
    def is_zero(self):
        return all(w.is_zero for _, _, w in self.pieces)

    def order_zero(self):
        return self.pieces[0][2].order_zero()

    def order_inf(self):
        return self.pieces[-1][2].order_inf()

    def power_integral_err(self, s, a, b):
        tot, err = 0.0, 0.0
        for pa, pb, w in self.pieces:
            lo, hi = max(a, pa), min(b, pb)
            if hi > lo:
                v, e = w.power_integral_err(s, lo, hi)
                if math.isinf(v):
                    return math.inf, 0.0
                tot += v
                err += e
        return tot, err

    def sup_on(self, a, b):
        best = 0.0
        for pa, pb, w in self.pieces:
            lo, hi = max(a, pa), min(b, pb)
            if hi > lo:
                best = max(best, w.sup_on(lo, hi))
        return best

    def serialize(self):
        items = []
        for a, b, w in self.pieces:
            hi = "inf" if math.isinf(b) else _num(b)
            items.append(f"[{_num(a)},{hi}]: {w.serialize()}")
        return "piecewise(" + "; ".join(items) + ")"


@dataclass(frozen=True)
class Cap(Weight):
    """min(base, cap_value)"""

    base: Weight
    cap_value: float
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def values(self, ts):
        return np.minimum(self.base.values(ts), self.cap_value)

    def value_side(self, t, side):
        return min(self.base.value_side(t, side), self.cap_value)

    @property
    def breakpoints(self):
        return tuple(sorted(set(self.base.breakpoints) | set(self._crossings())))

    def _crossings(self):
        cached = self._pi_cache().get("__crossings__")
        if cached is not None:
            return cached
        ts = np.geomspace(1e-8, 1e8, 4097)
        diff = self.base.values(ts) - self.cap_value
        out = []
        sign = np.sign(diff)
        for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
            lo, hi = float(ts[i]), float(ts[i + 1])
            for _ in range(60):
                mid = math.sqrt(lo * hi)
                if (self.base(mid) - self.cap_value) * diff[i] > 0:
                    lo = mid
                else:
                    hi = mid
            out.append(math.sqrt(lo * hi))
        out = tuple(out)
        self._pi_cache()["__crossings__"] = out
        return out

    @property
    def is_zero(self):
        return self.base.is_zero or self.cap_value == 0.0

    def _capped_order(self, o, end):
        k = limit_kind(o, end)
        if k in ("inf", "finite"):
            return PolyOrder(0.0)
        return o

    def order_zero(self):
        return self._capped_order(self.base.order_zero(), "zero")

    def order_inf(self):
        return self._capped_order(self.base.order_inf(), "inf")

    def sup_on(self, a, b):
        return min(self.base.sup_on(a, b), self.cap_value)

    def serialize(self):
        return f"cap({self.base.serialize()}, {_num(self.cap_value)})"


@dataclass(frozen=True)
class Scale(Weight):
    """c * base with c >= 0."""

    c: float
    base: Weight
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("weights are nonnegative; scale factor must be >= 0")

    def values(self, ts):
        if self.c == 0.0:
            return np.zeros(len(np.atleast_1d(ts)))
        return self.c * self.base.values(ts)

    def value_side(self, t, side):
        return self.c * self.base.value_side(t, side)

    @property
    def breakpoints(self):
        return self.base.breakpoints

    @property
    def is_zero(self):
        return self.c == 0.0 or self.base.is_zero

    def order_zero(self):
        if self.c == 0.0:
            return ZERO_ORDER
        return self.base.order_zero()

    def order_inf(self):
        if self.c == 0.0:
            return ZERO_ORDER
        return self.base.order_inf()

    def _canonical(self):
        c = self.base._canonical()
        if c is None:
            return None
        return (self.c * c[0], c[1], c[2])

    def power_integral_err(self, s, a, b):
        if self.is_zero:
            return (0.0, 0.0) if s > 0 else (math.inf, 0.0)
        v, e = self.base.power_integral_err(s, a, b)
        k = self.c ** s
        return k * v, k * e

    def sup_on(self, a, b):
        if self.c == 0.0:
            return 0.0
        return self.c * self.base.sup_on(a, b)

    def serialize(self):
        return f"scale({_num(self.c)}, {self.base.serialize()})"


@dataclass(frozen=True)
class PowerOf(Weight):
    """base**r (pointwise), with 0**r = oo for r < 0."""

    base: Weight
    r: float
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def values(self, ts):
        v = self.base.values(ts)
        r = self.r
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            out = np.power(v, r)
        if r < 0:
            out = np.where(v == 0.0, np.inf, out)
            out = np.where(np.isinf(v), 0.0, out)
        return out

    def value_side(self, t, side):
        v = self.base.value_side(t, side)
        if v == 0.0:
            return 0.0 if self.r > 0 else math.inf
        if math.isinf(v):
            return math.inf if self.r > 0 else 0.0
        return v ** self.r

    @property
    def breakpoints(self):
        return self.base.breakpoints

    @property
    def is_zero(self):
        return self.base.is_zero and self.r > 0

    def order_zero(self):
        return order_pow(self.base.order_zero(), self.r)

    def order_inf(self):
        return order_pow(self.base.order_inf(), self.r)

    def _canonical(self):
        c = self.base._canonical()
        if c is None:
            return None
        coef, alpha, rate = c
        if coef <= 0:
            return None
        return (coef ** self.r, alpha * self.r, rate * self.r)

    def power_integral_err(self, s, a, b):
        return self.base.power_integral_err(s * self.r, a, b)

    def serialize(self):
        return f"powerof({self.base.serialize()}, {_num(self.r)})"


# -- parser --------------------------------------------------------------

_PARSER_EXTENSIONS: dict[str, Callable] = {}


def register_parser_extension(name: str, builder: Callable) -> None:
    """Hook for node types defined outside this module (norm weights)."""
    _PARSER_EXTENSIONS[name] = builder


_TOKEN = re.compile(
    r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_./\\-]*)"
    r"|(?P<punct>[()\[\]:;,*+]))"
)


class _Tokens:
    def __init__(self, text: str):
        self.items = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None:
                if text[pos:].strip() == "":
                    break
                raise WeightParseError(f"unexpected character at {text[pos:pos+12]!r}")
            pos = m.end()
            if m.lastgroup == "num":
                self.items.append(("num", float(m.group("num"))))
            elif m.lastgroup == "name":
                self.items.append(("name", m.group("name")))
            else:
                self.items.append(("punct", m.group("punct")))
        self.k = 0

    def peek(self):
        return self.items[self.k] if self.k < len(self.items) else ("eof", "")

    def next(self):
        tok = self.peek()
        self.k += 1
        return tok

    def expect(self, kind, val=None):
        tok = self.next()
        if tok[0] != kind or (val is not None and tok[1] != val):
            raise WeightParseError(f"expected {val or kind}, got {tok[1]!r}")
        return tok


def parse_weight(text: str, base_dir: str | Path | None = None) -> Weight:
    """Parse the textual weight grammar.

    Atoms: power(a), exp(r), logpower(a, b), tab(file.csv), cap(E, M),
    scale(c, E), powerof(E, r), piecewise([a,b]: E; ...), plus registered
    extensions.  Products and sums are written with infix * and +; a bare
    number n abbreviates scale(n, power(0)).
    """
    toks = _Tokens(text)
    w = _parse_sum(toks, base_dir)
    if toks.peek()[0] != "eof":
        raise WeightParseError(f"trailing input near {toks.peek()[1]!r}")
    return w


def _parse_sum(toks, base_dir):
    w = _parse_product(toks, base_dir)
    parts = [w]
    while toks.peek() == ("punct", "+"):
        toks.next()
        parts.append(_parse_product(toks, base_dir))
    return parts[0] if len(parts) == 1 else Sum(tuple(parts))


def _parse_product(toks, base_dir):
    w = _parse_atom(toks, base_dir)
    parts = [w]
    while toks.peek() == ("punct", "*"):
        toks.next()
        parts.append(_parse_atom(toks, base_dir))
    if len(parts) == 1:
        return parts[0]
    return Product(tuple(parts))


def _parse_number(toks) -> float:
    tok = toks.next()
    if tok[0] == "num":
        return tok[1]
    if tok == ("name", "inf"):
        return math.inf
    raise WeightParseError(f"expected a number, got {tok[1]!r}")


def _parse_atom(toks, base_dir) -> Weight:
    kind, val = toks.peek()
    if kind == "num":
        toks.next()
        if val < 0:
            raise WeightParseError("bare negative constants are not weights")
        return Scale(val, Power(0.0)) if val != 1.0 else Power(0.0)
    if kind != "name":
        raise WeightParseError(f"expected a weight term, got {val!r}")
    toks.next()
    name = val.lower()
    toks.expect("punct", "(")
    if name == "power":
        alpha = _parse_number(toks)
        toks.expect("punct", ")")
        return Power(alpha)
    if name == "exp":
        rate = _parse_number(toks)
        toks.expect("punct", ")")
        return Exp(rate)
    if name == "logpower":
        alpha = _parse_number(toks)
        toks.expect("punct", ",")
        beta = _parse_number(toks)
        toks.expect("punct", ")")
        return LogPower(alpha, beta)
    if name == "tab":
        tok = toks.next()
        if tok[0] != "name":
            raise WeightParseError("tab() expects a file path")
        toks.expect("punct", ")")
        path = Path(tok[1])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return Tabulated.from_csv(path)
    if name == "cap":
        base = _parse_sum(toks, base_dir)
        toks.expect("punct", ",")
        m = _parse_number(toks)
        toks.expect("punct", ")")
        return Cap(base, m)
    if name == "scale":
        c = _parse_number(toks)
        toks.expect("punct", ",")
        base = _parse_sum(toks, base_dir)
        toks.expect("punct", ")")
        return Scale(c, base)
    if name == "powerof":
        base = _parse_sum(toks, base_dir)
        toks.expect("punct", ",")
        r = _parse_number(toks)
        toks.expect("punct", ")")
        return PowerOf(base, r)
    if name == "piecewise":
        pieces = []
        while True:
            toks.expect("punct", "[")
            a = _parse_number(toks)
            toks.expect("punct", ",")
            b = _parse_number(toks)
            toks.expect("punct", "]")
            toks.expect("punct", ":")
            w = _parse_sum(toks, base_dir)
            pieces.append((a, b, w))
            tok = toks.next()
            if tok == ("punct", ")"):
                break
            if tok != ("punct", ";"):
                raise WeightParseError("expected ';' or ')' in piecewise()")
        return Piecewise(tuple(pieces))
    if name in _PARSER_EXTENSIONS:
        return _PARSER_EXTENSIONS[name](toks, base_dir, _parse_sum, _parse_number)
    raise WeightParseError(f"unknown weight constructor {name!r}")
