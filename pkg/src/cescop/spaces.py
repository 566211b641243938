"""Weighted Lebesgue, Cesaro and Copson spaces on the half line.

Throughout the package a weighted norm puts the weight on the function,

    ||f||_{p,w,(a,b)} = (int_a^b |f w|^p dt)^(1/p),

with the essential supremum of f*w when p = inf.  A Cesaro space layers
a (0, oo) outer norm over head norms of f, a Copson space over tail
norms:

    Ces:  || t -> ||f||_{p,v,(0,t)} ||_{q,u,(0,oo)}
    Cop:  || t -> ||f||_{p,v,(t,oo)} ||_{q,u,(0,oo)}

The workhorse here is the running norm of a single weight,
t -> ||w||_{p,(0,t)} or t -> ||w||_{p,(t,oo)}.  Running norms appear in
three roles: as the positivity/finiteness gates a Cesaro or Copson outer
weight must satisfy, as new weights after the p = q collapse onto a
plain Lebesgue space, and (raised to a power, signed) as the monotone
set functions driving Stieltjes integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import InvalidSpaceError, PreconditionFailedError
from .exponents import Exponent, ExponentLike
from .extreal import arr_pow, xmul, xpow
from .orders import (
    ExpOrder,
    Order,
    PolyOrder,
    ZERO_ORDER,
    head_converges,
    limit_kind,
    order_mul,
    order_pow,
    tail_converges,
)
from .quadrature import MonotoneEnvelope
from .weights import (
    Exp,
    Piecewise,
    Power,
    PowerOf,
    Product,
    Scale,
    Sum,
    Weight,
    register_parser_extension,
)

__all__ = [
    "NormFunctional",
    "NormWeight",
    "head_norm_weight",
    "tail_norm_weight",
    "LebesgueSpace",
    "CesaroSpace",
    "CopsonSpace",
    "Space",
    "ValidityResult",
    "check_space_validity",
    "lebesgue_reduction",
    "norm_on_interval",
    "segment_masses",
    "norm_envelope",
    "batched",
]

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(16)

# Anchor tables for weights without closed-form integrals live on this
# window; queries outside fall back to adaptive quadrature per call.
_TABLE_LO = 1e-8
_TABLE_HI = 1e8
_TABLE_CELLS = 8192


class batched:
    """A scalar callable carrying a vectorised ``values`` companion.

    The quadrature routines look for a ``values`` attribute to avoid
    point-by-point python loops; this wrapper lets ad hoc closures opt
    in.
    """

    __slots__ = ("scalar", "values")

    def __init__(self, scalar: Callable[[float], float], values) -> None:
        self.scalar = scalar
        self.values = values

    def __call__(self, t: float) -> float:
        return float(self.scalar(t))


def norm_on_interval(w: Weight, p: ExponentLike, a: float, b: float) -> float:
    """||w||_{p,(a,b)} as an extended real."""
    pe = Exponent(p)
    if pe.is_inf:
        return w.sup_on(a, b)
    pf = float(pe)
    return xpow(w.power_integral(pf, a, b), 1.0 / pf)


def _has_closed_form(w: Weight, s: float) -> bool:
    """Whether per-segment integrals of w**s avoid adaptive quadrature."""
    if isinstance(w, (Power, Exp)):
        return True
    if isinstance(w, Scale):
        return _has_closed_form(w.base, s)
    if isinstance(w, PowerOf):
        return _has_closed_form(w.base, w.r * s)
    if isinstance(w, Piecewise):
        return all(_has_closed_form(piece, s) for _, _, piece in w.pieces)
    if isinstance(w, Sum):
        return s == 1.0 and all(_has_closed_form(part, s) for part in w.parts)
    if isinstance(w, Product):
        return w._canonical() is not None
    return False


def _canonical_cell_masses(canon, p: float, edges: np.ndarray):
    """Vectorised int_a^b w**p over consecutive edges for canonical w.

    Handles the pure-power and pure-exponential shapes; mixed shapes
    return None and take the scalar route.
    """
    coef, alpha, rate = canon
    if coef <= 0.0:
        return None
    a = edges[:-1]
    b = edges[1:]
    cs = coef ** p
    if rate == 0.0:
        k = alpha * p + 1.0
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if abs(k) < 1e-12:
                vals = cs * (np.log(b) - np.log(a))
            else:
                vals = cs * (np.power(b, k) - np.power(a, k)) / k
        vals = np.where(np.isnan(vals), np.inf, vals)
        return np.maximum(vals, 0.0)
    if alpha == 0.0:
        r = rate * p
        with np.errstate(over="ignore"):
            vals = cs * np.exp(r * a) * np.expm1(np.minimum(r * (b - a), 700.0)) / r
        vals = np.where(np.isnan(vals), np.inf, vals)
        return np.maximum(vals, 0.0)
    return None


def segment_masses(
    w: Weight, p: float, edges: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """int w**p over each cell of an increasing positive edge array.

    Returns (masses, error bounds).  Cells adjacent to a breakpoint of w
    use adaptive quadrature; smooth interior cells use fixed-order
    Gauss-Legendre on the log axis, vectorised across cells.
    """
    e = np.asarray(edges, dtype=float)
    n = e.size - 1
    masses = np.zeros(n)
    errs = np.zeros(n)
    if n <= 0:
        return masses, errs
    widths = e[1:] - e[:-1]
    live = widths > 0.0

    canon = w._canonical()
    if canon is not None:
        vals = _canonical_cell_masses(canon, p, e)
        if vals is not None:
            masses[live] = vals[live]
            errs[live] = np.where(np.isfinite(vals[live]), np.abs(vals[live]) * 1e-14, 0.0)
            return masses, errs

    if _has_closed_form(w, p):
        for i in range(n):
            if live[i]:
                masses[i], errs[i] = w.power_integral_err(p, e[i], e[i + 1])
        return masses, errs

    near = np.zeros(n, dtype=bool)
    for bk in w.breakpoints:
        if e[0] < bk < e[-1]:
            j = int(np.searchsorted(e, bk))
            for cell in (j - 1, j):
                if 0 <= cell < n:
                    near[cell] = True

    smooth = live & ~near
    if np.any(smooth):
        lo = np.log(e[:-1][smooth])
        hi = np.log(e[1:][smooth])
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        xs = np.exp(mid[:, None] + half[:, None] * _GAUSS_X[None, :])
        vals = w.values(xs.ravel()).reshape(xs.shape)
        with np.errstate(over="ignore", invalid="ignore"):
            integ = arr_pow(vals, p) * xs
            cell = (integ * _GAUSS_W[None, :]).sum(axis=1) * half
        masses[smooth] = cell
        errs[smooth] = np.where(np.isfinite(cell), np.abs(cell) * 1e-13, 0.0)
        bad = smooth.copy()
        bad[smooth] = ~np.isfinite(cell)
        near |= bad

    for i in np.nonzero(live & near)[0]:
        masses[i], errs[i] = w.power_integral_err(p, e[i], e[i + 1])
    return masses, errs


def _cell_sups(w: Weight, edges: np.ndarray) -> np.ndarray:
    """sup of w over each cell, by log-spaced sampling plus side values
    at breakpoint edges."""
    e = np.asarray(edges, dtype=float)
    n = e.size - 1
    if n <= 0:
        return np.zeros(0)
    lo = np.log(e[:-1])
    hi = np.log(e[1:])
    frac = np.linspace(0.0, 1.0, 8)
    xs = np.exp(lo[:, None] + (hi - lo)[:, None] * frac[None, :])
    vals = w.values(xs.ravel()).reshape(xs.shape)
    sups = vals.max(axis=1)
    for bk in w.breakpoints:
        if e[0] <= bk <= e[-1]:
            j = int(np.searchsorted(e, bk))
            if j < e.size and e[j] == bk:
                if j - 1 >= 0:
                    sups[j - 1] = max(sups[j - 1], w.value_side(bk, -1))
                if j < n:
                    sups[j] = max(sups[j], w.value_side(bk, +1))
    return sups


@dataclass
class _Table:
    edges: np.ndarray
    cum: np.ndarray  # head masses (or running sups) up to each edge
    suf: np.ndarray  # tail masses (or sups) from each edge
    near: np.ndarray  # cells needing adaptive partial integrals


class NormFunctional:
    """Running p-norm of a weight: t -> ||w||_{p,(0,t)} or ||w||_{p,(t,oo)}.

    Scalar evaluation is exact for weights with closed-form integrals.
    Other weights get a lazily built anchor table on a wide log grid, so
    a scalar call costs one short local quadrature instead of an
    integral from the endpoint.  ``batch`` evaluates many points in one
    vectorised pass and is what the brute-force oracle uses.
    """

    def __init__(self, weight: Weight, p: ExponentLike, tail: bool):
        self.weight = weight
        self.p = Exponent(p)
        self.tail = bool(tail)
        self._pf = float(self.p)
        self._sup = self.p.is_inf
        self._closed = (not self._sup) and _has_closed_form(weight, self._pf)
        self._table: Optional[_Table] = None
        self._memo: dict = {}

    def __repr__(self) -> str:
        side = "tail" if self.tail else "head"
        return f"NormFunctional({side}, p={self.p}, {type(self.weight).__name__})"

    # -- symbolic structure ----------------------------------------------

    def order_zero(self) -> Optional[Order]:
        return _norm_order(self.weight, self.p, self.tail, "zero")

    def order_inf(self) -> Optional[Order]:
        return _norm_order(self.weight, self.p, self.tail, "inf")

    @property
    def breakpoints(self) -> tuple:
        return self.weight.breakpoints

    def total(self) -> float:
        """||w||_{p,(0,oo)}."""
        key = ("total",)
        if key not in self._memo:
            if self._sup:
                self._memo[key] = self.weight.sup_on(0.0, math.inf)
            else:
                mass = self.weight.power_integral(self._pf, 0.0, math.inf)
                self._memo[key] = xpow(mass, 1.0 / self._pf)
        return self._memo[key]

    # -- tables -----------------------------------------------------------

    def _ensure_table(self) -> _Table:
        if self._table is not None:
            return self._table
        w = self.weight
        grid = np.geomspace(_TABLE_LO, _TABLE_HI, _TABLE_CELLS + 1)
        bks = [b for b in w.breakpoints if _TABLE_LO < b < _TABLE_HI]
        edges = np.unique(np.concatenate([grid, np.asarray(bks, dtype=float)]))
        n = edges.size - 1
        if self._sup:
            sups = _cell_sups(w, edges)
            head0 = w.sup_on(0.0, edges[0])
            tail1 = w.sup_on(edges[-1], math.inf)
            cum = np.maximum.accumulate(np.concatenate([[head0], sups]))
            suf = np.maximum.accumulate(np.concatenate([[tail1], sups[::-1]]))[::-1]
            near = np.zeros(n, dtype=bool)
        else:
            masses, _ = segment_masses(w, self._pf, edges)
            head0 = w.power_integral(self._pf, 0.0, edges[0])
            tail1 = w.power_integral(self._pf, edges[-1], math.inf)
            cum = head0 + np.concatenate([[0.0], np.cumsum(masses)])
            suf = tail1 + np.concatenate([np.cumsum(masses[::-1])[::-1], [0.0]])
            near = np.zeros(n, dtype=bool)
            for bk in w.breakpoints:
                if edges[0] < bk < edges[-1]:
                    j = int(np.searchsorted(edges, bk))
                    for cell in (j - 1, j):
                        if 0 <= cell < n:
                            near[cell] = True
        self._table = _Table(edges=edges, cum=cum, suf=suf, near=near)
        return self._table

    def _partial_mass(self, a: float, b: float, adaptive: bool) -> float:
        if not b > a:
            return 0.0
        if adaptive:
            return self.weight.power_integral(self._pf, a, b)
        sl, sh = math.log(a), math.log(b)
        mid = 0.5 * (sl + sh)
        half = 0.5 * (sh - sl)
        xs = np.exp(mid + half * _GAUSS_X)
        vals = self.weight.values(xs)
        with np.errstate(over="ignore", invalid="ignore"):
            m = float((arr_pow(vals, self._pf) * xs) @ _GAUSS_W) * half
        if not math.isfinite(m):
            return self.weight.power_integral(self._pf, a, b)
        return max(m, 0.0)

    def _partial_sup(self, a: float, b: float) -> float:
        if not b > a:
            return 0.0
        xs = np.geomspace(a, b, 9)
        vals = self.weight.values(xs)
        best = float(np.max(vals))
        best = max(best, self.weight.value_side(a, +1), self.weight.value_side(b, -1))
        return best

    # -- scalar evaluation -------------------------------------------------

    def _mass_head(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        if math.isinf(t):
            return self.weight.power_integral(self._pf, 0.0, math.inf)
        if self._closed:
            return self.weight.power_integral(self._pf, 0.0, t)
        tb = self._ensure_table()
        e = tb.edges
        if t <= e[0]:
            return self.weight.power_integral(self._pf, 0.0, t)
        if t >= e[-1]:
            return tb.cum[-1] + self.weight.power_integral(self._pf, e[-1], t)
        i = int(np.searchsorted(e, t))
        if e[i] == t:
            return float(tb.cum[i])
        return float(tb.cum[i - 1]) + self._partial_mass(e[i - 1], t, tb.near[i - 1])

    def _mass_tail(self, t: float) -> float:
        if t <= 0.0:
            return self.weight.power_integral(self._pf, 0.0, math.inf)
        if math.isinf(t):
            return 0.0
        if self._closed:
            return self.weight.power_integral(self._pf, t, math.inf)
        tb = self._ensure_table()
        e = tb.edges
        if t >= e[-1]:
            return self.weight.power_integral(self._pf, t, math.inf)
        if t <= e[0]:
            return tb.suf[0] + self.weight.power_integral(self._pf, t, e[0])
        i = int(np.searchsorted(e, t))
        if e[i] == t:
            return float(tb.suf[i])
        return float(tb.suf[i]) + self._partial_mass(t, e[i], tb.near[i - 1])

    def _sup_head(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        if math.isinf(t):
            return self.total()
        tb = self._ensure_table()
        e = tb.edges
        if t <= e[0]:
            return self._memo_sup(0.0, t)
        if t >= e[-1]:
            return max(float(tb.cum[-1]), self._memo_sup(e[-1], t))
        i = int(np.searchsorted(e, t))
        if e[i] == t:
            return float(tb.cum[i])
        return max(float(tb.cum[i - 1]), self._partial_sup(e[i - 1], t))

    def _sup_tail(self, t: float) -> float:
        if t <= 0.0:
            return self.total()
        if math.isinf(t):
            return 0.0
        tb = self._ensure_table()
        e = tb.edges
        if t >= e[-1]:
            return self._memo_sup(t, math.inf)
        if t <= e[0]:
            return max(float(tb.suf[0]), self._memo_sup(t, e[0]))
        i = int(np.searchsorted(e, t))
        if e[i] == t:
            return float(tb.suf[i])
        return max(float(tb.suf[i]), self._partial_sup(t, e[i]))

    def _memo_sup(self, a: float, b: float) -> float:
        key = ("sup", a, b)
        if key not in self._memo:
            self._memo[key] = self.weight.sup_on(a, b)
        return self._memo[key]

    def __call__(self, t: float) -> float:
        t = float(t)
        key = t
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        if self._sup:
            out = self._sup_tail(t) if self.tail else self._sup_head(t)
        else:
            mass = self._mass_tail(t) if self.tail else self._mass_head(t)
            out = xpow(mass, 1.0 / self._pf)
        if len(self._memo) < 200_000:
            self._memo[key] = out
        return out

    def value_side(self, t: float, side: int) -> float:
        """One-sided limit at t; differs from the value only across a
        non-integrable singularity or, for p = inf, a jump of w."""
        t = float(t)
        if side == 0:
            return self(t)
        if self._sup:
            base = self(t)
            w = self.weight
            if not self.tail and side > 0:
                return max(base, w.value_side(t, +1))
            if self.tail and side < 0:
                return max(base, w.value_side(t, -1))
            return base
        v = self(t)
        if math.isinf(v):
            return v
        if not self.tail and side > 0:
            probe = self.weight.power_integral(self._pf, t, t * (1.0 + 1e-9))
            return math.inf if math.isinf(probe) else v
        if self.tail and side < 0:
            probe = self.weight.power_integral(self._pf, t * (1.0 - 1e-9), t)
            return math.inf if math.isinf(probe) else v
        return v

    # -- vectorised evaluation ---------------------------------------------

    def batch(self, ts: np.ndarray) -> np.ndarray:
        """Norm values at many points in one pass."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.empty(ts.shape, dtype=float)
        if ts.size == 0:
            return out
        if ts.size <= 4:
            for i, t in enumerate(ts):
                out[i] = self(t)
            return out

        inner = np.isfinite(ts) & (ts > 0.0)
        if not self.tail:
            out[ts <= 0.0] = 0.0
            out[np.isinf(ts)] = self.total()
        else:
            out[ts <= 0.0] = self.total()
            out[np.isinf(ts)] = 0.0
        if not np.any(inner):
            return out

        pts = np.unique(ts[inner])
        w = self.weight
        bks = np.asarray(
            [b for b in w.breakpoints if pts[0] < b < pts[-1]], dtype=float
        )
        edges = np.unique(np.concatenate([pts, bks])) if bks.size else pts

        if self._sup:
            sups = _cell_sups(w, edges) if edges.size > 1 else np.zeros(0)
            if not self.tail:
                head0 = w.sup_on(0.0, edges[0])
                run = np.maximum.accumulate(np.concatenate([[head0], sups]))
            else:
                tail1 = w.sup_on(edges[-1], math.inf)
                run = np.maximum.accumulate(np.concatenate([[tail1], sups[::-1]]))[::-1]
            pos = np.searchsorted(edges, pts)
            vals_at = run[pos]
        else:
            masses, _ = segment_masses(w, self._pf, edges) if edges.size > 1 else (
                np.zeros(0),
                np.zeros(0),
            )
            if not self.tail:
                head0 = w.power_integral(self._pf, 0.0, edges[0])
                run = head0 + np.concatenate([[0.0], np.cumsum(masses)])
            else:
                tail1 = w.power_integral(self._pf, edges[-1], math.inf)
                run = tail1 + np.concatenate([np.cumsum(masses[::-1])[::-1], [0.0]])
            pos = np.searchsorted(edges, pts)
            vals_at = arr_pow(run[pos], 1.0 / self._pf)

        lookup = np.searchsorted(pts, ts[inner])
        out[inner] = vals_at[lookup]
        return out


# -- symbolic orders of running norms -------------------------------------


def _poly_of(o: Order) -> PolyOrder:
    """Local polynomial picture of an order near t = 0."""
    if isinstance(o, ExpOrder):
        return PolyOrder(o.alpha, 0.0)
    return o


def _mass_growth(o: Order, end: str) -> Optional[Order]:
    """Order of a divergent running integral driven by behaviour at one
    end, before the 1/p root is taken."""
    if isinstance(o, ExpOrder):
        if end == "inf" and o.rate > 0:
            return ExpOrder(o.rate, o.alpha)
        o = PolyOrder(o.alpha, 0.0)
    a, b = o.alpha, o.beta
    if abs(a + 1.0) <= 1e-12:
        if abs(b + 1.0) <= 1e-12:
            return None
        return PolyOrder(0.0, b + 1.0)
    return PolyOrder(a + 1.0, b)


def _mass_decay(o: Order, end: str) -> Optional[Order]:
    """Order of a convergent running integral's remainder at one end."""
    if isinstance(o, ExpOrder):
        if end == "inf" and o.rate < 0:
            return ExpOrder(o.rate, o.alpha)
        o = PolyOrder(o.alpha, 0.0)
    a, b = o.alpha, o.beta
    if abs(a + 1.0) <= 1e-12:
        if abs(b + 1.0) <= 1e-12:
            return None
        return PolyOrder(0.0, b + 1.0)
    return PolyOrder(a + 1.0, b)


def _norm_order(
    w: Weight, p: Exponent, tail: bool, end: str
) -> Optional[Order]:
    """Endpoint order of the running norm, or None when unknown or when
    the functional is identically infinite."""
    if w.is_zero:
        return ZERO_ORDER
    o0 = w.order_zero()
    oo = w.order_inf()

    if p.is_inf:
        near = o0 if end == "zero" else oo
        kind = limit_kind(near, end)
        if kind is None:
            return None
        if not tail:
            if end == "zero":
                # sup over (0, t): tracks w when w vanishes at 0, blows
                # up for all t when w does
                if kind == "zero":
                    return near
                if kind == "inf":
                    return None
                return PolyOrder(0.0)
            if kind == "inf":
                return near
            return PolyOrder(0.0)
        else:
            if end == "inf":
                if kind == "zero":
                    return near
                if kind == "inf":
                    return None
                return PolyOrder(0.0)
            if kind == "inf":
                return near
            return PolyOrder(0.0)

    pf = float(p)
    op0 = order_pow(o0, pf)
    opoo = order_pow(oo, pf)
    hc = head_converges(op0)
    tc = tail_converges(opoo)

    if not tail:
        if end == "zero":
            if op0 is None or hc is None:
                return None
            if op0 is ZERO_ORDER:
                return ZERO_ORDER
            if not hc:
                return None
            grown = _mass_growth(_poly_of(op0), "zero")
            return order_pow(grown, 1.0 / pf)
        # head at oo: either a finite limit or growth driven by the tail
        if hc is False:
            return None
        if tc is None or hc is None:
            return None
        if tc:
            return PolyOrder(0.0)
        if opoo is ZERO_ORDER:
            return PolyOrder(0.0)
        grown = _mass_growth(opoo, "inf")
        return order_pow(grown, 1.0 / pf)
    else:
        if end == "inf":
            if opoo is None or tc is None:
                return None
            if opoo is ZERO_ORDER:
                return ZERO_ORDER
            if not tc:
                return None
            dec = _mass_decay(opoo, "inf")
            return order_pow(dec, 1.0 / pf)
        # tail at 0: a finite limit unless the head mass diverges
        if tc is False:
            return None
        if hc is None or tc is None:
            return None
        if hc:
            return PolyOrder(0.0)
        if op0 is ZERO_ORDER:
            return PolyOrder(0.0)
        dec = _mass_decay(_poly_of(op0), "zero")
        return order_pow(dec, 1.0 / pf)


# -- running norms as weights ----------------------------------------------


@dataclass(frozen=True)
class NormWeight(Weight):
    """Running norm of an inner weight, usable as a weight itself.

    ``tail=True`` gives t -> ||inner||_{p,(t,oo)}, otherwise the head
    norm over (0, t).
    """

    inner: Weight
    p: Exponent
    tail: bool
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "p", Exponent(self.p))

    @property
    def functional(self) -> NormFunctional:
        fn = self._cache.get("fn")
        if fn is None:
            fn = NormFunctional(self.inner, self.p, self.tail)
            self._cache["fn"] = fn
        return fn

    def values(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return self.functional.batch(ts)

    def __call__(self, t):
        return self.functional(float(t))

    def value_side(self, t, side):
        return self.functional.value_side(float(t), side)

    @property
    def breakpoints(self):
        return self.inner.breakpoints

    @property
    def is_zero(self):
        return self.inner.is_zero

    def order_zero(self):
        return _norm_order(self.inner, self.p, self.tail, "zero")

    def order_inf(self):
        return _norm_order(self.inner, self.p, self.tail, "inf")

    def serialize(self):
        name = "tailnorm" if self.tail else "headnorm"
        ptxt = "inf" if self.p.is_inf else repr(float(self.p))
        return f"{name}({self.inner.serialize()}, {ptxt})"


def head_norm_weight(inner: Weight, p: ExponentLike) -> NormWeight:
    return NormWeight(inner, Exponent(p), False)


def tail_norm_weight(inner: Weight, p: ExponentLike) -> NormWeight:
    return NormWeight(inner, Exponent(p), True)


def _norm_builder(tail: bool):
    def build(toks, base_dir, parse_sum, parse_number):
        inner = parse_sum(toks, base_dir)
        toks.expect("punct", ",")
        pval = parse_number(toks)
        toks.expect("punct", ")")
        return NormWeight(inner, Exponent(pval), tail)

    return build


register_parser_extension("headnorm", _norm_builder(False))
register_parser_extension("tailnorm", _norm_builder(True))


# -- space descriptions ----------------------------------------------------


def _as_exponent(x) -> Exponent:
    return x if isinstance(x, Exponent) else Exponent(x)


@dataclass(frozen=True)
class LebesgueSpace:
    """L_p(w): ||f|| = ||f w||_{p,(0,oo)}."""

    p: Exponent
    w: Weight

    def __post_init__(self):
        object.__setattr__(self, "p", _as_exponent(self.p))

    kind = "lebesgue"


@dataclass(frozen=True)
class CesaroSpace:
    """Ces_{p,q}(u, v): outer q-norm in u of t -> ||f||_{p,v,(0,t)}."""

    p: Exponent
    q: Exponent
    u: Weight
    v: Weight
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "p", _as_exponent(self.p))
        object.__setattr__(self, "q", _as_exponent(self.q))

    kind = "cesaro"

    def outer_tail_norm(self) -> NormFunctional:
        """t -> ||u||_{q,(t,oo)}, the quantity the validity gate bounds."""
        fn = self._cache.get("outer")
        if fn is None:
            fn = NormFunctional(self.u, self.q, tail=True)
            self._cache["outer"] = fn
        return fn


@dataclass(frozen=True)
class CopsonSpace:
    """Cop_{p,q}(u, v): outer q-norm in u of t -> ||f||_{p,v,(t,oo)}."""

    p: Exponent
    q: Exponent
    u: Weight
    v: Weight
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "p", _as_exponent(self.p))
        object.__setattr__(self, "q", _as_exponent(self.q))

    kind = "copson"

    def outer_head_norm(self) -> NormFunctional:
        """t -> ||u||_{q,(0,t)}."""
        fn = self._cache.get("outer")
        if fn is None:
            fn = NormFunctional(self.u, self.q, tail=False)
            self._cache["outer"] = fn
        return fn


Space = Union[LebesgueSpace, CesaroSpace, CopsonSpace]


@dataclass(frozen=True)
class ValidityResult:
    ok: bool
    witness: Optional[float]
    reason: str

    def __bool__(self) -> bool:
        return self.ok


_PROBES = (1e-6, 1e-3, 1.0, 1e3, 1e6)


def _certified_positive(w: Weight, end: str) -> bool:
    """Whether the endpoint order guarantees w > 0 near that end.

    A power/exponential order certifies eventual positivity, so running
    norms toward that end stay positive even when their float values
    underflow to zero.
    """
    o = w.order_zero() if end == "zero" else w.order_inf()
    return o is not None and o is not ZERO_ORDER


def _samples_positive(w: Weight, lo: float, hi: float) -> bool:
    xs = np.geomspace(max(lo, 1e-12), max(hi, 2e-12), 64)
    return bool(np.any(w.values(xs) > 0.0))


def check_space_validity(space: Space) -> ValidityResult:
    """Gate a space description before any constant is computed.

    Cesaro spaces need 0 < ||u||_{q,(t,oo)} < oo for every t > 0,
    Copson spaces the same for head norms ||u||_{q,(0,t)}.  The check
    combines symbolic endpoint orders with probe evaluations; the
    witness is a point where the gate fails.
    """
    if isinstance(space, LebesgueSpace):
        if space.w.is_zero:
            return ValidityResult(False, None, "weight vanishes identically")
        return ValidityResult(True, None, "")

    u = space.u
    if u.is_zero:
        return ValidityResult(False, 1.0, "outer weight vanishes identically")

    if isinstance(space, CesaroSpace):
        fn = space.outer_tail_norm()
        qf = space.q
        if not qf.is_inf:
            tc = tail_converges(order_pow(u.order_inf(), float(qf)))
            if tc is False:
                return ValidityResult(
                    False, 1.0, "outer weight tail norm is infinite for every t"
                )
        else:
            if limit_kind(u.order_inf(), "inf") == "inf":
                return ValidityResult(
                    False, 1.0, "outer weight is unbounded toward infinity"
                )
        if u.order_inf() is ZERO_ORDER:
            return ValidityResult(
                False, 1e6, "outer weight vanishes near infinity; tail norms hit zero"
            )
        for t in _PROBES:
            val = fn(t)
            if val == 0.0:
                # distinguish a genuinely dead tail from float underflow
                if _certified_positive(u, "inf") or _samples_positive(u, t, 1e10):
                    continue
                return ValidityResult(False, t, f"tail norm of u vanishes at t={t:g}")
            if math.isinf(val):
                return ValidityResult(False, t, f"tail norm of u is infinite at t={t:g}")
        return ValidityResult(True, None, "")

    fn = space.outer_head_norm()
    qf = space.q
    if not qf.is_inf:
        hc = head_converges(order_pow(u.order_zero(), float(qf)))
        if hc is False:
            return ValidityResult(
                False, 1.0, "outer weight head norm is infinite for every t"
            )
    else:
        if limit_kind(u.order_zero(), "zero") == "inf":
            return ValidityResult(False, 1.0, "outer weight is unbounded toward zero")
    if u.order_zero() is ZERO_ORDER:
        return ValidityResult(
            False, 1e-6, "outer weight vanishes near zero; head norms hit zero"
        )
    for t in _PROBES:
        val = fn(t)
        if val == 0.0:
            if _certified_positive(u, "zero") or _samples_positive(u, 1e-12, t):
                continue
            return ValidityResult(False, t, f"head norm of u vanishes at t={t:g}")
        if math.isinf(val):
            return ValidityResult(False, t, f"head norm of u is infinite at t={t:g}")
    return ValidityResult(True, None, "")


def lebesgue_reduction(space: Space) -> LebesgueSpace:
    """Collapse a p = q Cesaro or Copson space onto a weighted Lebesgue
    space with the same norm.

    Swapping the order of integration in ||f||^p gives

        Ces_{p,p}(u, v) = L_p( v(x) * ||u||_{p,(x,oo)} )
        Cop_{p,p}(u, v) = L_p( v(x) * ||u||_{p,(0,x)} )

    and the same identity holds with suprema when p = inf.
    """
    if isinstance(space, LebesgueSpace):
        return space
    if space.p != space.q:
        raise PreconditionFailedError(
            "the Lebesgue collapse needs matching inner and outer exponents",
            gate="p == q",
        )
    res = check_space_validity(space)
    if not res.ok:
        raise InvalidSpaceError(res.reason, witness=res.witness)
    tail = isinstance(space, CesaroSpace)
    nw = NormWeight(space.u, space.p, tail)
    return LebesgueSpace(space.p, Product((space.v, nw)))


# -- Stieltjes envelopes ---------------------------------------------------


def norm_envelope(
    weight: Weight,
    q: ExponentLike,
    *,
    tail: bool,
    rho: float,
    label: str = "",
) -> MonotoneEnvelope:
    """Package t -> +-||weight||_{q,.}^rho as a nondecreasing integrator.

    The sign is forced by monotonicity: tail norms fall, head norms
    rise, so a tail norm to a positive power (and a head norm to a
    negative one) enters with a minus sign and range [-oo, 0].  For
    finite q the envelope also carries the chain-rule density

        |d phi/dt| = (|rho|/q) * ||w||^(rho-q) * w(t)^q,

    letting Stieltjes integrals run through ordinary quadrature as well
    as through partition sums.
    """
    if rho == 0.0:
        raise ValueError("envelope exponent rho must be nonzero")
    qe = Exponent(q)
    fn = NormFunctional(weight, qe, tail)
    negate = (tail and rho > 0.0) or ((not tail) and rho < 0.0)
    sign = -1.0 if negate else 1.0

    def phi(t: float) -> float:
        return sign * xpow(fn(t), rho)

    def phi_values(ts: np.ndarray) -> np.ndarray:
        return sign * arr_pow(fn.batch(ts), rho)

    def phi_side(t: float, side: int) -> float:
        return sign * xpow(fn.value_side(t, side), rho)

    density = None
    d_oz = d_oi = None
    if not qe.is_inf:
        qf = float(qe)
        c = abs(rho) / qf

        def dens(t: float) -> float:
            scaled = c * xpow(fn(t), rho - qf)
            return xmul(scaled, xpow(weight(t), qf))

        def dens_values(ts: np.ndarray) -> np.ndarray:
            bs = arr_pow(fn.batch(ts), rho - qf)
            ws = arr_pow(weight.values(ts), qf)
            with np.errstate(invalid="ignore"):
                out = c * bs * ws
            return np.where(np.isnan(out), 0.0, out)

        density = batched(dens, dens_values)
        for end in ("zero", "inf"):
            o = order_mul(
                order_pow(_norm_order(weight, qe, tail, end), rho - qf),
                order_pow(weight.order_zero() if end == "zero" else weight.order_inf(), qf),
            )
            if end == "zero":
                d_oz = o
            else:
                d_oi = o

    atoms = qe.is_inf and len(weight.breakpoints) > 0
    return MonotoneEnvelope(
        phi=batched(phi, phi_values),
        range_sign=-1 if negate else 1,
        breakpoints=weight.breakpoints,
        density=density,
        density_order_zero=d_oz,
        density_order_inf=d_oi,
        atoms=atoms,
        phi_side=phi_side,
        label=label or ("tail" if tail else "head") + f"norm^{rho:g}",
    )
