"""Internal assembly pieces shared by the constant formulas.

Every characterising constant in this package is built from the same
few shapes: the supremum over t of a product of running norms raised to
powers, and a Stieltjes integral of such a product against a norm
envelope, rooted afterwards.  The helpers here bundle a scalar
callable, its vectorised form and symbolic endpoint hints so the
quadrature layer can be driven uniformly.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .errors import PreconditionFailedError
from .exponents import Exponent
from .extreal import arr_mul, arr_pow, xpow
from .orders import (
    Order,
    head_converges,
    limit_kind,
    order_mul,
    order_pow,
    tail_converges,
)
from .quadrature import supremum
from .spaces import NormFunctional, batched

# nominal relative accuracy of a polished grid supremum
SUP_REL = 1e-6

# Below this magnitude both sides of a ratio are treated as lost to
# underflow: the quotient of two such values carries no information.  A
# genuinely divergent ratio keeps a sizable numerator long after the
# denominator has decayed, so it is not affected by this cutoff.
_TINY = 1e-280


class FunctionalExpr:
    """Pointwise product of powers of running norms, with hints."""

    def __init__(self, factors: Sequence[tuple[NormFunctional, float]]):
        self.factors = tuple((f, float(s)) for f, s in factors)

    def __call__(self, t: float) -> float:
        return self.value(t)

    def value(self, t: float) -> float:
        from .extreal import xdiv, xmul

        # Negative powers are applied by division so that a ratio of two
        # subnormal norms stays finite instead of passing through an
        # overflowing reciprocal.
        num = 1.0
        den = 1.0
        for f, s in self.factors:
            if s >= 0.0:
                num = xmul(num, xpow(f(t), s))
            else:
                den = xmul(den, xpow(f(t), -s))
        if den == 1.0:
            return num
        if den < _TINY and num < _TINY:
            return 0.0
        return xdiv(num, den)

    def values(self, ts: np.ndarray) -> np.ndarray:
        from .extreal import arr_div

        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        num = np.ones(ts.shape)
        den = None
        for f, s in self.factors:
            if s >= 0.0:
                num = arr_mul(num, arr_pow(f.batch(ts), s))
            else:
                fac = arr_pow(f.batch(ts), -s)
                den = fac if den is None else arr_mul(den, fac)
        if den is None:
            return num
        out = arr_div(num, den)
        out[(den < _TINY) & (num < _TINY)] = 0.0
        return out

    def order(self, end: str) -> Optional[Order]:
        out: Optional[Order] = None
        first = True
        for f, s in self.factors:
            o = f.order_zero() if end == "zero" else f.order_inf()
            o = order_pow(o, s)
            out = o if first else order_mul(out, o)
            first = False
        return out

    @property
    def breakpoints(self) -> tuple:
        bks = set()
        for f, _ in self.factors:
            bks.update(f.breakpoints)
        return tuple(sorted(bks))


def product_expr(*factors: tuple[NormFunctional, float]) -> FunctionalExpr:
    return FunctionalExpr(factors)


def sup_over_halfline(expr: FunctionalExpr) -> float:
    return supremum(
        batched(expr.value, expr.values),
        0.0,
        math.inf,
        breakpoints=expr.breakpoints,
        order_zero=expr.order("zero"),
        order_inf=expr.order("inf"),
    )


def root_err(raw: float, err: float, r: float) -> float:
    """Forward error of raw**(1/r) given an absolute error on raw."""
    if not (0.0 < raw < math.inf) or not math.isfinite(err):
        return 0.0
    val = xpow(raw, 1.0 / r)
    return abs(val) * (err / raw) / abs(r)


def check_running_norms_finite(
    u, q: Exponent, tail: bool, name: str = "u"
) -> NormFunctional:
    """Require ||u||_{q,(t,oo)} (or the head version) finite for all t.

    Several constants divide by these running norms; an infinite norm
    would silently turn a supremum into 0, so it is rejected up front.
    ``name`` labels the weight in error messages.
    """
    fn = NormFunctional(u, q, tail)
    side = "tail" if tail else "head"
    gate = f"finite {side} norms of {name}"
    if q.is_inf:
        end = "inf" if tail else "zero"
        if limit_kind(u.order_zero() if end == "zero" else u.order_inf(), end) == "inf":
            raise PreconditionFailedError(
                f"{side} sup norms of {name} are infinite", gate=gate
            )
    else:
        conv = (
            tail_converges(order_pow(u.order_inf(), float(q)))
            if tail
            else head_converges(order_pow(u.order_zero(), float(q)))
        )
        if conv is False:
            raise PreconditionFailedError(
                f"{side} q-norms of {name} are infinite", gate=gate
            )
    if math.isinf(fn(1.0)):
        raise PreconditionFailedError(
            f"{side} norm of {name} is infinite at t=1", gate=gate
        )
    return fn
