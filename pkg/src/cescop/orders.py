"""Local growth orders of weights at the endpoints of (0, oo).

A weight built from the expression algebra behaves near 0+ like
``t**alpha * (1 + |log t|)**beta`` and near oo either like a similar
power-log term or like ``exp(rate*t) * t**alpha``.  Tracking these orders
symbolically gives exact convergence verdicts for head integrals
``int_0^T f`` and tail integrals ``int_T^oo f``, including the log-power
boundary cases that a purely numerical fit would misclassify.

The dyadic sample fit in :mod:`cescop.quadrature` remains the fallback for
black-box integrands with no symbolic order attached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

__all__ = [
    "PolyOrder",
    "ExpOrder",
    "ZERO_ORDER",
    "Order",
    "order_mul",
    "order_pow",
    "order_add",
    "limit_kind",
    "head_converges",
    "tail_converges",
]

_EPS = 1e-12


@dataclass(frozen=True)
class PolyOrder:
    """f(t) comparable to t**alpha * (1+|log t|)**beta near the endpoint."""

    alpha: float
    beta: float = 0.0


@dataclass(frozen=True)
class ExpOrder:
    """f(t) comparable to exp(rate*t) * t**alpha near oo; rate != 0."""

    rate: float
    alpha: float = 0.0


class _ZeroOrder:
    """Order of the identically-zero weight."""

    def __repr__(self) -> str:
        return "ZERO_ORDER"


ZERO_ORDER = _ZeroOrder()

Order = Union[PolyOrder, ExpOrder, _ZeroOrder]


def order_mul(a: Optional[Order], b: Optional[Order]) -> Optional[Order]:
    if a is None or b is None:
        return None
    if a is ZERO_ORDER or b is ZERO_ORDER:
        return ZERO_ORDER
    if isinstance(a, PolyOrder) and isinstance(b, PolyOrder):
        return PolyOrder(a.alpha + b.alpha, a.beta + b.beta)
    if isinstance(a, ExpOrder) and isinstance(b, ExpOrder):
        rate = a.rate + b.rate
        if abs(rate) <= _EPS:
            return PolyOrder(a.alpha + b.alpha, 0.0)
        return ExpOrder(rate, a.alpha + b.alpha)
    if isinstance(a, ExpOrder):
        # log factors are irrelevant beside exponential behaviour
        return ExpOrder(a.rate, a.alpha + b.alpha)
    return ExpOrder(b.rate, a.alpha + b.alpha)


def order_pow(o: Optional[Order], s: float) -> Optional[Order]:
    if o is None:
        return None
    if o is ZERO_ORDER:
        return ZERO_ORDER if s > 0 else None
    if s == 0.0:
        return PolyOrder(0.0, 0.0)
    if isinstance(o, PolyOrder):
        return PolyOrder(o.alpha * s, o.beta * s)
    return ExpOrder(o.rate * s, o.alpha * s)


def _dominates(a: Order, b: Order, end: str) -> bool:
    """True when a is the asymptotically larger of the two at the endpoint."""
    if b is ZERO_ORDER:
        return True
    if a is ZERO_ORDER:
        return False
    if end == "inf":
        ka = a.rate if isinstance(a, ExpOrder) else 0.0
        kb = b.rate if isinstance(b, ExpOrder) else 0.0
        if ka != kb:
            return ka > kb
        aa = a.alpha
        ab = b.alpha
        if aa != ab:
            return aa > ab
        ba = a.beta if isinstance(a, PolyOrder) else 0.0
        bb = b.beta if isinstance(b, PolyOrder) else 0.0
        return ba >= bb
    # near zero: exponentials are flat, smaller alpha dominates
    aa = 0.0 if isinstance(a, ExpOrder) else a.alpha
    ab = 0.0 if isinstance(b, ExpOrder) else b.alpha
    if aa != ab:
        return aa < ab
    ba = a.beta if isinstance(a, PolyOrder) else 0.0
    bb = b.beta if isinstance(b, PolyOrder) else 0.0
    return ba >= bb


def order_add(a: Optional[Order], b: Optional[Order], end: str) -> Optional[Order]:
    if a is None or b is None:
        return None
    return a if _dominates(a, b, end) else b


def limit_kind(o: Optional[Order], end: str) -> Optional[str]:
    """Limit of the underlying quantity: 'zero', 'finite' or 'inf'."""
    if o is None:
        return None
    if o is ZERO_ORDER:
        return "zero"
    if end == "inf":
        if isinstance(o, ExpOrder):
            return "inf" if o.rate > 0 else "zero"
        if o.alpha > _EPS:
            return "inf"
        if o.alpha < -_EPS:
            return "zero"
        if o.beta > _EPS:
            return "inf"
        if o.beta < -_EPS:
            return "zero"
        return "finite"
    if isinstance(o, ExpOrder):
        return "finite"
    if o.alpha > _EPS:
        return "zero"
    if o.alpha < -_EPS:
        return "inf"
    # |log t| -> oo as t -> 0+, so positive beta blows up
    if o.beta > _EPS:
        return "inf"
    if o.beta < -_EPS:
        return "zero"
    return "finite"


def head_converges(o: Optional[Order]) -> Optional[bool]:
    """Whether int_0^T f dt converges for f with order o at 0+."""
    if o is None:
        return None
    if o is ZERO_ORDER:
        return True
    if isinstance(o, ExpOrder):
        o = PolyOrder(o.alpha, 0.0)
    if o.alpha > -1 + _EPS:
        return True
    if o.alpha < -1 - _EPS:
        return False
    return o.beta < -1 - _EPS


def tail_converges(o: Optional[Order]) -> Optional[bool]:
    """Whether int_T^oo f dt converges for f with order o at oo."""
    if o is None:
        return None
    if o is ZERO_ORDER:
        return True
    if isinstance(o, ExpOrder):
        return o.rate < 0
    if o.alpha < -1 - _EPS:
        return True
    if o.alpha > -1 + _EPS:
        return False
    return o.beta < -1 - _EPS
