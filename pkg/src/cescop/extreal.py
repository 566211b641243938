"""Extended-real arithmetic for norm and constant computations.

All quantities produced by norm functionals live in [0, oo].  Plain float
arithmetic turns the degenerate products that show up in sup/integral
formulas (0 times an infinite norm, ratios of two vanishing norms) into
NaN, which then poisons every downstream comparison.  Here those cases are
pinned down once:

    0 * (+-oo) = 0        0 / 0 = 0        x / (+-oo) = 0

Division of a positive number by zero yields +oo (the convention used when
a formula divides by a vanishing norm).  NaN never escapes this module.
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np

__all__ = [
    "XReal",
    "xmul",
    "xdiv",
    "xpow",
    "xadd",
    "arr_mul",
    "arr_div",
    "arr_pow",
]

Number = Union[int, float, "XReal"]


def _val(x: Number) -> float:
    return x.value if isinstance(x, XReal) else float(x)


class XReal:
    """A single extended-real value with the degenerate products resolved.

    Supports +, *, /, ** and comparisons against plain numbers.  The
    wrapped value is always a float (possibly +-inf), never NaN.
    """

    __slots__ = ("value",)

    def __init__(self, value: float):
        v = float(value)
        if math.isnan(v):
            raise ValueError("XReal cannot hold NaN")
        self.value = v

    def __float__(self) -> float:
        return self.value

    def __repr__(self) -> str:
        return f"XReal({self.value!r})"

    @property
    def is_inf(self) -> bool:
        return math.isinf(self.value)

    def __add__(self, other: Number) -> "XReal":
        return XReal(xadd(self.value, _val(other)))

    __radd__ = __add__

    def __mul__(self, other: Number) -> "XReal":
        return XReal(xmul(self.value, _val(other)))

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "XReal":
        return XReal(xdiv(self.value, _val(other)))

    def __rtruediv__(self, other: Number) -> "XReal":
        return XReal(xdiv(_val(other), self.value))

    def __pow__(self, other: Number) -> "XReal":
        return XReal(xpow(self.value, _val(other)))

    def __eq__(self, other) -> bool:
        try:
            return self.value == _val(other)
        except (TypeError, ValueError):
            return NotImplemented

    def __lt__(self, other) -> bool:
        return self.value < _val(other)

    def __le__(self, other) -> bool:
        return self.value <= _val(other)

    def __gt__(self, other) -> bool:
        return self.value > _val(other)

    def __ge__(self, other) -> bool:
        return self.value >= _val(other)

    def __hash__(self) -> int:
        return hash(self.value)


def xmul(a: float, b: float) -> float:
    """Product with 0 * (+-oo) = 0."""
    a = float(a)
    b = float(b)
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


def xdiv(a: float, b: float) -> float:
    """Quotient with 0/0 = 0, x/(+-oo) = 0 and x/0 = +oo for x > 0."""
    a = float(a)
    b = float(b)
    if math.isinf(b):
        return 0.0
    if b == 0.0:
        if a == 0.0:
            return 0.0
        return math.inf if a > 0 else -math.inf
    if math.isinf(a):
        return a if b > 0 else -a
    return a / b


def xadd(a: float, b: float) -> float:
    """Sum; opposite infinities are not expected and raise."""
    a = float(a)
    b = float(b)
    if math.isinf(a) and math.isinf(b) and (a > 0) != (b > 0):
        raise ValueError("oo - oo is undefined")
    return a + b


def xpow(a: float, s: float) -> float:
    """Power with 0^0 = 1, 0^s = oo for s < 0, oo^s = 0 for s < 0."""
    a = float(a)
    s = float(s)
    if s == 0.0:
        return 1.0
    if a == 0.0:
        return 0.0 if s > 0 else math.inf
    if math.isinf(a):
        return math.inf if s > 0 else 0.0
    try:
        r = a ** s
    except OverflowError:
        return math.inf if (s > 0) == (a > 1) else 0.0
    return r


# Vectorized variants.  They mirror the scalar conventions on numpy arrays;
# intermediate NaNs from 0*inf or 0/0 are replaced, so no NaN survives.

def arr_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", over="ignore"):
        out = np.asarray(a, dtype=float) * np.asarray(b, dtype=float)
    zero = (np.asarray(a) == 0.0) | (np.asarray(b) == 0.0)
    return np.where(zero, 0.0, out)


def arr_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = a / b
    out = np.where(np.isinf(b), 0.0, out)
    out = np.where((b == 0.0) & (a == 0.0), 0.0, out)
    out = np.where((b == 0.0) & (a > 0.0), np.inf, out)
    return out


def arr_pow(a: np.ndarray, s: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    s = float(s)
    if s == 0.0:
        return np.ones_like(a)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = np.power(a, s)
    if s < 0:
        out = np.where(a == 0.0, np.inf, out)
        out = np.where(np.isinf(a), 0.0, out)
    out = np.where(np.isnan(out) & ~np.isnan(a), 0.0, out)
    return out
