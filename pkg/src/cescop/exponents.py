"""Exponent arithmetic: dual exponents and difference exponents.

Exponents of function space norms live in (0, oo].  Finite values are kept
as exact :class:`fractions.Fraction` so identities such as

    1/diff(p, q) + 1/p = 1/q          (q < p)

hold exactly whenever the inputs are rational.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import total_ordering
from typing import Union

__all__ = ["Exponent", "dual_exponent", "diff_exponent", "INF"]

INF = math.inf

ExponentLike = Union["Exponent", int, float, Fraction, str]


@total_ordering
class Exponent:
    """A norm exponent in (0, oo]: an exact Fraction or infinity."""

    __slots__ = ("value",)

    def __init__(self, value: ExponentLike):
        if isinstance(value, Exponent):
            self.value = value.value
            return
        if isinstance(value, str):
            s = value.strip().lower()
            if s in ("inf", "infinity", "oo"):
                self.value = INF
                return
            value = Fraction(s)
        if isinstance(value, float) and math.isinf(value):
            self.value = INF
            return
        v = Fraction(value)
        if v <= 0:
            raise ValueError(f"exponent must be positive, got {value!r}")
        self.value = v

    @property
    def is_inf(self) -> bool:
        return self.value == INF

    @property
    def reciprocal(self) -> Fraction:
        """1/p, with 1/oo = 0."""
        if self.is_inf:
            return Fraction(0)
        return 1 / self.value

    def __float__(self) -> float:
        return float(self.value)

    def __eq__(self, other) -> bool:
        try:
            o = Exponent(other)
        except (ValueError, TypeError):
            return NotImplemented
        return self.value == o.value

    def __lt__(self, other) -> bool:
        o = Exponent(other)
        if self.is_inf:
            return False
        if o.is_inf:
            return True
        return self.value < o.value

    def __hash__(self) -> int:
        return hash(self.value)

    def __repr__(self) -> str:
        if self.is_inf:
            return "Exponent(inf)"
        return f"Exponent({str(self.value)!r})"

    def __str__(self) -> str:
        return "inf" if self.is_inf else str(self.value)

    def dual(self) -> "Exponent":
        return dual_exponent(self)


def dual_exponent(p: ExponentLike) -> Exponent:
    """The dual exponent p'.

    p' = p/(1-p) for 0 < p < 1, oo for p = 1, p/(p-1) for 1 < p < oo,
    and 1 for p = oo.
    """
    p = Exponent(p)
    if p.is_inf:
        return Exponent(1)
    v = p.value
    if v < 1:
        return Exponent(v / (1 - v))
    if v == 1:
        return Exponent(INF)
    return Exponent(v / (v - 1))


def diff_exponent(p: ExponentLike, q: ExponentLike) -> Exponent:
    """The difference exponent r with 1/r = 1/q - 1/p for q < p, else oo."""
    p = Exponent(p)
    q = Exponent(q)
    if not (q < p):
        return Exponent(INF)
    inv = q.reciprocal - p.reciprocal
    return Exponent(1 / inv)
