"""Best-constant estimates for direct Hardy-type inequalities.

The operators are the running integrals

    (Hf)(t)  = int_0^t f,        (H*f)(t) = int_t^oo f,

acting L_p(v) -> L_q(w) on (0, oo), and the running suprema S and S*
with sup-norm source L_inf(v).  Each constant below is finite exactly
when its inequality holds for all nonnegative f, and it matches the
best constant up to a two-sided factor independent of the weights.
The formula value is reported verbatim, never rescaled.

Two regimes occur.  When the source exponent does not exceed the
target one, the constant is a supremum of a product of running norms.
Otherwise it is an integral of one running norm against the
differenced r-th power of the other, with 1/r = 1/q - 1/p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ._assembly import SUP_REL, product_expr, root_err, sup_over_halfline
from .errors import PreconditionFailedError
from .estimates import ConstantEstimate
from .exponents import Exponent, diff_exponent, dual_exponent
from .extreal import xpow
from .quadrature import stieltjes
from .spaces import NormFunctional, norm_envelope
from .weights import PowerOf, Weight

__all__ = [
    "DirectHardyProblem",
    "constant_A",
    "constant_Astar",
    "constant_supremal",
]

_OPERATORS = ("H", "Hstar", "S", "Sstar")


@dataclass(frozen=True)
class DirectHardyProblem:
    """A two-weight inequality for H, H*, S or S*.

    ``v`` weighs the source side, ``w`` the target side.  The supremal
    operators read their source from L_inf(v), so they require p = inf.
    """

    p: Exponent
    q: Exponent
    v: Weight
    w: Weight
    operator: str = "H"

    def __post_init__(self):
        object.__setattr__(self, "p", Exponent(self.p))
        object.__setattr__(self, "q", Exponent(self.q))
        if self.operator not in _OPERATORS:
            raise ValueError(f"unknown operator {self.operator!r}")
        if self.operator in ("S", "Sstar") and not self.p.is_inf:
            raise PreconditionFailedError(
                "supremal operators take their source from a sup-norm space",
                gate="p == inf",
            )


def _require(prob: DirectHardyProblem, operator: str) -> None:
    if prob.operator != operator:
        raise PreconditionFailedError(
            f"this constant is defined for operator {operator}, got {prob.operator}",
            gate=f"operator == {operator}",
        )


def constant_A(prob: DirectHardyProblem) -> ConstantEstimate:
    """Constant for ||Hf||_{q,w} <= c ||f||_{p,v} with 1 <= p <= inf.

    Case p <= q:  sup_t ||v^{-1}||_{p',(0,t)} * ||w||_{q,(t,oo)}.
    Case q < p:   the same head norm integrated against
    d(-||w||_{q,(t,oo)}^r), rooted by r, with 1/r = 1/q - 1/p.
    """
    _require(prob, "H")
    p, q = prob.p, prob.q
    if p < 1:
        raise PreconditionFailedError(
            "the direct inequality needs p >= 1", gate="p >= 1"
        )
    head = NormFunctional(PowerOf(prob.v, -1.0), dual_exponent(p), tail=False)
    wtail = NormFunctional(prob.w, q, tail=True)

    if p <= q:
        if prob.w.is_zero:
            return ConstantEstimate(0.0, case="sup-product")
        val = sup_over_halfline(product_expr((head, 1.0), (wtail, 1.0)))
        return ConstantEstimate(
            val,
            case="sup-product",
            terms=(("sup", val),),
            error_bound=abs(val) * SUP_REL if math.isfinite(val) else 0.0,
        )

    r = float(diff_exponent(p, q))
    if prob.w.is_zero:
        return ConstantEstimate(0.0, case="differenced-tail")
    env = norm_envelope(prob.w, q, tail=True, rho=r, label="target tail norm^r")
    expr = product_expr((head, r))
    raw, err = stieltjes(
        expr,
        env,
        0.0,
        math.inf,
        f_order_zero=expr.order("zero"),
        f_order_inf=expr.order("inf"),
    )
    val = xpow(raw, 1.0 / r)
    return ConstantEstimate(
        val,
        case="differenced-tail",
        terms=(("stieltjes", raw),),
        error_bound=root_err(raw, err, r),
    )


def constant_Astar(prob: DirectHardyProblem) -> ConstantEstimate:
    """Constant for ||H*f||_{q,w} <= c ||f||_{p,v}; head/tail mirror of
    constant_A."""
    _require(prob, "Hstar")
    p, q = prob.p, prob.q
    if p < 1:
        raise PreconditionFailedError(
            "the direct inequality needs p >= 1", gate="p >= 1"
        )
    tail = NormFunctional(PowerOf(prob.v, -1.0), dual_exponent(p), tail=True)
    whead = NormFunctional(prob.w, q, tail=False)

    if p <= q:
        if prob.w.is_zero:
            return ConstantEstimate(0.0, case="sup-product")
        val = sup_over_halfline(product_expr((tail, 1.0), (whead, 1.0)))
        return ConstantEstimate(
            val,
            case="sup-product",
            terms=(("sup", val),),
            error_bound=abs(val) * SUP_REL if math.isfinite(val) else 0.0,
        )

    r = float(diff_exponent(p, q))
    if prob.w.is_zero:
        return ConstantEstimate(0.0, case="differenced-head")
    env = norm_envelope(prob.w, q, tail=False, rho=r, label="target head norm^r")
    expr = product_expr((tail, r))
    raw, err = stieltjes(
        expr,
        env,
        0.0,
        math.inf,
        f_order_zero=expr.order("zero"),
        f_order_inf=expr.order("inf"),
    )
    val = xpow(raw, 1.0 / r)
    return ConstantEstimate(
        val,
        case="differenced-head",
        terms=(("stieltjes", raw),),
        error_bound=root_err(raw, err, r),
    )


def constant_supremal(prob: DirectHardyProblem) -> ConstantEstimate:
    """Constant for the running-sup operators with sup-norm source.

    S (head sup):  ( int ||v^{-1}||_{inf,(0,t)}^q d(-||w||_{q,(t,oo)}^q) )^{1/q}
    S* (tail sup): the (0,t)/(t,oo)-swapped analogue against
    d(+||w||_{q,(0,t)}^q).  Needs 0 < q < inf.
    """
    if prob.operator not in ("S", "Sstar"):
        raise PreconditionFailedError(
            "this constant is defined for the supremal operators",
            gate="operator in (S, Sstar)",
        )
    q = prob.q
    if q.is_inf:
        raise PreconditionFailedError(
            "the supremal constants need a finite target exponent", gate="q < inf"
        )
    qf = float(q)
    heads = prob.operator == "S"
    if prob.w.is_zero:
        return ConstantEstimate(
            0.0, case="differenced-tail" if heads else "differenced-head"
        )
    inner = NormFunctional(PowerOf(prob.v, -1.0), Exponent("inf"), tail=not heads)
    env = norm_envelope(
        prob.w,
        q,
        tail=heads,
        rho=qf,
        label="target norm^q",
    )
    expr = product_expr((inner, qf))
    raw, err = stieltjes(
        expr,
        env,
        0.0,
        math.inf,
        f_order_zero=expr.order("zero"),
        f_order_inf=expr.order("inf"),
    )
    val = xpow(raw, 1.0 / qf)
    return ConstantEstimate(
        val,
        case="differenced-tail" if heads else "differenced-head",
        terms=(("stieltjes", raw),),
        error_bound=root_err(raw, err, qf),
    )
