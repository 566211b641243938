"""Constants for reverse Hardy-type inequalities.

Here the norm of a function is controlled by a norm of its running
integral or running supremum:

    ||g||_{p,w} <= c ||Hg||_{q,u}      (and the H*, S, S* variants).

For the integral operators this can only hold for p <= 1.  Two regimes
occur.  When q <= p the constant is a supremum of a ratio of tail (or
head) norms.  When p < q it is a Stieltjes integral of one norm raised
to r against the differenced negative r-th power of the other, rooted
by r, plus a boundary ratio of the full-line norms, with
1/r = 1/p - 1/q.  A boundary term whose denominator is infinite
contributes zero.

The integral-operator constants dualise w (p' = p/(1-p) for p < 1,
inf at p = 1); the supremal constants use ||w||_p itself and allow any
0 < p <= inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ._assembly import (
    SUP_REL,
    check_running_norms_finite,
    product_expr,
    root_err,
    sup_over_halfline,
)
from .errors import PreconditionFailedError
from .estimates import ConstantEstimate
from .exponents import Exponent, diff_exponent, dual_exponent
from .extreal import xadd, xdiv, xpow
from .quadrature import stieltjes
from .spaces import NormFunctional, norm_envelope
from .weights import Weight

__all__ = [
    "ReverseProblem",
    "constant_C",
    "constant_Cstar",
    "constant_E",
    "constant_Estar",
]

_OPERATORS = ("H", "Hstar", "S", "Sstar")


@dataclass(frozen=True)
class ReverseProblem:
    """A reverse two-weight inequality for H, H*, S or S*.

    ``w`` weighs the controlled side, ``u`` the operator side.  The
    operator fixes which running norms of u must stay finite: tails for
    H and S, heads for H* and S*.
    """

    p: Exponent
    q: Exponent
    w: Weight
    u: Weight
    operator: str = "H"

    def __post_init__(self):
        object.__setattr__(self, "p", Exponent(self.p))
        object.__setattr__(self, "q", Exponent(self.q))
        if self.operator not in _OPERATORS:
            raise ValueError(f"unknown operator {self.operator!r}")


def _reverse_constant(
    prob: ReverseProblem,
    *,
    tails: bool,
    w_exponent: Exponent,
    allow_p: str,
) -> ConstantEstimate:
    """Shared engine: C/C* use the dualised w exponent, E/E* use p itself."""
    p, q = prob.p, prob.q
    if allow_p == "small" and p > 1:
        raise PreconditionFailedError(
            "the reverse integral inequality needs p <= 1", gate="p <= 1"
        )
    ufn = check_running_norms_finite(prob.u, q, tails)
    wfn = NormFunctional(prob.w, w_exponent, tails)

    if q <= p:
        if prob.w.is_zero:
            return ConstantEstimate(0.0, case="ratio-sup")
        val = sup_over_halfline(product_expr((wfn, 1.0), (ufn, -1.0)))
        return ConstantEstimate(
            val,
            case="ratio-sup",
            terms=(("sup", val),),
            error_bound=abs(val) * SUP_REL if math.isfinite(val) else 0.0,
        )

    r = float(diff_exponent(q, p))
    if prob.w.is_zero:
        return ConstantEstimate(0.0, case="differenced+boundary")
    env = norm_envelope(
        prob.u,
        q,
        tail=tails,
        rho=-r,
        label="operator norm^-r",
    )
    expr = product_expr((wfn, r))
    raw, err = stieltjes(
        expr,
        env,
        0.0,
        math.inf,
        f_order_zero=expr.order("zero"),
        f_order_inf=expr.order("inf"),
    )
    main = xpow(raw, 1.0 / r)
    boundary = xdiv(wfn.total(), ufn.total())
    val = xadd(main, boundary)
    return ConstantEstimate(
        val,
        case="differenced+boundary",
        terms=(("stieltjes", main), ("boundary", boundary)),
        error_bound=root_err(raw, err, r),
    )


def constant_C(prob: ReverseProblem) -> ConstantEstimate:
    """||g||_{p,w} <= c ||Hg||_{q,u} with 0 < p <= 1.

    q <= p:  sup_t ||w||_{p',(t,oo)} / ||u||_{q,(t,oo)}.
    p < q:   ( int ||w||_{p',(t,oo)}^r d(||u||_{q,(t,oo)}^{-r}) )^{1/r}
             + ||w||_{p',(0,oo)} / ||u||_{q,(0,oo)}.
    """
    _require(prob, "H")
    return _reverse_constant(
        prob, tails=True, w_exponent=dual_exponent(prob.p), allow_p="small"
    )


def constant_Cstar(prob: ReverseProblem) -> ConstantEstimate:
    """||g||_{p,w} <= c ||H*g||_{q,u}; heads replace tails and the
    envelope is d(-||u||_{q,(0,t)}^{-r})."""
    _require(prob, "Hstar")
    return _reverse_constant(
        prob, tails=False, w_exponent=dual_exponent(prob.p), allow_p="small"
    )


def constant_E(prob: ReverseProblem) -> ConstantEstimate:
    """||g||_{p,w} <= c ||Sg||_{q,u} for the running sup S, 0 < p <= inf.

    Same shapes as constant_C but with ||w||_p undualised.
    """
    _require(prob, "S")
    return _reverse_constant(prob, tails=True, w_exponent=prob.p, allow_p="any")


def constant_Estar(prob: ReverseProblem) -> ConstantEstimate:
    """||g||_{p,w} <= c ||S*g||_{q,u}; head version of constant_E."""
    _require(prob, "Sstar")
    return _reverse_constant(prob, tails=False, w_exponent=prob.p, allow_p="any")


def _require(prob: ReverseProblem, operator: str) -> None:
    if prob.operator != operator:
        raise PreconditionFailedError(
            f"this constant is defined for operator {operator}, got {prob.operator}",
            gate=f"operator == {operator}",
        )
