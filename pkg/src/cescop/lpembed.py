"""Embedding constants between weighted Lebesgue and Cesaro/Copson spaces.

Four one-sided embeddings are covered, each up to equivalence and each
reducible to a direct or reverse two-weight inequality:

  into_cesaro   L_{p1}(v1) -> Ces_{p2,q}(u,v2),   needs p2 <= p1,
  into_copson   L_{p1}(v1) -> Cop_{p2,q}(u,v2),   needs p2 <= p1,
  from_cesaro   Ces_{p2,q}(u,v2) -> L_{p1}(v1),   needs p1 <= p2,
  from_copson   Cop_{p2,q}(u,v2) -> L_{p1}(v1),   needs p1 <= p2.

The formulas combine a running norm of the ratio of the two inner
weights over a Hoelder complement exponent with a running q-norm of the
outer weight u, either as a supremum of products or as a rooted
Stieltjes integral.  The "from" formulas divide by norms of u and add a
boundary ratio of full-line norms (zero when the denominator is
infinite).

This module also evaluates associate-space norms of Cesaro and Copson
spaces with 1 <= p < inf, which have the same two-regime shape in q.
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
from .errors import InvalidSpaceError, PreconditionFailedError
from .estimates import ConstantEstimate
from .exponents import Exponent, diff_exponent, dual_exponent
from .extreal import xadd, xdiv, xpow
from .quadrature import stieltjes
from .spaces import (
    CesaroSpace,
    CopsonSpace,
    NormFunctional,
    check_space_validity,
    norm_envelope,
)
from .weights import PowerOf, Product, Weight

__all__ = [
    "LpEmbeddingProblem",
    "lp_into_cesaro",
    "lp_into_copson",
    "cesaro_into_lp",
    "copson_into_lp",
    "associate_norm",
]

_DIRECTIONS = ("into_cesaro", "into_copson", "from_cesaro", "from_copson")


def _canonical_direction(token: str) -> str:
    squashed = str(token).replace("-", "").replace("_", "").replace(" ", "").lower()
    for name in _DIRECTIONS:
        if squashed == name.replace("_", ""):
            return name
    raise ValueError(f"unknown direction {token!r}")


@dataclass(frozen=True)
class LpEmbeddingProblem:
    """One Lebesgue-vs-Cesaro/Copson embedding.

    ``p1``/``v1`` describe the Lebesgue side, ``p2``/``v2`` the inner
    layer of the Cesaro or Copson side and ``q``/``u`` its outer layer.
    """

    direction: str
    p1: Exponent
    p2: Exponent
    q: Exponent
    v1: Weight
    v2: Weight
    u: Weight

    def __post_init__(self):
        object.__setattr__(self, "direction", _canonical_direction(self.direction))
        object.__setattr__(self, "p1", Exponent(self.p1))
        object.__setattr__(self, "p2", Exponent(self.p2))
        object.__setattr__(self, "q", Exponent(self.q))


def _require_direction(prob: LpEmbeddingProblem, direction: str) -> None:
    if prob.direction != direction:
        raise PreconditionFailedError(
            f"this constant is defined for direction {direction}, "
            f"got {prob.direction}",
            gate=f"direction == {direction}",
        )


def _ratio_weight(num: Weight, den: Weight) -> Weight:
    return Product((num, PowerOf(den, -1.0)))


def _into_constant(prob: LpEmbeddingProblem, *, copson: bool) -> ConstantEstimate:
    """L_{p1}(v1) -> Ces/Cop_{p2,q}(u,v2) for p2 <= p1.

    The inner exponent is the Hoelder complement of p1 over p2
    (1/e = 1/p2 - 1/p1).  For p1 <= q the constant is
    sup_t ||v1^{-1} v2||_{e,head(t)} ||u||_{q,outer(t)}; for q < p1 it is
    the r-rooted Stieltjes integral of the e-norm^r against
    d(+-||u||_{q,outer(t)}^r) with 1/r = 1/q - 1/p1.  Heads and tails
    swap between the Cesaro and Copson versions.
    """
    p1, p2, q = prob.p1, prob.p2, prob.q
    if not p2 <= p1:
        raise PreconditionFailedError(
            "the Lebesgue-to-Cesaro/Copson embedding needs p2 <= p1",
            gate="p2 <= p1",
        )
    ratio = _ratio_weight(prob.v2, prob.v1)
    inner = NormFunctional(ratio, diff_exponent(p1, p2), tail=copson)
    ufn = NormFunctional(prob.u, q, tail=not copson)

    if p1 <= q:
        if prob.u.is_zero or ratio.is_zero:
            return ConstantEstimate(0.0, case="sup-product")
        val = sup_over_halfline(product_expr((inner, 1.0), (ufn, 1.0)))
        return ConstantEstimate(
            val,
            case="sup-product",
            terms=(("sup", val),),
            error_bound=abs(val) * SUP_REL if math.isfinite(val) else 0.0,
        )

    r = float(diff_exponent(p1, q))
    if prob.u.is_zero or ratio.is_zero:
        return ConstantEstimate(0.0, case="differenced")
    env = norm_envelope(
        prob.u,
        q,
        tail=not copson,
        rho=r,
        label="outer norm^r",
    )
    expr = product_expr((inner, r))
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
        case="differenced",
        terms=(("stieltjes", raw),),
        error_bound=root_err(raw, err, r),
    )


def _from_constant(prob: LpEmbeddingProblem, *, copson: bool) -> ConstantEstimate:
    """Ces/Cop_{p2,q}(u,v2) -> L_{p1}(v1) for p1 <= p2.

    The inner exponent e satisfies 1/e = 1/p1 - 1/p2.  For q <= p1 the
    constant is sup_t of the e-norm of v1 v2^{-1} over ||u||_{q,outer(t)};
    for p1 < q it is the r-rooted Stieltjes integral against
    d(+-||u||_{q,outer(t)}^{-r}) with 1/r = 1/p1 - 1/q, plus the
    boundary ratio of the full-line norms.
    """
    p1, p2, q = prob.p1, prob.p2, prob.q
    if not p1 <= p2:
        raise PreconditionFailedError(
            "the Cesaro/Copson-to-Lebesgue embedding needs p1 <= p2",
            gate="p1 <= p2",
        )
    ratio = _ratio_weight(prob.v1, prob.v2)
    inner = NormFunctional(ratio, diff_exponent(p2, p1), tail=not copson)
    ufn = check_running_norms_finite(prob.u, q, tail=not copson)

    if q <= p1:
        if ratio.is_zero:
            return ConstantEstimate(0.0, case="ratio-sup")
        val = sup_over_halfline(product_expr((inner, 1.0), (ufn, -1.0)))
        return ConstantEstimate(
            val,
            case="ratio-sup",
            terms=(("sup", val),),
            error_bound=abs(val) * SUP_REL if math.isfinite(val) else 0.0,
        )

    r = float(diff_exponent(q, p1))
    if ratio.is_zero:
        return ConstantEstimate(0.0, case="differenced+boundary")
    env = norm_envelope(
        prob.u,
        q,
        tail=not copson,
        rho=-r,
        label="outer norm^-r",
    )
    expr = product_expr((inner, r))
    raw, err = stieltjes(
        expr,
        env,
        0.0,
        math.inf,
        f_order_zero=expr.order("zero"),
        f_order_inf=expr.order("inf"),
    )
    main = xpow(raw, 1.0 / r)
    boundary = xdiv(inner.total(), ufn.total())
    val = xadd(main, boundary)
    return ConstantEstimate(
        val,
        case="differenced+boundary",
        terms=(("stieltjes", main), ("boundary", boundary)),
        error_bound=root_err(raw, err, r),
    )


def lp_into_cesaro(prob: LpEmbeddingProblem) -> ConstantEstimate:
    """||Id: L_{p1}(v1) -> Ces_{p2,q}(u,v2)|| up to equivalence.

    Inner norms run over heads (0,t), the outer norm of u over tails.
    """
    _require_direction(prob, "into_cesaro")
    return _into_constant(prob, copson=False)


def lp_into_copson(prob: LpEmbeddingProblem) -> ConstantEstimate:
    """||Id: L_{p1}(v1) -> Cop_{p2,q}(u,v2)||; heads and tails swap."""
    _require_direction(prob, "into_copson")
    return _into_constant(prob, copson=True)


def cesaro_into_lp(prob: LpEmbeddingProblem) -> ConstantEstimate:
    """||Id: Ces_{p2,q}(u,v2) -> L_{p1}(v1)|| up to equivalence.

    Inner ratio norms run over tails (t,oo) against reciprocal tail
    norms of u.
    """
    _require_direction(prob, "from_cesaro")
    return _from_constant(prob, copson=False)


def copson_into_lp(prob: LpEmbeddingProblem) -> ConstantEstimate:
    """||Id: Cop_{p2,q}(u,v2) -> L_{p1}(v1)||; head version."""
    _require_direction(prob, "from_copson")
    return _from_constant(prob, copson=True)


def associate_norm(space, f: Weight) -> float:
    """Associate-space norm ||f||_{X'} for X Cesaro or Copson, 1 <= p < inf.

    For the Cesaro space with 0 < q <= 1 this is
    sup_t ||f||_{p',v^{-1},(t,oo)} / ||u||_{q,(t,oo)}; for q > 1 a
    q'-rooted Stieltjes integral against d(||u||_{q,(t,oo)}^{-q'}) plus
    the boundary ratio of full-line norms.  The Copson space mirrors
    with head intervals.  Values are extended reals.
    """
    if isinstance(space, CesaroSpace):
        tails = True
    elif isinstance(space, CopsonSpace):
        tails = False
    else:
        raise PreconditionFailedError(
            "associate norms are defined for Cesaro and Copson spaces",
            gate="space kind",
        )
    p, q = space.p, space.q
    if p < 1 or p.is_inf:
        raise PreconditionFailedError(
            "the associate-norm formula needs 1 <= p < inf", gate="1 <= p < inf"
        )
    verdict = space._cache.get("validity")
    if verdict is None:
        verdict = check_space_validity(space)
        space._cache["validity"] = verdict
    if not verdict:
        raise InvalidSpaceError(verdict.reason or "invalid space", verdict.witness)

    if f.is_zero:
        return 0.0
    inner = NormFunctional(
        _ratio_weight(f, space.v), dual_exponent(p), tail=tails
    )
    ufn = NormFunctional(space.u, q, tail=tails)

    if q <= 1:
        return sup_over_halfline(product_expr((inner, 1.0), (ufn, -1.0)))

    r = float(dual_exponent(q))
    env = norm_envelope(
        space.u,
        q,
        tail=tails,
        rho=-r,
        label="outer norm^-q'",
    )
    expr = product_expr((inner, r))
    raw, _ = stieltjes(
        expr,
        env,
        0.0,
        math.inf,
        f_order_zero=expr.order("zero"),
        f_order_inf=expr.order("inf"),
    )
    main = xpow(raw, 1.0 / r)
    boundary = xdiv(inner.total(), ufn.total())
    return xadd(main, boundary)
