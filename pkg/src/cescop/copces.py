"""Embedding constants from weighted Copson into weighted Cesaro spaces.

The source space takes an inner p1-norm of f against v1 over (t, oo) and
an outer q1-norm against u1; the target takes an inner p2-norm against
v2 over (0, t) and an outer q2-norm against u2.  ``embedding_constant``
evaluates the best constant c in

    || f ||_{Ces}  <=  c  || f ||_{Cop}        for all f >= 0,

up to a two-sided factor independent of the weights, across all exponent
placements with p2 <= q2.  The regime is chosen by :func:`classify`:

* ``trivial``        p1 < p2, no finite constant exists;
* ``both-diagonal``  p1 = q1 and p2 = q2, a single weighted norm of the
  ratio of running norms;
* ``left-diagonal``  p1 = q1 only, reduces to a weighted-Lebesgue source;
* ``right-diagonal`` p2 = q2 only, reduces to a weighted-Lebesgue target;
* ``sup-norm``       p1 = p2 strictly between q1 and q2, a running
  sup-product;
* ``sup-outer``      p2 < p1 with q1 <= p2 < q2, an outer supremum of a
  kernel sup-profile against a tail factor;
* ``full-iterated``  p2 < p1 with p2 < min(q1, q2), the doubly iterated
  kernel form with a boundary term;
* ``sup-inner``      p1 = p2 < min(q1, q2), the iterated form driven by
  the running supremum of the weight ratio;
* ``open``           p2 > q2, outside the method's reach.

All kernel comparisons run through K(a, b) = a/(a+b) applied to the
running ratio norm V(x) = ||v2/v1||_{r,(0,x)} with 1/r = 1/p2 - 1/p1.
Quantities that a formula cannot bound on any finite window are reported
as ``inf``; gates that a formula requires (admissibility of V, a
nondegenerate quasiconcave profile, continuity of the ratio) raise
PreconditionFailedError instead of guessing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from ._assembly import SUP_REL, product_expr, sup_over_halfline
from .errors import InvalidSpaceError, PreconditionFailedError
from .estimates import ConstantEstimate
from .exponents import Exponent, ExponentLike, diff_exponent
from .extreal import arr_pow, xadd, xdiv, xmul, xpow
from .iterated import (
    AdmissibleFunction,
    _SLOPE_MARGIN,
    _amul,
    _edge_charge,
    _far_tail_charge,
    _gate_quasiconcave,
    _kernel_cols,
)
from .lpembed import LpEmbeddingProblem, copson_into_lp, lp_into_cesaro
from .oracle import Grid, StepFunction, maximize_ratio, space_norm
from .spaces import (
    CesaroSpace,
    CopsonSpace,
    LebesgueSpace,
    NormFunctional,
    _cell_sups,
    check_space_validity,
    head_norm_weight,
    segment_masses,
    tail_norm_weight,
)
from .weights import Func, Power, PowerOf, Product, Weight

__all__ = [
    "CaseTag",
    "CopCesProblem",
    "GluingResult",
    "classify",
    "duality_reduction_check",
    "embedding_constant",
    "gluing_check",
    "reflected_problem",
    "triviality_witness",
]

DEFAULT_GRID = 1536

# main window for the kernel tables; the low strip below it resolves the
# singular head of the Stieltjes measures
_T_LO = 1e-10
_T_HI = 1e10
_STRIP_LO = 1e-30
_STRIP_CELLS = 160
_BLOCK = 256

# powers of edge values beyond this magnitude are folded into the
# boundary closures instead of being differenced in floats
_POW_CAP = 1e250

# a tail of log-uniform cell contributions that refuses to decay by at
# least this factor per block is read as a divergent integral
_GROWTH_FLAT = 0.98

# an endpoint value must be within this fraction of the grid maximum
# before an endpoint slope is allowed to declare the supremum infinite
_EDGE_WEIGHT = 0.3

_FAMILIES = (
    "trivial",
    "open",
    "uncovered",
    "both-diagonal",
    "left-diagonal",
    "right-diagonal",
    "sup-norm",
    "sup-outer",
    "full-iterated",
    "sup-inner",
)

_SUBCASES = {
    "sup-outer": ("i", "ii"),
    "full-iterated": ("i", "ii", "iii", "iv"),
    "sup-inner": ("i", "ii"),
}


@dataclass(frozen=True)
class CaseTag:
    """Which evaluation regime a problem falls into.

    ``family`` names the formula shape; families with several branches
    carry a roman-numeral ``subcase`` fixed by the exponents.
    """

    family: str
    subcase: str = ""

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown case family {self.family!r}")
        allowed = _SUBCASES.get(self.family, ())
        if self.subcase and self.subcase not in allowed:
            raise ValueError(
                f"family {self.family!r} has no subcase {self.subcase!r}"
            )

    def __str__(self) -> str:
        if self.subcase:
            return f"{self.family}({self.subcase})"
        return self.family

    @staticmethod
    def parse(text: str) -> "CaseTag":
        s = text.strip().lower()
        if "(" in s:
            fam, _, rest = s.partition("(")
            return CaseTag(fam.strip(), rest.rstrip(")").strip())
        return CaseTag(s)


@dataclass(frozen=True)
class CopCesProblem:
    """Data of one Copson-into-Cesaro embedding.

    The source is the Copson space with inner exponent p1 / weight v1 and
    outer exponent q1 / weight u1; the target is the Cesaro space with
    p2, v2, q2, u2.  Construction validates that every head norm
    ||u1||_{q1,(0,t)} and every tail norm ||u2||_{q2,(t,oo)} is finite
    and positive (the tail check is skipped for identically zero u2,
    which forces a zero constant), and that v1 does not vanish
    identically.  The ratio weight v2/v1 and its running norm
    V(x) = ||v2/v1||_{r,(0,x)}, 1/r = 1/p2 - 1/p1, are attached.
    """

    p1: Exponent
    q1: Exponent
    p2: Exponent
    q2: Exponent
    u1: Weight
    v1: Weight
    u2: Weight
    v2: Weight
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for name in ("p1", "q1", "p2", "q2"):
            e = Exponent(getattr(self, name))
            if e.is_inf:
                raise PreconditionFailedError(
                    f"{name} must be finite", gate=f"0 < {name} < inf"
                )
            object.__setattr__(self, name, e)
        if self.v1.is_zero:
            raise InvalidSpaceError(
                "the source inner weight vanishes identically"
            )
        verdict = check_space_validity(self.source)
        if not verdict:
            raise InvalidSpaceError(
                f"source outer weight: {verdict.reason}",
                witness=verdict.witness,
            )
        if not self.u2.is_zero:
            verdict = check_space_validity(self.target)
            if not verdict:
                raise InvalidSpaceError(
                    f"target outer weight: {verdict.reason}",
                    witness=verdict.witness,
                )
        self._cache["ratio"] = Product((PowerOf(self.v1, -1.0), self.v2))

    @property
    def source(self) -> CopsonSpace:
        if "source" not in self._cache:
            self._cache["source"] = CopsonSpace(self.p1, self.q1, self.u1, self.v1)
        return self._cache["source"]

    @property
    def target(self) -> CesaroSpace:
        if "target" not in self._cache:
            self._cache["target"] = CesaroSpace(self.p2, self.q2, self.u2, self.v2)
        return self._cache["target"]

    @property
    def ratio_weight(self) -> Weight:
        """v2 / v1, the weight whose running norm drives the kernels."""
        return self._cache["ratio"]

    @property
    def ratio_norm(self) -> NormFunctional:
        """x -> ||v2/v1||_{r,(0,x)} with 1/r = 1/p2 - 1/p1."""
        if "ratio_norm" not in self._cache:
            self._cache["ratio_norm"] = NormFunctional(
                self.ratio_weight, diff_exponent(self.p1, self.p2), tail=False
            )
        return self._cache["ratio_norm"]


def classify(prob: CopCesProblem) -> CaseTag:
    """Assign the evaluation regime from the four exponents alone.

    The branches are checked in a fixed order, so a problem matching
    several descriptions lands in the first one: trivial, open, the
    diagonal collapses, then sup-norm, sup-outer, full-iterated,
    sup-inner.
    """
    p1, q1, p2, q2 = prob.p1, prob.q1, prob.p2, prob.q2
    if p1 < p2:
        return CaseTag("trivial")
    if p2 > q2:
        return CaseTag("open")
    if p1 == q1 and p2 == q2:
        return CaseTag("both-diagonal")
    if p1 == q1:
        return CaseTag("left-diagonal")
    if p2 == q2:
        return CaseTag("right-diagonal")
    if p1 == p2 and q1 < p1:
        return CaseTag("sup-norm")
    if p2 < p1 and q1 <= p2:
        return CaseTag("sup-outer", "i" if p1 <= q2 else "ii")
    if p2 < p1 and p2 < q1 and p2 < q2:
        return CaseTag("full-iterated", _iterated_subcase(p1, q1, q2))
    if p1 == p2 and p2 < q2:
        return CaseTag("sup-inner", "i" if q1 <= q2 else "ii")
    return CaseTag("uncovered")


def _iterated_subcase(p1: Exponent, q1: Exponent, q2: Exponent) -> str:
    if p1 <= q2 and q1 <= q2:
        return "i"
    if p1 <= q2:
        return "ii"
    if q1 <= q2:
        return "iii"
    return "iv"


def _resolve_case(prob: CopCesProblem, case) -> CaseTag:
    if case is None:
        return classify(prob)
    tag = case if isinstance(case, CaseTag) else CaseTag.parse(str(case))
    if tag.subcase:
        return tag
    if tag.family == "sup-outer":
        return CaseTag(tag.family, "i" if prob.p1 <= prob.q2 else "ii")
    if tag.family == "full-iterated":
        return CaseTag(tag.family, _iterated_subcase(prob.p1, prob.q1, prob.q2))
    if tag.family == "sup-inner":
        return CaseTag(tag.family, "i" if prob.q1 <= prob.q2 else "ii")
    return tag


# ---------------------------------------------------------------------------
# shared numeric helpers


def _harm_vec(a: float, b: np.ndarray) -> np.ndarray:
    """Elementwise a*b/(a+b) with the extended-real conventions.

    This is the symmetric combination V(t) * K(t, x): it tends to the
    smaller argument when the two are far apart.
    """
    b = np.asarray(b, dtype=float)
    if a == 0.0:
        return np.zeros_like(b)
    if math.isinf(a):
        return b.copy()
    with np.errstate(invalid="ignore", over="ignore"):
        out = np.where(b > 0.0, a * (b / (a + b)), 0.0)
    out = np.where(np.isinf(b), a, out)
    return out


def _median_slope(ts: np.ndarray, vals: np.ndarray) -> Optional[float]:
    """Median log-log slope of (ts, vals), ignoring nonpositive entries."""
    mask = np.isfinite(vals) & (vals > 0.0)
    if int(mask.sum()) < 3:
        return None
    lt = np.log(ts[mask])
    lv = np.log(vals[mask])
    dt = np.diff(lt)
    keep = dt > 0.0
    if int(keep.sum()) < 2:
        return None
    return float(np.median(np.diff(lv)[keep] / dt[keep]))


def _edge_samples(n: int, count: int, head: bool) -> np.ndarray:
    span = min(n, max(2 * count, n // 8))
    idx = np.unique(np.linspace(0, span - 1, count).astype(int))
    if head:
        return idx
    return n - 1 - idx[::-1]


def _sup_with_trend(ts: np.ndarray, vals: np.ndarray) -> float:
    """Largest grid value, promoted to inf when an endpoint keeps growing.

    A supremum over (0, oo) evaluated on a finite window can silently
    truncate a divergence at either end.  The median log-log slope over
    the outermost samples detects sustained growth; it only fires when
    the endpoint value is comparable to the grid maximum, so interior
    peaks are never overridden by a decaying edge.
    """
    vals = np.asarray(vals, dtype=float)
    if vals.size == 0:
        return 0.0
    if np.any(np.isinf(vals)):
        return math.inf
    best = float(np.nanmax(vals))
    if not (best > 0.0):
        return 0.0
    idx = _edge_samples(vals.size, 12, head=True)
    slope = _median_slope(ts[idx], vals[idx])
    if (
        slope is not None
        and slope < -_SLOPE_MARGIN
        and vals[0] >= _EDGE_WEIGHT * best
    ):
        return math.inf
    idx = _edge_samples(vals.size, 12, head=False)
    slope = _median_slope(ts[idx], vals[idx])
    if (
        slope is not None
        and slope > _SLOPE_MARGIN
        and vals[-1] >= _EDGE_WEIGHT * best
    ):
        return math.inf
    return best


def _tail_blocks_diverging(contrib: np.ndarray) -> bool:
    """Whether log-uniform cell contributions refuse to decay at the top.

    Splits the contribution array into 16 blocks and requires three
    consecutive non-decaying block sums at the upper end, still carrying
    a visible fraction of the total.  Geometric decay, however slow in
    absolute terms, passes.
    """
    n = contrib.size
    if n < 32:
        return False
    finite = contrib[np.isfinite(contrib)]
    total = float(finite.sum()) if finite.size else 0.0
    if not (total > 0.0):
        return False
    width = max(1, n // 16)
    sums = [
        float(np.sum(contrib[i : i + width])) for i in range(0, n, width)
    ][-4:]
    if len(sums) < 4 or not all(math.isfinite(s) and s > 0.0 for s in sums):
        return False
    if sums[-1] < 1e-9 * total:
        return False
    return all(b >= _GROWTH_FLAT * a for a, b in zip(sums, sums[1:]))


def _decreasing_power_masses(
    edge_vals: np.ndarray, rho: float, limit_zero: float, limit_inf: float
):
    """Cell masses of the Stieltjes measure d(-(fn)**rho) from edge values.

    ``edge_vals`` holds fn at the cell edges with fn**rho nonincreasing.
    Leading edges whose powered value overflows the float range are
    folded into the head mass.  Returns (first usable cell index,
    masses, head mass on (0, first edge], far mass beyond the last
    edge).
    """
    with np.errstate(over="ignore", divide="ignore"):
        pw = arr_pow(edge_vals, rho)
    usable = np.isfinite(pw) & (np.abs(pw) < _POW_CAP)
    if not bool(usable.any()):
        return edge_vals.size - 1, np.zeros(0), xpow(limit_zero, rho), 0.0
    i0 = int(np.argmax(usable))
    masses = np.clip(pw[i0:-1] - pw[i0 + 1 :], 0.0, None)
    head = xpow(limit_zero, rho) - pw[i0]
    if not head >= 0.0:
        head = 0.0
    far = pw[-1] - xpow(limit_inf, rho)
    if not far >= 0.0:
        far = 0.0
    return i0, masses, head, far


# ---------------------------------------------------------------------------
# kernel tables


@dataclass
class _Tables:
    edges: np.ndarray  # strip + main edges
    mids: np.ndarray
    n_strip: int  # number of strip cells before the main window
    Ve: np.ndarray  # running ratio norm at edges
    Vm: np.ndarray  # and at cell midpoints
    W1e: np.ndarray  # ||u1||_{q1,(0,t)} at edges
    W1m: np.ndarray
    W2e: np.ndarray  # ||u2||_{q2,(t,oo)} at edges
    W2m: np.ndarray
    w1_total: float
    w2_at_zero: float

    @property
    def xs(self) -> np.ndarray:
        """Outer evaluation points: midpoints of the main window."""
        return self.mids[self.n_strip :]

    @property
    def Vx(self) -> np.ndarray:
        return self.Vm[self.n_strip :]


def _build_tables(
    vbatch, w1fn: NormFunctional, w2fn: NormFunctional, breaks, n_grid: int
) -> _Tables:
    main = np.geomspace(_T_LO, _T_HI, max(n_grid, 64) + 1)
    extra = np.asarray(
        [b for b in breaks if _T_LO < b < _T_HI], dtype=float
    )
    if extra.size:
        main = np.unique(np.concatenate([main, extra]))
    strip = np.geomspace(_STRIP_LO, _T_LO, _STRIP_CELLS + 1)[:-1]
    edges = np.concatenate([strip, main])
    mids = np.sqrt(edges[:-1] * edges[1:])
    return _Tables(
        edges=edges,
        mids=mids,
        n_strip=strip.size,
        Ve=vbatch(edges),
        Vm=vbatch(mids),
        W1e=w1fn.batch(edges),
        W1m=w1fn.batch(mids),
        W2e=w2fn.batch(edges),
        W2m=w2fn.batch(mids),
        w1_total=w1fn.total(),
        w2_at_zero=w2fn(0.0),
    )


def _phi_sup_profile(tab: _Tables, Vx: np.ndarray) -> np.ndarray:
    """phi(x) = sup_t V(t) K(t, x) / ||u1||_{q1,(0,t)} on the x array.

    The candidate at t -> oo is V(x) / ||u1||_{q1,(0,oo)}; the strip
    cells supply the candidates near zero.
    """
    inv = np.where(tab.W1m > 0.0, 1.0 / np.where(tab.W1m > 0.0, tab.W1m, 1.0), 0.0)
    weighted = _amul(tab.Vm, inv)
    out = np.empty(Vx.size)
    for lo in range(0, Vx.size, _BLOCK):
        hi = min(lo + _BLOCK, Vx.size)
        cols = _kernel_cols(np.where(np.isfinite(tab.Vm), tab.Vm, np.inf), Vx[lo:hi])
        # K carries V(t)/(V(t)+V(x)); the remaining factor is 1/W1
        out[lo:hi] = _amul(cols, np.where(weighted > 0.0, inv, 0.0)[:, None]).max(axis=0)
    out = _amul(out, np.minimum(Vx, np.inf))
    tail_cand = _amul(Vx, np.full(Vx.size, xdiv(1.0, tab.w1_total)))
    return np.maximum(out, tail_cand)


def _phi_sup_scalar(tab: _Tables, vx: float) -> float:
    arr = _phi_sup_profile(tab, np.asarray([vx], dtype=float))
    return float(arr[0])


def _tail_sup_profile(tab: _Tables, Vx: np.ndarray) -> Optional[np.ndarray]:
    """S(x) = sup_t K(t, x) ||u2||_{q2,(t,oo)}; None when it is infinite.

    The product V * W2 growing without bound toward zero makes S
    identically infinite, since the kernel behaves like V(t)/V(x) there.
    """
    driver = _amul(tab.Vm, tab.W2m)
    idx = _edge_samples(driver.size, 10, head=True)
    slope = _median_slope(tab.mids[idx], driver[idx])
    if slope is not None and slope < -_SLOPE_MARGIN:
        return None
    out = np.empty(Vx.size)
    for lo in range(0, Vx.size, _BLOCK):
        hi = min(lo + _BLOCK, Vx.size)
        cols = _kernel_cols(tab.Vm, Vx[lo:hi])
        out[lo:hi] = _amul(cols, tab.W2m[:, None]).max(axis=0)
    return out


def _tail_stieltjes_profile(
    tab: _Tables, Vx: np.ndarray, rho: float
) -> np.ndarray:
    """T(x) = ( int K(t, x)**rho d(-W2**rho)(t) )**(1/rho) on the x array."""
    i0, masses, head_mass, far_mass = _decreasing_power_masses(
        tab.W2e, rho, tab.w2_at_zero, 0.0
    )
    Vmid = tab.Vm[i0:]
    v_edge = float(tab.Ve[i0])
    out = np.empty(Vx.size)
    for lo in range(0, Vx.size, _BLOCK):
        hi = min(lo + _BLOCK, Vx.size)
        cols = arr_pow(_kernel_cols(Vmid, Vx[lo:hi]), rho)
        sums = _amul(cols, masses[:, None]).sum(axis=0)
        for j in range(sums.size):
            vx = float(Vx[lo + j])
            scale = max(float(sums[j]), 1e-300)
            g0 = xpow(_kernel_scalar_f(v_edge, vx), rho)
            charge = _edge_charge(g0, head_mass, scale)
            # beyond the window K is between K(V(end), x) and 1
            sums[j] = xadd(float(sums[j]), xadd(charge, xmul(1.0, far_mass)))
        out[lo:hi] = arr_pow(sums, 1.0 / rho)
    return out


def _kernel_scalar_f(a: float, b: float) -> float:
    if math.isinf(a):
        return 0.5 if math.isinf(b) else 1.0
    if math.isinf(b):
        return 0.0
    s = a + b
    if s == 0.0:
        return 0.5
    return a / s if a <= b else 1.0 - b / s


def _phi_iterated_profile(
    tab: _Tables, Vx: np.ndarray, sigma: float
) -> np.ndarray:
    """phi(x) = ( int [V(t) K(t, x)]**sigma d(-W1**-sigma)(t) )**(1/sigma).

    The head of the measure is singular (W1 -> 0), so the strip cells
    carry most of the small-t mass; what remains below the strip is
    charged at the harmonic-mean bound and dropped only once it is
    numerically irrelevant.  Beyond the window the integrand saturates
    at V(x)**sigma, which multiplies the exact remaining mass.
    """
    i0, masses, _head, far_mass = _decreasing_power_masses(
        tab.W1e, -sigma, 0.0, tab.w1_total
    )
    Vmid = tab.Vm[i0:]
    v_edge = float(tab.Ve[i0])
    out = np.empty(Vx.size)
    for lo in range(0, Vx.size, _BLOCK):
        hi = min(lo + _BLOCK, Vx.size)
        harm = _amul(
            _kernel_cols(Vmid, Vx[lo:hi]), Vx[lo:hi][None, :]
        )
        sums = _amul(arr_pow(harm, sigma), masses[:, None]).sum(axis=0)
        for j in range(sums.size):
            vx = float(Vx[lo + j])
            scale = max(float(sums[j]), 1e-300)
            g0 = xpow(_harm_scalar(v_edge, vx), sigma)
            charge = _edge_charge(g0, math.inf, scale)
            far = xmul(xpow(vx, sigma), far_mass)
            sums[j] = xadd(float(sums[j]), xadd(charge, far))
        out[lo:hi] = arr_pow(sums, 1.0 / sigma)
    return out


def _harm_scalar(a: float, b: float) -> float:
    if a == 0.0 or b == 0.0:
        return 0.0
    if math.isinf(a):
        return b
    if math.isinf(b):
        return a
    return a * (b / (a + b))


def _outer_stieltjes(
    tab: _Tables, g: np.ndarray, sigma: float
) -> float:
    """int g d(-W1**-sigma) over the main window with honest closures."""
    n0 = tab.n_strip
    i0, masses_full, _head, far_mass = _decreasing_power_masses(
        tab.W1e, -sigma, 0.0, tab.w1_total
    )
    start = n0 - i0
    if start < 0 or masses_full.size < g.size:
        raise PreconditionFailedError(
            "the outer measure is not representable on the grid",
            gate="finite W1**-sigma",
        )
    masses = masses_full[start : start + g.size]
    contrib = _amul(g, masses)
    total = float(np.sum(contrib[np.isfinite(contrib)]))
    if np.any(np.isinf(contrib)):
        return math.inf
    finite = g[np.isfinite(g)]
    scale = max(total, float(finite.max()) if finite.size else 0.0)
    head = _edge_charge(float(g[0]), math.inf, scale)
    far = _far_tail_charge(contrib, float(g[-1]), far_mass, scale)
    if _tail_blocks_diverging(contrib):
        return math.inf
    return xadd(total, xadd(head, far))


# ---------------------------------------------------------------------------
# case evaluators


def _finish(value: float, tag: CaseTag, terms, notes=()) -> ConstantEstimate:
    err = 0.02 * value if math.isfinite(value) else 0.0
    return ConstantEstimate(
        value, case=str(tag), terms=tuple(terms), error_bound=err, notes=tuple(notes)
    )


def _both_diagonal(prob: CopCesProblem, tag: CaseTag) -> ConstantEstimate:
    """Exact collapse: one weighted norm of the ratio of running norms."""
    ratio = Product(
        (
            prob.v2,
            tail_norm_weight(prob.u2, prob.p2),
            PowerOf(Product((prob.v1, head_norm_weight(prob.u1, prob.p1))), -1.0),
        )
    )
    r = diff_exponent(prob.p1, prob.p2)
    val = NormFunctional(ratio, r, tail=False).total()
    err = abs(val) * SUP_REL if math.isfinite(val) else 0.0
    return ConstantEstimate(
        val, case=str(tag), terms=(("total-norm", val),), error_bound=err
    )


def _retag(inner: ConstantEstimate, tag: CaseTag, extra_notes=()) -> ConstantEstimate:
    notes = inner.notes + (f"reduced to a weighted-Lebesgue embedding ({inner.case})",)
    return ConstantEstimate(
        inner.value,
        case=str(tag),
        terms=inner.terms,
        error_bound=inner.error_bound,
        notes=notes + tuple(extra_notes),
    )


def _left_diagonal(prob: CopCesProblem, tag: CaseTag) -> ConstantEstimate:
    inner = lp_into_cesaro(
        LpEmbeddingProblem(
            "into_cesaro",
            p1=prob.p1,
            p2=prob.p2,
            q=prob.q2,
            v1=Product((prob.v1, head_norm_weight(prob.u1, prob.p1))),
            v2=prob.v2,
            u=prob.u2,
        )
    )
    return _retag(inner, tag)


def _right_diagonal(prob: CopCesProblem, tag: CaseTag) -> ConstantEstimate:
    inner = copson_into_lp(
        LpEmbeddingProblem(
            "from_copson",
            p1=prob.p2,
            p2=prob.p1,
            q=prob.q1,
            v1=Product((prob.v2, tail_norm_weight(prob.u2, prob.p2))),
            v2=prob.v1,
            u=prob.u1,
        )
    )
    extra = ()
    if inner.case == "ratio-sup":
        extra = (
            "inner norms taken over head intervals weighted by the target ratio",
        )
    return _retag(inner, tag, extra)


def _sup_norm(prob: CopCesProblem, tag: CaseTag) -> ConstantEstimate:
    """sup_t [ esssup_{(0,t)} v2/v1 / ||u1||_{q1,(0,.)} ] ||u2||_{q2,(t,oo)}."""
    inner = NormFunctional(
        Product(
            (prob.ratio_weight, PowerOf(head_norm_weight(prob.u1, prob.q1), -1.0))
        ),
        Exponent("inf"),
        tail=False,
    )
    w2fn = NormFunctional(prob.u2, prob.q2, tail=True)
    val = sup_over_halfline(product_expr((inner, 1.0), (w2fn, 1.0)))
    err = abs(val) * SUP_REL if math.isfinite(val) else 0.0
    return ConstantEstimate(
        val, case=str(tag), terms=(("sup", val),), error_bound=err
    )


def _as_power(w: Weight) -> Optional[tuple]:
    """(coefficient, exponent) when w is a pure power, else None."""
    from .weights import Scale

    if isinstance(w, Power):
        return 1.0, w.alpha
    if isinstance(w, Scale):
        inner = _as_power(w.base)
        if inner is None:
            return None
        return w.c * inner[0], inner[1]
    if isinstance(w, PowerOf):
        inner = _as_power(w.base)
        if inner is None:
            return None
        return inner[0] ** w.r, inner[1] * w.r
    if isinstance(w, Product):
        coef, alpha = 1.0, 0.0
        for part in w.parts:
            inner = _as_power(part)
            if inner is None:
                return None
            coef *= inner[0]
            alpha += inner[1]
        return coef, alpha
    return None


def _iterated_gate_shortcut(
    prob: CopCesProblem, sigma: float
) -> bool:
    """Divergence conditions that certify the iterated profile gate.

    For pure power weights the quasiconcavity of the iterated profile
    follows once two integrals diverge: the head integral of
    W1(t)**(-q1 r) u1(t)**q1 with r = q1/(q1 - p2) near zero, and its
    tail integral weighted by V**(q1 p2 / (q1 - p2)).  Both reduce to
    one power-exponent comparison each.
    """
    pu = _as_power(prob.u1)
    pv = _as_power(prob.ratio_weight)
    if pu is None or pv is None:
        return False
    q1 = float(prob.q1)
    p2 = float(prob.p2)
    if not q1 > p2:
        return False
    a = pu[1]
    if a * q1 + 1.0 <= 0.0:
        return False
    rf = float(diff_exponent(prob.p1, prob.p2))
    beta = pv[1] + 1.0 / rf
    if beta <= 0.0:
        return False
    ratio = q1 / (q1 - p2)
    head_exp = -(a * q1 + 1.0) * ratio + a * q1
    tail_exp = beta * q1 * p2 / (q1 - p2) + head_exp
    return head_exp <= -1.0 + 1e-12 and tail_exp >= -1.0 - 1e-12


def _kernel_engine(
    prob: CopCesProblem, tag: CaseTag, n_grid: int
) -> ConstantEstimate:
    """Shared evaluator for sup-outer, full-iterated and sup-inner."""
    p1, q1, p2, q2 = prob.p1, prob.q1, prob.p2, prob.q2
    notes = []

    if tag.family == "sup-inner":
        _require_continuous_ratio(prob.ratio_weight)
        vsup = NormFunctional(prob.ratio_weight, Exponent("inf"), tail=False)
        vbatch = vsup.batch
        breaks = (
            prob.ratio_weight.breakpoints
            + prob.u1.breakpoints
            + prob.u2.breakpoints
        )
    else:
        if not p2 < p1:
            raise PreconditionFailedError(
                "the kernel formulas need a strictly smaller target inner exponent",
                gate="p2 < p1",
            )
        rf = float(diff_exponent(p1, p2))
        adm = AdmissibleFunction(PowerOf(prob.ratio_weight, rf), power=1.0 / rf)
        vbatch = adm.batch
        breaks = adm.breakpoints + prob.u1.breakpoints + prob.u2.breakpoints

    w1fn = NormFunctional(prob.u1, q1, tail=False)
    w2fn = NormFunctional(prob.u2, q2, tail=True)
    tab = _build_tables(vbatch, w1fn, w2fn, breaks, n_grid)
    xs, Vx = tab.xs, tab.Vx

    if tag.family == "sup-outer":
        comparator = AdmissibleFunction(
            PowerOf(prob.ratio_weight, rf), power=1.0 / (rf * rf)
        )
        _gate_quasiconcave(
            lambda x: _phi_sup_scalar(tab, adm.value(x)), comparator
        )
        phi = _phi_sup_profile(tab, Vx)
        if tag.subcase == "i":
            inner = _tail_sup_profile(tab, Vx)
            if inner is None:
                return _finish(
                    math.inf,
                    tag,
                    (("sup", math.inf),),
                    ("the inner supremum diverges toward zero",),
                )
        else:
            rho = float(diff_exponent(p1, q2))
            inner = _tail_stieltjes_profile(tab, Vx, rho)
        val = _sup_with_trend(xs, _amul(phi, inner))
        return _finish(val, tag, (("sup", val),))

    if tag.family == "full-iterated":
        sigma_e = diff_exponent(q1, p2)
    else:
        sigma_e = diff_exponent(q1, p2)
    if sigma_e.is_inf:
        if tag.subcase in ("ii", "iv"):
            raise PreconditionFailedError(
                "the outer integral needs q1 strictly above the target inner exponent",
                gate="p2 < q1",
            )
        phi = _phi_sup_profile(tab, Vx)
        notes.append("boundary exponents: the iterated profile degenerates to its supremal form")
    else:
        sigma = float(sigma_e)
        if tag.family == "full-iterated":
            if _iterated_gate_shortcut(prob, sigma):
                notes.append("profile gate certified symbolically for power weights")
            else:
                comparator = AdmissibleFunction(
                    PowerOf(prob.ratio_weight, rf), power=1.0 / (rf * rf)
                )
                _gate_quasiconcave(
                    lambda x: float(
                        _phi_iterated_profile(
                            tab, np.asarray([adm.value(x)]), sigma
                        )[0]
                    ),
                    comparator,
                )
        phi = _phi_iterated_profile(tab, Vx, sigma)

    use_integral_tail = tag.family == "full-iterated" and tag.subcase in (
        "iii",
        "iv",
    )
    if use_integral_tail:
        rho = float(diff_exponent(p1, q2))
        inner = _tail_stieltjes_profile(tab, Vx, rho)
    else:
        inner = _tail_sup_profile(tab, Vx)
        if inner is None:
            return _finish(
                math.inf,
                tag,
                (("main", math.inf),),
                ("the inner supremum diverges toward zero",),
            )

    coeff = xdiv(1.0, tab.w1_total)
    if use_integral_tail:
        boundary = xmul(coeff, _v_tail_stieltjes(tab, rho))
    else:
        boundary = xmul(coeff, _sup_with_trend(tab.mids, _amul(tab.Vm, tab.W2m))) if coeff > 0.0 else 0.0

    if tag.subcase in ("i", "iii"):
        main = _sup_with_trend(xs, _amul(phi, inner))
    else:
        lam = diff_exponent(q1, q2)
        tau = diff_exponent(q2, p2)
        if lam.is_inf or tau.is_inf or sigma_e.is_inf:
            raise PreconditionFailedError(
                "the outer integral exponents are not all finite here",
                gate="q2 < q1 and p2 < q2 and p2 < q1",
            )
        big = float(lam.value * sigma_e.value / tau.value)
        lamf = float(lam)
        g = _amul(
            _amul(arr_pow(phi, big), arr_pow(Vx, float(sigma_e))),
            arr_pow(inner, lamf),
        )
        raw = _outer_stieltjes(tab, g, float(sigma_e))
        main = xpow(raw, 1.0 / lamf)

    val = xadd(main, boundary)
    return _finish(
        val, tag, (("main", main), ("boundary", boundary)), notes
    )


def _v_tail_stieltjes(tab: _Tables, rho: float) -> float:
    """( int V**rho d(-W2**rho) )**(1/rho) over the full axis."""
    i0, masses, head_mass, far_mass = _decreasing_power_masses(
        tab.W2e, rho, tab.w2_at_zero, 0.0
    )
    g = arr_pow(tab.Vm[i0:], rho)
    contrib = _amul(g, masses)
    if np.any(np.isinf(contrib)):
        return math.inf
    total = float(np.sum(contrib))
    finite = g[np.isfinite(g)]
    scale = max(total, float(finite.max()) if finite.size else 0.0)
    head = _edge_charge(xpow(float(tab.Ve[i0]), rho), head_mass, scale)
    far = _far_tail_charge(contrib, float(g[-1]), far_mass, scale)
    if _tail_blocks_diverging(contrib):
        return math.inf
    return xpow(xadd(total, xadd(head, far)), 1.0 / rho)


def _require_continuous_ratio(v: Weight) -> None:
    for b in v.breakpoints:
        if not b > 0.0 or math.isinf(b):
            continue
        lo = v.value_side(b, "left")
        hi = v.value_side(b, "right")
        tol = 1e-9 * max(abs(lo), abs(hi), 1.0)
        if not (
            math.isfinite(lo) and math.isfinite(hi) and abs(lo - hi) <= tol
        ):
            raise PreconditionFailedError(
                "the weight ratio must be continuous for the supremal kernel form",
                gate="v continuous",
            )


# ---------------------------------------------------------------------------
# the dispatcher


def embedding_constant(
    prob: CopCesProblem,
    *,
    case: Union[CaseTag, str, None] = None,
    n_grid: int = DEFAULT_GRID,
) -> ConstantEstimate:
    """Two-sided embedding constant for the problem's regime.

    ``case`` overrides the classification, which is mainly useful on
    regime boundaries where two formulas should agree up to their
    equivalence constants.  A problem whose target norm vanishes
    identically (u2 = 0 or v2 = 0) yields 0 in every regime; p1 < p2
    yields inf, since narrowing spikes make the ratio arbitrarily
    large.  The open regime p2 > q2 raises PreconditionFailedError.
    Divergent formula values are reported as inf rather than silently
    truncated at the evaluation window.
    """
    tag = _resolve_case(prob, case)
    if prob.u2.is_zero or prob.v2.is_zero:
        return ConstantEstimate(
            0.0,
            case=str(tag),
            notes=("the target norm vanishes identically",),
        )
    if tag.family == "trivial":
        return ConstantEstimate(
            math.inf,
            case=str(tag),
            notes=(
                "no finite constant: the source inner exponent is below the target one",
            ),
        )
    if tag.family == "open":
        raise PreconditionFailedError(
            "no two-sided formula is available when the target outer "
            "exponent falls below its inner one",
            gate="p2 <= q2",
        )
    if tag.family == "uncovered":
        raise PreconditionFailedError(
            "the exponent placement matches no evaluation regime",
            gate="covered exponents",
        )
    if tag.family == "both-diagonal":
        return _both_diagonal(prob, tag)
    if tag.family == "left-diagonal":
        return _left_diagonal(prob, tag)
    if tag.family == "right-diagonal":
        return _right_diagonal(prob, tag)
    if tag.family == "sup-norm":
        return _sup_norm(prob, tag)
    return _kernel_engine(prob, tag, n_grid)


# ---------------------------------------------------------------------------
# consistency operations


def triviality_witness(
    prob: CopCesProblem, *, grid: Optional[Grid] = None
) -> tuple:
    """Ratios of narrowing spikes witnessing divergence for p1 < p2.

    Returns ((width, ratio), ...) for indicator functions of shrinking
    intervals around t = 1, widths 2**-2 down to 2**-10.  When p1 < p2
    (with the inner exponents ordered accordingly) the ratio grows
    without bound as the width shrinks, so no finite embedding constant
    exists.
    """
    if not prob.p1 < prob.p2:
        raise PreconditionFailedError(
            "the spike witness applies only when p1 < p2", gate="p1 < p2"
        )
    if grid is None:
        grid = Grid(0.5, 2.0, 8192)
    rows = []
    for k in range(2, 11):
        width = 2.0 ** -k
        f = StepFunction.indicator(grid, 1.0 - width / 2.0, 1.0 + width / 2.0)
        num = space_norm(f, prob.target)
        den = space_norm(f, prob.source)
        rows.append((width, xdiv(num, den)))
    return tuple(rows)


@lru_cache(maxsize=32)
def _direct_oracle(
    prob: CopCesProblem, grid: Grid, budget: int, seed: int
) -> float:
    return maximize_ratio(
        prob.source, prob.target, grid=grid, budget=budget, seed=seed
    ).best_ratio


def _tail_mass_weight(g: StepFunction) -> Weight:
    """t -> int_t^oo g as an evaluable weight, exact for step g."""
    edges = np.asarray(g.grid.edges, dtype=float)
    vals = np.asarray(g.values, dtype=float)
    cell = vals * np.diff(edges)
    tail = np.concatenate([np.cumsum(cell[::-1])[::-1], [0.0]])

    def fn(ts):
        ts = np.asarray(ts, dtype=float)
        idx = np.clip(np.searchsorted(edges, ts, side="right") - 1, -1, cell.size)
        out = np.empty(ts.shape)
        below = idx < 0
        above = idx >= cell.size
        inside = ~(below | above)
        out[below] = tail[0]
        out[above] = 0.0
        i = idx[inside]
        out[inside] = tail[i + 1] + vals[i] * (edges[i + 1] - ts[inside])
        return out

    support = vals.nonzero()[0]
    if support.size:
        breaks = (float(edges[support[0]]), float(edges[support[-1] + 1]))
    else:
        breaks = ()
    return Func(fn, breaks=breaks)


def duality_reduction_check(
    prob: CopCesProblem,
    g: StepFunction,
    *,
    budget: int = 20_000,
    seed: int = 0,
) -> tuple:
    """Lower bound on the constant from one dual density, plus the oracle.

    For p2 <= min(p1, q2) and p2 < q2 the embedding constant equals the
    supremum over densities g of

        ( || Id : Cop -> L_{p2}( v2 (int_._oo g)^{1/p2} ) ||^{p2}
          / || g ||_{q2/(q2-p2), u2^{-p2}} )^{1/p2},

    so each g produces a certified lower bound, invariant under scaling
    of g.  Returns (bound for this g, direct ratio-search constant on
    g's grid).  A zero g gives 0.
    """
    p1, q1, p2, q2 = prob.p1, prob.q1, prob.p2, prob.q2
    if not (p2 < q2 and p2 <= p1):
        raise PreconditionFailedError(
            "the dual reduction needs p2 <= min(p1, q2) and p2 < q2",
            gate="p2 <= min(p1, q2), p2 < q2",
        )
    direct = _direct_oracle(prob, g.grid, budget, seed)
    p2f = float(p2)
    theta = Exponent(q2.value / (q2.value - p2.value))
    den = space_norm(g, LebesgueSpace(theta, PowerOf(prob.u2, -p2f)))
    if den == 0.0:
        return 0.0, direct
    wg = Product((prob.v2, PowerOf(_tail_mass_weight(g), 1.0 / p2f)))
    emb = copson_into_lp(
        LpEmbeddingProblem(
            "from_copson",
            p1=p2,
            p2=p1,
            q=q1,
            v1=wg,
            v2=prob.v1,
            u=prob.u1,
        )
    )
    inner = xpow(xdiv(xpow(float(emb.value), p2f), den), 1.0 / p2f)
    return inner, direct


# ---------------------------------------------------------------------------
# the two-kernel splitting identity


@dataclass(frozen=True)
class GluingResult:
    """Both sides of the kernel splitting identity and their ratio."""

    lhs: float
    rhs: float
    ratio: float
    near_term: float
    far_term: float


def gluing_check(
    beta: float,
    u: Weight,
    g: Weight,
    h: Weight,
    *,
    n_grid: int = 2048,
) -> GluingResult:
    """Evaluate both sides of the kernel splitting identity.

    With U the primitive of u and the kernel K(s, t) = U(s)/(U(s)+U(t)),
    the left side is

        int ( int K(x, t) g(t) dt )^{beta-1}
            ( sup_t K(t, x) h(t) )^{beta}  g(x) dx

    and the right side splits it at the diagonal:

        int ( int_0^x g )^{beta-1} ( sup_{(x,oo)} h )^{beta} g dx
      + int ( int_x^oo g/U )^{beta-1} ( sup_{(0,x)} U h )^{beta} (g/U) dx.

    The two sides agree up to a factor depending only on beta.  Requires
    beta > 0 and an admissible primitive; returns lhs, rhs, lhs/rhs and
    the two right-hand terms.
    """
    if not (math.isfinite(beta) and beta > 0.0):
        raise PreconditionFailedError("beta must be positive", gate="beta > 0")
    adm = AdmissibleFunction(u)
    edges = np.geomspace(1e-8, 1e8, max(n_grid, 64) + 1)
    extra = [
        b
        for w in (u, g, h)
        for b in w.breakpoints
        if 1e-8 < b < 1e8 and math.isfinite(b)
    ]
    if extra:
        edges = np.unique(np.concatenate([edges, np.asarray(extra)]))
    mids = np.sqrt(edges[:-1] * edges[1:])

    U_m = adm.batch(mids)
    U_end = adm.value(float(edges[-1]))
    gm, _ = segment_masses(g, 1.0, edges)
    head_g = g.power_integral(1.0, 0.0, float(edges[0]))
    far_g = g.power_integral(1.0, float(edges[-1]), math.inf)
    h_m = h.values(mids)
    h_tail_sup = NormFunctional(h, Exponent("inf"), tail=True)(float(edges[-1]))

    # sup_t K(t, x) h(t) and int K(x, t) g(t) dt on the midpoint grid
    supv = np.full(mids.size, h_tail_sup, dtype=float)
    inner = np.zeros(mids.size)
    for lo in range(0, mids.size, _BLOCK):
        hi = min(lo + _BLOCK, mids.size)
        kt = _kernel_cols(U_m, U_m[lo:hi])
        supv[lo:hi] = np.maximum(
            supv[lo:hi], _amul(kt, h_m[:, None]).max(axis=0)
        )
        inner[lo:hi] = _amul(1.0 - kt, gm[:, None]).sum(axis=0)
    inner = inner + head_g
    if far_g > 0.0:
        kfar = np.array(
            [_kernel_scalar_f(ux, U_end) for ux in U_m], dtype=float
        )
        inner = inner + _amul(1.0 - kfar, np.full(mids.size, far_g))

    def outer(integrand_mass, weight_vals, sup_vals):
        body = arr_pow(sup_vals, beta)
        if beta != 1.0:
            body = _amul(body, arr_pow(weight_vals, beta - 1.0))
        contrib = _amul(body, integrand_mass)
        if np.any(np.isinf(contrib)):
            return math.inf, contrib
        return float(np.sum(contrib)), contrib

    lhs, lc = outer(gm, inner, supv)
    if math.isfinite(lhs):
        lhs = xadd(
            lhs,
            xadd(
                xmul(_first_finite(lc, gm), xdiv(head_g, _first_finite_mass(gm))),
                0.0,
            ),
        )

    # right side, term one: head mass of g against the tail sup of h
    half = np.unique(np.concatenate([edges, mids]))
    hm2, _ = segment_masses(g, 1.0, half)
    cum = head_g + np.concatenate([[0.0], np.cumsum(hm2)])
    pos = np.searchsorted(half, mids)
    Hg_mid = cum[pos]
    hs = _cell_sups(h, edges)
    rtail = np.empty(mids.size)
    run = h_tail_sup
    for j in range(mids.size - 1, -1, -1):
        rtail[j] = max(run, h_m[j])
        run = max(run, hs[j])
    a1, c1 = outer(gm, Hg_mid, rtail)
    if math.isfinite(a1):
        a1 = xadd(a1, xmul(xpow(head_g, beta) / beta, xpow(float(rtail[0]), beta)))
        a1 = xadd(
            a1,
            xmul(
                _amul(
                    xpow(float(cum[-1]), beta - 1.0) if beta != 1.0 else 1.0,
                    xpow(h_tail_sup, beta),
                ),
                far_g,
            ),
        )

    # term two: the reflected split through U
    with np.errstate(divide="ignore"):
        invU = np.where(U_m > 0.0, 1.0 / np.where(U_m > 0.0, U_m, 1.0), np.inf)
    gu_m = _amul(gm, invU)
    Gu_tail = np.concatenate([np.cumsum(gu_m[::-1])[::-1], [0.0]])
    Gu_mid = Gu_tail[1:] + 0.5 * gu_m
    uh_sups = _cell_sups(Product((head_norm_weight(u, 1.0), h)), edges)
    run = 0.0
    supUh = np.empty(mids.size)
    for j in range(mids.size):
        supUh[j] = max(run, _amul(U_m[j], h_m[j]))
        run = max(run, uh_sups[j])
    a2, c2 = outer(gu_m, Gu_mid, supUh)

    rhs = xadd(a1, a2)
    return GluingResult(
        lhs=lhs, rhs=rhs, ratio=xdiv(lhs, rhs), near_term=a1, far_term=a2
    )


def _first_finite(contrib: np.ndarray, masses: np.ndarray) -> float:
    for c, m in zip(contrib, masses):
        if m > 0.0 and math.isfinite(c):
            return float(c)
    return 0.0


def _first_finite_mass(masses: np.ndarray) -> float:
    for m in masses:
        if m > 0.0:
            return float(m)
    return math.inf


# ---------------------------------------------------------------------------
# the reflection onto the reversed embedding


def _reflect_weight(w: Weight, c: float) -> Weight:
    """t -> t**c * w(1/t), with breakpoints and power orders carried over."""
    from .orders import PolyOrder

    def fn(ts):
        ts = np.asarray(ts, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            return np.power(ts, c) * w.values(1.0 / ts)

    def flip(order, sign):
        if isinstance(order, PolyOrder) and order.beta == 0.0:
            return PolyOrder(c - order.alpha)
        return None

    breaks = tuple(
        sorted(1.0 / b for b in w.breakpoints if b > 0.0 and math.isfinite(b))
    )
    return Func(
        fn,
        order0=flip(w.order_inf(), -1),
        orderoo=flip(w.order_zero(), 1),
        breaks=breaks,
    )


def reflected_problem(prob: CopCesProblem) -> CopCesProblem:
    """The substitution t -> 1/t turning the reversed embedding into ours.

    The constant of Ces_{p1,q1}(u1,v1) -> Cop_{p2,q2}(u2,v2) equals the
    constant of the returned Copson-into-Cesaro problem, whose weights
    are t**(-2/q_i) u_i(1/t) and t**(-2/p_i) v_i(1/t).
    """
    return CopCesProblem(
        p1=prob.p1,
        q1=prob.q1,
        p2=prob.p2,
        q2=prob.q2,
        u1=_reflect_weight(prob.u1, -2.0 / float(prob.q1)),
        v1=_reflect_weight(prob.v1, -2.0 / float(prob.p1)),
        u2=_reflect_weight(prob.u2, -2.0 / float(prob.q2)),
        v2=_reflect_weight(prob.v2, -2.0 / float(prob.p2)),
    )
