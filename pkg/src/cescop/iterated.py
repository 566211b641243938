"""Nested Hardy-type constants built from a primitive comparator.

The constants in this module estimate quantities whose formulas nest a
running supremum or integral inside an outer norm.  They share one
geometric ingredient: a primitive U(t) = int_0^t u together with the
balance kernel

    K(x, t) = U(x) / (U(t) + U(x))

which lies in (0, 1) and satisfies K(x, t) + K(t, x) = 1.

``AdmissibleFunction`` wraps the primitive and verifies the properties
the kernel needs: continuity, strict growth, vanishing at 0+, divergence
at infinity.  ``FundamentalFunction`` is the averaged profile
phi(x) = int K(x, tau)^s w(tau) dtau whose quasiconcavity and
nondegeneracy gate the integral-form constants; the gate is probed by
``check_quasiconcave_nondegenerate`` and a failed gate is an error, not
a fallback.

Three constants are exposed.  ``iterated_constant`` has an integral
outer norm and dispatches on (theta vs p, theta vs q) into four regimes.
``iterated_constant_sup_outer`` replaces the averaged profile by an
essential supremum and has two regimes.  ``iterated_constant_sup_inner``
carries a running supremum of the generator inside an integral norm,
again with two regimes, and uses the theta = 1 essential-supremum branch
of the tail seminorm of v.

The engines discretise (0, oo) on a log grid with exact per-cell weight
masses and kernel values at cell midpoints.  Far head and tail strips
are charged with kernel bounds that follow the U-decay, so weights with
infinite total mass (which nondegeneracy typically forces) do not poison
the sums; an extension band of coarse cells continues the outer variable
beyond the main grid to confirm decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._assembly import check_running_norms_finite
from .errors import PreconditionFailedError
from .estimates import ConstantEstimate
from .exponents import Exponent, ExponentLike, dual_exponent
from .extreal import arr_pow, xadd, xdiv, xmul, xpow
from .orders import limit_kind
from .quadrature import fit_endpoint_exponent
from .spaces import NormFunctional, _cell_sups, head_norm_weight, segment_masses
from .weights import PowerOf, Product, Weight

__all__ = [
    "AdmissibleFunction",
    "FundamentalFunction",
    "QuasiconcaveVerdict",
    "check_quasiconcave_nondegenerate",
    "iterated_constant",
    "iterated_constant_sup_outer",
    "iterated_constant_sup_inner",
]

DEFAULT_GRID = 2048

_LO = 1e-8
_HI = 1e8
_EXT_HI = 1e16
# monotone-equivalence slack for the quasiconcavity probe
_EQUIV_FACTOR = 4.0
# endpoint fits must clear this log-log slope to certify a limit; small
# enough that logarithmic rates (slope ~ 1/log) still register
_SLOPE_MARGIN = 0.02
# column block for the O(N^2) kernel passes, keeps peak memory flat
_BLOCK = 512
# an infinite boundary strip is dropped once the integrand has decayed
# below this fraction of the interior total
_NEGLIGIBLE = 1e-12


def _kernel_scalar(a: float, b: float) -> float:
    """a / (a + b) with symmetric conventions at 0 and infinity.

    The branch divides the smaller argument by the sum, which keeps
    K(x, t) + K(t, x) = 1 exact in floats for either call order.
    """
    if math.isinf(a):
        return 0.5 if math.isinf(b) else 1.0
    if math.isinf(b):
        return 0.0
    s = a + b
    if s == 0.0:
        return 0.5
    if a <= b:
        return a / s
    return 1.0 - b / s


def _kernel_cols(ut: np.ndarray, ux: np.ndarray) -> np.ndarray:
    """Matrix K[i, j] = ut_i / (ut_i + ux_j) for nonnegative arrays."""
    a = ut[:, None]
    b = ux[None, :]
    s = a + b
    with np.errstate(invalid="ignore"):
        out = np.where(s > 0.0, a / np.where(s > 0.0, s, 1.0), 0.5)
    out = np.where(np.isnan(out), np.where(np.isinf(a) & np.isinf(b), 0.5, out), out)
    out = np.where(np.isinf(a) & ~np.isinf(b), 1.0, out)
    out = np.where(np.isinf(b) & ~np.isinf(a), 0.0, out)
    return out


def _amul(a, b) -> np.ndarray:
    """Elementwise product with the 0 * inf = 0 convention."""
    with np.errstate(invalid="ignore", over="ignore"):
        out = np.asarray(a) * np.asarray(b)
    if np.any(np.isnan(out)):
        zero = (np.asarray(a) == 0.0) | (np.asarray(b) == 0.0)
        out = np.where(np.isnan(out), np.where(zero, 0.0, np.inf), out)
    return out


def _dotmass(g: np.ndarray, m: np.ndarray) -> float:
    return float(np.sum(_amul(g, m)))


def _edge_charge(gval: float, mass: float, scale: float) -> float:
    """Boundary strip contribution g * mass.

    An infinite strip mass is dropped when the integrand has decayed to
    numerical irrelevance at the strip edge; otherwise it propagates.
    """
    if math.isinf(mass) and gval <= _NEGLIGIBLE * max(scale, 1e-300):
        return 0.0
    return xmul(gval, mass)


@dataclass(frozen=True)
class AdmissibleFunction:
    """Primitive U(t) = (int_0^t generator)^power with admissibility checks.

    The kernel compares masses through ratios of U, which only behaves
    when U is continuous, strictly increasing, vanishes at 0+ and grows
    without bound.  Those properties are probed on a wide log grid at
    construction time; violations raise PreconditionFailedError.  The
    ``power`` field lets the same machinery represent comparators U^s.
    """

    generator: Weight
    power: float = 1.0
    _fn: NormFunctional = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.power) and self.power > 0.0):
            raise PreconditionFailedError(
                "the comparator power must be positive and finite",
                gate="power > 0",
            )
        fn = NormFunctional(self.generator, Exponent(1), tail=False)
        object.__setattr__(self, "_fn", fn)
        probes = np.geomspace(_LO, _HI, 65)
        vals = fn.batch(probes)
        if not np.all(np.isfinite(vals)):
            raise PreconditionFailedError(
                "the primitive of the generator is infinite at finite points",
                gate="admissible U",
            )
        if np.any(np.diff(vals) <= 0.0):
            raise PreconditionFailedError(
                "the primitive of the generator is not strictly increasing",
                gate="admissible U",
            )
        if not self._vanishes_at_zero(fn):
            raise PreconditionFailedError(
                "the primitive of the generator does not vanish at 0",
                gate="admissible U",
            )
        if not self._grows_without_bound(fn):
            raise PreconditionFailedError(
                "the primitive of the generator stays bounded",
                gate="admissible U",
            )

    @staticmethod
    def _vanishes_at_zero(fn: NormFunctional) -> bool:
        kind = limit_kind(fn.order_zero(), "zero")
        if kind is not None:
            return kind == "zero"
        slope = fit_endpoint_exponent(fn, "zero", _LO)
        return slope is not None and slope >= _SLOPE_MARGIN

    @staticmethod
    def _grows_without_bound(fn: NormFunctional) -> bool:
        kind = limit_kind(fn.order_inf(), "inf")
        if kind is not None:
            return kind == "inf"
        if fn.total() == math.inf:
            return True
        slope = fit_endpoint_exponent(fn, "inf", _HI)
        return slope is not None and slope >= _SLOPE_MARGIN

    def value(self, t: float) -> float:
        return xpow(self._fn(t), self.power)

    __call__ = value

    def batch(self, ts) -> np.ndarray:
        return arr_pow(self._fn.batch(np.asarray(ts, dtype=float)), self.power)

    @property
    def breakpoints(self) -> tuple:
        return self._fn.breakpoints

    def kernel(self, x: float, t: float) -> float:
        """K(x, t) = U(x) / (U(t) + U(x))."""
        return _kernel_scalar(self.value(x), self.value(t))


def _primitive_decayed(
    U: AdmissibleFunction, w: Weight, s: float, p: ExponentLike
) -> NormFunctional:
    """Tail functional of w * U^{-s}.

    Beyond the main grid the kernel behaves like U(x)^s / U(tau)^s, so
    this functional gives far-tail strip bounds that follow the decay
    instead of charging the full (possibly infinite) mass of w.
    """
    density = Product(
        (w, PowerOf(head_norm_weight(U.generator, Exponent(1)), -U.power * s))
    )
    return NormFunctional(density, Exponent(p), tail=True)


@dataclass(frozen=True)
class FundamentalFunction:
    """Averaged profile phi(x) = int_0^inf K(x, tau)^s w(tau) dtau.

    ``U`` supplies the kernel, ``w`` the averaged weight, ``s`` the
    kernel power.  Pointwise evaluation runs over a fixed probe grid
    with exact cell masses of w; head and tail strips get kernel-bound
    charges, so infinite total mass of w does not spoil finite values.
    """

    U: AdmissibleFunction
    w: Weight
    s: float = 1.0
    _state: dict = field(default_factory=dict, repr=False, compare=False)

    def _tables(self) -> dict:
        tab = self._state.get("tab")
        if tab is None:
            edges = _grid_edges(512, self.w, self.U.generator)
            mids = np.sqrt(edges[:-1] * edges[1:])
            wm = segment_masses(self.w, 1.0, edges)[0]
            tab = {
                "edges": edges,
                "um": self.U.batch(mids),
                "wm": np.where(np.isnan(wm), np.inf, wm),
                "u_lo": self.U.value(edges[0]),
                "u_hi": self.U.value(edges[-1]),
                "whead": self.w.power_integral(1.0, 0.0, edges[0]),
                "whfn": NormFunctional(self.w, Exponent(1), tail=False),
                "wtfn": NormFunctional(self.w, Exponent(1), tail=True),
                "mt": _primitive_decayed(self.U, self.w, self.s, 1),
            }
            self._state["tab"] = tab
        return tab

    def value(self, x: float) -> float:
        tab = self._tables()
        ux = self.U.value(x)
        if ux == 0.0:
            return 0.0
        um = tab["um"]
        if math.isinf(ux):
            main = float(np.sum(tab["wm"]))
        else:
            main = _dotmass(arr_pow(ux / (um + ux), self.s), tab["wm"])
        head = xmul(_kernel_scalar(ux, tab["u_lo"]) ** self.s, tab["whead"])
        return xadd(main, xadd(head, self._beyond_grid(x, ux, tab)))

    __call__ = value

    def _beyond_grid(self, x: float, ux: float, tab: dict) -> float:
        hi = float(tab["edges"][-1])
        out = 0.0
        at = hi
        if x > hi:
            # strip between the grid end and x, kernel at its log midpoint
            strip = max(tab["whfn"](x) - tab["whfn"](hi), 0.0)
            kmid = _kernel_scalar(ux, self.U.value(math.sqrt(hi * x))) ** self.s
            out = xmul(kmid, strip)
            at = x
        cap = xmul(_kernel_scalar(ux, self.U.value(at)) ** self.s, tab["wtfn"](at))
        decay = xmul(xpow(ux, self.s), tab["mt"](at))
        return xadd(out, min(cap, decay))


@dataclass(frozen=True)
class _SupProfile:
    """Probe evaluator for phi(x) = esup_t w(t) K(x, t)^s."""

    U: AdmissibleFunction
    w: Weight
    s: float
    _state: dict = field(default_factory=dict, repr=False, compare=False)

    def _tables(self) -> dict:
        tab = self._state.get("tab")
        if tab is None:
            edges = _grid_edges(512, self.w, self.U.generator)
            mids = np.sqrt(edges[:-1] * edges[1:])
            tab = {
                "edges": edges,
                "um": self.U.batch(mids),
                "ws": _cell_sups(self.w, edges),
                "u_lo": self.U.value(edges[0]),
                "u_hi": self.U.value(edges[-1]),
                "hsup": NormFunctional(self.w, Exponent("inf"), tail=False),
                "tsup": NormFunctional(self.w, Exponent("inf"), tail=True),
                "msup": _primitive_decayed(self.U, self.w, self.s, "inf"),
            }
            self._state["tab"] = tab
        return tab

    def value(self, x: float) -> float:
        tab = self._tables()
        ux = self.U.value(x)
        if ux == 0.0:
            return 0.0
        edges = tab["edges"]
        k = arr_pow(np.full_like(tab["um"], ux) / (tab["um"] + ux), self.s) \
            if not math.isinf(ux) else np.ones_like(tab["um"])
        best = float(np.max(_amul(k, tab["ws"]))) if tab["ws"].size else 0.0
        head = xmul(_kernel_scalar(ux, tab["u_lo"]) ** self.s, tab["hsup"](edges[0]))
        cap = xmul(_kernel_scalar(ux, tab["u_hi"]) ** self.s, tab["tsup"](edges[-1]))
        decay = xmul(xpow(ux, self.s), tab["msup"](edges[-1]))
        best = max(best, head, min(cap, decay))
        if x > edges[-1]:
            best = max(best, xmul(0.5 ** self.s, tab["hsup"](x)))
        return best

    __call__ = value


@dataclass(frozen=True)
class QuasiconcaveVerdict:
    """Outcome of the quasiconcavity and nondegeneracy probes."""

    ok: bool
    failures: tuple = ()

    def __bool__(self) -> bool:
        return self.ok


def check_quasiconcave_nondegenerate(phi, U: AdmissibleFunction) -> QuasiconcaveVerdict:
    """Probe phi for membership in the nondegenerate quasiconcave family.

    On a log probe grid, phi must be equivalent to a nondecreasing
    function and phi/U to a nonincreasing one, both within a fixed
    factor.  Four endpoint limits must vanish: phi at 0+, 1/phi at
    infinity, phi/U at infinity and U/phi at 0+.  The limits are judged
    by endpoint power-law fits with a small slope margin, so slowly
    varying (logarithmic) rates still register.  Returns a verdict and
    never raises.
    """
    xs = np.geomspace(1e-6, 1e6, 49)
    try:
        ph = np.array([float(phi(x)) for x in xs], dtype=float)
    except (ArithmeticError, ValueError):
        return QuasiconcaveVerdict(
            False, ("phi could not be evaluated on the probe grid",)
        )
    if np.any(np.isnan(ph)) or np.any(ph < 0.0):
        return QuasiconcaveVerdict(
            False, ("phi is not finite and nonnegative on the probe grid",)
        )
    if not np.all(np.isfinite(ph)):
        return QuasiconcaveVerdict(False, ("phi is infinite on the probe grid",))
    if np.all(ph == 0.0):
        return QuasiconcaveVerdict(False, ("phi vanishes identically",))

    failures = []
    uv = U.batch(xs)
    ratio = ph / uv
    if np.any(np.maximum.accumulate(ph) > _EQUIV_FACTOR * ph):
        failures.append("phi is not equivalent to a nondecreasing function")
    if np.any(ratio > _EQUIV_FACTOR * np.minimum.accumulate(ratio)):
        failures.append("phi/U is not equivalent to a nonincreasing function")

    def phi_over_u(t: float) -> float:
        return xdiv(float(phi(t)), U.value(t))

    def u_over_phi(t: float) -> float:
        return xdiv(U.value(t), float(phi(t)))

    fits = (
        (phi, "zero", 1.0, "phi does not vanish at 0"),
        (phi, "inf", 1.0, "phi stays bounded at infinity"),
        (phi_over_u, "inf", -1.0, "phi/U does not vanish at infinity"),
        (u_over_phi, "zero", 1.0, "U/phi does not vanish at 0"),
    )
    for f, end, sign, msg in fits:
        anchor = 1e-6 if end == "zero" else 1e6
        slope = fit_endpoint_exponent(f, end, anchor)
        if slope is None or sign * slope < _SLOPE_MARGIN:
            failures.append(msg)
    return QuasiconcaveVerdict(not failures, tuple(failures))


def _grid_edges(n: int, *weights: Weight) -> np.ndarray:
    edges = np.geomspace(_LO, _HI, n + 1)
    extra = [bk for w in weights for bk in w.breakpoints if _LO < bk < _HI]
    if extra:
        edges = np.unique(np.concatenate([edges, np.asarray(extra, dtype=float)]))
    return edges


@dataclass
class _Tables:
    adm: AdmissibleFunction
    edges: np.ndarray
    mids: np.ndarray
    um: np.ndarray
    u_lo: float
    u_hi: float
    wm: np.ndarray
    whead: float
    wtail_hi: float
    wfar: float
    xs: np.ndarray
    uxs: np.ndarray
    xm: np.ndarray
    n_main: int
    ustrip: np.ndarray
    whfn: NormFunctional
    wtfn: NormFunctional


def _build_tables(
    adm: AdmissibleFunction, breaks: tuple, w: Weight, n_grid: int
) -> _Tables:
    edges = _grid_edges(n_grid, *breaks)
    mids = np.sqrt(edges[:-1] * edges[1:])
    wm = segment_masses(w, 1.0, edges)[0]
    wm = np.where(np.isnan(wm), np.inf, wm)
    ext_edges = np.geomspace(_HI, _EXT_HI, 65)
    ext_mids = np.sqrt(ext_edges[:-1] * ext_edges[1:])
    ext_wm = segment_masses(w, 1.0, ext_edges)[0]
    xs = np.concatenate([mids, ext_mids])
    whfn = NormFunctional(w, Exponent(1), tail=False)
    wtfn = NormFunctional(w, Exponent(1), tail=True)
    return _Tables(
        adm=adm,
        edges=edges,
        mids=mids,
        um=adm.batch(mids),
        u_lo=adm.value(edges[0]),
        u_hi=adm.value(edges[-1]),
        wm=wm,
        whead=w.power_integral(1.0, 0.0, edges[0]),
        wtail_hi=wtfn(edges[-1]),
        wfar=wtfn(_EXT_HI),
        xs=xs,
        uxs=adm.batch(xs),
        xm=np.concatenate([wm, np.where(np.isnan(ext_wm), np.inf, ext_wm)]),
        n_main=mids.size,
        ustrip=adm.batch(np.sqrt(edges[-1] * ext_mids)),
        whfn=whfn,
        wtfn=wtfn,
    )


def _phi_on_grid(tab: _Tables, s: float, mt: NormFunctional) -> np.ndarray:
    nx = tab.xs.size
    nm = tab.n_main
    out = np.empty(nx)
    for lo in range(0, nx, _BLOCK):
        hi = min(lo + _BLOCK, nx)
        kt = _kernel_cols(tab.um, tab.uxs[lo:hi])
        out[lo:hi] = _amul(arr_pow(1.0 - kt, s), tab.wm[:, None]).sum(axis=0)
    out += _amul(arr_pow(tab.uxs / (tab.u_lo + tab.uxs), s), np.full(nx, tab.whead))
    cap = _amul(
        arr_pow(tab.uxs[:nm] / (tab.u_hi + tab.uxs[:nm]), s),
        np.full(nm, tab.wtail_hi),
    )
    decay = _amul(arr_pow(tab.uxs[:nm], s), np.full(nm, mt(tab.edges[-1])))
    out[:nm] += np.minimum(cap, decay)
    if nm < nx:
        ext = tab.xs[nm:]
        uext = tab.uxs[nm:]
        strip = np.maximum(tab.whfn.batch(ext) - tab.whfn(tab.edges[-1]), 0.0)
        out[nm:] += _amul(arr_pow(uext / (tab.ustrip + uext), s), strip)
        cap = _amul(np.full(ext.size, 0.5 ** s), tab.wtfn.batch(ext))
        decay = _amul(arr_pow(uext, s), mt.batch(ext))
        out[nm:] += np.minimum(cap, decay)
    return out


def _inner_sup_on_grid(
    tab: _Tables, pf: float, vpow_mid: np.ndarray, vpow_ext: Optional[np.ndarray]
) -> np.ndarray:
    inv_p = 1.0 / pf
    nx = tab.xs.size
    out = np.empty(nx)
    for lo in range(0, nx, _BLOCK):
        hi = min(lo + _BLOCK, nx)
        kt = _kernel_cols(tab.um, tab.uxs[lo:hi])
        out[lo:hi] = _amul(arr_pow(kt, inv_p), vpow_mid[:, None]).max(axis=0)
    if vpow_ext is not None and tab.n_main < nx:
        cand = _amul(np.full(vpow_ext.size, 0.5 ** inv_p), vpow_ext)
        out[tab.n_main:] = np.maximum(out[tab.n_main:], cand)
    return out


def _inner_integral_on_grid(
    tab: _Tables, rp: float, rpd: float, vfn: NormFunctional
) -> np.ndarray:
    # per-cell masses of V^{rpd} dV are exact: the antiderivative is
    # -V^{rpd+1}/(rpd+1), so cell masses telescope from edge values
    anti = arr_pow(vfn.batch(tab.edges), rpd + 1.0) / (rpd + 1.0)
    dv = anti[:-1] - anti[1:]
    dv = np.where(np.isnan(dv), np.inf, np.maximum(dv, 0.0))
    sub_edges = np.geomspace(1e-30, tab.edges[0], 161)
    sub_mids = np.sqrt(sub_edges[:-1] * sub_edges[1:])
    sub_anti = arr_pow(vfn.batch(sub_edges), rpd + 1.0) / (rpd + 1.0)
    sub_dv = sub_anti[:-1] - sub_anti[1:]
    sub_dv = np.where(np.isnan(sub_dv), np.inf, np.maximum(sub_dv, 0.0))
    sub_um = tab.adm.batch(sub_mids)
    tail_mass = float(anti[-1])

    nx = tab.xs.size
    out = np.empty(nx)
    for lo in range(0, nx, _BLOCK):
        hi = min(lo + _BLOCK, nx)
        ux = tab.uxs[lo:hi]
        vals = _amul(arr_pow(_kernel_cols(tab.um, ux), rp), dv[:, None]).sum(axis=0)
        vals += _amul(
            arr_pow(_kernel_cols(sub_um, ux), rp), sub_dv[:, None]
        ).sum(axis=0)
        out[lo:hi] = vals
    # beyond the grid the kernel is below 1, so the exact remaining mass
    # of V^{rpd} dV is an upper charge
    out += tail_mass
    return out


def _far_tail_charge(
    contrib: np.ndarray, g_end: float, far_mass: float, scale: float
) -> float:
    """Close the outer integral beyond the extension band.

    A finite strip mass is charged at the endpoint integrand value.  An
    infinite strip whose integrand has decayed to irrelevance is
    dropped.  Otherwise the geometric decay of the last log-uniform
    cell contributions is extrapolated; only when no decay is visible
    does the infinity propagate.
    """
    if far_mass == 0.0 or g_end == 0.0:
        return 0.0
    if not math.isinf(far_mass):
        return xmul(g_end, far_mass)
    if g_end <= _NEGLIGIBLE * max(scale, 1e-300):
        return 0.0
    last = contrib[-9:]
    if last.size >= 2 and np.all(np.isfinite(last)) and np.all(last > 0.0):
        rho = float(np.max(last[1:] / last[:-1]))
        if rho < 0.9:
            return float(last[-1] * rho / (1.0 - rho))
    return math.inf


def _outer_total(
    g: np.ndarray, xm: np.ndarray, whead: float, wfar: float
) -> float:
    contrib = _amul(g, xm)
    total = float(np.sum(contrib))
    finite = g[np.isfinite(g)]
    scale = max(total, float(finite.max()) if finite.size else 0.0)
    head = _edge_charge(float(g[0]), whead, scale)
    tail = _far_tail_charge(contrib, float(g[-1]), wfar, scale)
    return xadd(total, xadd(head, tail))


def _require_finite(e: Exponent, name: str) -> None:
    if e.is_inf:
        raise PreconditionFailedError(
            f"{name} must be finite", gate=f"0 < {name} < inf"
        )


def _require_theta_open(theta: Exponent) -> None:
    if theta.is_inf or float(theta) <= 1.0:
        raise PreconditionFailedError(
            "theta must lie strictly between 1 and infinity",
            gate="1 < theta < inf",
        )


def _integral_case(pf: float, qf: float, tf: float) -> str:
    if tf <= min(pf, qf):
        return "sup-product"
    if qf < tf <= pf:
        return "integral-of-sup"
    if pf < tf <= qf:
        return "sup-of-integral"
    return "double-integral"


def _gate_quasiconcave(phi, comparator: AdmissibleFunction) -> None:
    verdict = check_quasiconcave_nondegenerate(phi, comparator)
    if not verdict:
        raise PreconditionFailedError(
            "the fundamental function is degenerate: "
            + "; ".join(verdict.failures),
            gate="phi quasiconcave nondegenerate",
        )


def iterated_constant(
    p: ExponentLike,
    q: ExponentLike,
    theta: ExponentLike,
    u: Weight,
    v: Weight,
    w: Weight,
    *,
    n_grid: int = DEFAULT_GRID,
) -> ConstantEstimate:
    """Best constant with an integral outer norm over the kernel profile.

    Dispatches on the position of theta relative to p and q:
    theta <= min(p, q) gives a sup of products, q < theta <= p an
    integral of inner suprema (l = theta q/(theta-q)), p < theta <= q a
    sup of inner integrals (r = theta p/(theta-p)), and
    theta > max(p, q) the doubly integrated form.  The tail seminorm
    V(t) = int_t^inf v^{1-theta'} enters through the inner factors.

    Requires 0 < p,q < inf, 1 < theta < inf, an admissible primitive of
    u, and a nondegenerate quasiconcave profile phi; gate violations
    raise PreconditionFailedError.
    """
    p = Exponent(p)
    q = Exponent(q)
    theta = Exponent(theta)
    _require_finite(p, "p")
    _require_finite(q, "q")
    _require_theta_open(theta)
    pf, qf, tf = float(p), float(q), float(theta)
    adm = AdmissibleFunction(u)
    s = qf / pf
    case = _integral_case(pf, qf, tf)
    if w.is_zero:
        return ConstantEstimate(0.0, case=case)
    _gate_quasiconcave(
        FundamentalFunction(adm, w, s), AdmissibleFunction(u, power=s)
    )

    tab = _build_tables(adm, (u, v, w), w, n_grid)
    td = float(dual_exponent(theta))
    vfn = NormFunctional(PowerOf(v, 1.0 - td), Exponent(1), tail=True)
    phi_vals = _phi_on_grid(tab, s, _primitive_decayed(adm, w, s, 1))

    if case in ("sup-product", "integral-of-sup"):
        vpow_mid = arr_pow(vfn.batch(tab.mids), 1.0 / td)
        vpow_ext = arr_pow(vfn.batch(tab.xs[tab.n_main:]), 1.0 / td)
        sup_vals = _inner_sup_on_grid(tab, pf, vpow_mid, vpow_ext)
    if case in ("sup-of-integral", "double-integral"):
        r = tf * pf / (tf - pf)
        pd = dual_exponent(p)
        rpd = 0.0 if pd.is_inf else r / float(pd)
        int_vals = _inner_integral_on_grid(tab, r / pf, rpd, vfn)

    if case == "sup-product":
        value = float(np.max(_amul(arr_pow(phi_vals, 1.0 / qf), sup_vals)))
    elif case == "integral-of-sup":
        l = tf * qf / (tf - qf)
        g = _amul(arr_pow(phi_vals, (l - qf) / qf), arr_pow(sup_vals, l))
        value = xpow(_outer_total(g, tab.xm, tab.whead, tab.wfar), 1.0 / l)
    elif case == "sup-of-integral":
        value = float(
            np.max(_amul(arr_pow(phi_vals, 1.0 / qf), arr_pow(int_vals, 1.0 / r)))
        )
    else:
        l = tf * qf / (tf - qf)
        g = _amul(arr_pow(phi_vals, (l - qf) / qf), arr_pow(int_vals, l / r))
        value = xpow(_outer_total(g, tab.xm, tab.whead, tab.wfar), 1.0 / l)
    err = 0.02 * value if math.isfinite(value) else 0.0
    return ConstantEstimate(value, case=case, error_bound=err)


def iterated_constant_sup_outer(
    p: ExponentLike,
    theta: ExponentLike,
    u: Weight,
    v: Weight,
    w: Weight,
    *,
    n_grid: int = DEFAULT_GRID,
) -> ConstantEstimate:
    """Best constant with an essential-supremum outer norm.

    The averaged profile is replaced by
    phi(x) = esup_t w(t) K(x, t)^{1/p}.  For theta <= p the constant is
    a sup of products with the inner kernel supremum; for p < theta it
    pairs phi with an inner integral at r = theta p/(theta-p).  Gates:
    0 < p < inf, 1 < theta < inf, admissible primitive, phi in the
    nondegenerate quasiconcave family relative to U^{1/p}.
    """
    p = Exponent(p)
    theta = Exponent(theta)
    _require_finite(p, "p")
    _require_theta_open(theta)
    pf, tf = float(p), float(theta)
    adm = AdmissibleFunction(u)
    case = "sup-product" if tf <= pf else "sup-of-integral"
    if w.is_zero:
        return ConstantEstimate(0.0, case=case)
    profile = _SupProfile(adm, w, 1.0 / pf)
    _gate_quasiconcave(profile, AdmissibleFunction(u, power=1.0 / pf))

    tab = _build_tables(adm, (u, v, w), w, n_grid)
    td = float(dual_exponent(theta))
    vfn = NormFunctional(PowerOf(v, 1.0 - td), Exponent(1), tail=True)
    wsups = _cell_sups(w, tab.edges)
    s = 1.0 / pf
    nx = tab.xs.size
    nm = tab.n_main
    phis = np.empty(nx)
    for lo in range(0, nx, _BLOCK):
        hi = min(lo + _BLOCK, nx)
        kt = _kernel_cols(tab.um, tab.uxs[lo:hi])
        phis[lo:hi] = _amul(arr_pow(1.0 - kt, s), wsups[:, None]).max(axis=0)
    hsup = NormFunctional(w, Exponent("inf"), tail=False)
    tsup = NormFunctional(w, Exponent("inf"), tail=True)
    msup = _primitive_decayed(adm, w, s, "inf")
    head_c = _amul(
        arr_pow(tab.uxs / (tab.u_lo + tab.uxs), s), np.full(nx, hsup(tab.edges[0]))
    )
    cap = _amul(
        arr_pow(tab.uxs / (tab.u_hi + tab.uxs), s), np.full(nx, tsup(tab.edges[-1]))
    )
    decay = _amul(arr_pow(tab.uxs, s), np.full(nx, msup(tab.edges[-1])))
    phis = np.maximum(phis, np.maximum(head_c, np.minimum(cap, decay)))
    if nm < nx:
        cand = _amul(np.full(nx - nm, 0.5 ** s), hsup.batch(tab.xs[nm:]))
        phis[nm:] = np.maximum(phis[nm:], cand)

    if case == "sup-product":
        vpow_mid = arr_pow(vfn.batch(tab.mids), 1.0 / td)
        vpow_ext = arr_pow(vfn.batch(tab.xs[nm:]), 1.0 / td)
        sup_vals = _inner_sup_on_grid(tab, pf, vpow_mid, vpow_ext)
        value = float(np.max(_amul(phis, sup_vals)))
    else:
        r = tf * pf / (tf - pf)
        pd = dual_exponent(p)
        rpd = 0.0 if pd.is_inf else r / float(pd)
        int_vals = _inner_integral_on_grid(tab, r / pf, rpd, vfn)
        value = float(np.max(_amul(phis, arr_pow(int_vals, 1.0 / r))))
    err = 0.02 * value if math.isfinite(value) else 0.0
    return ConstantEstimate(value, case=case, error_bound=err)


def _require_continuous_generator(u: Weight) -> None:
    for bk in u.breakpoints:
        left = u.value_side(bk, -1)
        right = u.value_side(bk, +1)
        tol = 1e-9 * max(abs(left), abs(right), 1.0)
        if not (
            math.isfinite(left) and math.isfinite(right) and abs(left - right) <= tol
        ):
            raise PreconditionFailedError(
                "the generator u must be continuous", gate="u continuous"
            )


def _require_positive_generator(u: Weight) -> None:
    probes = np.geomspace(1e-6, 1e6, 25)
    vals = u.values(probes)
    for t, val in zip(probes, vals):
        if val > 0.0:
            continue
        if val == 0.0 and t > 100.0 and u.order_inf() is not None and not u.is_zero:
            # far-tail underflow of a positive decay law
            continue
        raise PreconditionFailedError(
            "the generator u must be positive", gate="u positive"
        )


def _require_positive_tail(name: str, w: Weight, fn: NormFunctional) -> None:
    for t in (1.0, 1e4, _HI):
        val = fn(t)
        if val > 0.0:
            continue
        if val == 0.0 and w.order_inf() is not None and not w.is_zero:
            continue
        raise PreconditionFailedError(
            f"the tail mass of {name} vanishes beyond some point",
            gate=f"tail mass of {name} positive",
        )


def iterated_constant_sup_inner(
    theta: ExponentLike,
    q: ExponentLike,
    u: Weight,
    v: Weight,
    w: Weight,
    *,
    n_grid: int = DEFAULT_GRID,
) -> ConstantEstimate:
    """Best constant for the running supremum of u inside an integral norm.

    The inner object is ubar(t) = sup over (0, t) of u; the tail
    seminorm of v is (int_x^inf v^{1-theta'})^{1/theta'} for theta > 1
    and esup over (x, inf) of 1/v at theta = 1.  For theta <= q the
    constant is a single supremum; for q < theta it splits into two
    integrals at 1/r = 1/q - 1/theta whose sum is returned, with the
    pieces recorded in ``terms``.

    Gates: 1 <= theta < inf, 0 < q < inf, u continuous and positive,
    and positive finite tail masses of w and of the transformed v that
    actually enters the seminorm.
    """
    theta = Exponent(theta)
    q = Exponent(q)
    if theta.is_inf or float(theta) < 1.0:
        raise PreconditionFailedError(
            "theta must lie in [1, infinity)", gate="1 <= theta < inf"
        )
    _require_finite(q, "q")
    qf, tf = float(q), float(theta)
    case = "sup-product" if tf <= qf else "two-part-integral"
    if w.is_zero:
        return ConstantEstimate(0.0, case=case)
    _require_continuous_generator(u)
    _require_positive_generator(u)
    wt = check_running_norms_finite(w, Exponent(1), tail=True, name="w")
    _require_positive_tail("w", w, wt)

    if tf > 1.0:
        td = float(dual_exponent(theta))
        vd = PowerOf(v, 1.0 - td)
        vt = check_running_norms_finite(
            vd, Exponent(1), tail=True, name="v^(1-theta')"
        )
        _require_positive_tail("v^(1-theta')", vd, vt)
    else:
        vsup = NormFunctional(PowerOf(v, -1.0), Exponent("inf"), tail=True)
        if math.isinf(vsup(_LO)) or math.isinf(vsup(1.0)):
            raise PreconditionFailedError(
                "the essential supremum of 1/v is infinite on tails",
                gate="esssup of 1/v finite",
            )

    edges = _grid_edges(n_grid, u, v, w)
    mids = np.sqrt(edges[:-1] * edges[1:])
    wm = segment_masses(w, 1.0, edges)[0]
    wm = np.where(np.isnan(wm), np.inf, wm)
    ext_edges = np.geomspace(_HI, _EXT_HI, 65)
    ext_mids = np.sqrt(ext_edges[:-1] * ext_edges[1:])
    ext_wm = segment_masses(w, 1.0, ext_edges)[0]
    xs = np.concatenate([mids, ext_mids])
    xm = np.concatenate([wm, np.where(np.isnan(ext_wm), np.inf, ext_wm)])
    whead = w.power_integral(1.0, 0.0, edges[0])
    wfar = wt(_EXT_HI)

    ub = NormFunctional(u, Exponent("inf"), tail=False).batch(xs)
    running_q = Product((PowerOf(head_norm_weight(u, Exponent("inf")), qf), w))
    big_g = NormFunctional(running_q, Exponent(1), tail=False).batch(xs)
    wtails = wt.batch(xs)
    if tf > 1.0:
        vth = arr_pow(vt.batch(xs), 1.0 / td)
    else:
        vth = vsup.batch(xs)

    if case == "sup-product":
        base = _amul(arr_pow(ub, qf), wtails) + big_g
        value = float(np.max(_amul(arr_pow(base, 1.0 / qf), vth)))
        terms = ()
    else:
        r = qf * tf / (tf - qf)
        g1 = _amul(_amul(arr_pow(big_g, r / tf), arr_pow(ub, qf)), arr_pow(vth, r))
        b1 = xpow(_outer_total(g1, xm, whead, wfar), 1.0 / r)
        run = np.maximum.accumulate(_amul(ub, vth))
        g2 = _amul(arr_pow(wtails, r / tf), arr_pow(run, r))
        b2 = xpow(_outer_total(g2, xm, whead, wfar), 1.0 / r)
        value = xadd(b1, b2)
        terms = (("head-part", b1), ("tail-part", b2))
    err = 0.02 * value if math.isfinite(value) else 0.0
    return ConstantEstimate(value, case=case, terms=terms, error_bound=err)
