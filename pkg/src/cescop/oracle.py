"""Brute-force lower bounds for quasi-norm embedding constants.

The searcher maximises ``||f||_target / ||f||_source`` over nonnegative
step functions on a log-uniform grid.  Per-cell weight masses are exact
(closed-form primitives wherever the weight supports them); the outer
Cesaro/Copson integral uses Gauss-Legendre nodes on the log axis inside
each cell, with node weights renormalised to the exact cell mass.
Cells across which a weight swings hard (a decaying exponential late in
the window, say) are pre-split until every piece sees mild variation,
so the node rule stays accurate; pieces whose outer mass underflows are
dropped.  Exponent infinity falls back to cell-wise suprema.

The search itself is multi-start (a spike in every cell, head and tail
indicator ramps, power-law profiles, random log-normal profiles)
followed by cyclic coordinate ascent with multiplicative perturbations.
Start families are scored in vectorised batches and merged by a stable
argmax, so results are deterministic for a fixed seed.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateRatioError, InvalidSpaceError
from .exponents import Exponent
from .extreal import arr_mul, arr_pow, xpow
from .spaces import (
    NormFunctional,
    _cell_sups,
    check_space_validity,
    segment_masses,
)

__all__ = [
    "Grid",
    "StepFunction",
    "OracleResult",
    "RefinementVerdict",
    "default_grid",
    "space_norm",
    "maximize_ratio",
    "refinement_study",
]

_NODES = 8
_DEFAULT_BUDGET = 200_000
_RANDOM_STARTS = 64
_TOP_STARTS = 4
_CHUNK_FLOATS = 2_000_000
_STEPS = (4.0, 2.0, math.sqrt(2.0), 1.2, 1.05)
_POWER_PROFILES = (-1.5, -1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0)
_SPLIT_SPAN = 2.0
_MAX_PIECES = 64
_DEAD_PIECES = 8


@dataclass(frozen=True)
class Grid:
    """Log-uniform partition of (t_min, t_max) into n cells."""

    t_min: float = 1e-6
    t_max: float = 1e6
    n: int = 2048
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "t_min", float(self.t_min))
        object.__setattr__(self, "t_max", float(self.t_max))
        object.__setattr__(self, "n", int(self.n))
        if not 0.0 < self.t_min < self.t_max < math.inf:
            raise ValueError("grid needs 0 < t_min < t_max < oo")
        if self.n < 16:
            raise ValueError("grid needs at least 16 cells")

    @property
    def edges(self) -> np.ndarray:
        e = self._cache.get("edges")
        if e is None:
            e = np.geomspace(self.t_min, self.t_max, self.n + 1)
            self._cache["edges"] = e
        return e

    @property
    def mids(self) -> np.ndarray:
        m = self._cache.get("mids")
        if m is None:
            e = self.edges
            m = np.sqrt(e[:-1] * e[1:])
            self._cache["mids"] = m
        return m

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.t_min, self.t_max, self.n * int(factor))


def default_grid() -> Grid:
    """Default search window; CESCOP_DEFAULT_GRID overrides the cell count."""
    n = 2048
    raw = os.environ.get("CESCOP_DEFAULT_GRID")
    if raw:
        n = int(raw)
    return Grid(1e-6, 1e6, n)


@dataclass(frozen=True)
class StepFunction:
    """Nonnegative piecewise-constant function on the cells of a grid.

    The function is zero outside (t_min, t_max)."""

    grid: Grid
    values: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError("need exactly one value per grid cell")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0.0):
            raise ValueError("step values must be finite and nonnegative")
        object.__setattr__(self, "values", tuple(float(x) for x in vals))

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def scaled(self, c: float) -> "StepFunction":
        return StepFunction(self.grid, tuple(c * x for x in self.values))

    @staticmethod
    def spike(grid: Grid, cell: int, height: float = 1.0) -> "StepFunction":
        vals = np.zeros(grid.n)
        vals[cell] = height
        return StepFunction(grid, tuple(vals))

    @staticmethod
    def indicator(grid: Grid, a: float, b: float) -> "StepFunction":
        """1 on every cell whose midpoint lies in (a, b), else 0."""
        vals = np.where((grid.mids > a) & (grid.mids < b), 1.0, 0.0)
        return StepFunction(grid, tuple(vals))


@dataclass(frozen=True)
class OracleResult:
    best_ratio: float
    argmax: StepFunction
    refinement_trace: tuple


@dataclass(frozen=True)
class RefinementVerdict:
    """Outcome of a grid-refinement sweep.

    kind is "bounded" or "diverging"; estimate extrapolates the trace
    for the bounded case."""

    kind: str
    estimate: Optional[float]
    trace: tuple


def _require_valid(space) -> None:
    cache = getattr(space, "_cache", None)
    verdict = cache.get("validity") if cache is not None else None
    if verdict is None:
        verdict = check_space_validity(space)
        if cache is not None:
            cache["validity"] = verdict
    if not verdict:
        raise InvalidSpaceError(verdict.reason or "invalid space", verdict.witness)


def _piece_counts(vals: np.ndarray, power: float) -> np.ndarray:
    """Per-cell split counts from node samples of a weight raised to a
    finite positive power.

    Cells whose samples swing hard get enough pieces that each piece
    sees only a bounded log-variation; cells where some samples
    underflow to zero next to positive ones are near the float frontier
    and get the full split, while all-zero cells get a token split in
    case mass hides below sample resolution."""
    n, k = vals.shape
    pieces = np.ones(n, dtype=np.int64)
    finite = np.isfinite(vals)
    pos = finite & (vals > 0.0)
    cnt = pos.sum(axis=1)
    full = cnt == k
    if np.any(full) and k > 1:
        lg = np.log(vals[full])
        slope = np.abs(np.diff(lg, axis=1)).max(axis=1)
        span = slope * (k + 1) * power
        pieces[full] = np.clip(
            np.ceil(span / _SPLIT_SPAN), 1, _MAX_PIECES
        ).astype(np.int64)
    pieces[(cnt > 0) & ~full] = _MAX_PIECES
    pieces[cnt == 0] = _DEAD_PIECES
    pieces[(~finite).any(axis=1)] = _MAX_PIECES
    return pieces


def _group_exclusive(vals: np.ndarray, starts: np.ndarray, reps: np.ndarray,
                     op, reverse: bool) -> np.ndarray:
    """Per-group exclusive scan (cumulative op over earlier pieces of
    the same original cell; later pieces when reverse)."""
    out = np.empty(vals.size)
    for j in range(starts.size):
        s0 = int(starts[j])
        s1 = s0 + int(reps[j])
        seg = vals[s0:s1]
        if reverse:
            out[s1 - 1] = 0.0
            if s1 - s0 > 1:
                out[s0 : s1 - 1] = op.accumulate(seg[::-1])[::-1][1:]
        else:
            out[s0] = 0.0
            if s1 - s0 > 1:
                out[s0 + 1 : s1] = op.accumulate(seg)[:-1]
    return out


def _distribute(mu: np.ndarray, lamw: np.ndarray, lamn: np.ndarray) -> np.ndarray:
    """Split exact cell masses over in-cell nodes, proportionally to the
    sampled outer weight; degenerate rows get an even or infinity-aware
    split so no mass is dropped."""
    k = lamw.shape[1]
    tot = lamw.sum(axis=1)
    out = np.zeros_like(lamw)
    ok = np.isfinite(tot) & (tot > 0.0) & np.isfinite(mu)
    # divide before multiplying: mu and lamw can both sit near the
    # float floor, and their direct product would underflow
    out[ok] = mu[ok, None] * (lamw[ok] / tot[ok, None])
    for j in np.nonzero(~ok)[0]:
        m = mu[j]
        if m == 0.0:
            continue
        row = lamw[j]
        if math.isinf(m):
            live = row > 0.0
            if not live.any():
                live = np.ones(k, dtype=bool)
            out[j, live] = math.inf
            continue
        hot = np.isinf(row)
        if hot.any():
            out[j, hot] = m / hot.sum()
        elif np.isfinite(row).all() and row.sum() > 0.0:
            out[j] = m * (row / row.sum())
        else:
            out[j] = m * lamn
    return out


class _CompiledNorm:
    """Step-function norm evaluator for one space on one grid.

    Every f-independent table (cell masses, partial masses up to each
    node, outer node weights, closure masses beyond the window) is
    built once; ``batch`` then prices a whole matrix of candidates in a
    few vectorised passes.  Node tables live on a refinement of the
    grid in which strongly varying cells are split, but candidate
    vectors always hold one value per original cell."""

    def __init__(self, space, grid: Grid):
        _require_valid(space)
        self.space = space
        self.grid = grid
        self.kind = space.kind
        e = grid.edges
        n = grid.n
        if self.kind == "lebesgue":
            self.p_inf = space.p.is_inf
            if self.p_inf:
                self.sups = _cell_sups(space.w, e)
            else:
                self.pf = float(space.p)
                self.masses = segment_masses(space.w, self.pf, e)[0]
            self._rows = n
            return

        head = self.kind == "cesaro"
        self.head = head
        self.p_inf = space.p.is_inf
        self.q_inf = space.q.is_inf
        self.pf = math.inf if self.p_inf else float(space.p)
        self.qf = math.inf if self.q_inf else float(space.q)
        u, v = space.u, space.v

        xi, lam = np.polynomial.legendre.leggauss(_NODES)
        frac = 0.5 * (xi + 1.0)
        lamn = 0.5 * lam
        lo = np.log(e[:-1])
        hi = np.log(e[1:])
        seed_nodes = np.exp(lo[:, None] + (hi - lo)[:, None] * frac[None, :])

        uvals = np.asarray(u.values(seed_nodes.ravel()), dtype=float).reshape(n, _NODES)
        vvals = np.asarray(v.values(seed_nodes.ravel()), dtype=float).reshape(n, _NODES)
        reps = np.maximum(
            _piece_counts(uvals, 1.0 if self.q_inf else self.qf),
            _piece_counts(vvals, 1.0 if self.p_inf else self.pf),
        )
        n2 = int(reps.sum())
        starts = np.zeros(n, dtype=np.int64)
        starts[1:] = np.cumsum(reps)[:-1]
        omap = np.repeat(np.arange(n), reps)
        local = np.arange(n2) - starts[omap]
        width = hi - lo
        llo = lo[omap] + width[omap] * local / reps[omap]
        lhi = lo[omap] + width[omap] * (local + 1) / reps[omap]
        nodes = np.exp(llo[:, None] + (lhi - llo)[:, None] * frac[None, :])
        flat = np.empty(n2 * (_NODES + 1) + 1)
        flat[:-1] = np.concatenate([np.exp(llo)[:, None], nodes], axis=1).ravel()
        flat[-1] = float(e[-1])

        if self.p_inf:
            seg = _cell_sups(v, flat).reshape(n2, _NODES + 1)
            if head:
                run = np.maximum.accumulate(seg, axis=1)
                mr = run[:, _NODES]
                base = _group_exclusive(mr, starts, reps, np.maximum, reverse=False)
                part = np.maximum(base[:, None], run[:, :_NODES])
            else:
                run = np.maximum.accumulate(seg[:, ::-1], axis=1)[:, ::-1]
                mr = run[:, 0]
                base = _group_exclusive(mr, starts, reps, np.maximum, reverse=True)
                part = np.maximum(base[:, None], run[:, 1:])
            edge_part = np.maximum(base, mr)
            self.cell_size = np.maximum.reduceat(mr, starts)
        else:
            seg = segment_masses(v, self.pf, flat)[0].reshape(n2, _NODES + 1)
            if head:
                run = np.cumsum(seg, axis=1)
                mr = run[:, _NODES]
                base = _group_exclusive(mr, starts, reps, np.add, reverse=False)
                part = base[:, None] + run[:, :_NODES]
            else:
                run = np.cumsum(seg[:, ::-1], axis=1)[:, ::-1]
                mr = run[:, 0]
                base = _group_exclusive(mr, starts, reps, np.add, reverse=True)
                part = base[:, None] + run[:, 1:]
            edge_part = base + mr
            self.cell_size = np.add.reduceat(mr, starts)

        closure_at = e[-1] if head else e[0]
        if self.q_inf:
            osup = _cell_sups(u, flat).reshape(n2, _NODES + 1)
            keep = osup.max(axis=1) > 0.0
            self.out_sups = osup[keep]
            far = NormFunctional(u, Exponent("inf"), tail=head)
            self.far_sup = float(far(closure_at))
        else:
            mu = segment_masses(u, self.qf, flat)[0].reshape(n2, _NODES + 1).sum(axis=1)
            keep = mu > 0.0
            kn = nodes[keep]
            uv = np.asarray(u.values(kn.ravel()), dtype=float).reshape(-1, _NODES)
            with np.errstate(over="ignore", invalid="ignore"):
                wq = arr_pow(uv, self.qf) * kn
            self.node_w = _distribute(mu[keep], lamn[None, :] * wq, lamn)
            far = NormFunctional(u, space.q, tail=head)
            self.far_mass = xpow(float(far(closure_at)), self.qf)
        self.omap = omap[keep]
        self.part = part[keep]
        self.edge_part = edge_part[keep]
        self._rows = max(int(keep.sum()), 1)

    def __call__(self, values: np.ndarray) -> float:
        return float(self.batch(np.asarray(values, dtype=float)[None, :])[0])

    def batch(self, mat: np.ndarray) -> np.ndarray:
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        out = np.empty(mat.shape[0])
        step = max(1, _CHUNK_FLOATS // max(1, self._rows * _NODES))
        for a in range(0, mat.shape[0], step):
            out[a : a + step] = self._chunk(mat[a : a + step])
        return out

    def _chunk(self, c: np.ndarray) -> np.ndarray:
        if self.kind == "lebesgue":
            if self.p_inf:
                return arr_mul(c, self.sups[None, :]).max(axis=1)
            fp = arr_pow(c, self.pf)
            tot = arr_mul(fp, self.masses[None, :]).sum(axis=1)
            return arr_pow(tot, 1.0 / self.pf)

        s = c.shape[0]
        zeros = np.zeros((s, 1))
        # "around" holds the inner norm contribution of the other cells:
        # everything before the current cell for Cesaro, after it for
        # Copson (p-th powers, or running sups when p is infinite).
        if self.p_inf:
            cell = arr_mul(c, self.cell_size[None, :])
            if self.head:
                run = np.maximum.accumulate(cell, axis=1)
                around = np.concatenate([zeros, run[:, :-1]], axis=1)
                total = run[:, -1]
            else:
                run = np.maximum.accumulate(cell[:, ::-1], axis=1)[:, ::-1]
                around = np.concatenate([run[:, 1:], zeros], axis=1)
                total = run[:, 0]
            bsel = around[:, self.omap]
            fsel = c[:, self.omap]
            g_nodes = np.maximum(
                bsel[:, :, None], arr_mul(fsel[:, :, None], self.part[None, :, :])
            )
            g_close = np.maximum(bsel, arr_mul(fsel, self.edge_part[None, :]))
        else:
            fp = arr_pow(c, self.pf)
            cell = arr_mul(fp, self.cell_size[None, :])
            if self.head:
                run = np.cumsum(cell, axis=1)
                around = np.concatenate([zeros, run[:, :-1]], axis=1)
                total = run[:, -1]
            else:
                run = np.cumsum(cell[:, ::-1], axis=1)[:, ::-1]
                around = np.concatenate([run[:, 1:], zeros], axis=1)
                total = run[:, 0]
            bsel = around[:, self.omap]
            fsel = fp[:, self.omap]
            g_nodes = bsel[:, :, None] + arr_mul(
                fsel[:, :, None], self.part[None, :, :]
            )
            g_close = bsel + arr_mul(fsel, self.edge_part[None, :])

        if self.q_inf:
            # Cesaro inner norms grow in t and Copson ones shrink, so
            # the sup over a piece is bounded by the value at its
            # closing edge times the weight sup there.
            if self.head:
                ext = np.concatenate([g_nodes, g_close[:, :, None]], axis=2)
            else:
                ext = np.concatenate([g_close[:, :, None], g_nodes], axis=2)
            if not self.p_inf:
                ext = arr_pow(ext, 1.0 / self.pf)
                tot_norm = arr_pow(total, 1.0 / self.pf)
            else:
                tot_norm = total
            if self.out_sups.shape[0]:
                best = arr_mul(ext, self.out_sups[None, :, :])
                best = best.reshape(s, -1).max(axis=1)
            else:
                best = np.zeros(s)
            far = arr_mul(tot_norm, np.full(s, self.far_sup))
            return np.maximum(best, far)

        power = self.qf if self.p_inf else self.qf / self.pf
        gq = arr_pow(g_nodes, power)
        main = arr_mul(gq, self.node_w[None, :, :]).sum(axis=(1, 2))
        far = arr_mul(arr_pow(total, power), np.full(s, self.far_mass))
        return arr_pow(main + far, 1.0 / self.qf)


@lru_cache(maxsize=128)
def _compiled_cached(space, grid: Grid) -> _CompiledNorm:
    return _CompiledNorm(space, grid)


def _compiled(space, grid: Grid) -> _CompiledNorm:
    try:
        return _compiled_cached(space, grid)
    except TypeError:
        return _CompiledNorm(space, grid)


def space_norm(f: StepFunction, space) -> float:
    """||f|| in a Lebesgue, Cesaro or Copson space for piecewise-constant f.

    Cell masses of the weights are exact.  The outer layer of the
    Cesaro/Copson norm is integrated on Gauss-Legendre nodes
    renormalised to the exact per-cell mass (strongly varying cells are
    pre-split), and the half-lines beyond the grid window, where f is
    constant or zero, are closed with running-norm tails.  Exponent
    infinity uses cell-wise suprema.  Values are extended reals.
    """
    return _compiled(space, f.grid)(f.array())


def _ascend(f0, r0, src, tgt, share, left, rng):
    """Cyclic coordinate ascent with multiplicative moves.

    Only strict ratio improvements are accepted; step sizes shrink when
    a full pass stalls.  Zero coordinates restart from a small multiple
    of the current maximum so spikes can grow support."""
    f = f0.copy()
    top = f.max()
    if top > 0.0:
        f = f / top
    best = r0
    allowance = min(int(share), left[0])

    def ratio(vec):
        s = float(src(vec))
        t = float(tgt(vec))
        if not (math.isfinite(s) and s > 0.0):
            return -math.inf
        return t / s

    n = f.size
    for step in _STEPS:
        while allowance > 1:
            improved = False
            for j in rng.permutation(n):
                if allowance <= 1:
                    break
                old = f[j]
                base = old if old > 0.0 else 1e-10 * f.max()
                kept = False
                for cand in (base * step, base / step):
                    f[j] = cand
                    r = ratio(f)
                    allowance -= 2
                    left[0] -= 2
                    if r > best:
                        best = r
                        improved = True
                        kept = True
                        break
                    if allowance <= 1:
                        break
                if not kept:
                    f[j] = old
                if math.isinf(best):
                    return f, best
            if not improved:
                break
        if allowance <= 1:
            break
    return f, best


def maximize_ratio(
    source,
    target,
    grid: Optional[Grid] = None,
    budget: int = _DEFAULT_BUDGET,
    seed: int = 0,
) -> OracleResult:
    """Largest ||f||_target / ||f||_source found over step functions.

    Multi-start search: a spike in every cell, head and tail indicator
    ramps of dyadic length, power-law profiles on the cell midpoints,
    and random log-normal profiles, all scored in vectorised batches.
    The best few starts are then polished by coordinate ascent.

    ``budget`` caps the number of norm evaluations and is checked
    between batches, so each start family completes atomically.  The
    result is deterministic for a fixed seed and is a lower bound for
    the true embedding constant, up to quadrature error.  Raises
    DegenerateRatioError when every candidate has source norm zero or
    infinity.
    """
    if grid is None:
        grid = default_grid()
    src = _compiled(source, grid)
    tgt = _compiled(target, grid)
    n = grid.n
    rng = np.random.default_rng(seed)
    left = [int(budget)]

    pool_f: list = []
    pool_r: list = []

    def score(mat: np.ndarray) -> None:
        if mat.shape[0] == 0 or (left[0] <= 0 and pool_r):
            return
        sn = src.batch(mat)
        tn = tgt.batch(mat)
        left[0] -= 2 * mat.shape[0]
        valid = np.isfinite(sn) & (sn > 0.0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            r = np.where(valid, tn / sn, -np.inf)
        r = np.where(valid & np.isinf(tn), np.inf, r)
        for j in np.argsort(-r, kind="stable")[:_TOP_STARTS]:
            if r[j] > -np.inf:
                pool_f.append(mat[j].copy())
                pool_r.append(float(r[j]))

    chunk = max(16, _CHUNK_FLOATS // max(1, n))
    for a in range(0, n, chunk):
        b = min(n, a + chunk)
        mat = np.zeros((b - a, n))
        mat[np.arange(b - a), np.arange(a, b)] = 1.0
        score(mat)

    lens = []
    length = 1
    while length < n:
        lens.append(length)
        length *= 2
    lens.append(n)
    ramps = np.zeros((2 * len(lens), n))
    for i, length in enumerate(lens):
        ramps[2 * i, :length] = 1.0
        ramps[2 * i + 1, n - length :] = 1.0
    score(ramps)

    mids = grid.mids
    prof = np.empty((len(_POWER_PROFILES), n))
    for i, expo in enumerate(_POWER_PROFILES):
        row = mids**expo
        prof[i] = row / row.max()
    score(prof)

    score(np.exp(rng.standard_normal((_RANDOM_STARTS, n))))

    if not pool_r:
        raise DegenerateRatioError(
            "every candidate step function has source norm zero or infinity"
        )

    order = np.argsort(-np.asarray(pool_r), kind="stable")
    best_i = int(order[0])
    best_f = pool_f[best_i].copy()
    best_r = pool_r[best_i]
    if math.isinf(best_r) or left[0] <= 1:
        return OracleResult(best_r, StepFunction(grid, tuple(best_f)), ((n, best_r),))

    tops = [int(j) for j in order[:_TOP_STARTS]]
    share = max(2, left[0] // len(tops))
    for j in tops:
        f1, r1 = _ascend(pool_f[j], pool_r[j], src, tgt, share, left, rng)
        if r1 > best_r:
            best_r, best_f = r1, f1
        if math.isinf(best_r) or left[0] <= 1:
            break

    return OracleResult(
        float(best_r), StepFunction(grid, tuple(best_f)), ((n, float(best_r)),)
    )


def refinement_study(
    source,
    target,
    grids: Sequence[Grid],
    budget: int = _DEFAULT_BUDGET,
    seed: int = 0,
) -> RefinementVerdict:
    """Run the ratio search on successively finer grids.

    The verdict is "diverging" when the per-level best ratios at least
    double across each of the last two refinements, else "bounded" with
    a geometric-extrapolation estimate from the tail of the best-so-far
    trace.  ``budget`` applies per level.
    """
    ns = [g.n for g in grids]
    if not ns:
        raise ValueError("refinement study needs at least one grid")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("grids must be strictly refining")

    raws = []
    trace = []
    high = -math.inf
    for g in grids:
        res = maximize_ratio(source, target, g, budget=budget, seed=seed)
        raws.append(res.best_ratio)
        high = max(high, res.best_ratio)
        trace.append((g.n, high))

    if len(raws) >= 3 and all(
        later >= 2.0 * earlier > 0.0
        for earlier, later in ((raws[-3], raws[-2]), (raws[-2], raws[-1]))
    ):
        return RefinementVerdict("diverging", None, tuple(trace))

    vals = [v for _, v in trace]
    est = vals[-1]
    if len(vals) >= 3 and all(map(math.isfinite, vals[-3:])):
        e1 = vals[-1] - vals[-2]
        e0 = vals[-2] - vals[-3]
        if e0 > 0.0 and 0.0 < e1 < 0.9 * e0:
            rho = e1 / e0
            est = vals[-1] + e1 * rho / (1.0 - rho)
    return RefinementVerdict("bounded", float(est), tuple(trace))
