"""Special functions, adaptive quadrature and reproducible Monte Carlo.

Everything here works in nats and on numpy arrays.  Integrands handed to
:func:`integrate_1d` and :func:`integrate_box` must be vectorized: they receive
an array of abscissae and return an array of the same leading length.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, NonConvergenceError, NumericsError, PoisonedSampleError

_EPS = np.finfo(float).eps
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 2**20

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise InputError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise InputError("max_subdivisions must be >= 1")


@dataclass(frozen=True)
class McSpec:
    """Monte Carlo budget.

    ``chunks`` only controls how the fixed sample blocks are grouped into
    tasks; the returned estimate does not depend on it.
    """

    seed: int = 0
    samples: int = 200_000
    chunks: int = 1

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise InputError("seed must be a 64-bit unsigned integer")
        if self.samples < 1 or self.chunks < 1:
            raise InputError("samples and chunks must be >= 1")


@dataclass(frozen=True)
class Estimate:
    """A numeric value with its error budget.

    ``error`` is a quadrature error bound or a Monte Carlo standard error,
    depending on ``method``.
    """

    value: float
    error: float
    method: str
    seed: int | None = None
    samples: int | None = None
    flags: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.error >= 0:
            raise NumericsError(f"negative or NaN error estimate: {self.error!r}")

    def to_dict(self) -> dict:
        out = {"value": self.value, "error": self.error, "method": self.method}
        if self.seed is not None:
            out["seed"] = self.seed
            out["samples"] = self.samples
        if self.flags:
            out["flags"] = list(self.flags)
        return out


# ---------------------------------------------------------------------------
# special functions


def std_normal_cdf(t: float) -> float:
    """Standard normal distribution function."""
    return 0.5 * math.erfc(-t / _SQRT2)


def std_normal_two_sided_tail(u: float) -> float:
    """P(|Z| > u) for a standard normal Z."""
    if u < 0:
        raise InputError("u must be non-negative")
    return math.erfc(u / _SQRT2)


def _lower_gamma_series(s: float, x: float) -> float:
    # regularized P(s, x) by its power series; used for x < s + 1
    term = 1.0 / s
    total = term
    a = s
    for _ in range(10_000):
        a += 1.0
        term *= x / a
        total += term
        if abs(term) < abs(total) * _EPS * 0.5:
            break
    else:
        raise NonConvergenceError("incomplete gamma series did not converge")
    return total * math.exp(-x + s * math.log(x) - math.lgamma(s))


def _upper_gamma_fraction(s: float, x: float) -> float:
    # regularized Q(s, x) by its continued fraction (modified Lentz); x >= s + 1
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise NonConvergenceError("incomplete gamma continued fraction did not converge")
    return math.exp(-x + s * math.log(x) - math.lgamma(s)) * h


def reg_upper_gamma(s: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(s, x)."""
    if not s > 0:
        raise InputError("shape s must be positive")
    if x < 0:
        raise InputError("x must be non-negative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < s + 1.0:
        return max(0.0, 1.0 - _lower_gamma_series(s, x))
    return _upper_gamma_fraction(s, x)


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    if d < 1:
        raise InputError("dimension must be >= 1")
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise InputError("probability must lie in [0, 1]")
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log(p) - (1.0 - p) * math.log1p(-p)


def shannon_entropy(p: Sequence[float]) -> float:
    return 0.0 - math.fsum(q * math.log(q) for q in p if q > 0)


def logsumexp(a: np.ndarray, axis: int = 0) -> np.ndarray:
    """log(sum(exp(a))) along ``axis``; rows that are all -inf give -inf."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


# ---------------------------------------------------------------------------
# Gauss-Kronrod quadrature

_XGK = np.array([
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0,
])
_WGK = np.array([
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208703453000, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
_WG10 = np.array([
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])

GK_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
GK_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
_G = np.zeros(11)
_G[1::2] = _WG10
GAUSS_WEIGHTS = np.concatenate([_G[:-1], _G[::-1]])


def _quadpack_error(diff: np.ndarray, resasc: np.ndarray, resabs: np.ndarray) -> np.ndarray:
    err = np.abs(diff)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where((resasc > 0) & (err > 0), scaled, err)
    return np.maximum(err, 50.0 * _EPS * resabs)


def _checked(values, shape) -> np.ndarray:
    f = np.asarray(values, dtype=float).reshape(shape)
    if not np.all(np.isfinite(f)):
        raise NumericsError("integrand returned a non-finite value at an interior node")
    return f


def _gk_intervals(fn, lo: np.ndarray, hi: np.ndarray):
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = center[:, None] + half[:, None] * GK_NODES[None, :]
    f = _checked(fn(x.ravel()), x.shape)
    k = f @ GK_WEIGHTS
    g = f @ GAUSS_WEIGHTS
    resabs = np.abs(f) @ GK_WEIGHTS
    resasc = np.abs(f - 0.5 * k[:, None]) @ GK_WEIGHTS
    scale = np.abs(half)
    err = _quadpack_error(half * (k - g), scale * resasc, scale * resabs)
    return half * k, err, scale * resabs


def _select_for_split(err: np.ndarray, target: float) -> np.ndarray:
    # split the largest-error intervals until the untouched ones hold at most half the budget
    order = np.argsort(err)
    keep = np.cumsum(err[order]) <= 0.5 * target
    mask = np.ones(err.shape, dtype=bool)
    mask[order[keep]] = False
    return mask


def _transform(fn, a: float, b: float):
    """Map an integral over (a, b), possibly infinite, onto a finite range."""
    if math.isfinite(a) and math.isfinite(b):
        return fn, a, b, (lambda x: x)
    if math.isfinite(a):
        # x = a + t / (1 - t), t in [0, 1)
        def g(t):
            s = 1.0 - t
            return fn(a + t / s) / (s * s)

        return g, 0.0, 1.0, (lambda x: (x - a) / (1.0 + (x - a)))
    if math.isfinite(b):
        def g(t):
            s = 1.0 - t
            return fn(b - t / s) / (s * s)

        return g, 0.0, 1.0, (lambda x: (b - x) / (1.0 + (b - x)))

    # x = t / (1 - t^2), t in (-1, 1)
    def g(t):
        s = 1.0 - t * t
        return fn(t / s) * (1.0 + t * t) / (s * s)

    def inv(x):
        if x == 0:
            return 0.0
        return (math.sqrt(1.0 + 4.0 * x * x) - 1.0) / (2.0 * x)

    return g, -1.0, 1.0, inv


def integrate_1d(
    fn: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    spec: QuadratureSpec | None = None,
    points: Sequence[float] = (),
) -> Estimate:
    """Globally adaptive 21-point Gauss-Kronrod integration of ``fn`` over (a, b).

    Infinite limits are handled by the substitution x = a + t/(1-t) (or its
    mirror / two-sided analogue).  ``points`` are interior break points such as
    discontinuities or sharp peaks.
    """
    spec = spec or QuadratureSpec()
    if a == b:
        return Estimate(0.0, 0.0, "quadrature")
    if b < a:
        est = integrate_1d(fn, b, a, spec, points)
        return Estimate(-est.value, est.error, est.method, flags=est.flags)
    g, ta, tb, to_t = _transform(fn, a, b)
    cuts = sorted({to_t(p) for p in points if a < p < b})
    edges = np.array([ta, *cuts, tb], dtype=float)
    lo, hi = edges[:-1], edges[1:]
    vals, errs, absv = _gk_intervals(g, lo, hi)
    while True:
        total = math.fsum(vals)
        err = float(np.sum(errs))
        target = max(spec.abs_tol, spec.rel_tol * abs(total))
        if err <= target:
            return Estimate(total, err, "quadrature")
        floor = float(np.sum(50.0 * _EPS * absv))
        if err <= 2.0 * floor:
            return Estimate(total, err, "quadrature", flags=("roundoff-limited",))
        split = _select_for_split(errs, target)
        if len(lo) + int(split.sum()) > spec.max_subdivisions:
            raise NonConvergenceError(
                "integrate_1d exhausted max_subdivisions",
                best=Estimate(total, err, "quadrature", flags=("non-converged",)),
            )
        mid = 0.5 * (lo[split] + hi[split])
        if np.any((mid <= lo[split]) | (mid >= hi[split])):
            return Estimate(total, err, "quadrature", flags=("roundoff-limited",))
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        nv, ne, na = _gk_intervals(g, new_lo, new_hi)
        keep = ~split
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        vals = np.concatenate([vals[keep], nv])
        errs = np.concatenate([errs[keep], ne])
        absv = np.concatenate([absv[keep], na])


_W2K = np.outer(GK_WEIGHTS, GK_WEIGHTS).ravel()
_W2G = np.outer(GAUSS_WEIGHTS, GAUSS_WEIGHTS).ravel()
_NX, _NY = (a.ravel() for a in np.meshgrid(GK_NODES, GK_NODES, indexing="ij"))


def _gk_rectangles(fn, x0, x1, y0, y1):
    hx = 0.5 * (x1 - x0)
    hy = 0.5 * (y1 - y0)
    px = (0.5 * (x0 + x1))[:, None] + hx[:, None] * _NX[None, :]
    py = (0.5 * (y0 + y1))[:, None] + hy[:, None] * _NY[None, :]
    pts = np.stack([px.ravel(), py.ravel()], axis=1)
    f = _checked(fn(pts), px.shape)
    area = hx * hy
    k = f @ _W2K
    g = f @ _W2G
    resabs = np.abs(f) @ _W2K
    resasc = np.abs(f - 0.25 * k[:, None]) @ _W2K
    err = _quadpack_error(area * (k - g), area * resasc, area * resabs)
    return area * k, err, area * resabs


def integrate_box(
    fn: Callable[[np.ndarray], np.ndarray],
    box: Sequence[tuple[float, float]],
    spec: QuadratureSpec | None = None,
    points: Sequence[Sequence[float]] = (),
) -> Estimate:
    """Integrate ``fn`` over a finite box in one or two dimensions.

    ``fn`` receives points as an array of shape (m, d).  In two dimensions the
    rule is the tensor product of the 21-point Kronrod rule, refined by
    bisecting the longer side of the worst rectangles.
    """
    spec = spec or QuadratureSpec()
    d = len(box)
    if d == 1:
        (a, b), = box
        bps = points[0] if points else ()
        return integrate_1d(lambda x: fn(x[:, None]), a, b, spec, bps)
    if d != 2:
        raise InputError("integrate_box supports one or two dimensions only")
    (ax, bx), (ay, by) = box
    xs = np.array(sorted({ax, bx, *(p for p in (points[0] if points else ()) if ax < p < bx)}))
    ys = np.array(sorted({ay, by, *(p for p in (points[1] if len(points) > 1 else ()) if ay < p < by)}))
    gx0, gy0 = np.meshgrid(xs[:-1], ys[:-1], indexing="ij")
    gx1, gy1 = np.meshgrid(xs[1:], ys[1:], indexing="ij")
    x0, x1, y0, y1 = (g.ravel() for g in (gx0, gx1, gy0, gy1))
    vals, errs, absv = _gk_rectangles(fn, x0, x1, y0, y1)
    while True:
        total = math.fsum(vals)
        err = float(np.sum(errs))
        target = max(spec.abs_tol, spec.rel_tol * abs(total))
        if err <= target:
            return Estimate(total, err, "quadrature")
        if err <= 2.0 * float(np.sum(50.0 * _EPS * absv)):
            return Estimate(total, err, "quadrature", flags=("roundoff-limited",))
        split = _select_for_split(errs, target)
        if len(x0) + int(split.sum()) > spec.max_subdivisions:
            raise NonConvergenceError(
                "integrate_box exhausted max_subdivisions",
                best=Estimate(total, err, "quadrature", flags=("non-converged",)),
            )
        sx0, sx1, sy0, sy1 = x0[split], x1[split], y0[split], y1[split]
        wide = (sx1 - sx0) >= (sy1 - sy0)
        mx = 0.5 * (sx0 + sx1)
        my = 0.5 * (sy0 + sy1)
        ax0 = sx0
        ax1 = np.where(wide, mx, sx1)
        ay0 = sy0
        ay1 = np.where(wide, sy1, my)
        bx0 = np.where(wide, mx, sx0)
        bx1 = sx1
        by0 = np.where(wide, sy0, my)
        by1 = sy1
        nx0 = np.concatenate([ax0, bx0])
        nx1 = np.concatenate([ax1, bx1])
        ny0 = np.concatenate([ay0, by0])
        ny1 = np.concatenate([ay1, by1])
        if np.any((nx1 <= nx0) | (ny1 <= ny0)):
            return Estimate(total, err, "quadrature", flags=("roundoff-limited",))
        nv, ne, na = _gk_rectangles(fn, nx0, nx1, ny0, ny1)
        keep = ~split
        x0 = np.concatenate([x0[keep], nx0])
        x1 = np.concatenate([x1[keep], nx1])
        y0 = np.concatenate([y0[keep], ny0])
        y1 = np.concatenate([y1[keep], ny1])
        vals = np.concatenate([vals[keep], nv])
        errs = np.concatenate([errs[keep], ne])
        absv = np.concatenate([absv[keep], na])


INNER_CUTS = 7
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _inner_batch(fn, xs: np.ndarray, ay: float, by: float, spec: QuadratureSpec, yp: Sequence[float]):
    """Adaptive integrals of fn(x_k, .) over (ay, by) for every x_k at once.

    All intervals of all lines share one refinement loop, so each round costs a
    single vectorized call of ``fn``.  Returns per-line values and errors.
    """
    k = xs.shape[0]
    # irregular starting cuts keep the inner nodes off the outer ones, so a
    # crease along x = y cannot hide in the blind end gap of a Kronrod rule
    cuts = ay + (by - ay) * np.sort(np.mod(np.arange(1, INNER_CUTS + 1) * _GOLDEN, 1.0))
    edges = np.array(sorted({ay, by, *cuts.tolist(), *(p for p in yp if ay < p < by)}), dtype=float)
    owner = np.repeat(np.arange(k), edges.size - 1)
    lo = np.tile(edges[:-1], k)
    hi = np.tile(edges[1:], k)

    def line_fn(owner_of):
        def g(y):
            return fn(np.column_stack([np.repeat(xs[owner_of], GK_NODES.size), y]))
        return g

    vals, errs, absv = _gk_intervals(line_fn(owner), lo, hi)
    while True:
        total = np.bincount(owner, vals, k)
        err = np.bincount(owner, errs, k)
        floor = 2.0 * np.bincount(owner, 50.0 * _EPS * absv, k)
        target = np.maximum(spec.abs_tol, spec.rel_tol * np.abs(total))
        open_ = (err > target) & (err > floor)
        if not np.any(open_):
            return total, err
        count = np.bincount(owner, minlength=k)
        split = open_[owner] & (errs > 0.5 * target[owner] / count[owner])
        if lo.size + int(split.sum()) > spec.max_subdivisions:
            raise NonConvergenceError(
                "integrate_nested exhausted max_subdivisions",
                best=Estimate(math.fsum(total), float(err.sum()), "quadrature", flags=("non-converged",)),
            )
        mid = 0.5 * (lo[split] + hi[split])
        if np.any((mid <= lo[split]) | (mid >= hi[split])):
            return total, err
        so = owner[split]
        new_owner = np.concatenate([so, so])
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        nv, ne, na = _gk_intervals(line_fn(new_owner), new_lo, new_hi)
        keep = ~split
        owner = np.concatenate([owner[keep], new_owner])
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        vals = np.concatenate([vals[keep], nv])
        errs = np.concatenate([errs[keep], ne])
        absv = np.concatenate([absv[keep], na])


def integrate_nested(
    fn: Callable[[np.ndarray], np.ndarray],
    box: Sequence[tuple[float, float]],
    spec: QuadratureSpec | None = None,
    points: Sequence[Sequence[float]] = (),
) -> Estimate:
    """Iterated adaptive integration over a finite two-dimensional box.

    Every outer node gets its own adaptive integral in y.  This copes with
    integrands that crease along a curve (such as |u - v|), where the
    tensor-product rule of :func:`integrate_box` refines slowly.  Inner
    tolerances are set so the inner errors, integrated over x, use at most
    half the requested budget; the reported error adds their integral bound.
    """
    spec = spec or QuadratureSpec()
    if len(box) != 2:
        raise InputError("integrate_nested needs a two-dimensional box")
    (ax, bx), (ay, by) = box
    xp = points[0] if points else ()
    yp = points[1] if len(points) > 1 else ()
    width = bx - ax
    inner_spec = QuadratureSpec(0.5 * spec.abs_tol / width, 0.5 * spec.rel_tol, spec.max_subdivisions)
    inner_err = 0.0

    def outer(xs):
        nonlocal inner_err
        vals, errs = _inner_batch(fn, np.asarray(xs, dtype=float), ay, by, inner_spec, yp)
        inner_err = max(inner_err, float(errs.max()))
        return vals

    outer_spec = QuadratureSpec(0.5 * spec.abs_tol, 0.5 * spec.rel_tol, spec.max_subdivisions)
    est = integrate_1d(outer, ax, bx, outer_spec, xp)
    return Estimate(est.value, est.error + width * inner_err, "quadrature", flags=est.flags)


# ---------------------------------------------------------------------------
# Monte Carlo

MC_BLOCK = 4096


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based generator for one fixed block of samples."""
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(seq))


def _block_stats(sampler, fn, seed, block, size, offset):
    samples = sampler(block_rng(seed, block), size)
    v = np.asarray(fn(samples), dtype=float).reshape(-1)
    if v.shape[0] != size:
        raise NumericsError("integrand must return one value per sample")
    bad = np.flatnonzero(np.isnan(v))
    if bad.size:
        idx = offset + int(bad[0])
        raise PoisonedSampleError(f"integrand returned NaN on sample {idx}", idx)
    mean = float(np.mean(v))
    m2 = float(np.sum((v - mean) ** 2))
    return size, mean, m2


def mc_expectation(
    sampler: Callable[[np.random.Generator, int], object],
    fn: Callable[[object], np.ndarray],
    spec: McSpec | None = None,
    workers: int | None = None,
) -> Estimate:
    """Sample mean of ``fn`` under ``sampler`` with its standard error.

    Samples are drawn in fixed blocks of :data:`MC_BLOCK`, each from its own
    Philox stream keyed by (seed, block index), and block statistics are merged
    in block order.  The result is therefore bit-identical for a given
    (seed, samples) however the blocks are chunked or scheduled.  Chunks run
    on ``workers`` threads, one per chunk unless stated otherwise.
    """
    spec = spec or McSpec()
    workers = spec.chunks if workers is None else workers
    n_blocks = -(-spec.samples // MC_BLOCK)
    sizes = [MC_BLOCK] * n_blocks
    sizes[-1] = spec.samples - MC_BLOCK * (n_blocks - 1)
    groups = [list(r) for r in np.array_split(np.arange(n_blocks), min(spec.chunks, n_blocks))]

    def run(group):
        return [_block_stats(sampler, fn, spec.seed, b, sizes[b], b * MC_BLOCK) for b in group]

    if workers and workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, groups))
    else:
        parts = [run(g) for g in groups]

    n, mean, m2 = 0, 0.0, 0.0
    for part in parts:
        for nb, mb, m2b in part:
            # Chan et al. pairwise update, applied in block order
            tot = n + nb
            delta = mb - mean
            mean += delta * nb / tot
            m2 += m2b + delta * delta * n * nb / tot
            n = tot
    se = math.sqrt(m2 / (n - 1) / n) if n > 1 else 0.0
    return Estimate(mean, se, "mc", seed=spec.seed, samples=spec.samples)
