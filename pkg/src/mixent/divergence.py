"""f-divergences between densities, with the skewed family S_t and chi^2_t.

Every routine takes a :class:`DensityPair` and an evaluation spec.  A
:class:`~mixent.numerics.QuadratureSpec` selects deterministic quadrature over
the union of the two bounding boxes (d <= 2); a
:class:`~mixent.numerics.McSpec` selects Monte Carlo with samples drawn from
the midpoint mixture (mu + nu)/2, which dominates both arguments.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .density import ComponentDensity, IsotropicGaussian, MixtureModel
from .errors import InputError
from .numerics import (
    Estimate,
    McSpec,
    QuadratureSpec,
    integrate_box,
    integrate_nested,
    mc_expectation,
    std_normal_cdf,
)

# densities below this are treated as underflow, not as genuine zeros
TINY = 1e-300
LOG_TINY = math.log(TINY)
INFINITE = "divergence-infinite"

Density = ComponentDensity | MixtureModel
Spec = QuadratureSpec | McSpec | None


# ---------------------------------------------------------------------------
# generators


def _grid_pairs() -> tuple[np.ndarray, np.ndarray]:
    g = np.geomspace(1e-2, 10.0, 41)
    x, y = np.meshgrid(g, g, indexing="ij")
    return x.ravel(), y.ravel()


@dataclass(frozen=True, eq=False)
class ConvexGenerator:
    """Convex f on (0, inf) with f(1) = 0, defining D_f(mu||nu) = int v f(u/v).

    ``f`` must accept numpy arrays.  ``f_inf`` is lim f(x)/x as x -> inf, used
    where nu vanishes but mu does not; leave it as inf for the usual
    undominated-pair convention.
    """

    f: Callable[[np.ndarray], np.ndarray]
    label: str = "f"
    f_inf: float = math.inf
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        if not self.check:
            return
        one = float(np.asarray(self.f(np.array([1.0])))[0])
        if not abs(one) <= 1e-12:
            raise InputError(f"generator {self.label!r} has f(1) = {one!r}, not 0")
        x, y = _grid_pairs()
        with np.errstate(all="ignore"):
            fx, fy, fm = (np.asarray(self.f(v), dtype=float) for v in (x, y, 0.5 * (x + y)))
        if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(fy))):
            raise InputError(f"generator {self.label!r} is not finite on (0, 10]")
        if np.any(fm > 0.5 * (fx + fy) + 1e-9):
            raise InputError(f"generator {self.label!r} fails the midpoint convexity check")

    def __call__(self, x):
        return np.asarray(self.f(np.asarray(x, dtype=float)), dtype=float)


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


KL_GENERATOR = ConvexGenerator(_xlogx, "kl")
PEARSON_GENERATOR = ConvexGenerator(lambda x: (x - 1.0) ** 2, "pearson")
TV_GENERATOR = ConvexGenerator(lambda x: 0.5 * np.abs(x - 1.0), "tv", f_inf=0.5)


def skewed_generator(g: ConvexGenerator, r: float, t: float) -> ConvexGenerator:
    """The generator x -> (t x + 1 - t) f((r x + 1 - r) / (t x + 1 - t)).

    Its divergence from mu to nu equals D_f(r mu + (1-r) nu || t mu + (1-t) nu).
    """
    if not (0.0 <= r <= 1.0 and 0.0 <= t <= 1.0):
        raise InputError("r and t must lie in [0, 1]")

    def fhat(x):
        x = np.asarray(x, dtype=float)
        den = t * x + (1.0 - t)
        return den * g((r * x + (1.0 - r)) / den)

    if t == 0.0:
        f_inf = r * g.f_inf if r > 0 else 0.0
    else:
        f_inf = t * float(g(np.array([r / t]))[0])
    out = ConvexGenerator(fhat, f"{g.label}[r={r:g},t={t:g}]", f_inf=f_inf, check=False)
    # finiteness on (0, inf) is a precondition; probe a wide grid
    probe = np.geomspace(1e-8, 1e8, 161)
    with np.errstate(all="ignore"):
        vals = out(probe)
    if not np.all(np.isfinite(vals)):
        raise InputError(f"skewed generator with r={r}, t={t} is not finite on (0, inf)")
    return ConvexGenerator(fhat, out.label, f_inf=f_inf)


# ---------------------------------------------------------------------------
# pairs and the shared integration backend


def _unwrap(p: Density) -> Density:
    if isinstance(p, MixtureModel) and p.n == 1:
        return p.components[0]
    return p


@dataclass(frozen=True, eq=False)
class DensityPair:
    mu: Density
    nu: Density

    def __post_init__(self):
        for p in (self.mu, self.nu):
            if not isinstance(p, (ComponentDensity, MixtureModel)):
                raise InputError(f"unsupported density type {type(p).__name__}")
        if self.mu.dim != self.nu.dim:
            raise InputError("mu and nu must share a dimension")

    @property
    def dim(self) -> int:
        return self.mu.dim

    def swapped(self) -> "DensityPair":
        return DensityPair(self.nu, self.mu)

    def box(self) -> list[tuple[float, float]]:
        lo1, hi1 = self.mu.extent()
        lo2, hi2 = self.nu.extent()
        return list(zip(np.minimum(lo1, lo2).tolist(), np.maximum(hi1, hi2).tolist()))

    def breakpoints(self) -> list[list[float]]:
        a, b = self.mu.breakpoints(), self.nu.breakpoints()
        return [sorted(set(x) | set(y)) for x, y in zip(a, b)]

    def sample_midpoint(self, rng: np.random.Generator, n: int) -> np.ndarray:
        pick = rng.random(n) < 0.5
        out = np.empty((n, self.dim))
        k = int(pick.sum())
        if k:
            out[pick] = self.mu.sample(rng, k)
        if n - k:
            out[~pick] = self.nu.sample(rng, n - k)
        return out


Kernel = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def _resolve(spec: Spec, dim: int) -> QuadratureSpec | McSpec:
    if isinstance(spec, McSpec):
        return spec
    if dim > 2:
        return McSpec()
    return spec if isinstance(spec, QuadratureSpec) else QuadratureSpec()


def integrate_pair(pair: DensityPair, kernel: Kernel, spec: Spec = None, kinked: bool = False) -> Estimate:
    """Integrate kernel(log u, log v) over R^d.

    The kernel returns (contribution, infinite_mask).  Points where both
    densities underflow are dropped; any flagged point makes the result +inf.
    ``kinked`` marks kernels with a crease along u = v; in two dimensions
    these use iterated 1-D quadrature instead of the tensor-product rule.
    """
    resolved = _resolve(spec, pair.dim)
    hit_inf = False

    def values(x):
        nonlocal hit_inf
        lu = pair.mu.logpdf(x)
        lv = pair.nu.logpdf(x)
        live = (lu > LOG_TINY) | (lv > LOG_TINY)
        with np.errstate(all="ignore"):
            val, inf = kernel(lu, lv)
        if np.any(inf & live):
            hit_inf = True
        return np.where(live & ~inf, val, 0.0), lu, lv

    if isinstance(resolved, QuadratureSpec):
        rule = integrate_nested if kinked and pair.dim == 2 else integrate_box
        est = rule(lambda x: values(x)[0], pair.box(), resolved, pair.breakpoints())
        if _grows_outward(lambda x: values(x)[0], pair, resolved):
            hit_inf = True
    else:
        def weighted(x):
            val, lu, lv = values(x)
            lm = np.logaddexp(lu, lv) - math.log(2.0)
            return val * np.exp(-lm)

        est = mc_expectation(pair.sample_midpoint, weighted, resolved)
    if hit_inf:
        return Estimate(math.inf, 0.0, est.method, est.seed, est.samples, est.flags + (INFINITE,))
    return est


def _grows_outward(fn, pair: DensityPair, spec: QuadratureSpec) -> bool:
    """True if the integrand is non-negligible at the box edge and still growing past it.

    The box only drops tails that decay; an integrand that grows outward
    (Pearson chi^2 against a lighter-tailed reference, say) diverges.
    """
    lo, hi = (np.asarray(a, float) for a in zip(*pair.box()))
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    anchors = [mid] + [np.asarray(c, float) for c in itertools.product(*pair.breakpoints())][:64]
    inner, outer = [], []
    for k in range(pair.dim):
        for side in (-1.0, 1.0):
            for a in anchors:
                x = a.copy()
                x[k] = mid[k] + side * half[k]
                inner.append(x.copy())
                x[k] = mid[k] + side * 1.5 * half[k]
                outer.append(x)
    fi, fo = np.abs(fn(np.array(inner))), np.abs(fn(np.array(outer)))
    floor = max(spec.abs_tol, TINY) / float(np.prod(hi - lo))
    return bool(np.any((fo > fi) & (fo > floor)))


def _log_blend(lu, lv, t: float):
    """log(t u + (1-t) v) from the two log densities."""
    with np.errstate(divide="ignore"):
        return np.logaddexp(np.log(t) + lu, np.log1p(-t) + lv)


def _rel(la, lb, a):
    """a * (log a - log b), with 0 log 0 = 0."""
    return np.where(a > 0, a * (la - lb), 0.0)


def _check_t(t: float):
    if not 0.0 <= t <= 1.0 or math.isnan(t):
        raise InputError(f"t must lie in [0, 1], got {t!r}")


# ---------------------------------------------------------------------------
# divergences


def kl(pair: DensityPair, spec: Spec = None) -> Estimate:
    """Relative entropy D(mu || nu) in nats."""

    def kernel(lu, lv):
        u = np.exp(lu)
        return _rel(lu, lv, u), (lv == -np.inf) & (lu > -np.inf)

    return integrate_pair(pair, kernel, spec)


def _gaussian_tv(a: IsotropicGaussian, b: IsotropicGaussian) -> float:
    delta = float(np.linalg.norm(a.mean - b.mean))
    return 2.0 * std_normal_cdf(delta / (2.0 * a.sigma)) - 1.0


def total_variation(pair: DensityPair, spec: Spec = None) -> Estimate:
    """Half the L1 distance.  Equal-scale Gaussian pairs use the closed form."""
    mu, nu = _unwrap(pair.mu), _unwrap(pair.nu)
    if isinstance(mu, IsotropicGaussian) and isinstance(nu, IsotropicGaussian) and mu.sigma == nu.sigma:
        return Estimate(_gaussian_tv(mu, nu), 4.0 * float(np.finfo(float).eps), "closed-form")

    def kernel(lu, lv):
        return 0.5 * np.abs(np.exp(lu) - np.exp(lv)), np.zeros(lu.shape, bool)

    est = integrate_pair(pair, kernel, spec, kinked=True)
    return Estimate(min(max(est.value, 0.0), 1.0), est.error, est.method, est.seed, est.samples, est.flags)


def skew_divergence(pair: DensityPair, t: float, spec: Spec = None) -> Estimate:
    """S_t(mu || nu) = D(mu || t mu + (1-t) nu)."""
    _check_t(t)
    if t == 1.0:
        return Estimate(0.0, 0.0, "exact")
    if t == 0.0:
        return kl(pair, spec)

    def kernel(lu, lv):
        u = np.exp(lu)
        return _rel(lu, _log_blend(lu, lv, t), u), np.zeros(lu.shape, bool)

    return integrate_pair(pair, kernel, spec)


def skew_chi2(pair: DensityPair, t: float, spec: Spec = None) -> Estimate:
    """chi^2_t(mu; nu) = int (u - v)^2 / (t u + (1-t) v).

    t = 0 is Pearson's chi^2 (denominator v), t = 1 is Neyman's (denominator u).
    """
    _check_t(t)

    def kernel(lu, lv):
        u, v = np.exp(lu), np.exp(lv)
        if t == 0.0:
            den, lden = v, lv
        elif t == 1.0:
            den, lden = u, lu
        else:
            lden = _log_blend(lu, lv, t)
            den = np.exp(lden)
        diff2 = (u - v) ** 2
        inf = (lden == -np.inf) & (diff2 > 0)
        val = np.where(den > 0, diff2 / np.where(den > 0, den, 1.0), 0.0)
        return val, inf

    return integrate_pair(pair, kernel, spec)


def jsd(pair: DensityPair, spec: Spec = None) -> Estimate:
    """Jensen-Shannon divergence, the mean of S_1/2 in both directions."""

    def kernel(lu, lv):
        lm = np.logaddexp(lu, lv) - math.log(2.0)
        val = 0.5 * (_rel(lu, lm, np.exp(lu)) + _rel(lv, lm, np.exp(lv)))
        return val, np.zeros(lu.shape, bool)

    return integrate_pair(pair, kernel, spec)


def generalized_jsd(pair: DensityPair, alpha: Sequence[float], w: Sequence[float], spec: Spec = None) -> Estimate:
    """The (alpha, w)-Jensen-Shannon divergence.

    Sum_i w_i D((1-a_i) p + a_i q || (1-abar) p + abar q) with abar = Sum w_i a_i.
    """
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    if alpha.size == 0 or alpha.size != w.size:
        raise InputError("alpha and w must be non-empty and of equal length")
    if np.any((alpha < 0) | (alpha > 1)):
        raise InputError("alpha entries must lie in [0, 1]")
    if np.any(w <= 0) or abs(math.fsum(w) - 1.0) > 1e-12:
        raise InputError("w must be a strictly positive probability vector")
    abar = float(np.dot(w, alpha))

    def kernel(lu, lv):
        lb = _log_blend(lu, lv, 1.0 - abar)
        total = np.zeros(lu.shape)
        for ai, wi in zip(alpha, w):
            la = _log_blend(lu, lv, 1.0 - ai)
            total += wi * _rel(la, lb, np.exp(la))
        return total, np.zeros(lu.shape, bool)

    return integrate_pair(pair, kernel, spec)


def f_divergence(pair: DensityPair, g: ConvexGenerator, spec: Spec = None) -> Estimate:
    """D_f(mu || nu) = int v f(u / v), with u f_inf contributed where v = 0."""

    def kernel(lu, lv):
        u, v = np.exp(lu), np.exp(lv)
        pos = v > 0
        ratio = np.exp(np.where(pos, lu - lv, 0.0))
        val = np.where(pos, v * g(ratio), u * (g.f_inf if math.isfinite(g.f_inf) else 0.0))
        inf = (~pos) & (u > 0) & (not math.isfinite(g.f_inf))
        return val, inf

    return integrate_pair(pair, kernel, spec)


def reverse_pinsker_constant(beta: float) -> float:
    """(1 - beta) / ln(1/beta): TV >= this times D(mu||gamma) when dmu/dgamma <= 1/beta."""
    if not 0.0 < beta < 1.0:
        raise InputError("beta must lie in (0, 1)")
    return (1.0 - beta) / math.log(1.0 / beta)
