"""Independent high-accuracy estimates of mixture entropy, deficit and information.

Quadrature runs over the union of the component bounding boxes (each
component padded by :data:`~mixent.density.DOMAIN_PAD` scale units) and is
used for d <= 2.  Otherwise, or when a :class:`~mixent.numerics.McSpec` is
passed, samples are drawn hierarchically from the mixture itself: a label
i ~ p, then z ~ f_i.
"""

from __future__ import annotations

import math

import numpy as np

from .density import MixtureModel
from .divergence import DensityPair, kl
from .errors import InternalConsistencyError
from .numerics import Estimate, McSpec, QuadratureSpec, integrate_box, logsumexp, mc_expectation

OracleResult = Estimate
Spec = QuadratureSpec | McSpec | None

# standard errors allowed between two Monte Carlo paths
MC_AGREEMENT_SIGMAS = 5.0


def _resolve(spec: Spec, dim: int) -> QuadratureSpec | McSpec:
    if isinstance(spec, McSpec):
        return spec
    if dim > 2:
        return McSpec()
    return spec if isinstance(spec, QuadratureSpec) else QuadratureSpec()


def _box(model: MixtureModel):
    lo, hi = model.extent()
    return list(zip(lo.tolist(), hi.tolist()))


def _terms(model: MixtureModel, x: np.ndarray):
    """(log p_i + log f_i, log f) at the points x."""
    lj = np.log(model.weights)[:, None] + model.component_logpdfs(x)
    return lj, logsumexp(lj, axis=0)


def _plogp(lp):
    """p log p from log p, with 0 log 0 = 0."""
    return np.where(np.isfinite(lp), np.exp(lp) * np.where(np.isfinite(lp), lp, 0.0), 0.0)


def _integrate(model: MixtureModel, quad_fn, mc_fn, spec: Spec) -> Estimate:
    """Integrate quad_fn(x) over R^d, or average mc_fn(x, labels) under the mixture."""
    resolved = _resolve(spec, model.dim)
    if isinstance(resolved, QuadratureSpec):
        return integrate_box(quad_fn, _box(model), resolved, model.breakpoints())

    def sampler(rng, n):
        return model.sample(rng, n, labels=True)

    return mc_expectation(sampler, lambda s: mc_fn(*s), resolved)


def mixture_entropy(model: MixtureModel, spec: Spec = None) -> OracleResult:
    """h(f) = -int f ln f in nats."""

    def quad(x):
        return -_plogp(model.logpdf(x))

    def mc(x, labels):
        return -model.logpdf(x)

    return _integrate(model, quad, mc, spec)


def _deficit_divergence_form(model: MixtureModel, spec: Spec) -> Estimate:
    """Sum_i p_i D(f_i || f) as a single integral."""

    def quad(x):
        lc = model.component_logpdfs(x)
        lf = model.logpdf(x)
        live = np.isfinite(lc)
        lc = np.where(live, lc, 0.0)
        terms = model.weights[:, None] * np.exp(lc) * (lc - lf)
        return np.sum(np.where(live, terms, 0.0), axis=0)

    def mc(x, labels):
        lc = model.component_logpdfs(x)
        return lc[labels, np.arange(x.shape[0])] - model.logpdf(x)

    return _integrate(model, quad, mc, spec)


def _posterior_entropy(model: MixtureModel, spec: Spec) -> Estimate:
    """H(X|Z) = -int Sum_i p_i f_i ln(p_i f_i / f) directly."""

    def quad(x):
        lj, lf = _terms(model, x)
        live = np.isfinite(lj)
        return -np.sum(np.where(live, np.exp(lj) * (np.where(live, lj, 0.0) - lf), 0.0), axis=0)

    def mc(x, labels):
        lj, lf = _terms(model, x)
        live = np.isfinite(lj)
        post = np.where(live, lj - lf, 0.0)
        return -np.sum(np.where(live, np.exp(post) * post, 0.0), axis=0)

    return _integrate(model, quad, mc, spec)


def _agree(a: Estimate, b: Estimate, scale: float, spec: Spec, what: str):
    gap = abs(a.value - b.value)
    if a.method == "mc" or b.method == "mc":
        allowed = MC_AGREEMENT_SIGMAS * math.hypot(a.error, b.error)
    else:
        q = spec if isinstance(spec, QuadratureSpec) else QuadratureSpec()
        allowed = a.error + b.error + 2.0 * max(q.abs_tol, q.rel_tol * scale) + 256.0 * np.finfo(float).eps * scale
    if not gap <= allowed:
        raise InternalConsistencyError(
            f"{what}: paths disagree by {gap:.3e} (allowed {allowed:.3e}; values {a.value!r}, {b.value!r})"
        )


def concavity_deficit(model: MixtureModel, spec: Spec = None) -> OracleResult:
    """h(f) - Sum p_i h(f_i), returned from the better conditioned form Sum p_i D(f_i || f).

    The entropy-difference form is computed too, and the two must agree
    within their combined error.
    """
    if model.n == 1:
        return Estimate(0.0, 0.0, "exact")
    primary = _deficit_divergence_form(model, spec)
    h = mixture_entropy(model, spec)
    hc = [c.entropy() for c in model.components]
    mean_hc = math.fsum(p * v for p, v in zip(model.weights, hc))
    diff = Estimate(h.value - mean_hc, h.error, h.method, h.seed, h.samples)
    if primary.method == "mc":
        # the two MC paths share samples; compare through the per-sample difference
        diff = _difference_path(model, spec, mean_hc)
    _agree(primary, diff, abs(h.value) + abs(mean_hc), spec, "concavity deficit")
    return primary


def _difference_path(model: MixtureModel, spec: Spec, mean_hc: float) -> Estimate:
    def sampler(rng, n):
        return model.sample(rng, n, labels=True)

    resolved = _resolve(spec, model.dim)
    return mc_expectation(sampler, lambda s: -model.logpdf(s[0]) - mean_hc, resolved)


def conditional_entropy_x_given_z(model: MixtureModel, spec: Spec = None) -> OracleResult:
    """H(X|Z) for X ~ p and Z | X=i ~ f_i.

    Evaluated directly as the mean posterior entropy, which is nonnegative
    pointwise, and checked against H(p) minus the deficit.
    """
    if model.n == 1:
        return Estimate(0.0, 0.0, "exact")
    direct = _posterior_entropy(model, spec)
    hp = model.weight_entropy()
    deficit = concavity_deficit(model, spec)
    via = Estimate(hp - deficit.value, deficit.error, deficit.method, deficit.seed, deficit.samples)
    _agree(direct, via, hp, spec, "conditional entropy")
    return direct


def mutual_information(model: MixtureModel, spec: Spec = None) -> OracleResult:
    """I(X; Z) = Sum p_i D(f_i || f), equal to the concavity deficit."""
    return concavity_deficit(model, spec)


def compensation_terms(model: MixtureModel, g, spec: Spec = None) -> tuple[Estimate, Estimate, Estimate]:
    """(Sum p_i D(f_i||g), Sum p_i D(f_i||f), D(f||g)) for a reference density g."""
    left = [kl(DensityPair(c, g), spec) for c in model.components]
    lhs = Estimate(
        math.fsum(p * e.value for p, e in zip(model.weights, left)),
        math.fsum(p * e.error for p, e in zip(model.weights, left)),
        left[0].method,
    )
    return lhs, _deficit_divergence_form(model, spec), kl(DensityPair(model, g), spec)
