"""Upper and lower bounds on the concavity deficit, and the tail estimates they use.

Each bound is returned as a :class:`BoundReport` carrying its value, the
preconditions that were checked and the inputs that produced it.  A lower
bound whose preconditions fail is reported with value 0 (always valid) and
marked non-binding; the formula's raw value stays in ``extras``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .density import (
    ComponentDensity,
    GaussianProfile,
    MixtureModel,
    RadialProfile,
    SeparationCertificate,
    affine_frame,
    gaussian_tail,
    mixture_complement,
    verify_separation,
)
from .divergence import DensityPair, total_variation
from .errors import InputError, InternalConsistencyError
from .numerics import (
    Estimate,
    McSpec,
    QuadratureSpec,
    integrate_1d,
    integrate_box,
    mc_expectation,
    unit_ball_volume,
)

BOUND_KINDS = ("upper_deficit", "lower_deficit", "conditional_entropy_upper", "tail", "gap")
# packing constant c <= 3 in the well-spaced sum bound
PACKING_CONSTANT = 3.0


@dataclass(frozen=True)
class BoundReport:
    value: float
    kind: str
    preconditions: tuple[tuple[str, bool], ...] = ()
    inputs: dict[str, Any] = field(default_factory=dict)
    error: float = 0.0
    extras: dict[str, Any] = field(default_factory=dict)
    clamped: bool = False

    def __post_init__(self):
        if self.kind not in BOUND_KINDS:
            raise InputError(f"unknown bound kind {self.kind!r}")
        if self.binding and not math.isfinite(self.value):
            raise InternalConsistencyError(f"{self.kind} bound is not finite: {self.value!r}")

    @property
    def binding(self) -> bool:
        """True when every precondition of the bound was verified."""
        return all(ok for _, ok in self.preconditions)

    @property
    def vacuous(self) -> bool:
        return self.clamped

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "error": self.error,
            "binding": self.binding,
            "clamped": self.clamped,
            "preconditions": [{"label": k, "met": v} for k, v in self.preconditions],
            "inputs": self.inputs,
            "extras": self.extras,
        }


# ---------------------------------------------------------------------------
# tails


def log_concave_tail(t: float, dim: int, sigma: float, anchor: tuple[float, float] | None = None) -> float:
    """Tail bound for a log-concave |W| from the Lovasz-Simonovits extrapolation.

    P(|W| > r t0) <= p0^((r+1)/2) for r >= 1.  The default anchor is the
    Chebyshev point t0 = sqrt(2 d sigma^2), p0 = 1/2, which yields
    2^(-1/2) exp(-c t) with c = ln 2 / (2 t0).  Below t0 nothing better than
    1 is available.  ``sigma`` is the per-coordinate standard deviation.
    """
    if t < 0:
        raise InputError("t must be non-negative")
    if anchor is None:
        t0, p0 = math.sqrt(2.0 * dim * sigma**2), 0.5
    else:
        t0, p0 = anchor
        if not (t0 > 0 and 0.0 <= p0 <= 0.5):
            raise InputError("anchor needs t0 > 0 and p0 <= 1/2")
    if t < t0:
        return 1.0
    if anchor is None:
        c = math.log(2.0) / (2.0 * t0)
        return 2.0**-0.5 * math.exp(-c * t)
    return p0 ** ((t / t0 + 1.0) / 2.0)


@dataclass(frozen=True)
class TailModel:
    """Tail function P(|W| > t) of a base vector W.

    ``gaussian`` uses the exact chi tail of N(0, sigma^2 I).  The log-concave
    kinds use the attached profile's exact tail when one is given; a generic
    log-concave model without a profile falls back to :func:`log_concave_tail`
    with per-coordinate standard deviation ``sigma``.
    """

    kind: str
    dim: int
    sigma: float = 1.0
    profile: RadialProfile | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "log_concave_generic", "strongly_log_concave"):
            raise InputError(f"unknown tail kind {self.kind!r}")
        if self.dim < 1 or not self.sigma > 0:
            raise InputError("TailModel needs dim >= 1 and sigma > 0")

    def tail(self, t: float) -> float:
        if t < 0:
            raise InputError("t must be non-negative")
        if self.profile is not None:
            return min(max(self.profile.tail(t), 0.0), 1.0)
        if self.kind == "gaussian" or self.kind == "strongly_log_concave":
            return gaussian_tail(self.dim, t / self.sigma)
        return log_concave_tail(t, self.dim, self.sigma)

    @classmethod
    def from_profile(cls, profile: RadialProfile) -> "TailModel":
        if isinstance(profile, GaussianProfile):
            return cls("gaussian", profile.dim, profile.sigma)
        return cls("log_concave_generic", profile.dim, 1.0, profile)


def gaussian_tail_bound_check(model: TailModel, t: float) -> bool:
    """Whether the exact Gaussian tail sits below the log-concave bound at t."""
    return model.tail(t) <= log_concave_tail(t, model.dim, model.sigma)


def strong_lc_tail_dominates(model: TailModel, t: float) -> bool:
    """P(|W| > t) <= P(|Z| > t) for W declared strongly log-concave.

    A False result means the declared model contradicts the comparison, so the
    standard Gaussian tail must not be substituted for it.
    """
    if model.kind != "strongly_log_concave":
        raise InputError("tail dominance needs a strongly_log_concave model")
    return model.tail(t) <= gaussian_tail(model.dim, t) + 1e-15


# ---------------------------------------------------------------------------
# upper bound


def deficit_upper_tv(model: MixtureModel, spec=None) -> BoundReport:
    """min(T_f H(p), H(p)) with T_f the largest TV distance to a mixture complement."""
    hp = model.weight_entropy()
    inputs = {"n": model.n, "weights": model.weights.tolist(), "H_p": hp}
    if model.n == 1:
        return BoundReport(0.0, "upper_deficit", (("n >= 2", True),), inputs,
                           extras={"T_f": 0.0, "note": "single component has zero deficit"})
    tvs = [total_variation(DensityPair(model.components[j], mixture_complement(model, j)), spec)
           for j in range(model.n)]
    tf = max(e.value for e in tvs)
    err = max(e.error for e in tvs)
    tv_bound = tf * hp
    return BoundReport(
        min(tv_bound, hp),
        "upper_deficit",
        (("n >= 2", True),),
        inputs,
        error=err * hp,
        extras={"T_f": tf, "T_f_error": err, "tv_per_component": [e.value for e in tvs],
                "tv_bound": tv_bound, "trivial_bound": hp},
    )


# ---------------------------------------------------------------------------
# lower bound machinery


def well_spaced_sum_bound(profile: RadialProfile, lam: float, m: int, dim: int) -> float:
    """M (||phi||_inf + (3/lambda)^d / omega_d), bounding phi summed over well-spaced points."""
    if not lam > 0:
        raise InputError("lambda must be positive")
    return m * (profile.sup + (PACKING_CONSTANT / lam) ** dim / unit_ball_volume(dim))


def counting_bound(lam: float, eps: float, tau: float, m: int, w_norm: float, dim: int) -> float:
    """M ((lambda + eps + 2 tau |w|) / lambda)^d."""
    if not (lam > 0 and eps > 0):
        raise InputError("lambda and eps must be positive")
    if w_norm < 0:
        raise InputError("|w| must be non-negative")
    return m * ((lam + eps + 2.0 * tau * w_norm) / lam) ** dim


def k_phi(profile: RadialProfile, dim: int, lam: float, tau: float, m: int,
          eps: float | None = None, spec: QuadratureSpec | None = None) -> float:
    """The constant K(phi) entering the lower bound.

    ln[tau^d M (||phi||_inf + (3/eps)^d / omega_d)] P(|W| > lambda)^(1/2)
      + d (int_{|w| > lambda} phi(w) ln^2[1 + (eps tau + tau^2 |w|)/lambda] dw)^(1/2),

    with the radial integral reduced to one dimension.  ``eps`` defaults to
    lambda.
    """
    if not lam > 0:
        raise InputError("lambda must be positive")
    if not tau >= 1 or m < 1:
        raise InputError("need tau >= 1 and M >= 1")
    if profile.dim != dim:
        raise InputError("profile dimension does not match d")
    eps = lam if eps is None else eps
    if not eps > 0:
        raise InputError("eps must be positive")
    tail = profile.tail(lam)
    head = math.log(tau**dim * m * (profile.sup + (PACKING_CONSTANT / eps) ** dim / unit_ball_volume(dim)))

    def integrand(r):
        return profile.radial_density(r) * np.log1p((eps * tau + tau**2 * r) / lam) ** 2

    e = profile.edge()
    pts = [e] if e is not None and e > lam else []
    if e is not None and e <= lam:
        radial = 0.0
    else:
        radial = integrate_1d(integrand, lam, math.inf, spec, pts).value
    return head * math.sqrt(tail) + dim * math.sqrt(max(radial, 0.0))


def c_tilde(tail: TailModel, h_base: float, k: float, lam: float, tau: float, m: int, dim: int,
            verified: bool = True) -> BoundReport:
    """C(W) = (M-1)(1 - T(lambda tau)) + T(lambda)(M + h(W)) + T(lambda)^(1/2)(sqrt d + K).

    An upper bound on H(X|Z) under a verified separation certificate.
    """
    t_lam = tail.tail(lam)
    value = (m - 1) * (1.0 - tail.tail(lam * tau)) + t_lam * (m + h_base) + math.sqrt(t_lam) * (math.sqrt(dim) + k)
    return BoundReport(
        value,
        "conditional_entropy_upper",
        (("separation certificate verified", bool(verified)),),
        {"lambda": lam, "M": m, "tau": tau, "d": dim, "h_W": h_base, "K": k, "tail_kind": tail.kind},
        extras={"T_lambda": t_lam},
    )


def deficit_lower(model: MixtureModel, cert: SeparationCertificate, spec=None) -> BoundReport:
    """H(p) - C(W), clamped below at 0.

    ``cert`` is checked with :func:`~mixent.density.verify_separation`; lambda
    is measured in the common base frame (coordinate units for translated
    copies of one density).
    """
    hp = model.weight_entropy()
    inputs = {"H_p": hp, **cert.to_dict()}
    if model.n == 1:
        return BoundReport(0.0, "lower_deficit", (("n >= 2", True),), inputs,
                           extras={"raw": 0.0}, clamped=True)
    frame = affine_frame(model)
    verified = verify_separation(model, cert)
    base = frame.profile
    d = model.dim
    k = k_phi(base, d, cert.lam, cert.tau, cert.m, spec=spec if isinstance(spec, QuadratureSpec) else None)
    ct = c_tilde(TailModel.from_profile(base), base.entropy(), k, cert.lam, cert.tau, cert.m, d, verified)
    raw = hp - ct.value
    pre = (("separation certificate verified", verified), ("log-concave base", bool(base.log_concave)))
    ok = all(v for _, v in pre)
    value = max(raw, 0.0) if ok else 0.0
    return BoundReport(
        value,
        "lower_deficit",
        pre,
        {**inputs, "frame_tau": frame.tau, "d": d},
        extras={"raw": raw, "C_tilde": ct.value, "K": k, "h_W": base.entropy(), "T_lambda": ct.extras["T_lambda"]},
        clamped=raw < 0.0,
    )


# ---------------------------------------------------------------------------
# varentropy


def varentropy(c: ComponentDensity, spec=None) -> Estimate:
    """Var[-ln phi(X)] for X ~ phi; at most d for log-concave phi."""
    h = c.entropy()

    if isinstance(spec, McSpec) or c.dim > 2:
        est = mc_expectation(c.sample, lambda x: (-c.logpdf(x) - h) ** 2,
                             spec if isinstance(spec, McSpec) else McSpec())
    else:
        lo, hi = c.extent()

        def integrand(x):
            lp = c.logpdf(x)
            live = np.isfinite(lp)
            lp = np.where(live, lp, 0.0)
            return np.where(live, np.exp(lp) * (lp + h) ** 2, 0.0)

        est = integrate_box(integrand, list(zip(lo.tolist(), hi.tolist())), spec, c.breakpoints())
    log_concave = not isinstance(c, ComponentDensity) or getattr(getattr(c, "profile", None), "log_concave", True)
    if log_concave and est.value > c.dim + 5.0 * est.error + 1e-9:
        raise InternalConsistencyError(f"varentropy {est.value} exceeds d = {c.dim} for a log-concave density")
    return est


# ---------------------------------------------------------------------------
# Gaussian tail integrals


def _check_tail_args(sigma: float, lam: float, allow_zero: bool = False):
    if not sigma > 0:
        raise InputError("sigma must be positive")
    if lam < 0 or (lam == 0 and not allow_zero):
        raise InputError("lambda must be positive")


def gaussian_entropy_tail(dim: int, sigma: float, lam: float) -> float:
    """Bound (d/2 ln(2 pi e^2 sigma^2) + lambda^2/sigma^2) P(|W| > lambda), d >= 2.

    Dominates -int_{|w|>lambda} phi_sigma ln phi_sigma.
    """
    if dim < 2:
        raise InputError("use gaussian_entropy_tail_1d for d = 1")
    _check_tail_args(sigma, lam)
    p = gaussian_tail(dim, lam / sigma)
    return (0.5 * dim * math.log(2.0 * math.pi * math.e**2 * sigma**2) + (lam / sigma) ** 2) * p


def gaussian_entropy_tail_1d(sigma: float, lam: float) -> float:
    """Bound (lambda^2/sigma^2 + 2 + ln(sqrt(2 pi) sigma)) P(|W| > lambda) in one dimension."""
    _check_tail_args(sigma, lam)
    p = gaussian_tail(1, lam / sigma)
    return ((lam / sigma) ** 2 + 2.0 + math.log(math.sqrt(2.0 * math.pi) * sigma)) * p


def gaussian_norm_tail(dim: int, sigma: float, lam: float) -> float:
    """Bound (lambda + d sigma) P(|W| > lambda) on int_{|w|>lambda} |w| phi_sigma(w) dw.

    Also valid for d = 1, where the inverse Mills ratio is at most u + 1.
    """
    if dim < 1:
        raise InputError("d must be >= 1")
    _check_tail_args(sigma, lam, allow_zero=True)
    return (lam + dim * sigma) * gaussian_tail(dim, lam / sigma)


def radial_tail_integral(profile: RadialProfile, lam: float, weight, spec: QuadratureSpec | None = None) -> float:
    """int_{|w| > lambda} weight(|w|, phi(w)) phi(w) dw by radial quadrature."""

    def integrand(r):
        return profile.radial_density(r) * weight(r, profile.log_psi(r))

    return integrate_1d(integrand, lam, math.inf, spec).value
