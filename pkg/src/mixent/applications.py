"""Calculators for hypothesis testing, discrete-input Gaussian channels,
bit-erasure energetics and the Gaussian log-Sobolev deficit.

All quantities are in nats; the noise scale enters only through lambda/sigma
or a/sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .bounds import BoundReport, deficit_upper_tv
from .density import (
    AffineMap,
    GaussianProfile,
    IsotropicGaussian,
    MixtureModel,
    Pushforward,
    RadialProfile,
    SeparationCertificate,
    gaussian_tail,
    verify_separation,
)
from .divergence import DensityPair, kl
from .errors import InputError, InternalConsistencyError
from .numerics import Estimate, QuadratureSpec, binary_entropy, integrate_box, unit_ball_volume
from .oracle import conditional_entropy_x_given_z, mutual_information

SQRT_9PI_2 = math.sqrt(9.0 * math.pi / 2.0)


@dataclass(frozen=True, eq=False)
class ChannelSpec:
    """Z = X + W with X on a finite constellation and W from a translation family."""

    constellation: np.ndarray
    prior: np.ndarray | None = None
    noise: RadialProfile = field(default_factory=lambda: GaussianProfile(1, 1.0))

    def __post_init__(self):
        pts = np.asarray(self.constellation, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        n, d = pts.shape
        if n < 1:
            raise InputError("constellation must be non-empty")
        if d != self.noise.dim:
            raise InputError("constellation and noise dimensions differ")
        if n > 1 and len({tuple(p) for p in pts.tolist()}) < n:
            raise InputError("constellation points must be distinct")
        prior = np.full(n, 1.0 / n) if self.prior is None else np.asarray(self.prior, dtype=float)
        if prior.shape != (n,) or np.any(prior <= 0) or abs(math.fsum(prior) - 1.0) > 1e-12:
            raise InputError("prior must be a strictly positive probability vector over the points")
        object.__setattr__(self, "constellation", pts)
        object.__setattr__(self, "prior", prior)

    @property
    def lam(self) -> float:
        """Half the minimum pairwise distance."""
        pts = self.constellation
        if len(pts) < 2:
            return math.inf
        return 0.5 * min(float(np.linalg.norm(a - b)) for a, b in combinations(pts, 2))

    def model(self) -> MixtureModel:
        if isinstance(self.noise, GaussianProfile):
            comps = tuple(IsotropicGaussian(p.size, p, self.noise.sigma) for p in self.constellation)
        else:
            eye = np.eye(self.noise.dim)
            comps = tuple(Pushforward(self.noise, AffineMap(eye, p)) for p in self.constellation)
        return MixtureModel(self.prior, comps)

    def certificate(self) -> SeparationCertificate:
        return SeparationCertificate(self.lam, 1, 1.0)


def uniform_grid_channel(n: int, lam: float, sigma: float) -> ChannelSpec:
    """Uniform input on {2 lam, 4 lam, ..., 2 n lam} with N(0, sigma^2) noise."""
    if n < 1 or not lam > 0 or not sigma > 0:
        raise InputError("need n >= 1, lam > 0 and sigma > 0")
    return ChannelSpec(2.0 * lam * np.arange(1, n + 1), noise=GaussianProfile(1, sigma))


@dataclass(frozen=True)
class EnergeticsSpec:
    """Gaussian bistable well with minima at +-a and thermal noise sigma."""

    a: float
    sigma: float
    p0: float = 0.5
    p1: float = 0.0
    kbt: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.sigma > 0 and self.kbt > 0):
            raise InputError("a, sigma and kBT must be positive")
        if not (0.0 <= self.p0 <= 1.0 and 0.0 <= self.p1 <= 1.0):
            raise InputError("p0 and p1 must lie in [0, 1]")


# ---------------------------------------------------------------------------
# hypothesis testing


def fano_rhs(p_error: float, support_size: int) -> float:
    """H(e) + P(e) ln(#X - 1)."""
    if support_size < 2:
        raise InputError("support size must be at least 2")
    if not 0.0 <= p_error <= 1.0:
        raise InputError("error probability must lie in [0, 1]")
    extra = p_error * math.log(support_size - 1) if p_error > 0 else 0.0
    return binary_entropy(p_error) + extra


def uniform_grid_bayes_error(n: int, sigma: float, spacing: float = 1.0) -> float:
    """Bayes error for a uniform prior on an evenly spaced grid under N(0, sigma^2) noise.

    Interior points err with probability P(|Z| >= s/(2 sigma)), the two end
    points with half that, giving P(|Z| >= s/(2 sigma)) (1 - 1/N).
    """
    if n < 2:
        raise InputError("N must be at least 2")
    if not sigma > 0 or not spacing > 0:
        raise InputError("sigma and spacing must be positive")
    return gaussian_tail(1, spacing / (2.0 * sigma)) * (1.0 - 1.0 / n)


def tv_fano_estimator_bound(model: MixtureModel, spec=None) -> BoundReport:
    """(1 - T_f) H(p), a floor under the Fano right-hand side of any estimator."""
    up = deficit_upper_tv(model, spec)
    tf = up.extras["T_f"]
    hp = model.weight_entropy()
    return BoundReport((1.0 - tf) * hp, "gap", up.preconditions, {"n": model.n, "H_p": hp},
                       error=up.error, extras={"T_f": tf})


# ---------------------------------------------------------------------------
# Gaussian channels


def _agwn_log_constant(u: float) -> float:
    """ln[3 e^(u^2 + 3) (1 + sqrt(9 pi / 2) / u)]."""
    return math.log(3.0) + u * u + 3.0 + math.log1p(SQRT_9PI_2 / u)


def agwn_1d_condentropy_bound(lam: float, sigma: float) -> BoundReport:
    """H(X | X + W) <= ln[3 e^((lam/sigma)^2 + 3)(1 + sqrt(9 pi/2) sigma/lam)] P(|Z| > lam/sigma).

    Holds for any input whose points are at least 2 lam apart; no dependence
    on the number of points.
    """
    if not (lam > 0 and sigma > 0):
        raise InputError("lambda and sigma must be positive")
    u = lam / sigma
    tail = gaussian_tail(1, u)
    const = _agwn_log_constant(u)
    return BoundReport(const * tail, "conditional_entropy_upper", (("lambda, sigma > 0", True),),
                       {"lambda": lam, "sigma": sigma}, extras={"log_constant": const, "tail": tail})


def j_constant(lam: float, sigma: float, dim: int, m: int = 1, tau: float = 1.0) -> float:
    """J_d for a Gaussian base, using the one-dimensional form when d = 1."""
    if dim < 1:
        raise InputError("d must be >= 1")
    u = lam / sigma
    if dim == 1:
        return (u * u + m + 2 + math.log(tau * m)
                + math.log(1.0 + tau + tau**2 + tau**2 * sigma / lam**2)
                + math.log1p(SQRT_9PI_2 * sigma / lam))
    return (u * u + m + dim * math.log(tau * math.e) + math.log(m)
            + dim * math.log(1.0 + tau + tau**2 + tau**2 * dim * sigma / lam)
            + math.log1p((3.0 * math.sqrt(2.0 * math.pi) * sigma / lam) ** dim / unit_ball_volume(dim)))


def gaussian_hx_given_y_bound(cert: SeparationCertificate, sigma: float, dim: int,
                              model: MixtureModel | None = None) -> BoundReport:
    """(M - 1) P(|W| <= tau lam) + J_d P(|W| > lam) for W ~ N(0, sigma^2 I_d).

    When ``model`` is given the certificate is verified against it.
    """
    if dim < 1:
        raise InputError("d must be >= 1")
    if not sigma > 0:
        raise InputError("sigma must be positive")
    lam, m, tau = cert.lam, cert.m, cert.tau
    j = j_constant(lam, sigma, dim, m, tau)
    inner = 1.0 - gaussian_tail(dim, tau * lam / sigma)
    outer = gaussian_tail(dim, lam / sigma)
    verified = True if model is None else verify_separation(model, cert)
    pre = (("separation certificate verified", verified),)
    if model is not None:
        pre += (("Gaussian components of scale sigma",
                 all(isinstance(c, IsotropicGaussian) and c.sigma == sigma for c in model.components)),)
    return BoundReport((m - 1) * inner + j * outer, "conditional_entropy_upper", pre,
                       {"sigma": sigma, "d": dim, **cert.to_dict()}, extras={"J": j, "tail": outer})


def ozarow_wyner_bound(n: int, lam: float, sigma: float = 1.0) -> BoundReport:
    """Ozarow-Wyner gap H(X) - I(X; Z) <= p_o H(X) + h(p_o) for N evenly spaced points.

    K = (u^2/2)(1 - 1/N^2) with u = lam/sigma and p_o = e^(-K)/sqrt(pi K).
    The second Ozarow-Wyner form, C - ln(pi e/6)/2 - ln((1+alpha^2)/alpha^2)/2
    with alpha = N e^(-C), is reported in ``extras``.
    """
    if n < 2:
        raise InputError("N must be at least 2")
    if not (lam > 0 and sigma > 0):
        raise InputError("lambda and sigma must be positive")
    u = lam / sigma
    k = 0.5 * u * u * (1.0 - 1.0 / n**2)
    if not k > 0:
        raise InputError("K must be positive")
    hx = math.log(n)
    p_o = math.exp(-k) / math.sqrt(math.pi * k)
    raw = p_o * hx + binary_entropy(p_o) if p_o <= 1.0 else math.inf
    c = 0.5 * math.log1p(u * u * (n * n - 1) / 3.0)
    alpha = n * math.exp(-c)
    mi2 = c - 0.5 * math.log(math.pi * math.e / 6.0) - 0.5 * math.log((1.0 + alpha**2) / alpha**2)
    return BoundReport(
        min(raw, hx),
        "gap",
        (("N >= 2", True), ("p_o <= 1", p_o <= 1.0)),
        {"N": n, "lambda": lam, "sigma": sigma},
        extras={"K": k, "p_o": p_o, "raw_gap": raw, "H_X": hx, "C": c, "alpha": alpha,
                "second_form_mi_lower": mi2, "second_form_gap": hx - mi2},
        clamped=raw > hx,
    )


@dataclass(frozen=True)
class ChannelRow:
    parameter: float
    oracle: Estimate | None
    grid_free_bound: float
    fano_bound: float
    ozwy_bound: float

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "oracle": None if self.oracle is None else self.oracle.value,
            "oracle_error": None if self.oracle is None else self.oracle.error,
            "paper_bound": self.grid_free_bound,
            "fano_bound": self.fano_bound,
            "ozwy_bound": self.ozwy_bound,
        }


# the oracle sums every component at every node; beyond this it is skipped
ORACLE_MAX_POINTS = 200


def channel_comparison(n: int, lam: float, sigma: float, parameter: float | None = None,
                       spec=None, with_oracle: bool = True) -> ChannelRow:
    """Upper bounds on H(X|Z) for a uniform grid of N points spaced 2 lam apart.

    Fano's bound uses the exact Bayes error; the grid-free bound is the
    N-independent one-dimensional result; Ozarow-Wyner contributes its gap.
    """
    oracle = None
    if with_oracle and n <= ORACLE_MAX_POINTS:
        oracle = conditional_entropy_x_given_z(uniform_grid_channel(n, lam, sigma).model(), spec)
    return ChannelRow(
        float(n if parameter is None else parameter),
        oracle,
        agwn_1d_condentropy_bound(lam, sigma).value,
        fano_rhs(uniform_grid_bayes_error(n, sigma, 2.0 * lam), n),
        ozarow_wyner_bound(n, lam, sigma).value,
    )


# ---------------------------------------------------------------------------
# energetics


@dataclass(frozen=True)
class LandauerBand:
    center: float
    lower_deviation: float
    upper_deviation: float
    c_lower: float
    c_upper: float
    tail: float
    inputs: dict

    @property
    def lower(self) -> float:
        return self.center + self.lower_deviation

    @property
    def upper(self) -> float:
        return self.center + self.upper_deviation

    @property
    def width(self) -> float:
        return self.upper_deviation - self.lower_deviation

    def to_dict(self) -> dict:
        return {"center": self.center, "lower": self.lower, "upper": self.upper,
                "lower_deviation": self.lower_deviation, "upper_deviation": self.upper_deviation,
                "C_L": self.c_lower, "C_U": self.c_upper, "tail": self.tail, "inputs": self.inputs}


def landauer_bounds(spec: EnergeticsSpec) -> LandauerBand:
    """Band on the mean heat of an optimal erasure, in units of kBT times nats.

    C_L = -kBT (L - H(p1)) and C_U = kBT (L - H(p0)) with
    L = ln[3 e^((a/sigma)^2 + 3)(1 + sqrt(9 pi/2) sigma/a)]; the deviations
    from kBT (H(p0) - H(p1)) are C_L P and C_U P, P = P(|Z| > a/sigma).
    """
    u = spec.a / spec.sigma
    big_l = _agwn_log_constant(u)
    h0, h1 = binary_entropy(spec.p0), binary_entropy(spec.p1)
    c_lo = -spec.kbt * (big_l - h1)
    c_up = spec.kbt * (big_l - h0)
    if spec.p0 == 0.5 and spec.p1 == 0.0:
        # random-bit reset: the upper constant is kBT ln[(3/2) e^(u^2+3)(...)]
        c_up_tilde = spec.kbt * (math.log(1.5) + u * u + 3.0 + math.log1p(SQRT_9PI_2 / u))
        if not math.isclose(c_up, c_up_tilde, rel_tol=1e-12, abs_tol=1e-12):
            raise InternalConsistencyError("random-bit constant disagrees with the general form")
    p = gaussian_tail(1, u)
    return LandauerBand(spec.kbt * (h0 - h1), c_lo * p, c_up * p, c_lo, c_up, p,
                        {"a": spec.a, "sigma": spec.sigma, "p0": spec.p0, "p1": spec.p1, "kBT": spec.kbt})


def _well_model(spec: EnergeticsSpec, p: float) -> MixtureModel:
    return MixtureModel([p, 1.0 - p], (IsotropicGaussian(1, [spec.a], spec.sigma),
                                       IsotropicGaussian(1, [-spec.a], spec.sigma)))


def landauer_oracle(spec: EnergeticsSpec, qspec=None) -> Estimate:
    """kBT (I(Z_p0; X_p0) - I(Z_p1; X_p1)) by quadrature; a deterministic bit carries no information."""
    parts = []
    for p in (spec.p0, spec.p1):
        parts.append(Estimate(0.0, 0.0, "exact") if p in (0.0, 1.0) else mutual_information(_well_model(spec, p), qspec))
    return Estimate(spec.kbt * (parts[0].value - parts[1].value), spec.kbt * (parts[0].error + parts[1].error),
                    "quadrature")


# ---------------------------------------------------------------------------
# log-Sobolev deficit


def _unit_translates(model: MixtureModel) -> bool:
    return all(isinstance(c, IsotropicGaussian) and c.sigma == 1.0 for c in model.components)


def lsi_deficit_oracle(model: MixtureModel, spec: QuadratureSpec | None = None) -> Estimate:
    """delta(mu) = I(mu||gamma)/2 - D(mu||gamma) in one dimension.

    The relative Fisher information is int |d/dz ln(dmu/dgamma)|^2 dmu, and
    for unit Gaussian translates the score is the posterior mean of the
    translation.
    """
    if model.dim != 1 or not _unit_translates(model):
        raise InputError("the Fisher-information oracle needs unit Gaussian translates in one dimension")
    centers = np.array([c.mean[0] for c in model.components])
    lw = np.log(model.weights)[:, None]

    def fisher(x):
        lj = lw + model.component_logpdfs(x)
        lf = np.logaddexp.reduce(lj, axis=0)
        post = np.exp(lj - lf)
        score = centers @ post
        return score**2 * np.exp(lf)

    lo, hi = model.extent()
    fi = integrate_box(fisher, [(float(lo[0]), float(hi[0]))], spec, model.breakpoints())
    d = kl(DensityPair(model, IsotropicGaussian(1, [0.0], 1.0)), spec)
    return Estimate(0.5 * fi.value - d.value, 0.5 * fi.error + d.error, "quadrature")


def lsi_deficit_bound(model: MixtureModel, spec=None, with_oracle: bool = True) -> BoundReport:
    """delta(sum p_i gamma_i) <= T_f H(p) for translates gamma_i of the standard Gaussian."""
    unit = _unit_translates(model)
    up = deficit_upper_tv(model, spec)
    value = up.extras["T_f"] * model.weight_entropy()
    extras = {"T_f": up.extras["T_f"]}
    if with_oracle and unit and model.dim == 1:
        delta = lsi_deficit_oracle(model, spec if isinstance(spec, QuadratureSpec) else None)
        extras.update(oracle_delta=delta.value, oracle_error=delta.error)
        if delta.value > value + up.error + 5.0 * delta.error + 1e-9:
            raise InternalConsistencyError(f"LSI deficit {delta.value} exceeds its bound {value}")
    return BoundReport(value, "upper_deficit", (("unit-variance Gaussian translates", unit),),
                       {"n": model.n, "weights": model.weights.tolist()}, error=up.error, extras=extras)
