"""Component densities, finite mixtures and their separation geometry.

Points are always passed as arrays of shape (m, d).  Two component kinds
exist: :class:`IsotropicGaussian` and :class:`Pushforward`, the latter being
the image T(W) = A W + b of a spherically symmetric base W with density
w -> psi(|w|).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, UnsupportedError
from .numerics import (
    QuadratureSpec,
    integrate_1d,
    logsumexp,
    reg_upper_gamma,
    shannon_entropy,
    unit_ball_volume,
)

# quadrature domains extend this many scale units past each component
DOMAIN_PAD = 12.0
WEIGHT_SUM_TOL = 1e-12


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if dim == 1 else x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise InputError(f"points must have shape (m, {dim}), got {x.shape}")
    return x


def _unit_directions(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def gaussian_tail(d: int, t: float) -> float:
    """P(|Z| > t) for a standard Gaussian vector in R^d."""
    if t < 0:
        raise InputError("t must be non-negative")
    return reg_upper_gamma(d / 2.0, t * t / 2.0)


# ---------------------------------------------------------------------------
# radial base profiles


class RadialProfile:
    """Spherically symmetric density phi(w) = psi(|w|) on R^d.

    Subclasses provide ``log_psi``; tail, entropy and the density of |W| fall
    back to one-dimensional radial quadrature unless overridden.
    """

    dim: int
    log_concave: bool = True

    def log_psi(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def psi(self, r) -> np.ndarray:
        return np.exp(self.log_psi(np.asarray(r, dtype=float)))

    @property
    def sup(self) -> float:
        return float(self.psi(np.array([0.0]))[0])

    def radial_density(self, r) -> np.ndarray:
        """Density of |W| at r."""
        r = np.asarray(r, dtype=float)
        d = self.dim
        return d * unit_ball_volume(d) * r ** (d - 1) * self.psi(r)

    def edge(self) -> float | None:
        """Radius of a support discontinuity, if any."""
        return None

    def tail(self, t: float) -> float:
        if t < 0:
            raise InputError("t must be non-negative")
        return integrate_1d(self.radial_density, t, math.inf, points=self._pts(t)).value

    def entropy(self) -> float:
        def integrand(r):
            lp = self.log_psi(r)
            dens = self.radial_density(r)
            return np.where(dens > 0, -dens * np.where(np.isfinite(lp), lp, 0.0), 0.0)

        return integrate_1d(integrand, 0.0, math.inf, points=self._pts(0.0)).value

    def scale_radius(self) -> float:
        """Radius beyond which the quadrature padding is measured."""
        return 1.0

    def canonical(self) -> tuple["RadialProfile", float]:
        """(unit-scale profile, scale) such that W = scale * W_unit."""
        return self, 1.0

    def scaled(self, c: float) -> "RadialProfile":
        if c == 1.0:
            return self
        raise UnsupportedError(f"{type(self).__name__} cannot be rescaled")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise UnsupportedError(f"no sampler for {type(self).__name__}")

    def key(self) -> tuple:
        return (type(self).__name__, self.dim)

    def _pts(self, lo: float) -> list[float]:
        e = self.edge()
        return [e] if e is not None and e > lo else []


@dataclass(frozen=True)
class GaussianProfile(RadialProfile):
    dim: int
    sigma: float = 1.0

    def __post_init__(self):
        if self.dim < 1 or not self.sigma > 0:
            raise InputError("GaussianProfile needs dim >= 1 and sigma > 0")

    def log_psi(self, r):
        s2 = self.sigma**2
        return -np.asarray(r) ** 2 / (2 * s2) - 0.5 * self.dim * math.log(2 * math.pi * s2)

    def tail(self, t):
        if t < 0:
            raise InputError("t must be non-negative")
        return gaussian_tail(self.dim, t / self.sigma)

    def entropy(self):
        return 0.5 * self.dim * math.log(2 * math.pi * math.e * self.sigma**2)

    def scale_radius(self):
        return self.sigma

    def canonical(self):
        return GaussianProfile(self.dim, 1.0), self.sigma

    def scaled(self, c):
        return GaussianProfile(self.dim, self.sigma * c)

    def sample(self, rng, n):
        return self.sigma * rng.standard_normal((n, self.dim))

    def key(self):
        return ("gaussian", self.dim, self.sigma)


@dataclass(frozen=True)
class ExponentialProfile(RadialProfile):
    """phi(w) proportional to exp(-|w| / scale); |W| is Gamma(d, scale)."""

    dim: int
    scale: float = 1.0

    def __post_init__(self):
        if self.dim < 1 or not self.scale > 0:
            raise InputError("ExponentialProfile needs dim >= 1 and scale > 0")

    @property
    def _log_norm(self) -> float:
        d = self.dim
        return -(math.log(d * unit_ball_volume(d)) + math.lgamma(d) + d * math.log(self.scale))

    def log_psi(self, r):
        return self._log_norm - np.asarray(r) / self.scale

    def tail(self, t):
        if t < 0:
            raise InputError("t must be non-negative")
        return reg_upper_gamma(self.dim, t / self.scale)

    def entropy(self):
        return self.dim - self._log_norm

    def scale_radius(self):
        # Gamma(d, s) tails need a wider pad than Gaussian ones
        return self.scale * (3.5 + 0.5 * self.dim)

    def canonical(self):
        return ExponentialProfile(self.dim, 1.0), self.scale

    def scaled(self, c):
        return ExponentialProfile(self.dim, self.scale * c)

    def sample(self, rng, n):
        r = rng.gamma(self.dim, self.scale, size=n)
        return r[:, None] * _unit_directions(rng, n, self.dim)

    def key(self):
        return ("exponential", self.dim, self.scale)


@dataclass(frozen=True)
class UniformBallProfile(RadialProfile):
    """Uniform density on the centered ball of the given radius."""

    dim: int
    radius: float = 1.0

    def __post_init__(self):
        if self.dim < 1 or not self.radius > 0:
            raise InputError("UniformBallProfile needs dim >= 1 and radius > 0")

    @property
    def _log_height(self) -> float:
        return -math.log(unit_ball_volume(self.dim)) - self.dim * math.log(self.radius)

    def log_psi(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.radius, self._log_height, -np.inf)

    def edge(self):
        return self.radius

    def tail(self, t):
        if t < 0:
            raise InputError("t must be non-negative")
        return 0.0 if t >= self.radius else 1.0 - (t / self.radius) ** self.dim

    def entropy(self):
        return -self._log_height

    def scale_radius(self):
        # support is compact; the padding only needs to clear the edge
        return self.radius / DOMAIN_PAD * 1.01

    def canonical(self):
        return UniformBallProfile(self.dim, 1.0), self.radius

    def scaled(self, c):
        return UniformBallProfile(self.dim, self.radius * c)

    def sample(self, rng, n):
        r = self.radius * rng.random(n) ** (1.0 / self.dim)
        return r[:, None] * _unit_directions(rng, n, self.dim)

    def key(self):
        return ("uniform_ball", self.dim, self.radius)


class CustomProfile(RadialProfile):
    """A user-supplied radial profile given by ``log_psi``.

    Normalization and radial monotonicity are checked numerically at
    construction.  Tail and entropy come from radial quadrature.
    """

    def __init__(
        self,
        dim: int,
        log_psi: Callable[[np.ndarray], np.ndarray],
        *,
        name: str = "custom",
        log_concave: bool = True,
        reach: float = 40.0,
        tol: float = 1e-8,
    ):
        if dim < 1:
            raise InputError("dim must be >= 1")
        self.dim = dim
        self._log_psi = log_psi
        self.name = name
        self.log_concave = log_concave
        self._reach = reach
        grid = np.linspace(0.0, reach, 2001)
        vals = np.asarray(log_psi(grid), dtype=float)
        if np.any(np.diff(vals) > 1e-12 * (1 + np.abs(vals[1:]))):
            raise InputError("radial profile must be non-increasing")
        mass = integrate_1d(self.radial_density, 0.0, math.inf).value
        if abs(mass - 1.0) > tol:
            raise InputError(f"radial profile integrates to {mass!r}, not 1")

    def log_psi(self, r):
        return np.asarray(self._log_psi(np.asarray(r, dtype=float)), dtype=float)

    def scale_radius(self):
        return self._reach / DOMAIN_PAD

    def key(self):
        return ("custom", self.dim, self.name, id(self._log_psi))


PROFILES = {"gaussian": GaussianProfile, "exponential": ExponentialProfile, "uniform_ball": UniformBallProfile}


# ---------------------------------------------------------------------------
# affine maps and components


@dataclass(frozen=True, eq=False)
class AffineMap:
    """w -> A w + b.  ``tau`` = max(s_max^2, 1/s_min^2) over singular values of A."""

    matrix: np.ndarray
    offset: np.ndarray
    singular_values: np.ndarray = field(init=False, repr=False)
    tau: float = field(init=False)
    log_abs_det: float = field(init=False)
    inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = np.array(self.matrix, dtype=float, ndmin=2)
        b = np.array(self.offset, dtype=float).reshape(-1)
        if a.shape != (b.size, b.size):
            raise InputError(f"matrix shape {a.shape} does not match offset length {b.size}")
        s = np.linalg.svd(a, compute_uv=False)
        if not s[-1] > s[0] * 1e3 * np.finfo(float).eps * b.size:
            raise InputError("affine map must be invertible")
        a.setflags(write=False)
        b.setflags(write=False)
        inv = np.linalg.inv(a)
        inv.setflags(write=False)
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "offset", b)
        object.__setattr__(self, "singular_values", s)
        object.__setattr__(self, "tau", float(max(s[0] ** 2, 1.0 / s[-1] ** 2)))
        object.__setattr__(self, "log_abs_det", float(np.sum(np.log(s))))
        object.__setattr__(self, "inverse", inv)

    @property
    def dim(self) -> int:
        return self.offset.size

    def apply(self, w: np.ndarray) -> np.ndarray:
        return w @ self.matrix.T + self.offset

    def pullback(self, z: np.ndarray) -> np.ndarray:
        return (z - self.offset) @ self.inverse.T

    def scaled(self, c: float) -> "AffineMap":
        """The map w -> A (c w) + b."""
        return AffineMap(self.matrix * c, self.offset)


class ComponentDensity:
    """Common interface of mixture components."""

    kind: str
    dim: int

    def logpdf(self, x) -> np.ndarray:
        raise NotImplementedError

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def entropy(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def extent(self) -> tuple[np.ndarray, np.ndarray]:
        """Bounding box outside which the density is negligible."""
        raise NotImplementedError

    def breakpoints(self) -> list[list[float]]:
        """Per-axis abscissae where the integrand may have kinks or peaks."""
        raise NotImplementedError

    def frame(self) -> tuple[RadialProfile, AffineMap]:
        """Express the component as A W + b with W a unit-scale profile."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class IsotropicGaussian(ComponentDensity):
    dim: int
    mean: np.ndarray
    sigma: float
    kind: str = field(default="gaussian", init=False)

    def __post_init__(self):
        m = np.array(self.mean, dtype=float).reshape(-1)
        if self.dim < 1 or m.size != self.dim:
            raise InputError("mean must have length dim >= 1")
        if not self.sigma > 0:
            raise InputError("sigma must be positive")
        m.setflags(write=False)
        object.__setattr__(self, "mean", m)

    def logpdf(self, x):
        x = _as_points(x, self.dim)
        s2 = self.sigma**2
        q = np.sum((x - self.mean) ** 2, axis=1)
        return -q / (2 * s2) - 0.5 * self.dim * math.log(2 * math.pi * s2)

    def entropy(self):
        return 0.5 * self.dim * math.log(2 * math.pi * math.e * self.sigma**2)

    def sample(self, rng, n):
        return self.mean + self.sigma * rng.standard_normal((n, self.dim))

    def extent(self):
        pad = DOMAIN_PAD * self.sigma
        return self.mean - pad, self.mean + pad

    def breakpoints(self):
        return [[float(c)] for c in self.mean]

    def frame(self):
        return GaussianProfile(self.dim, 1.0), AffineMap(self.sigma * np.eye(self.dim), self.mean)

    def to_dict(self):
        return {"type": "gaussian", "mean": self.mean.tolist(), "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class Pushforward(ComponentDensity):
    """Density of A W + b where W has the radial ``profile``."""

    profile: RadialProfile
    affine: AffineMap
    kind: str = field(default="pushforward", init=False)

    def __post_init__(self):
        if self.profile.dim != self.affine.dim:
            raise InputError("profile and affine map dimensions differ")

    @property
    def dim(self) -> int:
        return self.profile.dim

    def logpdf(self, x):
        x = _as_points(x, self.dim)
        w = self.affine.pullback(x)
        return self.profile.log_psi(np.linalg.norm(w, axis=1)) - self.affine.log_abs_det

    def entropy(self):
        return self.profile.entropy() + self.affine.log_abs_det

    def sample(self, rng, n):
        return self.affine.apply(self.profile.sample(rng, n))

    def extent(self):
        reach = DOMAIN_PAD * self.profile.scale_radius() * self.affine.singular_values[0]
        return self.affine.offset - reach, self.affine.offset + reach

    def breakpoints(self):
        pts = [[float(c)] for c in self.affine.offset]
        e = self.profile.edge()
        if e is not None:
            # exact support edges only along axes of a diagonal map
            a = self.affine.matrix
            if np.allclose(a, np.diag(np.diag(a))):
                for k, c in enumerate(self.affine.offset):
                    h = abs(a[k, k]) * e
                    pts[k] += [float(c - h), float(c + h)]
        return pts

    def frame(self):
        base, c = self.profile.canonical()
        return base, self.affine.scaled(c)

    def to_dict(self):
        base, c = self.profile.canonical()
        name = {GaussianProfile: "gaussian", ExponentialProfile: "exponential",
                UniformBallProfile: "uniform_ball"}.get(type(base))
        if name is None:
            raise UnsupportedError("custom profiles have no JSON form")
        return {"type": "pushforward", "base": name,
                "A": (self.affine.matrix * c).tolist(), "b": self.affine.offset.tolist()}


def uniform_interval(lo: float, hi: float) -> Pushforward:
    """Uniform density on [lo, hi] as a one-dimensional pushforward."""
    if not hi > lo:
        raise InputError("need hi > lo")
    return Pushforward(UniformBallProfile(1, 1.0), AffineMap([[0.5 * (hi - lo)]], [0.5 * (lo + hi)]))


# ---------------------------------------------------------------------------
# mixtures


@dataclass(frozen=True, eq=False)
class MixtureModel:
    weights: np.ndarray
    components: tuple[ComponentDensity, ...]

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        comps = tuple(self.components)
        if w.size == 0 or w.size != len(comps):
            raise InputError("need one positive weight per component, at least one component")
        if not np.all(w > 0):
            raise InputError("mixture weights must be strictly positive")
        if abs(math.fsum(w) - 1.0) > WEIGHT_SUM_TOL:
            raise InputError(f"weights sum to {math.fsum(w)!r}, not 1")
        if len({c.dim for c in comps}) != 1:
            raise InputError("all components must share one dimension")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def n(self) -> int:
        return len(self.components)

    def weight_entropy(self) -> float:
        """H(p) in nats."""
        return shannon_entropy(self.weights)

    def component_logpdfs(self, x) -> np.ndarray:
        """Array of shape (n, m) with log f_i at each point."""
        x = _as_points(x, self.dim)
        return np.stack([c.logpdf(x) for c in self.components])

    def logpdf(self, x) -> np.ndarray:
        lw = np.log(self.weights)[:, None]
        return logsumexp(lw + self.component_logpdfs(x), axis=0)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def sample(self, rng: np.random.Generator, n: int, labels: bool = False):
        idx = rng.choice(self.n, size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for i, c in enumerate(self.components):
            sel = np.flatnonzero(idx == i)
            if sel.size:
                out[sel] = c.sample(rng, sel.size)
        return (out, idx) if labels else out

    def extent(self):
        los, his = zip(*(c.extent() for c in self.components))
        return np.min(los, axis=0), np.max(his, axis=0)

    def breakpoints(self):
        per_axis = [set() for _ in range(self.dim)]
        for c in self.components:
            for k, pts in enumerate(c.breakpoints()):
                per_axis[k].update(pts)
        return [sorted(s) for s in per_axis]

    def to_dict(self) -> dict:
        return {"dim": self.dim, "weights": self.weights.tolist(),
                "components": [c.to_dict() for c in self.components]}


@dataclass(frozen=True)
class SeparationCertificate:
    lam: float
    m: int
    tau: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise InputError("lambda must be positive")
        if self.m < 1 or int(self.m) != self.m:
            raise InputError("M must be a positive integer")
        if not self.tau >= 1:
            raise InputError("tau must be >= 1")

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "M": self.m, "tau": self.tau}


# ---------------------------------------------------------------------------
# operations


def log_pdf(model: MixtureModel, z) -> float:
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != model.dim:
        raise InputError(f"point has length {z.size}, model dimension is {model.dim}")
    return float(model.logpdf(z[None, :])[0])


def component_entropy(c: ComponentDensity) -> float:
    return c.entropy()


def mixture_complement(model: MixtureModel, j: int) -> MixtureModel:
    """Mixture with component j removed and the remaining weights renormalized."""
    if model.n < 2:
        raise InputError("mixture complement needs at least two components")
    if not 0 <= j < model.n:
        raise InputError(f"component index {j} out of range")
    keep = [i for i in range(model.n) if i != j]
    w = model.weights[keep]
    w = w / math.fsum(w)
    return MixtureModel(w, tuple(model.components[i] for i in keep))


@dataclass(frozen=True)
class AffineFrame:
    """All components written as T_i(W) = A_i W + b_i over one base W."""

    profile: RadialProfile
    maps: tuple[AffineMap, ...]

    @property
    def tau(self) -> float:
        return max(m.tau for m in self.maps)


def affine_frame(model: MixtureModel) -> AffineFrame:
    """Find a common base for the components, balancing the map scales.

    The base is rescaled by the geometric mean of the extreme singular values
    so the maps' bi-Lipschitz constant tau is as small as possible.
    """
    frames = [c.frame() for c in model.components]
    keys = {base.key() for base, _ in frames}
    if len(keys) != 1:
        raise UnsupportedError("components are pushforwards of different bases")
    base = frames[0][0]
    svals = np.concatenate([m.singular_values for _, m in frames])
    ref = math.sqrt(float(svals.min()) * float(svals.max()))
    try:
        base = base.scaled(ref)
    except UnsupportedError:
        ref = 1.0
    maps = tuple(m.scaled(1.0 / ref) for _, m in frames)
    return AffineFrame(base, maps)


def pulled_back_centers(frame: AffineFrame, j: int) -> np.ndarray:
    """T_ij(0) = A_i^{-1}(b_j - b_i) for every i."""
    bj = frame.maps[j].offset
    return np.stack([m.pullback(bj[None, :])[0] for m in frame.maps])


def separation_counts(frame: AffineFrame, lam: float, tau: float) -> np.ndarray:
    """For each (j, i), the number of k whose ball test cannot rule out overlap."""
    n = len(frame.maps)
    counts = np.zeros((n, n), dtype=int)
    for j in range(n):
        c = pulled_back_centers(frame, j)
        dist = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=2)
        counts[j] = np.sum(dist < 2.0 * lam * tau, axis=1)
    return counts


def verify_separation(model: MixtureModel, cert: SeparationCertificate) -> bool:
    """Check the (lambda, M, tau) certificate with the sufficient ball test.

    T_ij(B_lambda) lies within T_ij(0) + B_{lambda tau}, so two images whose
    centers are at least 2 lambda tau apart cannot meet.
    """
    frame = affine_frame(model)
    if cert.tau < frame.tau * (1 - 1e-12):
        return False
    return int(separation_counts(frame, cert.lam, cert.tau).max()) <= cert.m


def separation_certificate(model: MixtureModel, m: int = 1) -> SeparationCertificate | None:
    """Largest-lambda certificate with the given M that :func:`verify_separation` accepts.

    Returns None when no positive lambda works (coincident centers).
    """
    frame = affine_frame(model)
    tau = frame.tau
    n = model.n
    if n <= m:
        lam = math.inf
    else:
        lam = math.inf
        for j in range(n):
            c = pulled_back_centers(frame, j)
            dist = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=2)
            dist[np.arange(n), np.arange(n)] = np.inf
            lam = min(lam, float(np.sort(dist, axis=1)[:, m - 1].min()) / (2.0 * tau))
    if not lam > 0:
        return None
    if math.isinf(lam):
        lam = 1e300
    return SeparationCertificate(lam, m, max(tau, 1.0))


# ---------------------------------------------------------------------------
# JSON documents


def component_from_dict(doc: dict, dim: int) -> ComponentDensity:
    kind = doc.get("type")
    if kind == "gaussian":
        _only(doc, {"type", "mean", "sigma"})
        return IsotropicGaussian(dim, doc["mean"], float(doc["sigma"]))
    if kind == "pushforward":
        _only(doc, {"type", "base", "A", "b"})
        base = doc.get("base", "gaussian")
        if base not in PROFILES:
            raise InputError(f"unknown base {base!r}; expected one of {sorted(PROFILES)}")
        return Pushforward(PROFILES[base](dim), AffineMap(doc["A"], doc["b"]))
    raise InputError(f"unknown component type {kind!r}")


def _only(doc: dict, allowed: set):
    extra = set(doc) - allowed
    if extra:
        raise InputError(f"unknown keys {sorted(extra)}")
    missing = allowed - set(doc) - {"base"}
    if missing:
        raise InputError(f"missing keys {sorted(missing)}")


def model_from_dict(doc: dict) -> MixtureModel:
    if not isinstance(doc, dict):
        raise InputError("model document must be a JSON object")
    _only(doc, {"dim", "weights", "components"})
    dim = int(doc["dim"])
    comps = tuple(component_from_dict(c, dim) for c in doc["components"])
    try:
        return MixtureModel(doc["weights"], comps)
    except (TypeError, KeyError) as exc:
        raise InputError(str(exc)) from exc


def load_model(path: str | Path) -> MixtureModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model {path}: {exc}") from exc
    return model_from_dict(doc)


def translation_mixture(points: Sequence, sigma: float, weights: Sequence[float] | None = None) -> MixtureModel:
    """Gaussian noise of scale sigma added to a discrete constellation."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 1 and np.asarray(points).ndim == 1:
        pts = pts.T
    n, d = pts.shape
    w = np.full(n, 1.0 / n) if weights is None else weights
    return MixtureModel(w, tuple(IsotropicGaussian(d, p, sigma) for p in pts))
