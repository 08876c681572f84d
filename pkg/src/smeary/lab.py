"""Modulation curves, smeariness regimes and the two explicit constructions.

``modulation_curve`` estimates n * E[d(mean_n, mu)^2] / V by Monte Carlo,
``classify_regime`` and ``estimate_rate`` read a curve, and the
constructions build laws with prescribed behaviour:

* ``construct_kappa_mixture`` adds an atom of mass kappa at the mean, which
  turns a smeary law into one whose modulation levels off at 1/kappa^2;
* ``directional_construction`` places mass (1-eps) at mu and eps/2 at the
  two points at distance t along a geodesic, choosing t so that the
  Hessian of the Fréchet function at mu vanishes in the orthogonal
  direction.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize, special

from .frechet import (
    Distribution,
    MixtureOf,
    PointMass,
    DiscreteMixture,
    SolverConfig,
    VonMisesCircle,
    batched_means,
    default_starts,
    empirical_mean,
    frechet_value,
    variance,
)
from .geometry import (
    Circle,
    Euclidean,
    FlatTorus,
    ManifoldPoint,
    Sphere,
    TangentVector,
)

DEFAULT_SAMPLE_SIZES = (10, 30, 100, 300, 1000, 3000, 10000)


class ZeroVariance(ValueError):
    pass


class InsufficientData(ValueError):
    pass


class SingularProfile(ValueError):
    pass


# ---------------------------------------------------------------------------
# modulation curves


@dataclass
class ModulationCurve:
    sample_sizes: list
    m_hat: list
    std_err: list
    replicates: int
    V: float
    seed: int
    direction: list | None = None

    def __post_init__(self):
        if not (len(self.sample_sizes) == len(self.m_hat) == len(self.std_err)):
            raise ValueError("curve columns must have equal length")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "m_hat", "std_err", "B", "V", "seed"])
        for n, m, s in zip(self.sample_sizes, self.m_hat, self.std_err):
            w.writerow([n, repr(float(m)), repr(float(s)), self.replicates, repr(float(self.V)), self.seed])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ModulationCurve":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty modulation curve")
        return cls(
            sample_sizes=[int(r["n"]) for r in rows],
            m_hat=[float(r["m_hat"]) for r in rows],
            std_err=[float(r["std_err"]) for r in rows],
            replicates=int(rows[0]["B"]),
            V=float(rows[0]["V"]),
            seed=int(rows[0]["seed"]),
        )


def _replicate_rng(seed, n, b):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(n), int(b)]))


def _squared_deviation(geometry, mu, means, direction):
    means = np.asarray(means)
    if direction is None:
        return geometry.distance(mu.coords, means) ** 2
    logs = geometry.log(mu.coords, means)
    comps = geometry.to_components(mu.coords, logs)
    return (comps @ direction) ** 2


def _deviations(dist, mu, n, replicates, seed, config, direction):
    """Squared deviations d(mean_n, mu)^2 for the given replicate indices."""
    g = dist.geometry
    atoms = dist.atoms()
    rngs = [_replicate_rng(seed, n, b) for b in replicates]
    if atoms is not None:
        coords, probs = atoms
        weights = np.empty((len(rngs), len(probs)))
        for i, rng in enumerate(rngs):
            idx = rng.choice(len(probs), size=n, p=probs)
            weights[i] = np.bincount(idx, minlength=len(probs)) / n
        if isinstance(g, (Euclidean, Circle, FlatTorus)):
            results = batched_means(g, coords, weights, config, rngs)
        else:
            starts = [default_starts(g, coords, weights[i], config, rngs[i]) for i in range(len(rngs))]
            results = batched_means(g, coords, weights, config, rngs, starts=starts)
    else:
        results = [empirical_mean(dist.sample(n, rng), config, rng, geometry=g) for rng in rngs]
    means = np.stack([r.mean.coords for r in results])
    return _squared_deviation(g, mu, means, direction)


def _deviation_task(args):
    return _deviations(*args)


def modulation_curve(
    dist: Distribution,
    mu: ManifoldPoint,
    sample_sizes: Sequence[int] = DEFAULT_SAMPLE_SIZES,
    B: int = 1000,
    seed: int = 0,
    config: SolverConfig | None = None,
    direction=None,
    threads: int = 1,
    chunk: int = 250,
) -> ModulationCurve:
    """Monte Carlo estimate of the modulation n V_n / V on a grid of n.

    Replicate ``b`` at sample size ``n`` draws from the stream seeded by
    ``(seed, n, b)``, so the result does not depend on ``threads``.
    With ``direction`` (tangent components at ``mu``) only the squared
    component of log_mu(mean_n) along that unit direction is used; the
    denominator stays the full population variance.
    """
    config = config or SolverConfig()
    V = variance(dist, mu)
    if not V > 0:
        raise ZeroVariance("population variance is zero; modulation undefined")
    sizes = [int(n) for n in sample_sizes]
    if sizes != sorted(set(sizes)) or sizes[0] < 1:
        raise ValueError("sample sizes must be increasing positive integers")
    if direction is not None:
        direction = np.asarray(direction, float)
        direction = direction / np.linalg.norm(direction)
    tasks = []
    for n in sizes:
        for lo in range(0, B, chunk):
            tasks.append((dist, mu, n, range(lo, min(B, lo + chunk)), seed, config, direction))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(_deviation_task, tasks))
    else:
        parts = [_deviation_task(t) for t in tasks]
    m_hat, se = [], []
    per_n = len(parts) // len(sizes)
    for i, n in enumerate(sizes):
        d2 = np.concatenate(parts[i * per_n:(i + 1) * per_n])
        m_hat.append(float(n * d2.mean() / V))
        se.append(float(n * d2.std(ddof=1) / math.sqrt(len(d2)) / V) if len(d2) > 1 else 0.0)
    return ModulationCurve(
        sizes, m_hat, se, B, float(V), int(seed),
        None if direction is None else direction.tolist(),
    )


# ---------------------------------------------------------------------------
# reading curves


class RateEstimate(NamedTuple):
    slope: float
    r_hat: float


def estimate_rate(curve: ModulationCurve, tail: int = 4) -> RateEstimate:
    """Least-squares slope of log m_hat against log n over the last ``tail`` points.

    A modulation growing like n^s corresponds to r = s / (1 - s); slopes of
    one or more are inconclusive and give ``r_hat = nan``.
    """
    if len(curve.sample_sizes) < tail:
        raise InsufficientData(f"need at least {tail} sample sizes")
    n = np.log(np.asarray(curve.sample_sizes[-tail:], float))
    m = np.log(np.asarray(curve.m_hat[-tail:], float))
    slope = float(np.polyfit(n, m, 1)[0])
    r_hat = slope / (1.0 - slope) if slope < 1 else math.nan
    return RateEstimate(slope, r_hat)


@dataclass
class RegimeVerdict:
    regime: str
    sup_m: float
    slope: float
    evidence: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def classify_regime(
    curve: ModulationCurve,
    euclid_band: float = 3.0,
    fss_band: float = 5.0,
    slope_min: float = 0.15,
    tail: int = 4,
) -> RegimeVerdict:
    """Sort a modulation curve into Euclidean / FiniteSampleSmeary / Smeary.

    The regimes are defined through sup_n m_n, which no finite simulation
    observes, so the decision uses explicit bands:

    * Euclidean: every |m_hat - 1| below ``euclid_band`` standard errors;
    * Smeary: tail slope of log m_hat vs log n above ``slope_min``;
    * FiniteSampleSmeary: some m_hat exceeds 1 by more than ``fss_band``
      standard errors while the tail slope stays within ``slope_min`` of 0;
    * otherwise Inconclusive.
    """
    sizes = np.asarray(curve.sample_sizes, float)
    if len(sizes) < 4 or sizes.max() / sizes.min() < 100:
        raise InsufficientData("need >= 4 sample sizes spanning >= 2 decades")
    m = np.asarray(curve.m_hat, float)
    se = np.asarray(curve.std_err, float)
    slope = estimate_rate(curve, tail).slope
    sup_m = float(m.max())
    evidence = {
        "euclid_band_se": euclid_band,
        "fss_band_se": fss_band,
        "slope_min": slope_min,
        "tail_points": tail,
        "max_abs_z": float(np.max(np.abs(m - 1) / np.where(se > 0, se, np.inf))),
    }
    if np.all(np.abs(m - 1) < euclid_band * se + 1e-12):
        regime = "Euclidean"
    elif slope > slope_min:
        regime = "Smeary"
    elif np.any(m - fss_band * se > 1) and abs(slope) <= slope_min:
        regime = "FiniteSampleSmeary"
    else:
        regime = "Inconclusive"
    return RegimeVerdict(regime, sup_m, slope, evidence)


# ---------------------------------------------------------------------------
# smeariness profiles and the limiting covariance


@dataclass
class SmearinessProfile:
    """Local expansion f(x) = sum_j T_j |(R x)_j|^(r+2) + o(|x|^(r+2))."""

    r: float
    R: np.ndarray
    T: np.ndarray
    directional_flags: tuple = ()

    def __post_init__(self):
        self.R = np.atleast_2d(np.asarray(self.R, float))
        self.T = np.atleast_1d(np.asarray(self.T, float))
        d = len(self.T)
        if not self.directional_flags:
            self.directional_flags = tuple(False for _ in range(d))
        if self.r < 0:
            raise ValueError("smeariness exponent r must be >= 0")
        if self.R.shape != (d, d) or np.abs(self.R @ self.R.T - np.eye(d)).max() > 1e-10:
            raise ValueError("R must be an orthogonal dim x dim matrix")
        for t, flag in zip(self.T, self.directional_flags):
            if t < 0 or (t == 0 and not flag):
                raise ValueError("T_j must be positive unless flagged directional")

    def to_dict(self):
        return {
            "r": float(self.r),
            "R": self.R.tolist(),
            "T": self.T.tolist(),
            "directional_flags": list(self.directional_flags),
        }


def gclt_covariance(profile: SmearinessProfile, cov_log) -> np.ndarray:
    """Covariance of (H_j |H_j|^r)_j in the rotated coordinates (R x)_j.

    Equals 4/(r+2)^2 T^-1 (R C R^T) T^-1 with C the covariance of the
    tangent data; with R = I this is 4/(r+2)^2 T^-1 C T^-1.
    """
    T = profile.T
    if np.any(T <= 0):
        raise SingularProfile("T has zero entries (directional profile)")
    C = np.asarray(cov_log, float)
    Ti = np.diag(1.0 / T)
    CR = profile.R @ C @ profile.R.T
    return 4.0 / (profile.r + 2.0) ** 2 * Ti @ CR @ Ti


# ---------------------------------------------------------------------------
# atom-at-the-mean construction


def construct_kappa_mixture(base: Distribution, mu: ManifoldPoint, kappa: float) -> Distribution:
    """Mix ``base`` with an atom of mass ``kappa`` at its mean ``mu``."""
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    if mu.geometry != base.geometry:
        raise ValueError("mu must live on the geometry of base")
    return MixtureOf([(kappa, PointMass(mu)), (1.0 - kappa, base)])


def kappa_for_target(K: float) -> float:
    """Atom mass whose limiting modulation 1/kappa^2 equals ``K`` (> 1)."""
    if not K > 1:
        raise ValueError("target modulation must exceed 1")
    return K ** -0.5


def smeary_circle_base(concentration: float = 1.0, mean_angle: float = 0.0):
    """A 2-power smeary law on the circle with Fréchet mean ``mean_angle``.

    An atom at the mean plus a von Mises bump centred at the antipode whose
    weight makes the density there exactly 1/(2 pi).  Near the mean the
    Fréchet function is F(mu) + concentration * x^4 / 12 + O(x^6).

    Returns ``(law, profile)``.
    """
    if not concentration > 0:
        raise ValueError("concentration must be positive")
    w_bump = float(special.i0e(concentration))
    g = Circle()
    law = MixtureOf(
        [
            (1.0 - w_bump, PointMass(g.point(mean_angle))),
            (w_bump, VonMisesCircle(mean_angle + math.pi, concentration)),
        ]
    )
    profile = SmearinessProfile(r=2.0, R=np.eye(1), T=np.array([concentration / 12.0]))
    return law, profile


# ---------------------------------------------------------------------------
# Hessians


def _values_along(dist, p, direction_amb, steps):
    g = p.geometry
    pts = g.exp(p.coords, np.multiply.outer(steps, direction_amb))
    return np.array([frechet_value(dist, ManifoldPoint(g, x)) for x in pts])


_STENCILS = {
    2: (np.array([-1.0, 0.0, 1.0]), np.array([1.0, -2.0, 1.0])),
    4: (np.array([-2.0, -1.0, 0.0, 1.0, 2.0]), np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0),
}


def second_derivative_along(dist, p: ManifoldPoint, components, h: float = 1e-3, order: int = 4):
    """d^2/ds^2 F(exp_p(s u)) at s = 0 by central differences."""
    offsets, coef = _STENCILS[order]
    u = p.geometry.from_components(p.coords, np.asarray(components, float))
    vals = _values_along(dist, p, u, offsets * h)
    return float(coef @ vals / h**2)


def hessian_fd(dist, p: ManifoldPoint, h: float = 1e-3, order: int = 4) -> np.ndarray:
    """Finite-difference Hessian of F o exp_p in the tangent frame at p.

    Diagonal entries are second differences along the frame vectors;
    off-diagonal entries use the polarisation identity
    H_ij = (D2[e_i + e_j] - D2[e_i - e_j]) / 4, so the result is symmetric.
    ``order`` 2 uses s in {-h, 0, h}; order 4 adds +-2h.
    """
    dim = p.geometry.dim
    H = np.zeros((dim, dim))
    eye = np.eye(dim)
    for i in range(dim):
        H[i, i] = second_derivative_along(dist, p, eye[i], h, order)
    for i in range(dim):
        for j in range(i + 1, dim):
            plus = second_derivative_along(dist, p, eye[i] + eye[j], h, order)
            minus = second_derivative_along(dist, p, eye[i] - eye[j], h, order)
            H[i, j] = H[j, i] = (plus - minus) / 4.0
    return H


def hessian_closed_form(K: float, epsilon: float, t: float) -> float:
    """(1 - eps) + 2 eps (t sqrt K) cot(t sqrt K)."""
    x = t * math.sqrt(K)
    return (1.0 - epsilon) + 2.0 * epsilon * x / math.tan(x)


def hessian_direct_form(K: float, epsilon: float, t: float) -> float:
    """Second derivative of s -> F(exp_mu(s W)) from the spherical law of cosines.

    2 (1 - eps) + 2 eps (t sqrt K) cot(t sqrt K); differs from
    :func:`hessian_closed_form` in the weight of the atom at mu.
    """
    x = t * math.sqrt(K)
    return 2.0 * (1.0 - epsilon) + 2.0 * epsilon * x / math.tan(x)


def _check_eps(epsilon):
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")


def solve_t(K: float, epsilon: float) -> float:
    """Root t in (pi/(2 sqrt K), pi/sqrt K) of t sqrt K cot(t sqrt K) = -(1-eps)/(2 eps).

    x cot x decreases strictly from 0 to -inf on (pi/2, pi), so bisection on
    that bracket finds the unique root.
    """
    _check_eps(epsilon)
    if not K > 0:
        raise ValueError("curvature K must be positive")
    target = -(1.0 - epsilon) / (2.0 * epsilon)

    def g(x):
        return x / math.tan(x) - target

    lo, hi = math.pi / 2, math.pi
    # g(lo) = -target > 0; shrink hi until g(hi) < 0
    hi_eval = hi - 1e-12
    x = optimize.bisect(g, lo, hi_eval, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return x / math.sqrt(K)


def _north_pole(geometry: Sphere):
    e = np.zeros(geometry.m + 1)
    e[-1] = geometry.radius
    return geometry.point(e)


def _orthogonal_direction(geometry, mu, v_comps):
    """First frame vector made orthogonal to ``v_comps`` (unit components)."""
    eye = np.eye(geometry.dim)
    resid = eye - np.outer(eye @ v_comps, v_comps)
    j = int(np.argmax(np.linalg.norm(resid, axis=1)))
    w = resid[j]
    return w / np.linalg.norm(w)


def _directional_law(geometry, mu, v_comps, epsilon, t):
    u = geometry.from_components(mu.coords, v_comps)
    plus = geometry.exp(mu.coords, t * u)
    minus = geometry.exp(mu.coords, -t * u)
    return DiscreteMixture(
        [
            (1.0 - epsilon, mu),
            (epsilon / 2.0, ManifoldPoint(geometry, plus)),
            (epsilon / 2.0, ManifoldPoint(geometry, minus)),
        ]
    )


def solve_t_empirical(
    K: float,
    epsilon: float,
    geometry: Sphere | None = None,
    mu: ManifoldPoint | None = None,
    v_dir=None,
    h: float = 1e-3,
) -> float:
    """t making the finite-difference Hessian entry (W, W) of the construction vanish.

    The root of :func:`solve_t` serves as the lower end of the bracket
    (the entry is positive there); the upper end is just short of the
    antipodal distance pi/sqrt(K), where the entry tends to -inf.
    """
    _check_eps(epsilon)
    geometry = geometry or Sphere(2, K)
    mu = mu or _north_pole(geometry)
    v = np.eye(geometry.dim)[0] if v_dir is None else np.asarray(v_dir, float)
    w = _orthogonal_direction(geometry, mu, v)

    def entry(t):
        law = _directional_law(geometry, mu, v, epsilon, t)
        return second_derivative_along(law, mu, w, h)

    lo = solve_t(K, epsilon)
    hi = math.pi / math.sqrt(K) * (1.0 - 1e-9)
    if entry(lo) <= 0:
        lo = math.pi / (2.0 * math.sqrt(K)) * (1.0 + 1e-9)
    return optimize.brentq(entry, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)


@dataclass
class DirectionalConstruction:
    law: DiscreteMixture
    mu: ManifoldPoint
    v_dir: np.ndarray
    w_dir: np.ndarray
    epsilon: float
    K: float
    t: float
    t_closed_form: float
    hessian: np.ndarray

    @property
    def hessian_ww(self) -> float:
        return float(self.w_dir @ self.hessian @ self.w_dir)

    @property
    def hessian_vv(self) -> float:
        return float(self.v_dir @ self.hessian @ self.v_dir)

    def report(self) -> dict:
        return {
            "K": self.K,
            "epsilon": self.epsilon,
            "t_empirical": self.t,
            "t_closed_form": self.t_closed_form,
            "hessian_fd_ww": self.hessian_ww,
            "hessian_fd_vv": self.hessian_vv,
            "hessian_fd_ww_at_closed_form_t": second_derivative_along(
                _directional_law(self.law.geometry, self.mu, self.v_dir, self.epsilon, self.t_closed_form),
                self.mu,
                self.w_dir,
            ),
            "hessian_closed_form_at_closed_form_t": hessian_closed_form(self.K, self.epsilon, self.t_closed_form),
            "hessian_closed_form_at_empirical_t": hessian_closed_form(self.K, self.epsilon, self.t),
            "hessian_direct_form_at_empirical_t": hessian_direct_form(self.K, self.epsilon, self.t),
            "frechet_value_at_mu": frechet_value(self.law, self.mu),
            "hessian_fd": self.hessian.tolist(),
        }


def directional_construction(
    geometry: Sphere,
    mu: ManifoldPoint | None = None,
    v_dir: TangentVector | None = None,
    epsilon: float = 1.0 / 3.0,
    h: float = 1e-3,
) -> DirectionalConstruction:
    """Three-atom law on a sphere with a degenerate Hessian at ``mu``."""
    if not isinstance(geometry, Sphere):
        raise TypeError("the directional construction needs a Sphere geometry")
    if geometry.dim < 2:
        raise ValueError("need a sphere of dimension >= 2 for an orthogonal direction")
    _check_eps(epsilon)
    mu = mu or _north_pole(geometry)
    if v_dir is None:
        v = np.eye(geometry.dim)[0]
    else:
        if v_dir.base.geometry != geometry or geometry.distance(v_dir.base.coords, mu.coords) > 1e-12:
            raise ValueError("v_dir must be a tangent vector at mu")
        if abs(v_dir.norm - 1.0) > 1e-9:
            raise ValueError("v_dir must have unit length")
        v = v_dir.components
    K = geometry.K
    t = solve_t_empirical(K, epsilon, geometry, mu, v, h)
    law = _directional_law(geometry, mu, v, epsilon, t)
    w = _orthogonal_direction(geometry, mu, v)
    H = hessian_fd(law, mu, h)
    return DirectionalConstruction(law, mu, v, w, epsilon, K, t, solve_t(K, epsilon), H)


def construct_directional_smeary(geometry, mu=None, v_dir=None, epsilon=1.0 / 3.0) -> DiscreteMixture:
    """The law of :func:`directional_construction`."""
    return directional_construction(geometry, mu, v_dir, epsilon).law
