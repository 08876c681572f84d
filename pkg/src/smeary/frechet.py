"""Probability laws on manifolds, Fréchet functions and Fréchet means.

The solvers work on *weighted atoms*: an empirical sample is compressed to
its distinct points with multiplicities, and a discrete law is its atoms
with probabilities.  That lets the Monte Carlo and bootstrap code push many
weight vectors over the same atoms through one batched descent.

Mean computation by geometry:

* ``Euclidean`` -- weighted arithmetic mean (exact).
* ``Circle`` -- exact piecewise-quadratic candidate enumeration; for equal
  weights the candidates are the lifted mean shifted by multiples of 2pi/n.
* ``FlatTorus`` -- the Fréchet function splits over the angles, so each
  coordinate is an independent circle problem.
* ``Sphere`` / ``KendallPlanar`` -- multistart Riemannian gradient descent
  with Barzilai-Borwein steps and step halving.

Whenever several candidates tie within ``tie_tol`` one of them is drawn
uniformly with the caller's random generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special

from .geometry import (
    TWO_PI,
    Circle,
    Euclidean,
    FlatTorus,
    Geometry,
    GeometryMismatch,
    ManifoldPoint,
    wrap_angle,
)


class EmptySample(ValueError):
    pass


# ---------------------------------------------------------------------------
# distributions


class Distribution:
    """Common interface of the probability laws.

    Subclasses provide ``geometry``, ``sample(n, rng)`` returning an
    ambient array of shape ``(n,) + geometry.ambient_shape`` and
    ``atoms()`` returning ``(coords, weights)`` for purely discrete laws or
    ``None`` when a continuous part is present.
    """

    geometry: Geometry

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def atoms(self):
        return None

    def sample_points(self, n: int, seed: int, index: int = 0) -> list[ManifoldPoint]:
        """Draw ``n`` points as a pure function of ``(law, seed, index)``."""
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
        return [ManifoldPoint(self.geometry, x) for x in self.sample(n, rng)]


@dataclass(frozen=True, eq=False)
class PointMass(Distribution):
    point: ManifoldPoint

    @property
    def geometry(self):
        return self.point.geometry

    def sample(self, n, rng):
        return np.repeat(self.point.coords[None], n, axis=0)

    def atoms(self):
        return self.point.coords[None].copy(), np.ones(1)


@dataclass(frozen=True, eq=False)
class DiscreteMixture(Distribution):
    """Finitely many atoms ``(weight, point)``."""

    components: Sequence[tuple[float, ManifoldPoint]]
    _coords: np.ndarray = field(init=False, repr=False)
    _weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.components:
            raise ValueError("a discrete mixture needs at least one atom")
        g = self.components[0][1].geometry
        for _, pt in self.components:
            if pt.geometry != g:
                raise GeometryMismatch("all atoms must share one geometry")
        w = np.array([float(c[0]) for c in self.components])
        _check_weights(w)
        coords = np.stack([np.asarray(c[1].coords) for c in self.components])
        object.__setattr__(self, "_coords", coords)
        object.__setattr__(self, "_weights", w)

    @property
    def geometry(self):
        return self.components[0][1].geometry

    def sample(self, n, rng):
        idx = rng.choice(len(self._weights), size=n, p=self._weights)
        return self._coords[idx]

    def atoms(self):
        return self._coords.copy(), self._weights.copy()


@dataclass(frozen=True, eq=False)
class VonMisesCircle(Distribution):
    mean_angle: float = 0.0
    concentration: float = 1.0

    def __post_init__(self):
        if self.concentration < 0:
            raise ValueError("von Mises concentration must be >= 0")

    @property
    def geometry(self):
        return Circle()

    def sample(self, n, rng):
        x = rng.vonmises(self.mean_angle, self.concentration, size=n)
        return np.mod(x, TWO_PI)[:, None]

    def density(self, theta):
        k = self.concentration
        return np.exp(k * (np.cos(theta - self.mean_angle) - 1.0)) / (TWO_PI * special.i0e(k))


@dataclass(frozen=True, eq=False)
class MixtureOf(Distribution):
    """Mixture ``sum_c w_c * law_c`` of laws on one geometry."""

    components: Sequence[tuple[float, Distribution]]

    def __post_init__(self):
        if not self.components:
            raise ValueError("a mixture needs at least one component")
        g = self.components[0][1].geometry
        for _, law in self.components:
            if law.geometry != g:
                raise GeometryMismatch("all mixture components must share one geometry")
        _check_weights(np.array([float(c[0]) for c in self.components]))

    @property
    def geometry(self):
        return self.components[0][1].geometry

    @property
    def weights(self):
        return np.array([float(c[0]) for c in self.components])

    def sample(self, n, rng):
        labels = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty((n,) + self.geometry.ambient_shape, dtype=self.geometry.dtype)
        for c, (_, law) in enumerate(self.components):
            sel = np.flatnonzero(labels == c)
            if sel.size:
                out[sel] = law.sample(sel.size, rng)
        return out

    def atoms(self):
        coords, weights = [], []
        for w, law in self.components:
            a = law.atoms()
            if a is None:
                return None
            coords.append(a[0])
            weights.append(w * a[1])
        return np.concatenate(coords), np.concatenate(weights)


def _check_weights(w):
    if np.any(w < 0):
        raise ValueError("mixture weights must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"mixture weights must sum to 1 (got {w.sum()!r})")


def _continuous_parts(law, scale=1.0):
    """Yield ``(weight, law)`` for every non-atomic part of ``law``."""
    if isinstance(law, MixtureOf):
        for w, sub in law.components:
            yield from _continuous_parts(sub, scale * w)
    elif law.atoms() is None:
        yield scale, law


def _atomic_parts(law, scale=1.0):
    if isinstance(law, MixtureOf):
        for w, sub in law.components:
            yield from _atomic_parts(sub, scale * w)
    else:
        a = law.atoms()
        if a is not None:
            yield a[0], scale * a[1]


# ---------------------------------------------------------------------------
# Fréchet functions


def _as_array(geometry, points):
    if isinstance(points, np.ndarray):
        return points
    pts = list(points)
    if not pts:
        raise EmptySample("sample is empty")
    for p in pts:
        if p.geometry != geometry:
            raise GeometryMismatch("sample points live on different geometries")
    return np.stack([p.coords for p in pts])


def _von_mises_value(law: VonMisesCircle, p):
    """E[d(X, p)^2] for a von Mises law by adaptive quadrature."""

    def integrand(phi):
        return phi * phi * law.density(p + phi)

    val, _ = integrate.quad(integrand, -math.pi, math.pi, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def _von_mises_gradient(law: VonMisesCircle, p):
    """E[wrap(X - p)], i.e. minus half the derivative of F at p."""

    def integrand(phi):
        return phi * law.density(p + phi)

    # near a root only the absolute tolerance is meaningful
    val, _ = integrate.quad(integrand, -math.pi, math.pi, epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def weighted_value(geometry, atoms, weights, p):
    """sum_i w_i d(x_i, p)^2 for one point or a batch of points ``p``."""
    p = np.asarray(p)
    d = geometry.distance(p[..., None, :], atoms)
    return np.sum(weights * d * d, axis=-1)


def frechet_value(dist_or_sample, p: ManifoldPoint) -> float:
    """Population (law) or empirical (list of points) Fréchet function at ``p``."""
    if isinstance(dist_or_sample, Distribution):
        law = dist_or_sample
        if law.geometry != p.geometry:
            raise GeometryMismatch("law and point live on different geometries")
        total = 0.0
        for coords, w in _atomic_parts(law):
            total += float(weighted_value(law.geometry, coords, w, p.coords))
        for w, part in _continuous_parts(law):
            if isinstance(part, VonMisesCircle):
                total += w * _von_mises_value(part, float(p.coords[0]))
            else:  # pragma: no cover - only von Mises is continuous today
                raise TypeError(f"no Fréchet evaluator for {type(part).__name__}")
        return total
    sample = list(dist_or_sample)
    if not sample:
        raise EmptySample("sample is empty")
    g = p.geometry
    arr = _as_array(g, sample)
    w = np.full(len(arr), 1.0 / len(arr))
    return float(weighted_value(g, arr, w, p.coords))


def _law_gradient_circle(law, p):
    """E[wrap(X - p)] for a circle law (mixed atomic/von Mises parts)."""
    total = 0.0
    for coords, w in _atomic_parts(law):
        total += float(np.sum(w * wrap_angle(coords[:, 0] - p)))
    for w, part in _continuous_parts(law):
        total += w * _von_mises_gradient(part, p)
    return total


# ---------------------------------------------------------------------------
# solver configuration and results


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 10_000
    grad_tol: float = 1e-9
    tie_tol: float = 1e-7
    n_random_starts: int = 8
    seed: int = 0
    n_sample_starts: int = 4
    max_atom_starts: int = 16
    dedupe_tol: float = 1e-4

    @classmethod
    def from_dict(cls, d: dict | None) -> "SolverConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver keys: {sorted(unknown)}")
        cfg = cls(**d)
        if cfg.max_iter < 1 or cfg.grad_tol <= 0 or cfg.tie_tol < 0 or cfg.n_random_starts < 0:
            raise ValueError("invalid solver configuration")
        return cfg


@dataclass(frozen=True, eq=False)
class FrechetResult:
    mean: ManifoldPoint
    value: float
    candidates: list = field(default_factory=list)
    converged: bool = True
    iterations: int = 0


def _select(geometry, points, values, tie_tol, dedupe_tol, rng):
    """Distinct candidates sorted by value and the uniformly drawn winner."""
    order = np.argsort(values, kind="stable")
    distinct = []
    for i in order:
        if all(geometry.distance(points[i], points[j]) > dedupe_tol for j in distinct):
            distinct.append(i)
    best = values[distinct[0]]
    ties = [i for i in distinct if values[i] <= best + tie_tol]
    ties.sort(key=lambda i: tuple(np.round(geometry.canonical(points[i]), 12)))
    u = rng.random()  # always consume exactly one draw
    return ties[min(int(u * len(ties)), len(ties) - 1)], distinct


# ---------------------------------------------------------------------------
# exact circle algorithm


def circle_candidates(angles, weights, tol=1e-12):
    """Local minimisers of the weighted Fréchet function on the circle.

    The circle is cut at the antipodes of the atoms; on each arc the
    function is a quadratic whose minimiser is the weighted mean of suitably
    lifted angles.  Returns ``(candidates, values)`` of the feasible ones.
    """
    angles = np.asarray(angles, float).reshape(-1)
    w = np.asarray(weights, float).reshape(-1)
    w = w / w.sum()
    beta = np.mod(angles + np.pi, TWO_PI)
    order = np.argsort(beta, kind="stable")
    beta, w = beta[order], w[order]
    cw = np.cumsum(w)
    m = np.sum(w * beta) - np.pi + TWO_PI * cw
    s2 = np.sum(w * (beta - np.pi) ** 2) + np.cumsum(4.0 * np.pi * w * beta)
    vals = s2 - m * m
    upper = np.append(beta[1:], beta[0] + TWO_PI)
    ok = (m >= beta - tol) & (m <= upper + tol)
    return np.mod(m[ok], TWO_PI), vals[ok]


def _circle_mean(angles, w, config, rng):
    cands, approx = circle_candidates(angles, w)
    # recompute exactly for the near-best ones to avoid cancellation
    near = approx <= approx.min() + config.tie_tol + 1e-9
    cands = cands[near]
    exact = np.sum(w * wrap_angle(angles[None, :] - cands[:, None]) ** 2, axis=1)
    g = Circle()
    idx, distinct = _select(g, cands[:, None], exact, config.tie_tol, 1e-12, rng)
    return cands[idx], exact[idx], [(cands[i], exact[i]) for i in distinct]


# ---------------------------------------------------------------------------
# batched Riemannian descent


def descend(geometry, atoms, weights, starts, config: SolverConfig):
    """Riemannian gradient descent for many (weights, start) problems at once.

    ``atoms`` has shape ``(A,) + amb``, ``weights`` ``(N, A)`` and ``starts``
    ``(N,) + amb``.  Returns ``(points, values, grad_norms, iterations)``.
    """
    atoms = np.asarray(atoms)
    X = np.array(starts, dtype=geometry.dtype, copy=True)
    W = np.asarray(weights, float)
    N = X.shape[0]

    def evaluate(P, Wp):
        L = geometry.log(P[:, None], atoms[None])
        D = geometry.distance(P[:, None], atoms[None])
        F = np.sum(Wp * D * D, axis=1)
        G = -2.0 * np.sum(Wp[..., None] * L, axis=1)
        return F, G

    F, G = evaluate(X, W)
    gn = geometry.norm(G)
    eta = np.full(N, 0.5)
    active = gn >= config.grad_tol
    it = 0
    while it < config.max_iter and np.any(active):
        it += 1
        idx = np.flatnonzero(active)
        Xa, Wa, Fa, Ga, ea = X[idx], W[idx], F[idx], G[idx], eta[idx]
        accepted = np.zeros(idx.size, bool)
        Xn = Xa.copy()
        Fn = Fa.copy()
        step = ea.copy()
        for _ in range(60):
            todo = np.flatnonzero(~accepted)
            if todo.size == 0:
                break
            trial = geometry.exp(Xa[todo], -step[todo, None] * Ga[todo])
            ft = weighted_value(geometry, atoms, Wa[todo], trial)
            g2 = geometry.inner(Ga[todo], Ga[todo])
            slack = 8 * np.finfo(float).eps * np.abs(Fa[todo])
            ok = ft <= Fa[todo] - 1e-4 * step[todo] * g2 + slack
            good = todo[ok]
            Xn[good], Fn[good] = trial[ok], ft[ok]
            accepted[good] = True
            step[todo[~ok]] *= 0.5
        stalled = ~accepted
        Fnew, Gnew = evaluate(Xn, Wa)
        # Barzilai-Borwein step for the next iteration (ambient approximation)
        s = -step[:, None] * Ga
        y = Gnew - Ga
        sy = geometry.inner(s, y)
        ss = geometry.inner(s, s)
        with np.errstate(divide="ignore", invalid="ignore"):
            bb = np.where(sy > 0, ss / sy, 2.0 * step)
        eta[idx] = np.clip(bb, 1e-4, 1e4)
        X[idx], F[idx], G[idx] = Xn, Fnew, Gnew
        gn[idx] = geometry.norm(Gnew)
        active[idx] = (gn[idx] >= config.grad_tol) & ~stalled
    return X, F, gn, it


def _farthest_points(geometry, atoms, weights, count):
    first = int(np.argmax(weights))
    chosen = [first]
    d = geometry.distance(atoms, atoms[first])
    while len(chosen) < min(count, len(atoms)):
        j = int(np.argmax(d))
        if d[j] <= 0:
            break
        chosen.append(j)
        d = np.minimum(d, geometry.distance(atoms, atoms[j]))
    return atoms[chosen]


def default_starts(geometry, atoms, weights, config, rng, extra=None):
    pos = weights > 0
    a, w = atoms[pos], weights[pos]
    if len(a) <= config.max_atom_starts:
        starts = [a]
    else:
        starts = [_farthest_points(geometry, a, w, config.n_sample_starts)]
    ext = geometry.extrinsic_mean(a, w)
    if ext is not None:
        starts.append(np.asarray(ext)[None])
    if extra is not None:
        starts.append(np.asarray(extra).reshape((-1,) + geometry.ambient_shape))
    if config.n_random_starts:
        starts.append(geometry.random_point(rng, config.n_random_starts))
    return np.concatenate([np.asarray(s, dtype=geometry.dtype) for s in starts])


def batched_means(geometry, atoms, weights, config: SolverConfig, rngs, starts=None):
    """Fréchet means for a stack of weight vectors over common atoms.

    ``weights`` has shape ``(P, A)``; ``rngs`` holds one generator per
    problem (used for random starts and the tie-break draw).  ``starts``
    optionally gives a ``(P, S) + amb`` array replacing the default starts.
    Returns a list of :class:`FrechetResult`.
    """
    atoms = np.asarray(atoms)
    weights = np.asarray(weights, float)
    P = weights.shape[0]
    if isinstance(geometry, (Euclidean, Circle, FlatTorus)):
        return [
            _weighted_mean(geometry, atoms, weights[i], config, rngs[i]) for i in range(P)
        ]
    if starts is None:
        per = [default_starts(geometry, atoms, weights[i], config, rngs[i]) for i in range(P)]
    else:
        per = [np.asarray(starts[i]) for i in range(P)]
    counts = [len(s) for s in per]
    flat_starts = np.concatenate(per)
    flat_w = np.repeat(weights, counts, axis=0)
    X, F, gn, it = descend(geometry, atoms, flat_w, flat_starts, config)
    out = []
    lo = 0
    for i in range(P):
        hi = lo + counts[i]
        pts, vals = X[lo:hi], F[lo:hi]
        j, distinct = _select(geometry, pts, vals, config.tie_tol, config.dedupe_tol, rngs[i])
        out.append(
            FrechetResult(
                mean=ManifoldPoint(geometry, pts[j]),
                value=float(vals[j]),
                candidates=[(ManifoldPoint(geometry, pts[d]), float(vals[d])) for d in distinct],
                converged=bool(gn[lo + j] < config.grad_tol),
                iterations=it,
            )
        )
        lo = hi
    return out


def _weighted_mean(geometry, atoms, weights, config, rng, extra_starts=None):
    atoms = np.asarray(atoms)
    w = np.asarray(weights, float)
    w = w / w.sum()
    if isinstance(geometry, Euclidean):
        mean = w @ atoms
        val = float(np.sum(w * np.sum((atoms - mean) ** 2, axis=1)))
        rng.random()
        pt = ManifoldPoint(geometry, mean)
        return FrechetResult(pt, val, [(pt, val)], True, 0)
    if isinstance(geometry, Circle):
        c, v, cands = _circle_mean(atoms[:, 0], w, config, rng)
        pt = ManifoldPoint(geometry, np.array([c]))
        return FrechetResult(
            pt, float(v), [(ManifoldPoint(geometry, np.array([a])), float(b)) for a, b in cands]
        )
    if isinstance(geometry, FlatTorus):
        coords, total = [], 0.0
        for j in range(geometry.m):
            c, v, _ = _circle_mean(atoms[:, j], w, config, rng)
            coords.append(c)
            total += v
        pt = ManifoldPoint(geometry, np.array(coords))
        return FrechetResult(pt, float(total), [(pt, float(total))])
    starts = default_starts(geometry, atoms, w, config, rng, extra_starts)
    return batched_means(geometry, atoms, w[None], config, [rng], starts=[starts])[0]


def compress(geometry, arr):
    """Distinct points of an ambient array and their relative frequencies."""
    arr = np.asarray(arr)
    flat = arr.reshape(len(arr), -1)
    if np.iscomplexobj(flat):
        flat = np.concatenate([flat.real, flat.imag], axis=1)
    _, first, counts = np.unique(flat, axis=0, return_index=True, return_counts=True)
    return arr[first], counts / counts.sum()


def _rng_for(config, rng):
    return rng if rng is not None else np.random.default_rng(config.seed)


def empirical_mean(sample, config: SolverConfig | None = None, rng=None, geometry=None):
    """Fréchet sample mean of a list of points (or an ambient array + ``geometry``)."""
    config = config or SolverConfig()
    rng = _rng_for(config, rng)
    if isinstance(sample, np.ndarray):
        if geometry is None:
            raise ValueError("an ambient array needs an explicit geometry")
        if len(sample) == 0:
            raise EmptySample("sample is empty")
        arr = sample
    else:
        sample = list(sample)
        if not sample:
            raise EmptySample("sample is empty")
        geometry = sample[0].geometry
        arr = _as_array(geometry, sample)
    atoms, w = compress(geometry, arr)
    return _weighted_mean(geometry, atoms, w, config, rng)


def _circle_population_mean(law, config, rng, grid=720):
    """Grid bracketing plus root finding on the derivative for circle laws."""
    g = law.geometry
    theta = np.arange(grid) * (TWO_PI / grid)
    vals = np.array([frechet_value(law, ManifoldPoint(g, np.array([t]))) for t in theta])
    spread = vals.max() - vals.min()
    if spread <= config.tie_tol:
        # a flat Fréchet function: every grid point is a minimiser
        roots = theta
    else:
        roots = []
        for i in np.flatnonzero((vals <= np.roll(vals, 1)) & (vals <= np.roll(vals, -1))):
            a, b = theta[i] - TWO_PI / grid, theta[i] + TWO_PI / grid
            ga, gb = _law_gradient_circle(law, a), _law_gradient_circle(law, b)
            if ga > 0 and gb < 0:
                roots.append(optimize.brentq(lambda x: _law_gradient_circle(law, x), a, b, xtol=1e-15))
            else:
                roots.append(theta[i])
        roots = np.mod(np.array(roots), TWO_PI)
    values = np.array([frechet_value(law, ManifoldPoint(g, np.array([r]))) for r in roots])
    idx, distinct = _select(g, roots[:, None], values, config.tie_tol, 1e-9, rng)
    pt = ManifoldPoint(g, np.array([roots[idx]]))
    return FrechetResult(
        pt,
        float(values[idx]),
        [(ManifoldPoint(g, np.array([roots[d]])), float(values[d])) for d in distinct],
    )


def population_mean(dist: Distribution, config: SolverConfig | None = None, rng=None):
    """Fréchet population mean of a law."""
    config = config or SolverConfig()
    rng = _rng_for(config, rng)
    g = dist.geometry
    a = dist.atoms()
    if a is None:
        if isinstance(g, Circle):
            return _circle_population_mean(dist, config, rng)
        raise TypeError("continuous laws are only supported on the circle")
    atoms, w = a
    return _weighted_mean(g, atoms, w, config, rng)


def variance(dist: Distribution, mean: ManifoldPoint) -> float:
    """Population variance: the Fréchet function at the Fréchet mean."""
    return frechet_value(dist, mean)


def tangent_coords(mean: ManifoldPoint, sample, tol: float = 1e-9):
    """Components of ``log(mean, x)`` in the tangent frame at ``mean``.

    Points within ``tol`` of the cut locus are dropped.  Returns
    ``(coords, n_dropped)`` with ``coords`` of shape ``(n_kept, dim)``.
    """
    g = mean.geometry
    arr = _as_array(g, sample) if not isinstance(sample, np.ndarray) else sample
    if len(arr) == 0:
        return np.zeros((0, g.dim)), 0
    if isinstance(g, FlatTorus):
        keep = np.all(np.abs(wrap_angle(arr - mean.coords)) < math.pi - tol, axis=1)
    elif isinstance(g, Euclidean):
        keep = np.ones(len(arr), bool)
    else:
        keep = g.distance(mean.coords, arr) < g.cut_distance - tol
    kept = arr[keep]
    amb = g.log(mean.coords, kept)
    return g.to_components(mean.coords, amb), int((~keep).sum())
