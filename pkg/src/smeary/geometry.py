"""Geometry kernels for the manifolds used throughout the package.

Every geometry works on plain numpy arrays in an *ambient* representation
and broadcasts over leading axes, so the Fréchet solvers can push whole
batches of base points and atoms through one call:

==================  =========================  ==========================
geometry            point coordinates          intrinsic dimension
==================  =========================  ==========================
``Euclidean(m)``    vector in R^m              m
``Circle()``        angle in [0, 2pi), shape 1 1
``Sphere(m, K)``    R^(m+1), norm 1/sqrt(K)    m
``FlatTorus(m)``    angles in [0, 2pi)^m       m
``KendallPlanar(k)`` centred unit vector in C^k 2k - 4
==================  =========================  ==========================

Tangent vectors are ambient arrays as well; :meth:`Geometry.basis` gives an
orthonormal frame used to turn them into ``dim`` real components.

The typed wrappers :class:`ManifoldPoint` / :class:`TangentVector` and the
module level functions :func:`dist`, :func:`exp`, :func:`log`,
:func:`in_cut_locus` and :func:`tangent_basis` are the user facing surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class GeometryMismatch(ValueError):
    """Raised when objects living on different geometries are combined."""


class CutLocusError(ValueError):
    """Raised when the logarithm is requested at (or next to) the cut locus."""


def wrap_angle(x):
    """Map angle differences into [-pi, pi)."""
    return np.mod(np.asarray(x, dtype=float) + np.pi, TWO_PI) - np.pi


def _greedy_frame(constraints, frame, count):
    """Orthonormal completion of ``constraints`` picked greedily from ``frame``.

    Both arguments are real 2-d arrays (rows are vectors).  At every step the
    frame vector with the largest residual after projecting out everything
    chosen so far is taken; ties go to the lowest index, which keeps the
    result deterministic.
    """
    chosen = []
    span = [c / np.linalg.norm(c) for c in constraints]
    # re-orthonormalise the constraints themselves
    q = []
    for c in span:
        for u in q:
            c = c - (u @ c) * u
        nrm = np.linalg.norm(c)
        if nrm > 1e-12:
            q.append(c / nrm)
    residual = frame.astype(float).copy()
    for u in q:
        residual -= np.outer(residual @ u, u)
    for _ in range(count):
        norms = np.linalg.norm(residual, axis=1)
        j = int(np.argmax(norms))
        e = residual[j] / norms[j]
        # one extra pass of Gram-Schmidt for accuracy
        for u in q + chosen:
            e = e - (u @ e) * u
        e /= np.linalg.norm(e)
        chosen.append(e)
        residual -= np.outer(residual @ e, e)
    return np.array(chosen)


@dataclass(frozen=True)
class Geometry:
    """Base class; concrete geometries override the array kernels."""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def ambient_shape(self) -> tuple:
        raise NotImplementedError

    dtype = float

    @property
    def cut_distance(self) -> float:
        """Distance from any point to its cut locus (inf when empty)."""
        raise NotImplementedError

    # -- array kernels -----------------------------------------------------
    def distance(self, a, b):
        raise NotImplementedError

    def exp(self, p, v):
        raise NotImplementedError

    def log(self, p, q):
        raise NotImplementedError

    def project(self, coords):
        """Normalise raw coordinates to the canonical representation."""
        return np.asarray(coords, dtype=self.dtype)

    def inner(self, u, v):
        """Riemannian inner product of ambient tangent vectors."""
        axes = tuple(range(-len(self.ambient_shape), 0))
        return np.sum(np.real(np.conj(u) * v), axis=axes)

    def norm(self, v):
        return np.sqrt(np.maximum(self.inner(v, v), 0.0))

    def basis(self, p):
        """``(dim,) + ambient_shape`` array of orthonormal tangent vectors at p."""
        raise NotImplementedError

    def to_components(self, p, v):
        basis = self.basis(p)
        return self.inner(v[..., None, :], basis)

    def from_components(self, p, comps):
        basis = self.basis(p)
        return np.tensordot(np.asarray(comps, dtype=float), basis, axes=([-1], [0]))

    def random_point(self, rng, size=()):
        raise NotImplementedError

    def extrinsic_mean(self, atoms, weights):
        """Cheap starting guess for the Fréchet mean (may return None)."""
        return None

    def canonical(self, p):
        """Representative used for deterministic ordering of candidates."""
        return np.asarray(p)

    def point(self, coords) -> "ManifoldPoint":
        return ManifoldPoint(self, self.project(coords))

    def tangent(self, base: "ManifoldPoint", components) -> "TangentVector":
        return TangentVector(self, base, np.asarray(components, dtype=float))

    def zero(self, base: "ManifoldPoint") -> "TangentVector":
        return self.tangent(base, np.zeros(self.dim))


@dataclass(frozen=True)
class Euclidean(Geometry):
    m: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("Euclidean dimension must be >= 1")

    @property
    def dim(self):
        return self.m

    @property
    def ambient_shape(self):
        return (self.m,)

    @property
    def cut_distance(self):
        return math.inf

    def distance(self, a, b):
        return np.linalg.norm(np.asarray(b, float) - np.asarray(a, float), axis=-1)

    def exp(self, p, v):
        return np.asarray(p, float) + v

    def log(self, p, q):
        return np.asarray(q, float) - np.asarray(p, float)

    def basis(self, p):
        return np.eye(self.m)

    def to_components(self, p, v):
        return np.asarray(v, float)

    def from_components(self, p, comps):
        return np.asarray(comps, float)

    def random_point(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        return rng.standard_normal(size + (self.m,))

    def extrinsic_mean(self, atoms, weights):
        return weights @ atoms


@dataclass(frozen=True)
class Circle(Geometry):
    """Unit circle; points are stored as a length-1 angle array."""

    @property
    def dim(self):
        return 1

    @property
    def ambient_shape(self):
        return (1,)

    @property
    def cut_distance(self):
        return math.pi

    def project(self, coords):
        return np.mod(np.asarray(coords, dtype=float).reshape(np.shape(coords) or (1,)), TWO_PI)

    def distance(self, a, b):
        return np.abs(wrap_angle(np.asarray(b) - np.asarray(a)))[..., 0]

    def exp(self, p, v):
        return np.mod(np.asarray(p, float) + v, TWO_PI)

    def log(self, p, q):
        return wrap_angle(np.asarray(q) - np.asarray(p))

    def basis(self, p):
        return np.ones((1, 1))

    def to_components(self, p, v):
        return np.asarray(v, float)

    def from_components(self, p, comps):
        return np.asarray(comps, float)

    def random_point(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        return rng.uniform(0.0, TWO_PI, size + (1,))


@dataclass(frozen=True)
class FlatTorus(Geometry):
    """Product of ``m`` unit circles with the flat product metric."""

    m: int = 2

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("torus dimension must be >= 1")

    @property
    def dim(self):
        return self.m

    @property
    def ambient_shape(self):
        return (self.m,)

    @property
    def cut_distance(self):
        # componentwise: the cut locus is reached once any angle is antipodal
        return math.pi

    def project(self, coords):
        return np.mod(np.asarray(coords, dtype=float), TWO_PI)

    def distance(self, a, b):
        return np.linalg.norm(wrap_angle(np.asarray(b) - np.asarray(a)), axis=-1)

    def exp(self, p, v):
        return np.mod(np.asarray(p, float) + v, TWO_PI)

    def log(self, p, q):
        return wrap_angle(np.asarray(q) - np.asarray(p))

    def basis(self, p):
        return np.eye(self.m)

    def to_components(self, p, v):
        return np.asarray(v, float)

    def from_components(self, p, comps):
        return np.asarray(comps, float)

    def random_point(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        return rng.uniform(0.0, TWO_PI, size + (self.m,))


@dataclass(frozen=True)
class Sphere(Geometry):
    """Sphere S^m of constant sectional curvature K, radius 1/sqrt(K)."""

    m: int = 2
    K: float = 1.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("sphere dimension must be >= 1")
        if not self.K > 0:
            raise ValueError("sphere curvature K must be positive")

    @property
    def dim(self):
        return self.m

    @property
    def ambient_shape(self):
        return (self.m + 1,)

    @property
    def radius(self):
        return 1.0 / math.sqrt(self.K)

    @property
    def cut_distance(self):
        return math.pi / math.sqrt(self.K)

    def project(self, coords):
        x = np.asarray(coords, dtype=float)
        nrm = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(nrm == 0):
            raise ValueError("cannot project the origin onto the sphere")
        return x / nrm * self.radius

    def _angle(self, a, b):
        # robust angle between ambient points via atan2
        ua = np.asarray(a, float) / self.radius
        ub = np.asarray(b, float) / self.radius
        c = np.sum(ua * ub, axis=-1)
        perp = ub - c[..., None] * ua
        s = np.linalg.norm(perp, axis=-1)
        return np.arctan2(s, c), perp, s

    def distance(self, a, b):
        theta, _, _ = self._angle(a, b)
        return theta * self.radius

    def exp(self, p, v):
        p = np.asarray(p, float)
        v = np.asarray(v, float)
        r = np.linalg.norm(v, axis=-1, keepdims=True)
        sk = math.sqrt(self.K)
        with np.errstate(invalid="ignore", divide="ignore"):
            sinc = np.where(r > 0, np.sin(sk * r) / (sk * np.where(r > 0, r, 1.0)), 1.0)
        out = np.cos(sk * r) * p + sinc * v
        # re-normalise to stop drift over long iterations
        return out / np.linalg.norm(out, axis=-1, keepdims=True) * self.radius

    def log(self, p, q):
        theta, perp, s = self._angle(p, q)
        d = theta * self.radius
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(s > 0, d / np.where(s > 0, s, 1.0), 0.0)
        # perp lives on the unit sphere scale; rescale to radius
        return scale[..., None] * perp

    def basis(self, p):
        p = np.asarray(p, float)
        return _greedy_frame([p], np.eye(self.m + 1), self.m)

    def random_point(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        x = rng.standard_normal(size + (self.m + 1,))
        return self.project(x)

    def extrinsic_mean(self, atoms, weights):
        e = weights @ atoms
        nrm = np.linalg.norm(e, axis=-1, keepdims=True)
        if np.any(nrm < 1e-12):
            return None
        return e / nrm * self.radius

    def canonical(self, p):
        return np.asarray(p, float)


@dataclass(frozen=True)
class KendallPlanar(Geometry):
    """Kendall's planar shape space of ``k`` landmarks (complex projective model).

    Points are centred, unit-norm complex k-vectors (pre-shapes); two
    pre-shapes differing by a unit complex factor are the same shape.
    Tangent vectors are horizontal: centred and complex-orthogonal to the
    base pre-shape.
    """

    k: int = 3
    dtype = complex

    def __post_init__(self):
        if self.k < 3:
            raise ValueError("Kendall shape space needs k >= 3 landmarks")

    @property
    def dim(self):
        return 2 * self.k - 4

    @property
    def ambient_shape(self):
        return (self.k,)

    @property
    def cut_distance(self):
        return math.pi / 2

    def project(self, coords):
        z = np.asarray(coords)
        if not np.iscomplexobj(z):
            z = z.astype(complex)
        z = z - z.mean(axis=-1, keepdims=True)
        nrm = np.linalg.norm(z, axis=-1, keepdims=True)
        if np.any(nrm == 0):
            raise ValueError("degenerate configuration: all landmarks coincide")
        return z / nrm

    @staticmethod
    def _hermitian(a, b):
        return np.sum(np.conj(a) * b, axis=-1)

    def _align(self, p, q):
        """Rotate q so that <p, q> is real and nonnegative."""
        h = self._hermitian(p, q)
        r = np.abs(h)
        with np.errstate(invalid="ignore", divide="ignore"):
            phase = np.where(r > 0, np.conj(h) / np.where(r > 0, r, 1.0), 1.0)
        return q * phase[..., None], r

    def distance(self, a, b):
        b_al, r = self._align(a, b)
        s = np.linalg.norm(b_al - r[..., None] * a, axis=-1)
        return np.arctan2(s, r)

    def exp(self, p, v):
        p = np.asarray(p)
        r = np.linalg.norm(v, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            sinc = np.where(r > 0, np.sin(r) / np.where(r > 0, r, 1.0), 1.0)
        out = np.cos(r) * p + sinc * v
        return out / np.linalg.norm(out, axis=-1, keepdims=True)

    def log(self, p, q):
        q_al, r = self._align(p, q)
        u = q_al - r[..., None] * p
        s = np.linalg.norm(u, axis=-1)
        theta = np.arctan2(s, r)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(s > 0, theta / np.where(s > 0, s, 1.0), 0.0)
        return scale[..., None] * u

    def _real(self, z):
        return np.concatenate([np.real(z), np.imag(z)], axis=-1)

    def _complex(self, x):
        return x[..., : self.k] + 1j * x[..., self.k:]

    def basis(self, p):
        p = np.asarray(p, dtype=complex)
        ones = np.ones(self.k, dtype=complex) / math.sqrt(self.k)
        constraints = [self._real(ones), self._real(1j * ones), self._real(p), self._real(1j * p)]
        frame = np.eye(2 * self.k)
        chosen = _greedy_frame(constraints, frame, self.dim)
        return self._complex(chosen)

    def random_point(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        z = rng.standard_normal(size + (self.k,)) + 1j * rng.standard_normal(size + (self.k,))
        return self.project(z)

    def extrinsic_mean(self, atoms, weights):
        # full Procrustes mean: leading eigenvector of sum_i w_i z_i z_i^*
        w = np.asarray(weights, float)
        a = np.asarray(atoms)
        s = np.einsum("...i,ij,ik->...jk", w, a, np.conj(a))
        _, vecs = np.linalg.eigh(s)
        return self.project(vecs[..., :, -1])

    def canonical(self, p):
        # fix the rotation so that the largest-modulus landmark is real positive
        p = np.asarray(p, dtype=complex)
        j = int(np.argmax(np.abs(p) + 1e-9 * np.arange(self.k)[::-1]))
        ph = p[j] / abs(p[j]) if abs(p[j]) > 0 else 1.0
        z = p / ph
        return np.concatenate([z.real, z.imag])


# ---------------------------------------------------------------------------
# typed wrappers


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    geometry: Geometry
    coords: np.ndarray = field(repr=True)

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=self.geometry.dtype))


@dataclass(frozen=True, eq=False)
class TangentVector:
    geometry: Geometry
    base: ManifoldPoint
    components: np.ndarray

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=float).reshape(-1)
        if comps.shape != (self.geometry.dim,):
            raise ValueError(
                f"tangent vector needs {self.geometry.dim} components, got {comps.shape[0]}"
            )
        if self.base.geometry != self.geometry:
            raise GeometryMismatch("base point lives on a different geometry")
        object.__setattr__(self, "components", comps)

    @property
    def ambient(self):
        return self.geometry.from_components(self.base.coords, self.components)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.components))

    def __mul__(self, s):
        return TangentVector(self.geometry, self.base, s * self.components)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


def _check_same(a: ManifoldPoint, b: ManifoldPoint):
    if a.geometry != b.geometry:
        raise GeometryMismatch(f"{a.geometry!r} vs {b.geometry!r}")


def dist(a: ManifoldPoint, b: ManifoldPoint) -> float:
    """Geodesic distance between two points on the same geometry."""
    _check_same(a, b)
    return float(a.geometry.distance(a.coords, b.coords))


def exp(v: TangentVector) -> ManifoldPoint:
    """Riemannian exponential of a tangent vector at its base point."""
    g = v.geometry
    return ManifoldPoint(g, g.exp(v.base.coords, v.ambient))


def in_cut_locus(base: ManifoldPoint, target: ManifoldPoint, tol: float = 1e-9) -> bool:
    """Distance-threshold test for membership in the cut locus of ``base``.

    For the torus the test is applied per angle, since the cut locus is
    reached as soon as one coordinate is antipodal.
    """
    _check_same(base, target)
    g = base.geometry
    if isinstance(g, Euclidean):
        return False
    if isinstance(g, FlatTorus):
        diffs = np.abs(wrap_angle(target.coords - base.coords))
        return bool(np.any(diffs >= math.pi - tol))
    return bool(g.distance(base.coords, target.coords) >= g.cut_distance - tol)


def log(base: ManifoldPoint, target: ManifoldPoint, tol: float = 1e-9) -> TangentVector:
    """Riemannian logarithm; raises :class:`CutLocusError` at the cut locus."""
    if in_cut_locus(base, target, tol):
        raise CutLocusError("target lies in the cut locus of base")
    g = base.geometry
    amb = g.log(base.coords, target.coords)
    return TangentVector(g, base, g.to_components(base.coords, amb))


def tangent_basis(base: ManifoldPoint) -> list[TangentVector]:
    """Orthonormal tangent frame at ``base`` as a list of tangent vectors."""
    g = base.geometry
    return [TangentVector(g, base, row) for row in np.eye(g.dim)]


def tangent_frame(base: ManifoldPoint) -> np.ndarray:
    """Ambient representation of :func:`tangent_basis` (rows are vectors)."""
    return base.geometry.basis(base.coords)
