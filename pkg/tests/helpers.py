"""Shared generators for randomized geometry checks."""

import numpy as np

from smeary.geometry import Circle, Euclidean, FlatTorus, KendallPlanar, Sphere

GEOMETRIES = {
    "euclidean": Euclidean(3),
    "circle": Circle(),
    "torus": FlatTorus(2),
    "sphere": Sphere(2, 4.0),
    "kendall": KendallPlanar(5),
}


def random_tangent(g, p, rng, scale=0.95):
    """Ambient tangent vectors at the rows of ``p`` with norm below ``scale`` x injectivity radius."""
    n = p.shape[0]
    comps = rng.normal(size=(n, g.dim))
    comps /= np.linalg.norm(comps, axis=1, keepdims=True)
    reach = g.cut_distance if np.isfinite(g.cut_distance) else 5.0
    if isinstance(g, FlatTorus):
        reach = np.pi
    comps *= rng.uniform(0.0, scale * reach, size=(n, 1))
    return np.stack([g.from_components(p[i], comps[i]) for i in range(n)]), comps


def random_isometry(g, rng):
    """A callable mapping ambient point arrays through a random isometry of ``g``."""
    if isinstance(g, Euclidean):
        q, _ = np.linalg.qr(rng.normal(size=(g.m, g.m)))
        shift = rng.normal(size=g.m)
        return lambda x: x @ q.T + shift
    if isinstance(g, Circle):
        a = rng.uniform(-np.pi, np.pi)
        sign = rng.choice([-1.0, 1.0])
        return lambda x: np.mod(sign * x + a, 2 * np.pi)
    if isinstance(g, FlatTorus):
        a = rng.uniform(-np.pi, np.pi, size=g.m)
        sign = rng.choice([-1.0, 1.0], size=g.m)
        perm = rng.permutation(g.m)
        return lambda x: np.mod(sign * x[..., perm] + a, 2 * np.pi)
    if isinstance(g, Sphere):
        q, _ = np.linalg.qr(rng.normal(size=(g.m + 1, g.m + 1)))
        return lambda x: x @ q.T
    if isinstance(g, KendallPlanar):
        # relabelling landmarks and reflecting the plane are isometries of shape space
        perm = rng.permutation(g.k)
        conj = bool(rng.integers(2))
        phase = np.exp(1j * rng.uniform(0, 2 * np.pi))
        return lambda x: phase * (np.conj(x[..., perm]) if conj else x[..., perm])
    raise TypeError(g)


def geometry_errors(g, n, rng):
    """Maximum violations of exp/log inversion, metric axioms and isometry invariance."""
    p = g.random_point(rng, n)
    q = g.random_point(rng, n)
    r = g.random_point(rng, n)
    v, comps = random_tangent(g, p, rng)
    err = {}
    e = g.exp(p, v)
    back = np.stack([g.to_components(p[i], g.log(p[i], e[i])) for i in range(n)])
    err["log_exp"] = float(np.max(np.abs(back - comps)))
    # exp(log) may leave the cut locus aside: q is almost surely not in it
    lq = g.log(p, q)
    err["exp_log"] = float(np.max(g.distance(g.exp(p, lq), q)))
    err["log_length"] = float(np.max(np.abs(g.norm(lq) - g.distance(p, q))))
    dpq, dqp = g.distance(p, q), g.distance(q, p)
    err["symmetry"] = float(np.max(np.abs(dpq - dqp)))
    err["identity"] = float(np.max(g.distance(p, p)))
    err["triangle"] = float(np.max(np.maximum(dpq - g.distance(p, r) - g.distance(r, q), 0.0)))
    err["positivity"] = float(np.max(np.maximum(-dpq, 0.0)))
    iso = random_isometry(g, rng)
    err["isometry"] = float(np.max(np.abs(g.distance(iso(p), iso(q)) - dpq)))
    return err
