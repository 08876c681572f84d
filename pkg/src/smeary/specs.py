"""Build geometries and laws from plain dictionaries (the config-file schema).

Geometry specs::

    {"name": "euclidean", "m": 2}
    {"name": "circle"}
    {"name": "torus", "m": 2}
    {"name": "sphere", "m": 2, "K": 1.0}
    {"name": "kendall", "k": 5}

Distribution specs (``type`` selects the law):

``von_mises``        ``mean_angle``, ``concentration`` (circle)
``smeary_circle``    ``concentration``, ``mean_angle``; the 2-smeary circle base
``kappa_mixture``    ``kappa`` and a nested ``base`` spec; the mean atom is
                     put at the base's population mean
``directional``      ``K``, ``epsilon`` and optionally ``m`` (sphere dimension)
``discrete``         ``geometry``, ``atoms`` (coordinate lists) and ``weights``

:func:`build_distribution` returns ``(law, mu)`` where ``mu`` is the
population Fréchet mean, known in closed form for the constructions.
"""

from __future__ import annotations

import numpy as np

from .frechet import DiscreteMixture, SolverConfig, VonMisesCircle, population_mean
from .geometry import Circle, Euclidean, FlatTorus, KendallPlanar, ManifoldPoint, Sphere
from .lab import construct_kappa_mixture, directional_construction, smeary_circle_base


class SpecError(ValueError):
    """A configuration entry that does not describe a valid object."""


def _keys(spec, allowed, what):
    extra = set(spec) - set(allowed)
    if extra:
        raise SpecError(f"unknown keys for {what}: {sorted(extra)}")


def build_geometry(spec: dict):
    if not isinstance(spec, dict) or "name" not in spec:
        raise SpecError("geometry spec needs a 'name'")
    name = spec["name"]
    try:
        if name == "euclidean":
            _keys(spec, ("name", "m"), name)
            return Euclidean(int(spec.get("m", 1)))
        if name == "circle":
            _keys(spec, ("name",), name)
            return Circle()
        if name == "torus":
            _keys(spec, ("name", "m"), name)
            return FlatTorus(int(spec.get("m", 2)))
        if name == "sphere":
            _keys(spec, ("name", "m", "K"), name)
            return Sphere(int(spec.get("m", 2)), float(spec.get("K", 1.0)))
        if name == "kendall":
            _keys(spec, ("name", "k"), name)
            return KendallPlanar(int(spec.get("k", 5)))
    except (TypeError, ValueError) as exc:
        raise SpecError(f"invalid {name} geometry: {exc}") from exc
    raise SpecError(f"unknown geometry {name!r}")


def build_distribution(spec: dict, config: SolverConfig | None = None):
    """Return ``(law, mu, extras)`` for a distribution spec.

    ``extras`` carries construction-specific data, for instance the
    degenerate direction of the directional law.
    """
    if not isinstance(spec, dict) or "type" not in spec:
        raise SpecError("distribution spec needs a 'type'")
    kind = spec["type"]
    config = config or SolverConfig()
    try:
        if kind == "von_mises":
            _keys(spec, ("type", "mean_angle", "concentration"), kind)
            law = VonMisesCircle(float(spec.get("mean_angle", 0.0)), float(spec["concentration"]))
            return law, Circle().point(law.mean_angle), {}
        if kind == "smeary_circle":
            _keys(spec, ("type", "concentration", "mean_angle"), kind)
            angle = float(spec.get("mean_angle", 0.0))
            law, profile = smeary_circle_base(float(spec.get("concentration", 1.0)), angle)
            return law, Circle().point(angle), {"profile": profile.to_dict()}
        if kind == "kappa_mixture":
            _keys(spec, ("type", "kappa", "base"), kind)
            base, mu, _ = build_distribution(spec["base"], config)
            kappa = float(spec["kappa"])
            return construct_kappa_mixture(base, mu, kappa), mu, {"predicted_limit": 1.0 / kappa**2}
        if kind == "directional":
            _keys(spec, ("type", "K", "epsilon", "m"), kind)
            geometry = Sphere(int(spec.get("m", 2)), float(spec.get("K", 1.0)))
            c = directional_construction(geometry, epsilon=float(spec.get("epsilon", 1.0 / 3.0)))
            return c.law, c.mu, {"construction": c, "degenerate_direction": c.w_dir}
        if kind == "discrete":
            _keys(spec, ("type", "geometry", "atoms", "weights"), kind)
            g = build_geometry(spec["geometry"])
            atoms = [g.point(np.asarray(a)) for a in spec["atoms"]]
            weights = spec.get("weights") or [1.0 / len(atoms)] * len(atoms)
            law = DiscreteMixture([(float(w), a) for w, a in zip(weights, atoms)])
            mu = population_mean(law, config, np.random.default_rng(config.seed)).mean
            return law, mu, {}
    except SpecError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"invalid {kind} distribution: {exc}") from exc
    raise SpecError(f"unknown distribution type {kind!r}")


def build_point(geometry, coords) -> ManifoldPoint:
    try:
        return geometry.point(np.asarray(coords))
    except (TypeError, ValueError) as exc:
        raise SpecError(f"invalid point: {exc}") from exc
