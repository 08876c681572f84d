import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from smeary.geometry import (
    Circle,
    CutLocusError,
    Euclidean,
    FlatTorus,
    GeometryMismatch,
    KendallPlanar,
    Sphere,
    dist,
    exp,
    in_cut_locus,
    log,
    tangent_basis,
    tangent_frame,
    wrap_angle,
)

from helpers import GEOMETRIES, geometry_errors

seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.mark.parametrize("name", sorted(GEOMETRIES))
def test_randomized_geometry_identities(name):
    errs = geometry_errors(GEOMETRIES[name], 500, np.random.default_rng(7))
    assert max(errs.values()) < 1e-12, errs


@pytest.mark.parametrize("name", sorted(GEOMETRIES))
def test_frame_is_orthonormal(name):
    g = GEOMETRIES[name]
    p = g.random_point(np.random.default_rng(3), 4)
    for row in p:
        B = g.basis(row)
        gram = g.inner(B[:, None], B[None, :])
        assert_allclose(gram, np.eye(g.dim), atol=1e-13)


@pytest.mark.parametrize("name", sorted(GEOMETRIES))
def test_components_round_trip(name):
    g = GEOMETRIES[name]
    rng = np.random.default_rng(5)
    p = g.random_point(rng, 1)[0]
    c = rng.normal(size=g.dim)
    assert_allclose(g.to_components(p, g.from_components(p, c)), c, atol=1e-13)


@given(seeds)
@settings(max_examples=50, deadline=None)
def test_sphere_distance_scales_with_radius(seed):
    rng = np.random.default_rng(seed)
    unit, small = Sphere(2, 1.0), Sphere(2, 9.0)
    p, q = unit.random_point(rng, 2)
    assert math.isclose(small.distance(p / 3, q / 3), unit.distance(p, q) / 3, rel_tol=1e-12, abs_tol=1e-15)


@given(seeds)
@settings(max_examples=50, deadline=None)
def test_kendall_distance_ignores_similarities(seed):
    rng = np.random.default_rng(seed)
    g = KendallPlanar(5)
    z = rng.normal(size=5) + 1j * rng.normal(size=5)
    w = rng.normal(size=5) + 1j * rng.normal(size=5)
    moved = 2.5 * np.exp(1j * rng.uniform(0, 6.3)) * z + (1.0 - 3.0j)
    d1 = dist(g.point(z), g.point(w))
    d2 = dist(g.point(moved), g.point(w))
    assert abs(d1 - d2) < 1e-12
    assert 0.0 <= d1 <= math.pi / 2 + 1e-12


def test_circle_antipode_is_cut_locus():
    g = Circle()
    a, b = g.point(0.3), g.point(0.3 + math.pi)
    assert in_cut_locus(a, b)
    with pytest.raises(CutLocusError):
        log(a, b)
    assert math.isclose(dist(a, b), math.pi)


def test_sphere_antipode_raises():
    g = Sphere(2, 4.0)
    p = g.point([0.0, 0.0, 0.5])
    with pytest.raises(CutLocusError):
        log(p, g.point([0.0, 0.0, -0.5]))
    assert math.isclose(dist(p, g.point([0.0, 0.0, -0.5])), math.pi / 2)


def test_torus_cut_locus_is_per_coordinate():
    g = FlatTorus(2)
    p = g.point([0.0, 0.0])
    q = g.point([math.pi, 0.1])
    assert in_cut_locus(p, q)
    assert not in_cut_locus(p, g.point([3.0, 3.0]))


def test_kendall_cut_locus_at_right_angle():
    g = KendallPlanar(3)
    a = g.point([0.0, 1.0, -1.0])
    # orthogonal pre-shape: <a, b> = 0 for every rotation of b
    b = g.point([2.0, -1.0, -1.0])
    assert math.isclose(dist(a, b), math.pi / 2, abs_tol=1e-12)
    assert in_cut_locus(a, b)


def test_euclidean_has_no_cut_locus():
    g = Euclidean(2)
    assert not in_cut_locus(g.point([0, 0]), g.point([1e6, -1e6]))


def test_mixed_geometries_rejected():
    with pytest.raises(GeometryMismatch):
        dist(Circle().point(0.0), Sphere(1, 1.0).point([1.0, 0.0]))


def test_tangent_vector_dimension_checked():
    g = Sphere(2, 1.0)
    with pytest.raises(ValueError):
        g.tangent(g.point([0, 0, 1.0]), [1.0, 2.0, 3.0])


def test_exp_of_basis_vector_moves_unit_distance():
    g = Sphere(3, 1.0)
    p = g.point([0, 0, 0, 1.0])
    for v in tangent_basis(p):
        assert math.isclose(dist(p, exp(0.5 * v)), 0.5, rel_tol=1e-13)
    assert tangent_frame(p).shape == (3, 4)


def test_wrap_angle_range():
    x = np.linspace(-20, 20, 1001)
    w = wrap_angle(x)
    assert np.all(w >= -math.pi) and np.all(w < math.pi)
    assert_allclose(np.cos(w), np.cos(x), atol=1e-12)
