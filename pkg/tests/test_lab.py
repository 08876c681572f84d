import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import optimize

from smeary.frechet import DiscreteMixture, frechet_value
from smeary.geometry import Circle, Euclidean, Sphere
from smeary.lab import (
    InsufficientData,
    ModulationCurve,
    SingularProfile,
    SmearinessProfile,
    ZeroVariance,
    classify_regime,
    construct_kappa_mixture,
    directional_construction,
    estimate_rate,
    gclt_covariance,
    hessian_closed_form,
    hessian_direct_form,
    hessian_fd,
    kappa_for_target,
    modulation_curve,
    second_derivative_along,
    smeary_circle_base,
    solve_t,
    solve_t_empirical,
)


def random_spd(rng, d):
    a = rng.normal(size=(d, d))
    return a @ a.T + d * np.eye(d)


def random_rotation(rng, d):
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return q


# ---------------------------------------------------------------- GCLT algebra


@pytest.mark.parametrize("r", [0.0, 1.0, 2.0])
def test_gclt_identity_rotation(r):
    rng = np.random.default_rng(int(r))
    C = random_spd(rng, 3)
    T = rng.uniform(0.5, 2.0, 3)
    got = gclt_covariance(SmearinessProfile(r, np.eye(3), T), C)
    want = 4 / (r + 2) ** 2 * np.diag(1 / T) @ C @ np.diag(1 / T)
    assert np.max(np.abs(got - want)) < 1e-12


def test_gclt_r0_with_unit_T_is_classical():
    C = random_spd(np.random.default_rng(0), 2)
    # f(x) = |x|^2 has Hessian 2 I, and 4/(0+2)^2 * C = Hess^-1 (4 C) Hess^-1
    assert_allclose(gclt_covariance(SmearinessProfile(0, np.eye(2), [1, 1]), C), C, atol=1e-14)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_gclt_rotation_acts_by_conjugation(seed):
    rng = np.random.default_rng(seed)
    R = random_rotation(rng, 3)
    C = random_spd(rng, 3)
    p = SmearinessProfile(1.0, R, np.ones(3))
    assert_allclose(gclt_covariance(p, C), 4 / 9 * R @ C @ R.T, atol=1e-12)


def test_gclt_symmetric_positive():
    rng = np.random.default_rng(3)
    out = gclt_covariance(SmearinessProfile(2.0, random_rotation(rng, 4), rng.uniform(0.1, 1, 4)), random_spd(rng, 4))
    assert_allclose(out, out.T, atol=1e-12)
    assert np.all(np.linalg.eigvalsh(out) > 0)


def test_profile_validation():
    with pytest.raises(ValueError):
        SmearinessProfile(-1.0, np.eye(1), [1.0])
    with pytest.raises(ValueError):
        SmearinessProfile(1.0, [[2.0]], [1.0])
    with pytest.raises(ValueError):
        SmearinessProfile(1.0, np.eye(2), [1.0, 0.0])
    p = SmearinessProfile(2.0, np.eye(2), [1.0, 0.0], directional_flags=(False, True))
    with pytest.raises(SingularProfile):
        gclt_covariance(p, np.eye(2))


# ---------------------------------------------------------------- root of x cot x


@pytest.mark.parametrize("K", [0.25, 1.0, 4.0])
@pytest.mark.parametrize("eps", [0.1, 1 / 3, 0.7])
def test_solve_t_matches_independent_root(K, eps):
    target = -(1 - eps) / (2 * eps)
    x = optimize.brentq(lambda x: math.cos(x) * x - target * math.sin(x), math.pi / 2, math.pi - 1e-12, xtol=1e-15)
    assert math.isclose(solve_t(K, eps), x / math.sqrt(K), rel_tol=1e-12)
    assert abs(hessian_closed_form(K, eps, solve_t(K, eps))) < 1e-12


def test_solve_t_value_for_unit_sphere():
    assert math.isclose(solve_t(1.0, 1 / 3), 2.0287578381, rel_tol=1e-9)


def test_solve_t_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        solve_t(1.0, 1.0)
    with pytest.raises(ValueError):
        solve_t(-1.0, 0.5)


@pytest.mark.parametrize("K", [1.0, 4.0])
def test_empirical_t_zeroes_the_direct_second_derivative(K):
    t = solve_t_empirical(K, 1 / 3)
    assert abs(hessian_direct_form(K, 1 / 3, t)) < 1e-6
    # x cot x = -(1 - eps)/eps = -2
    x = t * math.sqrt(K)
    assert math.isclose(x / math.tan(x), -2.0, rel_tol=1e-6)


@pytest.mark.parametrize("K", [1.0, 4.0])
def test_directional_construction_hessian(K):
    c = directional_construction(Sphere(2, K), epsilon=1 / 3)
    assert abs(c.hessian_ww) < 1e-4
    assert c.hessian_vv > 0.1
    assert_allclose(c.hessian, c.hessian.T, atol=1e-12)
    rep = c.report()
    assert abs(rep["hessian_closed_form_at_closed_form_t"]) < 1e-12
    assert rep["t_empirical"] > rep["t_closed_form"]


def test_directional_law_has_mean_at_pole():
    c = directional_construction(Sphere(2, 1.0))
    g = c.law.geometry
    assert_allclose(c.mu.coords, [0, 0, 1.0])
    # the three atoms lie on one geodesic through mu
    atoms = np.stack([p.coords for _, p in c.law.components])
    assert np.allclose(atoms[:, 1], 0.0, atol=1e-14)
    assert math.isclose(g.distance(atoms[1], c.mu.coords), c.t, rel_tol=1e-12)


# ---------------------------------------------------------------- Hessians


def test_hessian_of_euclidean_law_is_twice_identity():
    g = Euclidean(3)
    rng = np.random.default_rng(0)
    law = DiscreteMixture([(0.25, g.point(x)) for x in rng.normal(size=(4, 3))])
    H = hessian_fd(law, g.point(rng.normal(size=3)), h=0.1)
    assert_allclose(H, 2 * np.eye(3), atol=1e-8)


def test_smeary_base_is_flat_to_fourth_order():
    law, profile = smeary_circle_base(concentration=1.0)
    g = Circle()
    mu = g.point(0.0)
    assert abs(second_derivative_along(law, mu, [1.0], h=1e-2)) < 1e-6
    f0 = frechet_value(law, mu)
    for x in (0.05, 0.1):
        rise = frechet_value(law, g.point(x)) - f0
        assert math.isclose(rise, profile.T[0] * x**4, rel_tol=2e-2)


# ---------------------------------------------------------------- constructions


def test_kappa_mixture_validation():
    law, _ = smeary_circle_base()
    mu = Circle().point(0.0)
    for bad in (0.0, 1.0, 1.2, -0.1):
        with pytest.raises(ValueError):
            construct_kappa_mixture(law, mu, bad)
    assert math.isclose(kappa_for_target(4.0), 0.5)
    with pytest.raises(ValueError):
        kappa_for_target(0.5)


def test_kappa_mixture_weights():
    law, _ = smeary_circle_base()
    mix = construct_kappa_mixture(law, Circle().point(0.0), 0.25)
    assert_allclose([w for w, _ in mix.components], [0.25, 0.75])


# ---------------------------------------------------------------- modulation


def euclidean_law():
    g = Euclidean(2)
    rng = np.random.default_rng(1)
    return DiscreteMixture([(0.2, g.point(x)) for x in rng.normal(size=(5, 2))])


def test_euclidean_modulation_near_one():
    law = euclidean_law()
    mu = law.geometry.point(sum(w * p.coords for w, p in law.components))
    curve = modulation_curve(law, mu, [10, 100, 1000], B=400, seed=3)
    for m, se in zip(curve.m_hat, curve.std_err):
        assert abs(m - 1) < 4 * se


def test_modulation_independent_of_threads_and_chunks():
    law = euclidean_law()
    mu = law.geometry.point(sum(w * p.coords for w, p in law.components))
    a = modulation_curve(law, mu, [5, 50], B=60, seed=9, chunk=60)
    b = modulation_curve(law, mu, [5, 50], B=60, seed=9, chunk=7, threads=2)
    assert a.to_csv() == b.to_csv()


def test_modulation_rejects_zero_variance():
    g = Circle()
    law = DiscreteMixture([(1.0, g.point(0.3))])
    with pytest.raises(ZeroVariance):
        modulation_curve(law, g.point(0.3), [10], B=10)


def test_curve_csv_round_trip():
    c = ModulationCurve([10, 100], [1.5, 2.25], [0.1, 0.2], 50, 0.3, 7)
    assert ModulationCurve.from_csv(c.to_csv()).to_csv() == c.to_csv()


def test_estimate_rate_recovers_power_law():
    n = [10, 100, 1000, 10000]
    c = ModulationCurve(n, [x**0.4 for x in n], [0.0] * 4, 1, 1.0, 0)
    est = estimate_rate(c)
    assert math.isclose(est.slope, 0.4, rel_tol=1e-12)
    assert math.isclose(est.r_hat, 2 / 3, rel_tol=1e-12)
    with pytest.raises(InsufficientData):
        estimate_rate(ModulationCurve(n[:2], [1, 1], [0, 0], 1, 1.0, 0))


def test_classify_regimes():
    n = [10, 100, 1000, 10000]
    se = [0.05] * 4
    assert classify_regime(ModulationCurve(n, [1.0, 0.98, 1.03, 1.01], se, 1, 1.0, 0)).regime == "Euclidean"
    assert classify_regime(ModulationCurve(n, [2.0, 3.9, 4.0, 4.0], se, 1, 1.0, 0)).regime == "FiniteSampleSmeary"
    assert classify_regime(ModulationCurve(n, [2.0, 6.0, 18.0, 55.0], se, 1, 1.0, 0)).regime == "Smeary"
    with pytest.raises(InsufficientData):
        classify_regime(ModulationCurve([10, 20, 30, 40], [1] * 4, se, 1, 1.0, 0))


def test_kappa_mixture_levels_off():
    law, _ = smeary_circle_base()
    mu = Circle().point(0.0)
    mix = construct_kappa_mixture(law, mu, 0.5)
    curve = modulation_curve(mix, mu, [100, 1000], B=150, seed=1)
    assert curve.m_hat[-1] > 2.0
    assert curve.m_hat[-1] < 6.0
