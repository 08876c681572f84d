"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``ACCEPTANCE <k> PASS|FAIL`` line (also collected
in the terminal summary) before asserting.  Seeds are fixed in this file.
"""

import math
import time

import numpy as np

from smeary.buckles import load_defaults
from smeary.cli import power_table_reports
from smeary.frechet import DiscreteMixture, empirical_mean
from smeary.geometry import Circle, Euclidean, Sphere, wrap_angle
from smeary.lab import (
    DEFAULT_SAMPLE_SIZES,
    SmearinessProfile,
    construct_kappa_mixture,
    directional_construction,
    estimate_rate,
    gclt_covariance,
    hessian_closed_form,
    modulation_curve,
    smeary_circle_base,
    solve_t,
)

from helpers import GEOMETRIES, geometry_errors
from test_frechet import grid_argmin


def test_1_geometry_suite(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(20240101)
    worst = {}
    for name, g in GEOMETRIES.items():
        errs = geometry_errors(g, 2000, rng)
        worst[name] = max(errs.values())
    elapsed = time.perf_counter() - start
    err = max(worst.values())
    ok = err < 1e-9 and elapsed < 60
    acceptance_report(1, "geometry suite", ok, f"10000 cases, max error {err:.2e}, {elapsed:.1f}s")
    assert ok, worst


def test_2_circle_exact_mean_vs_grid(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    g = Circle()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 31))
        angles = rng.uniform(0, 2 * np.pi, n)
        res = empirical_mean(angles[:, None], geometry=g, rng=rng)
        x, _ = grid_argmin(angles, np.full(n, 1.0 / n), cells=1_000_000)
        worst = max(worst, abs(wrap_angle(res.mean.coords[0] - x)))
    elapsed = time.perf_counter() - start
    ok = worst <= 2 * np.pi * 1e-6 and elapsed < 60
    acceptance_report(2, "circle exact mean", ok, f"max deviation {worst:.2e} (bound {2 * np.pi * 1e-6:.2e}), {elapsed:.1f}s")
    assert ok


def test_3_euclidean_modulation(acceptance_report):
    start = time.perf_counter()
    g = Euclidean(2)
    atoms = np.random.default_rng(3).normal(size=(40, 2))
    law = DiscreteMixture([(1 / 40, g.point(a)) for a in atoms])
    mu = g.point(atoms.mean(axis=0))
    curve = modulation_curve(law, mu, DEFAULT_SAMPLE_SIZES, B=1000, seed=11)
    z = [(m - 1) / s for m, s in zip(curve.m_hat, curve.std_err)]
    elapsed = time.perf_counter() - start
    ok = all(abs(v) < 3 for v in z) and elapsed < 300
    acceptance_report(3, "Euclidean modulation", ok, f"max |m-1|/se = {max(map(abs, z)):.2f}, {elapsed:.1f}s")
    assert ok


def test_4_kappa_mixture_plateau(acceptance_report):
    start = time.perf_counter()
    base, _ = smeary_circle_base(concentration=1.0)
    mu = Circle().point(0.0)
    law = construct_kappa_mixture(base, mu, 0.5)
    curve = modulation_curve(law, mu, DEFAULT_SAMPLE_SIZES, B=1000, seed=4)
    m_last = curve.m_hat[-1]
    slope = estimate_rate(curve).slope
    elapsed = time.perf_counter() - start
    ok = 3.2 <= m_last <= 4.8 and slope < 0.1 and elapsed < 1200
    acceptance_report(
        4, "kappa mixture", ok,
        f"m_hat(1e4) = {m_last:.3f} +- {curve.std_err[-1]:.3f}, tail slope {slope:.3f}, {elapsed:.1f}s",
    )
    assert ok


def test_5_directional_hessian(acceptance_report):
    start = time.perf_counter()
    parts, ok = [], True
    for K in (1.0, 4.0):
        c = directional_construction(Sphere(2, K), epsilon=1 / 3)
        closed = hessian_closed_form(K, 1 / 3, solve_t(K, 1 / 3))
        ok &= abs(c.hessian_ww) < 1e-4 and c.hessian_vv > 0.1 and abs(closed) < 1e-12
        parts.append(f"K={K:g}: t={c.t:.6f} H_WW={c.hessian_ww:.1e} H_VV={c.hessian_vv:.3f} closed={closed:.1e}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    acceptance_report(5, "directional Hessian", ok, "; ".join(parts) + f", {elapsed:.1f}s")
    assert ok


def test_6_smeary_rate(acceptance_report):
    start = time.perf_counter()
    c = directional_construction(Sphere(2, 1.0), epsilon=1 / 3)
    curve = modulation_curve(c.law, c.mu, DEFAULT_SAMPLE_SIZES, B=2000, seed=6, direction=c.w_dir)
    slope = estimate_rate(curve).slope
    elapsed = time.perf_counter() - start
    ok = 0.5 <= slope <= 0.8 and elapsed < 1800
    acceptance_report(
        6, "smeary rate", ok,
        f"tail slope {slope:.3f} (m_hat {', '.join(f'{m:.2f}' for m in curve.m_hat)}), {elapsed:.1f}s",
    )
    assert ok


def test_7_power_table(acceptance_report):
    start = time.perf_counter()
    import json
    from importlib import resources

    cfg = json.loads(resources.files("smeary.data").joinpath("power_table.json").read_text())
    reports = power_table_reports(load_defaults(), 0.05, 100, cfg["reps"], cfg["seed"])
    cell = {(r.scenario, r.method): r.rejection_fraction for r in reports}
    q0, b0 = cell["with_vs_with", "Quantile"], cell["with_vs_with", "Bootstrap"]
    q1, b1 = cell["with_vs_without", "Quantile"], cell["with_vs_without", "Bootstrap"]
    elapsed = time.perf_counter() - start
    ok = b0 <= 0.08 and q0 >= b0 and b1 >= q1 + 0.15 and elapsed < 1800
    acceptance_report(
        7, "two-sample table", ok,
        f"null Q={q0:.2f} B={b0:.2f}; alternative Q={q1:.2f} B={b1:.2f}, {elapsed:.1f}s",
    )
    assert ok


def test_8_gclt_algebra(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for r in (0.0, 1.0, 2.0):
        for d in (1, 2, 3, 5):
            for _ in range(20):
                a = rng.normal(size=(d, d))
                C = a @ a.T + 0.1 * np.eye(d)
                R, _ = np.linalg.qr(rng.normal(size=(d, d)))
                T = rng.uniform(0.2, 3.0, d)
                got = gclt_covariance(SmearinessProfile(r, R, T), C)
                Tm = np.diag(T)
                want = 4 / (r + 2) ** 2 * np.linalg.solve(Tm, np.linalg.solve(Tm, R @ C @ R.T).T).T
                worst = max(worst, np.max(np.abs(got - want)), np.max(np.abs(got - got.T)))
                # undoing the scaling recovers the rotated covariance
                back = (r + 2) ** 2 / 4 * Tm @ got @ Tm
                worst = max(worst, np.max(np.abs(back - R @ C @ R.T)) / max(1.0, np.abs(C).max()))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-12 and elapsed < 1
    acceptance_report(8, "GCLT covariance", ok, f"max error {worst:.1e}, {elapsed:.3f}s")
    assert ok
