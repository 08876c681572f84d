"""Two-sample tests for equality of Fréchet means and rejection-rate studies.

Both tests compare the group Fréchet means through their images in the
tangent space at the pooled mean.  The quantile test refers a
Hotelling-type statistic to a chi-square quantile, which assumes the
means fluctuate like the tangent data divided by n.  The bootstrap test
recomputes the group means on resamples, so it sees the actual spread of
the means, including any inflation from finite sample smeariness.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .frechet import (
    SolverConfig,
    batched_means,
    empirical_mean,
    tangent_coords,
    _as_array,
)
from .geometry import GeometryMismatch, ManifoldPoint

METHODS = ("Quantile", "Bootstrap")


class DegenerateCovariance(ValueError):
    pass


@dataclass
class TestResult:
    __test__ = False  # not a pytest class

    statistic: float
    threshold: float
    p_value: float
    reject: bool
    method: str
    alpha: float
    n1: int
    n2: int
    bootstrap_reps: int = 0
    seed: int | None = None
    dropped: int = 0


@dataclass
class PowerReport:
    method: str
    n_simulations: int
    rejection_fraction: float
    std_err: float
    scenario: str
    seed: int
    alpha: float

    CSV_COLUMNS = ("scenario", "method", "alpha", "n_sims", "rejection_fraction", "std_err", "seed")

    def csv_row(self) -> list:
        return [
            self.scenario,
            self.method,
            repr(float(self.alpha)),
            self.n_simulations,
            repr(float(self.rejection_fraction)),
            repr(float(self.std_err)),
            self.seed,
        ]


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PowerReport.CSV_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def reports_from_csv(text: str) -> list[PowerReport]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(
            PowerReport(
                method=row["method"],
                n_simulations=int(row["n_sims"]),
                rejection_fraction=float(row["rejection_fraction"]),
                std_err=float(row["std_err"]),
                scenario=row["scenario"],
                seed=int(row["seed"]),
                alpha=float(row["alpha"]),
            )
        )
    return out


# ---------------------------------------------------------------------------
# shared pieces


@dataclass
class _Setup:
    geometry: object
    x1: np.ndarray
    x2: np.ndarray
    pooled: ManifoldPoint
    mean1: ManifoldPoint
    mean2: ManifoldPoint
    delta: np.ndarray
    coords1: np.ndarray
    coords2: np.ndarray
    dropped: int


def _setup(sample1, sample2, config, rng):
    s1, s2 = list(sample1), list(sample2)
    if not s1 or not s2:
        raise ValueError("both samples must be nonempty")
    g = s1[0].geometry
    if any(p.geometry != g for p in s1 + s2):
        raise GeometryMismatch("samples live on different geometries")
    if len(s1) + len(s2) <= g.dim + 2:
        raise ValueError("pooled sample too small for the tangent covariance")
    x1, x2 = _as_array(g, s1), _as_array(g, s2)
    pooled = empirical_mean(np.concatenate([x1, x2]), config, rng, geometry=g).mean
    m1 = empirical_mean(x1, config, rng, geometry=g).mean
    m2 = empirical_mean(x2, config, rng, geometry=g).mean
    delta = _log_components(g, pooled, m1.coords) - _log_components(g, pooled, m2.coords)
    c1, d1 = tangent_coords(pooled, x1)
    c2, d2 = tangent_coords(pooled, x2)
    return _Setup(g, x1, x2, pooled, m1, m2, delta, c1, c2, d1 + d2)


def _log_components(g, base, pts):
    return g.to_components(base.coords, g.log(base.coords, pts))


def _pooled_covariance(c1, c2, w1=None, w2=None):
    """Within-group pooled covariance with a small ridge.

    Optional weights (resampling multiplicities summing to the group size)
    give the covariance of a resampled data set without materialising it.
    """
    n1 = len(c1) if w1 is None else w1.sum()
    n2 = len(c2) if w2 is None else w2.sum()
    w1 = np.ones(len(c1)) if w1 is None else w1
    w2 = np.ones(len(c2)) if w2 is None else w2
    a = c1 - (w1 @ c1) / w1.sum()
    b = c2 - (w2 @ c2) / w2.sum()
    S = ((a * w1[:, None]).T @ a + (b * w2[:, None]).T @ b) / (n1 + n2 - 2)
    dim = S.shape[0]
    tr = np.trace(S)
    if not tr > 0:
        raise DegenerateCovariance("pooled tangent covariance vanishes")
    S = S + 1e-8 * tr / dim * np.eye(dim)
    if np.linalg.cond(S) > 1e13:
        raise DegenerateCovariance("pooled tangent covariance is singular")
    return S


def _hotelling(delta, S, n1, n2):
    return float(n1 * n2 / (n1 + n2) * delta @ np.linalg.solve(S, delta))


# ---------------------------------------------------------------------------
# tests


def quantile_test(sample1, sample2, alpha: float = 0.05, config: SolverConfig | None = None, rng=None) -> TestResult:
    """Hotelling-type test with a chi-square(dim) reference quantile.

    T = n1 n2 / (n1 + n2) * D^T S^-1 D, where D is the difference of the
    group Fréchet means in the tangent space at the pooled mean and S the
    within-group pooled covariance of the tangent data.
    """
    config = config or SolverConfig()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    st = _setup(sample1, sample2, config, rng)
    n1, n2 = len(st.x1), len(st.x2)
    S = _pooled_covariance(st.coords1, st.coords2)
    T = _hotelling(st.delta, S, n1, n2)
    dim = st.geometry.dim
    thr = float(stats.chi2.ppf(1 - alpha, dim))
    return TestResult(T, thr, float(stats.chi2.sf(T, dim)), T > thr, "Quantile", alpha, n1, n2, 0, None, st.dropped)


BOOTSTRAP_CONFIG = SolverConfig(n_random_starts=0)


def bootstrap_test(
    sample1,
    sample2,
    alpha: float = 0.05,
    reps: int = 500,
    seed: int = 0,
    config: SolverConfig | None = None,
    statistic: str = "distance",
    variance_correction: bool = True,
) -> TestResult:
    """Two-sample test calibrated by a null-centred bootstrap of the Fréchet means.

    Each replicate resamples both groups within themselves, recomputes the
    group means and measures their displacement from the original group
    means in the tangent space at the pooled mean.  The difference of the
    two displacements is a draw of D under equal means.

    ``statistic="distance"`` uses T = n1 n2 / (n1 + n2) |D|^2;
    ``statistic="hotelling"`` studentises as in :func:`quantile_test`, with
    the pooled covariance recomputed on every resample.

    With ``variance_correction`` each group's displacements are scaled by
    sqrt(n / (n - 1)), undoing the shrinkage of resampled-mean variance by
    the factor (n - 1) / n that makes small-sample bootstraps liberal.
    """
    if reps < 200:
        raise ValueError("use at least 200 bootstrap replicates")
    if statistic not in ("distance", "hotelling"):
        raise ValueError("statistic must be 'distance' or 'hotelling'")
    config = config or SolverConfig()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    st = _setup(sample1, sample2, config, rng)
    g = st.geometry
    n1, n2 = len(st.x1), len(st.x2)
    c = n1 * n2 / (n1 + n2)
    if statistic == "distance":
        T = float(c * st.delta @ st.delta)
    else:
        T = _hotelling(st.delta, _pooled_covariance(st.coords1, st.coords2), n1, n2)

    rngs = [np.random.default_rng(np.random.SeedSequence([int(seed), 1, b])) for b in range(reps)]
    counts1 = np.empty((reps, n1))
    counts2 = np.empty((reps, n2))
    for b, r in enumerate(rngs):
        counts1[b] = np.bincount(r.integers(0, n1, n1), minlength=n1)
        counts2[b] = np.bincount(r.integers(0, n2, n2), minlength=n2)
    boot_cfg = config if config.n_random_starts == 0 else BOOTSTRAP_CONFIG
    disp = []
    for x, mean, counts in ((st.x1, st.mean1, counts1), (st.x2, st.mean2, counts2)):
        w = counts / counts.sum(axis=1, keepdims=True)
        starts = [_bootstrap_starts(g, x, wi, mean) for wi in w]
        res = batched_means(g, x, w, boot_cfg, rngs, starts=starts)
        boot = np.stack([r.mean.coords for r in res])
        d = _log_components(g, st.pooled, boot) - _log_components(g, st.pooled, mean.coords)
        if variance_correction:
            d *= math.sqrt(len(x) / (len(x) - 1))
        disp.append(d)
    dstar = disp[0] - disp[1]
    if statistic == "distance":
        Tb = c * np.sum(dstar * dstar, axis=1)
    else:
        Tb = np.array(
            [
                _hotelling(dstar[b], _pooled_covariance(st.coords1, st.coords2, counts1[b], counts2[b]), n1, n2)
                for b in range(reps)
            ]
        )
    thr = float(np.quantile(Tb, 1 - alpha, method="higher"))
    p = float(np.mean(Tb >= T))
    return TestResult(T, thr, p, T > thr, "Bootstrap", alpha, n1, n2, reps, int(seed), st.dropped)


def _bootstrap_starts(g, x, w, mean):
    starts = [np.asarray(mean.coords)[None]]
    ext = g.extrinsic_mean(x[w > 0], w[w > 0])
    if ext is not None:
        starts.append(np.asarray(ext)[None])
    return np.concatenate(starts).astype(g.dtype)


# ---------------------------------------------------------------------------
# rejection-rate studies


def _simulation_seeds(seed, s):
    return [int(v) for v in np.random.SeedSequence([int(seed), int(s)]).generate_state(3)]


def _one_simulation(args):
    generator1, generator2, method, alpha, seed, s, test_kwargs = args
    s1_seed, s2_seed, t_seed = _simulation_seeds(seed, s)
    x1 = generator1(s1_seed)
    x2 = generator2(s2_seed)
    kw = dict(test_kwargs or {})
    if method == "Quantile":
        cfg = kw.pop("config", None) or SolverConfig(seed=t_seed)
        res = quantile_test(x1, x2, alpha, cfg, np.random.default_rng(t_seed), **kw)
    else:
        res = bootstrap_test(x1, x2, alpha, seed=t_seed, **kw)
    return bool(res.reject)


def power_study(
    generator1: Callable[[int], list],
    generator2: Callable[[int], list],
    method: str,
    alpha: float = 0.05,
    n_sims: int = 100,
    seed: int = 0,
    scenario: str = "",
    test_kwargs: dict | None = None,
    threads: int = 1,
) -> PowerReport:
    """Rejection fraction of a test over ``n_sims`` simulated pairs of groups.

    Simulation ``s`` draws its groups from seeds derived from ``(seed, s)``
    only, so the two methods see identical data when run with one seed.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    tasks = [(generator1, generator2, method, alpha, seed, s, test_kwargs) for s in range(n_sims)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            rejects = list(ex.map(_one_simulation, tasks))
    else:
        rejects = [_one_simulation(t) for t in tasks]
    frac = sum(rejects) / n_sims
    se = math.sqrt(frac * (1 - frac) / n_sims)
    return PowerReport(method, n_sims, frac, se, scenario, int(seed), alpha)
