"""Synthetic planar microtubule buckles with five landmarks.

A buckle of length L and height A is the arch y = A sin(pi x / L); the
landmarks sit at x_i = i L / 4, i = 0..4.  Vimentin stiffening is modelled
by a smaller mean height.  Each configuration is centred and scaled to a
pre-shape in Kendall's planar shape space of five landmarks.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np
from scipy import stats

from .geometry import KendallPlanar, ManifoldPoint

N_LANDMARKS = 5
SHAPE_SPACE = KendallPlanar(N_LANDMARKS)
MODES = ("WithVimentin", "WithoutVimentin")


@dataclass(frozen=True)
class BuckleParams:
    amplitude_mean: float
    amplitude_sd: float
    length: float = 1.0
    landmark_noise_sd: float = 0.0
    mode: str = "WithVimentin"
    n_landmarks: int = N_LANDMARKS

    def __post_init__(self):
        if not self.amplitude_mean > 0:
            raise ValueError("amplitude_mean must be positive")
        if self.amplitude_sd < 0 or self.landmark_noise_sd < 0:
            raise ValueError("standard deviations must be nonnegative")
        if not self.length > 0:
            raise ValueError("length must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.n_landmarks != N_LANDMARKS:
            raise ValueError("buckles carry exactly five landmarks")

    @classmethod
    def from_dict(cls, d: dict) -> "BuckleParams":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def load_defaults(path=None) -> dict:
    """Read a buckle parameter file (the packaged defaults when ``path`` is None).

    Returns ``{"with": BuckleParams, "without": BuckleParams, "group_size": int}``.
    """
    if path is None:
        text = resources.files("smeary.data").joinpath("buckle_defaults.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = json.loads(text)
    raw.pop("version", None)
    out = {
        "with": BuckleParams.from_dict(raw["with_vimentin"]),
        "without": BuckleParams.from_dict(raw["without_vimentin"]),
        "group_size": int(raw.get("group_size", 20)),
    }
    if out["with"].mode != "WithVimentin" or out["without"].mode != "WithoutVimentin":
        raise ValueError("parameter file modes are mislabelled")
    if not out["with"].amplitude_mean < out["without"].amplitude_mean:
        raise ValueError("vimentin stiffening must lower the mean buckle amplitude")
    return out


def buckle_landmarks(amplitude: float, length: float = 1.0) -> np.ndarray:
    """Noise-free landmark matrix of shape (5, 2)."""
    x = np.arange(N_LANDMARKS) * length / (N_LANDMARKS - 1)
    return np.column_stack([x, amplitude * np.sin(np.pi * x / length)])


def landmarks_to_preshape(xy) -> ManifoldPoint:
    """Centre and scale a (5, 2) landmark matrix to a pre-shape."""
    xy = np.asarray(xy, float)
    return SHAPE_SPACE.point(xy[:, 0] + 1j * xy[:, 1])


def _draw_amplitude(params: BuckleParams, rng) -> float:
    if params.amplitude_sd == 0:
        return params.amplitude_mean
    lower = -params.amplitude_mean / params.amplitude_sd
    return float(
        stats.truncnorm.rvs(lower, np.inf, loc=params.amplitude_mean, scale=params.amplitude_sd, random_state=rng)
    )


def sample_buckle(params: BuckleParams, seed: int, index: int) -> ManifoldPoint:
    """One buckle shape, a pure function of ``(params, seed, index)``."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
    amp = _draw_amplitude(params, rng)
    xy = buckle_landmarks(amp, params.length)
    if params.landmark_noise_sd > 0:
        xy = xy + rng.normal(0.0, params.landmark_noise_sd, size=xy.shape)
    return landmarks_to_preshape(xy)


def sample_group(params: BuckleParams, n: int, seed: int) -> list[ManifoldPoint]:
    return [sample_buckle(params, seed, i) for i in range(n)]


def group_to_csv(points) -> str:
    """One row per configuration: x0..x4 then y0..y4 of the pre-shape."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i}" for i in range(N_LANDMARKS)] + [f"y{i}" for i in range(N_LANDMARKS)])
    for p in points:
        z = p.coords
        w.writerow([repr(float(v)) for v in np.concatenate([z.real, z.imag])])
    return buf.getvalue()


def group_from_csv(text: str) -> list[ManifoldPoint]:
    """Inverse of :func:`group_to_csv`; rows must already be pre-shapes.

    Values are kept bit for bit, so a read-write cycle reproduces the file.
    """
    rows = list(csv.reader(io.StringIO(text)))[1:]
    out = []
    for r in rows:
        v = np.array([float(x) for x in r])
        if v.shape != (2 * N_LANDMARKS,):
            raise ValueError("each row needs 10 coordinates")
        z = v[:N_LANDMARKS] + 1j * v[N_LANDMARKS:]
        if abs(z.sum()) > 1e-9 or abs(np.linalg.norm(z) - 1.0) > 1e-9:
            raise ValueError("row is not a centred unit-size pre-shape")
        out.append(ManifoldPoint(SHAPE_SPACE, z))
    return out
