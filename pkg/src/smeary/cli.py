"""Command-line front end: ``smeary <experiment> [--config FILE] [key=value ...]``.

Every experiment reads a JSON config (optionally), applies ``key=value``
overrides (dotted keys reach nested entries, values are parsed as JSON
when possible), validates everything, runs, and writes its data files plus
``manifest.json`` into ``--out``.  Files are staged next to their targets
and renamed into place only after the whole run succeeded, so a failing
run leaves no outputs behind.

Errors go to stderr as one JSON object ``{"error": category, "message": ...}``
with exit status 2 (validation), 3 (numerical) or 4 (io).
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import platform
import sys
import tempfile
import time
from functools import partial
from importlib import metadata, resources

import numpy as np
import scipy

from . import buckles, inference, lab
from .frechet import SolverConfig
from .specs import SpecError, build_distribution, build_geometry, build_point

EXPERIMENTS = ("modulation", "construct-kappa", "construct-directional", "hessian", "two-sample", "power-table")
EXIT = {"validation": 2, "numerical": 3, "io": 4}

ALIASES = {"eps": "epsilon"}

DEFAULTS = {
    "modulation": {
        "distribution": {"type": "smeary_circle", "concentration": 1.0},
        "sample_sizes": list(lab.DEFAULT_SAMPLE_SIZES),
        "B": 1000,
        "restrict_to_degenerate_direction": False,
    },
    "construct-kappa": {
        "kappa": 0.5,
        "base": {"type": "smeary_circle", "concentration": 1.0},
        "sample_sizes": [],
        "B": 1000,
    },
    "construct-directional": {"K": 1.0, "epsilon": 1.0 / 3.0, "m": 2, "h": 1e-3},
    "hessian": {"distribution": {"type": "smeary_circle", "concentration": 1.0}, "point": None, "h": 1e-3, "order": 4},
    "two-sample": {
        "group1": None,
        "group2": None,
        "alpha": 0.05,
        "reps": 500,
        "methods": ["Quantile", "Bootstrap"],
    },
    "power-table": {"buckle_params": None, "alpha": 0.05, "n_sims": 100, "reps": 500},
}


class CliError(Exception):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


# ---------------------------------------------------------------------------
# config handling


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides) -> dict:
    out = copy.deepcopy(config)
    for item in overrides:
        if "=" not in item:
            raise CliError("validation", f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        parts = [ALIASES.get(p, p) for p in key.split(".")]
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise CliError("validation", f"cannot set {key}: {p} is not a mapping")
        node[parts[-1]] = _parse_value(value)
    return out


def load_config(experiment, path, overrides, seed, threads) -> dict:
    config = copy.deepcopy(DEFAULTS[experiment])
    if path is not None:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise CliError("io", f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CliError("validation", f"config is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise CliError("validation", "config must be a JSON object")
        if loaded.get("experiment", experiment) != experiment:
            raise CliError("validation", f"config is for experiment {loaded['experiment']!r}")
        config.update(loaded)
    config = apply_overrides(config, overrides)
    config["experiment"] = experiment
    if seed is not None:
        config["seed"] = seed
    if "seed" not in config:
        raise CliError("validation", "a seed is required (config 'seed' or --seed)")
    if not isinstance(config["seed"], int) or not 0 <= config["seed"] < 2**64:
        raise CliError("validation", "seed must be an unsigned 64-bit integer")
    if threads is not None:
        config["threads"] = threads
    config.setdefault("threads", 1)
    if not isinstance(config["threads"], int) or config["threads"] < 1:
        raise CliError("validation", "threads must be a positive integer")
    return config


def _solver(config) -> SolverConfig:
    try:
        return SolverConfig.from_dict({"seed": config["seed"] % 2**32, **config.get("solver", {})})
    except (TypeError, ValueError) as exc:
        raise CliError("validation", f"invalid solver config: {exc}") from exc


def _require(cond, message):
    if not cond:
        raise CliError("validation", message)


def _sizes(config):
    sizes = config["sample_sizes"]
    _require(
        isinstance(sizes, list) and all(isinstance(n, int) and n > 0 for n in sizes) and sizes == sorted(set(sizes)),
        "sample_sizes must be an increasing list of positive integers",
    )
    return sizes


def _positive_int(config, key, minimum=1):
    v = config[key]
    _require(isinstance(v, int) and v >= minimum, f"{key} must be an integer >= {minimum}")
    return v


def _alpha(config):
    a = config["alpha"]
    _require(isinstance(a, (int, float)) and 0 < a < 1, "alpha must lie in (0, 1)")
    return float(a)


# ---------------------------------------------------------------------------
# experiments; each returns {filename: text}


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    return obj


def _json(obj) -> str:
    return json.dumps(_to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _run_modulation(config):
    sizes = _sizes(config)
    B = _positive_int(config, "B", 2)
    solver = _solver(config)
    law, mu, extras = build_distribution(config["distribution"], solver)
    direction = None
    if config["restrict_to_degenerate_direction"]:
        _require("degenerate_direction" in extras, "only the directional law has a degenerate direction")
        direction = extras["degenerate_direction"]
    curve = lab.modulation_curve(law, mu, sizes, B, config["seed"], solver, direction, config["threads"])
    return {"modulation.csv": curve.to_csv(), "summary.json": _json(_curve_summary(curve))}


def _curve_summary(curve):
    """Regime verdict and tail slope, or the reason the grid is too short for them."""
    try:
        return {"regime": lab.classify_regime(curve).to_dict(), "rate": lab.estimate_rate(curve)._asdict()}
    except lab.InsufficientData as exc:
        return {"regime": None, "rate": None, "note": str(exc)}


def _run_kappa(config):
    kappa = config["kappa"]
    _require(isinstance(kappa, (int, float)) and 0 < kappa < 1, "kappa must lie in (0, 1)")
    solver = _solver(config)
    spec = {"type": "kappa_mixture", "kappa": float(kappa), "base": config["base"]}
    law, mu, extras = build_distribution(spec, solver)
    out = {}
    report = {"kappa": float(kappa), "predicted_limit": extras["predicted_limit"], "mean": mu.coords}
    sizes = _sizes(config)
    if sizes:
        B = _positive_int(config, "B", 2)
        curve = lab.modulation_curve(law, mu, sizes, B, config["seed"], solver, threads=config["threads"])
        out["modulation.csv"] = curve.to_csv()
        report.update(_curve_summary(curve))
    out["construction.json"] = _json(report)
    return out


def _run_directional(config):
    K, eps = config["K"], config["epsilon"]
    _require(isinstance(K, (int, float)) and K > 0, "K must be positive")
    _require(isinstance(eps, (int, float)) and 0 < eps < 1, "epsilon must lie in (0, 1)")
    geometry = build_geometry({"name": "sphere", "m": config["m"], "K": K})
    c = lab.directional_construction(geometry, epsilon=float(eps), h=float(config["h"]))
    report = c.report()
    report["atoms"] = [[w, p.coords] for w, p in c.law.components]
    report["v_dir"] = c.v_dir
    report["w_dir"] = c.w_dir
    return {"directional.json": _json(report)}


def _run_hessian(config):
    solver = _solver(config)
    law, mu, _ = build_distribution(config["distribution"], solver)
    p = mu if config["point"] is None else build_point(law.geometry, config["point"])
    order = config["order"]
    _require(order in (2, 4), "order must be 2 or 4")
    H = lab.hessian_fd(law, p, float(config["h"]), order)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"e{j}" for j in range(H.shape[1])])
    for row in H:
        w.writerow([repr(float(v)) for v in row])
    return {"hessian.csv": buf.getvalue(), "hessian.json": _json({"point": p.coords, "hessian": H})}


def _load_group(spec, seed, key):
    """A group is a CSV path or ``{"buckle": "with"|"without", "n": int, "params": path?}``."""
    if isinstance(spec, str):
        try:
            with open(spec) as fh:
                return buckles.group_from_csv(fh.read())
        except OSError as exc:
            raise CliError("io", f"cannot read {key}: {exc}") from exc
    if isinstance(spec, dict) and spec.get("buckle") in ("with", "without"):
        params = buckles.load_defaults(spec.get("params"))
        n = int(spec.get("n", params["group_size"]))
        stream = int(np.random.SeedSequence([seed, 1 if key == "group1" else 2]).generate_state(1)[0])
        return buckles.sample_group(params[spec["buckle"]], n, stream)
    raise CliError("validation", f"{key} must be a CSV path or a buckle spec")


def _run_two_sample(config):
    alpha = _alpha(config)
    reps = _positive_int(config, "reps", 200)
    methods = config["methods"]
    _require(isinstance(methods, list) and methods and set(methods) <= set(inference.METHODS), "unknown method")
    g1 = _load_group(config["group1"], config["seed"], "group1")
    g2 = _load_group(config["group2"], config["seed"], "group2")
    solver = _solver(config)
    rows = []
    for m in methods:
        if m == "Quantile":
            r = inference.quantile_test(g1, g2, alpha, solver, np.random.default_rng(solver.seed))
        else:
            r = inference.bootstrap_test(g1, g2, alpha, reps, config["seed"], solver)
        rows.append(r)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["method", "statistic", "threshold", "p_value", "reject", "alpha", "n1", "n2", "bootstrap_reps", "seed"]
    w.writerow(cols)
    for r in rows:
        w.writerow(
            [r.method, repr(r.statistic), repr(r.threshold), repr(r.p_value), int(r.reject), repr(r.alpha),
             r.n1, r.n2, r.bootstrap_reps, "" if r.seed is None else r.seed]
        )
    return {"two_sample.csv": buf.getvalue()}


def power_table_reports(params, alpha, n_sims, reps, seed, threads=1):
    """The four cells: (null, alternative) x (Quantile, Bootstrap)."""
    n = params["group_size"]
    g_with = partial(buckles.sample_group, params["with"], n)
    g_without = partial(buckles.sample_group, params["without"], n)
    scenarios = [("with_vs_with", g_with, g_with), ("with_vs_without", g_with, g_without)]
    reports = []
    for name, a, b in scenarios:
        for method in inference.METHODS:
            kw = {"reps": reps} if method == "Bootstrap" else None
            reports.append(inference.power_study(a, b, method, alpha, n_sims, seed, name, kw, threads))
    return reports


def _run_power_table(config):
    alpha = _alpha(config)
    n_sims = _positive_int(config, "n_sims")
    reps = _positive_int(config, "reps", 200)
    try:
        params = buckles.load_defaults(config["buckle_params"])
    except OSError as exc:
        raise CliError("io", f"cannot read buckle parameters: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError("validation", f"invalid buckle parameters: {exc}") from exc
    reports = power_table_reports(params, alpha, n_sims, reps, config["seed"], config["threads"])
    return {"power_table.csv": inference.reports_to_csv(reports)}


RUNNERS = {
    "modulation": _run_modulation,
    "construct-kappa": _run_kappa,
    "construct-directional": _run_directional,
    "hessian": _run_hessian,
    "two-sample": _run_two_sample,
    "power-table": _run_power_table,
}


# ---------------------------------------------------------------------------
# output


def _versions():
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"package": pkg, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def write_atomically(out_dir, files: dict):
    """Stage every file in ``out_dir`` first, then rename them all into place."""
    os.makedirs(out_dir, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, os.path.join(out_dir, name)))
    except OSError:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, target in staged:
        os.replace(tmp, target)
    return [t for _, t in staged]


def run(experiment, config, out_dir):
    start = time.perf_counter()
    try:
        files = RUNNERS[experiment](config)
    except CliError:
        raise
    except (SpecError, TypeError, KeyError) as exc:
        raise CliError("validation", str(exc)) from exc
    except ValueError as exc:
        # precondition failures raised inside the library
        raise CliError("validation", str(exc)) from exc
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        raise CliError("numerical", str(exc)) from exc
    manifest = {
        "experiment": experiment,
        "config": config,
        "seed": config["seed"],
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - start,
        "outputs": sorted(files),
    }
    files["manifest.json"] = _json(manifest)
    try:
        return write_atomically(out_dir, files)
    except OSError as exc:
        raise CliError("io", str(exc)) from exc


# ---------------------------------------------------------------------------
# tables


def format_table(reports) -> str:
    """Fixed-width table of power reports, one row per report in input order."""
    header = ("scenario", "method", "alpha", "n_sims", "rejected", "std_err")
    rows = [
        (r.scenario, r.method, f"{r.alpha:.3f}", str(r.n_simulations), f"{r.rejection_fraction:.3f}", f"{r.std_err:.3f}")
        for r in reports
    ]
    widths = [max([len(h)] + [len(row[i]) for row in rows]) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


def format_grid(reports) -> str:
    """Method x scenario grid of rejection fractions, in first-seen order."""
    methods, scenarios, cell = [], [], {}
    for r in reports:
        if r.method not in methods:
            methods.append(r.method)
        if r.scenario not in scenarios:
            scenarios.append(r.scenario)
        cell[r.method, r.scenario] = f"{r.rejection_fraction:.2f}"
    w0 = max([len("method")] + [len(m) for m in methods])
    ws = [max(len(s), 4) for s in scenarios]
    lines = ["  ".join(["method".ljust(w0)] + [s.rjust(w) for s, w in zip(scenarios, ws)])]
    for m in methods:
        lines.append("  ".join([m.ljust(w0)] + [cell.get((m, s), "-").rjust(w) for s, w in zip(scenarios, ws)]))
    return "\n".join(lines) + "\n"


def print_table(paths) -> str:
    reports = []
    for p in paths:
        try:
            with open(p) as fh:
                reports += inference.reports_from_csv(fh.read())
        except OSError as exc:
            raise CliError("io", f"cannot read {p}: {exc}") from exc
        except (KeyError, ValueError) as exc:
            raise CliError("validation", f"{p} is not a power report CSV: {exc}") from exc
    text = format_table(reports)
    if len({r.method for r in reports}) > 1 and len({r.scenario for r in reports}) > 1:
        text += "\n" + format_grid(reports)
    return text


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="smeary", description="Smeariness experiments on manifolds.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="top-level seed (unsigned 64-bit)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, help="worker processes for Monte Carlo")
        p.add_argument("overrides", nargs="*", help="key=value config overrides")
    p = sub.add_parser("print-table")
    p.add_argument("reports", nargs="*", help="power report CSV files")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "print-table":
            sys.stdout.write(print_table(args.reports))
            return 0
        config = load_config(args.command, args.config, args.overrides, args.seed, args.threads)
        written = run(args.command, config, args.out)
    except CliError as exc:
        sys.stderr.write(json.dumps({"error": exc.category, "message": str(exc)}) + "\n")
        return EXIT[exc.category]
    for path in written:
        print(path)
    return 0


def shipped_config(name: str) -> str:
    """Path-independent text of a config shipped with the package."""
    return resources.files("smeary.data").joinpath(name).read_text()


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
