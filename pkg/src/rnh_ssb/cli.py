"""Command-line front end; every subcommand writes a manifest and then its data files.

Settings resolve as: command-line flag, then the ``--config`` INI file, then
built-in defaults. The INI file uses sections ``[model]`` (gamma, J, h, N),
``[stochastic]`` (dt, seed), ``[ensemble]`` (method, n_samples, threads,
r, bins) and ``[run]`` (out, format, times); keys match the long flag names
with dashes turned into underscores.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, exact, fokker_planck as fp
from .dicke import evolve_path, init_plus_x
from .ensemble import (EnsembleConfig, crossing_scan, empirical_cdf, fit_residue, histogram,
                       phase_scatter, residue_probability, residue_series, run_scan,
                       symmetry_defect)
from .errors import ConfigurationError, RNHError
from .io import time_tag, write_json, write_table
from .params import ModelParams
from .semiclassical import perturbative_trajectory, sde_trajectory
from .stochastic import DEFAULT_DT, RngSeed, TimeGrid, generate_wiener_path

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_NOT_FOUND = 0, 2, 3, 4

# option name -> (ini section, type, default)
OPTIONS = {
    "gamma": ("model", float, 1.0),
    "J": ("model", float, 0.0),
    "h": ("model", float, 0.0),
    "N": ("model", int, None),
    "dt": ("stochastic", float, DEFAULT_DT),
    "seed": ("stochastic", int, 0),
    "method": ("ensemble", str, None),
    "n_samples": ("ensemble", int, 10000),
    "threads": ("ensemble", int, None),
    "r": ("ensemble", float, 0.05),
    "bins": ("ensemble", int, 101),
    "out": ("run", str, "rnh_out"),
    "format": ("run", str, "csv"),
    "times": ("run", str, None),
}


def _float_list(text) -> list[float]:
    if text is None:
        return []
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).replace(",", " ").split()]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("shared settings")
    g.add_argument("--config", help="INI file with default settings")
    g.add_argument("--gamma", type=float)
    g.add_argument("--J", type=float)
    g.add_argument("--h", type=float)
    g.add_argument("--N", type=int, help="spin count (wave-function solver)")
    g.add_argument("--dt", type=float)
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--threads", type=int, help="worker threads (env RNH_THREADS also works)")
    g.add_argument("--out", help="output directory")
    g.add_argument("--format", choices=["csv", "json"])
    g.add_argument("--times", help="comma separated time list")

    p = _Parser(prog="rnh-ssb", description="Random non-Hermitian symmetry-breaking simulations.",
                allow_abbrev=False)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    s.add_argument("manifest")
    s.add_argument("--out", help="write into this directory instead of the recorded one")

    s = sub.add_parser("exact-dist", parents=[common], help="analytic peak density and CDF")
    s.add_argument("--points", type=int, default=401)
    s.add_argument("--s-max", type=float, default=0.499)

    s = sub.add_parser("trajectory", parents=[common], help="shared-path solver overlays")
    s.add_argument("--methods", default="sde,pert0,pert1",
                   help="subset of wavefunction,sde,pert0,pert1")
    s.add_argument("--t-max", type=float, default=1.0)
    s.add_argument("--stream", type=int, default=0, help="stream index of the shared path")
    s.add_argument("--dump-path", action="store_true", help="also write the path as t,W")

    s = sub.add_parser("ensemble", parents=[common], help="peak samples, CDFs, phase scatter")
    s.add_argument("--method", choices=["exact", "sde", "perturbative", "wavefunction"])
    s.add_argument("--n-samples", type=int)
    s.add_argument("--bins", type=int)
    s.add_argument("--r", type=float, help="residue half-window")
    s.add_argument("--subsample", type=int, default=2000)
    s.add_argument("--cdf-points", type=int, default=401)

    s = sub.add_parser("residue", parents=[common], help="residue decay fit and critical-field scan")
    s.add_argument("--method", choices=["exact", "sde", "perturbative"])
    s.add_argument("--n-samples", type=int)
    s.add_argument("--r", type=float)
    s.add_argument("--h-scan", help="comma separated fields for the crossing scan")
    s.add_argument("--crossing-times", default="7.5,10,20")
    s.add_argument("--n-boot", type=int, default=200)

    s = sub.add_parser("contours", parents=[common], help="equal-energy contours of H")
    s.add_argument("--levels", help="comma separated energies (default: 15 between min and max)")
    s.add_argument("--resolution", type=int, default=256)

    s = sub.add_parser("fp-evolve", parents=[common], help="Liouville transport of a density")
    s.add_argument("--grid", type=int, default=128, help="cells per axis")
    s.add_argument("--steps", type=int, default=1000)
    s.add_argument("--snapshot-every", type=int, default=250)
    s.add_argument("--init", choices=["uniform", "gaussian"], default="gaussian")
    s.add_argument("--limiter", action="store_true")

    s = sub.add_parser("validate", parents=[common], help="cross-solver property checks")
    s.add_argument("--n-samples", type=int)
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags, the INI file and defaults into a flat settings dict."""
    ini = configparser.ConfigParser()
    ini.optionxform = str
    if getattr(args, "config", None):
        if not ini.read(args.config):
            raise ConfigurationError(f"cannot read config file {args.config}")
    cfg = {}
    given = vars(args)
    for name, (section, typ, default) in OPTIONS.items():
        if name not in given:
            continue
        val = given[name]
        if val is None and ini.has_option(section, name):
            try:
                val = typ(ini.get(section, name))
            except ValueError as exc:
                raise ConfigurationError(f"[{section}] {name}: {exc}") from None
        cfg[name] = default if val is None else val
    for key, val in given.items():
        if key not in cfg and key != "config":
            cfg[key] = val
    if cfg["format"] not in ("csv", "json"):
        raise ConfigurationError("format must be csv or json")
    return cfg


def _params(cfg) -> ModelParams:
    return ModelParams(cfg["gamma"], cfg["J"], cfg["h"], cfg["N"] or 1)


def _grid(cfg, t_max: float) -> TimeGrid:
    dt = cfg["dt"]
    n = math.ceil(t_max / dt - 1e-9)
    return TimeGrid(dt=dt, n_steps=n)


def _snap(times, grid: TimeGrid) -> list[float]:
    return [float(grid.index_of(t) * grid.dt) for t in times]


class Run:
    """Owns the output directory and its single manifest."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.out = Path(cfg["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.fmt = cfg["format"]
        self.start = time.time()
        self.files: list[str] = []
        self._write_manifest(status="running")

    def _write_manifest(self, status, extra=None):
        data = {"artifact_version": __version__, "command": self.cfg["command"],
                "argv": replay_argv(self.cfg),
                "config": {k: v for k, v in self.cfg.items() if k != "command"},
                "master_seed": self.cfg["seed"], "started": self.start,
                "wall_time_s": time.time() - self.start, "status": status, "files": self.files}
        if extra:
            data.update(extra)
        write_json(self.out / "manifest.json", data)

    def table(self, name, header, columns):
        path = write_table(self.out / name, header, columns, self.fmt)
        self.files.append(path.name)
        return path

    def json(self, name, data):
        path = write_json(self.out / f"{name}.json", data)
        self.files.append(path.name)
        return path

    def finish(self, status="ok", extra=None):
        self._write_manifest(status, extra)


def cmd_exact_dist(cfg, run: Run) -> int:
    times = _float_list(cfg["times"]) or [0.1, 1.0, 4.0]
    s = np.linspace(-cfg["s_max"], cfg["s_max"], cfg["points"])
    s = 0.5 * (s - s[::-1])  # exactly odd grid, so s = 0 is hit exactly
    for t in times:
        if t < 0:
            raise ConfigurationError("times must be >= 0")
        if t == 0:
            run.table(f"exact_{time_tag(t)}", ["kind", "s", "weight"], [["point_mass"], [0.0], [1.0]])
            continue
        run.table(f"exact_{time_tag(t)}", ["s", "pdf", "cdf"],
                  [s, exact.pdf_sbar(cfg["gamma"], t, s), exact.cdf_sbar(cfg["gamma"], t, s)])
    return EXIT_OK


def cmd_trajectory(cfg, run: Run) -> int:
    methods = [m.strip() for m in cfg["methods"].split(",") if m.strip()]
    bad = set(methods) - {"wavefunction", "sde", "pert0", "pert1"}
    if bad:
        raise ConfigurationError(f"unknown methods {sorted(bad)}")
    if "wavefunction" in methods and not cfg["N"]:
        raise ConfigurationError("--N is required when the wavefunction method is selected")
    params = _params(cfg)
    grid = _grid(cfg, cfg["t_max"])
    path = generate_wiener_path(grid, RngSeed(cfg["seed"], cfg["stream"]))
    if cfg["dump_path"]:
        run.table("path", ["t", "W"], [path.times, path.cumulative])
    traj = {}
    for m in methods:
        if m == "sde":
            t, s, p = sde_trajectory(params, path)
        elif m in ("pert0", "pert1"):
            t, s, p, _ = perturbative_trajectory(params, path, order=int(m[-1]))
        else:
            recs = evolve_path(init_plus_x(params.N), params, path, list(path.times))
            t = np.array([r.t for r in recs])
            s = np.array([r.s_bar for r in recs])
            p = np.array([r.p_bar for r in recs])
        traj[m] = (t, s, p)
        run.table(f"trajectory_{m}", ["t", "s_bar", "p_bar", "method"], [t, s, p, [m] * t.size])
    summary = {}
    ref = "sde" if "sde" in traj else (methods[0] if methods else None)
    for m, (_, s, _) in traj.items():
        if m != ref:
            summary[f"{m}_vs_{ref}"] = float(np.max(np.abs(s - traj[ref][1])))
    run.json("deviation_summary", {"reference": ref, "max_abs_s_deviation": summary})
    return EXIT_OK


def _ensemble_config(cfg, method, times, h=None) -> EnsembleConfig:
    params = _params(cfg)
    if h is not None:
        params = params.replace(h=h)
    grid = _grid(cfg, max(times))
    return EnsembleConfig(method, params, cfg["n_samples"], cfg["seed"], grid,
                          tuple(_snap(times, grid)), cfg.get("bins", 101))


def cmd_ensemble(cfg, run: Run) -> int:
    method = cfg["method"] or "sde"
    if method == "wavefunction" and not cfg["N"]:
        raise ConfigurationError("--N is required for the wavefunction method")
    times = _float_list(cfg["times"]) or [0.1, 2.0, 4.2]
    config = _ensemble_config(cfg, method, times)
    scan = run_scan(config, threads=cfg["threads"])
    s_eval = np.linspace(-0.5, 0.5, cfg["cdf_points"])
    report = {"method": method, "config_hash": config.config_hash(), "times": {}}
    for ss in scan.sample_sets(0):
        tag = time_tag(ss.time)
        run.table(f"samples_{tag}", ["t", "s_bar", "p_bar", "flag"],
                  [np.full(len(ss), ss.time), ss.s_bar, ss.p_bar, ss.unphysical.astype(int)])
        run.table(f"cdf_{tag}", ["s", "F"], [s_eval, empirical_cdf(ss, s_eval)])
        sc = phase_scatter(ss, min(cfg["subsample"], len(ss)))
        run.table(f"scatter_{tag}", ["s_bar", "p_wrapped"], [sc.s_bar, sc.p_bar])
        hist = histogram(ss, config.histogram_bins)
        centers = 0.5 * (hist.edges[1:] + hist.edges[:-1])
        run.table(f"histogram_{tag}", ["s", "count", "density"], [centers, hist.counts, hist.density])
        res = residue_probability(ss, cfg["r"])
        report["times"][repr(ss.time)] = {
            "correlation": sc.correlation, "symmetry_defect": symmetry_defect(ss),
            "unphysical_fraction": float(ss.unphysical.mean()),
            "atom_minus": hist.atom_minus, "atom_plus": hist.atom_plus,
            "delta_tilde": res.value, "delta_tilde_se": res.se}
    run.json("ensemble_summary", report)
    return EXIT_OK


def cmd_residue(cfg, run: Run) -> int:
    method = cfg["method"] or "perturbative"
    times = _float_list(cfg["times"]) or [2.0 * k for k in range(1, 11)]
    h_scan = _float_list(cfg["h_scan"])
    cross_times = _float_list(cfg["crossing_times"]) if h_scan else []
    all_times = sorted(set(times) | set(cross_times))
    config = _ensemble_config(cfg, method, all_times)
    grid = config.grid
    hs = [cfg["h"]] + [h for h in h_scan if h != cfg["h"]]
    scan = run_scan(config, hs, cfg["threads"])
    r = cfg["r"]
    idx = [all_times.index(t) for t in times]
    t_all, d_all, se_all = residue_series(scan, 0, r)
    t, d, se = t_all[idx], d_all[idx], se_all[idx]
    run.table("residue_series", ["t", "delta_tilde", "se"], [t, d, se])
    fit = fit_residue(t, d, se, r)
    # flatness check of the window: half-width r/2 should give the same density
    _, d_half, _ = residue_series(scan, 0, r / 2)
    flat = {repr(float(x)): float(abs(a - b) / a) if a > 0 else None
            for x, a, b in zip(t_all, d_all, d_half)}
    run.json("residue_fit", {**fit.to_dict(), "method": method, "h": cfg["h"],
                             "window_flatness_rel_diff": flat})
    code = EXIT_OK
    if h_scan:
        est = crossing_scan(h_scan, _snap(cross_times, grid), config, r, cfg["n_boot"],
                            cfg["seed"], scan=scan)
        run.json("crossing", est.to_dict())
        if not est.found:
            code = EXIT_NOT_FOUND
    return code


def cmd_contours(cfg, run: Run) -> int:
    params = _params(cfg)
    levels = _float_list(cfg["levels"])
    if not levels:
        S, P = np.meshgrid(np.linspace(-0.5, 0.5, 201), np.linspace(-math.pi, math.pi, 201))
        H = fp.hamiltonian_sp(S, P, params)
        levels = list(np.linspace(H.min(), H.max(), 17)[1:-1])
    contours = fp.energy_contours(params, levels, cfg["resolution"])
    ids, lev, dirs, s, p = [], [], [], [], []
    for k, c in enumerate(contours):
        ids += [k] * c.s.size
        lev += [c.level] * c.s.size
        dirs += [c.direction] * c.s.size
        s += c.s.tolist()
        p += c.p.tolist()
    run.table("contours", ["level", "s", "p", "contour", "direction"], [lev, s, p, ids, dirs])
    fps = fp.fixed_points(params)
    run.table("fixed_points", ["s", "p", "H"],
              [[q.s_bar for q in fps], [q.p_bar for q in fps],
               [fp.hamiltonian(q, params) for q in fps]])
    n = 21
    S, P = np.meshgrid(np.linspace(-0.45, 0.45, n), np.linspace(-math.pi, math.pi, n), indexing="ij")
    vs, vp = fp.classical_flow_sp(S, P, params)
    run.table("flow_field", ["s", "p", "ds_dt", "dp_dt"], [S.ravel(), P.ravel(), vs.ravel(), vp.ravel()])
    return EXIT_OK


def cmd_fp_evolve(cfg, run: Run) -> int:
    params = _params(cfg)
    n = cfg["grid"]
    if cfg["init"] == "uniform":
        grid = fp.DensityGrid.uniform(n, n)
    else:
        grid = fp.DensityGrid.from_function(
            lambda s, p: np.exp(-((s - 0.1) ** 2) / (2 * 0.05**2) - (p - 0.3) ** 2 / (2 * 0.5**2)), n, n)
    dt = cfg["dt"]
    every = max(1, cfg["snapshot_every"])
    step = 0
    mass = []

    def snap():
        S, P = np.meshgrid(grid.s_centers, grid.p_centers, indexing="ij")
        run.table(f"density_step{step}", ["s", "p", "P"], [S.ravel(), P.ravel(), grid.values.ravel()])
        mass.append({"step": step, "t": step * dt, "mass": grid.mass(), "min": float(grid.values.min()),
                     "center_of_mass": grid.center_of_mass()})

    snap()
    while step < cfg["steps"]:
        k = min(every, cfg["steps"] - step)
        grid = fp.evolve_density(grid, params, dt, k, limiter=cfg["limiter"])
        step += k
        snap()
    run.json("fp_summary", {"snapshots": mass})
    return EXIT_OK


def cmd_validate(cfg, run: Run) -> int:
    from .validation import property_suite

    results = property_suite(cfg["n_samples"], threads=cfg["threads"])
    for r in results:
        print(r.line())
    run.json("validation", [{"name": r.name, "value": r.value, "threshold": r.threshold,
                             "passed": r.passed} for r in results])
    return EXIT_OK if all(r.passed for r in results) else 1


COMMANDS = {"exact-dist": cmd_exact_dist, "trajectory": cmd_trajectory, "ensemble": cmd_ensemble,
            "residue": cmd_residue, "contours": cmd_contours, "fp-evolve": cmd_fp_evolve,
            "validate": cmd_validate}


def replay_argv(cfg: dict) -> list[str]:
    """Command line that reproduces a run from its fully resolved settings."""
    argv = [cfg["command"]]
    for key, val in cfg.items():
        if key == "command" or val is None or val is False:
            continue
        flag = "--" + key.replace("_", "-")
        # "--flag=value" keeps values such as negative levels from parsing as options
        argv.append(flag if val is True else f"{flag}={repr(val) if isinstance(val, float) else val}")
    return argv


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        data = json.loads(Path(args.manifest).read_text())
        replay = list(data["argv"])
        if args.out:
            replay += ["--out", args.out]
        args = parser.parse_args(replay)
    try:
        cfg = resolve(args)
        _params(cfg)
        run = Run(cfg)
        code = COMMANDS[cfg["command"]](cfg, run)
        run.finish("ok" if code == EXIT_OK else f"exit {code}")
        return code
    except RNHError as exc:
        print(f"rnh-ssb: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
