"""Command-line entry point: ``mhdlab <subcommand> [flags]``.

Settings resolve as flags > ``--config`` file (``key = value`` lines) > built-in
defaults.  Every run writes ``manifest.txt`` echoing the resolved settings.
Exit status: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import traceback
from pathlib import Path

import numpy as np

from mhdlab import __version__

log = logging.getLogger("mhdlab")

LAMBDAS = ",".join(str(2.0**-k) for k in range(7))

COMMON = {"d": 2, "seed": 0, "out": "mhdlab-out", "force": False, "config": None, "verbose": False}
DEFAULTS = {
    "kernels": {"n": 256, "L": 32.0, "t": 1.0, "family": "F,G", "N": 3.0, "radius": None},
    "conv-check": {
        "n": 1024, "L": 2.0, "N": 3.0, "a": 2.0, "alpha": 2.0, "p": 4.0, "theta": 0.0,
        "lambdas": LAMBDAS, "field": "all",
    },
    "regions": {"p1": math.inf, "theta1": 1.5, "raster": 100, "theta_max": None},
    "evolve": {
        "n": 256, "L": 16.0, "dt": 0.0625, "T": 0.5, "quad_nodes": 4, "tol": 1e-10, "picard_max": 60,
        "mode": "stepwise", "data": "stream-bump:width=1.5,aspect=0.5,amplitude=0.5", "bdata": "none",
        "snapshot_every": 0,
    },
    "spread": {
        "n": 512, "L": 64.0, "dt": 0.0625, "T": 0.5, "quad_nodes": 4, "tol": 1e-10, "picard_max": 60,
        "mode": "stepwise", "data": "stream-bump:width=1.5,aspect=0.5", "bdata": "none",
    },
    "symmetry": {
        "n": 512, "L": 64.0, "dt": 0.0625, "T": 0.5, "quad_nodes": 4, "tol": 1e-10, "picard_max": 60,
        "mode": "stepwise", "order": 3, "radial": 0.5, "perturbation": 0.0, "magnetic": False,
    },
    "moments": {
        "n": 512, "L": 64.0, "dt": 0.0625, "T": 0.5, "quad_nodes": 4, "tol": 1e-10, "picard_max": 60,
        "mode": "stepwise", "data": "cyclic:n=3,radial=0.5", "bdata": "none",
    },
}


class UsageError(ValueError):
    pass


def exponent(text: str) -> float:
    """Lebesgue exponent; ``inf`` spells infinity."""
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    return float(t)


def flag(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int)
    p.add_argument("--L", type=float)


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dt", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--quad-nodes", dest="quad_nodes", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--picard-max", dest="picard_max", type=int)
    p.add_argument("--mode", choices=("stepwise", "global"))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--d", type=int, choices=(2, 3))
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--force", action="store_const", const=True)
    common.add_argument("--config")
    common.add_argument("--verbose", action="store_const", const=True)

    parser = argparse.ArgumentParser(prog="mhdlab", description="Decay experiments for incompressible MHD.")
    parser.add_argument("--version", action="version", version=f"mhdlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    kw = {"parents": [common], "argument_default": argparse.SUPPRESS}

    p = sub.add_parser("kernels", help="sample F/G kernels, dump snapshots and bound constants", **kw)
    _grid_flags(p)
    p.add_argument("--t", type=float)
    p.add_argument("--family")
    p.add_argument("--N", type=float)
    p.add_argument("--radius", type=float)

    p = sub.add_parser("conv-check", help="lambda sweep of the weighted convolution bounds", **kw)
    _grid_flags(p)
    p.add_argument("--N", type=float)
    p.add_argument("--a", type=exponent)
    p.add_argument("--alpha", type=float)
    p.add_argument("--p", type=exponent)
    p.add_argument("--theta", type=float)
    p.add_argument("--lambdas")
    p.add_argument("--field")

    p = sub.add_parser("regions", help="classify the (1/p0, theta0) plane", **kw)
    p.add_argument("--p1", type=exponent)
    p.add_argument("--theta1", type=float)
    p.add_argument("--raster", type=int)
    p.add_argument("--theta-max", dest="theta_max", type=float)

    for name, helptext in (
        ("evolve", "solve the integral equations and write the trajectory"),
        ("spread", "spreading experiment on generic data"),
        ("moments", "moment matrix along a trajectory"),
    ):
        p = sub.add_parser(name, help=helptext, **kw)
        _grid_flags(p)
        _solver_flags(p)
        p.add_argument("--data")
        p.add_argument("--bdata")
        if name == "evolve":
            p.add_argument("--snapshot-every", dest="snapshot_every", type=int)

    p = sub.add_parser("symmetry", help="decay of cyclic-symmetric data", **kw)
    _grid_flags(p)
    _solver_flags(p)
    p.add_argument("--order", type=int)
    p.add_argument("--radial", type=float)
    p.add_argument("--perturbation", type=float)
    p.add_argument("--magnetic", type=flag)
    return parser


def _types(parser: argparse.ArgumentParser, command: str) -> dict:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[command]
    out = {}
    for act in sub._actions:
        if act.dest in ("help",):
            continue
        if isinstance(act, argparse._StoreConstAction):
            out[act.dest] = flag
        else:
            out[act.dest] = act.type or str
    return out


def read_config(path: str | Path) -> dict[str, str]:
    values = {}
    for num, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{num}: expected 'key = value'")
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def resolve(parser: argparse.ArgumentParser, ns: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags for the chosen subcommand."""
    cmd = ns.command
    flags = {k: v for k, v in vars(ns).items() if k != "command"}
    cfg = {**COMMON, **DEFAULTS[cmd]}
    if "config" in flags:
        types = _types(parser, cmd)
        for key, text in read_config(flags["config"]).items():
            if key not in cfg:
                raise UsageError(f"unknown config key {key!r} for {cmd}")
            conv = types.get(key, str)
            try:
                cfg[key] = None if text.lower() == "none" else conv(text)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from exc
    cfg.update(flags)
    cfg["command"] = cmd
    return cfg


# -- subcommand bodies ---------------------------------------------------------------


def _grid(cfg):
    from mhdlab.field import GridSpec

    return GridSpec(cfg["d"], cfg["n"], cfg["L"])


def _solver_cfg(cfg):
    from mhdlab.solver import SolverConfig

    return SolverConfig(
        dt=cfg["dt"], T=cfg["T"], quad_nodes=cfg["quad_nodes"], tol=cfg["tol"],
        picard_max=cfg["picard_max"], mode=cfg["mode"],
    )


def _data(text: str, seed: int):
    from dataclasses import replace

    from mhdlab.experiments import DataSpec

    if not text or text == "none":
        return None
    spec = DataSpec.parse(text)
    return replace(spec, seed=seed) if "seed=" not in text else spec


def _validate(cfg) -> dict:
    """Build every typed object up front so bad settings are usage errors."""
    built = {}
    if "n" in cfg:
        built["grid"] = _grid(cfg)
    if "dt" in cfg:
        built["solver"] = _solver_cfg(cfg)
    for key in ("data", "bdata"):
        if key in cfg and cfg[key] not in ("same",):
            built[key] = _data(cfg[key], cfg["seed"])
    if cfg.get("snapshot_every", 0) < 0:
        raise UsageError("--snapshot-every must be >= 0")
    return built


def run_kernels(cfg, built, out):
    from mhdlab.field import write_snapshot
    from mhdlab.kernels import sample_kernel

    grid = built["grid"]
    rows = []
    for fam in [f.strip() for f in cfg["family"].split(",") if f.strip()]:
        kt = sample_kernel(fam, cfg["t"], grid)
        write_snapshot(out.path(f"kernel{fam}.bin"), kt.values, kt.sample_grid, f"kernel{fam}")
        out.written.append(out.path(f"kernel{fam}.bin"))
        rows.append([fam, cfg["t"], cfg["N"], kt.bound_constant(cfg["N"], cfg["radius"]), kt.imag_residue])
    out.csv("kernels.csv", ["family", "t", "N", "bound_constant", "imag_residue"], rows)


def run_conv_check(cfg, built, out):
    from mhdlab.convolution import prop1_sweep, stress_family
    from mhdlab.weighted import WeightedIndex

    grid = built["grid"]
    fam = stress_family(grid, seed=cfg["seed"])
    names = list(fam) if cfg["field"] == "all" else [cfg["field"]]
    for name in names:
        if name not in fam:
            raise UsageError(f"unknown field {name!r}; choose from {', '.join(fam)} or all")
    lambdas = [float(x) for x in cfg["lambdas"].split(",") if x.strip()]
    src = WeightedIndex(cfg["a"], cfg["alpha"])
    dst = WeightedIndex(cfg["p"], cfg["theta"])
    cols = ["lambda", "measured", "envelope1", "envelope2", "ratio1", "ratio2", "flag_log_case"]
    for name in names:
        rep = prop1_sweep(fam[name], grid, cfg["N"], src, dst, lambdas)
        fname = "prop1.csv" if len(names) == 1 else f"prop1_{name}.csv"
        out.csv(fname, cols, rep.csv_rows())


def run_regions(cfg, built, out):
    from mhdlab.indices import region_raster
    from mhdlab.report import region_svg

    rows = region_raster(cfg["d"], cfg["p1"], cfg["theta1"], cfg["raster"], cfg["theta_max"])
    out.csv("regions.csv", ["inv_p0", "theta0", "class"], rows)
    out.text("regions.svg", region_svg(rows, cfg["raster"]))


def _initial(cfg, built):
    from mhdlab.experiments import make_divfree

    grid = built["grid"]
    if built.get("data") is None:
        raise UsageError("--data is required")
    u0 = make_divfree(built["data"], grid)
    if cfg["bdata"] == "same":
        B0 = u0.copy()
    elif built.get("bdata") is None:
        B0 = np.zeros_like(u0)
    else:
        B0 = make_divfree(built["bdata"], grid)
    return u0, B0


def run_evolve(cfg, built, out):
    from mhdlab.field import write_snapshot
    from mhdlab.solver import picard_solve

    grid = built["grid"]
    u0, B0 = _initial(cfg, built)
    traj = picard_solve(u0, B0, grid, built["solver"])
    div = list(traj.divergence_rows())
    rows = []
    stepwise = cfg["mode"] == "stepwise"
    for i, s in enumerate(traj.states):
        if i == 0:
            res = 0.0
        else:
            res = traj.residuals[i - 1][-1] if stepwise else traj.max_residual()
        rows.append([s.t, traj.energies[i], res, div[i][1], div[i][2]])
        k = cfg["snapshot_every"]
        if k and i % k == 0:
            for name, f in (("u", s.u), ("B", s.B)):
                p = out.path(f"{name}_{i:04d}.bin")
                write_snapshot(p, f, grid, name)
                out.written.append(p)
    out.csv("trajectory.csv", ["t", "energy", "residual", "div_u", "div_B"], rows)


def _report_csv(report, out, name):
    from mhdlab.experiments import REPORT_COLUMNS

    out.csv(name, list(REPORT_COLUMNS), [r.as_dict() for r in report.rows])


def run_spread(cfg, built, out):
    from mhdlab.experiments import spreading_experiment

    if cfg["bdata"] == "same":
        raise UsageError("spread takes an independent --bdata")
    rep = spreading_experiment(built["data"], built["grid"], built["solver"], built.get("bdata"))
    _report_csv(rep, out, "spread.csv")


def run_symmetry(cfg, built, out):
    from mhdlab.experiments import symmetry_decay_experiment

    rep = symmetry_decay_experiment(
        cfg["order"], built["grid"], built["solver"], radial=cfg["radial"],
        perturbation=cfg["perturbation"], magnetic=cfg["magnetic"],
    )
    _report_csv(rep, out, "symmetry.csv")
    out.csv("envelope.csv", ["t", "exponent"], sorted(rep.envelope.items()))


def run_moments(cfg, built, out):
    from mhdlab.experiments import run_report

    u0, B0 = _initial(cfg, built)
    rep, _ = run_report(u0, B0, built["grid"], built["solver"])
    _report_csv(rep, out, "moments.csv")


RUNNERS = {
    "kernels": run_kernels,
    "conv-check": run_conv_check,
    "regions": run_regions,
    "evolve": run_evolve,
    "spread": run_spread,
    "symmetry": run_symmetry,
    "moments": run_moments,
}


def _origin(exc: BaseException) -> str:
    """Name of the innermost package module the exception passed through."""
    name = "mhdlab"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        mod = frame.f_globals.get("__name__", "")
        if mod.startswith("mhdlab."):
            name = mod
    return name


def parse_and_dispatch(argv=None) -> int:
    from mhdlab.report import OutputExistsError, ReportWriter

    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve(parser, ns)
        built = _validate(cfg)
    except (UsageError, ValueError, OSError) as exc:
        parser.print_usage(sys.stderr)
        print(f"mhdlab: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if cfg["verbose"] else logging.WARNING, format="%(name)s: %(message)s")
    out = ReportWriter(cfg["out"], force=cfg["force"])
    try:
        out.prepare()
        RUNNERS[cfg["command"]](cfg, built, out)
        out.manifest({k: v for k, v in cfg.items() if k not in ("force", "verbose")})
    except UsageError as exc:
        print(f"mhdlab: error: {exc}", file=sys.stderr)
        return 2
    except OutputExistsError as exc:
        print(f"mhdlab: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit 1
        print(f"mhdlab: {_origin(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
