"""Command-line driver.

Subcommands: solve, verify-embedding, verify-caccioppoli, verify-supbound,
degiorgi-trace, convergence.  Each verify-* command runs one experiment and
exits 0 iff every hard assertion passed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .doublephase import FluxModel
from .errors import ConfigInvalid, DplabError
from .harness import (
    ExperimentConfig,
    RandomFieldSpec,
    default_config,
    generate_field,
    make_coefficient,
    run_experiment,
    write_solve_trace,
)
from .exponents import build_exponents
from .mesh import SpaceTimeGrid, save_field
from .solver import SolverConfig, solve_cylinder

_VERIFY_COMMANDS = {
    "verify-embedding": "embedding",
    "verify-caccioppoli": "caccioppoli",
    "verify-supbound": "supbound",
    "degiorgi-trace": "degiorgi",
    "convergence": "convergence",
}


def _add_common(sp: argparse.ArgumentParser):
    sp.add_argument("--config", type=Path, default=None, help="JSON config file")
    sp.add_argument("--out", type=Path, default=Path("dplab-out"), help="output directory")
    sp.add_argument("--seed", type=int, default=None, help="override the config seed")
    sp.add_argument("--quiet", action="store_true", help="suppress progress output")
    sp.add_argument("--svg", action="store_true", help="also emit an SVG plot")


def _load_experiment_config(args, experiment: str) -> ExperimentConfig:
    if args.config is not None:
        data = json.loads(Path(args.config).read_text())
        data.setdefault("experiment", experiment)
        if data["experiment"] != experiment:
            raise ConfigInvalid(
                f"config is for {data['experiment']!r}, command wants {experiment!r}"
            )
        cfg = ExperimentConfig.from_dict(data)
    else:
        cfg = default_config(experiment)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.svg:
        updates["svg"] = True
    if updates:
        cfg = ExperimentConfig.from_dict({**asdict(cfg), **updates})
    return cfg


def _cmd_solve(args) -> int:
    if args.config is None:
        raise ConfigInvalid("solve needs --config with grid/params/initial sections")
    data = json.loads(Path(args.config).read_text())
    gspec = data["grid"]
    grid = SpaceTimeGrid(
        dim=int(gspec["dim"]),
        nx=int(gspec["nx"]),
        nt=int(gspec["nt"]),
        center=tuple(gspec["center"]),
        radius=float(gspec["radius"]),
        time_length=float(gspec["time_length"]),
    )
    par = data.get("params", {})
    exps = build_exponents(
        int(par.get("n", grid.dim)),
        float(par.get("p", 2.0)),
        float(par.get("q", 2.5)),
        float(par.get("nu", 1.0)),
        float(par.get("L", 1.0)),
        float(par.get("a_sup", 0.0)),
        strict=grid.dim >= 2,
    )
    coeff = make_coefficient(data.get("coefficient", {"kind": "constant", "value": 0.0}), grid)
    flux = FluxModel(exps, coeff)
    ispec = data.get("initial", {"kind": "fourier", "modes": 2, "decay": 2.0, "seed": 0})
    seed = args.seed if args.seed is not None else int(ispec.get("seed", 0))
    initial = generate_field(
        RandomFieldSpec(int(ispec.get("modes", 2)), float(ispec.get("decay", 2.0)), seed),
        grid,
    ).values[0]
    bspec = data.get("bc", {"kind": "frozen"})
    bc = {"frozen": None, "zero": 0.0}.get(bspec.get("kind", "frozen"), None)
    if bspec.get("kind") == "constant":
        bc = float(bspec["value"])
    sspec = data.get("solver", {})
    cfg = SolverConfig(
        regularization_eps=sspec.get("regularization_eps"),
        picard_tol=float(sspec.get("picard_tol", 1e-9)),
        picard_max=int(sspec.get("picard_max", 80)),
        cg_tol=float(sspec.get("cg_tol", 1e-11)),
        cg_max=int(sspec.get("cg_max", 2000)),
    )
    field, trace = solve_cylinder(initial, flux, grid, cfg, bc=bc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_field(field, out / "solution.field")
    write_solve_trace(trace, out / "trace.json")
    if not args.quiet:
        sup = float(np.max(np.abs(field.values)))
        print(f"[solve] wrote {out / 'solution.field'} (sup |u| = {sup:.6g})")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dplab",
        description="Double phase equation laboratory: solve and verify estimates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="run the implicit solver and save the field")
    _add_common(sp)

    for command, experiment in _VERIFY_COMMANDS.items():
        sp = sub.add_parser(command, help=f"run the {experiment} experiment")
        _add_common(sp)

    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        experiment = _VERIFY_COMMANDS[args.command]
        cfg = _load_experiment_config(args, experiment)
        result = run_experiment(cfg, out_dir=args.out, quiet=args.quiet)
        if not args.quiet:
            for key in ("per_level_max_c", "heat_orders", "fitted_blowup_slope"):
                if key in result.summary and result.summary[key] is not None:
                    print(f"  {key}: {result.summary[key]}")
        return result.exit_code
    except DplabError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
