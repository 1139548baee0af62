"""Command line interface: ``ensnse run|converge|probe``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

import numpy as np

from .analytics import consistency_check, discrete_norm_20, discrete_norm_inf0, truncation_probe
from .femspace import build_space
from .harness import ConfigError, RunConfig, ladder, run_convergence, run_simulation
from .linsolve import SingularMatrixError
from .mesh import unit_square_mesh
from .problems import PROBLEMS
from .stepper import NumericalBlowup

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_SOLVER = 0, 2, 3, 4

# CLI flag -> RunConfig field
_FLAGS = {
    "problem": "problem", "nu": "nu", "dt": "dt", "tfinal": "T", "grid_n": "grid_n",
    "members": "J", "epsilon": "epsilons", "scheme": "scheme", "gamma": "gamma",
    "grad_div": "grad_div", "startup": "startup", "cfl_threshold": "cfl_threshold",
    "out": "output", "format": "format",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ensnse", description="Ensemble Navier-Stokes solver")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--problem", choices=sorted(PROBLEMS))
    common.add_argument("--nu", type=float)
    common.add_argument("--dt", type=float)
    common.add_argument("--tfinal", type=float)
    common.add_argument("--grid-n", dest="grid_n", type=int,
                        help="grid cells per side (default 1/(2 dt))")
    common.add_argument("--members", type=int)
    common.add_argument("--epsilon", type=_floats, help="comma-separated perturbations")
    common.add_argument("--scheme", choices=["blended", "bdf2"])
    common.add_argument("--gamma", type=float)
    common.add_argument("--grad-div", dest="grad_div", type=float)
    common.add_argument("--startup", choices=["exact", "cn"])
    common.add_argument("--cfl-threshold", dest="cfl_threshold", type=float)
    common.add_argument("--out")
    common.add_argument("--format", choices=["csv", "json"])

    sub.add_parser("run", parents=[common], help="single ensemble run")
    conv = sub.add_parser("converge", parents=[common], help="convergence ladder")
    conv.add_argument("--levels", type=int, default=4, help="number of halvings of dt")
    probe = sub.add_parser("probe", parents=[common], help="truncation and consistency probes")
    probe.add_argument("--probe-dts", type=_floats, default=[0.05, 0.025, 0.0125])
    probe.add_argument("--probe-times", type=_floats, default=[0.5])
    return parser


def config_from_args(args) -> RunConfig:
    """Merge the JSON config file (if any) with explicit flags; flags win."""
    data = {}
    if args.config:
        with open(args.config) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON in {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    for flag, name in _FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[name] = value
    # a new member count invalidates perturbations read from the file
    if args.members is not None and args.epsilon is None:
        data.pop("epsilons", None)
    try:
        return RunConfig.from_dict(data).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _emit(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run(args):
    cfg = config_from_args(args)
    res = run_simulation(cfg)
    records = []
    for k, rep in enumerate(res.reports):
        rec = {"step": rep.step, "t": rep.t}
        for j in range(cfg.J):
            if res.series:
                level = k + 3
                rec[f"u{j + 1}_l2_error"] = res.series[j].l2[level]
                rec[f"u{j + 1}_h1_error"] = res.series[j].h1[level]
                rec[f"p{j + 1}_l2_error"] = res.series[j].pressure[level]
            rec[f"u{j + 1}_kinetic_energy"] = float(rep.kinetic_energy[j])
            rec[f"u{j + 1}_cfl"] = float(rep.cfl[j])
            rec[f"u{j + 1}_cfl_2d"] = float(rep.cfl_2d[j])
        records.append(rec)
    summary = {"config": cfg.to_dict()}
    if res.series:
        for j, s in enumerate(res.series):
            summary[f"u{j + 1}_l2_inf0"] = discrete_norm_inf0(s, "l2")
            summary[f"u{j + 1}_h1_20"] = discrete_norm_20(s, "h1")
    if cfg.format == "json":
        text = json.dumps({"summary": summary, "steps": records}, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(records[0]), lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow({k: (v if isinstance(v, int) else f"{v:.16e}") for k, v in rec.items()})
        text = buf.getvalue()
    _emit(text, cfg.output)
    for key, value in summary.items():
        if key != "config":
            print(f"{key}: {value:.6e}", file=sys.stderr)


def _converge(args):
    cfg = config_from_args(args)
    if args.levels < 1:
        raise ConfigError("--levels must be at least 1")
    dts = [cfg.dt / 2 ** k for k in range(args.levels)]
    table = run_convergence([c.validate() for c in ladder(cfg, dts)])
    text = table.to_json() + "\n" if cfg.format == "json" else table.to_csv()
    _emit(text, cfg.output)
    print(table.format(), file=sys.stderr)


def _probe(args):
    cfg = config_from_args(args)
    out = {"truncation": {}, "consistency": []}
    for gamma in (0.5, cfg.gamma, 1.0):
        out["truncation"][f"gamma={gamma:g}"] = truncation_probe(gamma, 3)
    problem = PROBLEMS[cfg.problem](cfg.nu)
    if problem.velocity_ttt is not None:
        space = build_space(unit_square_mesh(16))
        for t_n in args.probe_times:
            for dt in args.probe_dts:
                r = consistency_check(problem, t_n, dt, space)
                out["consistency"].append({
                    "t_n": t_n, "dt": dt, "lhs1": r.lhs1, "rhs1": r.rhs1,
                    "rhs1_grad": r.rhs1_grad, "lhs2": r.lhs2, "rhs2": r.rhs2,
                    "pass1": bool(r.pass1), "pass1_grad": bool(r.pass1_grad),
                    "pass2": bool(r.pass2)})
    if cfg.format == "json":
        text = json.dumps(out, indent=2) + "\n"
    else:
        buf = io.StringIO()
        buf.write("quantity,value\n")
        for k, v in out["truncation"].items():
            buf.write(f"truncation {k},{v:.16e}\n")
        for rec in out["consistency"]:
            for k in ("lhs1", "rhs1", "lhs2", "rhs2"):
                buf.write(f"{k} t_n={rec['t_n']:g} dt={rec['dt']:g},{rec[k]:.16e}\n")
        text = buf.getvalue()
    _emit(text, cfg.output)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _run, "converge": _converge, "probe": _probe}[args.command]
    try:
        handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalBlowup as exc:
        print(f"numerical blowup: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (SingularMatrixError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
