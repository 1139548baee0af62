"""Run configuration, simulation driver and convergence tables."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .analytics import (ErrorSeries, convergence_rate, discrete_norm_20, discrete_norm_inf0,
                        h1_semi_error, l2_error, pressure_l2_error)
from .assembly import Operators
from .femspace import TaylorHoodSpace, build_space
from .mesh import unit_square_mesh
from .problems import PROBLEMS, AnalyticProblem
from .stepper import (EnsembleState, StepReport, advance, fluctuations,
                      interpolate_mean_free_pressure, startup)

__all__ = ["ConfigError", "RunConfig", "SimulationResult", "run_simulation",
           "ConvergenceTable", "run_convergence", "ladder"]

logger = logging.getLogger(__name__)

H_RULE = "grid spacing 1/n = 2*dt"
ERROR_SAMPLING = "every time level, startup levels included"


class ConfigError(ValueError):
    pass


def _default_epsilons(J):
    if J == 1:
        return (0.0,)
    if J == 2:
        return (1e-3, -1e-3)
    return tuple(float(e) for e in np.linspace(-1e-3, 1e-3, J))


@dataclass
class RunConfig:
    """Everything needed to reproduce one ensemble run.

    ``grid_n`` defaults to ``round(1 / (2 dt))``. ``epsilons`` holds one
    perturbation per member and defaults to a symmetric set.
    """

    problem: str = "green-taylor"
    nu: float = 0.01
    dt: float = 0.05
    T: float = 1.0
    grid_n: Optional[int] = None
    J: int = 2
    epsilons: Optional[Sequence[float]] = None
    scheme: str = "blended"
    gamma: float = 0.5
    grad_div: float = 0.0
    startup: str = "exact"
    error_degree: int = 7
    cfl_threshold: float = 1.0
    output: Optional[str] = None
    format: str = "csv"

    def __post_init__(self):
        if self.epsilons is None:
            self.epsilons = _default_epsilons(int(self.J))
        self.epsilons = tuple(float(e) for e in self.epsilons)
        if self.grid_n is None and self.dt > 0:
            self.grid_n = int(round(1.0 / (2.0 * self.dt)))

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def validate(self) -> "RunConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        if not self.nu > 0:
            raise ConfigError("nu must be positive")
        if not self.dt > 0 or not self.T > 0:
            raise ConfigError("dt and T must be positive")
        if abs(self.dt * self.n_steps - self.T) > 1e-12:
            raise ConfigError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if self.n_steps < 3:
            raise ConfigError("T must cover at least three time steps")
        if not isinstance(self.grid_n, (int, np.integer)) or self.grid_n < 1:
            raise ConfigError(f"grid_n must be a positive integer, got {self.grid_n!r}")
        if int(self.J) < 1 or len(self.epsilons) != int(self.J):
            raise ConfigError(f"need J={self.J} >= 1 perturbations, got {len(self.epsilons)}")
        if self.scheme not in ("blended", "bdf2"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not 0.5 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [1/2, 1]")
        if self.grad_div < 0:
            raise ConfigError("grad_div must be non-negative")
        if self.startup not in ("exact", "cn"):
            raise ConfigError(f"unknown startup mode {self.startup!r}")
        if self.error_degree not in (1, 2, 3, 5, 7):
            raise ConfigError(f"unsupported error quadrature degree {self.error_degree}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"unknown output format {self.format!r}")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["epsilons"] = list(self.epsilons)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(data)


@dataclass
class SimulationResult:
    config: RunConfig
    state: EnsembleState
    series: list
    mean_series: Optional[ErrorSeries]
    reports: list
    history: Optional[np.ndarray] = None
    fluctuation_sums: list = field(default_factory=list)

    @property
    def space(self) -> TaylorHoodSpace:
        return self.state.space


def _members(config: RunConfig):
    factory = PROBLEMS[config.problem]
    base: AnalyticProblem = factory(config.nu)
    return [base.member(e) for e in config.epsilons]


def _record(space, config, problems, levels_now, pressures, t, series, mean_series):
    if not problems[0].has_exact_solution:
        return
    deg = config.error_degree
    for j, prob in enumerate(problems):
        series[j].append(t, l2_error(space, levels_now[j], prob.velocity, t, deg),
                         h1_semi_error(space, levels_now[j], prob.velocity_grad, t, deg),
                         pressure_l2_error(space, pressures[j], prob.pressure, t, deg))
    J = len(problems)
    mean_u = levels_now.mean(axis=0)

    def mean_field(x, y, tt):
        comps = [prob.velocity(x, y, tt) for prob in problems]
        return sum(c[0] for c in comps) / J, sum(c[1] for c in comps) / J

    def mean_grad(x, y, tt):
        gs = [prob.velocity_grad(x, y, tt) for prob in problems]
        return tuple(tuple(sum(g[i][k] for g in gs) / J for k in range(2)) for i in range(2))

    mean_series.append(t, l2_error(space, mean_u, mean_field, t, deg),
                       h1_semi_error(space, mean_u, mean_grad, t, deg))


def run_simulation(config: RunConfig, *, keep_history: bool = False,
                   space: TaylorHoodSpace | None = None) -> SimulationResult:
    """Start up, then advance to ``T`` while recording errors per level."""
    config.validate()
    if space is None:
        space = build_space(unit_square_mesh(config.grid_n))
    problems = _members(config)
    state = startup(space, problems, config.dt, scheme=config.scheme, gamma=config.gamma,
                    grad_div=config.grad_div, mode=config.startup,
                    cfl_threshold=config.cfl_threshold, operators=Operators(space))
    h = space.mesh.h
    series = [ErrorSeries(config.dt, h) for _ in problems]
    mean_series = ErrorSeries(config.dt, h)
    zero_p = np.zeros((len(problems), space.n_pressure))
    for k in range(3):
        p = state.pressure if k == 2 else zero_p
        if k < 2 and problems[0].has_exact_solution:
            p = np.array([interpolate_mean_free_pressure(space, state.operators, pr, k * config.dt)
                          for pr in problems])
        _record(space, config, problems, state.levels[k], p, k * config.dt, series, mean_series)
    history = [state.levels[k].copy() for k in range(3)] if keep_history else None
    reports: list[StepReport] = []
    fl_sums = []
    while state.step < config.n_steps:
        fl_sums.append(float(np.abs(fluctuations(state).sum(axis=0)).max()))
        state, report = advance(state)
        reports.append(report)
        _record(space, config, problems, state.levels[-1], state.pressure, state.t,
                series, mean_series)
        if history is not None:
            history.append(state.levels[-1].copy())
    if not problems[0].has_exact_solution:
        series, mean_series = [], None
    return SimulationResult(config, state, series, mean_series, reports,
                            None if history is None else np.array(history), fl_sums)


def ladder(base: RunConfig, dts: Sequence[float]) -> list:
    """Copies of ``base`` at each ``dt`` with the paired grid ``n = 1/(2 dt)``."""
    return [dataclasses.replace(base, dt=float(dt), grid_n=None) for dt in dts]


@dataclass
class ConvergenceTable:
    """Rows of discrete-norm errors with observed rates between rows."""

    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)

    def column(self, name):
        return [row[name] for row in self.rows]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in self.columns])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> "ConvergenceTable":
        reader = csv.reader(io.StringIO(text))
        columns = next(reader)
        rows = [{c: _parse(v) for c, v in zip(columns, rec)} for rec in reader if rec]
        return cls(columns, rows)

    def to_json(self, path=None) -> str:
        text = json.dumps({"metadata": self.metadata, "columns": self.columns,
                           "rows": self.rows}, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def format(self) -> str:
        widths = [max(len(c), 12) for c in self.columns]
        lines = ["  ".join(c.rjust(w) for c, w in zip(self.columns, widths))]
        for row in self.rows:
            cells = []
            for c, w in zip(self.columns, widths):
                v = row[c]
                if v is None:
                    s = "--"
                elif isinstance(v, int):
                    s = str(v)
                elif c.endswith("_rate"):
                    s = f"{v:.4f}"
                else:
                    s = f"{v:.5e}"
                cells.append(s.rjust(w))
            lines.append("  ".join(cells))
        return "\n".join(lines)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.16e}"


def _parse(s):
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        return float(s)


def _rows_from_results(results):
    J = len(results[0].series)
    columns = ["dt", "h", "grid_n"]
    for j in range(1, J + 1):
        columns += [f"u{j}_l2_inf0", f"u{j}_l2_inf0_rate", f"u{j}_h1_20", f"u{j}_h1_20_rate"]
    columns += ["mean_l2_inf0", "mean_l2_inf0_rate", "mean_h1_20", "mean_h1_20_rate"]
    rows = []
    for k, res in enumerate(results):
        row = {"dt": res.config.dt, "h": res.space.mesh.h, "grid_n": int(res.config.grid_n)}
        prev = results[k - 1] if k > 0 else None
        halved = prev is not None and math.isclose(prev.config.dt, 2 * res.config.dt, rel_tol=1e-9)
        targets = [(f"u{j + 1}", res.series[j], prev.series[j] if prev else None) for j in range(J)]
        targets.append(("mean", res.mean_series, prev.mean_series if prev else None))
        for name, s, ps in targets:
            l2 = discrete_norm_inf0(s, "l2")
            h1 = discrete_norm_20(s, "h1")
            row[f"{name}_l2_inf0"] = l2
            row[f"{name}_h1_20"] = h1
            row[f"{name}_l2_inf0_rate"] = (
                convergence_rate(discrete_norm_inf0(ps, "l2"), l2) if halved else None)
            row[f"{name}_h1_20_rate"] = (
                convergence_rate(discrete_norm_20(ps, "h1"), h1) if halved else None)
        rows.append(row)
    return columns, rows


def run_convergence(configs: Sequence[RunConfig]) -> ConvergenceTable:
    """Run each configuration and tabulate errors and observed rates."""
    results = []
    for cfg in configs:
        logger.info("convergence row dt=%g n=%d scheme=%s", cfg.dt, cfg.grid_n or 0, cfg.scheme)
        res = run_simulation(cfg)
        if not res.series:
            raise ConfigError(f"problem {cfg.problem!r} has no exact solution to measure errors against")
        results.append(res)
    return table_from_results(results)


def table_from_results(results) -> ConvergenceTable:
    columns, rows = _rows_from_results(results)
    base = results[0].config
    metadata = {
        "problem": base.problem, "scheme": base.scheme, "gamma": base.gamma, "nu": base.nu,
        "T": base.T, "J": base.J, "epsilons": list(base.epsilons), "startup": base.startup,
        "grad_div": base.grad_div, "h_rule": H_RULE, "h_column": "longest triangle edge",
        "error_sampling": ERROR_SAMPLING,
    }
    return ConvergenceTable(columns, rows, metadata)
