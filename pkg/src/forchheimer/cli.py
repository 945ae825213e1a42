"""Command line front end: ``forchheimer {props,stationary,transient,verify}``.

Runs are described by a plain-text config with one ``key = value`` per line,
``#`` comments and dotted section keys, e.g.::

    command = stationary
    law.exponents = 0, 1
    law.coefficients = 1, 1
    grid.nx = 32
    boundary.profile = strip

Every run writes fixed-header CSV files into ``output.dir``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import csvio
from .assembly import LinearSolveConfig
from .constitutive import ForchheimerLaw
from .errors import ConfigError, PicardError, TransientError
from .grid import (
    BoundaryTrace,
    CellField,
    FaceField,
    build_grid,
    porosity_field,
    write_cells_csv,
    write_faces_csv,
)
from .solvers import (
    StationaryProblem,
    StepDiagnostics,
    SolverConfig,
    TransientProblem,
    run_transient,
    solve_stationary,
)
from .verify import (
    ConvergenceRow,
    cell_average,
    lemma_law_families,
    make_case_1d_stationary,
    make_case_1d_transient,
    run_convergence,
    run_property_harness,
    write_convergence_csv,
    write_properties_csv,
)

logger = logging.getLogger("forchheimer")

COMMANDS = ("props", "stationary", "transient", "verify")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


def _float_list(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _int(text):
    return int(text)


def _opt_float(text):
    return None if text.lower() in ("", "none") else float(text)


# key -> (parser, default)
SCHEMA = {
    "command": (_choice(*COMMANDS), None),
    "law.exponents": (_float_list, (0.0, 1.0)),
    "law.coefficients": (_float_list, (1.0, 1.0)),
    "law.a_lower": (_opt_float, None),
    "law.a_upper": (_opt_float, None),
    "grid.nx": (_int, 16),
    "grid.ny": (_int, 4),
    "grid.lx": (float, 1.0),
    "grid.ly": (float, 1.0),
    "time.T": (float, 1.0),
    "time.J": (_int, 20),
    "porosity.profile": (_choice("constant", "smooth"), "constant"),
    "porosity.phi_min": (float, 1.0),
    "porosity.phi_max": (float, 1.0),
    "boundary.profile": (_choice("zero", "strip", "dirichlet2d"), "strip"),
    "boundary.drop": (float, 1.0),
    "source.profile": (_choice("zero", "constant", "smooth"), "zero"),
    "source.value": (float, 1.0),
    "initial.profile": (_choice("zero", "strip", "bump", "random"), "zero"),
    "initial.amplitude": (float, 1.0),
    "solver.eps_schedule": (_float_list, SolverConfig().eps_schedule),
    "solver.picard_tol": (float, 1e-10),
    "solver.picard_max_iter": (_int, 200),
    "solver.lin_tol": (float, 1e-12),
    "solver.max_lin_iter": (_int, 5),
    "solver.root_tol": (float, 1e-12),
    "solver.damping": (float, 1.0),
    "verify.case": (_choice("stationary_strip", "transient_strip"), "stationary_strip"),
    "verify.resolutions": (_int_list, (8, 16, 32)),
    "verify.steps": (_int_list, (10, 20, 40)),
    "verify.time_profile": (_choice("linear", "exponential"), "exponential"),
    "props.n_samples": (_int, 10_000),
    "props.laws": (_choice("config", "families"), "config"),
    "output.dir": (str, "out"),
    "seed": (_int, 0),
}


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class RunSpec:
    """Validated run description; ``values`` maps every schema key to its value."""

    values: Mapping = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def command(self):
        return self.values["command"]

    @property
    def out_dir(self):
        return Path(self.values["output.dir"])

    def serialize(self):
        return "".join(f"{k} = {_format(self.values[k])}\n" for k in SCHEMA)

    def law(self):
        v = self.values
        return ForchheimerLaw(v["law.exponents"], v["law.coefficients"],
                              a_lower=v["law.a_lower"], a_upper=v["law.a_upper"])

    def grid(self):
        v = self.values
        return build_grid(v["grid.nx"], v["grid.ny"], v["grid.lx"], v["grid.ly"])

    def solver_config(self):
        v = self.values
        return SolverConfig(
            eps_schedule=v["solver.eps_schedule"],
            picard_tol=v["solver.picard_tol"],
            picard_max_iter=v["solver.picard_max_iter"],
            lin=LinearSolveConfig(v["solver.lin_tol"], v["solver.max_lin_iter"]),
            root_tol=v["solver.root_tol"],
            damping=v["solver.damping"],
        )


def parse_config(text, overrides=None):
    """Parse and validate a config, collecting every error before raising ``ConfigError``."""
    errors = []
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            errors.append(f"line {lineno}: unknown key '{key}'")
            continue
        if key in raw:
            errors.append(f"line {lineno}: duplicate key '{key}'")
        raw[key] = value
    for key, value in (overrides or {}).items():
        if key not in SCHEMA:
            errors.append(f"unknown key '{key}'")
        else:
            raw[key] = str(value)

    values = {}
    for key, (parser, default) in SCHEMA.items():
        if key not in raw:
            values[key] = default
            continue
        try:
            values[key] = parser(raw[key])
        except ValueError as exc:
            errors.append(f"{key}: malformed value '{raw[key]}' ({exc})")
            values[key] = default
    # malformed entries fall back to defaults so the invariant checks still run
    errors.extend(_validate(values))
    if errors:
        raise ConfigError(errors)
    return RunSpec(values)


def _validate(v):
    errors = []
    spec = RunSpec(v)
    if v["command"] is None:
        errors.append("command: missing (one of props, stationary, transient, verify)")
    for what, build in (("law", spec.law), ("grid", spec.grid), ("solver", spec.solver_config)):
        try:
            build()
        except ValueError as exc:
            errors.append(f"{what}: {exc}")
    if not v["porosity.phi_min"] > 0:
        errors.append("porosity.phi_min must be positive (H1: porosity bounded below)")
    elif v["porosity.phi_max"] < v["porosity.phi_min"]:
        errors.append("porosity.phi_max must not be below porosity.phi_min (H1)")
    if not v["time.T"] > 0:
        errors.append("time.T must be positive")
    if v["time.J"] < 1:
        errors.append("time.J must be at least 1")
    elif v["command"] == "transient" and v["porosity.phi_min"] > 0 and v["time.T"] > 0:
        dt = v["time.T"] / v["time.J"]
        if not dt < 0.5 * v["porosity.phi_min"]:
            errors.append(f"time step {dt:g} must be below phi_min/2 = {0.5 * v['porosity.phi_min']:g}")
    if v["boundary.drop"] < 0:
        errors.append("boundary.drop must be non-negative")
    if len(v["verify.resolutions"]) < 3 or len(v["verify.steps"]) < 3:
        errors.append("verify.resolutions and verify.steps need at least three entries")
    if any(n < 1 for n in v["verify.resolutions"] + v["verify.steps"]):
        errors.append("verify.resolutions and verify.steps must be positive")
    if v["props.n_samples"] < 10_000:
        errors.append("props.n_samples must be at least 10000")
    if v["seed"] < 0:
        errors.append("seed must be non-negative")
    return errors


def _xy(p):
    return p[..., 0], p[..., 1]


def _porosity(spec, grid):
    lo, hi = spec["porosity.phi_min"], spec["porosity.phi_max"]
    if spec["porosity.profile"] == "constant":
        return porosity_field(grid, lo, lo, hi)
    field = cell_average(grid, lambda p: lo + (hi - lo) * np.sin(np.pi * p[..., 0] / grid.lx)
                         * p[..., 1] / grid.ly)
    return porosity_field(grid, field, lo, hi)


def _boundary(spec, grid):
    profile, drop = spec["boundary.profile"], spec["boundary.drop"]
    if profile == "zero":
        return BoundaryTrace.zeros(grid)
    if profile == "strip":
        return BoundaryTrace.from_function(grid, lambda x, y: drop * (1.0 - x / grid.lx))
    return BoundaryTrace.from_function(
        grid, lambda x, y: drop * (1.0 + x - 0.5 * y + 0.25 * np.sin(np.pi * x) * np.cos(np.pi * y)))


def _source(spec, grid):
    profile, value = spec["source.profile"], spec["source.value"]
    if profile == "zero":
        return CellField.zeros(grid)
    if profile == "constant":
        return CellField.constant(grid, value)
    return cell_average(grid, lambda p: value * (1.0 + p[..., 0] * p[..., 1]))


def _initial(spec, grid, rng):
    profile, amp = spec["initial.profile"], spec["initial.amplitude"]
    if profile == "zero":
        return CellField.zeros(grid)
    if profile == "strip":
        return cell_average(grid, lambda p: amp * (1.0 - p[..., 0] / grid.lx))
    if profile == "bump":
        return cell_average(grid, lambda p: amp * np.sin(np.pi * p[..., 0] / grid.lx)
                            * np.sin(np.pi * p[..., 1] / grid.ly))
    return CellField(grid, amp * rng.uniform(-1.0, 1.0, (grid.nx, grid.ny)))


STATIONARY_HEADER = (
    "eps", "picard_iters", "nonlinear_residual", "norm_rho_l2", "norm_m_l2", "norm_m_ls",
    "norm_m_hdiv", "diff_rho", "diff_m", "bound_ratio_m", "bound_ratio_rho",
)


def _stationary_rows(records):
    return [(r.eps, r.picard_iters, r.nonlinear_residual, r.norm_rho_l2, r.norm_m_l2,
             r.norm_m_ls, r.norm_m_hdiv, r.diff_rho, r.diff_m, r.bound_ratio_m,
             r.bound_ratio_rho) for r in records]


def _run_props(spec, out):
    laws = lemma_law_families() if spec["props.laws"] == "families" else [spec.law()]
    report = run_property_harness(laws, spec["props.n_samples"], spec["seed"])
    write_properties_csv(out / "properties.csv", report)
    for r in report.laws:
        logger.info("%s: %d violations", r.label, r.violations)
        for o in r.offending:
            logger.warning("violation %s", o)
    return EXIT_OK if report.ok else EXIT_SOLVER


def _run_stationary(spec, out):
    grid = spec.grid()
    problem = StationaryProblem(spec.law(), grid, _source(spec, grid), _boundary(spec, grid))
    try:
        m, rho, report = solve_stationary(problem, spec.solver_config())
    except PicardError as exc:
        logger.error("%s", exc)
        csvio.write_rows(out / "diagnostics.csv", STATIONARY_HEADER,
                         _stationary_rows(getattr(exc, "records", [])))
        if exc.m is not None and exc.rho is not None:
            write_cells_csv(out / "fields.csv", exc.rho)
            write_faces_csv(out / "fluxes.csv", exc.m)
        return EXIT_SOLVER
    write_cells_csv(out / "fields.csv", rho)
    write_faces_csv(out / "fluxes.csv", m)
    csvio.write_rows(out / "diagnostics.csv", STATIONARY_HEADER, _stationary_rows(report.records))
    return EXIT_OK


def _run_transient(spec, out):
    grid = spec.grid()
    rng = np.random.default_rng(spec["seed"])
    problem = TransientProblem(
        spec.law(), grid, _porosity(spec, grid), _source(spec, grid), _boundary(spec, grid),
        _initial(spec, grid, rng), spec["time.T"], spec["time.J"],
        phi_min=spec["porosity.phi_min"], phi_max=spec["porosity.phi_max"],
    )
    try:
        result = run_transient(problem, spec.solver_config())
        status = EXIT_OK
    except TransientError as exc:
        logger.error("%s", exc)
        result = exc.trajectory
        status = EXIT_SOLVER
    csvio.write_rows(out / "diagnostics.csv", StepDiagnostics.ROW_HEADER,
                     (d.row() for d in result.diagnostics))
    write_cells_csv(out / "fields.csv", result.rho[-1])
    write_faces_csv(out / "fluxes.csv", result.m[-1] if result.m else FaceField.zeros(grid))
    return status


def _run_verify(spec, out):
    law, config = spec.law(), spec.solver_config()
    try:
        if spec["verify.case"] == "stationary_strip":
            case = make_case_1d_stationary(law, spec["boundary.drop"], spec["grid.lx"])
            rows = run_convergence(case, spec["verify.resolutions"], config=config,
                                   ny=spec["grid.ny"])
        else:
            T = spec["time.T"]
            case = make_case_1d_transient(law, spec["porosity.phi_min"], spec["grid.lx"], T,
                                          spec["verify.time_profile"])
            rows = run_convergence(case, dt_list=[T / J for J in spec["verify.steps"]],
                                   config=config, nx=spec["grid.nx"], ny=spec["grid.ny"])
    except (PicardError, TransientError) as exc:
        logger.error("%s", exc)
        csvio.write_rows(out / "convergence.csv", ConvergenceRow.HEADER, [])
        return EXIT_SOLVER
    write_convergence_csv(out / "convergence.csv", rows)
    for r in rows:
        logger.info("resolution %g: rho %.3e m %.3e order %s", r.resolution, r.error_rho_l2,
                    r.error_m, r.observed_order)
    return EXIT_OK


RUNNERS = {
    "props": _run_props,
    "stationary": _run_stationary,
    "transient": _run_transient,
    "verify": _run_verify,
}


def run(spec):
    """Execute ``spec``; returns the process exit status."""
    out = spec.out_dir
    out.mkdir(parents=True, exist_ok=True)
    logger.info("running %s into %s", spec.command, out)
    return RUNNERS[spec.command](spec, out)


def configure_logging(level=None):
    level = (level or os.environ.get("FORCH_LOG", "quiet")).lower()
    levels = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    root = logging.getLogger("forchheimer")
    root.setLevel(levels.get(level, logging.ERROR))
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="forchheimer", description=__doc__.splitlines()[0])
    parser.add_argument("command", nargs="?", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="key = value config file")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    parser.add_argument("--seed", type=int, help="random seed (overrides seed)")
    args = parser.parse_args(argv)
    configure_logging()

    text = ""
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    overrides = {}
    if args.command:
        overrides["command"] = args.command
    if args.out:
        overrides["output.dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        spec = parse_config(text, overrides)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
