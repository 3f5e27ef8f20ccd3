"""Command-line entry point and experiment orchestration.

One tool, five subcommands:

* ``simulate``  one similarity-variable run from given (d0, d1); trajectory
                CSV plus exit-report JSON.
* ``shoot``     the two-parameter search; progress as line JSON, result JSON.
* ``verify``    profile-bound and central-value reports on a fresh run.
* ``kernel``    semigroup eigenrelation / composition sweep and the exact
                Feynman-Kac smoke cases; CSV sweep plus JSON report.
* ``oracle``    physical-variable Picard run cross-checked against the
                similarity solver through the change of variables.

Configuration is a flat ``key = value`` text file; every key can be
overridden by a CLI flag of the same name.  Each run directory receives a
manifest recording the exact configuration, seed, and artifact list; the
data artifacts themselves contain nothing run-dependent beyond the
configuration, so identical manifests reproduce identical bytes.

Exit codes: 0 success, 1 I/O, 2 parameter validation, 3 violated
precondition, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import duhamel, kernels, profiles, shooting, shrinking, solver, spectral, verifier
from .grid import Field, Grid1D
from .params import DEFAULTS, ModelParams, ParamError, derive, validate

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_PRECONDITION = 3
EXIT_NUMERIC = 4

# name -> (type, default); physics keys come from params.DEFAULTS
NUMERIC_KEYS: dict = {
    "d0": (float, 0.0),
    "d1": (float, 0.0),
    "grid_h": (float, 0.1),
    "ds": (float, 5e-3),
    "span": (float, 20.0),          # simulate/verify horizon: s0 + span
    "horizon": (float, 26.0),       # shoot survival horizon: s0 + horizon
    "tol": (float, 1e-3),
    "monitor_every": (int, 10),
    "snapshot_every": (int, 2),
    "seed": (int, 12345),
    "paths": (int, 10000),
    "tau_steps": (int, 64),
    "workers": (int, 1),
    "bc": (str, "profile"),
    "upwind": (str, "auto"),
}


class CliError(RuntimeError):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def load_config(path: str | Path) -> dict:
    """Flat key=value file; '#' starts a comment, blank lines ignored."""
    out = {}
    p = Path(path)
    if not p.exists():
        raise CliError(EXIT_IO, f"config file not found: {p}")
    for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(EXIT_IO, f"{p}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def _coerce(key: str, value):
    if value is None:
        return None
    if key in DEFAULTS:
        if key == "N":
            return int(value)
        if key == "eps" and str(value).lower() in ("none", "auto", ""):
            return None
        return float(value)
    typ, _ = NUMERIC_KEYS[key]
    return typ(value)


def build_settings(args: argparse.Namespace) -> tuple[ModelParams, dict]:
    """Merge defaults < config file < CLI flags; validate the physics."""
    merged: dict = {k: v for k, v in DEFAULTS.items()}
    merged.update({k: v for k, (_, v) in NUMERIC_KEYS.items()})
    if args.config:
        cfg = load_config(args.config)
        unknown = set(cfg) - set(merged)
        if unknown:
            raise CliError(EXIT_IO, f"unknown config key(s): {sorted(unknown)}")
        for k, v in cfg.items():
            merged[k] = _coerce(k, v)
    for k in merged:
        flag = getattr(args, k, None)
        if flag is not None:
            merged[k] = _coerce(k, flag)
    try:
        params = validate({k: merged[k] for k in DEFAULTS})
    except ParamError as exc:
        raise CliError(EXIT_VALIDATION, f"params: {exc}") from exc
    numerics = {k: merged[k] for k in NUMERIC_KEYS}
    return params, numerics


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

def write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    """CSV with one header row and full double precision (17 significant digits)."""
    rows = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_manifest(out_dir: Path, params: ModelParams, numerics: dict,
                   command: str, artifacts: list[str]) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": {**dataclasses.asdict(params), **numerics},
        "seed": numerics["seed"],
        "timestamp_unix": time.time(),
        "artifacts": sorted(artifacts),
    }
    write_json(out_dir / "manifest.json", manifest)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solver_opts(numerics: dict, stop_on_exit: bool = True) -> solver.SolverOptions:
    return solver.SolverOptions(
        ds=numerics["ds"], bc=numerics["bc"], upwind=numerics["upwind"],
        monitor_every=numerics["monitor_every"],
        snapshot_every=numerics["snapshot_every"], stop_on_exit=stop_on_exit,
    )


def _run_grid(params: ModelParams, numerics: dict, span: float) -> Grid1D:
    return shooting.default_shooting_grid(params, params.s0 + span, h=numerics["grid_h"])


def _trajectory_files(out: Path, traj: solver.Trajectory, params: ModelParams,
                      numerics: dict, command: str) -> list[str]:
    header, cols = traj.csv_columns()
    write_csv(out / "trajectory.csv", header, cols)
    exit_payload = traj.exit.to_dict() if traj.exit is not None else {"component": "none"}
    if traj.blowup is not None:
        exit_payload["blowup"] = traj.blowup
    write_json(out / "exit_report.json", exit_payload)
    return ["trajectory.csv", "exit_report.json"]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    params, numerics = build_settings(args)
    spectral.cross_validate_quadrature()
    out = _out_dir(args)
    grid = _run_grid(params, numerics, numerics["span"])
    psi = shooting.initial_data(numerics["d0"], numerics["d1"], params.s0, params, grid)
    state = solver.init_from_data(psi, params)
    traj = solver.run(state, params.s0 + numerics["span"], params,
                      _solver_opts(numerics))
    if traj.blowup is not None:
        artifacts = _trajectory_files(out, traj, params, numerics, "simulate")
        write_manifest(out, params, numerics, "simulate", artifacts)
        raise CliError(EXIT_NUMERIC, f"pointwise blow-up on grid: {traj.blowup}")
    artifacts = _trajectory_files(out, traj, params, numerics, "simulate")
    write_manifest(out, params, numerics, "simulate", artifacts)
    return EXIT_OK


def cmd_shoot(args: argparse.Namespace) -> int:
    params, numerics = build_settings(args)
    out = _out_dir(args)
    horizon = params.s0 + numerics["horizon"]
    grid = _run_grid(params, numerics, numerics["horizon"])
    opts = _solver_opts(numerics)
    progress_path = out / "shoot_progress.ndjson"
    with progress_path.open("w") as fh:
        try:
            result = shooting.search(
                params, horizon_s=horizon, tol=numerics["tol"], grid=grid,
                opts=opts, workers=numerics["workers"],
                progress=shooting.stream_progress(fh),
            )
        except shooting.DegreeLostError as exc:
            raise CliError(EXIT_NUMERIC, str(exc)) from exc
    write_json(out / "shoot_result.json", result.to_dict())
    write_manifest(out, params, numerics, "shoot",
                   ["shoot_result.json", "shoot_progress.ndjson"])
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    params, numerics = build_settings(args)
    out = _out_dir(args)
    grid = _run_grid(params, numerics, numerics["span"])
    psi = shooting.initial_data(numerics["d0"], numerics["d1"], params.s0, params, grid)
    state = solver.init_from_data(psi, params)
    numerics = {**numerics, "snapshot_every": max(1, numerics["snapshot_every"])}
    traj = solver.run(state, params.s0 + numerics["span"], params,
                      _solver_opts(numerics))
    try:
        series = verifier.theorem_bound(traj, params)
        central = verifier.central_value_report(traj, params)
    except verifier.TrajectoryExited as exc:
        raise CliError(EXIT_PRECONDITION, f"bound meaningless after exit: {exc}") from exc
    payload = {
        "theorem_bound": series.to_dict(),
        "central_value": central.to_dict(),
    }
    write_json(out / "verify_report.json", payload)
    artifacts = _trajectory_files(out, traj, params, numerics, "verify")
    write_manifest(out, params, numerics, "verify",
                   artifacts + ["verify_report.json"])
    return EXIT_OK


def cmd_kernel(args: argparse.Namespace) -> int:
    params, numerics = build_settings(args)
    out = _out_dir(args)
    spectral.cross_validate_quadrature()
    rows = []
    worst = 0.0
    for m in range(9):
        for theta in (0.1, 1.0, 3.0):
            dev = spectral.semigroup_eigen_check(m, theta)
            worst = max(worst, dev)
            rows.append((m, theta, dev))
    write_csv(out / "eigen_sweep.csv", ["m", "theta", "deviation"],
              [np.array([r[i] for r in rows]) for i in range(3)])

    probe = lambda y: spectral.hermite_value(3, y) + 6.0 * spectral.hermite_value(1, y)
    comp_gap = kernels.semigroup_composition_gap(0.4, 0.7, probe,
                                                 np.linspace(-10.0, 10.0, 401))

    theta = 1.0
    zero = kernels.feynman_kac_mc(params.s0 + theta, params.s0, 0.5, -0.3,
                                  numerics["paths"], numerics["tau_steps"], params,
                                  seed=numerics["seed"],
                                  potential_fn=lambda y, s: np.zeros_like(np.asarray(y, dtype=float)))
    mehler = float(kernels.mehler_kernel(theta, 0.5, -0.3))
    c = -0.4
    const = kernels.feynman_kac_mc(params.s0 + theta, params.s0, 0.5, -0.3,
                                   numerics["paths"], numerics["tau_steps"], params,
                                   seed=numerics["seed"],
                                   potential_fn=lambda y, s: np.full(np.shape(y), c))
    report = {
        "eigen_worst_deviation": worst,
        "eigen_pass": bool(worst <= 1e-7),
        "composition_gap": comp_gap,
        "composition_pass": bool(comp_gap <= 1e-6),
        "fk_zero_potential": zero.to_dict(),
        "fk_zero_exact": mehler,
        "fk_zero_pass": bool(abs(zero.value - mehler) <= 1e-12 * max(1.0, mehler)
                             and zero.stderr == 0.0),
        "fk_const_ratio": const.value / mehler,
        "fk_const_expected": math.exp(c * theta),
    }
    write_json(out / "kernel_report.json", report)
    write_manifest(out, params, numerics, "kernel",
                   ["eigen_sweep.csv", "kernel_report.json"])
    if not (report["eigen_pass"] and report["composition_pass"] and report["fk_zero_pass"]):
        raise CliError(EXIT_NUMERIC, "kernel smoke checks failed")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    params, numerics = build_settings(args)
    out = _out_dir(args)
    T = math.exp(-params.s0)
    t_end = 0.01 * T

    span = numerics["span"]
    ygrid = _run_grid(params, numerics, span)
    psi = shooting.initial_data(numerics["d0"], numerics["d1"], params.s0, params, ygrid)
    state = solver.init_from_data(psi, params)
    s_end = -math.log(T - t_end)
    sim_opts = _solver_opts(numerics, stop_on_exit=False)
    traj = solver.run(state, s_end, params, sim_opts)

    xgrid = Grid1D(ygrid.half_width * math.sqrt(T), ygrid.n)
    u0 = duhamel.u_from_w(state.w, params.s0, T, xgrid, params)
    try:
        pic = duhamel.picard_solve(u0, t_end, iterations=6, params=params)
    except duhamel.ContractionFailure as exc:
        raise CliError(EXIT_NUMERIC, str(exc)) from exc

    w_sim = traj.final.w
    compare = Grid1D(0.9 * ygrid.half_width, ygrid.n)
    w_pic = duhamel.w_from_u(pic.state.u, t_end, T, compare, params)
    sim_interp = duhamel.w_from_u(
        duhamel.u_from_w(w_sim, s_end, T, xgrid, params), t_end, T, compare, params)
    weight = 1.0 + np.abs(compare.y) ** params.beta
    num = float(np.max(weight * np.abs(w_pic.values - sim_interp.values)))
    den = float(np.max(weight * np.abs(sim_interp.values)))
    report = {
        "t_end": t_end,
        "relative_weighted_sup_error": num / den,
        "contraction_ratios": pic.ratios,
        "worst_ratio": pic.worst_ratio,
        "converged": pic.converged,
    }
    write_json(out / "oracle_report.json", report)
    write_manifest(out, params, numerics, "oracle", ["oracle_report.json"])
    if pic.ratios and pic.worst_ratio > 1.0:
        raise CliError(EXIT_NUMERIC, "Picard iteration failed to contract")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", default=None, help="key=value config file")
    sub.add_argument("--out", default="runs/latest", help="output directory")
    for key in DEFAULTS:
        sub.add_argument(f"--{key}", default=None)
    for key in NUMERIC_KEYS:
        sub.add_argument(f"--{key}", default=None)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="blowlab",
        description="numerical laboratory for self-similar blow-up with a "
                    "gradient-coupled nonlocal perturbation",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "simulate": cmd_simulate,
        "shoot": cmd_shoot,
        "verify": cmd_verify,
        "kernel": cmd_kernel,
        "oracle": cmd_oracle,
    }
    for name in handlers:
        _add_common(subs.add_parser(name))
    args = parser.parse_args(argv)
    try:
        return handlers[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except solver.BlowupOnGrid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
