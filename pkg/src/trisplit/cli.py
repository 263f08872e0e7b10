"""Command-line front end: ``trisplit run | tune | verify``.

Exit codes: 0 converged (``run``) or checks passed (``verify``), 1
configuration or input error, 2 iteration budget exhausted, 3 assumption
violation (inadmissible parameters, rank-deficient operator, failed
verification), 4 numerical divergence.
"""

from __future__ import annotations

import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from .bench import make_instance
from .config import RunConfig, load_config
from .diagnostics import diagnose
from .errors import (AssumptionViolation, ConfigError, NotSurjective, NumericalDivergence,
                     TooShort)
from .solver import IterationTrace, run
from .tuning import DerivedConstants, SolverParams, derive_constants, select_parameters, validate

__all__ = ["main", "EXIT_OK", "EXIT_CONFIG", "EXIT_MAX_ITER", "EXIT_ASSUMPTION", "EXIT_DIVERGED"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_MAX_ITER = 2
EXIT_ASSUMPTION = 3
EXIT_DIVERGED = 4

ENV_OUT = "TRISPLIT_OUT"


def _json_safe(obj):
    """Replace non-finite floats by ``None`` so output is strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _dumps(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, allow_nan=False) + "\n"


def _build_problem(config: RunConfig, seed=None):
    spec = config.problem
    seed = seed if seed is not None else spec.get("seed")
    try:
        return make_instance(spec["name"], seed=seed, **spec.get("params", {}))
    except ConfigError as exc:
        raise ConfigError(f"{config.source}: {exc}") from None
    except (ValueError, OSError) as exc:
        raise ConfigError(f"{config.source}: problem {spec['name']!r}: {exc}") from None


def _parameters(config: RunConfig, problem):
    spectrum = problem.a.require_surjective()
    params = config.params or select_parameters(spectrum, problem.lipschitz_L, config.safety)
    constants = derive_constants(spectrum, problem.lipschitz_L, params,
                                 psi_lower_bound_hint=problem.psi_lower_hint())
    report = validate(params, constants, spectrum)
    return spectrum, params, constants, report


def _tuning_payload(problem, spectrum, params, constants, report):
    return {
        "problem": problem.descriptor,
        "dims": dict(zip(("m", "q", "p"), problem.dims)),
        "spectrum": spectrum._asdict(),
        "lipschitz_L": problem.lipschitz_L,
        "params": params.to_dict(),
        "constants": constants.to_dict(),
        "admissibility": report.to_dict(),
    }


def _resolve_out(config: RunConfig, out, multi: bool) -> Path:
    base = out or config.output_dir or os.environ.get(ENV_OUT)
    if not base:
        raise ConfigError(f"{config.source}:1: no output directory: pass --out, set output_dir "
                          f"or the {ENV_OUT} environment variable")
    base = Path(base)
    return base / Path(config.source).stem if multi else base


def _write_trace(trace: IterationTrace, out_dir: Path, formats):
    if "csv" in formats:
        (out_dir / "trace.csv").write_text(trace.to_csv())
    if "json" in formats:
        (out_dir / "trace.json").write_text(trace.to_json())


def _run_one(path, out, strict, seed, multi):
    """Run one config; returns ``(exit_code, message)``."""
    try:
        config = load_config(path)
        out_dir = _resolve_out(config, out, multi)
        problem = _build_problem(config, seed)
    except ConfigError as exc:
        return EXIT_CONFIG, f"error: {exc}"
    strict = config.strict_mode if strict is None else strict
    try:
        spectrum, params, constants, report = _parameters(config, problem)
    except NotSurjective as exc:
        return EXIT_ASSUMPTION, f"error: {config.source}: {exc}"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return EXIT_CONFIG, f"error: {config.source}:1: output_dir {out_dir} is not writable: {exc}"
    (out_dir / "constants.json").write_text(
        _dumps(_tuning_payload(problem, spectrum, params, constants, report)))

    try:
        trace = run(problem, params, config.stopping, strict=strict, constants=constants)
        code = EXIT_OK if trace.converged else EXIT_MAX_ITER
        note = f"{config.source}: {trace.status} after {len(trace)} iterations"
    except AssumptionViolation as exc:
        trace, code = exc.trace, EXIT_ASSUMPTION
        note = f"{config.source}: assumption violation: {exc}"
    except NumericalDivergence as exc:
        trace, code = exc.trace, EXIT_DIVERGED
        note = f"{config.source}: diverged: {exc}"

    summary = ""
    if trace is not None and trace.records:
        _write_trace(trace, out_dir, config.formats)
        try:
            diag = diagnose(trace, constants)
        except TooShort as exc:
            payload = {"status": trace.status, "error": str(exc)}
        else:
            payload = dict(diag.to_dict(), status=trace.status)
            summary = diag.summary()
        (out_dir / "diagnostics.json").write_text(_dumps(payload))
    message = note + (("\n" + summary) if summary else "")
    return code, message


@click.group()
@click.version_option(package_name="trisplit")
def main():
    """Full-splitting solver for min F(Ax) + G(y) + H(x, y)."""


@main.command("run")
@click.option("--config", "configs", multiple=True, required=True, type=click.Path(),
              help="Run configuration (TOML). Repeat to run several.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Output directory; overrides output_dir and $TRISPLIT_OUT.")
@click.option("--strict/--permissive", default=None,
              help="Refuse or merely report inadmissible parameters (default: config).")
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True,
              help="Worker threads when several configs are given.")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
              help="Override the instance seed.")
def run_command(configs, out, strict, jobs, seed):
    """Run the solver and write traces, constants and diagnostics."""
    multi = len(configs) > 1

    def task(path):
        return _run_one(path, out, strict, seed, multi)

    if jobs > 1 and multi:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(task, configs))
    else:
        results = [task(p) for p in configs]
    for code, message in results:
        click.echo(message, err=code == EXIT_CONFIG)
    sys.exit(max(code for code, _ in results))


@main.command("tune")
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="Run configuration (TOML).")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
              help="Override the instance seed.")
def tune_command(config_path, seed):
    """Print parameters, derived constants and the admissibility report as JSON."""
    try:
        config = load_config(config_path)
        problem = _build_problem(config, seed)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        spectrum, params, constants, report = _parameters(config, problem)
    except NotSurjective as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ASSUMPTION)
    click.echo(_dumps(_tuning_payload(problem, spectrum, params, constants, report)), nl=False)
    sys.exit(EXIT_OK)


def _load_trace(path: Path) -> IterationTrace:
    text = path.read_text()
    if path.suffix == ".json":
        return IterationTrace.from_json(text)
    return IterationTrace.from_csv(text)


def _load_constants(path: Path):
    data = json.loads(path.read_text())
    if not isinstance(data, dict) or not isinstance(data.get("constants"), dict):
        raise ValueError("constants file must hold a 'constants' table")
    table = data["constants"]
    needed = {"c2", "c3", "c4", "c5", "c6", "c7"}
    missing = needed - {k for k, v in table.items() if isinstance(v, (int, float))}
    if missing:
        raise ValueError(f"constants file lacks numeric {sorted(missing)}")
    try:
        constants = DerivedConstants.from_dict(table)
    except TypeError as exc:
        raise ValueError(f"constants table does not match the schema: {exc}") from None
    params = SolverParams(**data["params"]) if isinstance(data.get("params"), dict) else None
    return constants, params


@main.command("verify")
@click.option("--trace", "trace_path", required=True, type=click.Path(),
              help="Stored trace (.csv or .json).")
@click.option("--constants", "constants_path", required=True, type=click.Path(),
              help="constants.json written by 'run'.")
@click.option("--json", "as_json", is_flag=True, help="Print the report as JSON.")
def verify_command(trace_path, constants_path, as_json):
    """Re-run the trace diagnostics; exit 0 iff descent and subgradient checks pass."""
    try:
        trace = _load_trace(Path(trace_path))
        constants, params = _load_constants(Path(constants_path))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        click.echo(f"error: schema mismatch: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if trace.params is None:
        trace.params = params
    try:
        report = diagnose(trace, constants)
    except TooShort as exc:
        click.echo(f"error: TooShort: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(_dumps(report.to_dict()) if as_json else report.summary())
    sys.exit(EXIT_OK if report.passed else EXIT_ASSUMPTION)


if __name__ == "__main__":  # pragma: no cover
    main()
