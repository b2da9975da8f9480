"""Command-line front end: simulate, estimate, cross-section, validate.

Every command writes its artifacts into ``--out`` and finishes with a
``manifest.json`` listing the files, the effective configuration, and the
run metadata.  Numeric CSV fields carry 17 significant digits so a rerun
with the same seed is byte-identical.

Exit codes: 0 success, 1 validation-informational failure, 2 usage/config
error, 3 runtime failure.
"""

from __future__ import annotations

import csv
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from .error_models import ErrorFamily, ErrorModel, ErrorEnsemble, validate_ensemble
from .estimators import Bandwidths, Sample, fit, variance_bound_diagnostic
from .exceptions import ConfigError, EnsembleInvalid, HetdeconvError
from .kernels import QuadratureGrid
from .simulation import (
    DECONV,
    NAIVE,
    PARTIAL_LINEAR,
    Model,
    SimulationConfig,
    bandwidth_search,
    build_ensemble,
    cross_section,
    generate,
    replication_rng,
    run_replications,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

SEED_ENV_VAR = "HETDECONV_SEED"

ASE_REPORT_COLUMNS = (
    "model", "family", "n", "estimator", "h", "b",
    "mean_ase", "rep_count", "excluded_points",
)
PREDICTIONS_COLUMNS = ("x", "t", "r_hat", "f_hat", "flagged")
CROSS_SECTION_COLUMNS = ("coord", "estimate", "truth", "flagged")

_ESTIMATOR_CHOICES = {
    "deconv": DECONV,
    "naive": NAIVE,
    "partial-linear": PARTIAL_LINEAR,
}


def _fmt(value) -> str:
    """Fixed CSV field formatting: 17 significant digits for floats."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _write_manifest(out_dir: Path, command: str, config_echo, seed, outputs, started, extra=None) -> Path:
    manifest = {
        "schema_version": 1,
        "tool": {"name": "hetdeconv", "version": __version__},
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "duration_seconds": round(time.monotonic() - started, 6),
        "seed": seed,
        "config": config_echo,
        "outputs": {name: str(path) for name, path in outputs.items()},
        "conventions": {
            "eval_grid": "evenly spaced, inclusive endpoints",
            "csv_float_format": "%.17g",
            "csv_line_ending": "LF",
            "csv_columns": {
                "ase_report.csv": list(ASE_REPORT_COLUMNS),
                "predictions.csv": list(PREDICTIONS_COLUMNS),
                "cross_section.csv": list(CROSS_SECTION_COLUMNS),
            },
            "ase_report": (
                "one row per estimator; mean_ase is the mean over replications of "
                "the per-replication oracle-optimal ASE; h and b are the pair "
                "minimizing the replication-averaged ASE matrix; the "
                "partial_linear estimator has no h (empty field)"
            ),
            "flag_encoding": "1 = ridge-floored point, 0 = regular point",
        },
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _parse_override(spec: str) -> tuple[list[str], object]:
    if "=" not in spec:
        raise ConfigError(f"--set expects key=value, got {spec!r}")
    key, raw_value = spec.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"--set expects a nonempty key, got {spec!r}")
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    return key.split("."), value


def _apply_overrides(raw: dict, overrides) -> dict:
    for spec in overrides:
        path, value = _parse_override(spec)
        node = raw
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {spec!r}: {part!r} is not an object")
        node[path[-1]] = value
    return raw


def _load_config(config_path: str, overrides, full_scale: bool) -> SimulationConfig:
    try:
        with open(config_path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {config_path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON ({config_path} line {exc.lineno}): {exc.msg}") from exc
    raw = _apply_overrides(raw, overrides)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            raw["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}") from exc
    return SimulationConfig.from_dict(raw, full_scale=full_scale)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


@click.group()
@click.version_option(version=__version__, prog_name="hetdeconv")
def main():
    """Partial deconvolution kernel regression and its Monte Carlo study."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="JSON config file.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a config field (dotted paths allowed); repeatable.")
@click.option("--out", "out", default=".", type=click.Path(file_okay=False), show_default=True)
@click.option("--workers", default=lambda: os.cpu_count() or 1, type=int,
              help="Replication worker processes [default: machine cores].")
@click.option("--full-scale", is_flag=True, help="Fill omitted config fields with the full-scale protocol.")
def simulate(config_path, overrides, out, workers, full_scale):
    """Run the replication study and write ase_report.csv."""
    started = time.monotonic()
    try:
        config = _load_config(config_path, overrides, full_scale)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    try:
        report = run_replications(config, workers=workers)
    except Exception as exc:
        _fail(EXIT_RUNTIME, f"simulation failed: {exc}")

    failed = [
        (name, failure)
        for name, summary in report.estimators.items()
        for failure in summary.failures
    ]
    for name, (rep, message) in failed:
        click.echo(f"warning: {name} replication {rep} failed: {message}", err=True)
    if any(not report.estimators[name].rep_optima for name in report.estimators):
        bad = [n for n in report.estimators if not report.estimators[n].rep_optima]
        first_rep = min(r for n in bad for (r, _) in report.estimators[n].failures)
        _fail(EXIT_RUNTIME, f"no successful replication for {bad} (first failure at replication {first_rep})")

    out_dir = _out_dir(out)
    rows = report.summary_rows()
    report_path = out_dir / "ase_report.csv"
    _write_csv(report_path, ASE_REPORT_COLUMNS, rows)
    _write_manifest(
        out_dir, "simulate", config.to_dict(), config.seed,
        {"ase_report.csv": report_path}, started,
        extra={"workers": workers},
    )
    for row in rows:
        click.echo(
            f"{row['model']} {row['family']} n={row['n']} {row['estimator']}: "
            f"mean ASE {row['mean_ase']:.6g} over {row['rep_count']} replications"
        )
    sys.exit(EXIT_OK)


def _read_table(path: str, required: tuple[str, ...]) -> dict[str, list[str]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            fields = tuple(reader.fieldnames or ())
            missing = [c for c in required if c not in fields]
            if missing:
                raise ConfigError(f"{path}: missing columns {missing} (found {list(fields)})")
            rows = list(reader)
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return {c: [r[c] for r in rows] for c in required}


def _parse_grid_spec(spec: str, name: str) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"{name} must be start:stop:count, got {spec!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"{name} must be start:stop:count, got {spec!r}") from exc
    if count < 1 or not start <= stop:
        raise ConfigError(f"{name}: need start <= stop and count >= 1, got {spec!r}")
    return np.linspace(start, stop, count)


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(),
              help="CSV with columns x, w, y.")
@click.option("--errors", "errors_path", required=True, type=click.Path(),
              help="CSV with columns family, variance (one row per observation).")
@click.option("--h", "h", required=True, type=float, help="Bandwidth, exact direction.")
@click.option("--b", "b", required=True, type=float, help="Bandwidth, contaminated direction.")
@click.option("--x-grid", default="-2:2:20", show_default=True, metavar="START:STOP:COUNT")
@click.option("--t-grid", default="-2:2:20", show_default=True, metavar="START:STOP:COUNT")
@click.option("--quad-nodes", default=128, show_default=True, type=int)
@click.option("--out", "out", default=".", type=click.Path(file_okay=False), show_default=True)
def estimate(data_path, errors_path, h, b, x_grid, t_grid, quad_nodes, out):
    """Fit on a data file and write predictions.csv over the query grid."""
    started = time.monotonic()
    try:
        data_cols = _read_table(data_path, ("x", "w", "y"))
        error_cols = _read_table(errors_path, ("family", "variance"))
        n_data = len(data_cols["x"])
        n_err = len(error_cols["family"])
        if n_data != n_err:
            raise ConfigError(
                f"row count mismatch: {data_path} has {n_data} rows, "
                f"{errors_path} has {n_err}"
            )
        try:
            x = np.array([float(v) for v in data_cols["x"]])
            w = np.array([float(v) for v in data_cols["w"]])
            y = np.array([float(v) for v in data_cols["y"]])
        except ValueError as exc:
            raise ConfigError(f"{data_path}: non-numeric entry ({exc})") from exc
        models = []
        for i, (family, variance) in enumerate(zip(error_cols["family"], error_cols["variance"])):
            name = family.strip().lower()
            if name == "normal":
                name = "gaussian"
            try:
                models.append(ErrorModel(ErrorFamily(name), float(variance)))
            except ValueError as exc:
                raise ConfigError(f"{errors_path} row {i + 1}: {exc}") from exc
        if h <= 0 or b <= 0:
            raise ConfigError(f"bandwidths must be positive, got h={h}, b={b}")
        x_values = _parse_grid_spec(x_grid, "--x-grid")
        t_values = _parse_grid_spec(t_grid, "--t-grid")
        if quad_nodes < 16:
            raise ConfigError(f"--quad-nodes must be >= 16, got {quad_nodes}")
        sample = Sample(x=x, w=w, y=y, ensemble=ErrorEnsemble(tuple(models)))
    except (ConfigError, HetdeconvError, ValueError) as exc:
        _fail(EXIT_CONFIG, str(exc))

    try:
        quad = QuadratureGrid.gauss_legendre(quad_nodes)
        estimator = fit(sample, Bandwidths(h, b), quad)
        values, flags = estimator.predict_grid(x_values, t_values)
        density = estimator.density_grid(x_values, t_values)
    except EnsembleInvalid as exc:
        _fail(EXIT_RUNTIME, f"ensemble invalid: {exc}")
    except Exception as exc:
        _fail(EXIT_RUNTIME, str(exc))

    rows = [
        {"x": xv, "t": tv, "r_hat": values[i, j], "f_hat": density[i, j],
         "flagged": bool(flags[i, j])}
        for i, xv in enumerate(x_values)
        for j, tv in enumerate(t_values)
    ]
    out_dir = _out_dir(out)
    pred_path = out_dir / "predictions.csv"
    _write_csv(pred_path, PREDICTIONS_COLUMNS, rows)
    _write_manifest(
        out_dir, "estimate",
        {"data": str(data_path), "errors": str(errors_path), "h": h, "b": b,
         "x_grid": x_grid, "t_grid": t_grid, "quad_nodes": quad_nodes},
        None, {"predictions.csv": pred_path}, started,
    )
    click.echo(f"wrote {pred_path} ({len(rows)} points, {int(flags.sum())} flagged)")
    sys.exit(EXIT_OK)


@main.command("cross-section")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
@click.option("--axis", "axis", required=True, type=click.Choice(["x", "t"]),
              help="Which coordinate stays fixed.")
@click.option("--value", required=True, type=float, help="Fixed coordinate value.")
@click.option("--estimator", "estimator_name", default="deconv", show_default=True,
              type=click.Choice(sorted(_ESTIMATOR_CHOICES)))
@click.option("--out", "out", default=".", type=click.Path(file_okay=False), show_default=True)
@click.option("--full-scale", is_flag=True)
def cmd_cross_section(config_path, overrides, axis, value, estimator_name, out, full_scale):
    """Profile an estimator along one axis at oracle-optimal bandwidths."""
    started = time.monotonic()
    try:
        config = _load_config(config_path, overrides, full_scale)
        if not -2.0 <= value <= 2.0:
            raise ConfigError(f"--value must lie in [-2, 2], got {value}")
        estimator = _ESTIMATOR_CHOICES[estimator_name]
        if estimator == PARTIAL_LINEAR and config.model is not Model.MODEL2:
            raise ConfigError("partial-linear requires model2")
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))

    try:
        rng = replication_rng(config.seed, 1)
        ensemble = build_ensemble(config.error_family, config.n)
        data = generate(config.model, config.n, ensemble, rng)
        quad = QuadratureGrid.gauss_legendre(config.quad_nodes)
        search = bandwidth_search(
            data, config.bw_pairs, config.eval_x.values(), config.eval_t.values(),
            quad, estimator=estimator,
        )
        best_h, best_b = search.best_pair
        bw = Bandwidths(best_h if best_h is not None else best_b, best_b)
        section = cross_section(
            data, estimator, "fix_x" if axis == "x" else "fix_t", value, bw, quad
        )
    except Exception as exc:
        _fail(EXIT_RUNTIME, f"cross-section failed: {exc}")

    rows = [
        {"coord": c, "estimate": e, "truth": tr, "flagged": bool(f)}
        for c, e, tr, f in zip(section.coords, section.estimates, section.truth, section.flags)
    ]
    out_dir = _out_dir(out)
    section_path = out_dir / "cross_section.csv"
    _write_csv(section_path, CROSS_SECTION_COLUMNS, rows)
    _write_manifest(
        out_dir, "cross-section", config.to_dict(), config.seed,
        {"cross_section.csv": section_path}, started,
        extra={
            "axis": axis, "value": value, "estimator": estimator_name,
            "selected_bandwidths": {
                "h": best_h, "b": best_b, "ase": search.best_ase,
            },
        },
    )
    click.echo(
        f"wrote {section_path} (estimator={estimator_name}, "
        f"h={'-' if best_h is None else format(best_h, 'g')}, b={best_b:g})"
    )
    sys.exit(EXIT_OK)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
@click.option("--c-sup", default=1.0, show_default=True, type=float,
              help="Sup-norm constant for the variance bound diagnostic.")
@click.option("--full-scale", is_flag=True)
def validate(config_path, overrides, c_sup, full_scale):
    """Check ensemble validity and print the variance bound per bandwidth pair."""
    try:
        config = _load_config(config_path, overrides, full_scale)
        if c_sup <= 0:
            raise ConfigError(f"--c-sup must be positive, got {c_sup}")
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))

    ensemble = build_ensemble(config.error_family, config.n)
    quad = QuadratureGrid.gauss_legendre(config.quad_nodes)
    all_passed = True
    for h, b in config.bw_pairs:
        report = validate_ensemble(ensemble, b, quad.nodes / b)
        if report.passed:
            bound = variance_bound_diagnostic(ensemble, Bandwidths(h, b), quad, c_sup)
            click.echo(f"h={h:g} b={b:g}: {report.summary()}  variance_bound={bound:.6e}")
        else:
            all_passed = False
            click.echo(f"h={h:g} b={b:g}: {report.summary()}  variance_bound=degenerate")
    sys.exit(EXIT_OK if all_passed else EXIT_VALIDATION)


if __name__ == "__main__":
    main()
