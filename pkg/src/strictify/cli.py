"""Command line entry point: verify, dump and gen."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import harness


def _load(path: str | None) -> tuple[harness.Scenario, bytes]:
    if path is None:
        return harness.Scenario(), b""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise harness.ConfigError(f"cannot read scenario {path}: {exc.strerror}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise harness.ConfigError(f"scenario {path} is not UTF-8") from None
    return harness.parse_scenario(text), raw


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise harness.ConfigError(f"cannot write {path}: {exc.strerror}") from None


def _config_error(exc: harness.ConfigError) -> None:
    click.echo(f"configuration error: {exc}", err=True)
    sys.exit(harness.EXIT_CONFIG)


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Exact checks of the strictified relative Cauchy evolution."""


@main.command()
@click.option("--scenario", "scenario_path", type=str, default=None, help="Scenario JSON file.")
@click.option("--report", "report_path", type=str, required=True, help="Where to write the report JSON.")
@click.option("--only", type=str, default=None, help="Comma-separated checks or groups to run.")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--jobs", type=int, default=None,
              help=f"Worker processes (default from {harness.JOBS_ENV}, else 1).")
def verify(scenario_path, report_path, only, seed, jobs):
    """Run the selected checks; exit 0 if all pass, 1 if one fails, 2 on bad configuration."""
    try:
        scenario, raw = _load(scenario_path)
        if seed is not None:
            scenario = scenario.with_seed(seed)
        selection = None if only is None else [x.strip() for x in only.split(",") if x.strip()]
        if jobs is not None and jobs < 1:
            raise harness.ConfigError("--jobs must be at least 1")
        harness.select_checks(scenario, selection)
        report = harness.run(scenario, raw, selection, jobs)
        _write(report_path, harness.report_text(report))
    except harness.ConfigError as exc:
        _config_error(exc)
    for check in report["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        line = f"{status}  {check['name']}"
        if check["witness"]:
            line += f"  ({check['witness']})"
        click.echo(line)
    click.echo(f"verdict: {report['verdict']}")
    sys.exit(harness.exit_code(report))


@main.command()
@click.option("--id", "artifact", type=str, required=True,
              help=f"One of: {', '.join(harness.ARTIFACTS)}.")
@click.option("--out", "out_path", type=str, required=True)
@click.option("--scenario", "scenario_path", type=str, default=None)
@click.option("--seed", type=int, default=None)
def dump(artifact, out_path, scenario_path, seed):
    """Write one artifact (matrices, complexes, tau_L) in the documented text formats."""
    try:
        scenario, _ = _load(scenario_path)
        if seed is not None:
            scenario = scenario.with_seed(seed)
        _write(out_path, harness.dump_artifact(artifact, scenario))
    except harness.ConfigError as exc:
        _config_error(exc)


@main.command()
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=str, required=True)
def gen(seed, out_path):
    """Write a seeded random Poisson diagram."""
    try:
        _write(out_path, harness.generated_diagram(seed))
    except harness.ConfigError as exc:
        _config_error(exc)


if __name__ == "__main__":
    main()
