"""Admin CLI. Machine-readable JSON on stdout, logs on stderr.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .config import PlatformConfig, SyntheticParams, load_config
from .platform import NotTrained, Platform, TrainingInProgress, UnknownToken
from .privacy import CollisionDetected, EmptyFile, IngestFormat, UnsupportedFormat
from .synthetic import SyntheticDatasetSpec, generate_synthetic

log = logging.getLogger("schoolpulse.cli")

EXIT_VALIDATION = 1
EXIT_IO = 2


def _emit(payload) -> None:
    click.echo(json.dumps(payload, sort_keys=True))


def _load_platform(config_path) -> Platform:
    try:
        cfg = load_config(Path(config_path) if config_path else None)
        return Platform(cfg)
    except FileNotFoundError as exc:
        log.error("config not readable: %s", exc)
        sys.exit(EXIT_IO)
    except ValueError as exc:
        log.error("invalid config: %s", exc)
        sys.exit(EXIT_VALIDATION)


@click.group()
def main() -> None:
    """Privacy-preserving K-12 analytics platform."""
    # Bound per invocation so redirected stderr (tests, pipes) is honored.
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s", force=True)


@main.command("gen-data")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=Path("./synthetic"),
              show_default=True)
@click.option("--schools", type=int, default=4, show_default=True)
@click.option("--students", type=int, default=125, show_default=True)
def gen_data(seed: int, out_dir: Path, schools: int, students: int) -> None:
    """Generate the synthetic ingest files (one CSV per school)."""
    spec = SyntheticDatasetSpec(schools=schools, students_per_school=students, seed=seed)
    try:
        paths = generate_synthetic(spec, out_dir)
    except OSError as exc:
        log.error("cannot write dataset: %s", exc)
        sys.exit(EXIT_IO)
    _emit({"files": [str(p) for p in paths], "seed": seed})


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--school", required=True)
@click.option("--file", "file_path", type=click.Path(path_type=Path), required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv",
              show_default=True)
def ingest(config_path, school: str, file_path: Path, fmt: str) -> None:
    """Parse, de-identify, and store one school's export file."""
    platform = _load_platform(config_path)
    try:
        content = file_path.read_bytes()
    except OSError as exc:
        log.error("cannot read %s: %s", file_path, exc)
        sys.exit(EXIT_IO)
    try:
        result = platform.ingest(content, school, IngestFormat(fmt))
    except (EmptyFile, UnsupportedFormat, CollisionDetected) as exc:
        log.error("ingest rejected: %s", exc)
        sys.exit(EXIT_VALIDATION)
    if result["rejects"]:
        log.warning("%d rows rejected", len(result["rejects"]))
    _emit(result)


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--kind", type=click.Choice(["inschool", "exam", "behavior", "all"]),
              default="all", show_default=True)
def train(config_path, kind: str) -> None:
    """Fit prediction models on the ingested records."""
    platform = _load_platform(config_path)
    kinds = ["inschool", "exam", "behavior"] if kind == "all" else [kind]
    results = []
    for k in kinds:
        try:
            results.append(platform.train(k))
        except (NotTrained, TrainingInProgress) as exc:
            log.error("train %s failed: %s", k, exc)
            sys.exit(EXIT_VALIDATION)
    _emit({"trained": results})


@main.command("fed-run")
@click.option("--config", "config_path", type=click.Path(), default=None)
def fed_run(config_path) -> None:
    """Run the cross-school federated recommender simulation."""
    platform = _load_platform(config_path)
    try:
        result = platform.run_federation_sim()
    except (NotTrained, TrainingInProgress) as exc:
        log.error("federation failed: %s", exc)
        sys.exit(EXIT_VALIDATION)
    _emit(result)


@main.command("export-alerts")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--school", default=None, help="restrict to one school")
@click.option("--format", "fmt", type=click.Choice(["jsonl"]), default="jsonl", show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None,
              help="write to a file instead of stdout")
def export_alerts(config_path, school, fmt: str, out_path) -> None:
    """Write the alert feed in its wire format (JSONL, one alert per line)."""
    platform = _load_platform(config_path)
    feed = platform.alert_feed(school)
    data = feed.to_jsonl()
    if out_path is None:
        sys.stdout.write(data.decode("utf-8"))
    else:
        try:
            Path(out_path).write_bytes(data)
        except OSError as exc:
            log.error("cannot write %s: %s", out_path, exc)
            sys.exit(EXIT_IO)
        _emit({"alerts": len(feed.alerts), "file": str(out_path),
               "warnings": feed.warnings})


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=Path("./report"),
              show_default=True)
def report(config_path, out_dir: Path) -> None:
    """Render the analytics report: figures plus the delimited payloads."""
    from .report import render_report

    platform = _load_platform(config_path)
    try:
        written = render_report(platform, out_dir)
    except OSError as exc:
        log.error("cannot write report: %s", exc)
        sys.exit(EXIT_IO)
    _emit({"written": [str(p) for p in written]})


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(config_path, host, port) -> None:
    """Start the HTTP API."""
    import uvicorn

    from .service import create_app

    platform = _load_platform(config_path)
    app = create_app(platform)
    uvicorn.run(app, host=host or platform.config.host, port=port or platform.config.port,
                log_level="info")


if __name__ == "__main__":
    main()
