"""Command-line entry points.

Batch subcommands (run without --serve, validate, translate, metrics) stay
fully in-process so identical inputs always yield identical outputs; --serve
additionally exposes the control API over HTTP while the run progresses.
"""

from __future__ import annotations

import dataclasses
import json
import sys

import click

from .engine import Engine, log_to_jsonl
from .gateway import CodecRegistry, TranslateError, UnknownCodec, Unrepresentable
from .metrics import metrics_from_file
from .scenario import ScenarioError, load_scenario_file


@click.group()
def main():
    """Deterministic testbed for edge systems on degraded networks."""


@main.command()
@click.argument("scenario_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--duration", type=int, default=None, help="Override duration (ms).")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the event log as JSON lines.")
@click.option("--serve", default=None, metavar="HOST:PORT",
              help="Expose the control API while running.")
@click.option("--pace", type=click.Choice(["REAL", "FAST"]), default="FAST",
              help="Wall-clock pacing when serving.")
def run(scenario_path, seed, duration, out, serve, pace):
    """Execute SCENARIO_PATH and report what happened."""
    try:
        scenario = load_scenario_file(scenario_path)
    except ScenarioError as exc:
        raise click.ClickException(str(exc))
    if seed is not None:
        scenario = dataclasses.replace(scenario, seed=seed)
    if duration is not None:
        scenario = dataclasses.replace(scenario, duration_ms=duration)

    if serve:
        _run_served(scenario, serve, pace, out)
        return

    engine = Engine(scenario)
    log = engine.run()
    if out:
        with open(out, "w") as fh:
            fh.write(log_to_jsonl(log))
        click.echo(f"wrote {len(log)} events to {out}")
    else:
        click.echo(log_to_jsonl(log), nl=False)


def _run_served(scenario, serve, pace, out):
    import uvicorn

    from .api import Controller, create_app

    host, _, port = serve.rpartition(":")
    if not host or not port.isdigit():
        raise click.ClickException(f"--serve expects HOST:PORT, got {serve!r}")
    controller = Controller(scenario, pace=pace)
    app = create_app(controller)
    controller.start()
    try:
        uvicorn.run(app, host=host, port=int(port), log_level="warning")
    finally:
        controller.stop()
        if out:
            with open(out, "w") as fh:
                fh.write(controller.log_jsonl())
            click.echo(f"wrote {len(controller.engine.log)} events to {out}")


@main.command()
@click.argument("scenario_path", type=click.Path(exists=True, dir_okay=False))
def validate(scenario_path):
    """Check SCENARIO_PATH without running it."""
    try:
        scenario = load_scenario_file(scenario_path)
    except ScenarioError as exc:
        click.echo(f"invalid: {exc}", err=True)
        sys.exit(1)
    click.echo(f"ok: {len(scenario.nodes)} nodes, {len(scenario.links)} links, "
               f"{len(scenario.pipelines)} pipelines, "
               f"{len(scenario.events)} events, {scenario.duration_ms} ms")


@main.command()
@click.option("--from", "from_codec", required=True, help="Input codec id.")
@click.option("--to", "to_codec", required=True, help="Output codec id.")
def translate(from_codec, to_codec):
    """Translate a message stream from stdin to stdout."""
    data = sys.stdin.buffer.read()
    reg = CodecRegistry()
    try:
        out, stats = reg.translate_with_stats(data, from_codec, to_codec)
    except UnknownCodec as exc:
        raise click.ClickException(f"unknown codec: {exc}")
    except Unrepresentable as exc:
        raise click.ClickException(f"unrepresentable in {to_codec}: {exc}")
    except TranslateError as exc:
        raise click.ClickException(f"malformed input at byte {exc.position}: {exc}")
    sys.stdout.buffer.write(out)
    sys.stdout.buffer.flush()
    click.echo(
        f"{stats['messages']} messages, {stats['bytes_in']} -> {stats['bytes_out']} bytes, "
        f"{stats['msgs_per_second']:.0f} msgs/s", err=True)


@main.command()
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
def metrics(log_path):
    """Summarize an event log produced by `run --out`."""
    try:
        summary = metrics_from_file(log_path)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
