"""Command line entry points: replay scenarios, verify goldens, serve sessions.

Exit codes: 0 success, 1 verification mismatch, 2 bad input (unloadable
scenario, missing reasoner URL, broken config).
"""

from __future__ import annotations

import dataclasses
import logging
import sys
from pathlib import Path

import click
import uvicorn

from .config import load_config
from .reasoner import HttpReasoner
from .replay import (
    ScenarioError,
    load_scenario,
    run_scenario,
    run_scenarios,
    timeline_lines,
    verify_timeline,
)
from .server import default_session_factory, make_app

_LOG_LEVELS = ["debug", "info", "warning", "error"]


def _fail(message: str, code: int = 2) -> None:
    click.echo(message, err=True)
    sys.exit(code)


def _load(path: str):
    try:
        return load_scenario(path)
    except ScenarioError as exc:
        _fail(str(exc))


reasoner_option = click.option(
    "--reasoner", type=click.Choice(["mock", "http"]), default="mock",
    show_default=True, help="answer relation queries from the scenario kb or a live endpoint",
)
reasoner_url_option = click.option(
    "--reasoner-url", envvar="SCENELINK_REASONER_URL", default=None,
    help="base URL for --reasoner http (env: SCENELINK_REASONER_URL)",
)


@click.group()
@click.option("--log-level", type=click.Choice(_LOG_LEVELS), default="warning",
              show_default=True)
def main(log_level: str) -> None:
    """Scene-anchored semantic graph runtime."""
    logging.basicConfig(level=getattr(logging, log_level.upper()))


@main.command()
@click.argument("scenarios", nargs=-1, required=True)
@click.option("--golden", "golden_path", default=None,
              help="write the timeline here instead of stdout "
                   "(a directory when several scenarios are given)")
@click.option("--parallel-scenarios", is_flag=True,
              help="run independent scenario files concurrently")
@reasoner_option
@reasoner_url_option
def run(scenarios, golden_path, parallel_scenarios, reasoner, reasoner_url):
    """Replay SCENARIOS deterministically; print or save their timelines."""
    loaded = [_load(p) for p in scenarios]
    if reasoner == "http":
        if not reasoner_url:
            _fail("--reasoner http needs --reasoner-url (or SCENELINK_REASONER_URL)")
        timelines = [run_scenario(s, reasoner=HttpReasoner(reasoner_url)) for s in loaded]
    else:
        try:
            timelines = run_scenarios(list(scenarios), parallel=parallel_scenarios)
        except ScenarioError as exc:  # pragma: no cover - caught by _load above
            _fail(str(exc))

    if golden_path is None:
        for timeline in timelines:
            for line in timeline_lines(timeline):
                click.echo(line)
        return

    if len(timelines) == 1:
        targets = [Path(golden_path)]
        targets[0].parent.mkdir(parents=True, exist_ok=True)
    else:
        directory = Path(golden_path)
        directory.mkdir(parents=True, exist_ok=True)
        targets = [directory / f"{t.name}.jsonl" for t in timelines]
    for timeline, target in zip(timelines, targets):
        lines = timeline_lines(timeline)
        target.write_text("\n".join(lines) + "\n", encoding="utf-8")
        click.echo(f"{timeline.name}: {len(timeline.records)} events -> {target}")


@main.command()
@click.argument("scenario")
@click.argument("golden")
def verify(scenario, golden):
    """Re-run SCENARIO and compare its timeline against the GOLDEN file."""
    loaded = _load(scenario)
    try:
        diffs = verify_timeline(loaded, golden)
    except OSError as exc:
        _fail(str(exc))
    if diffs:
        for diff in diffs:
            click.echo(diff, err=True)
        _fail(f"{loaded.name}: timeline diverges from {golden}", code=1)
    click.echo(f"{loaded.name}: matches {golden}")


@main.command()
@click.option("--config", "config_path", default=None,
              help="JSON config file ({'engine': ..., 'server': ...})")
@click.option("--scene", "scene_path", default=None,
              help="scenario file supplying the mesh, camera, and kb")
@click.option("--host", default=None, help="override the configured bind host")
@click.option("--port", type=int, default=None, help="override the configured port")
@reasoner_option
@reasoner_url_option
def serve(config_path, scene_path, host, port, reasoner, reasoner_url):
    """Run the session service (REST + WebSocket stream)."""
    try:
        engine, server = load_config(config_path)
    except (OSError, ValueError) as exc:
        _fail(str(exc))
    scene = None
    effective_scene = scene_path or server.scene_path
    if effective_scene:
        scene = _load(effective_scene)
        if config_path is None:
            engine = scene.engine
    overrides = {}
    if host is not None:
        overrides["host"] = host
    if port is not None:
        overrides["port"] = port
    if overrides:
        server = dataclasses.replace(server, **overrides)
    if reasoner == "http" and not reasoner_url:
        _fail("--reasoner http needs --reasoner-url (or SCENELINK_REASONER_URL)")

    factory = default_session_factory(
        engine, scene, reasoner_url if reasoner == "http" else None
    )
    app = make_app(engine, server, scene=scene, session_factory=factory)
    uvicorn.run(app, host=server.host, port=server.port, log_level="info")


if __name__ == "__main__":  # pragma: no cover
    main()
