"""Deterministic scenario replay: load, validate, run, and verify traces.

A scenario file is a self-contained JSON document::

    {
      "metadata": {"name": "cable-compat", "seed": 17},
      "engine":   {...optional EngineConfig overrides...},
      "mesh":     {"vertices": [[x, y, z], ...], "triangles": [[a, b, c], ...]},
      "camera":   {"pose": {...}, "intrinsics": {...}, "image_size": [w, h]},
      "kb":       {...mock-reasoner knowledge base...},
      "trace":    [event, event, ...]
    }

``detection_frame`` events in the trace may omit their ``frame``; the loader
fills in the scenario camera so a file carries the calibration exactly once.

Running a scenario replays the trace through a fresh :class:`Session` with the
mock reasoner and the inline executor, so two runs of the same file produce
byte-identical timelines. A timeline is a list of canonical-JSON lines: first
the initial snapshot, then one record per event carrying the event, the delta
it produced, any dialog messages, and a digest of the full state afterwards.
Verification replays the scenario and diffs the fresh timeline against a
golden file, naming the seq and field of the first divergence in each record.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import events
from .canonical import digest, dumps
from .config import EngineConfig, _overlay
from .deltas import fold
from .geometry import CameraFrame, GeometryError, SceneMesh
from .reasoner import MockReasoner, Reasoner, kb_key
from .schemas import SchemaError
from .session import ApplyResult, Session

__all__ = [
    "Scenario",
    "ScenarioError",
    "load_scenario",
    "run_scenario",
    "run_scenarios",
    "timeline_lines",
    "write_timeline",
    "verify_timeline",
    "verify_lines",
]


class ScenarioError(ValueError):
    """A scenario file failed validation; the message pinpoints the field."""


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    mesh: SceneMesh
    camera: CameraFrame
    camera_json: dict
    kb: dict
    engine: EngineConfig
    trace: tuple[events.InteractionEvent, ...]
    source: str = "<memory>"


@dataclass(frozen=True)
class TimelineRecord:
    seq: int
    event: dict
    applied: bool
    delta: dict
    messages: tuple[dict, ...]
    diagnostics: tuple[str, ...]
    hash: str

    def to_json(self) -> dict:
        return {
            "kind": "record",
            "seq": self.seq,
            "event": self.event,
            "applied": self.applied,
            "delta": self.delta,
            "messages": list(self.messages),
            "diagnostics": list(self.diagnostics),
            "hash": self.hash,
        }


@dataclass(frozen=True)
class Timeline:
    name: str
    seed: int
    snapshot: dict
    records: tuple[TimelineRecord, ...] = field(default_factory=tuple)

    @property
    def final_hash(self) -> str:
        return self.records[-1].hash if self.records else self.snapshot["hash"]


# -- loading -------------------------------------------------------------------


def _require(data: dict, key: str, kind: type, path: str):
    if key not in data:
        raise ScenarioError(f"{path}: missing required field {key!r}")
    value = data[key]
    if not isinstance(value, kind) or isinstance(value, bool) and kind is int:
        raise ScenarioError(f"{path}.{key}: expected {kind.__name__}")
    return value


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc


def scenario_from_json(data: dict, source: str = "<memory>") -> Scenario:
    """Validate a parsed scenario document; raises ScenarioError naming the
    offending field (``trace[3].direction: ...``)."""
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: scenario must be a JSON object")
    meta = _require(data, "metadata", dict, source)
    name = _require(meta, "name", str, f"{source}.metadata")
    seed = _require(meta, "seed", int, f"{source}.metadata")

    engine = EngineConfig()
    overrides = data.get("engine", {})
    if not isinstance(overrides, dict):
        raise ScenarioError(f"{source}.engine: expected object")
    try:
        engine = _overlay(EngineConfig, engine, overrides)
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"{source}.engine: {exc}") from exc

    try:
        mesh = SceneMesh.from_json(_require(data, "mesh", dict, source))
    except GeometryError as exc:
        raise ScenarioError(f"{source}.mesh: {exc}") from exc

    camera_json = _require(data, "camera", dict, source)
    try:
        camera = CameraFrame.from_json(camera_json)
    except (GeometryError, KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{source}.camera: {exc}") from exc

    kb = _require(data, "kb", dict, source)
    raw_trace = _require(data, "trace", list, source)

    trace: list[events.InteractionEvent] = []
    labels: set[str] = set()
    has_frames = False
    last_seq = None
    for i, raw in enumerate(raw_trace):
        where = f"{source}.trace[{i}]"
        if not isinstance(raw, dict):
            raise ScenarioError(f"{where}: expected object")
        if raw.get("kind") == "detection_frame" and "frame" not in raw:
            raw = dict(raw, frame=camera_json)
        try:
            event = events.parse_event(raw, path=where)
        except SchemaError as exc:
            raise ScenarioError(str(exc)) from exc
        if last_seq is not None and event.seq <= last_seq:
            raise ScenarioError(
                f"{where}.seq: {event.seq} does not increase over {last_seq}"
            )
        last_seq = event.seq
        if event.kind == "detection_frame":
            has_frames = True
            for det in event.get("detections"):
                label = det.get("label")
                if isinstance(label, str):
                    labels.add(label.strip().lower())
        trace.append(event)

    if has_frames:
        # only a replayable trace can ground its kb; a serve-mode scene gets
        # its detections live, so its labels cannot be checked at load time
        _check_kb_labels(kb, labels, source)
    return Scenario(
        name=name,
        seed=seed,
        mesh=mesh,
        camera=camera,
        camera_json=camera_json,
        kb=kb,
        engine=engine,
        trace=tuple(trace),
        source=source,
    )


def _check_kb_labels(kb: dict, detected: set[str], source: str) -> None:
    """Every label a knowledge-base entry or plan names must be detectable in
    the trace, so a typo fails at load time instead of as a silent kb miss."""
    for key in kb:
        if key.startswith("_"):
            continue
        for label in key.split("|"):
            if label not in detected:
                raise ScenarioError(
                    f"{source}.kb[{key!r}]: label {label!r} never appears in "
                    f"the trace detections"
                )
    plans = kb.get("_plans", {})
    if not isinstance(plans, dict):
        raise ScenarioError(f"{source}.kb._plans: expected object")
    for utterance, plan in plans.items():
        objects = plan.get("objects", []) if isinstance(plan, dict) else []
        for obj in objects:
            if isinstance(obj, str) and obj.strip().lower() not in detected and obj != "user":
                raise ScenarioError(
                    f"{source}.kb._plans[{utterance!r}]: object {obj!r} never "
                    f"appears in the trace detections"
                )


def load_scenario(path: str) -> Scenario:
    return scenario_from_json(_load_json(path), source=path)


# -- running -------------------------------------------------------------------


def session_for(scenario: Scenario, reasoner: Reasoner | None = None,
                executor=None) -> Session:
    return Session(
        scenario.mesh,
        reasoner if reasoner is not None else MockReasoner(scenario.kb),
        executor=executor,
        config=scenario.engine,
        camera=scenario.camera,
    )


def _record(result: ApplyResult, event: events.InteractionEvent, state: dict) -> TimelineRecord:
    return TimelineRecord(
        seq=result.seq,
        event=event.to_json(),
        applied=result.applied,
        delta=result.delta,
        messages=tuple(note.to_json() for note in result.notes),
        diagnostics=tuple(result.diagnostics),
        hash=digest(state),
    )


def run_scenario(scenario: Scenario, reasoner: Reasoner | None = None,
                 executor=None) -> Timeline:
    """Replay the trace through a fresh session; deterministic with the
    defaults (mock reasoner, inline executor)."""
    session = session_for(scenario, reasoner, executor)
    try:
        snapshot = session.state()
        records = []
        for event in scenario.trace:
            result = session.apply(event)
            records.append(_record(result, event, session.state()))
        return Timeline(
            name=scenario.name,
            seed=scenario.seed,
            snapshot={"kind": "snapshot", "name": scenario.name,
                      "seed": scenario.seed, "state": snapshot,
                      "hash": digest(snapshot)},
            records=tuple(records),
        )
    finally:
        session.close()


def run_scenarios(paths, parallel: bool = False) -> list[Timeline]:
    """Run independent scenario files, optionally concurrently; results come
    back in input order either way."""
    scenarios = [load_scenario(p) for p in paths]
    if not parallel or len(scenarios) < 2:
        return [run_scenario(s) for s in scenarios]
    with ThreadPoolExecutor(max_workers=min(8, len(scenarios))) as pool:
        return list(pool.map(run_scenario, scenarios))


# -- serialization + verification ------------------------------------------------


def timeline_lines(timeline: Timeline) -> list[str]:
    lines = [dumps(timeline.snapshot)]
    lines.extend(dumps(record.to_json()) for record in timeline.records)
    return lines


def write_timeline(path: str, timeline: Timeline) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in timeline_lines(timeline):
            fh.write(line + "\n")


def _diff_json(got, want, path: str, out: list[str], limit: int) -> None:
    if len(out) >= limit:
        return
    if type(got) is not type(want):
        out.append(f"{path}: run has {got!r}, golden has {want!r}")
        return
    if isinstance(got, dict):
        for key in sorted(set(got) | set(want)):
            if key not in got:
                out.append(f"{path}.{key}: missing from run, golden has {want[key]!r}")
            elif key not in want:
                out.append(f"{path}.{key}: run has {got[key]!r}, missing from golden")
            else:
                _diff_json(got[key], want[key], f"{path}.{key}", out, limit)
            if len(out) >= limit:
                return
    elif isinstance(got, list):
        if len(got) != len(want):
            out.append(f"{path}: run has {len(got)} entries, golden has {len(want)}")
            return
        for i, (g, w) in enumerate(zip(got, want)):
            _diff_json(g, w, f"{path}[{i}]", out, limit)
            if len(out) >= limit:
                return
    elif got != want:
        out.append(f"{path}: run has {got!r}, golden has {want!r}")


def verify_lines(fresh: list[str], golden: list[str], limit: int = 20) -> list[str]:
    """Structural diff of two timelines; [] means they match. Each entry names
    the seq (or the snapshot) and the field path that diverged."""
    diffs: list[str] = []
    if len(fresh) != len(golden):
        diffs.append(f"timeline length: run has {len(fresh)} lines, golden has {len(golden)}")
    for i, (f_line, g_line) in enumerate(zip(fresh, golden)):
        if f_line == g_line:
            continue
        got = json.loads(f_line)
        try:
            want = json.loads(g_line)
        except json.JSONDecodeError as exc:
            diffs.append(f"golden line {i + 1}: invalid JSON: {exc.msg}")
            continue
        label = "snapshot" if i == 0 else f"seq {got.get('seq', want.get('seq', '?'))}"
        _diff_json(got, want, label, diffs, limit)
        if len(diffs) >= limit:
            break
    return diffs[:limit]


def verify_timeline(scenario: Scenario, golden_path: str, limit: int = 20) -> list[str]:
    """Re-run the scenario and compare against a golden timeline file."""
    with open(golden_path, "r", encoding="utf-8") as fh:
        golden = fh.read().splitlines()
    fresh = timeline_lines(run_scenario(scenario))
    return verify_lines(fresh, golden, limit)


def committed_relations(timeline: Timeline, relation: str) -> set[str]:
    """Knowledge-base keys (sorted label pairs) of edges of one relation type
    present in the final state — the oracle hook for scripted scenarios."""
    if not timeline.records:
        return set()
    state = timeline.snapshot["state"]
    for record in timeline.records:
        state = fold(state, record.delta)
    nodes = state["nodes"]
    keys = set()
    for edge in state["edges"].values():
        if edge["relation"] != relation:
            continue
        labels = [nodes[nid]["label"] for nid in edge["endpoints"] if nid in nodes]
        keys.add(kb_key(labels))
    return keys
