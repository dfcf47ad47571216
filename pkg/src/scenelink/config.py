"""Engine and server tunables.

All numeric policy values the runtime needs in one place: proximity band,
context weights, edge TTLs, inference retry/timeout budgets, and server
limits. The defaults are the documented operating point; scenario files
and config files may override them.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class EngineConfig:
    # node registration
    reid_radius_m: float = 0.15          # same-label re-identification distance
    extent_min_m: float = 0.01
    extent_max_m: float = 2.0

    # context window
    band_radius_m: float = 1.5
    recency_window_s: float = 30.0
    weight_selected: float = 1.0
    weight_held: float = 1.0
    weight_mentioned: float = 0.9
    weight_proximate: float = 0.7
    weight_recent_base: float = 0.5      # scaled by exp(-dt / recency_window_s)
    weight_cutoff: float = 0.05

    # edge lifecycle
    tentative_ttl_s: float = 10.0
    epoch_grace: int = 1
    proposal_ttl_s: float = 10.0

    # inference
    ambiguity_margin: float = 0.15       # top-2 confidence gap below which we ask
    held_pair_confidence: float = 0.95
    reasoner_timeout_s: float = 8.0
    max_retries: int = 2                 # after the initial attempt
    max_inflight: int = 4

    # interaction
    target_snap_radius_m: float = 0.3    # pixel-target to node resolution
    sweep_cone_half_angle_deg: float = 30.0

    # protocol
    include_window_in_deltas: bool = False


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8741
    max_sessions: int = 32
    subscriber_buffer: int = 256         # queued messages before a slow consumer is dropped
    tick_interval_s: float = 0.0         # 0 disables the server-side decay tick
    scene_path: str | None = None        # scenario file supplying mesh/camera/kb


_ENV_PREFIX = "SCENELINK_"


def _coerce(current: Any, raw: str) -> Any:
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def _overlay(cls, base, values: dict[str, Any]):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return dataclasses.replace(base, **values)


def load_config(path: str | None = None,
                env: dict[str, str] | None = None) -> tuple[EngineConfig, ServerConfig]:
    """Load configs from an optional JSON file plus SCENELINK_* env overrides.

    File layout: ``{"engine": {...}, "server": {...}}``; both sections optional.
    Env overrides apply to the server section, e.g. SCENELINK_PORT=9000.
    """
    engine = EngineConfig()
    server = ServerConfig()
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config file must contain a JSON object")
        engine = _overlay(EngineConfig, engine, data.get("engine", {}))
        server = _overlay(ServerConfig, server, data.get("server", {}))
    env = os.environ if env is None else env
    overrides: dict[str, Any] = {}
    for f in dataclasses.fields(ServerConfig):
        raw = env.get(_ENV_PREFIX + f.name.upper())
        if raw is not None:
            overrides[f.name] = _coerce(getattr(server, f.name), raw)
    if overrides:
        server = dataclasses.replace(server, **overrides)
    return engine, server
