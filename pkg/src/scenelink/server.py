"""Session service: REST for open/snapshot/submit, WebSocket for the stream.

One hub owns every live session. All request handlers run on one event loop,
so per-session ordering needs only an asyncio lock: the lock spans seq
assignment, application, and broadcast, which keeps the acknowledged seqs
consecutive and the subscriber streams in apply order.

Subscribers get bounded queues. A consumer that falls more than
``subscriber_buffer`` messages behind is disconnected rather than allowed to
stall the loop or grow the queue without limit; it can reconnect and fetch a
fresh snapshot (which always equals the fold of every delta it missed).
"""

from __future__ import annotations

import asyncio
import itertools
import logging
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .config import EngineConfig, ServerConfig
from .deltas import is_empty
from .events import parse_event
from .geometry import SceneMesh
from .inference import PoolExecutor, SerialExecutor
from .protocol import (
    BAD_REQUEST,
    CAPACITY,
    UNKNOWN_SESSION,
    ProtocolError,
    error_message,
    messages_from_apply,
    note_messages,
    parse_client_message,
    snapshot_message,
)
from .schemas import SchemaError
from .reasoner import HttpReasoner, MockReasoner
from .replay import Scenario
from .session import Session

log = logging.getLogger("scenelink.server")

__all__ = ["Hub", "make_app", "default_session_factory"]


@dataclass
class _Subscriber:
    queue: asyncio.Queue
    dropped: asyncio.Event = field(default_factory=asyncio.Event)


class _HubFull(Exception):
    pass


@dataclass
class SessionHandle:
    id: str
    session: Session
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    subscribers: dict[int, _Subscriber] = field(default_factory=dict)
    _sub_ids: itertools.count = field(default_factory=lambda: itertools.count(1))


def default_session_factory(engine: EngineConfig, scene: Scenario | None,
                            reasoner_url: str | None = None):
    """Build fresh sessions for the hub: scene geometry + kb from the scenario
    when one is configured, an empty scene otherwise; mock reasoner inline,
    HTTP reasoner pooled."""
    mesh = scene.mesh if scene else SceneMesh([], [])
    camera = scene.camera if scene else None
    kb = scene.kb if scene else {}

    def factory() -> Session:
        if reasoner_url:
            reasoner = HttpReasoner(reasoner_url, timeout_s=engine.reasoner_timeout_s)
            executor = PoolExecutor(engine.max_inflight, engine.reasoner_timeout_s)
        else:
            reasoner = MockReasoner(kb)
            executor = SerialExecutor()
        return Session(mesh, reasoner, executor=executor, config=engine, camera=camera)

    return factory


class Hub:
    """Owns sessions, assigns seqs, fans deltas out to subscribers."""

    def __init__(self, engine: EngineConfig, server: ServerConfig,
                 session_factory=None, scene: Scenario | None = None):
        self.engine = engine
        self.server = server
        self.scene = scene
        self._session_factory = session_factory or default_session_factory(engine, scene)
        self._handles: dict[str, SessionHandle] = {}
        self._ids = itertools.count(1)

    # -- sessions ---------------------------------------------------------

    def open_session(self) -> SessionHandle:
        if len(self._handles) >= self.server.max_sessions:
            raise _HubFull()
        handle = SessionHandle(id=f"s{next(self._ids)}", session=self._session_factory())
        self._handles[handle.id] = handle
        return handle

    def get(self, session_id: str) -> SessionHandle | None:
        return self._handles.get(session_id)

    def handles(self) -> list[SessionHandle]:
        return list(self._handles.values())

    def close_all(self) -> None:
        for handle in self._handles.values():
            handle.session.close()
        self._handles.clear()

    # -- events -------------------------------------------------------------

    async def submit(self, handle: SessionHandle, raw_event: dict) -> list[dict]:
        """Assign the next seq, apply, broadcast; returns the message batch
        (first message is the delta ack)."""
        async with handle.lock:
            raw = dict(raw_event)
            raw["seq"] = handle.session.last_seq + 1
            try:
                event = parse_event(raw)
            except SchemaError as exc:
                raise ProtocolError(BAD_REQUEST, str(exc)) from exc
            result = handle.session.apply(event)
            messages = messages_from_apply(handle.id, result)
            self._broadcast(handle, messages)
            return messages

    async def pump(self, handle: SessionHandle) -> None:
        """Drain asynchronously-completed inference for one session and
        broadcast whatever changed (used with pooled executors)."""
        async with handle.lock:
            delta, notes = handle.session.pump()
            if is_empty(delta) and not notes:
                return
            seq = handle.session.last_seq
            delta["seq"] = seq
            messages = [
                {
                    "kind": "delta",
                    "session_id": handle.id,
                    "seq": seq,
                    "applied": True,
                    "delta": delta,
                    "diagnostics": [],
                }
            ]
            messages.extend(note_messages(handle.id, seq, notes))
            self._broadcast(handle, messages)

    # -- subscriptions ------------------------------------------------------

    def subscribe(self, handle: SessionHandle) -> tuple[int, _Subscriber]:
        sub = _Subscriber(queue=asyncio.Queue(maxsize=self.server.subscriber_buffer))
        sub_id = next(handle._sub_ids)
        handle.subscribers[sub_id] = sub
        return sub_id, sub

    def unsubscribe(self, handle: SessionHandle, sub_id: int) -> None:
        handle.subscribers.pop(sub_id, None)

    def _broadcast(self, handle: SessionHandle, messages: list[dict]) -> None:
        for sub_id, sub in list(handle.subscribers.items()):
            for message in messages:
                try:
                    sub.queue.put_nowait(message)
                except asyncio.QueueFull:
                    log.warning(
                        "session %s: subscriber %d overflowed (%d queued); dropping",
                        handle.id, sub_id, sub.queue.qsize(),
                    )
                    sub.dropped.set()
                    handle.subscribers.pop(sub_id, None)
                    break


# -- the app ---------------------------------------------------------------------


def make_app(engine: EngineConfig | None = None, server: ServerConfig | None = None,
             scene: Scenario | None = None, session_factory=None) -> FastAPI:
    engine = engine or EngineConfig()
    server = server or ServerConfig()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        ticker = None
        if server.tick_interval_s > 0:
            ticker = asyncio.create_task(_tick_loop(app.state.hub, server.tick_interval_s))
        try:
            yield
        finally:
            if ticker is not None:
                ticker.cancel()
            app.state.hub.close_all()

    app = FastAPI(title="scenelink", lifespan=lifespan)
    # browser clients are typically served from a separate static origin; the
    # API carries no credentials, so a permissive policy is safe
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    app.state.hub = Hub(engine, server, session_factory=session_factory, scene=scene)

    def _error(status: int, code: str, text: str, session_id=None) -> JSONResponse:
        return JSONResponse(status_code=status,
                            content=error_message(code, text, session_id))

    @app.post("/sessions", status_code=201)
    async def open_session():
        hub: Hub = app.state.hub
        try:
            handle = hub.open_session()
        except _HubFull:
            return _error(503, CAPACITY,
                          f"session capacity ({hub.server.max_sessions}) reached")
        return snapshot_message(handle.id, handle.session.last_seq,
                                handle.session.state())

    @app.get("/sessions/{session_id}/snapshot")
    async def get_snapshot(session_id: str):
        handle = app.state.hub.get(session_id)
        if handle is None:
            return _error(404, UNKNOWN_SESSION, f"no session {session_id!r}", session_id)
        return snapshot_message(handle.id, handle.session.last_seq,
                                handle.session.state())

    @app.post("/sessions/{session_id}/events")
    async def submit_event(session_id: str, body: dict):
        hub: Hub = app.state.hub
        handle = hub.get(session_id)
        if handle is None:
            return _error(404, UNKNOWN_SESSION, f"no session {session_id!r}", session_id)
        try:
            raw_event = parse_client_message(body)
            messages = await hub.submit(handle, raw_event)
        except ProtocolError as exc:
            return _error(400, exc.code, exc.text, session_id)
        return {"messages": messages}

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(ws: WebSocket, session_id: str):
        hub: Hub = app.state.hub
        await ws.accept()
        handle = hub.get(session_id)
        if handle is None:
            await ws.send_json(error_message(UNKNOWN_SESSION,
                                             f"no session {session_id!r}", session_id))
            await ws.close(code=4404)
            return
        sub_id, sub = hub.subscribe(handle)
        await ws.send_json(snapshot_message(handle.id, handle.session.last_seq,
                                            handle.session.state()))
        sender = asyncio.create_task(_pump_to_socket(ws, sub))
        try:
            while True:
                try:
                    body = await ws.receive_json()
                except ValueError:
                    await ws.send_json(error_message(BAD_REQUEST,
                                                     "message is not valid JSON",
                                                     handle.id))
                    continue
                try:
                    raw_event = parse_client_message(body)
                    await hub.submit(handle, raw_event)
                except ProtocolError as exc:
                    await ws.send_json(error_message(exc.code, exc.text, handle.id))
        except WebSocketDisconnect:
            pass
        finally:
            hub.unsubscribe(handle, sub_id)
            sender.cancel()

    return app


async def _pump_to_socket(ws: WebSocket, sub: _Subscriber) -> None:
    """Forward broadcast messages until the hub drops this subscriber."""
    dropped = asyncio.ensure_future(sub.dropped.wait())
    try:
        while True:
            getter = asyncio.ensure_future(sub.queue.get())
            done, _ = await asyncio.wait(
                {getter, dropped}, return_when=asyncio.FIRST_COMPLETED
            )
            if getter in done:
                await ws.send_json(getter.result())
            else:
                getter.cancel()
            if dropped.done():
                while not sub.queue.empty():  # flush what was queued pre-drop
                    await ws.send_json(sub.queue.get_nowait())
                await ws.close(code=1013, reason="subscriber overflow")
                return
    except (WebSocketDisconnect, RuntimeError):
        pass
    finally:
        dropped.cancel()


async def _tick_loop(hub: Hub, interval_s: float) -> None:
    loop = asyncio.get_running_loop()
    started = loop.time()
    while True:
        await asyncio.sleep(interval_s)
        now = loop.time() - started
        for handle in hub.handles():
            try:
                await hub.submit(handle, {"kind": "tick", "time": now})
                await hub.pump(handle)
            except ProtocolError:  # pragma: no cover - tick is always well formed
                log.exception("internal tick rejected")
