// Browser bootstrap: open a session, attach the stream, wire DOM gestures,
// and run a single requestAnimationFrame render loop. Everything here is
// glue; the behavior lives in the imported modules.

import { createSessionClient, openSession, streamUrl, type SocketLike } from "./client.js";
import { createDialogHost } from "./dialogs.js";
import * as gestures from "./gestures.js";
import type { ServerMessage } from "./protocol.js";
import { draw, type Canvas2D } from "./render.js";
import { createViewState } from "./view.js";

const WIDTH = 960;
const HEIGHT = 640;

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

async function start(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get("server") ?? "http://127.0.0.1:8741";

  const canvas = el<HTMLCanvasElement>("scene");
  canvas.width = WIDTH;
  canvas.height = HEIGHT;
  const ctx = canvas.getContext("2d") as unknown as Canvas2D | null;
  if (!ctx) throw new Error("2d canvas unavailable");

  const banner = el<HTMLDivElement>("banner");
  const log = el<HTMLUListElement>("log");
  const view = createViewState({ widthPx: WIDTH, heightPx: HEIGHT });

  const startedAt = performance.now();
  const now = (): number => (performance.now() - startedAt) / 1000;

  function note(text: string): void {
    const item = document.createElement("li");
    item.textContent = text;
    log.prepend(item);
    while (log.childElementCount > 8) log.lastElementChild?.remove();
  }

  const client = createSessionClient({
    // WebSocket handlers take DOM event args the client never reads, so the
    // structural narrowing is safe
    makeSocket: (url) => new WebSocket(url) as unknown as SocketLike,
    onStatus: (status) => {
      banner.textContent = status;
      banner.dataset["state"] = status.startsWith("connected") ? "ok" : "warn";
    },
    onMessage: (message: ServerMessage) => {
      switch (message.kind) {
        case "snapshot":
          view.applySnapshot(message);
          break;
        case "delta":
          view.applyDelta(message);
          dialogs.applyDelta(message.delta);
          for (const diagnostic of message.diagnostics) note(diagnostic);
          break;
        case "needs_disambiguation":
          dialogs.open(message);
          break;
        case "clarification":
          note(message.text);
          break;
        case "error":
          note(`${message.code}: ${message.text}`);
          break;
      }
    },
  });

  const dialogs = createDialogHost(el<HTMLDivElement>("dialogs"),
                                   (m) => client.send(m), now);

  const { sessionId } = await openSession(baseUrl);
  client.connect(streamUrl(baseUrl, sessionId));

  // -- gestures ------------------------------------------------------------
  // click = pinch_select; drag = sweep; text = voice; hold G over a node =
  // grab; drag the held node onto another = aim; release G = release.

  let dragStart: { x: number; y: number } | null = null;
  let heldId: string | null = null;
  let hoverId: string | null = null;
  let aimedAt: string | null = null;

  function canvasPoint(event: MouseEvent): { x: number; y: number } {
    const rect = canvas.getBoundingClientRect();
    return { x: event.clientX - rect.left, y: event.clientY - rect.top };
  }

  canvas.addEventListener("mousedown", (event) => {
    dragStart = canvasPoint(event);
  });

  canvas.addEventListener("mousemove", (event) => {
    const p = canvasPoint(event);
    hoverId = view.pick(p.x, p.y);
    if (heldId !== null) {
      const target = view.pick(p.x, p.y, 20);
      if (target !== null && target !== heldId && target !== aimedAt) {
        aimedAt = target;
        client.send(gestures.aim(heldId, target, now()));
      }
    }
  });

  canvas.addEventListener("mouseup", (event) => {
    const up = canvasPoint(event);
    if (dragStart) {
      const message = gestures.dragToSweep(up.x - dragStart.x, up.y - dragStart.y, now());
      if (message) {
        client.send(message);
        dragStart = null;
        return;
      }
    }
    dragStart = null;
    const picked = view.pick(up.x, up.y);
    if (picked) client.send(gestures.pinchSelect(picked, now()));
  });

  window.addEventListener("keydown", (event) => {
    if (event.repeat) return;
    if (event.key === "g" && hoverId !== null && heldId === null) {
      heldId = hoverId;
      aimedAt = null;
      client.send(gestures.grab(heldId, now()));
    }
    if (event.key === "Escape") {
      client.send(gestures.clearSelection(now()));
    }
  });

  window.addEventListener("keyup", (event) => {
    if (event.key === "g" && heldId !== null) {
      client.send(gestures.release(heldId, now()));
      heldId = null;
      aimedAt = null;
    }
  });

  const input = el<HTMLInputElement>("utterance");
  el<HTMLFormElement>("voice-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const text = input.value.trim();
    if (text.length > 0) {
      client.send(gestures.voice(text, now()));
      input.value = "";
    }
  });

  function frame(): void {
    draw(ctx as Canvas2D, view, WIDTH, HEIGHT);
    window.requestAnimationFrame(frame);
  }
  window.requestAnimationFrame(frame);
}

start().catch((error) => {
  const banner = document.getElementById("banner");
  if (banner) {
    banner.textContent = String(error);
    banner.dataset["state"] = "warn";
  }
  console.error(error);
});
