// Session client: opens a session over REST, then attaches to the
// WebSocket stream. Incoming messages are dispatched in arrival order (the
// server guarantees apply order per session). Outbound messages sent while
// the socket is down are queued and flushed on (re)connect, and the status
// callback lets the UI show a banner.

import type { ClientMessage, ServerMessage } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
}

export interface SessionClientOptions {
  makeSocket: (url: string) => SocketLike;
  onMessage: (message: ServerMessage) => void;
  onStatus?: (status: string) => void;
}

export interface SessionClient {
  connect(url: string): void;
  send(message: ClientMessage): void;
  queuedCount(): number;
  close(): void;
}

export function createSessionClient(options: SessionClientOptions): SessionClient {
  const queue: ClientMessage[] = [];
  let socket: SocketLike | null = null;
  let ready = false;

  const status = options.onStatus ?? (() => undefined);

  function flush(): void {
    while (ready && socket && queue.length > 0) {
      const message = queue.shift();
      if (message) socket.send(JSON.stringify(message));
    }
  }

  return {
    connect(url) {
      socket = options.makeSocket(url);
      ready = false;
      status("connecting");
      socket.onopen = () => {
        ready = true;
        status(queue.length > 0 ? `connected; flushing ${queue.length} queued` : "connected");
        flush();
      };
      socket.onmessage = (event) => {
        options.onMessage(JSON.parse(event.data) as ServerMessage);
      };
      socket.onclose = () => {
        ready = false;
        status("disconnected");
      };
    },
    send(message) {
      if (ready && socket) {
        socket.send(JSON.stringify(message));
      } else {
        queue.push(message);
        status(`disconnected; ${queue.length} queued`);
      }
    },
    queuedCount: () => queue.length,
    close() {
      ready = false;
      socket?.close();
      socket = null;
    },
  };
}

/** Open a session via REST; returns the session id and opening snapshot. */
export async function openSession(
  baseUrl: string,
  fetchImpl: typeof fetch = fetch,
): Promise<{ sessionId: string; snapshot: ServerMessage }> {
  const response = await fetchImpl(`${baseUrl}/sessions`, { method: "POST" });
  if (!response.ok) {
    throw new Error(`open session failed: ${response.status}`);
  }
  const snapshot = (await response.json()) as ServerMessage;
  if (snapshot.kind !== "snapshot") {
    throw new Error(`expected snapshot, got ${snapshot.kind}`);
  }
  return { sessionId: snapshot.session_id, snapshot };
}

export function streamUrl(baseUrl: string, sessionId: string): string {
  const ws = baseUrl.replace(/^http/, "ws");
  return `${ws}/sessions/${sessionId}/stream`;
}
