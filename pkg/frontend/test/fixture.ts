// Shared loader for the recorded session fixture. The fixture is a full
// client's-eye transcript: the opening snapshot, then for every client
// event the server's reply messages plus an independently fetched
// snapshot of the resulting state. Regenerate with
// `python3 test/fixtures/record_fixture.py` from the frontend directory.

import { readFileSync } from "node:fs";
import { resolve } from "node:path";
import type {
  ClientEvent,
  DeltaMessage,
  NeedsDisambiguationMessage,
  ServerMessage,
  SnapshotMessage,
} from "../src/protocol.js";

export interface FixtureStep {
  event: ClientEvent;
  messages: ServerMessage[];
  snapshot: SnapshotMessage;
}

export interface Fixture {
  opened: SnapshotMessage;
  steps: FixtureStep[];
}

export function loadFixture(): Fixture {
  // vitest runs with the frontend directory as cwd (the config root)
  const path = resolve(process.cwd(), "test/fixtures/session.json");
  return JSON.parse(readFileSync(path, "utf8")) as Fixture;
}

/** Every step's first reply is the delta message for that event. */
export function deltaOf(step: FixtureStep): DeltaMessage {
  const first = step.messages[0];
  if (!first || first.kind !== "delta") {
    throw new Error(`expected a delta message first, got ${first?.kind}`);
  }
  return first;
}

export function offersIn(fixture: Fixture): NeedsDisambiguationMessage[] {
  const offers: NeedsDisambiguationMessage[] = [];
  for (const step of fixture.steps) {
    for (const message of step.messages) {
      if (message.kind === "needs_disambiguation") offers.push(message);
    }
  }
  return offers;
}
