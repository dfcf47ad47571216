// Client-side state folding: the exact mirror of the server's delta
// semantics. Keyed sections patch per id; wholesale sections replace when
// non-null; seq/window attachments are metadata, not state.

import type { Delta, KeyedDelta, StateDoc } from "./protocol.js";

const KEYED = ["nodes", "edges", "proposals"] as const;
const REPLACED = ["user", "links", "selection_order", "epoch"] as const;

function clone<T>(value: T): T {
  // state documents are pure JSON, so a JSON round-trip is a faithful copy
  return JSON.parse(JSON.stringify(value)) as T;
}

export function emptyState(): StateDoc {
  return {
    nodes: {},
    user: null,
    links: [],
    edges: {},
    proposals: {},
    selection_order: [],
    epoch: 0,
  };
}

export function fold(state: StateDoc, delta: Delta): StateDoc {
  const out = clone(state);
  for (const section of KEYED) {
    const part = delta[section] as KeyedDelta<unknown> | undefined;
    if (!part) continue;
    const table = out[section] as Record<string, unknown>;
    for (const [id, value] of Object.entries(part.added ?? {})) {
      table[id] = clone(value);
    }
    for (const [id, value] of Object.entries(part.updated ?? {})) {
      table[id] = clone(value);
    }
    for (const id of part.removed ?? []) {
      delete table[id];
    }
  }
  for (const section of REPLACED) {
    const value = delta[section];
    if (value !== null && value !== undefined) {
      (out as unknown as Record<string, unknown>)[section] = clone(value);
    }
  }
  return out;
}

export function foldAll(state: StateDoc, deltas: Iterable<Delta>): StateDoc {
  let current = state;
  for (const delta of deltas) {
    current = fold(current, delta);
  }
  return current;
}
