// Wire types mirroring protocol.md. Keep in sync with the server; the fold
// test replays a recorded session to catch drift.

export type Vec3 = [number, number, number];

export interface NodeJson {
  id: string;
  label: string;
  synonyms: string[];
  position: number[];
  orientation: number[];
  extent: number[];
  crop_ref: string | null;
  last_seen: number;
  held: boolean;
  last_manipulated: number | null;
}

export interface UserJson {
  id: string;
  position: number[];
  orientation: number[];
  gaze: number[];
  held_ids: string[];
  pointed_id: string | null;
}

export interface LinkJson {
  kind: "holding" | "pointing" | "proximate";
  node_id: string;
  since: number;
}

export interface EdgeJson {
  id: string;
  relation: string;
  endpoints: string[];
  confidence: number;
  initiative: "user_initiated" | "system_initiated" | "hybrid";
  state: "tentative" | "confirmed" | "transient_held";
  payload: Record<string, unknown>;
  created_at: number;
  context_epoch: number;
  ttl: number | null;
}

export interface OfferJson {
  id: string;
  candidates: string[];
  prompt: string;
  endpoints: string[];
  offered_at: number;
}

export interface StateDoc {
  nodes: Record<string, NodeJson>;
  user: UserJson | null;
  links: LinkJson[];
  edges: Record<string, EdgeJson>;
  proposals: Record<string, OfferJson>;
  selection_order: string[];
  epoch: number;
}

export interface KeyedDelta<T> {
  added: Record<string, T>;
  updated: Record<string, T>;
  removed: string[];
}

export interface Delta {
  nodes?: KeyedDelta<NodeJson>;
  edges?: KeyedDelta<EdgeJson>;
  proposals?: KeyedDelta<OfferJson>;
  user?: UserJson | null;
  links?: LinkJson[] | null;
  selection_order?: string[] | null;
  epoch?: number | null;
  seq?: number;
  window?: unknown;
}

export interface SnapshotMessage {
  kind: "snapshot";
  session_id: string;
  seq: number;
  state: StateDoc;
}

export interface DeltaMessage {
  kind: "delta";
  session_id: string;
  seq: number;
  applied: boolean;
  delta: Delta;
  diagnostics: string[];
}

export interface NeedsDisambiguationMessage {
  kind: "needs_disambiguation";
  session_id: string;
  seq: number;
  proposal_id: string;
  candidates: string[];
  prompt: string;
}

export interface ClarificationMessage {
  kind: "clarification";
  session_id: string;
  seq: number;
  text: string;
}

export interface ErrorMessage {
  kind: "error";
  code: string;
  text: string;
  session_id?: string;
}

export type ServerMessage =
  | SnapshotMessage
  | DeltaMessage
  | NeedsDisambiguationMessage
  | ClarificationMessage
  | ErrorMessage;

// Outbound events never carry a seq: the server is the ordering authority.
export interface ClientEvent {
  kind: string;
  time: number;
  [field: string]: unknown;
}

export interface ClientMessage {
  event: ClientEvent;
}

export const RELATION_TYPES = [
  "spatial",
  "structural",
  "similarity",
  "comparison",
  "affordance",
  "compatibility",
  "procedural",
  "causality",
] as const;
