// Per-relation-type edge encodings. renderEdges turns the folded state into
// drawable overlay descriptors — pure data, so the mapping is testable
// without a canvas. The renderer consumes these; the legend shares the same
// table so encodings stay consistent everywhere.

import type { EdgeJson, StateDoc, Vec3 } from "./protocol.js";

export interface OverlayBase {
  edgeId: string;
  relation: string;
  endpoints: string[];
  /** world positions of the endpoints, in endpoint order */
  anchors: Vec3[];
  /** stronger visual emphasis: the user explicitly asked for this edge */
  emphasized: boolean;
  /** system suggestions render tentatively until confirmed */
  tentative: boolean;
  confidence: number;
}

export interface ComparisonCard extends OverlayBase {
  kind: "card";
  rows: Array<{ name: string; valueA: string; valueB: string }>;
}

export interface PartLabels extends OverlayBase {
  kind: "part-labels";
  parentId: string;
  labels: Array<{ nodeId: string; text: string; at: Vec3 }>;
  steps: string[];
}

export interface Connector extends OverlayBase {
  kind: "connector";
  directed: boolean;
  caption: string;
  tone: "ok" | "warn" | "plain";
}

export interface StepMarkers extends OverlayBase {
  kind: "steps";
  markers: Array<{ index: number; text: string }>;
}

export interface CausalArrow extends OverlayBase {
  kind: "arrow";
  label: string; // always "enables"
}

export interface SpatialRibbon extends OverlayBase {
  kind: "ribbon";
  text: string; // the preposition
}

export interface SimilarityBadge extends OverlayBase {
  kind: "badge";
  text: string;
}

export type EdgeOverlay =
  | ComparisonCard
  | PartLabels
  | Connector
  | StepMarkers
  | CausalArrow
  | SpatialRibbon
  | SimilarityBadge;

export const RELATION_COLORS: Record<string, string> = {
  spatial: "#8d99ae",
  structural: "#bc6c25",
  similarity: "#06a77d",
  comparison: "#30638e",
  affordance: "#d1495b",
  compatibility: "#7768ae",
  procedural: "#e09f3e",
  causality: "#9e2a2b",
};

export const FALLBACK_COLOR = "#5c677d";

function anchorFor(state: StateDoc, id: string): Vec3 | null {
  const node = state.nodes[id];
  if (node) {
    return [node.position[0] ?? 0, node.position[1] ?? 0, node.position[2] ?? 0];
  }
  if (state.user && state.user.id === id) {
    const p = state.user.position;
    return [p[0] ?? 0, p[1] ?? 0, p[2] ?? 0];
  }
  return null;
}

function base(state: StateDoc, edge: EdgeJson): OverlayBase | null {
  const anchors: Vec3[] = [];
  for (const id of edge.endpoints) {
    const anchor = anchorFor(state, id);
    if (anchor === null) return null; // endpoint no longer in the state
    anchors.push(anchor);
  }
  return {
    edgeId: edge.id,
    relation: edge.relation,
    endpoints: [...edge.endpoints],
    anchors,
    emphasized: edge.initiative === "user_initiated",
    tentative: edge.state === "tentative",
    confidence: edge.confidence,
  };
}

function asString(value: unknown): string {
  return typeof value === "string" ? value : "";
}

function asStrings(value: unknown): string[] {
  return Array.isArray(value) ? value.map(asString) : [];
}

export function encodeEdge(state: StateDoc, edge: EdgeJson): EdgeOverlay | null {
  const common = base(state, edge);
  if (common === null) return null;
  const payload = edge.payload ?? {};

  switch (edge.relation) {
    case "comparison": {
      const raw = Array.isArray(payload["attributes"]) ? payload["attributes"] : [];
      const rows = raw.map((row) => {
        const r = row as Record<string, unknown>;
        return {
          name: asString(r["name"]),
          valueA: asString(r["value_a"]),
          valueB: asString(r["value_b"]),
        };
      });
      return { ...common, kind: "card", rows };
    }
    case "structural": {
      const parentId = asString(payload["parent"]);
      const labels = asStrings(payload["children"]).flatMap((childId) => {
        const at = anchorFor(state, childId);
        const text = state.nodes[childId]?.label ?? childId;
        return at === null ? [] : [{ nodeId: childId, text, at }];
      });
      return {
        ...common,
        kind: "part-labels",
        parentId,
        labels,
        steps: asStrings(payload["steps"]),
      };
    }
    case "similarity": {
      const theme = asString(payload["theme"]);
      const same = payload["sameType"] === true;
      return { ...common, kind: "badge", text: same ? `same type — ${theme}` : theme };
    }
    case "affordance": {
      const action = asString(payload["action"]);
      const tip = asString(payload["tip"]);
      return {
        ...common,
        kind: "connector",
        directed: true,
        caption: tip ? `${action} — ${tip}` : action,
        tone: "plain",
      };
    }
    case "compatibility": {
      const incompatible = payload["incompatible"] === true;
      return {
        ...common,
        kind: "connector",
        directed: true,
        caption: incompatible ? asString(payload["warning"]) : "compatible",
        tone: incompatible ? "warn" : "ok",
      };
    }
    case "procedural": {
      const markers = asStrings(payload["steps"]).map((text, i) => ({
        index: i + 1,
        text,
      }));
      return { ...common, kind: "steps", markers };
    }
    case "causality":
      return { ...common, kind: "arrow", label: "enables" };
    case "spatial":
      return { ...common, kind: "ribbon", text: asString(payload["preposition"]) };
    default:
      console.warn(`unknown relation type ${edge.relation}; using generic connector`);
      return { ...common, kind: "connector", directed: false, caption: edge.relation, tone: "plain" };
  }
}

/** Overlay descriptors for exactly the edges present in the folded state. */
export function renderEdges(state: StateDoc): EdgeOverlay[] {
  const overlays: EdgeOverlay[] = [];
  for (const id of Object.keys(state.edges).sort()) {
    const edge = state.edges[id];
    if (!edge) continue;
    const overlay = encodeEdge(state, edge);
    if (overlay !== null) overlays.push(overlay);
  }
  return overlays;
}
