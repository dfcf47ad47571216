// ViewState: the folded session state plus everything the renderer needs —
// top-down orthographic projection (meters → pixels), selection highlights,
// edge overlays, and the last-seen seq. Deltas are applied in arrival
// order; overlays are recomputed from the folded state, so they only ever
// show edges that exist right now.

import { renderEdges, type EdgeOverlay } from "./encodings.js";
import { fold, emptyState } from "./fold.js";
import type { DeltaMessage, SnapshotMessage, StateDoc } from "./protocol.js";

export interface ViewOptions {
  widthPx: number;
  heightPx: number;
  /** scale, pixels per meter (default 120) */
  metersToPx?: number;
}

export interface Projected {
  x: number;
  y: number;
}

export interface ViewState {
  readonly state: StateDoc;
  readonly overlays: EdgeOverlay[];
  readonly seq: number;
  selection(): string[];
  heldIds(): string[];
  /** world → screen: top-down, +x right, +z down, origin at canvas center */
  project(position: readonly number[]): Projected;
  /** screen → nearest node id within radiusPx, or null */
  pick(x: number, y: number, radiusPx?: number): string | null;
  applySnapshot(message: SnapshotMessage): void;
  applyDelta(message: DeltaMessage): void;
}

export function createViewState(options: ViewOptions): ViewState {
  const scale = options.metersToPx ?? 120;
  const cx = options.widthPx / 2;
  const cy = options.heightPx / 2;

  let state = emptyState();
  let overlays: EdgeOverlay[] = [];
  let seq = -1;

  function refresh(): void {
    overlays = renderEdges(state);
  }

  return {
    get state() {
      return state;
    },
    get overlays() {
      return overlays;
    },
    get seq() {
      return seq;
    },
    selection: () => [...state.selection_order],
    heldIds: () => (state.user ? [...state.user.held_ids] : []),
    project(position) {
      return {
        x: cx + (position[0] ?? 0) * scale,
        y: cy + (position[2] ?? 0) * scale,
      };
    },
    pick(x, y, radiusPx = 14) {
      let best: string | null = null;
      let bestDist = radiusPx;
      for (const id of Object.keys(state.nodes).sort()) {
        const node = state.nodes[id];
        if (!node) continue;
        const p = this.project(node.position);
        const dist = Math.hypot(p.x - x, p.y - y);
        if (dist <= bestDist) {
          best = id;
          bestDist = dist;
        }
      }
      return best;
    },
    applySnapshot(message) {
      state = JSON.parse(JSON.stringify(message.state)) as StateDoc;
      seq = message.seq;
      refresh();
    },
    applyDelta(message) {
      state = fold(state, message.delta);
      seq = message.seq;
      refresh();
    },
  };
}
