// Canvas renderer. Draws the top-down scene: nodes with labels, the user
// marker, selection rings, and one visual treatment per relation type (see
// encodings.ts for the mapping). Pure drawing — all layout decisions live
// in the overlay descriptors. The context is typed structurally so tests
// can pass a recording stub.

import type { EdgeOverlay } from "./encodings.js";
import { FALLBACK_COLOR, RELATION_COLORS } from "./encodings.js";
import type { ViewState } from "./view.js";

export interface Canvas2D {
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  fill(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  setLineDash(segments: number[]): void;
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  textAlign: CanvasTextAlign;
}

const NODE_RADIUS = 9;

function colorFor(relation: string): string {
  return RELATION_COLORS[relation] ?? FALLBACK_COLOR;
}

function midpoint(view: ViewState, overlay: EdgeOverlay): { x: number; y: number } {
  let sx = 0;
  let sy = 0;
  for (const anchor of overlay.anchors) {
    const p = view.project(anchor);
    sx += p.x;
    sy += p.y;
  }
  const n = Math.max(overlay.anchors.length, 1);
  return { x: sx / n, y: sy / n };
}

function drawConnector(ctx: Canvas2D, view: ViewState, overlay: EdgeOverlay,
                       directed: boolean): void {
  const [first, ...rest] = overlay.anchors;
  if (!first) return;
  const from = view.project(first);
  for (const anchor of rest) {
    const to = view.project(anchor);
    ctx.beginPath();
    ctx.moveTo(from.x, from.y);
    ctx.lineTo(to.x, to.y);
    ctx.stroke();
    if (directed) drawArrowhead(ctx, from, to);
  }
}

function drawArrowhead(ctx: Canvas2D, from: { x: number; y: number },
                       to: { x: number; y: number }): void {
  const angle = Math.atan2(to.y - from.y, to.x - from.x);
  const size = 8;
  ctx.beginPath();
  ctx.moveTo(to.x, to.y);
  ctx.lineTo(to.x - size * Math.cos(angle - 0.4), to.y - size * Math.sin(angle - 0.4));
  ctx.lineTo(to.x - size * Math.cos(angle + 0.4), to.y - size * Math.sin(angle + 0.4));
  ctx.fill();
}

function drawOverlay(ctx: Canvas2D, view: ViewState, overlay: EdgeOverlay): void {
  ctx.strokeStyle = colorFor(overlay.relation);
  ctx.fillStyle = colorFor(overlay.relation);
  ctx.lineWidth = overlay.emphasized ? 3 : 1.5;
  ctx.setLineDash(overlay.tentative ? [5, 4] : []);
  const mid = midpoint(view, overlay);

  switch (overlay.kind) {
    case "card": {
      drawConnector(ctx, view, overlay, false);
      const w = 170;
      const h = 16 * (overlay.rows.length + 1);
      const x = mid.x - w / 2;
      const y = mid.y - h / 2;
      ctx.fillStyle = "#ffffff";
      ctx.fillRect(x, y, w, h);
      ctx.strokeRect(x, y, w, h);
      ctx.fillStyle = colorFor(overlay.relation);
      ctx.textAlign = "left";
      overlay.rows.forEach((row, i) => {
        ctx.fillText(`${row.name}: ${row.valueA} | ${row.valueB}`, x + 6, y + 16 * (i + 1));
      });
      break;
    }
    case "part-labels": {
      drawConnector(ctx, view, overlay, false);
      ctx.textAlign = "center";
      for (const label of overlay.labels) {
        const p = view.project(label.at);
        ctx.fillText(label.text, p.x, p.y - NODE_RADIUS - 4);
      }
      break;
    }
    case "connector": {
      drawConnector(ctx, view, overlay, overlay.directed);
      ctx.textAlign = "center";
      ctx.fillText(overlay.caption, mid.x, mid.y - 6);
      break;
    }
    case "steps": {
      drawConnector(ctx, view, overlay, true);
      ctx.textAlign = "center";
      overlay.markers.forEach((marker, i) => {
        const anchor = overlay.anchors[Math.min(i, overlay.anchors.length - 1)];
        if (!anchor) return;
        const p = view.project(anchor);
        ctx.fillText(String(marker.index), p.x + NODE_RADIUS + 6, p.y - NODE_RADIUS - 2 - 12 * i);
      });
      break;
    }
    case "arrow": {
      drawConnector(ctx, view, overlay, true);
      ctx.textAlign = "center";
      ctx.fillText(overlay.label, mid.x, mid.y - 6);
      break;
    }
    case "ribbon": {
      drawConnector(ctx, view, overlay, false);
      ctx.textAlign = "center";
      ctx.fillText(overlay.text, mid.x, mid.y + 12);
      break;
    }
    case "badge": {
      drawConnector(ctx, view, overlay, false);
      ctx.beginPath();
      ctx.arc(mid.x, mid.y, 6, 0, Math.PI * 2);
      ctx.fill();
      ctx.textAlign = "center";
      ctx.fillText(overlay.text, mid.x, mid.y - 10);
      break;
    }
  }
  ctx.setLineDash([]);
}

export function draw(ctx: Canvas2D, view: ViewState, widthPx: number, heightPx: number): void {
  ctx.clearRect(0, 0, widthPx, heightPx);

  for (const overlay of view.overlays) {
    drawOverlay(ctx, view, overlay);
  }

  const selection = new Set(view.selection());
  const held = new Set(view.heldIds());
  const nodes = view.state.nodes;
  ctx.font = "12px sans-serif";
  for (const id of Object.keys(nodes).sort()) {
    const node = nodes[id];
    if (!node) continue;
    const p = view.project(node.position);
    ctx.fillStyle = held.has(id) ? "#f4a261" : "#2a9d8f";
    ctx.beginPath();
    ctx.arc(p.x, p.y, NODE_RADIUS, 0, Math.PI * 2);
    ctx.fill();
    if (selection.has(id)) {
      ctx.strokeStyle = "#e76f51";
      ctx.lineWidth = 3;
      ctx.setLineDash([]);
      ctx.beginPath();
      ctx.arc(p.x, p.y, NODE_RADIUS + 4, 0, Math.PI * 2);
      ctx.stroke();
    }
    ctx.fillStyle = "#1d3557";
    ctx.textAlign = "center";
    ctx.fillText(node.label, p.x, p.y + NODE_RADIUS + 14);
  }

  const user = view.state.user;
  if (user) {
    const p = view.project(user.position);
    ctx.fillStyle = "#1d3557";
    ctx.beginPath();
    ctx.arc(p.x, p.y, 6, 0, Math.PI * 2);
    ctx.fill();
    ctx.fillText("you", p.x, p.y + 18);
  }
}
