// Desktop gesture → client message mapping. Every helper returns exactly
// one well-formed message; none of them set a seq (the server assigns it).
//
//   click on node            → pinch_select
//   drag across the node row → sweep
//   text submit              → voice
//   key held over a node     → grab
//   dragging the held node   → aim
//   key released             → release
//   dialog buttons           → confirm / reject / resolve

import type { ClientMessage } from "./protocol.js";

export function pinchSelect(nodeId: string, time: number): ClientMessage {
  return { event: { kind: "pinch_select", time, node_id: nodeId } };
}

export function pinchSelectAt(pixel: [number, number], time: number): ClientMessage {
  return { event: { kind: "pinch_select", time, pixel } };
}

export function sweep(direction: [number, number], time: number): ClientMessage {
  return { event: { kind: "sweep", time, direction } };
}

export function voice(utterance: string, time: number): ClientMessage {
  return { event: { kind: "voice", time, utterance } };
}

export function grab(nodeId: string, time: number): ClientMessage {
  return { event: { kind: "grab", time, node_id: nodeId } };
}

export function aim(heldId: string, targetId: string, time: number): ClientMessage {
  return { event: { kind: "aim", time, held_id: heldId, target_id: targetId } };
}

export function release(nodeId: string, time: number): ClientMessage {
  return { event: { kind: "release", time, node_id: nodeId } };
}

export function confirm(refId: string, time: number): ClientMessage {
  return { event: { kind: "confirm", time, ref_id: refId } };
}

export function reject(refId: string, time: number): ClientMessage {
  return { event: { kind: "reject", time, ref_id: refId } };
}

export function resolve(proposalId: string, relation: string, time: number): ClientMessage {
  return { event: { kind: "resolve", time, proposal_id: proposalId, relation } };
}

export function clearSelection(time: number): ClientMessage {
  return { event: { kind: "clear_selection", time } };
}

/** Drag vector → sweep direction, or null when the drag is too short to be
 * deliberate (pixels). */
export function dragToSweep(
  dx: number,
  dy: number,
  time: number,
  minPx = 24,
): ClientMessage | null {
  if (Math.hypot(dx, dy) < minPx) return null;
  const norm = Math.hypot(dx, dy);
  return sweep([dx / norm, dy / norm], time);
}
