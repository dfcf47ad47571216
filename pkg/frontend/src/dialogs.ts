// Disambiguation dialogs. Each offer becomes one dialog element with one
// button per candidate plus a dismiss button; answering sends exactly one
// message (resolve or reject) and removes the dialog, so a dialog can never
// produce two. Deltas that remove a proposal (resolution, expiry, or
// rejection elsewhere) auto-dismiss its dialog.

import { reject, resolve } from "./gestures.js";
import type { ClientMessage, Delta, NeedsDisambiguationMessage } from "./protocol.js";

export interface DialogHost {
  open(message: NeedsDisambiguationMessage): void;
  /** auto-dismiss dialogs whose proposal the delta removed */
  applyDelta(delta: Delta): void;
  openCount(): number;
  openIds(): string[];
}

export function createDialogHost(
  container: HTMLElement,
  send: (message: ClientMessage) => void,
  now: () => number,
): DialogHost {
  const open = new Map<string, HTMLElement>();

  function dismiss(proposalId: string): void {
    const element = open.get(proposalId);
    if (element) {
      element.remove();
      open.delete(proposalId);
    }
  }

  function answer(proposalId: string, message: ClientMessage): void {
    if (!open.has(proposalId)) return; // already dismissed; never double-send
    dismiss(proposalId);
    send(message);
  }

  return {
    open(message) {
      if (open.has(message.proposal_id)) return; // one dialog per proposal
      const dialog = container.ownerDocument.createElement("div");
      dialog.className = "dialog";
      dialog.dataset["proposalId"] = message.proposal_id;

      const prompt = container.ownerDocument.createElement("p");
      prompt.className = "dialog-prompt";
      prompt.textContent = message.prompt;
      dialog.appendChild(prompt);

      for (const candidate of message.candidates) {
        const button = container.ownerDocument.createElement("button");
        button.className = "dialog-candidate";
        button.dataset["relation"] = candidate;
        button.textContent = candidate;
        button.addEventListener("click", () =>
          answer(message.proposal_id, resolve(message.proposal_id, candidate, now())),
        );
        dialog.appendChild(button);
      }

      const dismissButton = container.ownerDocument.createElement("button");
      dismissButton.className = "dialog-dismiss";
      dismissButton.textContent = "dismiss";
      dismissButton.addEventListener("click", () =>
        answer(message.proposal_id, reject(message.proposal_id, now())),
      );
      dialog.appendChild(dismissButton);

      container.appendChild(dialog);
      open.set(message.proposal_id, dialog);
    },
    applyDelta(delta) {
      for (const id of delta.proposals?.removed ?? []) {
        dismiss(id);
      }
    },
    openCount: () => open.size,
    openIds: () => [...open.keys()].sort(),
  };
}
