// DOM rendering. Pure functions from state to elements so the jsdom
// tests can assert on exactly what the user would see.

import { CredentialView, PendingDecision } from "./api.js";
import { WalletState } from "./state.js";

export function h(
  tag: string,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElement {
  const el = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) el.setAttribute(key, value);
  for (const child of children) el.append(child);
  return el;
}

export function renderConnections(state: WalletState): HTMLElement {
  const list = h("div", { class: "connections" });
  for (const conn of state.connections) {
    list.append(
      h("div", { class: `card connection state-${conn.state.toLowerCase()}` }, [
        h("strong", {}, [conn.their_label || "(unnamed peer)"]),
        h("span", { class: "state" }, [conn.state]),
        h("code", { class: "did" }, [conn.their_did ?? "…"]),
      ]),
    );
  }
  if (!state.connections.length) list.append(h("p", { class: "empty" }, ["no connections yet"]));
  return list;
}

export function renderWallet(state: WalletState): HTMLElement {
  const list = h("div", { class: "wallet" });
  for (const cred of state.credentials) {
    list.append(
      h("div", { class: "card credential" }, [
        h("strong", {}, [cred.cred_id.slice(0, 8)]),
        h("ul", {}, cred.attributes.map((a) => h("li", {}, [`${a.name}: ${a.value}`]))),
      ]),
    );
  }
  if (!state.credentials.length) list.append(h("p", { class: "empty" }, ["wallet is empty"]));
  return list;
}

export function renderOfferCard(decision: PendingDecision): HTMLElement {
  const details = decision.details as { issuer_label?: string; preview?: Record<string, string> };
  const preview = details.preview ?? {};
  return h("div", { class: "card decision offer", "data-decision": decision.decision_id }, [
    h("h3", {}, [`Credential offer from ${details.issuer_label ?? "issuer"}`]),
    h(
      "ul",
      { class: "preview" },
      Object.entries(preview).map(([name, value]) => h("li", {}, [`${name}: ${value}`])),
    ),
    h("button", { class: "approve", "data-action": "approve" }, ["Accept offer"]),
    h("button", { class: "reject", "data-action": "reject" }, ["Reject"]),
  ]);
}

// The picker shows exactly what a confirmation will disclose: requested
// attributes with their values, and every other attribute of the chosen
// credentials explicitly marked as staying hidden (digest only).
export function renderDisclosurePicker(
  decision: PendingDecision,
  credentials: CredentialView[],
): HTMLElement {
  const details = decision.details as { verifier_label?: string; requested?: string[] };
  const requested = details.requested ?? [];
  const revealable = new Map<string, string>();
  const hidden: string[] = [];
  for (const cred of credentials) {
    for (const attr of cred.attributes) {
      if (requested.includes(attr.name)) {
        if (!revealable.has(attr.name)) revealable.set(attr.name, attr.value);
      } else if (!hidden.includes(attr.name)) {
        hidden.push(attr.name);
      }
    }
  }
  const missing = requested.filter((name) => !revealable.has(name));
  const card = h("div", { class: "card decision present", "data-decision": decision.decision_id }, [
    h("h3", {}, [`Presentation request from ${details.verifier_label ?? "verifier"}`]),
    h("p", {}, ["Will reveal:"]),
    h(
      "ul",
      { class: "reveal" },
      [...revealable.entries()].map(([name, value]) =>
        h("li", { "data-attr": name }, [`${name}: ${value}`]),
      ),
    ),
    h("p", {}, ["Stays hidden (digest only):"]),
    h(
      "ul",
      { class: "hidden" },
      hidden.map((name) => h("li", { "data-attr": name }, [`${name} — hidden as digest`])),
    ),
  ]);
  if (missing.length) {
    card.append(
      h("p", { class: "unsatisfiable" }, [
        `No credential covers: ${missing.join(", ")}. Confirming will decline the request.`,
      ]),
    );
  }
  card.append(
    h("button", { class: "approve", "data-action": "approve" }, ["Present exactly this"]),
    h("button", { class: "reject", "data-action": "reject" }, ["Cancel"]),
  );
  return card;
}

export function renderAuditorRequest(decision: PendingDecision, state: WalletState): HTMLElement {
  const details = decision.details as { auditor_label?: string; seq_nos?: number[] };
  const wanted = new Set(details.seq_nos ?? []);
  return h("div", { class: "card decision auditor", "data-decision": decision.decision_id }, [
    h("h3", {}, [`Audit access request from ${details.auditor_label ?? "auditor"}`]),
    h(
      "ul",
      { class: "entries" },
      state.audit.map((entry) =>
        h("li", {}, [
          h("input", {
            type: "checkbox",
            "data-seq": String(entry.seq_no),
            ...(wanted.has(entry.seq_no) ? { checked: "checked" } : {}),
          }),
          `#${entry.seq_no} ${entry.operation} (${entry.credential_type})`,
        ]),
      ),
    ),
    h("button", { class: "approve", "data-action": "approve" }, ["Release selected"]),
    h("button", { class: "reject", "data-action": "reject" }, ["Deny"]),
  ]);
}

export function renderDecision(decision: PendingDecision, state: WalletState): HTMLElement {
  switch (decision.kind) {
    case "OFFER":
      return renderOfferCard(decision);
    case "PRESENT_REQUEST":
      return renderDisclosurePicker(decision, state.credentials);
    case "AUDITOR_REQUEST":
      return renderAuditorRequest(decision, state);
  }
}

export function renderDeletionBanner(report: {
  confirmed: number;
  expected: number;
  partial: boolean;
}): HTMLElement {
  const text = `${report.confirmed}/${report.expected} nodes confirmed deletion`;
  const note = report.partial ? " — some nodes unreachable, garbage collection will finish" : "";
  return h("div", { class: report.partial ? "banner partial" : "banner ok" }, [text + note]);
}

export function renderDocuments(state: WalletState): HTMLElement {
  const section = h("div", { class: "documents" });
  for (const key of state.documents) {
    section.append(
      h("div", { class: "card document", "data-key": key }, [
        h("span", {}, [key]),
        h("button", { "data-action": "share", "data-key": key }, ["Share"]),
        h("button", { "data-action": "delete", "data-key": key }, ["Delete"]),
      ]),
    );
  }
  if (state.lastDeletion) section.append(renderDeletionBanner(state.lastDeletion));
  return section;
}

export function renderAuditPanel(state: WalletState): HTMLElement {
  const panel = h("div", { class: "audit" });
  panel.append(
    h(
      "ul",
      {},
      state.audit.map((entry) =>
        h("li", { "data-seq": String(entry.seq_no) }, [
          `#${entry.seq_no} ${entry.operation} — ${entry.credential_type} — ${new Date(
            entry.timestamp,
          ).toISOString()}`,
        ]),
      ),
    ),
  );
  if (!state.audit.length) panel.append(h("p", { class: "empty" }, ["no audit entries"]));
  return panel;
}
