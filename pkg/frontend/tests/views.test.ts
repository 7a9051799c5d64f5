// @vitest-environment jsdom
// Rendering tests: the DOM must show exactly what an approval would do.

import { describe, expect, it } from "vitest";
import type { CredentialView, PendingDecision } from "../src/api.js";
import {
  renderAuditorRequest,
  renderConnections,
  renderDeletionBanner,
  renderDisclosurePicker,
  renderOfferCard,
} from "../src/views.js";
import type { WalletState } from "../src/state.js";

const baseState: WalletState = {
  connected: true,
  connections: [],
  credentials: [],
  decisions: [],
  documents: [],
  audit: [],
  lastDeletion: null,
  notices: [],
};

const credential: CredentialView = {
  cred_id: "c1",
  cred_def_id: "def1",
  subject_did: "did:key:abc",
  attributes: [
    { name: "name", value: "Alice Doe", salt: "x" },
    { name: "policy_no", value: "POL-1", salt: "y" },
    { name: "valid_until", value: "2030-01-01", salt: "z" },
  ],
  commitment_vector: ["aa", "bb", "cc"],
  issuance_date: 0,
};

function decision(kind: PendingDecision["kind"], details: Record<string, unknown>): PendingDecision {
  return { decision_id: "d1", kind, thread_id: "t1", details, created_at: 0 };
}

describe("offer card", () => {
  it("shows the issuer and the claims preview with approve/reject", () => {
    const card = renderOfferCard(
      decision("OFFER", { issuer_label: "insurer", preview: { policy_no: "POL-1" } }),
    );
    expect(card.querySelector("h3")!.textContent).toContain("insurer");
    expect(card.querySelector(".preview")!.textContent).toContain("policy_no: POL-1");
    expect(card.querySelector("button.approve")).toBeTruthy();
    expect(card.querySelector("button.reject")).toBeTruthy();
  });
});

describe("disclosure picker", () => {
  it("lists one revealable attribute and the rest hidden as digests", () => {
    const picker = renderDisclosurePicker(
      decision("PRESENT_REQUEST", { verifier_label: "hospital", requested: ["policy_no"] }),
      [credential],
    );
    const revealed = [...picker.querySelectorAll(".reveal li")].map((li) => li.textContent);
    expect(revealed).toEqual(["policy_no: POL-1"]);
    const hidden = [...picker.querySelectorAll(".hidden li")].map(
      (li) => (li as HTMLElement).dataset["attr"],
    );
    expect(hidden.sort()).toEqual(["name", "valid_until"]);
    expect(picker.textContent).toContain("hidden as digest");
    expect(picker.textContent).not.toContain("Alice Doe");
    expect(picker.textContent).not.toContain("2030-01-01");
  });

  it("warns when the wallet cannot satisfy the request", () => {
    const picker = renderDisclosurePicker(
      decision("PRESENT_REQUEST", { requested: ["blood_type"] }),
      [credential],
    );
    expect(picker.querySelector(".unsatisfiable")!.textContent).toContain("blood_type");
  });
});

describe("auditor request", () => {
  it("pre-checks the requested entries and allows narrowing", () => {
    const card = renderAuditorRequest(
      decision("AUDITOR_REQUEST", { auditor_label: "auditor", seq_nos: [2, 3] }),
      {
        ...baseState,
        audit: [1, 2, 3, 4, 5].map((seq) => ({
          seq_no: seq,
          operation: "PRESENTATION_SENT",
          credential_type: `c${seq}`,
          user_did: "u",
          counterparty_did: "v",
          timestamp: 0,
        })),
      },
    );
    const boxes = [...card.querySelectorAll<HTMLInputElement>("input[data-seq]")];
    expect(boxes.length).toBe(5);
    expect(boxes.filter((b) => b.hasAttribute("checked")).map((b) => b.dataset["seq"])).toEqual(
      ["2", "3"],
    );
  });
});

describe("deletion banner", () => {
  it("renders n/n confirmed", () => {
    const banner = renderDeletionBanner({ confirmed: 4, expected: 4, partial: false });
    expect(banner.textContent).toBe("4/4 nodes confirmed deletion");
    expect(banner.className).toBe("banner ok");
  });

  it("flags partial deletions with the GC note", () => {
    const banner = renderDeletionBanner({ confirmed: 3, expected: 4, partial: true });
    expect(banner.textContent).toContain("3/4 nodes confirmed deletion");
    expect(banner.textContent).toContain("garbage collection will finish");
    expect(banner.className).toBe("banner partial");
  });
});

describe("connection cards", () => {
  it("reflects handshake state", () => {
    const view = renderConnections({
      ...baseState,
      connections: [
        {
          connection_id: "c",
          role: "requester",
          state: "COMPLETE",
          my_did: "did:key:me",
          their_did: "did:key:them",
          their_label: "insurer",
          their_endpoint: "http://issuer",
        },
      ],
    });
    const card = view.querySelector(".connection")!;
    expect(card.className).toContain("state-complete");
    expect(card.textContent).toContain("insurer");
    expect(card.textContent).toContain("COMPLETE");
  });
});
