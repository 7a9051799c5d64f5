// Wallet entry point: wires the store, the event stream, and the forms.

import { HolderApi } from "./api.js";
import { streamEvents } from "./events.js";
import { WalletStore } from "./state.js";
import {
  h,
  renderAuditPanel,
  renderConnections,
  renderDecision,
  renderDocuments,
  renderWallet,
} from "./views.js";

const agentBase = new URLSearchParams(location.search).get("agent") ?? location.origin;
const api = new HolderApi(agentBase);
const store = new WalletStore(api);

function byId(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
}

function render(): void {
  const state = store.state;
  byId("status").textContent = state.connected ? "live" : "reconnecting…";
  byId("status").className = state.connected ? "live" : "stale";

  const decisions = byId("decisions");
  decisions.replaceChildren(
    ...(state.decisions.length
      ? state.decisions.map((d) => renderDecision(d, state))
      : [h("p", { class: "empty" }, ["nothing waiting for your approval"])]),
  );
  byId("connections").replaceChildren(renderConnections(state));
  byId("wallet").replaceChildren(renderWallet(state));
  byId("documents").replaceChildren(renderDocuments(state));
  byId("audit").replaceChildren(renderAuditPanel(state));
  byId("notices").replaceChildren(...state.notices.map((n) => h("p", { class: "notice" }, [n])));
}

async function handleDecisionClick(event: Event): Promise<void> {
  const button = event.target as HTMLElement;
  const action = button.dataset["action"];
  if (!action) return;
  const card = button.closest("[data-decision]") as HTMLElement | null;
  if (!card) return;
  const decisionId = card.dataset["decision"]!;
  const approve = action === "approve";
  const selection: Record<string, unknown> = {};
  if (card.classList.contains("auditor") && approve) {
    selection["seq_nos"] = [...card.querySelectorAll<HTMLInputElement>("input[data-seq]")]
      .filter((input) => input.checked)
      .map((input) => Number(input.dataset["seq"]));
  }
  try {
    await api.resolveDecision(decisionId, approve, selection);
  } catch (err) {
    store.notice(String(err));
  }
  store.patch({ decisions: await api.decisions() });
}

async function handleDocumentClick(event: Event): Promise<void> {
  const button = event.target as HTMLElement;
  const key = button.dataset["key"];
  if (!key) return;
  if (button.dataset["action"] === "share") {
    const { url } = await api.shareDocument("claims", key);
    await navigator.clipboard?.writeText(url).catch(() => undefined);
    store.notice(`share URL copied: ${url.slice(0, 60)}…`);
  } else if (button.dataset["action"] === "delete") {
    const report = await api.deleteDocument("claims", key);
    store.patch({
      lastDeletion: { confirmed: report.confirmed, expected: report.expected, partial: report.partial },
      documents: (await api.listDocuments()).keys,
    });
  }
}

async function bootstrap(): Promise<void> {
  store.subscribe(render);
  byId("decisions").addEventListener("click", handleDecisionClick);
  byId("documents").addEventListener("click", handleDocumentClick);

  byId("accept-form").addEventListener("submit", async (event) => {
    event.preventDefault();
    const input = byId("invitation-url") as HTMLInputElement;
    try {
      await api.acceptInvitation(input.value.trim());
      input.value = "";
    } catch (err) {
      store.notice(`invitation failed: ${String(err)}`);
      return;
    }
    store.patch({ connections: await api.connections() });
  });

  byId("invite-button").addEventListener("click", async () => {
    const { url, qr_png_b64 } = await api.createInvitation();
    (byId("my-invitation-url") as HTMLInputElement).value = url;
    (byId("my-invitation-qr") as HTMLImageElement).src = `data:image/png;base64,${qr_png_b64}`;
  });

  byId("upload-form").addEventListener("submit", async (event) => {
    event.preventDefault();
    const picker = byId("file-input") as HTMLInputElement;
    const file = picker.files?.[0];
    if (!file) return;
    const bytes = new Uint8Array(await file.arrayBuffer());
    const result = await api.uploadDocument(file.name, bytes);
    store.notice(`uploaded ${result.key} (${result.size} bytes, sha256 ${result.checksum.slice(0, 12)}…)`);
    store.patch({ documents: (await api.listDocuments()).keys });
  });

  await store.refreshAll();
  void streamEvents(agentBase, {
    onEvent: (event) => void store.onEvent(event),
    onStatus: (connected) => store.patch({ connected }),
  });
}

void bootstrap();
