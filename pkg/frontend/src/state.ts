// Wallet store: authoritative state comes from the GET endpoints; the
// event stream only tells us when to refresh, so a reload always
// reconstructs exactly what the agent knows.

import {
  AuditEntryView,
  ConnectionView,
  CredentialView,
  HolderApi,
  PendingDecision,
  WalletEvent,
} from "./api.js";

export interface WalletState {
  connected: boolean;
  connections: ConnectionView[];
  credentials: CredentialView[];
  decisions: PendingDecision[];
  documents: string[];
  audit: AuditEntryView[];
  lastDeletion: { confirmed: number; expected: number; partial: boolean } | null;
  notices: string[];
}

type Listener = (state: WalletState) => void;

export class WalletStore {
  state: WalletState = {
    connected: false,
    connections: [],
    credentials: [],
    decisions: [],
    documents: [],
    audit: [],
    lastDeletion: null,
    notices: [],
  };

  private listeners: Listener[] = [];

  constructor(readonly api: HolderApi) {}

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
    listener(this.state);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  patch(partial: Partial<WalletState>): void {
    this.state = { ...this.state, ...partial };
    this.emit();
  }

  notice(text: string): void {
    this.patch({ notices: [...this.state.notices.slice(-4), text] });
  }

  async refreshAll(): Promise<void> {
    const [connections, credentials, decisions, documents, audit] = await Promise.all([
      this.api.connections(),
      this.api.credentials(),
      this.api.decisions(),
      this.api.listDocuments().catch(() => ({ bucket: "claims", keys: [] as string[] })),
      this.api.audit().catch(() => [] as AuditEntryView[]),
    ]);
    this.patch({ connections, credentials, decisions, documents: documents.keys, audit });
  }

  // Event-driven incremental refresh: each event type maps to the GET
  // endpoints that own that slice of state.
  async onEvent(event: WalletEvent): Promise<void> {
    switch (event.event) {
      case "connection":
        this.patch({ connections: await this.api.connections() });
        break;
      case "decision":
        this.patch({ decisions: await this.api.decisions() });
        break;
      case "credential":
        this.patch({ credentials: await this.api.credentials() });
        break;
      case "document": {
        const docs = await this.api.listDocuments().catch(() => ({ keys: [] as string[] }));
        this.patch({ documents: docs.keys });
        break;
      }
      case "audit":
        this.patch({ audit: await this.api.audit().catch(() => this.state.audit) });
        break;
      case "protocol": {
        const state = event.data["state"];
        if (state === "DONE" || state === "ABANDONED") {
          this.patch({
            decisions: await this.api.decisions(),
            credentials: await this.api.credentials(),
          });
          if (event.data["reason"]) {
            this.notice(`thread ${event.data["thread_id"]}: ${state} (${event.data["reason"]})`);
          }
        }
        break;
      }
      default:
        break;
    }
  }
}
