// Typed client for the holder agent's admin API. The wallet talks only
// to this agent; all signing and decryption stay on the agent side.

export interface ConnectionView {
  connection_id: string;
  role: string;
  state: string;
  my_did: string;
  their_did: string | null;
  their_label: string;
  their_endpoint: string | null;
}

export interface PendingDecision {
  decision_id: string;
  kind: "OFFER" | "PRESENT_REQUEST" | "AUDITOR_REQUEST";
  thread_id: string;
  details: Record<string, unknown>;
  created_at: number;
}

export interface CredentialView {
  cred_id: string;
  cred_def_id: string;
  subject_did: string;
  attributes: { name: string; value: string; salt: string }[];
  commitment_vector: string[];
  issuance_date: number;
}

export interface AuditEntryView {
  seq_no: number;
  operation: string;
  credential_type: string;
  user_did: string;
  counterparty_did: string;
  timestamp: number;
}

export interface InvitationResponse {
  invitation: Record<string, string>;
  url: string;
  qr_png_b64: string;
}

export interface DeleteReport {
  receipts: { node_id: string; shard_id: string; status: string }[];
  confirmed: number;
  expected: number;
  partial: boolean;
  unreachable: string[];
}

export interface ProtocolRecord {
  thread_id: string;
  protocol: string;
  role: string;
  state: string;
  reason?: string;
  result?: { granted: boolean; reason: string };
  [key: string]: unknown;
}

export class ApiError extends Error {
  constructor(readonly status: number, readonly kind: string, detail: string) {
    super(`${kind}: ${detail}`);
  }
}

async function parse<T>(response: Response): Promise<T> {
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    throw new ApiError(response.status, body.error ?? "HttpError", body.detail ?? response.statusText);
  }
  return body as T;
}

export class HolderApi {
  constructor(readonly base: string) {}

  private url(path: string): string {
    return this.base.replace(/\/$/, "") + path;
  }

  private async get<T>(path: string): Promise<T> {
    return parse<T>(await fetch(this.url(path)));
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    return parse<T>(
      await fetch(this.url(path), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
  }

  health() {
    return this.get<{ ok: boolean; role: string }>("/health");
  }

  createInvitation() {
    return this.post<InvitationResponse>("/invitations", {});
  }

  acceptInvitation(url: string, timeout = 15) {
    return this.post<ConnectionView>("/connections/accept", { url, timeout });
  }

  connections() {
    return this.get<ConnectionView[]>("/connections");
  }

  credentials() {
    return this.get<CredentialView[]>("/credentials");
  }

  decisions() {
    return this.get<PendingDecision[]>("/decisions");
  }

  resolveDecision(decisionId: string, approve: boolean, selection?: Record<string, unknown>) {
    return this.post<Record<string, unknown>>(`/decisions/${decisionId}`, { approve, selection });
  }

  record(threadId: string) {
    return this.get<ProtocolRecord>(`/records/${threadId}`);
  }

  records() {
    return this.get<{ issue: ProtocolRecord[]; present: ProtocolRecord[] }>("/records");
  }

  audit() {
    return this.get<AuditEntryView[]>("/audit");
  }

  propose(body: {
    connection_id: string;
    claims: Record<string, string>;
    credential_type: string;
    document_url: string;
    document_checksum: string;
    document_content_type: string;
  }) {
    return this.post<{ thread_id: string }>("/issue/propose", body);
  }

  // Document bodies travel length-prefixed: u32le header length, the
  // JSON header, then the raw payload bytes.
  async uploadDocument(key: string, payload: Uint8Array, bucket = "claims") {
    const header = new TextEncoder().encode(JSON.stringify({ bucket, key }));
    const frame = new Uint8Array(4 + header.length + payload.length);
    new DataView(frame.buffer).setUint32(0, header.length, true);
    frame.set(header, 4);
    frame.set(payload, 4 + header.length);
    const response = await fetch(this.url("/documents"), {
      method: "POST",
      headers: { "Content-Type": "application/octet-stream" },
      body: frame,
    });
    return parse<{ bucket: string; key: string; size: number; checksum: string }>(response);
  }

  listDocuments(bucket = "claims") {
    return this.get<{ bucket: string; keys: string[] }>(`/documents?bucket=${bucket}`);
  }

  shareDocument(bucket: string, key: string, notAfter: number | null = null) {
    return this.post<{ url: string }>("/documents/share", { bucket, key, not_after: notAfter });
  }

  deleteDocument(bucket: string, key: string) {
    return this.post<DeleteReport>("/documents/delete", { bucket, key });
  }

  releaseAudit(connectionId: string, seqNos: number[]) {
    return this.post<{ granted: boolean }>("/audit/release", {
      connection_id: connectionId,
      seq_nos: seqNos,
    });
  }

  pollEvents(after: number, timeout = 0) {
    return this.get<WalletEvent[]>(`/events/poll?after=${after}&timeout=${timeout}`);
  }
}

export interface WalletEvent {
  id: number;
  event: string;
  data: Record<string, unknown>;
  ts: number;
}
