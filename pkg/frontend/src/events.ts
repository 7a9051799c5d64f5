// Server-sent event consumer built on fetch streaming, so the same code
// runs in the browser and under the node test runner. Reconnects with
// backoff and hands each event to the subscriber exactly once (the
// agent's event ids are monotonic).

import type { WalletEvent } from "./api.js";

export interface EventStreamOptions {
  onEvent: (event: WalletEvent) => void;
  onStatus?: (connected: boolean) => void;
  signal?: AbortSignal;
  after?: number;
}

export async function streamEvents(base: string, options: EventStreamOptions): Promise<void> {
  let after = options.after ?? 0;
  let backoff = 500;
  const url = (a: number) => `${base.replace(/\/$/, "")}/events?after=${a}`;

  while (!options.signal?.aborted) {
    try {
      const response = await fetch(url(after), {
        headers: { Accept: "text/event-stream" },
        signal: options.signal,
      });
      if (!response.ok || !response.body) throw new Error(`events endpoint ${response.status}`);
      options.onStatus?.(true);
      backoff = 500;

      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        let index;
        while ((index = buffer.indexOf("\n")) >= 0) {
          const line = buffer.slice(0, index).trimEnd();
          buffer = buffer.slice(index + 1);
          if (!line.startsWith("data: ")) continue;
          const event = JSON.parse(line.slice(6)) as WalletEvent;
          if (event.id > after) {
            after = event.id;
            options.onEvent(event);
          }
        }
      }
    } catch (err) {
      if (options.signal?.aborted) return;
    }
    options.onStatus?.(false);
    await new Promise((resolve) => setTimeout(resolve, backoff));
    backoff = Math.min(backoff * 2, 5000);
  }
}
