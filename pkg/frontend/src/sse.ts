/** Server-sent-events reader built on fetch + ReadableStream, so the same
 * code runs in the browser and under node for tests. */

export interface StreamEvent {
  kind: string;
  data: string;
}

/** Incremental SSE frame parser; feed it arbitrary chunk boundaries. */
export class SseParser {
  private buffer = "";

  push(chunk: string): StreamEvent[] {
    this.buffer += chunk;
    const events: StreamEvent[] = [];
    for (;;) {
      const cut = this.buffer.indexOf("\n\n");
      if (cut < 0) break;
      const frame = this.buffer.slice(0, cut);
      this.buffer = this.buffer.slice(cut + 2);
      let kind = "message";
      const data: string[] = [];
      for (const line of frame.split("\n")) {
        if (line.startsWith("event: ")) kind = line.slice(7);
        else if (line.startsWith("data: ")) data.push(line.slice(6));
        // lines starting with ":" are keepalive comments
      }
      if (data.length) events.push({ kind, data: data.join("\n") });
    }
    return events;
  }
}

export interface EventStream {
  stop(): void;
}

/** Subscribe to /events and hand every parsed event to the sink. */
export function openEventStream(
  base: string,
  sink: (ev: StreamEvent) => void,
  onError?: (err: unknown) => void,
  fetchFn: typeof fetch = fetch.bind(globalThis),
): EventStream {
  const controller = new AbortController();
  (async () => {
    try {
      const res = await fetchFn(`${base}/events`, {
        signal: controller.signal,
      });
      if (!res.ok || res.body === null) {
        throw new Error(`event stream failed: ${res.status}`);
      }
      const reader = res.body.getReader();
      const decoder = new TextDecoder();
      const parser = new SseParser();
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        for (const ev of parser.push(decoder.decode(value, { stream: true }))) {
          sink(ev);
        }
      }
    } catch (err) {
      if (!controller.signal.aborted && onError) onError(err);
    }
  })();
  return { stop: () => controller.abort() };
}
