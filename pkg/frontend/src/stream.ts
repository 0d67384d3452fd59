import type { LogRecord } from "./types.js";

export interface FeedHandlers {
  onRecord: (record: LogRecord) => void;
  onEnd?: () => void;
  onError?: (err: unknown) => void;
}

interface EventSourceLike {
  addEventListener(type: string, listener: (ev: MessageEvent) => void): void;
  close(): void;
  onmessage: ((ev: MessageEvent) => void) | null;
  onerror: ((ev: Event) => void) | null;
}

type EventSourceFactory = (url: string) => EventSourceLike;

/** Live event feed over /api/stream. The EventSource constructor is
 * injectable so tests can drive the feed synchronously. */
export class EventFeed {
  private source: EventSourceLike | null = null;

  constructor(
    private readonly url: string = "/api/stream",
    private readonly makeSource: EventSourceFactory = (u) => new EventSource(u),
  ) {}

  start(handlers: FeedHandlers): void {
    if (this.source) return;
    const src = this.makeSource(this.url);
    this.source = src;
    src.onmessage = (ev) => {
      try {
        handlers.onRecord(JSON.parse(ev.data) as LogRecord);
      } catch (err) {
        handlers.onError?.(err);
      }
    };
    src.addEventListener("end", () => {
      handlers.onEnd?.();
      this.stop();
    });
    src.onerror = (err) => {
      handlers.onError?.(err);
    };
  }

  stop(): void {
    this.source?.close();
    this.source = null;
  }
}
