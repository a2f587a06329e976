// Live event stream: SSE subscription with automatic reconnect and a
// backfill hook so no update is lost across a dropped connection.

export interface StreamEvent {
  type: "position" | "alert" | "command";
  imei?: number;
  label?: string;
  timestamp_ms?: number;
  lat?: number;
  lon?: number;
  speed_kmh?: number;
  heading?: number;
  event?: string;
  seq?: number;
  ignition?: boolean;
  id?: number;
  status?: string;
  text?: string;
  reply?: string | null;
}

type EventSourceFactory = (url: string) => EventSource;

export interface LiveStreamOptions {
  url: string;
  onEvent: (event: StreamEvent) => void;
  // called after every (re)connect; fetches the gap from /api/vehicles
  backfill: () => Promise<void> | void;
  onStatus?: (connected: boolean) => void;
  reconnectDelayMs?: number;
  factory?: EventSourceFactory;
}

export class LiveStream {
  private source: EventSource | null = null;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;
  reconnects = 0;

  constructor(private readonly opts: LiveStreamOptions) {}

  start(): void {
    this.closed = false;
    this.connect(true);
  }

  private connect(first: boolean): void {
    if (this.closed) {
      return;
    }
    const factory =
      this.opts.factory ?? ((url: string) => new EventSource(url));
    const source = factory(this.opts.url);
    this.source = source;
    source.onopen = () => {
      if (!first) {
        this.reconnects += 1;
      }
      this.opts.onStatus?.(true);
      // reconcile whatever happened while we were away (or before we
      // joined): the full snapshot is authoritative
      void this.opts.backfill();
    };
    source.onmessage = (msg: MessageEvent<string>) => {
      try {
        this.opts.onEvent(JSON.parse(msg.data) as StreamEvent);
      } catch {
        // tolerate keepalives / partial lines
      }
    };
    source.onerror = () => {
      this.opts.onStatus?.(false);
      source.close();
      if (this.closed) {
        return;
      }
      this.timer = setTimeout(
        () => this.connect(false),
        this.opts.reconnectDelayMs ?? 1000,
      );
    };
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
    }
    this.source?.close();
  }
}
