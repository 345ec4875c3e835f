/**
 * HTTP client for the decode service.
 *
 * Every tap becomes one POST; requests for a session are strictly
 * serialized through an ordered queue, so responses apply in tap order.
 * Network failures keep the tap at the head of the queue and retry with
 * backoff; the queue never reorders or drops taps.
 */

export interface DecodeResponse {
  text: string;
  provenance: string[];
  wpm: number;
  latency_ms: number;
}

export interface HeatmapPayload {
  w: number;
  h: number;
  step: number;
  chars: string[][];
}

export interface TapPoint {
  x: number;
  y: number;
  t_ms: number;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ApiClientOptions {
  fetchFn?: FetchLike;
  retryDelayMs?: number;
  maxRetryDelayMs?: number;
  onConnectionChange?: (online: boolean) => void;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function expectJson(resp: Response): Promise<unknown> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: string };
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return resp.json();
}

export class ApiClient {
  private readonly fetchFn: FetchLike;
  private readonly retryDelayMs: number;
  private readonly maxRetryDelayMs: number;
  private readonly onConnectionChange?: (online: boolean) => void;
  private online = true;

  constructor(readonly baseUrl: string, options: ApiClientOptions = {}) {
    this.fetchFn = options.fetchFn ?? ((url, init) => fetch(url, init));
    this.retryDelayMs = options.retryDelayMs ?? 250;
    this.maxRetryDelayMs = options.maxRetryDelayMs ?? 4000;
    this.onConnectionChange = options.onConnectionChange;
  }

  private setOnline(online: boolean) {
    if (online !== this.online) {
      this.online = online;
      this.onConnectionChange?.(online);
    }
  }

  get isOnline(): boolean {
    return this.online;
  }

  /** Run one request with unbounded ordered retries on network failure. */
  private async withRetry<T>(run: () => Promise<T>): Promise<T> {
    let delay = this.retryDelayMs;
    for (;;) {
      try {
        const out = await run();
        this.setOnline(true);
        return out;
      } catch (err) {
        if (err instanceof ApiError) {
          this.setOnline(true);
          throw err; // the server answered; do not retry protocol errors
        }
        this.setOnline(false);
        await new Promise((r) => setTimeout(r, delay));
        delay = Math.min(delay * 2, this.maxRetryDelayMs);
      }
    }
  }

  async uiConfig(): Promise<{ api_base: string }> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/uiconfig`);
    return (await expectJson(resp)) as { api_base: string };
  }

  async createSession(screenW: number, screenH: number): Promise<string> {
    const body = await this.withRetry(async () =>
      expectJson(
        await this.fetchFn(`${this.baseUrl}/v1/session`, {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify({ screen_w: screenW, screen_h: screenH }),
        }),
      ),
    );
    return (body as { session_id: string }).session_id;
  }

  async pushPoint(sessionId: string, point: TapPoint): Promise<DecodeResponse> {
    return (await this.withRetry(async () =>
      expectJson(
        await this.fetchFn(`${this.baseUrl}/v1/session/${sessionId}/point`, {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify(point),
        }),
      ),
    )) as DecodeResponse;
  }

  async popPoint(sessionId: string): Promise<DecodeResponse> {
    return (await this.withRetry(async () =>
      expectJson(
        await this.fetchFn(`${this.baseUrl}/v1/session/${sessionId}/point`, {
          method: "DELETE",
        }),
      ),
    )) as DecodeResponse;
  }

  async heatmap(sessionId: string, step: number): Promise<HeatmapPayload> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/session/${sessionId}/heatmap?step=${step}`);
    return (await expectJson(resp)) as HeatmapPayload;
  }
}

type QueueItem =
  | { kind: "push"; point: TapPoint }
  | { kind: "pop" };

/**
 * Strictly ordered tap pipeline: one in-flight request at a time, FIFO,
 * taps queued while offline are flushed in order on reconnect.
 */
export class TapQueue {
  private queue: QueueItem[] = [];
  private running = false;

  constructor(
    private readonly client: ApiClient,
    private readonly sessionId: string,
    private readonly onResponse: (resp: DecodeResponse) => void,
    private readonly onError?: (err: unknown) => void,
  ) {}

  get pending(): number {
    return this.queue.length + (this.running ? 1 : 0);
  }

  pushTap(point: TapPoint) {
    this.queue.push({ kind: "push", point });
    void this.drain();
  }

  popTap() {
    this.queue.push({ kind: "pop" });
    void this.drain();
  }

  /** Resolves when everything queued so far has been acknowledged. */
  async flush(): Promise<void> {
    while (this.pending > 0) {
      await new Promise((r) => setTimeout(r, 10));
    }
  }

  private async drain(): Promise<void> {
    if (this.running) return;
    this.running = true;
    try {
      while (this.queue.length > 0) {
        const item = this.queue[0];
        try {
          const resp =
            item.kind === "push"
              ? await this.client.pushPoint(this.sessionId, item.point)
              : await this.client.popPoint(this.sessionId);
          this.queue.shift();
          this.onResponse(resp);
        } catch (err) {
          // ApiError: the server rejected this tap (e.g. pop on empty);
          // drop it and surface the error, order is preserved for the rest
          this.queue.shift();
          this.onError?.(err);
        }
      }
    } finally {
      this.running = false;
    }
    if (this.queue.length > 0) void this.drain();
  }
}
