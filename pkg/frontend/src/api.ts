import type {
  InjectableEvent,
  Placements,
  Posture,
  Queues,
  ScenarioInfo,
  Topology,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client over the control API; the fetch implementation is
 * injectable so tests never touch the network. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (typeof body?.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  topology(): Promise<Topology> {
    return this.request("/api/topology");
  }

  queues(): Promise<Queues> {
    return this.request("/api/queues");
  }

  placements(): Promise<Placements> {
    return this.request("/api/placements");
  }

  scenario(): Promise<ScenarioInfo> {
    return this.request("/api/scenario");
  }

  requestPipeline(pipeline: string): Promise<{ pipeline: string; assignments: Record<string, string> }> {
    return this.post("/api/pipelines", { pipeline });
  }

  injectEvent(event: InjectableEvent): Promise<{ applied: string }> {
    return this.post("/api/events", event);
  }

  setPosture(level: Posture, node?: string): Promise<{ level: Posture; node: string | null }> {
    return this.post("/api/posture", node ? { level, node } : { level });
  }
}
