import type {
  ActResult,
  AlertEntry,
  DecoyEntry,
  EventsBody,
  PendingDetail,
  PendingEntry,
  StatusBody,
} from "./types.js";

/** Error carrying the daemon's machine-readable error name ("StaleBase",
 * "AlreadyResolved", "NotFound", ...) plus the HTTP status. Network-level
 * failures surface as status 0 / error "Network". */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly error: string,
    readonly detail: string = "",
  ) {
    super(detail ? `${error}: ${detail}` : error);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base: string = "",
    private token: string = "",
    // injectable for tests; bind keeps node's fetch happy without a window
    private fetchFn: FetchLike = (...a) => fetch(...a),
  ) {}

  setToken(token: string): void {
    this.token = token;
  }

  private async request<T>(method: string, path: string): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    let res: Response;
    try {
      res = await this.fetchFn(this.base + path, { method, headers });
    } catch (e) {
      throw new ApiError(0, "Network", String(e));
    }
    let body: unknown = null;
    try {
      body = await res.json();
    } catch {
      // non-JSON body: fall through with the status alone
    }
    if (!res.ok) {
      const b = (body ?? {}) as { error?: string; detail?: string };
      throw new ApiError(res.status, b.error ?? `HTTP ${res.status}`, b.detail ?? "");
    }
    return body as T;
  }

  status(): Promise<StatusBody> {
    return this.request("GET", "/v1/status");
  }

  async alerts(since = 0): Promise<AlertEntry[]> {
    const body = await this.request<{ alerts: AlertEntry[] }>(
      "GET",
      `/v1/alerts?since=${since}`,
    );
    return body.alerts;
  }

  async pending(minScore = 0): Promise<PendingEntry[]> {
    const q = minScore > 0 ? `?min_score=${minScore}` : "";
    const body = await this.request<{ pending: PendingEntry[] }>(
      "GET",
      `/v1/pending${q}`,
    );
    return body.pending;
  }

  pendingDetail(id: string): Promise<PendingDetail> {
    return this.request("GET", `/v1/pending/${id}`);
  }

  approve(id: string): Promise<ActResult> {
    return this.request("POST", `/v1/pending/${id}/approve`);
  }

  discard(id: string): Promise<ActResult> {
    return this.request("POST", `/v1/pending/${id}/discard`);
  }

  async decoys(): Promise<DecoyEntry[]> {
    const body = await this.request<{ decoys: DecoyEntry[] }>("GET", "/v1/decoys");
    return body.decoys;
  }

  /** Long-poll: blocks server-side up to timeoutS for the first event past
   * `since`. timeoutS=0 returns immediately (used to drain). */
  events(since: number, timeoutS = 25, limit = 500): Promise<EventsBody> {
    return this.request(
      "GET",
      `/v1/events?since=${since}&limit=${limit}&timeout=${timeoutS}`,
    );
  }
}
