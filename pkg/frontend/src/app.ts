// Controller: owns the ApiClient, the poll loop, and DOM event wiring.
// All state transitions go through the pure functions in model.ts; every
// transition is followed by one render.

import { ApiClient, ApiError } from "./api.js";
import {
  actFailed,
  actOk,
  applyEvents,
  applyStatus,
  backoffMs,
  beginAct,
  closeDetail,
  connLost,
  connOk,
  detailGone,
  detailLoaded,
  detailLoading,
  initialState,
  mergeAlerts,
  setDecoys,
  setFilter,
  setPending,
} from "./model.js";
import type { ActionKind, AppState, DetailView } from "./model.js";
import { mountSkeleton, render } from "./render.js";

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

function detailIsFor(d: DetailView | null, id: string): boolean {
  if (!d) return false;
  return d.state === "open" ? d.detail.id === id : d.id === id;
}

export type DashboardOpts = {
  pollTimeoutS?: number; // long-poll hold; tests shorten it so stop() is quick
};

export class Dashboard {
  state: AppState = initialState();
  private stopped = false;
  private pollPromise: Promise<void> | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private opts: DashboardOpts = {},
  ) {}

  private set(next: AppState): void {
    this.state = next;
    render(this.root, this.state);
  }

  async start(): Promise<void> {
    mountSkeleton(this.root);
    this.bind();
    render(this.root, this.state);
    await this.refreshAll();
    this.pollPromise = this.pollLoop();
  }

  /** Stop polling. The in-flight long poll is allowed to finish. */
  async stop(): Promise<void> {
    this.stopped = true;
    await this.pollPromise?.catch(() => {});
  }

  private bind(): void {
    this.root.addEventListener("click", (e) => {
      const t = (e.target as HTMLElement).closest<HTMLElement>(
        "[data-act],[data-open],[data-close],[data-refresh]",
      );
      if (!t) return;
      e.preventDefault();
      if (t.dataset.act) void this.act(t.dataset.id!, t.dataset.act as ActionKind);
      else if (t.dataset.open) void this.openDetail(t.dataset.open);
      else if (t.dataset.close) this.set(closeDetail(this.state));
      else if (t.dataset.refresh) void this.refreshAll();
    });
    const min = this.root.querySelector<HTMLInputElement>("#filter-min-score");
    min?.addEventListener("input", () => {
      this.set(setFilter(this.state, { minScore: Number(min.value) || 0 }));
    });
    const glob = this.root.querySelector<HTMLInputElement>("#filter-glob");
    glob?.addEventListener("input", () => {
      this.set(setFilter(this.state, { glob: glob.value.trim() }));
    });
    const token = this.root.querySelector<HTMLInputElement>("#token");
    token?.addEventListener("change", () => {
      this.api.setToken(token.value.trim());
      void this.refreshAll();
    });
  }

  /** Full reload: status, alert history, pending, decoys. The event cursor
   * starts at the status snapshot's last_seq; the alerts call covers
   * everything before that, the poll loop covers everything after. */
  async refreshAll(): Promise<void> {
    try {
      const [st, alerts, pending, decoys] = await Promise.all([
        this.api.status(),
        this.api.alerts(0),
        this.api.pending(),
        this.api.decoys(),
      ]);
      let s = applyStatus(this.state, st);
      if (s.cursor === 0) s = { ...s, cursor: st.last_seq };
      s = mergeAlerts(s, alerts);
      s = setPending(s, pending);
      s = setDecoys(s, decoys);
      this.set(connOk(s));
    } catch (e) {
      this.set(connLost(this.state, String(e)));
    }
  }

  private async refreshSnapshots(): Promise<void> {
    try {
      const [st, pending, decoys] = await Promise.all([
        this.api.status(),
        this.api.pending(),
        this.api.decoys(),
      ]);
      let s = applyStatus(this.state, st);
      s = setPending(s, pending);
      s = setDecoys(s, decoys);
      this.set(connOk(s));
    } catch (e) {
      this.set(connLost(this.state, String(e)));
    }
  }

  private async pollLoop(): Promise<void> {
    while (!this.stopped) {
      try {
        const page = await this.api.events(
          this.state.cursor,
          this.opts.pollTimeoutS ?? 25,
        );
        if (this.stopped) return;
        const before = this.state.cursor;
        this.set(connOk(applyEvents(this.state, page)));
        if (this.state.cursor !== before) await this.refreshSnapshots();
      } catch (e) {
        if (this.stopped) return;
        this.set(connLost(this.state, String(e)));
        await sleep(backoffMs(this.state.conn));
      }
    }
  }

  /** One POST per decision: beginAct returns the same state (and we bail)
   * when this id already has a request in flight. */
  async act(id: string, kind: ActionKind): Promise<void> {
    const before = this.state;
    this.set(beginAct(this.state, id, kind));
    if (this.state === before) return;
    try {
      const res =
        kind === "approve" ? await this.api.approve(id) : await this.api.discard(id);
      let s = actOk(this.state, id);
      if (detailIsFor(s.detail, id)) {
        s = { ...s, detail: { state: "resolved", id, status: res.status } };
      }
      this.set(s);
    } catch (e) {
      const name = e instanceof ApiError ? e.error : "Network";
      this.set(actFailed(this.state, id, name));
    }
    await this.refreshSnapshots();
  }

  async openDetail(id: string): Promise<void> {
    this.set(detailLoading(this.state, id));
    try {
      this.set(detailLoaded(this.state, await this.api.pendingDetail(id)));
    } catch (e) {
      if (e instanceof ApiError && e.status === 404) {
        this.set(detailGone(this.state, id));
      } else if (e instanceof ApiError && e.error === "AlreadyResolved") {
        this.set({ ...this.state, detail: { state: "resolved", id, status: "Resolved" } });
      } else {
        this.set(connLost(closeDetail(this.state), String(e)));
      }
    }
  }
}

// Browser bootstrap: served by the daemon at /ui/, same origin as the API.
if (typeof document !== "undefined") {
  const rootEl = document.getElementById("app");
  if (rootEl) {
    const dash = new Dashboard(rootEl, new ApiClient(""));
    void dash.start();
  }
}
