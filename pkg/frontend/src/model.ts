// Pure view-model: every transition takes a state and API payloads and
// returns a new state. No fetches, no DOM, no clocks — the controller owns
// those. Reloading the page and replaying the same payloads reproduces the
// same view.

import type {
  AlertEntry,
  DecoyEntry,
  EventsBody,
  PendingDetail,
  PendingEntry,
  StatusBody,
} from "./types.js";

export type ActionKind = "approve" | "discard";

export type ConnState = {
  ok: boolean;
  failures: number;
  lastError: string;
};

export type DetailView =
  | { state: "loading"; id: string }
  | { state: "open"; detail: PendingDetail }
  | { state: "resolved"; id: string; status: string }
  | { state: "gone"; id: string }; // 404: change no longer pending

export type Filter = {
  minScore: number;
  glob: string; // path glob: * ? ** — empty matches everything
};

export type AppState = {
  conn: ConnState;
  status: StatusBody | null;
  cursor: number; // highest event seq merged so far
  alerts: Map<number, AlertEntry>; // seq-keyed, so a duplicate renders once
  pending: PendingEntry[];
  inFlight: Map<string, ActionKind>;
  stash: Map<string, { row: PendingEntry; index: number }>;
  conflicts: Map<string, string>; // change id -> error name (StaleBase, ...)
  filter: Filter;
  detail: DetailView | null;
  decoys: DecoyEntry[];
};

export function initialState(): AppState {
  return {
    conn: { ok: false, failures: 0, lastError: "" },
    status: null,
    cursor: 0,
    alerts: new Map(),
    pending: [],
    inFlight: new Map(),
    stash: new Map(),
    conflicts: new Map(),
    filter: { minScore: 0, glob: "" },
    detail: null,
    decoys: [],
  };
}

// --- connection ------------------------------------------------------------

export function connOk(s: AppState): AppState {
  if (s.conn.ok && s.conn.failures === 0) return s;
  return { ...s, conn: { ok: true, failures: 0, lastError: "" } };
}

export function connLost(s: AppState, err: string): AppState {
  return {
    ...s,
    conn: { ok: false, failures: s.conn.failures + 1, lastError: err },
  };
}

/** Retry delay after N consecutive failures: 500ms doubling, capped at 8s. */
export function backoffMs(conn: ConnState): number {
  if (conn.failures === 0) return 0;
  return Math.min(500 * 2 ** (conn.failures - 1), 8000);
}

// --- snapshots ---------------------------------------------------------------

export function applyStatus(s: AppState, status: StatusBody): AppState {
  return { ...s, status };
}

export function mergeAlerts(s: AppState, entries: AlertEntry[]): AppState {
  if (entries.length === 0) return s;
  const alerts = new Map(s.alerts);
  for (const a of entries) alerts.set(a.seq, a);
  return { ...s, alerts };
}

export function setDecoys(s: AppState, decoys: DecoyEntry[]): AppState {
  return { ...s, decoys };
}

/** Replace the pending snapshot. Rows with an action in flight stay hidden
 * (they were optimistically removed; the response will settle them), and
 * conflict badges for ids no longer pending are dropped. */
export function setPending(s: AppState, rows: PendingEntry[]): AppState {
  const pending = rows.filter((r) => !s.inFlight.has(r.id));
  const present = new Set(rows.map((r) => r.id));
  let conflicts = s.conflicts;
  if ([...conflicts.keys()].some((id) => !present.has(id))) {
    conflicts = new Map([...conflicts].filter(([id]) => present.has(id)));
  }
  return { ...s, pending, conflicts };
}

// --- event stream ------------------------------------------------------------

/** Merge an events page by seq: drop anything at or below the cursor, never
 * reorder, advance the cursor to the highest seq merged. AlertRaised events
 * feed the alerts map (same seq key as /v1/alerts, so overlap is harmless). */
export function applyEvents(s: AppState, body: EventsBody): AppState {
  const fresh = body.events
    .filter((e) => e.seq > s.cursor)
    .sort((a, b) => a.seq - b.seq);
  if (fresh.length === 0) return s;
  let alerts = s.alerts;
  for (const e of fresh) {
    if (e.kind !== "AlertRaised") continue;
    if (alerts === s.alerts) alerts = new Map(s.alerts);
    const d = e.detail as { score?: number; op?: string; reason?: string };
    alerts.set(e.seq, {
      seq: e.seq,
      ts: e.ts,
      path: e.path,
      actor: e.actor,
      score: d.score,
      op: d.op,
      reason: d.reason,
    });
  }
  const last = fresh[fresh.length - 1]!;
  return { ...s, alerts, cursor: last.seq };
}

// --- actions (optimistic, one POST per decision) ------------------------------

/** Start an approve/discard: remove the row optimistically and disable its
 * controls. A second click while in flight is a no-op. */
export function beginAct(s: AppState, id: string, kind: ActionKind): AppState {
  if (s.inFlight.has(id)) return s;
  const index = s.pending.findIndex((r) => r.id === id);
  if (index < 0) return s;
  const row = s.pending[index]!;
  const pending = s.pending.slice(0, index).concat(s.pending.slice(index + 1));
  const inFlight = new Map(s.inFlight).set(id, kind);
  const stash = new Map(s.stash).set(id, { row, index });
  const conflicts = new Map(s.conflicts);
  conflicts.delete(id);
  return { ...s, pending, inFlight, stash, conflicts };
}

export function actOk(s: AppState, id: string): AppState {
  const inFlight = new Map(s.inFlight);
  const stash = new Map(s.stash);
  inFlight.delete(id);
  stash.delete(id);
  return { ...s, inFlight, stash };
}

/** Roll back a failed action: the row returns at its old position and wears
 * a conflict badge naming the server's error (StaleBase, AlreadyResolved...). */
export function actFailed(s: AppState, id: string, error: string): AppState {
  const inFlight = new Map(s.inFlight);
  const stash = new Map(s.stash);
  inFlight.delete(id);
  const entry = stash.get(id);
  stash.delete(id);
  let pending = s.pending;
  if (entry) {
    pending = s.pending.slice();
    pending.splice(Math.min(entry.index, pending.length), 0, entry.row);
  }
  const conflicts = new Map(s.conflicts).set(id, error);
  return { ...s, pending, inFlight, stash, conflicts };
}

// --- detail pane --------------------------------------------------------------

export function detailLoading(s: AppState, id: string): AppState {
  return { ...s, detail: { state: "loading", id } };
}

/** A freshly loaded detail counts as the re-review a conflict badge demands. */
export function detailLoaded(s: AppState, detail: PendingDetail): AppState {
  const conflicts = new Map(s.conflicts);
  conflicts.delete(detail.id);
  const view: DetailView =
    detail.status === "Pending"
      ? { state: "open", detail }
      : { state: "resolved", id: detail.id, status: detail.status };
  return { ...s, detail: view, conflicts };
}

export function detailGone(s: AppState, id: string): AppState {
  return { ...s, detail: { state: "gone", id } };
}

export function closeDetail(s: AppState): AppState {
  return { ...s, detail: null };
}

// --- filters and derived views -------------------------------------------------

export function setFilter(s: AppState, patch: Partial<Filter>): AppState {
  return { ...s, filter: { ...s.filter, ...patch } };
}

/** Translate a path glob to a RegExp: `*` stays inside one segment, `**`
 * crosses slashes, `?` is one character. */
export function globToRegExp(glob: string): RegExp {
  let out = "^";
  for (let i = 0; i < glob.length; i++) {
    const c = glob[i]!;
    if (c === "*") {
      if (glob[i + 1] === "*") {
        out += ".*";
        i++;
      } else {
        out += "[^/]*";
      }
    } else if (c === "?") {
      out += "[^/]";
    } else {
      out += c.replace(/[.+^${}()|[\]\\]/g, "\\$&");
    }
  }
  return new RegExp(out + "$");
}

export function viewPending(s: AppState): PendingEntry[] {
  const { minScore, glob } = s.filter;
  let rows = s.pending;
  if (minScore > 0) rows = rows.filter((r) => r.score >= minScore);
  if (glob) {
    const re = globToRegExp(glob);
    rows = rows.filter((r) => re.test(r.path));
  }
  return rows;
}

/** Alerts feed, score-sorted (highest first), newest first among equals. */
export function alertFeed(s: AppState): AlertEntry[] {
  return [...s.alerts.values()].sort(
    (a, b) => (b.score ?? 0) - (a.score ?? 0) || b.seq - a.seq,
  );
}

export type DecoyDir = {
  dir: string;
  count: number;
  recipes: string[];
  lastFreshened: number; // 0 = never
};

/** Per-directory decoy coverage for the map panel. */
export function decoyDirs(s: AppState): DecoyDir[] {
  const byDir = new Map<string, DecoyDir>();
  for (const d of s.decoys) {
    const slash = d.path.lastIndexOf("/");
    const dir = slash < 0 ? "." : d.path.slice(0, slash);
    let row = byDir.get(dir);
    if (!row) {
      row = { dir, count: 0, recipes: [], lastFreshened: 0 };
      byDir.set(dir, row);
    }
    row.count++;
    const recipe = d.recipe_id ?? "?";
    if (!row.recipes.includes(recipe)) row.recipes.push(recipe);
    row.lastFreshened = Math.max(row.lastFreshened, d.last_freshened ?? 0);
  }
  return [...byDir.values()].sort((a, b) => a.dir.localeCompare(b.dir));
}

export type Contribution = {
  name: string;
  value: number;
  weight: number;
  product: number;
};

/** weight × value per feature, largest influence first. Both factors come
 * straight off the detail payload. */
export function contributions(detail: PendingDetail): Contribution[] {
  const features = detail.features ?? {};
  const weights = detail.model?.weights ?? {};
  return Object.entries(features)
    .map(([name, value]) => {
      const weight = weights[name] ?? 0;
      return { name, value, weight, product: weight * value };
    })
    .sort((a, b) => Math.abs(b.product) - Math.abs(a.product));
}

export function fmtScore(x: number): string {
  return x.toFixed(2);
}

export function alertBadge(a: AlertEntry): string {
  return (a.score ?? 0) >= 1 ? "Critical" : "Alert";
}
