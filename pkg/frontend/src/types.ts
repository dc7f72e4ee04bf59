// Wire types for the daemon's /v1 JSON API. Field names mirror the server
// exactly; the dashboard never invents numbers of its own.

export type StatusBody = {
  v: number;
  mounted: boolean;
  root: string;
  decoys: number;
  pending: number;
  sessions: number;
  alerts: number;
  last_seq: number;
  profile: string; // "id@vN" or "none"
};

export type EventRecord = {
  seq: number;
  ts: number;
  kind: string; // Mount | Open | Write | ... | AlertRaised | ChangeCommitted | ChangeDiscarded
  path: string;
  actor: string;
  detail: Record<string, unknown>;
};

export type EventsBody = {
  v: number;
  events: EventRecord[];
  last_seq: number;
};

// /v1/alerts entries: seq/ts/path/actor plus the AlertRaised detail flattened in.
export type AlertEntry = {
  seq: number;
  ts: number;
  path: string;
  actor: string;
  score?: number;
  op?: string;
  reason?: string;
};

export type PendingEntry = {
  id: string;
  path: string;
  actor: string;
  kind: string; // content_write | truncate | new_file | rename | unlink | set_attr
  created_ts: number;
  score: number;
  verdict: string; // benign | suspicious | malign
  detail: Record<string, unknown>;
};

export type PreviewSide = {
  hex: string;
  text: string;
  size: number;
  truncated: boolean;
};

export type ScoreModelBody = {
  weights: Record<string, number>;
  bias: number;
  suspicious_threshold: number;
  malign_threshold: number;
};

export type PendingDetail = {
  v: number;
  id: string;
  status: "Pending" | "Committed" | "Discarded";
  // everything below is absent once the change is resolved
  path?: string;
  actor?: string;
  kind?: string;
  created_ts?: number;
  detail?: Record<string, unknown>;
  score?: number;
  verdict?: string;
  features?: Record<string, number>;
  model?: ScoreModelBody;
  base_sha256?: string;
  preview?: { base: PreviewSide; shadow: PreviewSide };
};

export type DecoyEntry = {
  path: string;
  recipe_id?: string;
  created_at?: number;
  last_freshened?: number;
  sha256?: string;
  k?: number;
  jitter_max?: number;
};

export type ActResult = {
  v: number;
  id: string;
  status: "Committed" | "Discarded";
  path: string;
  kind: string;
};
