// DOM layer. mountSkeleton builds the static frame once; render() rewrites
// only the dynamic regions from the view model, so filter/token inputs keep
// their focus and caret across updates.

import {
  alertBadge,
  alertFeed,
  backoffMs,
  contributions,
  decoyDirs,
  fmtScore,
  viewPending,
} from "./model.js";
import type { AppState } from "./model.js";
import type { PendingDetail, PreviewSide } from "./types.js";

export function esc(s: unknown): string {
  return String(s)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function when(ts: number): string {
  return new Date(ts * 1000).toLocaleString();
}

const CONFLICT_TEXT: Record<string, string> = {
  StaleBase: "stale base — file changed underneath, re-review",
  AlreadyResolved: "already resolved elsewhere",
  NotFound: "change no longer exists",
};

export function mountSkeleton(root: HTMLElement): void {
  root.innerHTML = `
    <div id="banner" class="banner" hidden></div>
    <header class="topbar">
      <h1>sentryfs</h1>
      <div id="status-chips" class="chips"></div>
      <label class="token">token <input id="token" type="password" autocomplete="off"></label>
    </header>
    <main class="columns">
      <section class="col">
        <h2>Alerts</h2>
        <div id="alerts" class="cards"></div>
        <h2>Decoy coverage</h2>
        <table class="grid"><thead><tr>
          <th>directory</th><th>decoys</th><th>recipes</th><th>freshened</th>
        </tr></thead><tbody id="decoy-map"></tbody></table>
      </section>
      <section class="col wide">
        <h2>Pending changes</h2>
        <div class="filters">
          <label>min score <input id="filter-min-score" type="number" min="0" max="1" step="0.05" value="0"></label>
          <label>path glob <input id="filter-glob" type="text" placeholder="docs/**"></label>
        </div>
        <table class="grid"><thead><tr>
          <th>path</th><th>actor</th><th>kind</th><th>score</th><th>verdict</th><th></th>
        </tr></thead><tbody id="pending"></tbody></table>
        <div id="detail" class="detail"></div>
      </section>
    </main>`;
}

function sel(root: HTMLElement, id: string): HTMLElement {
  const el = root.querySelector<HTMLElement>("#" + id);
  if (!el) throw new Error(`skeleton missing #${id}`);
  return el;
}

export function render(root: HTMLElement, s: AppState): void {
  renderBanner(sel(root, "banner"), s);
  renderChips(sel(root, "status-chips"), s);
  renderAlerts(sel(root, "alerts"), s);
  renderPending(sel(root, "pending"), s);
  renderDetail(sel(root, "detail"), s);
  renderDecoyMap(sel(root, "decoy-map"), s);
  syncFilterInputs(root, s);
}

function renderBanner(el: HTMLElement, s: AppState): void {
  if (s.conn.ok) {
    el.hidden = true;
    el.textContent = "";
    return;
  }
  el.hidden = false;
  const wait = backoffMs(s.conn);
  el.textContent = s.conn.failures
    ? `disconnected — retrying in ${(wait / 1000).toFixed(1)}s (${esc(s.conn.lastError)})`
    : "connecting…";
}

function renderChips(el: HTMLElement, s: AppState): void {
  const st = s.status;
  if (!st) {
    el.innerHTML = "";
    return;
  }
  const chip = (label: string, value: unknown, cls = "") =>
    `<span class="chip ${cls}">${label} <b>${esc(value)}</b></span>`;
  el.innerHTML = [
    chip("root", st.root),
    chip("decoys", st.decoys),
    chip("pending", st.pending, st.pending > 0 ? "warn" : ""),
    chip("alerts", st.alerts, st.alerts > 0 ? "crit" : ""),
    chip("profile", st.profile),
  ].join("");
}

function renderAlerts(el: HTMLElement, s: AppState): void {
  const feed = alertFeed(s);
  if (feed.length === 0) {
    el.innerHTML = `<div class="empty">no alerts</div>`;
    return;
  }
  el.innerHTML = feed
    .map(
      (a) => `
      <div class="alert-card" data-seq="${a.seq}">
        <span class="badge crit">${esc(alertBadge(a))}</span>
        <span class="score">${a.score != null ? fmtScore(a.score) : "?"}</span>
        <code class="path">${esc(a.path)}</code>
        <span class="meta">${esc(a.actor)} · ${esc(a.reason ?? "")} · ${esc(when(a.ts))}</span>
      </div>`,
    )
    .join("");
}

function renderPending(el: HTMLElement, s: AppState): void {
  const rows = viewPending(s);
  if (rows.length === 0) {
    el.innerHTML = `<tr><td colspan="6" class="empty">nothing pending</td></tr>`;
    return;
  }
  el.innerHTML = rows
    .map((r) => {
      const conflict = s.conflicts.get(r.id);
      const badge = conflict
        ? `<span class="badge conflict" title="${esc(conflict)}">${esc(
            CONFLICT_TEXT[conflict] ?? conflict,
          )}</span>`
        : "";
      return `
      <tr data-id="${esc(r.id)}">
        <td><a href="#" data-open="${esc(r.id)}"><code>${esc(r.path)}</code></a> ${badge}</td>
        <td>${esc(r.actor)}</td>
        <td>${esc(r.kind)}</td>
        <td class="num">${fmtScore(r.score)}</td>
        <td><span class="badge ${esc(r.verdict)}">${esc(r.verdict)}</span></td>
        <td class="acts">
          <button data-act="approve" data-id="${esc(r.id)}">approve</button>
          <button data-act="discard" data-id="${esc(r.id)}">discard</button>
        </td>
      </tr>`;
    })
    .join("");
}

function previewPane(label: string, p: PreviewSide): string {
  const shown = p.text.length;
  const note = p.truncated
    ? `<div class="truncation-note">showing first ${shown} of ${p.size} bytes</div>`
    : "";
  return `
    <div class="pane">
      <h4>${esc(label)} <small>${p.size} bytes</small></h4>
      <pre class="preview-text">${esc(p.text)}</pre>
      <code class="preview-hex">${esc(p.hex.slice(0, 96))}${p.hex.length > 96 ? "…" : ""}</code>
      ${note}
    </div>`;
}

function renderDetail(el: HTMLElement, s: AppState): void {
  const d = s.detail;
  if (!d) {
    el.innerHTML = "";
    return;
  }
  if (d.state === "loading") {
    el.innerHTML = `<div class="empty">loading ${esc(d.id)}…</div>`;
    return;
  }
  if (d.state === "gone") {
    el.innerHTML = `
      <div class="detail-gone">
        change no longer pending
        <button data-refresh="1">refresh</button>
        <button data-close="1">close</button>
      </div>`;
    return;
  }
  if (d.state === "resolved") {
    el.innerHTML = `
      <div class="detail-resolved">
        <span class="badge ${d.status === "Committed" ? "ok" : ""}">${esc(d.status)}</span>
        <code>${esc(d.id)}</code>
        <button data-close="1">close</button>
      </div>`;
    return;
  }
  el.innerHTML = detailHtml(d.detail);
}

function detailHtml(detail: PendingDetail): string {
  const rows = contributions(detail);
  const maxAbs = Math.max(0.0001, ...rows.map((r) => Math.abs(r.product)));
  const featureRows = rows
    .map(
      (r) => `
      <tr class="feature-row">
        <td><code>${esc(r.name)}</code></td>
        <td class="num">${r.value.toFixed(4)}</td>
        <td class="num">${r.weight.toFixed(2)}</td>
        <td class="num">${r.product.toFixed(4)}</td>
        <td class="barcell"><div class="bar" style="width:${Math.round(
          (Math.abs(r.product) / maxAbs) * 100,
        )}%"></div></td>
      </tr>`,
    )
    .join("");
  const pv = detail.preview;
  const previews = pv
    ? `<div class="previews">${previewPane("base", pv.base)}${previewPane("shadow", pv.shadow)}</div>`
    : "";
  return `
    <div class="detail-open" data-id="${esc(detail.id)}">
      <h3><code>${esc(detail.path ?? "")}</code>
        <span class="badge ${esc(detail.verdict ?? "")}">${esc(detail.verdict ?? "")}</span>
        <span class="score">${detail.score != null ? fmtScore(detail.score) : ""}</span>
      </h3>
      <div class="meta">${esc(detail.kind ?? "")} by ${esc(detail.actor ?? "")}
        at ${detail.created_ts != null ? esc(when(detail.created_ts)) : "?"}</div>
      <table class="grid features"><thead><tr>
        <th>feature</th><th>value</th><th>weight</th><th>w×v</th><th></th>
      </tr></thead><tbody>${featureRows}</tbody></table>
      ${previews}
      <div class="acts">
        <button data-act="approve" data-id="${esc(detail.id)}">approve</button>
        <button data-act="discard" data-id="${esc(detail.id)}">discard</button>
        <button data-close="1">close</button>
      </div>
    </div>`;
}

function renderDecoyMap(el: HTMLElement, s: AppState): void {
  const dirs = decoyDirs(s);
  if (dirs.length === 0) {
    el.innerHTML = `<tr><td colspan="4" class="empty">no decoys planted</td></tr>`;
    return;
  }
  el.innerHTML = dirs
    .map(
      (d) => `
      <tr>
        <td><code>${esc(d.dir)}</code></td>
        <td class="num">${d.count}</td>
        <td>${esc(d.recipes.join(", "))}</td>
        <td>${d.lastFreshened ? esc(when(d.lastFreshened)) : "never"}</td>
      </tr>`,
    )
    .join("");
}

function syncFilterInputs(root: HTMLElement, s: AppState): void {
  const min = root.querySelector<HTMLInputElement>("#filter-min-score");
  const glob = root.querySelector<HTMLInputElement>("#filter-glob");
  const doc = root.ownerDocument;
  if (min && doc.activeElement !== min) min.value = String(s.filter.minScore);
  if (glob && doc.activeElement !== glob) glob.value = s.filter.glob;
}
