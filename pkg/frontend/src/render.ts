/**
 * DOM rendering for the console.
 *
 * The page skeleton (including the manifest form, whose text the operator
 * owns) is created once; every state change re-renders only the dynamic
 * regions from the current ConsoleState. Nothing here mutates state —
 * user actions are forwarded through the injected handlers and the page is
 * redrawn only after the service has answered.
 */

import {
  decayChart,
  lifetimeColor,
  sparkline,
  sweepChart,
} from "./charts.js";
import type {
  ConsoleState,
  HeatmapBucket,
  TrialRow,
} from "./viewmodel.js";
import {
  heatmap,
  impedanceGate,
  traceCsv,
  trialsForCell,
} from "./viewmodel.js";

export interface UiSelection {
  selectedCell: string | null;
}

export interface Handlers {
  onStartCampaign(manifestText: string, accelText: string): void;
  onAbortCampaign(): void;
  onChannelCommand(
    cid: number,
    action: string,
    payload?: Record<string, unknown>,
  ): void;
  onSelectCell(tag: string | null): void;
  onDismissBanner(): void;
}

const DEFAULT_MANIFEST_TEXT = JSON.stringify(
  {
    name: "console-run",
    seed: 20240917,
    space: {
      fields_v_um: [35, 40, 45, 50],
      frequencies_hz: [1, 5, 10, 50],
      replicates_per_cell: 5,
      lifetime_cap_s: 10800,
    },
    replicates_stage2: 16,
    replicates_stage3: 16,
  },
  null,
  2,
);

function esc(text: unknown): string {
  return String(text)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(value: number | null | undefined, digits = 1): string {
  if (value === null || value === undefined) return "—";
  return value.toFixed(digits);
}

// --------------------------------------------------------------------------
// skeleton

const SKELETON = `
  <div id="banner"></div>
  <section class="panel">
    <h2>Campaign</h2>
    <details id="manifest-form" open>
      <summary>Start a campaign from a manifest</summary>
      <textarea id="manifest-text" rows="12" spellcheck="false"></textarea>
      <label>accel <input id="accel-text" placeholder="service default" size="10"></label>
      <button id="start-campaign">Start campaign</button>
    </details>
    <div id="campaign-panel"></div>
    <div id="drilldown"></div>
  </section>
  <section class="panel"><h2>Channels</h2><div id="channels"></div></section>
  <section class="panel"><h2>Trials</h2><div id="trials"></div></section>
  <section class="panel"><h2>Report</h2><div id="report"></div></section>
  <section class="panel"><h2>Events</h2><div id="events"></div></section>
`;

export function mount(root: HTMLElement, handlers: Handlers): void {
  root.innerHTML = SKELETON;
  const manifestText = root.querySelector<HTMLTextAreaElement>("#manifest-text");
  if (manifestText) manifestText.value = DEFAULT_MANIFEST_TEXT;

  root.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest<HTMLElement>(
      "[data-action], #start-campaign",
    );
    if (!target) return;
    if (target.id === "start-campaign") {
      const text =
        root.querySelector<HTMLTextAreaElement>("#manifest-text")?.value ?? "";
      const accel =
        root.querySelector<HTMLInputElement>("#accel-text")?.value ?? "";
      handlers.onStartCampaign(text, accel);
      return;
    }
    const action = target.dataset["action"];
    const cid = Number(target.dataset["cid"] ?? "-1");
    switch (action) {
      case "abort-campaign":
        handlers.onAbortCampaign();
        break;
      case "abort-channel":
        handlers.onChannelCommand(cid, "Abort");
        break;
      case "reset-fault":
        handlers.onChannelCommand(cid, "ResetFault");
        break;
      case "switch-mode":
        handlers.onChannelCommand(cid, "SwitchMode", {
          mode: target.dataset["mode"],
        });
        break;
      case "select-cell":
        handlers.onSelectCell(target.dataset["tag"] ?? null);
        break;
      case "close-drilldown":
        handlers.onSelectCell(null);
        break;
      case "dismiss-banner":
        handlers.onDismissBanner();
        break;
    }
  });
}

// --------------------------------------------------------------------------
// dynamic regions

export function render(
  root: HTMLElement,
  state: ConsoleState,
  ui: UiSelection,
): void {
  setHtml(root, "#banner", renderBanner(state));
  setHtml(root, "#campaign-panel", renderCampaign(state));
  setHtml(root, "#drilldown", renderDrilldown(state, ui));
  setHtml(root, "#channels", renderChannels(state));
  setHtml(root, "#trials", renderTrials(state));
  setHtml(root, "#report", renderReport(state));
  setHtml(root, "#events", renderEvents(state));
}

function setHtml(root: HTMLElement, selector: string, html: string): void {
  const node = root.querySelector<HTMLElement>(selector);
  if (node) node.innerHTML = html;
}

function renderBanner(state: ConsoleState): string {
  if (!state.banner) return "";
  return (
    `<div class="banner" role="alert">` +
    `<strong>rejected:</strong> <span class="reason">${esc(state.banner)}</span>` +
    `<button data-action="dismiss-banner">dismiss</button></div>`
  );
}

function renderCampaign(state: ConsoleState): string {
  if (!state.campaignId) {
    return `<p class="muted">No campaign started in this session.</p>`;
  }
  const header =
    `<p><strong>${esc(state.campaignId)}</strong>` +
    ` status=<em>${esc(state.campaignState ?? "?")}</em>` +
    ` stage=${esc(state.stage ?? "?")}` +
    (state.campaignState === "running"
      ? ` <button data-action="abort-campaign">Abort campaign</button>`
      : "") +
    `</p>` +
    (state.runDir
      ? `<p class="muted">raw-rate telemetry (NDJSON) in <code>${esc(state.runDir)}</code> on the service host</p>`
      : "");
  const boundaries = state.boundaries
    ? `<p>boundary conditions: ${state.boundaries
        .map((b) => `<strong>${b.field_v_um} V/µm @ ${b.frequency_hz} Hz</strong>`)
        .join(", ")}</p>`
    : "";
  return header + boundaries + renderHeatmap(state);
}

function renderHeatmap(state: ConsoleState): string {
  const buckets = heatmap(state);
  if (buckets.length === 0) return "";
  const fields = [...new Set(buckets.map((b) => b.field))].sort(
    (a, b) => b - a,
  );
  const freqs = [...new Set(buckets.map((b) => b.freq))].sort((a, b) => a - b);
  const byKey = new Map<string, HeatmapBucket>(
    buckets.map((b) => [`${b.field}|${b.freq}`, b]),
  );
  const scaleMax = Math.max(
    1,
    ...buckets.map((b) => b.meanLifetimeS ?? 0),
  );
  const head =
    `<tr><th>field \\ freq</th>` +
    freqs.map((q) => `<th>${q} Hz</th>`).join("") +
    `</tr>`;
  const rows = fields
    .map((field) => {
      const cells = freqs
        .map((freq) => {
          const bucket = byKey.get(`${field}|${freq}`);
          if (!bucket) return `<td class="empty"></td>`;
          const color = lifetimeColor(bucket.meanLifetimeS, scaleMax);
          const classes = [
            "heat",
            bucket.boundary ? "boundary" : "",
            bucket.stable ? "stable" : "",
          ]
            .filter(Boolean)
            .join(" ");
          const mean =
            bucket.meanLifetimeS === null
              ? bucket.status
              : `${fmt(bucket.meanLifetimeS, 0)} s`;
          const badge = bucket.stable ? `<span class="badge">Stable</span>` : "";
          return (
            `<td class="${classes}" style="background:${color}"` +
            ` data-action="select-cell" data-tag="${esc(bucket.tags[0] ?? "")}"` +
            ` title="${esc(
              `${bucket.trialCount} trials, ${bucket.censoredCount} censored`,
            )}">` +
            `${mean}${badge}</td>`
          );
        })
        .join("");
      return `<tr><th>${field} V/µm</th>${cells}</tr>`;
    })
    .join("");
  return (
    `<p class="muted">mean lifetime per field × frequency cell; ` +
    `ring = selected boundary, badge = Stable (early-stopped, all censored)</p>` +
    `<table class="heatmap">${head}${rows}</table>`
  );
}

function renderDrilldown(state: ConsoleState, ui: UiSelection): string {
  if (!ui.selectedCell) return "";
  const tag = ui.selectedCell;
  const rows = trialsForCell(state, tag);
  const trialBlocks = rows
    .map((row) => {
      const trace = state.traces[row.deviceId];
      const decay = trace
        ? decayChart(trace.drive, { label: `displacement_mm — ${row.deviceId}` })
        : `<p class="muted">no stream capture for this trial</p>`;
      const sweeps = trace
        ? sweepChart(trace.sweeps)
        : "";
      return (
        `<div class="trial-detail">` +
        `<h4>${esc(row.deviceId)} — ${esc(row.status)}` +
        ` (lifetime ${fmt(row.lifetimeS, 1)} s)</h4>` +
        decay +
        sweeps +
        downloadLink(state, row.deviceId) +
        `</div>`
      );
    })
    .join("");
  return (
    `<div class="drilldown"><h3>Cell ${esc(tag)}` +
    ` <button data-action="close-drilldown">close</button></h3>` +
    (trialBlocks || `<p class="muted">no trials recorded for this cell yet</p>`) +
    `</div>`
  );
}

function downloadLink(state: ConsoleState, deviceId: string): string {
  const csv = traceCsv(state, deviceId);
  if (!csv) return "";
  const href = `data:text/csv;charset=utf-8,${encodeURIComponent(csv)}`;
  return (
    `<p><a href="${href}" download="${esc(deviceId)}-capture.csv">` +
    `download stream capture (subscribed rate)</a>` +
    ` — full-rate record stays in the run directory</p>`
  );
}

function renderChannels(state: ConsoleState): string {
  const ids = Object.keys(state.channels)
    .map(Number)
    .sort((a, b) => a - b);
  if (ids.length === 0) return `<p class="muted">no channels reported yet</p>`;
  return ids
    .map((cid) => {
      const card = state.channels[cid];
      if (!card) return "";
      const wire = card.state;
      const gate = impedanceGate(wire);
      const badges = wire
        ? [
            wire.faulted ? `<span class="badge fault">FAULTED</span>` : "",
            wire.hv_live
              ? `<span class="badge hv">HV LIVE</span>`
              : `<span class="badge ok">hv off</span>`,
            wire.hv_isolated ? `<span class="badge ok">isolated</span>` : "",
            !gate.enabled
              ? `<span class="badge interlock" title="${esc(gate.tooltip)}">interlocked</span>`
              : "",
          ]
            .filter(Boolean)
            .join(" ")
        : "";
      const impedanceButton = gate.enabled
        ? `<button data-action="switch-mode" data-cid="${cid}" data-mode="impedance">impedance</button>`
        : `<button disabled title="${esc(gate.tooltip)}">impedance</button>`;
      return (
        `<div class="card">` +
        `<h3>channel ${cid} <small>${esc(wire?.mode ?? "unknown")}</small> ${badges}</h3>` +
        `<p>clamp ${fmt(wire?.clamp_force_n ?? null, 3)} N · trials run ${wire?.trials_run ?? 0}` +
        ` · running: ${esc(card.activeTrial ?? "—")}` +
        (wire?.fault_reason ? ` · fault: ${esc(wire.fault_reason)}` : "") +
        `</p>` +
        sparkline(card.displacement, { label: "displacement_mm" }) +
        sparkline(card.force, { label: "force_n", stroke: "#7a2ae2" }) +
        sparkline(card.current, { label: "current_ua", stroke: "#1c8a5a" }) +
        `<p>` +
        `<button data-action="abort-channel" data-cid="${cid}">Abort</button>` +
        `<button data-action="switch-mode" data-cid="${cid}" data-mode="displacement">displacement</button>` +
        `<button data-action="switch-mode" data-cid="${cid}" data-mode="force">force</button>` +
        impedanceButton +
        `<button data-action="reset-fault" data-cid="${cid}">ResetFault</button>` +
        `</p>` +
        lastTrialLine(wire?.last_trial ?? null) +
        `</div>`
      );
    })
    .join("");
}

function lastTrialLine(
  lastTrial: import("./types.js").LastTrial | null,
): string {
  if (!lastTrial) return "";
  const life =
    lastTrial.lifetime_s !== undefined
      ? ` lifetime ${fmt(lastTrial.lifetime_s, 1)} s, censored ${lastTrial.censored}`
      : "";
  const why = lastTrial.reason ? ` (${esc(lastTrial.reason)})` : "";
  return `<p class="muted">last trial ${esc(lastTrial.device_id)}: ${esc(
    lastTrial.status,
  )}${life}${why}</p>`;
}

function renderTrials(state: ConsoleState): string {
  if (state.trials.length === 0) {
    return `<p class="muted">no trials yet</p>`;
  }
  const rows = state.trials
    .map((row) => trialRowHtml(state, row))
    .join("");
  return (
    `<table class="trials"><tr>` +
    `<th>device</th><th>ch</th><th>stage</th><th>cell</th><th>status</th>` +
    `<th>lifetime (s)</th><th>censored</th><th>capture</th></tr>${rows}</table>`
  );
}

function trialRowHtml(state: ConsoleState, row: TrialRow): string {
  const tag =
    row.field !== null && row.freq !== null && row.filler !== null
      ? `${row.filler} ${row.cnt ?? "?"} @ ${row.field}/${row.freq}`
      : "";
  const csv = traceCsv(state, row.deviceId);
  const capture = csv
    ? `<a href="data:text/csv;charset=utf-8,${encodeURIComponent(csv)}"` +
      ` download="${esc(row.deviceId)}-capture.csv">csv</a>`
    : "—";
  return (
    `<tr class="status-${row.status.toLowerCase()}">` +
    `<td>${esc(row.deviceId)}</td><td>${row.channel}</td>` +
    `<td>${row.stage ?? "—"}</td><td>${esc(tag)}</td>` +
    `<td>${esc(row.status)}</td><td>${fmt(row.lifetimeS, 1)}</td>` +
    `<td>${row.censored === null ? "—" : row.censored}</td>` +
    `<td>${capture}</td></tr>`
  );
}

function renderReport(state: ConsoleState): string {
  const report = state.report;
  if (!report) return `<p class="muted">no report yet</p>`;
  const summaries = report.summaries
    .map(
      (s) =>
        `<li>${s.boundary_field_v_um} V/µm @ ${s.boundary_frequency_hz} Hz: ` +
        `best <strong>${esc(s.best.filler)} ${s.best.cnt_conc_ml_fa}</strong>` +
        ` — +${fmt(s.best_vs_baseline_pct, 1)}% vs baseline` +
        ` (${esc(s.baseline.filler)} ${s.baseline.cnt_conc_ml_fa}),` +
        ` +${fmt(s.best_vs_worst_pct, 1)}% vs worst` +
        ` (${esc(s.worst.filler)} ${s.worst.cnt_conc_ml_fa})</li>`,
    )
    .join("");
  const comparisons = report.comparisons
    .map(
      (c) =>
        `<tr><td>${c.boundary_field_v_um}/${c.boundary_frequency_hz}</td>` +
        `<td>${c.rank}</td><td>${esc(c.filler)} ${c.cnt_conc_ml_fa}</td>` +
        `<td>${fmt(c.lifetime_mean_s, 1)} ± ${fmt(c.lifetime_std_s, 1)}</td>` +
        `<td>${fmt(c.lifetime_improvement_pct, 1)}%</td>` +
        `<td>${fmt(c.displacement_mean_mm, 3)}</td></tr>`,
    )
    .join("");
  return (
    `<p><strong>${esc(report.name)}</strong> (seed ${report.seed})</p>` +
    `<ul>${summaries}</ul>` +
    `<table class="report"><tr><th>boundary</th><th>rank</th><th>material</th>` +
    `<th>lifetime (s)</th><th>vs baseline</th><th>displacement (mm)</th></tr>` +
    `${comparisons}</table>`
  );
}

function renderEvents(state: ConsoleState): string {
  const recent = state.events.slice(-200);
  const lines = recent
    .map(
      (entry) =>
        `<li><code>${entry.seq}</code> <em>${entry.source}</em> ` +
        `${esc(entry.text)}</li>`,
    )
    .join("");
  return (
    `<p class="muted">${state.events.length} events (latest 200 shown)</p>` +
    `<ul class="events">${lines}</ul>`
  );
}
