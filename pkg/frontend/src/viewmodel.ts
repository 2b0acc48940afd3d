/**
 * Pure console state: fold service responses and stream frames into the
 * shapes the renderer draws.
 *
 * Everything in this module is a pure function of wire data — no physics,
 * no timers, no network. The rule the tests enforce: a value appears on
 * screen only if the service said it (frames, query responses, command
 * envelopes), so replaying the same frames always rebuilds the same state.
 */

import type {
  BoundaryPair,
  CampaignEventWire,
  CampaignRunState,
  CampaignStartResponse,
  CampaignStatusWire,
  CellStatus,
  ChannelState,
  EventWire,
  ReportDoc,
  RigEventWire,
  ServiceEventWire,
  StreamFrame,
  TelemetrySample,
  TimeBase,
} from "./types.js";

// --------------------------------------------------------------------------
// shapes

export type TrialStatusUi = "Running" | "Complete" | "Aborted" | "Faulted";

export interface StripPoint {
  t: number;
  v: number;
}

export interface ChannelCard {
  state: ChannelState | null;
  displacement: StripPoint[];
  force: StripPoint[];
  current: StripPoint[];
  activeTrial: string | null;
}

export interface TrialRow {
  deviceId: string;
  channel: number;
  stage: number | null;
  field: number | null;
  freq: number | null;
  filler: string | null;
  cnt: number | null;
  status: TrialStatusUi;
  lifetimeS: number | null;
  censored: boolean | null;
  cause: string | null;
}

export interface EventLogEntry {
  seq: number;
  tS: number | null;
  source: "rig" | "service" | "campaign";
  kind: string;
  channel: number | null;
  deviceId: string | null;
  text: string;
}

export interface CellEntry {
  tag: string;
  field: number;
  freq: number;
  filler: string;
  cnt: number;
  status: CellStatus;
  lifetimes: number[];
  censoredCount: number;
  trialCount: number;
}

/** Per-trial capture of the subscribed stream, for drill-down charts. */
export interface TrialTrace {
  deviceId: string;
  channel: number;
  drive: StripPoint[];
  sweeps: StripPoint[][];
  /** True while the newest sweep span is still receiving samples. */
  sweepOpen: boolean;
}

export interface ConsoleState {
  channels: Record<number, ChannelCard>;
  timeBase: TimeBase | null;
  streamLive: boolean;
  campaignId: string | null;
  campaignState: CampaignRunState | null;
  stage: number | null;
  runDir: string | null;
  cells: Record<string, CellEntry>;
  boundaries: BoundaryPair[] | null;
  trials: TrialRow[];
  events: EventLogEntry[];
  traces: Record<string, TrialTrace>;
  report: ReportDoc | null;
  banner: string | null;
  stripLimit: number;
  traceLimit: number;
  eventLimit: number;
}

export interface HeatmapBucket {
  field: number;
  freq: number;
  status: CellStatus;
  stable: boolean;
  boundary: boolean;
  meanLifetimeS: number | null;
  trialCount: number;
  censoredCount: number;
  tags: string[];
}

// --------------------------------------------------------------------------
// construction and query folds

export function initialState(
  options: {
    stripLimit?: number;
    traceLimit?: number;
    eventLimit?: number;
  } = {},
): ConsoleState {
  return {
    channels: {},
    timeBase: null,
    streamLive: false,
    campaignId: null,
    campaignState: null,
    stage: null,
    runDir: null,
    cells: {},
    boundaries: null,
    trials: [],
    events: [],
    traces: {},
    report: null,
    banner: null,
    stripLimit: options.stripLimit ?? 600,
    traceLimit: options.traceLimit ?? 4000,
    eventLimit: options.eventLimit ?? 50_000,
  };
}

function emptyCard(): ChannelCard {
  return {
    state: null,
    displacement: [],
    force: [],
    current: [],
    activeTrial: null,
  };
}

/** Fold a GET /channels response (authoritative channel truth). */
export function withChannelStates(
  state: ConsoleState,
  channelStates: ChannelState[],
): ConsoleState {
  const channels = { ...state.channels };
  for (const wire of channelStates) {
    const card = channels[wire.channel] ?? emptyCard();
    channels[wire.channel] = {
      ...card,
      state: wire,
      activeTrial: wire.current_trial,
    };
  }
  return { ...state, channels };
}

/** Fold a successful POST /campaigns response. */
export function withCampaignStarted(
  state: ConsoleState,
  response: CampaignStartResponse,
): ConsoleState {
  const cells: Record<string, CellEntry> = {};
  for (const planned of response.stage1_plan) {
    const tag = cellTag(
      planned.field_v_um,
      planned.frequency_hz,
      planned.filler,
      planned.cnt_conc_ml_fa,
    );
    cells[tag] ??= {
      tag,
      field: planned.field_v_um,
      freq: planned.frequency_hz,
      filler: planned.filler,
      cnt: planned.cnt_conc_ml_fa,
      status: "pending",
      lifetimes: [],
      censoredCount: 0,
      trialCount: 0,
    };
  }
  return {
    ...state,
    campaignId: response.campaign_id,
    campaignState: "running",
    stage: 1,
    runDir: response.run_dir,
    cells,
    boundaries: null,
    report: null,
  };
}

/** Fold a GET /campaigns/{id} response (page-reload reconstruction). */
export function withCampaignStatus(
  state: ConsoleState,
  status: CampaignStatusWire,
): ConsoleState {
  const cells = { ...state.cells };
  for (const [tag, cellStatus] of Object.entries(status.cells)) {
    const parsed = parseCellTag(tag);
    const existing = cells[tag];
    if (existing) {
      cells[tag] = { ...existing, status: cellStatus };
    } else if (parsed) {
      cells[tag] = {
        tag,
        field: parsed.field,
        freq: parsed.freq,
        filler: parsed.filler,
        cnt: parsed.cnt,
        status: cellStatus,
        lifetimes: [],
        censoredCount: 0,
        trialCount: 0,
      };
    }
  }
  return {
    ...state,
    campaignId: status.campaign_id,
    campaignState: status.status,
    stage: status.stage,
    runDir: status.run_dir,
    cells,
    boundaries: status.boundaries,
    banner: status.error ?? state.banner,
  };
}

export function withReport(
  state: ConsoleState,
  report: ReportDoc,
): ConsoleState {
  return { ...state, report };
}

/** Surface a rejected command; the reason is shown exactly as sent. */
export function withRejection(
  state: ConsoleState,
  reason: string,
): ConsoleState {
  return { ...state, banner: reason };
}

export function clearBanner(state: ConsoleState): ConsoleState {
  return { ...state, banner: null };
}

// --------------------------------------------------------------------------
// stream folds

export function applyFrame(
  state: ConsoleState,
  frame: StreamFrame,
): ConsoleState {
  switch (frame.kind) {
    case "subscribed":
      return { ...state, timeBase: frame.time_base, streamLive: true };
    case "channel_state": {
      const card = state.channels[frame.state.channel] ?? emptyCard();
      return {
        ...state,
        channels: {
          ...state.channels,
          [frame.state.channel]: {
            ...card,
            state: frame.state,
            activeTrial: frame.state.current_trial,
          },
        },
      };
    }
    case "telemetry":
      return applyTelemetry(state, frame.channel, frame.sample);
    case "event":
      return applyEvent(state, frame.event);
  }
}

function pushCapped<T>(items: T[], item: T, limit: number): T[] {
  const next = items.length >= limit ? items.slice(1) : items.slice();
  next.push(item);
  return next;
}

function applyTelemetry(
  state: ConsoleState,
  channelId: number,
  sample: TelemetrySample,
): ConsoleState {
  const card = state.channels[channelId] ?? emptyCard();
  const next: ChannelCard = { ...card };
  if (sample.displacement_mm !== null) {
    next.displacement = pushCapped(
      card.displacement,
      { t: sample.t_s, v: sample.displacement_mm },
      state.stripLimit,
    );
  }
  if (sample.force_n !== null) {
    next.force = pushCapped(
      card.force,
      { t: sample.t_s, v: sample.force_n },
      state.stripLimit,
    );
  }
  next.current = pushCapped(
    card.current,
    { t: sample.t_s, v: sample.current_ua },
    state.stripLimit,
  );

  let traces = state.traces;
  if (card.activeTrial) {
    const trace = traces[card.activeTrial] ?? {
      deviceId: card.activeTrial,
      channel: channelId,
      drive: [],
      sweeps: [],
      sweepOpen: false,
    };
    const updated = foldTraceSample(trace, sample, state.traceLimit);
    if (updated !== trace) {
      traces = { ...traces, [card.activeTrial]: updated };
    }
  }

  return {
    ...state,
    channels: { ...state.channels, [channelId]: next },
    traces,
  };
}

/**
 * Attribute one sample to the active trial's trace. Displacement-mode
 * samples extend the decay record; impedance-mode samples accumulate into
 * sweep spans, where a non-sweep sample in between closes the open span
 * (first span = pre-trial sweep, last = post-trial sweep).
 */
function foldTraceSample(
  trace: TrialTrace,
  sample: TelemetrySample,
  limit: number,
): TrialTrace {
  if (sample.mode === "impedance_sweep") {
    const sweeps = trace.sweeps.slice();
    const last = sweeps[sweeps.length - 1];
    if (trace.sweepOpen && last) {
      sweeps[sweeps.length - 1] = pushCapped(
        last,
        { t: sample.t_s, v: sample.current_ua },
        limit,
      );
    } else {
      sweeps.push([{ t: sample.t_s, v: sample.current_ua }]);
    }
    return { ...trace, sweeps, sweepOpen: true };
  }
  if (sample.mode === "actuating_displacement" && sample.displacement_mm !== null) {
    return {
      ...trace,
      drive: pushCapped(
        trace.drive,
        { t: sample.t_s, v: sample.displacement_mm },
        limit,
      ),
      sweepOpen: false,
    };
  }
  if (trace.sweepOpen) {
    return { ...trace, sweepOpen: false };
  }
  return trace;
}

function applyEvent(state: ConsoleState, event: EventWire): ConsoleState {
  let next = appendLog(state, event);
  if (event.source === "rig") next = applyRigEvent(next, event);
  else if (event.source === "service") next = applyServiceEvent(next, event);
  else next = applyCampaignEvent(next, event);
  return next;
}

function appendLog(state: ConsoleState, event: EventWire): ConsoleState {
  const seq = (state.events[state.events.length - 1]?.seq ?? 0) + 1;
  const entry: EventLogEntry = {
    seq,
    tS: event.source === "rig" ? event.t_s : null,
    source: event.source,
    kind: event.kind,
    channel: channelOf(event),
    deviceId: deviceIdOf(event),
    text: formatEvent(event),
  };
  return {
    ...state,
    events: pushCapped(state.events, entry, state.eventLimit),
  };
}

function channelOf(event: EventWire): number | null {
  if (event.source === "rig" || event.source === "service") {
    return event.channel;
  }
  return event.channel ?? null;
}

function deviceIdOf(event: EventWire): string | null {
  if (event.source === "rig") {
    const id = event.detail["device_id"];
    return typeof id === "string" ? id : null;
  }
  return event.device_id ?? null;
}

export function formatEvent(event: EventWire): string {
  if (event.source === "rig") {
    const detail = Object.entries(event.detail)
      .map(([key, value]) => `${key}=${String(value)}`)
      .join(" ");
    const at = `t=${event.t_s.toFixed(3)}s`;
    return detail
      ? `ch${event.channel} ${event.kind} ${detail} (${at})`
      : `ch${event.channel} ${event.kind} (${at})`;
  }
  if (event.source === "service") {
    const life =
      event.lifetime_s !== undefined
        ? ` lifetime=${event.lifetime_s}s censored=${event.censored}`
        : "";
    const why = event.reason ? ` reason=${event.reason}` : "";
    return `ch${event.channel} trial ${event.device_id} ${event.status}${life}${why}`;
  }
  switch (event.kind) {
    case "stage_started":
      return `stage ${event.stage} started`;
    case "trial_started":
      return `trial ${event.device_id} started on ch${event.channel} (stage ${event.stage})`;
    case "trial_finished": {
      const life =
        event.lifetime_s !== undefined
          ? ` lifetime=${event.lifetime_s}s censored=${event.censored}`
          : "";
      return `trial ${event.device_id} ${event.status} on ch${event.channel}${life}`;
    }
    case "cell_completed":
      return (
        `cell ${cellTag(event.field_v_um ?? 0, event.frequency_hz ?? 0, event.filler ?? "?", event.cnt_conc_ml_fa ?? 0)}` +
        ` ${event.status}`
      );
    case "boundary_selected":
      return `boundary conditions: ${(event.pairs ?? [])
        .map((p) => `${p.field_v_um} V/um at ${p.frequency_hz} Hz`)
        .join(", ")}`;
    case "campaign_completed":
      return `campaign ${event.campaign_id} completed (${event.trials} trials)`;
    case "campaign_failed":
      return `campaign ${event.campaign_id} failed: ${event.error}`;
    default:
      // unknown future kinds still land in the log rather than vanish
      return String((event as { kind: unknown }).kind);
  }
}

function numberOr<T>(value: unknown, fallback: T): number | T {
  return typeof value === "number" && Number.isFinite(value)
    ? value
    : fallback;
}

function stringOr<T>(value: unknown, fallback: T): string | T {
  return typeof value === "string" ? value : fallback;
}

function booleanOr<T>(value: unknown, fallback: T): boolean | T {
  return typeof value === "boolean" ? value : fallback;
}

function applyRigEvent(
  state: ConsoleState,
  event: RigEventWire,
): ConsoleState {
  const detail = event.detail;
  if (event.kind === "trial_started" && typeof detail["device_id"] === "string") {
    const deviceId = detail["device_id"];
    const card = state.channels[event.channel] ?? emptyCard();
    const channels = {
      ...state.channels,
      [event.channel]: { ...card, activeTrial: deviceId },
    };
    const traces = state.traces[deviceId]
      ? state.traces
      : {
          ...state.traces,
          [deviceId]: {
            deviceId,
            channel: event.channel,
            drive: [],
            sweeps: [],
            sweepOpen: false,
          },
        };
    const next = upsertTrial(state, deviceId, event.channel, (row) => ({
      ...row,
      status: "Running",
      field: numberOr(detail["field_v_um"], row.field),
      freq: numberOr(detail["frequency_hz"], row.freq),
      filler: stringOr(detail["filler"], row.filler),
      cnt: numberOr(detail["cnt_conc_ml_fa"], row.cnt),
    }));
    return { ...next, channels, traces };
  }
  if (event.kind === "trial_finished" && typeof detail["device_id"] === "string") {
    const deviceId = detail["device_id"];
    const cause = stringOr(detail["terminal_cause"], null);
    const next = upsertTrial(state, deviceId, event.channel, (row) => ({
      ...row,
      status: cause === "Aborted" ? "Aborted" : "Complete",
      lifetimeS: numberOr(detail["lifetime_s"], row.lifetimeS),
      censored: booleanOr(detail["censored"], row.censored),
      cause: cause ?? row.cause,
    }));
    return clearActiveTrial(next, event.channel);
  }
  return state;
}

function applyServiceEvent(
  state: ConsoleState,
  event: ServiceEventWire,
): ConsoleState {
  const next = upsertTrial(state, event.device_id, event.channel, (row) => ({
    ...row,
    status: event.status,
    lifetimeS: event.lifetime_s ?? row.lifetimeS,
    censored: event.censored ?? row.censored,
    cause: event.terminal_cause ?? row.cause,
  }));
  return clearActiveTrial(next, event.channel);
}

function applyCampaignEvent(
  state: ConsoleState,
  event: CampaignEventWire,
): ConsoleState {
  switch (event.kind) {
    case "stage_started":
      return { ...state, stage: event.stage ?? state.stage };
    case "trial_started": {
      if (!event.device_id || event.channel === undefined) return state;
      const deviceId = event.device_id;
      const next = upsertTrial(state, deviceId, event.channel, (row) => ({
        ...row,
        stage: event.stage ?? row.stage,
        status: "Running",
      }));
      return advanceCellFromDevice(next, deviceId, "running");
    }
    case "trial_finished": {
      if (!event.device_id || event.channel === undefined) return state;
      const status = normalizeStatus(event.status);
      let next = upsertTrial(state, event.device_id, event.channel, (row) => ({
        ...row,
        status,
        lifetimeS: event.lifetime_s ?? row.lifetimeS,
        censored: event.censored ?? row.censored,
      }));
      next = clearActiveTrial(next, event.channel);
      return recordCellOutcome(next, event);
    }
    case "cell_completed": {
      if (
        event.field_v_um === undefined ||
        event.frequency_hz === undefined ||
        event.filler === undefined ||
        event.cnt_conc_ml_fa === undefined
      ) {
        return state;
      }
      const tag = cellTag(
        event.field_v_um,
        event.frequency_hz,
        event.filler,
        event.cnt_conc_ml_fa,
      );
      return advanceCell(state, tag, normalizeCellStatus(event.status));
    }
    case "boundary_selected":
      return { ...state, boundaries: event.pairs ?? [] };
    case "campaign_completed":
      return { ...state, campaignState: "completed" };
    case "campaign_failed":
      return {
        ...state,
        campaignState: "failed",
        banner: event.error ?? state.banner,
      };
    default:
      return state;
  }
}

function normalizeStatus(status: string | undefined): TrialStatusUi {
  if (status === "Aborted" || status === "Faulted" || status === "Complete") {
    return status;
  }
  return "Complete";
}

function normalizeCellStatus(status: string | undefined): CellStatus {
  if (status === "stable" || status === "completed" || status === "running") {
    return status;
  }
  return "completed";
}

function upsertTrial(
  state: ConsoleState,
  deviceId: string,
  channel: number,
  update: (row: TrialRow) => TrialRow,
): ConsoleState {
  const index = state.trials.findIndex((row) => row.deviceId === deviceId);
  const trials = state.trials.slice();
  if (index >= 0) {
    const row = trials[index];
    if (row) trials[index] = update(row);
  } else {
    trials.push(
      update({
        deviceId,
        channel,
        stage: null,
        field: null,
        freq: null,
        filler: null,
        cnt: null,
        status: "Running",
        lifetimeS: null,
        censored: null,
        cause: null,
      }),
    );
  }
  return { ...state, trials };
}

function clearActiveTrial(
  state: ConsoleState,
  channelId: number,
): ConsoleState {
  const card = state.channels[channelId];
  if (!card || card.activeTrial === null) return state;
  return {
    ...state,
    channels: {
      ...state.channels,
      [channelId]: { ...card, activeTrial: null },
    },
  };
}

const CELL_RANK: Record<CellStatus, number> = {
  pending: 0,
  running: 1,
  stable: 2,
  completed: 2,
};

function advanceCell(
  state: ConsoleState,
  tag: string,
  status: CellStatus,
): ConsoleState {
  const parsed = parseCellTag(tag);
  const existing = state.cells[tag];
  if (!existing && !parsed) return state;
  const cell: CellEntry = existing ?? {
    tag,
    field: parsed!.field,
    freq: parsed!.freq,
    filler: parsed!.filler,
    cnt: parsed!.cnt,
    status: "pending",
    lifetimes: [],
    censoredCount: 0,
    trialCount: 0,
  };
  if (CELL_RANK[status] < CELL_RANK[cell.status]) return state;
  return {
    ...state,
    cells: { ...state.cells, [tag]: { ...cell, status } },
  };
}

function advanceCellFromDevice(
  state: ConsoleState,
  deviceId: string,
  status: CellStatus,
): ConsoleState {
  const tag = cellTagOfDevice(deviceId);
  return tag ? advanceCell(state, tag, status) : state;
}

function recordCellOutcome(
  state: ConsoleState,
  event: CampaignEventWire,
): ConsoleState {
  const tag = event.device_id ? cellTagOfDevice(event.device_id) : null;
  if (!tag) return state;
  const cell = state.cells[tag];
  if (!cell) return state;
  const lifetimes =
    event.lifetime_s !== undefined
      ? [...cell.lifetimes, event.lifetime_s]
      : cell.lifetimes;
  return {
    ...state,
    cells: {
      ...state.cells,
      [tag]: {
        ...cell,
        lifetimes,
        trialCount: cell.trialCount + 1,
        censoredCount: cell.censoredCount + (event.censored ? 1 : 0),
      },
    },
  };
}

// --------------------------------------------------------------------------
// tags

export function cellTag(
  field: number,
  freq: number,
  filler: string,
  cnt: number,
): string {
  return `f${compactNumber(field)}-q${compactNumber(freq)}-${filler}${compactNumber(cnt)}`;
}

/** Matches the service's `{:g}` formatting for tag components. */
function compactNumber(value: number): string {
  return String(Number(value));
}

/** Strip the stage prefix and replicate suffix off a planned device id. */
export function cellTagOfDevice(deviceId: string): string | null {
  const dash = deviceId.indexOf("-");
  if (dash < 0) return null;
  const rest = deviceId.slice(dash + 1);
  const rIndex = rest.lastIndexOf("-r");
  const tag = rIndex >= 0 ? rest.slice(0, rIndex) : rest;
  return parseCellTag(tag) ? tag : null;
}

export function parseCellTag(
  tag: string,
): { field: number; freq: number; filler: string; cnt: number } | null {
  const match = /^f([0-9.]+)-q([0-9.]+)-([A-Za-z]+)([0-9.]+)$/.exec(tag);
  if (!match) return null;
  return {
    field: Number(match[1]),
    freq: Number(match[2]),
    filler: match[3]!,
    cnt: Number(match[4]),
  };
}

// --------------------------------------------------------------------------
// derived views (all pure)

/**
 * The reason string shown when the impedance action is unavailable. This
 * mirrors the service's own rejection so the tooltip and a rejected
 * command read identically.
 */
export const IMPEDANCE_INTERLOCK_REASON =
  "interlock: impedance station requires the output zeroed and isolated";

export function impedanceGate(state: ChannelState | null): {
  enabled: boolean;
  tooltip: string | null;
} {
  if (state && state.hv_live) {
    return { enabled: false, tooltip: IMPEDANCE_INTERLOCK_REASON };
  }
  return { enabled: true, tooltip: null };
}

/** Group material cells into field × frequency buckets for the heatmap. */
export function heatmap(state: ConsoleState): HeatmapBucket[] {
  const buckets = new Map<string, HeatmapBucket>();
  for (const cell of Object.values(state.cells)) {
    const key = `${cell.field}|${cell.freq}`;
    let bucket = buckets.get(key);
    if (!bucket) {
      bucket = {
        field: cell.field,
        freq: cell.freq,
        status: "pending",
        stable: false,
        boundary: isBoundary(state.boundaries, cell.field, cell.freq),
        meanLifetimeS: null,
        trialCount: 0,
        censoredCount: 0,
        tags: [],
      };
      buckets.set(key, bucket);
    }
    bucket.tags.push(cell.tag);
    bucket.trialCount += cell.trialCount;
    bucket.censoredCount += cell.censoredCount;
    if (CELL_RANK[cell.status] > CELL_RANK[bucket.status]) {
      bucket.status = cell.status;
    }
  }
  for (const bucket of buckets.values()) {
    const lifetimes = bucket.tags.flatMap(
      (tag) => state.cells[tag]?.lifetimes ?? [],
    );
    if (lifetimes.length > 0) {
      bucket.meanLifetimeS =
        lifetimes.reduce((sum, value) => sum + value, 0) / lifetimes.length;
    }
    const members = bucket.tags
      .map((tag) => state.cells[tag])
      .filter((cell): cell is CellEntry => cell !== undefined);
    bucket.stable =
      members.length > 0 && members.every((cell) => cell.status === "stable");
    bucket.tags.sort();
  }
  return [...buckets.values()].sort(
    (a, b) => a.field - b.field || a.freq - b.freq,
  );
}

function isBoundary(
  boundaries: BoundaryPair[] | null,
  field: number,
  freq: number,
): boolean {
  return (
    boundaries !== null &&
    boundaries.some(
      (pair) => pair.field_v_um === field && pair.frequency_hz === freq,
    )
  );
}

export function trialTable(state: ConsoleState): TrialRow[] {
  return state.trials;
}

/** Trials belonging to one heatmap cell, for the drill-down panel. */
export function trialsForCell(
  state: ConsoleState,
  tag: string,
): TrialRow[] {
  return state.trials.filter(
    (row) => cellTagOfDevice(row.deviceId) === tag,
  );
}

/**
 * CSV of the samples the console received for one trial (at the subscribed
 * stream rate). The full-rate record lives in the run directory on the
 * service host; this is the browser-side capture offered for download.
 */
export function traceCsv(state: ConsoleState, deviceId: string): string | null {
  const trace = state.traces[deviceId];
  if (!trace) return null;
  const lines = ["section,t_s,value"];
  trace.sweeps.forEach((span, index) => {
    const label = sweepLabel(index, trace.sweeps.length);
    for (const point of span) {
      lines.push(`${label},${point.t},${point.v}`);
    }
  });
  for (const point of trace.drive) {
    lines.push(`drive_displacement_mm,${point.t},${point.v}`);
  }
  return lines.join("\n") + "\n";
}

export function sweepLabel(index: number, total: number): string {
  if (total <= 1) return "sweep_current_ua";
  if (index === 0) return "pre_sweep_current_ua";
  if (index === total - 1) return "post_sweep_current_ua";
  return `sweep${index}_current_ua`;
}
