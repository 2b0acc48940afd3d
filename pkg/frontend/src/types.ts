/**
 * Wire types for the lab service's HTTP + WebSocket API.
 *
 * Everything here mirrors the JSON the service actually sends; the console
 * renders these shapes and never derives physics of its own.
 */

export interface TimeBase {
  simulated: boolean;
  accel: number | null;
}

/** Summary of the last trial a channel ran (null until one finishes). */
export interface LastTrial {
  device_id: string;
  status: "Complete" | "Aborted" | "Faulted";
  lifetime_s?: number;
  censored?: boolean;
  terminal_cause?: string;
  reason?: string;
}

export interface ChannelState {
  schema_version: number;
  channel: number;
  mode: string;
  faulted: boolean;
  fault_reason: string | null;
  hv_live: boolean;
  hv_isolated: boolean;
  clamp_force_n: number | null;
  current_trial: string | null;
  trials_run: number;
  last_trial: LastTrial | null;
}

/** Body of POST /channels/{cid}/commands and /campaigns/{id}/commands. */
export interface CommandRequest {
  action: "StartTrial" | "Abort" | "SwitchMode" | "ResetFault" | string;
  payload?: Record<string, unknown>;
}

/** 200 and 409 responses share this envelope; the reason is verbatim. */
export interface CommandResponse {
  schema_version: number;
  accepted: boolean;
  reason: string;
}

export interface PlannedTrialWire {
  device_id: string;
  stage: number;
  field_v_um: number;
  frequency_hz: number;
  filler: string;
  cnt_conc_ml_fa: number;
  replicate: number;
  skippable_when_stable: boolean;
}

export interface CampaignStartResponse {
  schema_version: number;
  campaign_id: string;
  run_dir: string;
  accel: number | null;
  stage1_plan: PlannedTrialWire[];
}

export type CampaignRunState = "running" | "completed" | "aborted" | "failed";

/** Cell progression as the service reports it (rank never decreases). */
export type CellStatus = "pending" | "running" | "stable" | "completed";

export interface BoundaryPair {
  field_v_um: number;
  frequency_hz: number;
}

export interface CampaignStatusWire {
  schema_version: number;
  campaign_id: string;
  status: CampaignRunState;
  stage: number;
  cells: Record<string, CellStatus>;
  running_trials: Record<string, string>;
  boundaries: BoundaryPair[] | null;
  error: string | null;
  run_dir: string;
}

// --------------------------------------------------------------------------
// Report document (GET /runs/{id}/report → {schema_version, report})

export interface MaterialRef {
  filler: string;
  cnt_conc_ml_fa: number;
}

export interface ReportCell {
  field_v_um: number;
  frequency_hz: number;
  filler: string;
  cnt_conc_ml_fa: number;
  n: number;
  lifetime_mean_s: number;
  lifetime_std_s: number;
  displacement_mean_mm: number;
  displacement_std_mm: number;
  censored_count: number;
  stable: boolean;
}

export interface ReportSelection {
  boundary_field_v_um: number;
  boundary_frequency_hz: number;
  lifetime_best: MaterialRef;
  displacement_best: MaterialRef;
  split: boolean;
  combination: MaterialRef | null;
}

export interface ReportComparison {
  boundary_field_v_um: number;
  boundary_frequency_hz: number;
  rank: number;
  filler: string;
  cnt_conc_ml_fa: number;
  lifetime_mean_s: number;
  lifetime_std_s: number;
  displacement_mean_mm: number;
  displacement_std_mm: number;
  lifetime_improvement_pct: number;
  displacement_delta_mm: number;
}

export interface ReportSummary {
  boundary_field_v_um: number;
  boundary_frequency_hz: number;
  best: MaterialRef;
  baseline: MaterialRef;
  worst: MaterialRef;
  best_vs_baseline_pct: number;
  best_vs_worst_pct: number;
}

export interface ReportDoc {
  name: string;
  seed: number;
  boundaries: BoundaryPair[];
  cells: ReportCell[];
  selections: ReportSelection[];
  comparisons: ReportComparison[];
  summaries: ReportSummary[];
}

// --------------------------------------------------------------------------
// Stream frames (WS /stream)

export interface TelemetrySample {
  t_s: number;
  channel: number;
  mode: string;
  voltage_v: number;
  current_ua: number;
  displacement_mm: number | null;
  force_n: number | null;
  clamp_force_n: number | null;
  hv_isolated: boolean;
}

export interface RigEventWire {
  source: "rig";
  t_s: number;
  channel: number;
  kind: string;
  detail: Record<string, unknown>;
}

export interface ServiceEventWire {
  source: "service";
  kind: "trial_finished";
  channel: number;
  device_id: string;
  status: "Complete" | "Aborted" | "Faulted";
  lifetime_s?: number;
  censored?: boolean;
  terminal_cause?: string;
  reason?: string;
}

export interface CampaignEventWire {
  source: "campaign";
  campaign_id: string;
  kind:
    | "stage_started"
    | "trial_started"
    | "trial_finished"
    | "cell_completed"
    | "boundary_selected"
    | "campaign_completed"
    | "campaign_failed";
  stage?: number;
  device_id?: string;
  channel?: number;
  status?: string;
  lifetime_s?: number;
  censored?: boolean;
  field_v_um?: number;
  frequency_hz?: number;
  filler?: string;
  cnt_conc_ml_fa?: number;
  pairs?: BoundaryPair[];
  trials?: number;
  error?: string;
}

export type EventWire = RigEventWire | ServiceEventWire | CampaignEventWire;

export interface SubscribedFrame {
  schema_version: number;
  kind: "subscribed";
  channels: number[];
  samples_hz: number;
  time_base: TimeBase;
}

export interface ChannelStateFrame {
  schema_version: number;
  kind: "channel_state";
  time_base: TimeBase;
  state: ChannelState;
}

export interface TelemetryFrame {
  schema_version: number;
  kind: "telemetry";
  time_base: TimeBase;
  channel: number;
  sample: TelemetrySample;
}

export interface EventFrame {
  schema_version: number;
  kind: "event";
  time_base: TimeBase;
  event: EventWire;
}

export type StreamFrame =
  | SubscribedFrame
  | ChannelStateFrame
  | TelemetryFrame
  | EventFrame;
