/**
 * HTTP + WebSocket client for the lab service.
 *
 * The console is forbidden from inventing state, so this layer does nothing
 * but move the service's JSON across: rejected commands come back with the
 * server's reason string untouched, and the stream handle enforces the
 * one-connection-per-page rule.
 */

import type {
  CampaignStartResponse,
  CampaignStatusWire,
  ChannelState,
  CommandResponse,
  ReportDoc,
  StreamFrame,
} from "./types.js";

/** Minimal WebSocket surface shared by browsers and the `ws` package. */
export interface WsLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: "open", listener: () => void): void;
  addEventListener(
    type: "message",
    listener: (event: { data: unknown }) => void,
  ): void;
  addEventListener(type: "close", listener: () => void): void;
  addEventListener(type: "error", listener: (event: unknown) => void): void;
}

export type WsFactory = (url: string) => WsLike;

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ status: number; json(): Promise<unknown> }>;

/** Thrown for responses that carry `{error}` (404) or unexpected statuses. */
export class RequestError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "RequestError";
  }
}

export type StartCampaignResult =
  | { kind: "started"; response: CampaignStartResponse }
  | { kind: "rejected"; reason: string };

export type ReportResult =
  | { kind: "ready"; report: ReportDoc }
  | { kind: "pending"; reason: string };

export interface StreamHandle {
  close(): void;
  readonly closed: boolean;
}

export interface StreamOptions {
  channels?: number[];
  samplesHz?: number;
}

const JSON_HEADERS = { "content-type": "application/json" };

export class ServiceClient {
  private readonly baseUrl: string;
  private readonly wsFactory: WsFactory;
  private readonly fetchImpl: FetchLike;
  private stream: { closed: boolean } | null = null;

  constructor(
    baseUrl: string,
    options: { ws?: WsFactory; fetch?: FetchLike } = {},
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.wsFactory =
      options.ws ??
      ((url: string) => new WebSocket(url) as unknown as WsLike);
    this.fetchImpl =
      options.fetch ??
      ((input, init) =>
        globalThis.fetch(input, init as RequestInit) as Promise<{
          status: number;
          json(): Promise<unknown>;
        }>);
  }

  // -- plain HTTP ----------------------------------------------------------

  async channels(): Promise<ChannelState[]> {
    const body = await this.getJson(`/channels`);
    return (body as { channels: ChannelState[] }).channels;
  }

  /**
   * Issue one channel command. Accepted (200) and rejected (409) both
   * resolve to the server's envelope so callers can surface `reason`
   * verbatim; 404 throws.
   */
  async channelCommand(
    cid: number,
    action: string,
    payload?: Record<string, unknown>,
  ): Promise<CommandResponse> {
    return this.postCommand(`/channels/${cid}/commands`, action, payload);
  }

  async startCampaign(
    manifest: Record<string, unknown>,
    accel?: number | null,
  ): Promise<StartCampaignResult> {
    const body: Record<string, unknown> = { manifest };
    if (accel !== undefined) body["accel"] = accel;
    const response = await this.fetchImpl(`${this.baseUrl}/campaigns`, {
      method: "POST",
      headers: JSON_HEADERS,
      body: JSON.stringify(body),
    });
    const parsed = (await response.json()) as Record<string, unknown>;
    if (response.status === 200) {
      return {
        kind: "started",
        response: parsed as unknown as CampaignStartResponse,
      };
    }
    if (response.status === 409 || response.status === 422) {
      return { kind: "rejected", reason: String(parsed["reason"]) };
    }
    throw new RequestError(response.status, describe(parsed));
  }

  async campaignStatus(campaignId: string): Promise<CampaignStatusWire> {
    const body = await this.getJson(`/campaigns/${campaignId}`);
    return body as CampaignStatusWire;
  }

  async abortCampaign(campaignId: string): Promise<CommandResponse> {
    return this.postCommand(`/campaigns/${campaignId}/commands`, "Abort");
  }

  /** Fetch a finished run's report; 409 means the campaign is still going. */
  async report(campaignId: string): Promise<ReportResult> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/runs/${campaignId}/report`,
    );
    const parsed = (await response.json()) as Record<string, unknown>;
    if (response.status === 200) {
      return { kind: "ready", report: parsed["report"] as ReportDoc };
    }
    if (response.status === 409) {
      return { kind: "pending", reason: String(parsed["reason"]) };
    }
    throw new RequestError(response.status, describe(parsed));
  }

  // -- streaming -----------------------------------------------------------

  /**
   * Open the page's single stream subscription. Frames are delivered to
   * `sink` in server order; opening a second stream while one is live
   * throws, matching the one-connection-per-page contract.
   */
  openStream(
    options: StreamOptions,
    sink: (frame: StreamFrame) => void,
    onClose?: () => void,
  ): StreamHandle {
    if (this.stream && !this.stream.closed) {
      throw new Error("a stream is already open on this client");
    }
    const wsUrl =
      this.baseUrl.replace(/^http/, "ws") + "/stream";
    const socket = this.wsFactory(wsUrl);
    const tracker = { closed: false };
    this.stream = tracker;

    socket.addEventListener("open", () => {
      const request: Record<string, unknown> = {};
      if (options.channels !== undefined) request["channels"] = options.channels;
      if (options.samplesHz !== undefined) {
        request["samples_hz"] = options.samplesHz;
      }
      socket.send(JSON.stringify(request));
    });
    socket.addEventListener("message", (event) => {
      sink(JSON.parse(String(event.data)) as StreamFrame);
    });
    socket.addEventListener("close", () => {
      tracker.closed = true;
      onClose?.();
    });
    socket.addEventListener("error", () => {
      // the paired close event performs the bookkeeping
    });

    return {
      close: () => {
        tracker.closed = true;
        socket.close();
      },
      get closed() {
        return tracker.closed;
      },
    };
  }

  // -- helpers ---------------------------------------------------------------

  private async getJson(path: string): Promise<unknown> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`);
    const parsed = (await response.json()) as Record<string, unknown>;
    if (response.status !== 200) {
      throw new RequestError(response.status, describe(parsed));
    }
    return parsed;
  }

  private async postCommand(
    path: string,
    action: string,
    payload?: Record<string, unknown>,
  ): Promise<CommandResponse> {
    const body: Record<string, unknown> = { action };
    if (payload !== undefined) body["payload"] = payload;
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: JSON_HEADERS,
      body: JSON.stringify(body),
    });
    const parsed = (await response.json()) as Record<string, unknown>;
    if (response.status === 200 || response.status === 409) {
      return parsed as unknown as CommandResponse;
    }
    throw new RequestError(response.status, describe(parsed));
  }
}

function describe(body: Record<string, unknown>): string {
  if (typeof body["error"] === "string") return body["error"];
  if (typeof body["reason"] === "string") return body["reason"];
  return JSON.stringify(body);
}
