/**
 * Transport unit tests against fake fetch/WebSocket implementations:
 * rejected commands must surface the server's reason untouched, and the
 * stream helper must hold the one-connection-per-page rule.
 */

import { describe, expect, it } from "vitest";

import { RequestError, ServiceClient, type WsLike } from "../src/transport.js";
import type { StreamFrame } from "../src/types.js";

type Listener = (event: { data: unknown }) => void;

class FakeSocket implements WsLike {
  static instances: FakeSocket[] = [];
  readonly sent: string[] = [];
  private listeners = new Map<string, ((event: never) => void)[]>();

  constructor(readonly url: string) {
    FakeSocket.instances.push(this);
  }

  addEventListener(type: string, listener: (event: never) => void): void {
    const existing = this.listeners.get(type) ?? [];
    existing.push(listener);
    this.listeners.set(type, existing);
  }

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.fire("close", undefined);
  }

  fire(type: string, payload: unknown): void {
    for (const listener of this.listeners.get(type) ?? []) {
      (listener as (event: unknown) => void)(payload);
    }
  }
}

function fakeFetch(
  routes: Record<string, { status: number; body: unknown }>,
) {
  const calls: { url: string; init?: unknown }[] = [];
  const impl = async (url: string, init?: unknown) => {
    calls.push({ url, init });
    const key = `${(init as { method?: string } | undefined)?.method ?? "GET"} ${url}`;
    const route = routes[key];
    if (!route) throw new Error(`unexpected request ${key}`);
    return {
      status: route.status,
      json: async () => route.body,
    };
  };
  return { impl, calls };
}

describe("ServiceClient HTTP", () => {
  it("returns rejected command envelopes verbatim on 409", async () => {
    const reason =
      "interlock: impedance station requires the output zeroed and isolated";
    const { impl } = fakeFetch({
      "POST http://lab/channels/0/commands": {
        status: 409,
        body: { schema_version: 1, accepted: false, reason },
      },
    });
    const client = new ServiceClient("http://lab", { fetch: impl });
    const response = await client.channelCommand(0, "SwitchMode", {
      mode: "impedance",
    });
    expect(response.accepted).toBe(false);
    expect(response.reason).toBe(reason);
  });

  it("throws RequestError with the server message on 404", async () => {
    const { impl } = fakeFetch({
      "GET http://lab/campaigns/c9999": {
        status: 404,
        body: { schema_version: 1, error: "campaign c9999 not found" },
      },
    });
    const client = new ServiceClient("http://lab", { fetch: impl });
    await expect(client.campaignStatus("c9999")).rejects.toThrow(
      "campaign c9999 not found",
    );
    await expect(client.campaignStatus("c9999")).rejects.toBeInstanceOf(
      RequestError,
    );
  });

  it("maps campaign start rejections (422) to the reason string", async () => {
    const { impl, calls } = fakeFetch({
      "POST http://lab/campaigns": {
        status: 422,
        body: { schema_version: 1, accepted: false, reason: "bad manifest: seed" },
      },
    });
    const client = new ServiceClient("http://lab", { fetch: impl });
    const result = await client.startCampaign({ name: "x" });
    expect(result).toEqual({ kind: "rejected", reason: "bad manifest: seed" });
    const sent = JSON.parse(
      (calls[0]?.init as { body: string }).body,
    ) as Record<string, unknown>;
    expect(sent["manifest"]).toEqual({ name: "x" });
  });

  it("reports pending when the run report is not ready (409)", async () => {
    const { impl } = fakeFetch({
      "GET http://lab/runs/c0001/report": {
        status: 409,
        body: { schema_version: 1, accepted: false, reason: "campaign still running" },
      },
    });
    const client = new ServiceClient("http://lab", { fetch: impl });
    const result = await client.report("c0001");
    expect(result).toEqual({ kind: "pending", reason: "campaign still running" });
  });
});

describe("ServiceClient stream", () => {
  it("opens ws://…/stream, subscribes, and delivers parsed frames in order", () => {
    FakeSocket.instances = [];
    const client = new ServiceClient("http://lab:8000", {
      ws: (url) => new FakeSocket(url),
      fetch: fakeFetch({}).impl,
    });
    const frames: StreamFrame[] = [];
    client.openStream({ channels: [0, 1], samplesHz: 10 }, (frame) =>
      frames.push(frame),
    );
    const socket = FakeSocket.instances[0]!;
    expect(socket.url).toBe("ws://lab:8000/stream");

    socket.fire("open", undefined);
    expect(JSON.parse(socket.sent[0]!)).toEqual({
      channels: [0, 1],
      samples_hz: 10,
    });

    const subscribed = {
      schema_version: 1,
      kind: "subscribed",
      channels: [0, 1],
      samples_hz: 10,
      time_base: { simulated: true, accel: 1000 },
    };
    (socket.fire as (type: string, payload: { data: string }) => void)(
      "message",
      { data: JSON.stringify(subscribed) },
    );
    expect(frames).toEqual([subscribed]);
  });

  it("enforces a single live stream per client", () => {
    FakeSocket.instances = [];
    const client = new ServiceClient("http://lab", {
      ws: (url) => new FakeSocket(url),
      fetch: fakeFetch({}).impl,
    });
    const handle = client.openStream({}, () => undefined);
    expect(() => client.openStream({}, () => undefined)).toThrow(
      "a stream is already open",
    );
    handle.close();
    expect(handle.closed).toBe(true);
    expect(() => client.openStream({}, () => undefined)).not.toThrow();
  });
});

// The Listener alias documents the fake's message-event contract.
void (null as unknown as Listener);
