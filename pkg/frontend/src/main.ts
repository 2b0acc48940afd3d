/**
 * Browser entry point: wires the transport, the pure view-model, and the
 * renderer together.
 *
 * State changes render only after the server has answered — commands do an
 * immediate truth refetch instead of optimistic updates, and the stream is
 * the only push channel (one connection per page).
 */

import { ServiceClient } from "./transport.js";
import type { StreamFrame } from "./types.js";
import {
  applyFrame,
  clearBanner,
  initialState,
  withCampaignStarted,
  withCampaignStatus,
  withChannelStates,
  withRejection,
  withReport,
  type ConsoleState,
} from "./viewmodel.js";
import { mount, render, type UiSelection } from "./render.js";

const CAMPAIGN_STORAGE_KEY = "dealab.console.campaign";

/** Rig/service event kinds after which the channel cards are refetched. */
const CHANNEL_TRUTH_EVENTS = new Set([
  "trial_started",
  "trial_finished",
  "trial_aborted",
  "mode_entered",
  "fault",
  "fault_reset",
  "clamp_converged",
  "hv_zeroed",
  "isolation_set",
  "drive_on",
  "drive_off",
]);

function start(): void {
  const root = document.getElementById("root");
  if (!root) throw new Error("missing #root element");

  const client = new ServiceClient(window.location.origin);
  let state: ConsoleState = initialState();
  const ui: UiSelection = { selectedCell: null };

  let renderQueued = false;
  const rerender = (): void => {
    if (renderQueued) return;
    renderQueued = true;
    requestAnimationFrame(() => {
      renderQueued = false;
      render(root, state, ui);
    });
  };
  const update = (next: ConsoleState): void => {
    state = next;
    rerender();
  };

  let refetchQueued = false;
  const refetchChannels = (): void => {
    if (refetchQueued) return;
    refetchQueued = true;
    setTimeout(() => {
      refetchQueued = false;
      void client
        .channels()
        .then((states) => update(withChannelStates(state, states)))
        .catch(() => undefined);
    }, 150);
  };

  const fetchReport = (campaignId: string, attempt = 0): void => {
    void client
      .report(campaignId)
      .then((result) => {
        if (result.kind === "ready") {
          update(withReport(state, result.report));
        } else if (attempt < 20) {
          setTimeout(() => fetchReport(campaignId, attempt + 1), 500);
        }
      })
      .catch(() => undefined);
  };

  const onFrame = (frame: StreamFrame): void => {
    update(applyFrame(state, frame));
    if (frame.kind !== "event") return;
    const event = frame.event;
    if (
      (event.source === "rig" || event.source === "service") &&
      CHANNEL_TRUTH_EVENTS.has(event.kind)
    ) {
      refetchChannels();
    }
    if (event.source === "campaign" && event.kind === "campaign_completed") {
      fetchReport(event.campaign_id);
      void client
        .campaignStatus(event.campaign_id)
        .then((status) => update(withCampaignStatus(state, status)))
        .catch(() => undefined);
    }
  };

  const openStream = (): void => {
    client.openStream({ samplesHz: 10 }, onFrame, () => {
      update({ ...state, streamLive: false });
      setTimeout(openStream, 2000);
    });
  };

  mount(root, {
    onStartCampaign: (manifestText, accelText) => {
      let manifest: Record<string, unknown>;
      try {
        manifest = JSON.parse(manifestText) as Record<string, unknown>;
      } catch (error) {
        update(withRejection(state, `manifest is not valid JSON: ${error}`));
        return;
      }
      const accel = accelText.trim() === "" ? undefined : Number(accelText);
      void client
        .startCampaign(manifest, accel)
        .then((result) => {
          if (result.kind === "started") {
            window.localStorage.setItem(
              CAMPAIGN_STORAGE_KEY,
              result.response.campaign_id,
            );
            update(withCampaignStarted(clearBanner(state), result.response));
          } else {
            update(withRejection(state, result.reason));
          }
        })
        .catch((error) => update(withRejection(state, String(error))));
    },
    onAbortCampaign: () => {
      const campaignId = state.campaignId;
      if (!campaignId) return;
      void client
        .abortCampaign(campaignId)
        .then((response) => {
          if (!response.accepted) update(withRejection(state, response.reason));
          return client.campaignStatus(campaignId);
        })
        .then((status) => update(withCampaignStatus(state, status)))
        .catch((error) => update(withRejection(state, String(error))));
    },
    onChannelCommand: (cid, action, payload) => {
      void client
        .channelCommand(cid, action, payload)
        .then((response) => {
          if (!response.accepted) update(withRejection(state, response.reason));
          refetchChannels();
        })
        .catch((error) => update(withRejection(state, String(error))));
    },
    onSelectCell: (tag) => {
      ui.selectedCell = tag;
      rerender();
    },
    onDismissBanner: () => update(clearBanner(state)),
  });

  // Boot: current channel truth, then any remembered campaign, then the
  // single stream subscription. A reload rebuilds everything from queries.
  void client
    .channels()
    .then((states) => update(withChannelStates(state, states)))
    .catch(() => undefined)
    .then(() => {
      const remembered = window.localStorage.getItem(CAMPAIGN_STORAGE_KEY);
      if (!remembered) return;
      return client
        .campaignStatus(remembered)
        .then((status) => {
          update(withCampaignStatus(state, status));
          if (status.status === "completed") fetchReport(remembered);
        })
        .catch(() => window.localStorage.removeItem(CAMPAIGN_STORAGE_KEY));
    })
    .then(() => openStream());

  rerender();
}

start();
