"""HTTP + streaming control surface for live bench operation.

One :class:`LabService` owns a fixed set of simulated rig channels and
exposes them over a small JSON API: start and monitor optimization
campaigns, drive individual channels (single trials, station switches,
aborts, fault resets), and stream decimated telemetry plus progress events
to any number of consoles.

Concurrency model: every channel has one command lock — a command is either
executed while holding it or rejected immediately, so no external command
can interleave inside a rig switching sequence or a running trial.  A
campaign holds all channel locks for its whole duration.  Stream fan-out is
one queue per subscriber fed under a hub lock, so all subscribers observe
the same event sequence in the same order.

Campaigns run in accelerated simulated time, 1000x by default; the time
base is attached to every stream frame so consoles can translate simulated
timestamps to wall time.
"""

from __future__ import annotations

import asyncio
import dataclasses
import itertools
import threading
from pathlib import Path
from typing import Any

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from . import analysis, campaign, device, randomness, rig, store
from .adapters import SimulatedChannelHardware
from .calibration import DEFAULT, Calibration
from .simclock import SimClock

__all__ = ["LabService", "create_app", "SCHEMA_VERSION", "DEFAULT_ACCEL",
           "DEFAULT_STREAM_HZ", "Decimator"]

SCHEMA_VERSION = 1
DEFAULT_ACCEL = 1000.0
DEFAULT_STREAM_HZ = 10.0

COMMAND_ACTIONS = ("StartCampaign", "StartTrial", "Abort", "SwitchMode",
                   "ResetFault")

# ranks for the monotone per-cell progress contract: status may only move up
_CELL_RANK = {"pending": 0, "running": 1, "stable": 2, "completed": 2}


def default_data_dir() -> Path:
    return store.default_data_root()


class Decimator:
    """Keep every n-th sample of a stream to approximate a target rate.

    The stride is re-derived from the observed sample spacing, so a stream
    acquired at 100 Hz decimated to 1 Hz delivers exactly every 100th
    sample, and a stream slower than the target rate passes through whole.
    """

    def __init__(self, samples_hz: float):
        if samples_hz <= 0:
            raise ValueError("samples_hz must be positive")
        self.samples_hz = samples_hz
        self._count = 0
        self._prev_t: float | None = None
        self._stride = 1

    def admit(self, t_s: float) -> bool:
        if self._prev_t is not None:
            dt = t_s - self._prev_t
            if dt > 0.0:
                self._stride = max(1, round(1.0 / (dt * self.samples_hz)))
        self._prev_t = t_s
        admit = self._count % self._stride == 0
        self._count += 1
        return admit


@dataclasses.dataclass
class _Subscription:
    queue: asyncio.Queue
    loop: asyncio.AbstractEventLoop
    channels: frozenset[int]
    decimators: dict[int, Decimator]

    def push(self, frame: dict) -> None:
        self.loop.call_soon_threadsafe(self.queue.put_nowait, frame)


class StreamHub:
    """Thread-safe fan-out of telemetry and progress frames."""

    def __init__(self, time_base: dict):
        self._lock = threading.Lock()
        self._subs: dict[int, _Subscription] = {}
        self._ids = itertools.count(1)
        self.time_base = time_base

    def subscribe(self, channels: set[int], samples_hz: float,
                  loop: asyncio.AbstractEventLoop) -> tuple[int, asyncio.Queue]:
        sub = _Subscription(
            queue=asyncio.Queue(), loop=loop, channels=frozenset(channels),
            decimators={c: Decimator(samples_hz) for c in channels})
        with self._lock:
            sid = next(self._ids)
            self._subs[sid] = sub
        return sid, sub.queue

    def unsubscribe(self, sid: int) -> None:
        with self._lock:
            self._subs.pop(sid, None)

    def publish_telemetry(self, channel: int, sample: dict) -> None:
        with self._lock:
            for sub in self._subs.values():
                if channel not in sub.channels:
                    continue
                if sub.decimators[channel].admit(sample["t_s"]):
                    sub.push(self._frame("telemetry",
                                         channel=channel, sample=sample))

    def publish_event(self, payload: dict) -> None:
        with self._lock:
            for sub in self._subs.values():
                sub.push(self._frame("event", event=payload))

    def _frame(self, kind: str, **body) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": kind,
                "time_base": self.time_base, **body}


class LabService:
    """Owns the channels, the campaign registry, and the stream hub."""

    def __init__(self, *, channels: int = 2, accel: float | None = DEFAULT_ACCEL,
                 data_dir: str | Path | None = None, cal: Calibration = DEFAULT):
        self.accel = accel
        self.cal = cal
        self.data_dir = Path(data_dir) if data_dir else default_data_dir()
        self.hub = StreamHub(time_base={"simulated": True, "accel": accel})
        self.channels: list[rig.Channel] = []
        self.channel_locks: list[threading.Lock] = []
        for cid in range(channels):
            channel = rig.Channel(
                cid, SimulatedChannelHardware(SimClock(accel=accel), cal))
            channel.telemetry_sinks.append(self._telemetry_sink(cid))
            channel.event_sinks.append(self._event_sink())
            self.channels.append(channel)
            self.channel_locks.append(threading.Lock())
        self.campaigns: dict[str, dict] = {}
        self._campaigns_lock = threading.Lock()
        self._campaign_ids = itertools.count(1)
        self._trial_results: dict[int, dict | None] = {
            c: None for c in range(channels)}

    # -- streaming glue -----------------------------------------------------

    def _telemetry_sink(self, cid: int):
        def sink(block: rig.TelemetryBlock) -> None:
            for record in block.records():
                self.hub.publish_telemetry(cid, record)
        return sink

    def _event_sink(self):
        def sink(event: rig.Event) -> None:
            self.hub.publish_event({"source": "rig", **event.to_record()})
        return sink

    # -- channel state ------------------------------------------------------

    def channel_state(self, cid: int) -> dict:
        channel = self.channels[cid]
        adapter = channel.adapter
        return {
            "schema_version": SCHEMA_VERSION,
            "channel": cid,
            "mode": channel.mode.value,
            "faulted": channel.mode is rig.Mode.FAULTED,
            "fault_reason": channel.fault_reason,
            "hv_live": adapter.hv_live,
            "hv_isolated": adapter.isolated,
            "clamp_force_n": channel.clamp_force_n,
            "current_trial": channel.current_device_id,
            "trials_run": channel.trials_run,
            "last_trial": self._trial_results[cid],
        }

    # -- command handling ---------------------------------------------------

    def execute_command(self, cid: int, action: str, payload: dict) -> dict:
        """Validate and execute one channel command.

        Returns ``{"accepted": bool, "reason": ...}``; rejected commands
        carry the rig's reason string.  Long-running work (a trial) is
        started on a worker thread that keeps the channel lock.
        """
        if not 0 <= cid < len(self.channels):
            raise KeyError(cid)
        if action not in COMMAND_ACTIONS:
            return self._rejected(f"unknown action {action!r}")
        channel = self.channels[cid]

        if action == "Abort":
            # no lock needed: flips a flag the running trial polls
            if channel.current_device_id is None:
                return self._rejected("no trial running on this channel")
            channel.request_abort()
            return self._accepted("abort requested")

        if action == "StartCampaign":
            return self._rejected(
                "campaigns span all channels; POST /campaigns instead")

        # pre-validate against current rig state before taking the lock so
        # forbidden transitions are rejected, not queued
        if action == "SwitchMode":
            target = payload.get("mode")
            if target == "impedance" and channel.adapter.hv_live:
                return self._rejected(
                    "interlock: impedance station requires the output "
                    "zeroed and isolated")

        lock = self.channel_locks[cid]
        if not lock.acquire(blocking=False):
            return self._rejected("channel is busy")
        try:
            if action == "SwitchMode":
                return self._switch_mode(channel, payload)
            if action == "ResetFault":
                channel.reset_fault()
                return self._accepted("fault cleared")
            # StartTrial hands the lock to a worker thread
            response = self._start_trial(cid, channel, payload)
            if response["accepted"]:
                lock = None  # released by the worker
            return response
        except (rig.InterlockViolation, rig.ProtocolError) as exc:
            return self._rejected(str(exc))
        except rig.RigFault as exc:
            return self._rejected(f"faulted: {exc}")
        finally:
            if lock is not None:
                lock.release()

    def _switch_mode(self, channel: rig.Channel, payload: dict) -> dict:
        target = payload.get("mode")
        if target not in ("displacement", "force", "impedance"):
            return self._rejected(f"unknown mode target {target!r}")
        bias = payload.get("clamp_bias_n")
        channel.switch_mode(target, None if bias is None else float(bias))
        return self._accepted(f"now in {channel.mode.value}")

    def _start_trial(self, cid: int, channel: rig.Channel,
                     payload: dict) -> dict:
        try:
            material = device.MaterialConfig(
                device.Filler(payload.get("filler", "CB")),
                float(payload.get("cnt_conc_ml_fa", 2.5)))
            spec = device.testing_sample(material)
            drive = device.Drive(float(payload["field_v_um"]),
                                 float(payload["frequency_hz"]))
        except (KeyError, ValueError, device.DeviceError) as exc:
            return self._rejected(f"bad trial parameters: {exc}")
        protocol = rig.TrialProtocol(
            lifetime_cap_s=float(payload.get("lifetime_cap_s",
                                             analysis.DEFAULT_CAP_S)))
        seed = int(payload.get("seed", randomness.derive_seed(
            "service-trial", cid, channel.trials_run)))
        device_id = str(payload.get("device_id", f"ch{cid}-t{channel.trials_run}"))
        if channel.mode is not rig.Mode.IDLE:
            return self._rejected("channel is busy")

        def worker() -> None:
            try:
                result = channel.run_trial(spec, drive, protocol,
                                           seed=seed, device_id=device_id)
                self._trial_results[cid] = {
                    "device_id": device_id,
                    "lifetime_s": result.lifetime.lifetime_s,
                    "censored": result.lifetime.censored,
                    "terminal_cause": result.lifetime.terminal_cause.value,
                    "status": ("Aborted"
                               if result.lifetime.terminal_cause
                               is analysis.Cause.ABORTED else "Complete"),
                }
            except rig.RigError as exc:
                self._trial_results[cid] = {
                    "device_id": device_id, "status": "Faulted",
                    "reason": str(exc)}
            finally:
                self.hub.publish_event({
                    "source": "service", "kind": "trial_finished",
                    "channel": cid, **(self._trial_results[cid] or {})})
                self.channel_locks[cid].release()

        threading.Thread(target=worker, daemon=True,
                         name=f"trial-ch{cid}").start()
        return self._accepted(f"trial {device_id} started")

    @staticmethod
    def _accepted(reason: str) -> dict:
        return {"schema_version": SCHEMA_VERSION, "accepted": True,
                "reason": reason}

    @staticmethod
    def _rejected(reason: str) -> dict:
        return {"schema_version": SCHEMA_VERSION, "accepted": False,
                "reason": reason}

    # -- campaigns ------------------------------------------------------

    def start_campaign(self, manifest: dict, accel: float | None = None) -> dict:
        manifest = campaign.load_manifest(manifest)
        space = campaign.space_from_manifest(manifest)
        plan = campaign.plan_stage1(space)

        locks = list(self.channel_locks)
        acquired = []
        for lock in locks:
            if lock.acquire(blocking=False):
                acquired.append(lock)
            else:
                for held in acquired:
                    held.release()
                raise rig.ProtocolError(
                    "a channel is busy; campaigns need the whole bench")

        campaign_id = f"c{next(self._campaign_ids):04d}"
        run_dir = self.data_dir / campaign_id
        handle = {
            "campaign_id": campaign_id,
            "status": "running",
            "stage": 1,
            "manifest": manifest,
            "cells": {},
            "running_trials": {},
            "boundaries": None,
            "error": None,
            "run_dir": str(run_dir),
            "abort_event": threading.Event(),
        }
        with self._campaigns_lock:
            self.campaigns[campaign_id] = handle

        def progress(event: dict) -> None:
            self._apply_progress(handle, event)
            self.hub.publish_event({
                "source": "campaign", "campaign_id": campaign_id, **event})

        def worker() -> None:
            try:
                result = campaign.run_campaign(
                    manifest, run_dir, rig_channels=self.channels,
                    cal=self.cal, progress=progress,
                    abort_event=handle["abort_event"])
                handle["result"] = result
                handle["status"] = ("aborted"
                                    if handle["abort_event"].is_set()
                                    else "completed")
            except Exception as exc:  # surfaced via the API, not the thread
                handle["status"] = "failed"
                handle["error"] = str(exc)
                self.hub.publish_event({
                    "source": "campaign", "campaign_id": campaign_id,
                    "kind": "campaign_failed", "error": str(exc)})
            finally:
                for lock in acquired:
                    lock.release()

        threading.Thread(target=worker, daemon=True,
                         name=f"campaign-{campaign_id}").start()
        return {
            "schema_version": SCHEMA_VERSION,
            "campaign_id": campaign_id,
            "run_dir": str(run_dir),
            "accel": self.accel if accel is None else accel,
            "stage1_plan": [{
                "device_id": t.device_id(),
                "stage": t.stage,
                "field_v_um": t.cell.field_v_um,
                "frequency_hz": t.cell.frequency_hz,
                "filler": t.cell.filler.value,
                "cnt_conc_ml_fa": t.cell.cnt_conc_ml_fa,
                "replicate": t.replicate,
                "skippable_when_stable": t.skippable_when_stable,
            } for t in plan],
        }

    def _apply_progress(self, handle: dict, event: dict) -> None:
        kind = event.get("kind")
        if kind == "stage_started":
            handle["stage"] = event["stage"]
        elif kind == "trial_started":
            handle["running_trials"][str(event["channel"])] = event["device_id"]
            tag = self._cell_tag_of(event.get("device_id"))
            if tag is not None:
                self._advance_cell(handle["cells"], tag, "running")
        elif kind == "trial_finished":
            handle["running_trials"].pop(str(event["channel"]), None)
        elif kind == "cell_completed":
            tag = (f"f{event['field_v_um']:g}-q{event['frequency_hz']:g}-"
                   f"{event['filler']}{event['cnt_conc_ml_fa']:g}")
            self._advance_cell(handle["cells"], tag, event["status"])
        elif kind == "boundary_selected":
            handle["boundaries"] = event["pairs"]

    @staticmethod
    def _cell_tag_of(device_id: str | None) -> str | None:
        if not device_id:
            return None
        try:
            _, rest = device_id.split("-", 1)
            return rest.rsplit("-r", 1)[0]
        except ValueError:
            return None

    @staticmethod
    def _advance_cell(cells: dict, tag: str, status: str) -> None:
        current = cells.get(tag, "pending")
        if _CELL_RANK.get(status, 0) >= _CELL_RANK.get(current, 0):
            cells[tag] = status

    def campaign_status(self, campaign_id: str) -> dict:
        with self._campaigns_lock:
            handle = self.campaigns.get(campaign_id)
        if handle is None:
            raise KeyError(campaign_id)
        return {
            "schema_version": SCHEMA_VERSION,
            "campaign_id": campaign_id,
            "status": handle["status"],
            "stage": handle["stage"],
            "cells": dict(handle["cells"]),
            "running_trials": dict(handle["running_trials"]),
            "boundaries": handle["boundaries"],
            "error": handle["error"],
            "run_dir": handle["run_dir"],
        }

    def abort_campaign(self, campaign_id: str) -> dict:
        with self._campaigns_lock:
            handle = self.campaigns.get(campaign_id)
        if handle is None:
            raise KeyError(campaign_id)
        if handle["status"] != "running":
            return self._rejected(f"campaign is {handle['status']}")
        handle["abort_event"].set()
        for channel in self.channels:
            channel.request_abort()
        return self._accepted("campaign abort requested")

    def campaign_report(self, campaign_id: str) -> dict:
        with self._campaigns_lock:
            handle = self.campaigns.get(campaign_id)
        if handle is None:
            raise KeyError(campaign_id)
        if handle["status"] == "running":
            raise rig.ProtocolError("campaign still running")
        report = store.RunReader(handle["run_dir"]).report()
        if report is None:
            raise rig.ProtocolError(
                f"campaign {handle['status']}: no report was produced")
        return report


# ---------------------------------------------------------------------------
# HTTP/WebSocket app


def create_app(service: LabService | None = None) -> FastAPI:
    svc = service or LabService()
    app = FastAPI(title="stacked-film actuator lab", version="1.0")
    app.state.service = svc

    def not_found(what: str) -> JSONResponse:
        return JSONResponse(status_code=404, content={
            "schema_version": SCHEMA_VERSION, "error": f"{what} not found"})

    def conflict(reason: str) -> JSONResponse:
        return JSONResponse(status_code=409, content={
            "schema_version": SCHEMA_VERSION, "accepted": False,
            "reason": reason})

    @app.get("/channels")
    def channels() -> dict:
        return {"schema_version": SCHEMA_VERSION,
                "channels": [svc.channel_state(c.channel_id)
                             for c in svc.channels]}

    @app.post("/channels/{cid}/commands")
    def channel_command(cid: int, command: dict) -> Any:
        action = command.get("action")
        payload = command.get("payload") or {}
        try:
            response = svc.execute_command(cid, str(action), dict(payload))
        except KeyError:
            return not_found(f"channel {cid}")
        if not response["accepted"]:
            return conflict(response["reason"])
        return response

    @app.post("/campaigns")
    def start_campaign(body: dict) -> Any:
        manifest = body.get("manifest", body)
        try:
            return svc.start_campaign(dict(manifest), body.get("accel"))
        except campaign.CampaignError as exc:
            return JSONResponse(status_code=422, content={
                "schema_version": SCHEMA_VERSION, "accepted": False,
                "reason": str(exc)})
        except rig.ProtocolError as exc:
            return conflict(str(exc))

    @app.get("/campaigns/{campaign_id}")
    def campaign_status(campaign_id: str) -> Any:
        try:
            return svc.campaign_status(campaign_id)
        except KeyError:
            return not_found(f"campaign {campaign_id}")

    @app.post("/campaigns/{campaign_id}/commands")
    def campaign_command(campaign_id: str, command: dict) -> Any:
        action = command.get("action")
        if action != "Abort":
            return conflict(f"unsupported campaign action {action!r}")
        try:
            response = svc.abort_campaign(campaign_id)
        except KeyError:
            return not_found(f"campaign {campaign_id}")
        if not response["accepted"]:
            return conflict(response["reason"])
        return response

    @app.get("/runs/{campaign_id}/report")
    def run_report(campaign_id: str) -> Any:
        try:
            report = svc.campaign_report(campaign_id)
        except KeyError:
            return not_found(f"run {campaign_id}")
        except rig.ProtocolError as exc:
            return conflict(str(exc))
        return {"schema_version": SCHEMA_VERSION, "report": report}

    @app.websocket("/stream")
    async def stream(ws: WebSocket) -> None:
        await ws.accept()
        try:
            request = await ws.receive_json()
        except WebSocketDisconnect:
            return
        wanted = request.get("channels")
        channel_ids = (set(int(c) for c in wanted) if wanted is not None
                       else {c.channel_id for c in svc.channels})
        channel_ids &= {c.channel_id for c in svc.channels}
        samples_hz = float(request.get("samples_hz", DEFAULT_STREAM_HZ))
        loop = asyncio.get_running_loop()
        sid, queue = svc.hub.subscribe(channel_ids, samples_hz, loop)
        try:
            await ws.send_json({
                "schema_version": SCHEMA_VERSION, "kind": "subscribed",
                "channels": sorted(channel_ids), "samples_hz": samples_hz,
                "time_base": svc.hub.time_base})
            # initial snapshot: a faulted channel is visible immediately
            for cid in sorted(channel_ids):
                await ws.send_json({
                    "schema_version": SCHEMA_VERSION, "kind": "channel_state",
                    "time_base": svc.hub.time_base,
                    "state": svc.channel_state(cid)})
            while True:
                frame = await queue.get()
                await ws.send_json(frame)
        except WebSocketDisconnect:
            pass
        finally:
            svc.hub.unsubscribe(sid)

    return app
