"""Single-channel test sequencer.

A :class:`Channel` owns one bench (via a :class:`~dealab.adapters.HardwareAdapter`)
and runs the procedural test sequences on it: station changes with the high
voltage provably dead, force clamping with feedback, interlocked impedance
sweeps, and full lifetime trials with streaming amplitude tracking and
densified capture scheduling.  Channels are fully independent of each other;
nothing here is shared process-wide.
"""

from __future__ import annotations

import contextlib
import enum
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterable

import numpy as np

from . import analysis, device
from .adapters import AdapterError, HardwareAdapter, RotaryPosition


class RigError(RuntimeError):
    pass


class ProtocolError(RigError):
    """Caller misuse; the channel stays healthy."""


class InterlockViolation(ProtocolError):
    """A request was refused because it would break a safety invariant."""


class RigFault(RigError):
    """The channel tripped into the faulted state and needs a reset."""


class Mode(enum.Enum):
    IDLE = "idle"
    ACTUATING_DISPLACEMENT = "actuating_displacement"
    SWITCHING_STAGE = "switching_stage"
    CLAMPING_FORCE = "clamping_force"
    MEASURING_FORCE = "measuring_force"
    IMPEDANCE_SWEEP = "impedance_sweep"
    FAULTED = "faulted"


@dataclass(frozen=True)
class Event:
    """One entry in the channel's procedure log (simulated-time stamped)."""

    t_s: float
    channel: int
    kind: str
    detail: dict

    def to_record(self) -> dict:
        return {"t_s": self.t_s, "channel": self.channel,
                "kind": self.kind, "detail": self.detail}


@dataclass(frozen=True)
class TelemetryBlock:
    """A burst of telemetry samples sharing one channel mode.

    ``t_s`` is trial-relative during a trial and channel-relative otherwise;
    array fields are parallel to ``t_s``.  ``displacement_mm`` / ``force_n``
    are None when the corresponding sensor is not engaged.
    """

    channel: int
    mode: str
    t_s: np.ndarray
    voltage_v: np.ndarray
    current_ua: np.ndarray
    displacement_mm: np.ndarray | None
    force_n: np.ndarray | None
    clamp_force_n: float | None
    hv_isolated: bool

    def __len__(self) -> int:
        return int(self.t_s.size)

    def records(self) -> Iterable[dict]:
        disp = self.displacement_mm
        force = self.force_n
        for i in range(self.t_s.size):
            yield {
                "t_s": round(float(self.t_s[i]), 9),
                "channel": self.channel,
                "mode": self.mode,
                "voltage_v": round(float(self.voltage_v[i]), 3),
                "current_ua": round(float(self.current_ua[i]), 6),
                "displacement_mm": None if disp is None else round(float(disp[i]), 6),
                "force_n": None if force is None else round(float(force[i]), 6),
                "clamp_force_n": None if self.clamp_force_n is None
                else round(self.clamp_force_n, 6),
                "hv_isolated": self.hv_isolated,
            }


@dataclass(frozen=True)
class SweepResult:
    frequencies_hz: tuple[float, ...]
    capacitance_f: tuple[float, ...]

    def points(self) -> tuple[tuple[float, float], ...]:
        return tuple(zip(self.frequencies_hz, self.capacitance_f))


@dataclass(frozen=True)
class TrialProtocol:
    """Knobs of the lifetime-trial procedure.

    ``sample_rate_hz=None`` auto-selects ``max(10, 4*f)``.  Capture blocks
    start densely and thin out geometrically: after each block the next
    capture time is the block end times ``1 + check_growth``, quantized down
    to a whole drive cycle.
    """

    lifetime_cap_s: float = 10800.0
    amplitude_threshold: float = 0.8
    init_window: int = 10
    persistence: int = 5
    median_window: int = 5
    sample_rate_hz: float | None = None
    init_capture_cycles: int = 12
    capture_cycles: int = 3
    check_growth: float = 0.02
    duty: float = 0.5
    impedance_points: int = 20
    clamp_bias_n: float = 0.6

    def rate_for(self, frequency_hz: float) -> float:
        if self.sample_rate_hz is None:
            return max(10.0, 4.0 * frequency_hz)
        return self.sample_rate_hz


@dataclass(frozen=True)
class TrialResult:
    device_id: str
    channel: int
    seed: int
    spec: device.DeviceSpec
    drive: device.Drive
    lifetime: analysis.LifetimeResult
    average_displacement_mm: float | None
    capacitance_drop_frac: float
    pre_sweep: SweepResult
    post_sweep: SweepResult
    amplitude_t_s: tuple[float, ...]
    amplitude_mm: tuple[float, ...]
    duration_s: float
    # offset of the drive section in trial-relative telemetry time: lifetime
    # timestamps are drive-relative, telemetry t_s starts at device mount
    drive_start_rel_s: float = 0.0


class _StreamingCrossing:
    """Incremental form of the lifetime threshold rule.

    Mirrors :func:`dealab.analysis.lifetime` for interior cycles so a trial
    can stop as soon as a crossing is confirmed; the final verdict is always
    recomputed from the full series.
    """

    def __init__(self, threshold: float, init_window: int, persistence: int,
                 median_window: int):
        self.threshold = threshold
        self.init_window = init_window
        self.persistence = persistence
        self.median_window = median_window
        self.amps: list[float] = []
        self.initial: float | None = None
        self._run = 0
        self.confirmed = False

    def push(self, amplitude: float) -> None:
        if self.confirmed:
            return
        self.amps.append(amplitude)
        n = len(self.amps)
        if self.initial is None:
            if n >= self.init_window:
                self.initial = float(np.median(self.amps[: self.init_window]))
            return
        # centered median at index i becomes available once i + half exists
        half = self.median_window // 2
        i = n - 1 - half
        if i < 0:
            return
        lo = max(0, i - half)
        med = float(np.median(self.amps[lo: i + half + 1]))
        if med < self.threshold * self.initial:
            self._run += 1
            if self._run >= self.persistence:
                self.confirmed = True
        else:
            self._run = 0


class Channel:
    """One independent test channel: sequencing, interlocks, telemetry."""

    def __init__(self, channel_id: int, adapter: HardwareAdapter):
        self.channel_id = channel_id
        self.adapter = adapter
        self.mode = Mode.IDLE
        self.fault_reason: str | None = None
        self.clamp_force_n: float | None = None
        self.telemetry_sinks: list[Callable[[TelemetryBlock], None]] = []
        self.event_sinks: list[Callable[[Event], None]] = []
        self.last_event: Event | None = None
        self.trials_run = 0
        self.current_device_id: str | None = None
        self._abort_requested = False
        self._t_ref = 0.0          # subtracted from clock for telemetry t_s

    # -- plumbing ----------------------------------------------------------

    @property
    def clock(self):
        return self.adapter.clock

    def _event(self, kind: str, **detail) -> None:
        ev = Event(round(self.clock.now, 9), self.channel_id, kind, detail)
        self.last_event = ev
        for sink in self.event_sinks:
            sink(ev)

    def _emit(self, t_s, voltage_v, current_ua, displacement_mm, force_n) -> None:
        block = TelemetryBlock(
            channel=self.channel_id,
            mode=self.mode.value,
            t_s=np.atleast_1d(np.asarray(t_s, dtype=float)),
            voltage_v=np.atleast_1d(np.asarray(voltage_v, dtype=float)),
            current_ua=np.atleast_1d(np.asarray(current_ua, dtype=float)),
            displacement_mm=None if displacement_mm is None
            else np.atleast_1d(np.asarray(displacement_mm, dtype=float)),
            force_n=None if force_n is None
            else np.atleast_1d(np.asarray(force_n, dtype=float)),
            clamp_force_n=self.clamp_force_n,
            hv_isolated=self.adapter.isolated,
        )
        for sink in self.telemetry_sinks:
            sink(block)

    def _spot_sample(self) -> None:
        """Emit one sample of whatever is measurable right now."""
        ad = self.adapter
        v = ad.read_voltage()
        i = ad.read_current()
        disp = ad.read_displacement() if ad.rotary is RotaryPosition.UNDER_LDS else None
        force = ad.read_force() if ad.rotary is RotaryPosition.UNDER_FORCE else None
        self._emit(self.clock.now - self._t_ref, v, i, disp, force)

    @contextlib.contextmanager
    def _guard(self, context: str):
        """Convert hardware errors into a channel fault."""
        try:
            yield
        except AdapterError as exc:
            self.mode = Mode.FAULTED
            self.fault_reason = f"{context}: {exc}"
            self._event("fault", context=context, reason=str(exc))
            raise RigFault(self.fault_reason) from exc

    def _require_healthy(self) -> None:
        if self.mode is Mode.FAULTED:
            raise RigFault(f"channel {self.channel_id} is faulted: {self.fault_reason}")

    # -- public surface -----------------------------------------------------

    def reset_fault(self) -> None:
        """Clear a fault: kill the output, release everything, back to idle."""
        if self.mode is not Mode.FAULTED:
            raise ProtocolError("channel is not faulted")
        ad = self.adapter
        ad.drive_off()
        ad.set_static_field(0.0)
        with contextlib.suppress(AdapterError):
            ad.move_linear(0.0)
        if ad.isolated:
            ad.set_isolation(False)
        if getattr(ad, "spec", None) is not None:
            ad.unmount()
        self.clamp_force_n = None
        self.current_device_id = None
        self.fault_reason = None
        self.mode = Mode.IDLE
        self._event("fault_reset")

    def request_abort(self) -> None:
        """Ask the running trial (if any) to stop at the next sample."""
        self._abort_requested = True

    def switch_mode(self, target: str, clamp_bias_n: float | None = None) -> None:
        """Procedural station change.

        Always: output zeroed first, clamp released, isolation set to what the
        target needs, rotary stage moved, and for the force station a feedback
        clamp to ``clamp_bias_n``.  Any hardware error faults the channel.
        """
        self._require_healthy()
        if target not in ("displacement", "force", "impedance"):
            raise ProtocolError(f"unknown mode target {target!r}")
        with self._guard(f"switch to {target}"):
            self._switch_sequence(target, clamp_bias_n)

    def _switch_sequence(self, target: str, clamp_bias_n: float | None) -> None:
        ad = self.adapter
        ad.drive_off()
        ad.set_static_field(0.0)
        self._event("hv_zeroed")
        self.mode = Mode.SWITCHING_STAGE

        if ad.linear_mm > 0.0:
            ad.move_linear(0.0)
            self.clamp_force_n = None
            self._event("stage_retracted")
            self._spot_sample()

        want_isolated = target == "impedance"
        if ad.isolated != want_isolated:
            ad.set_isolation(want_isolated)
            self._event("isolation_set", isolated=want_isolated)
            self._spot_sample()

        want_rotary = (RotaryPosition.UNDER_FORCE if target == "force"
                       else RotaryPosition.UNDER_LDS)
        if ad.rotary is not want_rotary:
            self._spot_sample()
            ad.move_rotary(want_rotary)
            self._event("stage_rotated", position=want_rotary.value)
            self._spot_sample()

        if target == "force":
            bias = self.clamp_bias_default if clamp_bias_n is None else clamp_bias_n
            self._clamp_loop(bias)
            self.mode = Mode.MEASURING_FORCE
        elif target == "impedance":
            self.mode = Mode.IMPEDANCE_SWEEP
        else:
            self.mode = Mode.ACTUATING_DISPLACEMENT
        self._event("mode_entered", mode=self.mode.value)
        self._spot_sample()

    clamp_bias_default = 0.6

    def clamp_with_feedback(self, bias_n: float) -> float:
        """Step the linear stage until the measured preload reaches ``bias_n``.

        Converges to a recorded force in [bias, bias + step * stiffness];
        running off the travel limit or losing the sensor faults the channel.
        """
        self._require_healthy()
        if self.adapter.rotary is not RotaryPosition.UNDER_FORCE:
            raise ProtocolError("force sensor is not over the device")
        if self.adapter.hv_live:
            self._event("interlock_violation", operation="clamp",
                        hv_live=True, isolated=self.adapter.isolated)
            raise InterlockViolation(
                "clamp refused: zero the output before loading the sensor")
        with self._guard("clamp"):
            force = self._clamp_loop(bias_n)
        return force

    def _clamp_loop(self, bias_n: float) -> float:
        if bias_n <= 0:
            raise ProtocolError("clamp bias must be > 0")
        ad = self.adapter
        cal = ad.cal
        self.mode = Mode.CLAMPING_FORCE
        if ad.linear_mm < cal.contact_position_mm:
            ad.move_linear(cal.contact_position_mm)   # rapid approach
        while True:
            # average a short burst; single readings are noise-limited
            force = float(np.mean([ad.read_force() for _ in range(8)]))
            self._emit(self.clock.now - self._t_ref, ad.read_voltage(),
                       ad.read_current(), None, force)
            if force >= bias_n:
                break
            target = ad.linear_mm + cal.clamp_step_mm
            if target > cal.travel_max_mm:
                raise AdapterError("travel limit reached before clamp bias")
            ad.move_linear(target)
        self.clamp_force_n = force
        self._event("clamp_converged", force_n=force, bias_n=bias_n,
                    position_mm=ad.linear_mm)
        return force

    def impedance_sweep(self, n_points: int | None = None,
                        f_lo_hz: float = 1e3, f_hi_hz: float = 1e6) -> SweepResult:
        """Log-spaced capacitance sweep; only legal with the output isolated."""
        self._require_healthy()
        ad = self.adapter
        if ad.hv_live or not ad.isolated:
            self._event("interlock_violation", operation="impedance_sweep",
                        hv_live=ad.hv_live, isolated=ad.isolated)
            raise InterlockViolation(
                "impedance sweep refused: output must be zeroed and isolated")
        if self.mode is not Mode.IMPEDANCE_SWEEP:
            raise ProtocolError("switch to the impedance station first")
        n = n_points or 20
        freqs = np.geomspace(f_lo_hz, f_hi_hz, n)
        self._event("sweep_started", points=n)
        caps = []
        with self._guard("impedance sweep"):
            for f in freqs:
                caps.append(self.adapter.impedance_point(float(f)))
                self._emit(self.clock.now - self._t_ref, 0.0,
                           0.0, None, None)
        self._event("sweep_finished", points=n)
        return SweepResult(tuple(float(f) for f in freqs), tuple(caps))

    # -- the lifetime trial --------------------------------------------------

    def run_trial(self, spec: device.DeviceSpec, drive: device.Drive,
                  protocol: TrialProtocol = TrialProtocol(), *,
                  seed: int, device_id: str,
                  abort_poll: Callable[[float], bool] | None = None) -> TrialResult:
        """Mount, characterize, cycle to end-of-life, re-characterize.

        Telemetry time restarts at 0 at the start of the drive section.  The
        trial ends at the earliest of: confirmed amplitude crossing, supply
        trip (dielectric breakdown), abort, or the lifetime cap.
        """
        self._require_healthy()
        if self.mode is not Mode.IDLE:
            raise ProtocolError("channel is busy")
        if getattr(self.adapter, "spec", None) is not None:
            raise ProtocolError("fixture already holds a device")
        f = drive.frequency_hz
        rate = protocol.rate_for(f)
        if rate < 4.0 * f - 1e-9:
            raise ProtocolError(
                f"sample rate {rate} Hz is below 4 samples/cycle at {f} Hz")
        n_per_cycle = max(4, int(round(rate / f)))

        ad = self.adapter
        ad.mount(spec, seed)
        self.current_device_id = device_id
        self.trials_run += 1
        self._abort_requested = False
        self._t_ref = self.clock.now
        self._event("trial_started", device_id=device_id, seed=seed,
                    field_v_um=drive.field_v_um, frequency_hz=f,
                    filler=spec.material.filler.value,
                    cnt_conc_ml_fa=spec.material.cnt_conc_ml_fa)
        try:
            with self._guard("trial"):
                result = self._trial_body(spec, drive, protocol, seed,
                                          device_id, n_per_cycle, abort_poll)
        except BaseException:
            self.current_device_id = None
            raise
        ad.unmount()
        self.current_device_id = None
        self.mode = Mode.IDLE
        self._event("trial_finished", device_id=device_id,
                    lifetime_s=result.lifetime.lifetime_s,
                    censored=result.lifetime.censored,
                    terminal_cause=result.lifetime.terminal_cause.value)
        return result

    def _trial_body(self, spec, drive, protocol, seed, device_id,
                    n_per_cycle, abort_poll) -> TrialResult:
        ad = self.adapter

        self._switch_sequence("impedance", None)
        pre = self.impedance_sweep(protocol.impedance_points)
        self._switch_sequence("displacement", None)

        ad.configure_drive(drive.field_v_um, drive.frequency_hz, protocol.duty)
        ad.drive_on()
        self.mode = Mode.ACTUATING_DISPLACEMENT
        t0 = self.clock.now
        drive_rel0 = t0 - self._t_ref
        self._event("drive_on", field_v_um=drive.field_v_um,
                    frequency_hz=drive.frequency_hz)

        f = drive.frequency_hz
        period = 1.0 / f
        dt = period / n_per_cycle
        offsets = (np.arange(n_per_cycle) + 0.5) * dt
        cap = protocol.lifetime_cap_s
        detector = _StreamingCrossing(protocol.amplitude_threshold,
                                      protocol.init_window,
                                      protocol.persistence,
                                      protocol.median_window)
        tracker = analysis.AmplitudeTracker(f)
        amps_t: list[float] = []
        amps_a: list[float] = []
        hard_rel: float | None = None
        abort_rel: float | None = None

        def feed(times: np.ndarray, values: np.ndarray) -> None:
            for ti, xi in zip(times, values):
                tracker.feed(float(ti), float(xi))
            while len(amps_a) < len(tracker.amplitude_mm):
                i = len(amps_a)
                amps_t.append(tracker.t_s[i])
                amps_a.append(tracker.amplitude_mm[i])
                detector.push(tracker.amplitude_mm[i])

        next_cycle = 0
        first_block = True
        while True:
            rel_start = next_cycle * period
            if rel_start >= cap - 1e-9:
                break
            want = protocol.init_capture_cycles if first_block else protocol.capture_cycles
            first_block = False
            remaining = int(math.floor((cap - rel_start) * f + 1e-9))
            n_cycles = min(want, max(1, remaining))
            stop = False
            for c in range(n_cycles):
                k = next_cycle + c
                ts_rel = k * period + offsets
                rb = ad.acquire(t0 + ts_rel)
                keep = ts_rel.size

                trip = ad.supply_trip_time()
                if trip is not None:
                    hard_rel = trip - t0
                    keep = min(keep, int(np.searchsorted(ts_rel, hard_rel, "right")))
                if self._abort_requested:
                    abort_rel = float(ts_rel[keep - 1]) if keep else float(ts_rel[0])
                elif abort_poll is not None and abort_poll(float(ts_rel[-1])):
                    hit = next(i for i in range(ts_rel.size)
                               if abort_poll(float(ts_rel[i])))
                    abort_rel = float(ts_rel[hit])
                    keep = min(keep, hit + 1)

                sl = slice(0, keep)
                if keep:
                    self._emit(drive_rel0 + ts_rel[sl], rb.voltage_v[sl],
                               rb.current_ua[sl], rb.displacement_mm[sl], None)
                    feed(ts_rel[sl], rb.displacement_mm[sl])
                if hard_rel is not None or abort_rel is not None:
                    stop = True
                    break
            if stop or detector.confirmed:
                break
            next_cycle += n_cycles
            rel_end = next_cycle * period
            if rel_end >= cap - 1e-9:
                break
            target = rel_end * (1.0 + protocol.check_growth)
            jump = int(math.floor(target * f + 1e-9))
            if jump > next_cycle:
                next_cycle = jump
                ad.wait_until(t0 + next_cycle * period)
                trip = ad.supply_trip_time()
                if trip is not None:
                    hard_rel = trip - t0
                    break

        ad.drive_off()
        duration = self.clock.now - t0
        self._event("drive_off", duration_s=duration)

        tail = tracker.finalize()
        while len(amps_a) < len(tail.amplitude_mm):
            i = len(amps_a)
            amps_t.append(float(tail.t_s[i]))
            amps_a.append(float(tail.amplitude_mm[i]))

        series = analysis.AmplitudeSeries(np.array(amps_t), np.array(amps_a))
        if len(amps_a) >= protocol.init_window:
            life = analysis.lifetime(
                series,
                threshold=protocol.amplitude_threshold,
                cap_s=cap,
                hard_failure_t=hard_rel,
                aborted_t=abort_rel,
                init_window=protocol.init_window,
                persistence=protocol.persistence,
                median_window=protocol.median_window,
            )
        else:
            # trial cut down before the baseline window filled; the cut event
            # is the lifetime and there is no meaningful initial amplitude
            events = [(t, c) for (t, c) in
                      ((hard_rel, analysis.Cause.HARD_FAILURE),
                       (abort_rel, analysis.Cause.ABORTED)) if t is not None]
            if not events:
                raise ProtocolError(
                    "lifetime cap shorter than the baseline amplitude window")
            t_end, cause = min(events, key=lambda e: e[0])
            initial = float(np.median(amps_a)) if amps_a else 0.0
            life = analysis.LifetimeResult(t_end, False, initial, cause)
        if abort_rel is not None:
            self._event("trial_aborted", t_s=abort_rel)
        avg = None
        if len(amps_a) >= 1:
            upto = life.lifetime_s if life.lifetime_s > 0 else None
            try:
                avg = analysis.average_displacement(series, up_to_s=upto)
            except analysis.InsufficientData:
                avg = None

        self._switch_sequence("impedance", None)
        post = self.impedance_sweep(protocol.impedance_points)
        # leave the HV bus isolated: that is the safe state for unmounting,
        # and the next trial's own switching re-arms it as needed
        self._t_ref = 0.0

        drop = analysis.capacitance_degradation(pre.points(), post.points())
        return TrialResult(
            device_id=device_id,
            channel=self.channel_id,
            seed=seed,
            spec=spec,
            drive=drive,
            lifetime=life,
            average_displacement_mm=None if avg is None else float(avg),
            capacitance_drop_frac=float(drop),
            pre_sweep=pre,
            post_sweep=post,
            amplitude_t_s=tuple(float(t) for t in amps_t),
            amplitude_mm=tuple(float(a) for a in amps_a),
            duration_s=float(duration),
            drive_start_rel_s=float(drive_rel0),
        )
