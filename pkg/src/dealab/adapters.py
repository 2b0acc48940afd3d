"""Hardware access boundary for a single test channel.

Everything the rig knows about motion stages, the programmable HV supply,
the displacement sensor, the force sensor, and the impedance analyzer goes
through :class:`HardwareAdapter`.  :class:`SimulatedChannelHardware` is the
in-process implementation backed by the device model; a physical bench would
supply its own adapter with the same surface.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import device, randomness, waveform
from .calibration import DEFAULT, Calibration
from .simclock import SimClock


class AdapterError(RuntimeError):
    """Hardware refused or failed an operation."""


class AdapterTimeout(AdapterError):
    """An axis or instrument did not respond in time."""


class RotaryPosition(enum.Enum):
    UNDER_LDS = "under_lds"
    UNDER_FORCE = "under_force"


@dataclass(frozen=True)
class Readback:
    """One synchronous sample of every analog input on the channel."""

    voltage_v: float
    current_ua: float
    displacement_mm: float
    force_n: float


class HardwareAdapter(Protocol):
    """What a channel driver may ask of its bench.

    Metadata/identity
        ``mount(spec, seed)`` installs a device; ``unmount()`` releases it.
    High voltage
        ``configure_drive(field, freq, duty)`` programs the supply,
        ``drive_on()`` / ``drive_off()`` gate it, ``set_static_field(f)``
        applies DC, ``hv_live`` reports whether the output is energized,
        ``set_isolation(flag)`` opens the series relay (refused while live).
    Motion
        ``move_rotary(pos)`` swaps the sensor head over the device,
        ``move_linear(mm)`` positions the clamp axis (hard travel limit).
    Sensing
        ``read_force()``, ``read_displacement()`` for spot values,
        ``acquire(ts)`` for a buffered burst at explicit sample times,
        ``impedance_point(freq)`` for one capacitance reading (isolated only).
    """

    clock: SimClock

    def mount(self, spec: device.DeviceSpec, seed: int) -> None: ...
    def unmount(self) -> None: ...
    def configure_drive(self, field_v_um: float, frequency_hz: float, duty: float) -> None: ...
    def drive_on(self) -> None: ...
    def drive_off(self) -> None: ...
    def set_static_field(self, field_v_um: float) -> None: ...
    @property
    def hv_live(self) -> bool: ...
    @property
    def isolated(self) -> bool: ...
    def set_isolation(self, flag: bool) -> None: ...
    def move_rotary(self, pos: RotaryPosition) -> None: ...
    def move_linear(self, target_mm: float) -> None: ...
    def read_force(self) -> float: ...
    def read_displacement(self) -> float: ...
    def read_voltage(self) -> float: ...
    def read_current(self) -> float: ...
    def acquire(self, ts: np.ndarray) -> Readback: ...
    def impedance_point(self, frequency_hz: float) -> float: ...
    def wait_until(self, t_abs: float) -> None: ...
    def supply_trip_time(self) -> float | None: ...


class SimulatedChannelHardware:
    """Device-model-backed bench.

    Device state is advanced lazily: every operation first syncs the mounted
    device from the last sync point to ``clock.now`` under whatever drive was
    active, so arbitrary interleavings of motion, sensing, and waiting see a
    consistent device history.
    """

    ROTARY_SECONDS_ATTR = "rotary_switch_s"
    ISOLATION_SECONDS = 0.1
    IMPEDANCE_POINT_SECONDS = 0.02

    def __init__(self, clock: SimClock, cal: Calibration = DEFAULT):
        self.clock = clock
        self.cal = cal
        self.spec: device.DeviceSpec | None = None
        self.state: device.DeviceState | None = None
        self.rotary = RotaryPosition.UNDER_LDS
        self.linear_mm = 0.0
        self._isolated = False
        self._drive: tuple[float, float, float] | None = None
        self._drive_running = False
        self._drive_t0 = 0.0
        self._static_field = 0.0
        self._synced_at = 0.0
        self._mounted_at = 0.0
        self._noise = randomness.noise_generator(0)
        self._pending_faults: dict[str, Exception] = {}

    # -- fault injection (tests/demo) -------------------------------------

    def inject_fault(self, operation: str, exc: Exception) -> None:
        """Arm ``operation`` ('move_rotary', 'move_linear', 'read_force')
        to raise ``exc`` on its next invocation."""
        self._pending_faults[operation] = exc

    def _trip(self, operation: str) -> None:
        exc = self._pending_faults.pop(operation, None)
        if exc is not None:
            raise exc

    # -- mounting ----------------------------------------------------------

    def mount(self, spec: device.DeviceSpec, seed: int) -> None:
        if self.spec is not None:
            raise AdapterError("a device is already mounted")
        self.spec = spec
        self.state = device.DeviceState(seed=seed)
        self._synced_at = self.clock.now
        self._mounted_at = self.clock.now
        # reseeded per device so a trial's readings never depend on what ran
        # on the channel before it
        self._noise = randomness.noise_generator(
            randomness.derive_seed("sensor-noise", seed)
        )

    def unmount(self) -> None:
        self._sync()
        if self.hv_live:
            raise AdapterError("cannot unmount while the output is energized")
        self.spec = None
        self.state = None

    def _require_device(self) -> tuple[device.DeviceSpec, device.DeviceState]:
        if self.spec is None or self.state is None:
            raise AdapterError("no device mounted")
        return self.spec, self.state

    # -- device-state bookkeeping ------------------------------------------

    def _sync(self) -> None:
        """Advance the mounted device to the current simulated time."""
        if self.state is None:
            self._synced_at = self.clock.now
            return
        dt = self.clock.now - self._synced_at
        if dt <= 0:
            return
        field, freq = self._effective_drive()
        if field > 0.0:
            self.state = device.step_degradation(
                self.spec, self.state, device.Drive(field, freq), dt, self.cal
            )
        else:
            self.state = dataclasses.replace(self.state, age_s=self.state.age_s + dt)
        self._synced_at = self.clock.now

    def _effective_drive(self) -> tuple[float, float]:
        """(field, frequency) as the device experiences it right now."""
        if self._isolated:
            return 0.0, 1.0
        if self._drive_running and self._drive is not None:
            field, freq, _ = self._drive
            return field, freq
        if self._static_field > 0.0:
            return self._static_field, 1.0
        return 0.0, 1.0

    # -- high voltage --------------------------------------------------------

    def configure_drive(self, field_v_um: float, frequency_hz: float, duty: float) -> None:
        if field_v_um < 0:
            raise AdapterError("field must be >= 0")
        if frequency_hz <= 0:
            raise AdapterError("frequency must be > 0")
        if not 0.0 < duty < 1.0:
            raise AdapterError("duty must be in (0, 1)")
        self._sync()
        self._drive = (field_v_um, frequency_hz, duty)

    def drive_on(self) -> None:
        self._sync()
        if self._drive is None:
            raise AdapterError("no drive configured")
        if self._isolated:
            raise AdapterError("output is isolated")
        self._drive_running = True
        self._drive_t0 = self.clock.now

    def drive_off(self) -> None:
        self._sync()
        self._drive_running = False

    def set_static_field(self, field_v_um: float) -> None:
        if field_v_um < 0:
            raise AdapterError("field must be >= 0")
        self._sync()
        if field_v_um > 0 and self._isolated:
            raise AdapterError("output is isolated")
        self._static_field = field_v_um

    @property
    def hv_live(self) -> bool:
        return self._drive_running or self._static_field > 0.0

    @property
    def isolated(self) -> bool:
        return self._isolated

    def set_isolation(self, flag: bool) -> None:
        self._sync()
        if flag and self.hv_live:
            raise AdapterError("refusing to isolate an energized output")
        if flag != self._isolated:
            self.clock.advance(self.ISOLATION_SECONDS)
            self._sync()
        self._isolated = flag

    # -- motion ----------------------------------------------------------------

    def move_rotary(self, pos: RotaryPosition) -> None:
        self._trip("move_rotary")
        self._sync()
        if pos != self.rotary:
            self.clock.advance(self.cal.rotary_switch_s)
            self._sync()
        self.rotary = pos

    def move_linear(self, target_mm: float) -> None:
        self._trip("move_linear")
        if not 0.0 <= target_mm <= self.cal.travel_max_mm:
            raise AdapterError(
                f"linear target {target_mm:.3f} mm outside 0..{self.cal.travel_max_mm:.0f} mm"
            )
        self._sync()
        travel = abs(target_mm - self.linear_mm)
        if travel > 0:
            self.clock.advance(travel / self.cal.linear_speed_mm_s)
            self._sync()
        self.linear_mm = target_mm

    # -- instantaneous electrical state -----------------------------------------

    def _phase_high(self, t: float) -> bool:
        if not self._drive_running or self._drive is None:
            return False
        field, freq, duty = self._drive
        ph = (t - self._drive_t0) * freq
        return (ph - np.floor(ph)) < duty

    def _field_at(self, t: float) -> float:
        if self._isolated:
            return 0.0
        if self._drive_running and self._drive is not None:
            return self._drive[0] if self._phase_high(t) else 0.0
        return self._static_field

    def _monitor_voltage(self) -> float:
        # supply is programmed in field units; the monitor reports volts for
        # the mounted stack (default stack thickness when the fixture is empty)
        thickness = (self.spec.layer_thickness_um if self.spec is not None
                     else waveform.DEFAULT_LAYER_THICKNESS_UM)
        return self._field_at(self.clock.now) * thickness

    def read_voltage(self) -> float:
        self._sync()
        return self._monitor_voltage()

    def read_current(self) -> float:
        self._sync()
        leak_ua = self._monitor_voltage() / self.cal.leak_resistance_mohm
        return leak_ua + 0.01 * float(self._noise.standard_normal())

    def read_displacement(self) -> float:
        self._sync()
        value = 0.0
        if self.rotary is RotaryPosition.UNDER_LDS and self.spec is not None:
            field = self._field_at(self.clock.now)
            if self._drive_running and self._drive is not None and field > 0.0:
                value = device.cycle_peak_displacement(
                    self.spec, self.state, self._drive[0], self._drive[1], self.cal
                )
            elif field > 0.0:
                value = device.displacement(self.spec, self.state, field, self.cal)
        return value + self.cal.lds_noise_mm * float(self._noise.standard_normal())

    def read_force(self) -> float:
        self._trip("read_force")
        self._sync()
        value = 0.0
        if self.rotary is RotaryPosition.UNDER_FORCE:
            overlap = self.linear_mm - self.cal.contact_position_mm
            if overlap > 0.0:
                value = self.cal.contact_stiffness_n_mm * overlap
                field = self._field_at(self.clock.now)
                if field > 0.0 and self.spec is not None:
                    value += device.blocked_force(self.spec, self.state, field, self.cal)
        return value + self.cal.force_noise_n * float(self._noise.standard_normal())

    # -- buffered acquisition --------------------------------------------------

    def acquire(self, ts: np.ndarray) -> Readback:
        """Burst-sample every input at absolute sim times ``ts``.

        The device state is synced once, to the start of the burst; bursts are
        expected to span at most a few drive cycles, over which degradation is
        negligible.  The clock is advanced to the end of the burst.
        """
        spec, _ = self._require_device()
        ts = np.asarray(ts, dtype=float)
        if ts.size == 0:
            raise AdapterError("empty acquisition")
        if ts[0] < self.clock.now - 1e-9:
            raise AdapterError("acquisition starts in the past")
        self._sync()
        state = self.state

        if self._drive_running and self._drive is not None and not self._isolated:
            field, freq, duty = self._drive
            ph = (ts - self._drive_t0) * freq
            high = (ph - np.floor(ph)) < duty
        else:
            field = self._static_field if not self._isolated else 0.0
            high = np.full(ts.shape, field > 0.0)
            freq = None

        volts = np.where(high, field * spec.layer_thickness_um, 0.0)
        current = volts / self.cal.leak_resistance_mohm + 0.01 * self._noise.standard_normal(ts.size)

        disp = np.zeros(ts.size)
        if self.rotary is RotaryPosition.UNDER_LDS and field > 0.0:
            if freq is not None:
                peak = device.cycle_peak_displacement(spec, state, field, freq, self.cal)
            else:
                peak = device.displacement(spec, state, field, self.cal)
            disp = np.where(high, peak, 0.0)
        disp = disp + self.cal.lds_noise_mm * self._noise.standard_normal(ts.size)

        force = np.zeros(ts.size)
        if self.rotary is RotaryPosition.UNDER_FORCE:
            overlap = self.linear_mm - self.cal.contact_position_mm
            if overlap > 0.0:
                force += self.cal.contact_stiffness_n_mm * overlap
                if field > 0.0:
                    force += np.where(
                        high, device.blocked_force(spec, state, field, self.cal), 0.0
                    )
        force = force + self.cal.force_noise_n * self._noise.standard_normal(ts.size)

        if ts[-1] > self.clock.now:
            self.clock.advance(ts[-1] - self.clock.now)
            self._sync()
        return Readback(volts, current, disp, force)

    def wait_until(self, t_abs: float) -> None:
        """Idle (drive keeps running) until the given simulated time."""
        if t_abs > self.clock.now:
            self.clock.advance(t_abs - self.clock.now)
            self._sync()

    def supply_trip_time(self) -> float | None:
        """Absolute sim time at which the output tripped, or None if healthy.

        The physical analogue is the supply's overcurrent latch timestamp on
        dielectric breakdown.
        """
        self._sync()
        if self.state is not None and self.state.failed:
            return self._mounted_at + self.state.failed_at_s
        return None

    # -- impedance ---------------------------------------------------------------

    FIXTURE_PARASITIC_F = 2e-12

    def impedance_point(self, frequency_hz: float) -> float:
        self._sync()
        if not self._isolated:
            raise AdapterError("impedance analyzer requires an isolated output")
        self.clock.advance(self.IMPEDANCE_POINT_SECONDS)
        self._sync()
        if self.spec is None:
            return self.FIXTURE_PARASITIC_F
        cap = device.capacitance(self.spec, self.state, frequency_hz, self.cal)
        return cap * (1.0 + 1e-4 * float(self._noise.standard_normal()))
