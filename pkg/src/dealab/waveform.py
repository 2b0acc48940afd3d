"""High-voltage drive waveforms and the flip-flop switch schedule.

Voltage is derived from field times layer thickness: the supply tracks the
commanded field for a given build.  Each channel discharges through an
active pull-down, so the charge and discharge switches run complementarily
with a dead time after every edge during which both are open.
"""

from __future__ import annotations

import dataclasses
import enum
import math

import numpy as np

from .calibration import DEFAULT

DEFAULT_LAYER_THICKNESS_UM = 30.0


class WaveformError(ValueError):
    pass


class Kind(str, enum.Enum):
    DC_SQUARE = "dc_square"
    SWEEP = "sweep"


@dataclasses.dataclass(frozen=True)
class WaveformSpec:
    kind: Kind
    field_v_um: float
    freq_start_hz: float
    freq_end_hz: float
    duty: float
    duration_s: float
    sweep_scale: str = "linear"   # 'linear' or 'log' frequency progression

    def __post_init__(self):
        if self.field_v_um < 0:
            raise WaveformError("field must be >= 0")
        if self.freq_start_hz <= 0 or self.freq_end_hz <= 0:
            raise WaveformError("frequencies must be > 0")
        if not (0.0 < self.duty < 1.0):
            raise WaveformError(f"duty {self.duty} outside (0, 1)")
        if self.duration_s <= 0:
            raise WaveformError("duration must be > 0")
        if self.sweep_scale not in ("linear", "log"):
            raise WaveformError(f"unknown sweep scale {self.sweep_scale!r}")
        if self.kind is Kind.DC_SQUARE and self.freq_start_hz != self.freq_end_hz:
            raise WaveformError("dc_square requires a single frequency")


def dc_square(field_v_um: float, freq_hz: float, duration_s: float,
              duty: float = 0.5) -> WaveformSpec:
    return WaveformSpec(Kind.DC_SQUARE, field_v_um, freq_hz, freq_hz, duty, duration_s)


def sweep(field_v_um: float, freq_start_hz: float, freq_end_hz: float,
          duration_s: float, duty: float = 0.5, scale: str = "linear") -> WaveformSpec:
    return WaveformSpec(Kind.SWEEP, field_v_um, freq_start_hz, freq_end_hz,
                        duty, duration_s, sweep_scale=scale)


def _check_t(spec: WaveformSpec, t) -> None:
    t = np.asarray(t)
    if np.any(t < 0) or np.any(t > spec.duration_s):
        raise WaveformError(f"t outside [0, {spec.duration_s}] s")


def instantaneous_frequency(spec: WaveformSpec, t: float) -> float:
    _check_t(spec, t)
    if spec.kind is Kind.DC_SQUARE:
        return spec.freq_start_hz
    f0, f1, T = spec.freq_start_hz, spec.freq_end_hz, spec.duration_s
    if spec.sweep_scale == "linear":
        return f0 + (f1 - f0) * t / T
    return f0 * (f1 / f0) ** (t / T)


def phase(spec: WaveformSpec, t):
    """Elapsed cycles at time t (integral of instantaneous frequency)."""
    _check_t(spec, t)
    t = np.asarray(t, dtype=float)
    f0, f1, T = spec.freq_start_hz, spec.freq_end_hz, spec.duration_s
    if spec.kind is Kind.DC_SQUARE:
        out = t * f0
    elif spec.sweep_scale == "linear":
        out = f0 * t + (f1 - f0) * t * t / (2.0 * T)
    elif f0 == f1:
        out = t * f0
    else:
        r = f1 / f0
        out = f0 * T / math.log(r) * (np.power(r, t / T) - 1.0)
    return float(out) if out.ndim == 0 else out


def time_of_phase(spec: WaveformSpec, phi: float) -> float:
    """Inverse of :func:`phase` on [0, duration]."""
    if phi < 0:
        raise WaveformError("phase must be >= 0")
    f0, f1, T = spec.freq_start_hz, spec.freq_end_hz, spec.duration_s
    if spec.kind is Kind.DC_SQUARE or f0 == f1:
        return phi / f0
    if spec.sweep_scale == "linear":
        c = (f1 - f0) / (2.0 * T)
        disc = f0 * f0 + 4.0 * c * phi
        if disc < 0:
            raise WaveformError("phase beyond sweep range")
        return 2.0 * phi / (f0 + math.sqrt(disc))
    r = f1 / f0
    return T * math.log(1.0 + phi * math.log(r) / (f0 * T)) / math.log(r)


def voltage_at(spec: WaveformSpec, t,
               layer_thickness_um: float = DEFAULT_LAYER_THICKNESS_UM):
    """Commanded supply voltage at time t (scalar or array)."""
    ph = phase(spec, t)
    high = np.asarray(ph - np.floor(ph)) < spec.duty
    v = np.where(high, spec.field_v_um * layer_thickness_um, 0.0)
    return float(v) if v.ndim == 0 else v


@dataclasses.dataclass(frozen=True)
class SwitchState:
    charge_closed: bool
    discharge_closed: bool


def switch_states(spec: WaveformSpec, t, dead_time_s: float | None = None):
    """Charge/discharge switch positions at time t (scalar or array).

    After every edge both switches stay open for the dead time, which
    prevents shoot-through; otherwise exactly one switch is closed.
    """
    if dead_time_s is None:
        dead_time_s = DEFAULT.dead_time_s
    ph = np.asarray(phase(spec, t), dtype=float)
    n = np.floor(ph)
    frac = ph - n
    high = frac < spec.duty
    edge_phase = np.where(high, n, n + spec.duty)
    if spec.kind is Kind.DC_SQUARE:
        t_edge = edge_phase / spec.freq_start_hz
    else:
        t_edge = np.vectorize(lambda p: time_of_phase(spec, p))(edge_phase)
    since = np.asarray(t, dtype=float) - t_edge
    settled = since >= dead_time_s
    charge = high & settled
    discharge = ~high & settled
    if ph.ndim == 0:
        return SwitchState(bool(charge), bool(discharge))
    return charge, discharge


def switch_schedule(spec: WaveformSpec, t: float,
                    dead_time_s: float | None = None) -> SwitchState:
    """Scalar convenience wrapper over :func:`switch_states`."""
    return switch_states(spec, float(t), dead_time_s)
