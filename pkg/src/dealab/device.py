"""Parametric synthetic multilayer stack actuator.

The model is deliberately low-order: an electrostatic strain law with soft
saturation, a deterministic exponential amplitude fade whose characteristic
life follows an inverse-power law in field with a mild frequency factor and
per-material multipliers, and a rare Weibull hard-failure hazard layered on
top.  Every stochastic quantity is a pure function of ``(seed, address)``
(see :mod:`dealab.randomness`), so a device trajectory can be replayed
bit-for-bit.
"""

from __future__ import annotations

import dataclasses
import enum
import math

from . import randomness
from .calibration import Calibration, DEFAULT

EPS0 = 8.8541878128e-12  # F/m

LN_THRESHOLD = math.log(1.0 / 0.8)  # amplitude ratio defining characteristic life


class DeviceError(ValueError):
    """Domain error from the device model."""


class Filler(str, enum.Enum):
    """Electrical connection filler between electrode layers."""

    LM = "LM"   # liquid metal
    CB = "CB"   # carbon black paste
    CG = "CG"   # carbon grease


@dataclasses.dataclass(frozen=True)
class MaterialConfig:
    filler: Filler = Filler.CB
    cnt_conc_ml_fa: float = 2.5   # CNT loading of the electrode ink, mL per formulation aliquot

    def __post_init__(self):
        object.__setattr__(self, "filler", Filler(self.filler))
        if not (1.0 <= self.cnt_conc_ml_fa <= 5.0):
            raise DeviceError(f"cnt_conc_ml_fa {self.cnt_conc_ml_fa} outside [1.0, 5.0]")


@dataclasses.dataclass(frozen=True)
class DeviceSpec:
    layers: int
    layer_thickness_um: float
    active_length_mm: float
    reinforced: bool
    mass_g: float
    material: MaterialConfig

    def __post_init__(self):
        if self.layers < 1:
            raise DeviceError("layers must be >= 1")
        if self.layer_thickness_um <= 0 or self.active_length_mm <= 0 or self.mass_g <= 0:
            raise DeviceError("geometry and mass must be positive")


@dataclasses.dataclass(frozen=True)
class Drive:
    field_v_um: float
    frequency_hz: float

    def __post_init__(self):
        if self.field_v_um < 0 or not math.isfinite(self.field_v_um):
            raise DeviceError(f"field {self.field_v_um} must be finite and >= 0")
        if self.frequency_hz <= 0 or not math.isfinite(self.frequency_hz):
            raise DeviceError(f"frequency {self.frequency_hz} must be finite and > 0")


@dataclasses.dataclass(frozen=True)
class DeviceState:
    """Immutable snapshot of one physical device.

    ``stress_age_s`` and ``hazard`` are the under-field aging clock and the
    accumulated hard-failure hazard; they make degradation steps exact under
    arbitrary step sizes.  ``failed_at_s`` records the device age at which
    the hard failure fired (resolution finer than the step that found it).
    """

    seed: int
    age_s: float = 0.0
    amplitude_factor: float = 1.0
    capacitance_factor: float = 1.0
    failed: bool = False
    stress_age_s: float = 0.0
    hazard: float = 0.0
    failed_at_s: float | None = None


def fresh_state(seed: int) -> DeviceState:
    return DeviceState(seed=seed)


# ---------------------------------------------------------------------------
# presets

def testing_sample(material: MaterialConfig | None = None) -> DeviceSpec:
    """10-layer benchtop sample used for the lifetime campaigns."""
    return DeviceSpec(layers=10, layer_thickness_um=30.0, active_length_mm=12.0,
                      reinforced=False, mass_g=0.70,
                      material=material or MaterialConfig())


def scaled_actuator(material: MaterialConfig | None = None,
                    reinforced: bool = True) -> DeviceSpec:
    """20-layer locomotion build (28 g of actuators across a 12-pack)."""
    return DeviceSpec(layers=20, layer_thickness_um=30.0, active_length_mm=20.0,
                      reinforced=reinforced, mass_g=28.0 / 12.0,
                      material=material or MaterialConfig(Filler.CG, 2.9))


# ---------------------------------------------------------------------------
# quasi-static responses

def _saturation(field: float, cal: Calibration) -> float:
    return 0.5 * (1.0 + math.tanh((field - cal.strain_sat_field) / cal.strain_sat_width))


def axial_strain(field: float, cal: Calibration = DEFAULT) -> float:
    """Free axial strain of the stack at a given field (fresh device)."""
    if field < 0:
        raise DeviceError("field must be >= 0")
    return cal.strain_gain_per_v2 * field * field * _saturation(field, cal)


def displacement(spec: DeviceSpec, state: DeviceState, field: float,
                 cal: Calibration = DEFAULT) -> float:
    """Quasi-static stroke in mm; degrades linearly with amplitude_factor."""
    if state.failed:
        return 0.0
    return axial_strain(field, cal) * spec.active_length_mm * state.amplitude_factor


def blocked_force(spec: DeviceSpec, state: DeviceState, field: float,
                  cal: Calibration = DEFAULT) -> float:
    """Blocked force in N; reinforcement doubles it exactly."""
    if field < 0:
        raise DeviceError("field must be >= 0")
    if state.failed:
        return 0.0
    force = cal.force_gain_n * spec.layers * field * field * _saturation(field, cal)
    if spec.reinforced:
        force *= cal.reinforce_factor
    return force * state.amplitude_factor


# ---------------------------------------------------------------------------
# electrode material effects

def _log_interp_anchor(lo: float, hi: float, freq: float, cal: Calibration) -> float:
    f_lo, f_hi = cal.filler_freq_lo_hz, cal.filler_freq_hi_hz
    w = math.log10(max(freq, f_lo) / f_lo) / math.log10(f_hi / f_lo)
    w = min(max(w, 0.0), 1.0)
    return math.exp((1.0 - w) * math.log(lo) + w * math.log(hi))


def _filler_life_factor(filler: Filler, freq: float, cal: Calibration) -> float:
    anchors = {
        Filler.CB: (cal.filler_life_cb_lo, cal.filler_life_cb_hi),
        Filler.CG: (cal.filler_life_cg_lo, cal.filler_life_cg_hi),
        Filler.LM: (cal.filler_life_lm_lo, cal.filler_life_lm_hi),
    }[filler]
    return _log_interp_anchor(*anchors, freq, cal)


def _cnt_peak(freq: float, cal: Calibration) -> float:
    f_lo, f_hi = cal.filler_freq_lo_hz, cal.filler_freq_hi_hz
    w = math.log10(max(freq, f_lo) / f_lo) / math.log10(f_hi / f_lo)
    w = min(max(w, 0.0), 1.0)
    return cal.cnt_peak_lo + (cal.cnt_peak_hi - cal.cnt_peak_lo) * w


def _cnt_life_factor(cnt: float, freq: float, cal: Calibration) -> float:
    z = math.log(cnt / _cnt_peak(freq, cal)) / cal.cnt_life_log_sigma
    return math.exp(-0.5 * z * z)


def material_life_factor(material: MaterialConfig, freq: float,
                         cal: Calibration = DEFAULT) -> float:
    return (_filler_life_factor(material.filler, freq, cal)
            * _cnt_life_factor(material.cnt_conc_ml_fa, freq, cal))


def material_stroke_factor(material: MaterialConfig, freq: float,
                           cal: Calibration = DEFAULT) -> float:
    """Cyclic stroke multiplier: quasi-static electrode sweet spot times an
    electrode-RC corner whose frequency rises with CNT loading."""
    cnt = material.cnt_conc_ml_fa
    zq = (cnt - cal.cnt_peak_lo) / cal.cnt_disp_sigma
    quasi = math.exp(-0.5 * zq * zq)
    corner = cal.cnt_corner_hz * (cnt / cal.cnt_peak_lo) ** cal.cnt_corner_exponent
    return quasi / math.sqrt(1.0 + (freq / corner) ** 2)


def cycle_peak_displacement(spec: DeviceSpec, state: DeviceState, field: float,
                            freq: float, cal: Calibration = DEFAULT) -> float:
    """Peak-to-peak stroke under square-wave cycling at ``freq``."""
    return displacement(spec, state, field, cal) * material_stroke_factor(spec.material, freq, cal)


# ---------------------------------------------------------------------------
# degradation

def characteristic_life(spec: DeviceSpec, drive: Drive,
                        cal: Calibration = DEFAULT) -> float:
    """Seconds until the amplitude ratio reaches 0.8 under constant drive
    (before per-device jitter).  Infinite at zero field."""
    if drive.field_v_um == 0.0:
        return math.inf
    stress = (drive.field_v_um / cal.life_field_ref_v_um) ** (-cal.life_field_exponent)
    freq = (drive.frequency_hz / cal.life_freq_ref_hz) ** cal.life_freq_exponent
    return cal.life_ref_s * stress * freq * material_life_factor(spec.material, drive.frequency_hz, cal)


def life_jitter(seed: int, cal: Calibration = DEFAULT) -> float:
    """Per-device lognormal build-quality multiplier on characteristic life."""
    return math.exp(cal.life_jitter_sigma * randomness.normal(seed, randomness.STREAM_JITTER))


def hazard_quantile(seed: int) -> float:
    """The cumulative-hazard level at which this device hard-fails."""
    u = randomness.uniform(seed, randomness.STREAM_HAZARD)
    return -math.log(1.0 - u)


def step_degradation(spec: DeviceSpec, state: DeviceState, drive: Drive,
                     dt: float, cal: Calibration = DEFAULT) -> DeviceState:
    """Advance a device by ``dt`` seconds under constant ``drive``.

    Deterministic given (spec, state, drive, dt, seed): the amplitude and
    capacitance fades integrate exactly, and the hard-failure hazard
    accumulates in closed form, so step size never changes the trajectory.
    """
    if dt <= 0 or not math.isfinite(dt):
        raise DeviceError(f"dt {dt} must be finite and > 0")
    if state.failed:
        return dataclasses.replace(state, age_s=state.age_s + dt)
    if drive.field_v_um == 0.0:
        return dataclasses.replace(state, age_s=state.age_s + dt)

    t_char = characteristic_life(spec, drive, cal) * life_jitter(state.seed, cal)

    amp = state.amplitude_factor * math.exp(-LN_THRESHOLD * dt / t_char)

    fade = cal.cap_fade_rate_ref * (drive.field_v_um / cal.life_field_ref_v_um) ** cal.cap_fade_exponent
    cap = state.capacitance_factor * math.exp(-fade * dt)

    theta = cal.hard_life_ratio * t_char
    k = cal.hard_shape
    s0, s1 = state.stress_age_s, state.stress_age_s + dt
    hazard = state.hazard + (s1 / theta) ** k - (s0 / theta) ** k

    crit = hazard_quantile(state.seed)
    if hazard >= crit:
        # invert the hazard increment for the exact in-step failure age
        s_fail = theta * (crit - state.hazard + (s0 / theta) ** k) ** (1.0 / k)
        failed_at = state.age_s + (s_fail - s0)
        return dataclasses.replace(state, age_s=state.age_s + dt, stress_age_s=s1,
                                   amplitude_factor=amp, capacitance_factor=cap,
                                   hazard=hazard, failed=True, failed_at_s=failed_at)
    return dataclasses.replace(state, age_s=state.age_s + dt, stress_age_s=s1,
                               amplitude_factor=amp, capacitance_factor=cap,
                               hazard=hazard)


def simulate_lifetime(spec: DeviceSpec, drive: Drive, seed: int,
                      cap_s: float = 10800.0,
                      cal: Calibration = DEFAULT) -> tuple[float, str]:
    """Closed-form lifetime of one device: ('threshold'|'hard'|'cap', time).

    Fast path used for landscape surveys; exactly consistent with iterating
    :func:`step_degradation` because both integrate the same laws.
    """
    t_char = characteristic_life(spec, drive, cal) * life_jitter(seed, cal)
    t_hard = cal.hard_life_ratio * t_char * hazard_quantile(seed) ** (1.0 / cal.hard_shape)
    if cap_s <= t_char and cap_s <= t_hard:
        return cap_s, "cap"
    if t_hard < t_char:
        return t_hard, "hard"
    return t_char, "threshold"


# ---------------------------------------------------------------------------
# capacitance

def layer_area_m2(spec: DeviceSpec, cal: Calibration = DEFAULT) -> float:
    # electrode area recovered from elastomer-dominated mass
    rho = cal.density_g_cm3 * 1000.0
    return (spec.mass_g / 1000.0) / (rho * spec.layers * spec.layer_thickness_um * 1e-6)


def capacitance(spec: DeviceSpec, state: DeviceState, probe_freq_hz: float,
                cal: Calibration = DEFAULT) -> float:
    """Device capacitance in farads at an LCR probe frequency.

    Valid probe range is 1 kHz to 1 MHz; the mild roll-off with probe
    frequency models electrode resistance shading the far plate.
    """
    if not (1e3 <= probe_freq_hz <= 1e6):
        raise DeviceError(f"probe frequency {probe_freq_hz} outside [1e3, 1e6] Hz")
    area = layer_area_m2(spec, cal)
    base = (cal.epsilon_r * EPS0 * area / (spec.layer_thickness_um * 1e-6)) * spec.layers
    rolloff = 1.0 - cal.cap_rolloff_per_dec * math.log10(probe_freq_hz / 1e3)
    return base * state.capacitance_factor * rolloff
