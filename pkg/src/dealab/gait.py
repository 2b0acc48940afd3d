"""Analytical model of a walking unit built from three stacked-film actuators.

A unit is a rigid rectangular frame with two symmetric legs attached at an
angle.  Three actuators deform the frame: two change the effective frame
height in opposition (one shortens it, one restores it) and one widens it.
From the frame geometry and the actuator elongations the model derives the
ground-contact pose (how far the legs protrude, the stance span between the
two contact points, and the resulting body tilt), then resolves the actuator
forces into horizontal and vertical components acting on the tilted body.

A three-phase open-loop gait cycles the actuators: lift (actuator 1), shift
(actuators 1 and 2 together), then swing back (actuator 3).  One cycle of
that schedule, evaluated against the electromechanical device model under an
"ideal actuator" assumption (each active actuator contributes its full
quasi-static stroke and blocked force), yields a pose/force time series.
Assemblies of several units share the same three drive channels, so every
unit in an assembly replays the identical sequence.

The published force resolution has an asymmetry between the horizontal and
vertical projections of the widening actuator's force (the vertical
projection uses the cosine where symmetry suggests the sine).  Both variants
are implemented: ``mode="as_printed"`` (default) reproduces the published
form, ``mode="corrected"`` applies the symmetric one.

All angles are degrees at the API boundary and radians internally.  All
functions are pure.
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import device
from .calibration import DEFAULT, Calibration

__all__ = [
    "GaitError", "GeometryError", "UnitGeometry", "ActuatorDrive", "Pose",
    "BodyForces", "GaitPhase", "GaitSchedule", "CyclePoint",
    "pose", "body_forces", "walk_cycle_schedule", "simulate_cycle",
    "load_config", "default_config", "FORCE_MODES",
]

FORCE_MODES = ("as_printed", "corrected")

LIFT, SHIFT, SWING = 1, 2, 3          # actuator numbering within one unit


class GaitError(ValueError):
    """Domain error in the walking-unit model."""


class GeometryError(GaitError):
    """The requested configuration has no valid ground-contact geometry."""


@dataclasses.dataclass(frozen=True)
class UnitGeometry:
    """Rigid frame plus symmetric leg pair of one walking unit."""

    frame_height_mm: float = 40.0
    frame_width_mm: float = 40.0
    leg_length_mm: float = 30.0
    leg_angle_deg: float = 30.0       # between leg axis and the vertical

    def __post_init__(self):
        for name in ("frame_height_mm", "frame_width_mm", "leg_length_mm"):
            if getattr(self, name) <= 0:
                raise GaitError(f"{name} must be positive")
        if not 0.0 < self.leg_angle_deg < 90.0:
            raise GaitError("leg_angle_deg must be in (0, 90)")

    def scaled(self, k: float) -> "UnitGeometry":
        """Same shape at ``k`` times the size (angle unchanged)."""
        return UnitGeometry(self.frame_height_mm * k, self.frame_width_mm * k,
                            self.leg_length_mm * k, self.leg_angle_deg)


@dataclasses.dataclass(frozen=True)
class ActuatorDrive:
    """Elongations and forces of the three actuators, in unit numbering."""

    elongations_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    forces_n: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "elongations_mm",
                           tuple(float(e) for e in self.elongations_mm))
        object.__setattr__(self, "forces_n",
                           tuple(float(f) for f in self.forces_n))
        if len(self.elongations_mm) != 3 or len(self.forces_n) != 3:
            raise GaitError("need exactly three elongations and three forces")
        if any(e < 0 for e in self.elongations_mm):
            raise GaitError("elongations must be >= 0")
        if any(f < 0 for f in self.forces_n):
            raise GaitError("forces must be >= 0")

    def scaled_elongations(self, k: float) -> "ActuatorDrive":
        return ActuatorDrive(tuple(e * k for e in self.elongations_mm),
                             self.forces_n)


@dataclasses.dataclass(frozen=True)
class Pose:
    """Ground-contact geometry of one unit under a given drive."""

    center_height_mm: float      # leg attachment height above the frame bottom
    center_offset_mm: float      # attachment offset from the body midline
    foot_drop_mm: float          # vertical leg protrusion below the frame
    leg_engaged_mm: float        # leg length below the frame, along the leg
    foot_reach_mm: float         # contact-point offset from the body midline
    stance_span_mm: float        # distance between the two contact points
    body_tilt_deg: float         # body tilt at ground contact


@dataclasses.dataclass(frozen=True)
class BodyForces:
    """Actuator forces resolved onto the tilted body."""

    horizontal_n: float
    vertical_n: float


@dataclasses.dataclass(frozen=True)
class GaitPhase:
    active_actuators: frozenset[int]
    fraction: float

    def __post_init__(self):
        object.__setattr__(self, "active_actuators",
                           frozenset(self.active_actuators))
        if not self.active_actuators <= {LIFT, SHIFT, SWING}:
            raise GaitError("active actuators must be a subset of {1, 2, 3}")
        if self.fraction <= 0:
            raise GaitError("phase fraction must be positive")


@dataclasses.dataclass(frozen=True)
class GaitSchedule:
    """Ordered actuation phases of one walking cycle."""

    phases: tuple[GaitPhase, ...]
    cycle_freq_hz: float

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.phases:
            raise GaitError("schedule needs at least one phase")
        if self.cycle_freq_hz <= 0:
            raise GaitError("cycle_freq_hz must be positive")
        total = math.fsum(p.fraction for p in self.phases)
        if abs(total - 1.0) > 1e-9:
            raise GaitError(f"phase fractions must sum to 1 (got {total})")

    @property
    def period_s(self) -> float:
        return 1.0 / self.cycle_freq_hz

    def phase_starts_s(self) -> tuple[float, ...]:
        starts = []
        t = 0.0
        for phase in self.phases:
            starts.append(t)
            t += phase.fraction * self.period_s
        return tuple(starts)


# ---------------------------------------------------------------------------
# kinematics and statics


def pose(geom: UnitGeometry, drive: ActuatorDrive) -> Pose:
    """Ground-contact pose of one unit for a given actuator state.

    The lift actuator shortens the effective frame height, the swing actuator
    restores it, and the shift actuator widens the frame.  The legs are rigid;
    whatever leg length remains below the frame sets the contact points, and
    the triangle they span with the leg direction gives the body tilt.
    """
    e_lift, e_shift, e_swing = drive.elongations_mm
    leg_angle = math.radians(geom.leg_angle_deg)

    center_height = geom.frame_height_mm / 2.0 - e_lift + e_swing
    center_offset = geom.frame_width_mm / 2.0 + e_shift

    foot_drop = geom.leg_length_mm * math.cos(leg_angle) - center_height
    if foot_drop <= 0.0:
        raise GeometryError(
            "legs do not reach below the frame "
            f"(vertical protrusion {foot_drop:.3f} mm)")
    leg_engaged = foot_drop / math.cos(leg_angle)
    foot_reach = center_offset + (
        geom.leg_length_mm - leg_engaged) * math.sin(leg_angle)

    # stance triangle: sides foot_reach and leg_engaged with the leg axis
    # opening (leg angle + 90 deg) between them
    opening = math.radians(geom.leg_angle_deg + 90.0)
    span_sq = (foot_reach ** 2 + leg_engaged ** 2
               - 2.0 * foot_reach * leg_engaged * math.cos(opening))
    if span_sq <= 0.0:
        raise GeometryError("contact points coincide")
    stance_span = math.sqrt(span_sq)

    sin_tilt = leg_engaged * math.sin(opening) / stance_span
    if not -1.0 <= sin_tilt <= 1.0:
        raise GeometryError(
            f"degenerate contact geometry (tilt sine {sin_tilt:.6f})")
    body_tilt = math.degrees(math.asin(sin_tilt))

    return Pose(center_height_mm=center_height,
                center_offset_mm=center_offset,
                foot_drop_mm=foot_drop,
                leg_engaged_mm=leg_engaged,
                foot_reach_mm=foot_reach,
                stance_span_mm=stance_span,
                body_tilt_deg=body_tilt)


def body_forces(p: Pose, drive: ActuatorDrive,
                mode: str = "as_printed") -> BodyForces:
    """Resolve the actuator forces onto the tilted body.

    ``as_printed`` keeps the reference resolution, whose vertical projection
    of the shift force uses the cosine of the tilt; ``corrected`` replaces it
    with the sine, restoring symmetry with the horizontal projection.
    """
    if mode not in FORCE_MODES:
        raise GaitError(f"mode must be one of {FORCE_MODES}, got {mode!r}")
    f_lift, f_shift, f_swing = drive.forces_n
    tilt = math.radians(p.body_tilt_deg)
    axial = -f_lift + f_swing
    horizontal = axial * math.sin(tilt) - f_shift * math.cos(tilt)
    if mode == "as_printed":
        vertical = axial * math.cos(tilt) - f_shift * math.cos(tilt)
    else:
        vertical = axial * math.cos(tilt) - f_shift * math.sin(tilt)
    return BodyForces(horizontal_n=horizontal, vertical_n=vertical)


# ---------------------------------------------------------------------------
# gait sequencing


def walk_cycle_schedule(cycle_freq_hz: float,
                        fractions: Sequence[float] | None = None) -> GaitSchedule:
    """The three-step open-loop cycle: lift, lift+shift, swing.

    ``fractions`` optionally reweights the three phases (must sum to 1);
    the default splits the cycle evenly.
    """
    if fractions is None:
        fractions = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    if len(fractions) != 3:
        raise GaitError("the walking cycle has exactly three phases")
    active = ({LIFT}, {LIFT, SHIFT}, {SWING})
    phases = tuple(GaitPhase(frozenset(a), float(frac))
                   for a, frac in zip(active, fractions))
    return GaitSchedule(phases=phases, cycle_freq_hz=cycle_freq_hz)


@dataclasses.dataclass(frozen=True)
class CyclePoint:
    """State of one unit during one phase of the cycle."""

    t_s: float
    duration_s: float
    phase_index: int
    active_actuators: frozenset[int]
    drive: ActuatorDrive
    pose: Pose
    forces: BodyForces


def simulate_cycle(geom: UnitGeometry, spec: device.DeviceSpec,
                   field_v_um: float, schedule: GaitSchedule, *,
                   units: int = 1, mode: str = "as_printed",
                   cal: Calibration = DEFAULT) -> tuple[tuple[CyclePoint, ...], ...]:
    """Pose/force trace of one walking cycle for each unit of an assembly.

    Active actuators are taken as ideal: each contributes the full
    quasi-static stroke and blocked force of ``spec`` at ``field_v_um``, with
    no antagonistic coupling.  All units share the three drive channels, so
    the assembly result is the single-unit trace replicated per unit.
    """
    if units < 1:
        raise GaitError("units must be >= 1")
    state = device.fresh_state(0)
    stroke = device.displacement(spec, state, field_v_um, cal)
    force = device.blocked_force(spec, state, field_v_um, cal)

    trace = []
    starts = schedule.phase_starts_s()
    for index, phase in enumerate(schedule.phases):
        elong = tuple(stroke if n in phase.active_actuators else 0.0
                      for n in (LIFT, SHIFT, SWING))
        loads = tuple(force if n in phase.active_actuators else 0.0
                      for n in (LIFT, SHIFT, SWING))
        drive = ActuatorDrive(elong, loads)
        p = pose(geom, drive)
        trace.append(CyclePoint(
            t_s=starts[index],
            duration_s=phase.fraction * schedule.period_s,
            phase_index=index,
            active_actuators=phase.active_actuators,
            drive=drive,
            pose=p,
            forces=body_forces(p, drive, mode)))
    unit_trace = tuple(trace)
    return tuple(unit_trace for _ in range(units))


# ---------------------------------------------------------------------------
# configuration files


_GEOMETRY_KEYS = {
    "frame_height_mm": float,
    "frame_width_mm": float,
    "leg_length_mm": float,
    "leg_angle_deg": float,
}
_CONFIG_KEYS = {
    **_GEOMETRY_KEYS,
    "cycle_freq_hz": float,
    "phase_fractions": lambda v: tuple(float(x) for x in v.split(",")),
    "elongations_mm": lambda v: tuple(float(x) for x in v.split(",")),
    "forces_n": lambda v: tuple(float(x) for x in v.split(",")),
    "field_v_um": float,
    "units": int,
    "device": str,
    "mode": str,
}

_DEVICE_PRESETS = {
    "testing_sample": device.testing_sample,
    "scaled_actuator": device.scaled_actuator,
}


@dataclasses.dataclass(frozen=True)
class GaitConfig:
    """Parsed gait configuration: geometry plus cycle parameters."""

    geometry: UnitGeometry
    cycle_freq_hz: float = 6.0
    phase_fractions: tuple[float, ...] | None = None
    elongations_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    forces_n: tuple[float, float, float] = (0.0, 0.0, 0.0)
    field_v_um: float = 42.0
    units: int = 1
    device_preset: str = "scaled_actuator"
    mode: str = "as_printed"

    def schedule(self) -> GaitSchedule:
        return walk_cycle_schedule(self.cycle_freq_hz, self.phase_fractions)

    def device_spec(self) -> device.DeviceSpec:
        try:
            factory = _DEVICE_PRESETS[self.device_preset]
        except KeyError:
            raise GaitError(
                f"unknown device preset {self.device_preset!r}; "
                f"expected one of {sorted(_DEVICE_PRESETS)}") from None
        return factory()

    def drive(self) -> ActuatorDrive:
        return ActuatorDrive(self.elongations_mm, self.forces_n)


def parse_config(text: str) -> GaitConfig:
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise GaitError(f"line {lineno}: expected 'key = value'")
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in _CONFIG_KEYS:
            raise GaitError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](val)
        except ValueError as exc:
            raise GaitError(f"line {lineno}: bad value for {key}: {exc}") from exc
    geom_kwargs = {k: values.pop(k) for k in list(values) if k in _GEOMETRY_KEYS}
    preset = values.pop("device", "scaled_actuator")
    mode = values.pop("mode", "as_printed")
    if mode not in FORCE_MODES:
        raise GaitError(f"mode must be one of {FORCE_MODES}, got {mode!r}")
    return GaitConfig(geometry=UnitGeometry(**geom_kwargs),
                      device_preset=preset, mode=mode, **values)


def load_config(path: str | Path) -> GaitConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def default_config() -> GaitConfig:
    """The stock walking-unit configuration shipped with the package."""
    return load_config(Path(__file__).parent / "data" / "gait.default.cfg")
