"""Versioned plain-text calibration constants.

The shipped file ``data/calibration.v1.cfg`` holds every tuned constant of
the synthetic device and rig.  Campaign manifests can override individual
keys without editing the package, which keeps "what the model believes"
reviewable in one document.
"""

from __future__ import annotations

import dataclasses
from importlib import resources
from pathlib import Path

_FLOAT_KEYS = {
    "strain_gain_per_v2", "strain_sat_field", "strain_sat_width",
    "force_gain_n", "reinforce_factor", "rated_field_v_um",
    "life_ref_s", "life_field_ref_v_um", "life_field_exponent",
    "life_freq_ref_hz", "life_freq_exponent", "life_jitter_sigma",
    "hard_life_ratio", "hard_shape",
    "filler_freq_lo_hz", "filler_freq_hi_hz",
    "filler_life_cb_lo", "filler_life_cb_hi",
    "filler_life_cg_lo", "filler_life_cg_hi",
    "filler_life_lm_lo", "filler_life_lm_hi",
    "cnt_life_log_sigma", "cnt_peak_lo", "cnt_peak_hi",
    "cnt_disp_sigma", "cnt_corner_hz", "cnt_corner_exponent",
    "epsilon_r", "density_g_cm3", "cap_rolloff_per_dec",
    "cap_fade_rate_ref", "cap_fade_exponent",
    "dead_time_s", "leak_resistance_mohm",
    "rotary_switch_s", "linear_speed_mm_s", "clamp_step_mm",
    "contact_stiffness_n_mm", "contact_position_mm", "travel_max_mm",
    "lds_noise_mm", "force_noise_n",
}


class CalibrationError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class Calibration:
    """Immutable bag of calibration constants (see the .cfg for units)."""

    version: int
    values: dict

    def __getattr__(self, name: str) -> float:
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def override(self, overrides: dict) -> "Calibration":
        """New Calibration with selected keys replaced."""
        unknown = set(overrides) - set(self.values)
        if unknown:
            raise CalibrationError(f"unknown calibration keys: {sorted(unknown)}")
        merged = dict(self.values)
        for key, val in overrides.items():
            merged[key] = float(val)
        return Calibration(version=self.version, values=merged)

    def as_dict(self) -> dict:
        return {"version": self.version, **self.values}


def parse(text: str) -> Calibration:
    values: dict = {}
    version = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CalibrationError(f"line {lineno}: expected 'key = value'")
        key, _, val = (part.strip() for part in line.partition("="))
        if key == "version":
            version = int(val)
        elif key in _FLOAT_KEYS:
            values[key] = float(val)
        else:
            raise CalibrationError(f"line {lineno}: unknown key {key!r}")
    if version is None:
        raise CalibrationError("calibration file has no version key")
    missing = _FLOAT_KEYS - set(values)
    if missing:
        raise CalibrationError(f"missing calibration keys: {sorted(missing)}")
    return Calibration(version=version, values=values)


def load_file(path: str | Path) -> Calibration:
    return parse(Path(path).read_text())


def load_default() -> Calibration:
    text = resources.files("dealab.data").joinpath("calibration.v1.cfg").read_text()
    return parse(text)


DEFAULT = load_default()
