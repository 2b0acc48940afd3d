"""Cycle amplitudes, lifetime detection and capacitance degradation.

The lifetime rule: a trial's lifetime is the earliest cycle at which the
moving-median amplitude drops below ``threshold`` times the initial
amplitude and stays below it for ``persistence`` consecutive cycles.  The
initial amplitude is the median over the first ``init_window`` cycles.
Hard failure, operator abort and the observation cap preempt the threshold
crossing when they come first.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import statistics

import numpy as np

DEFAULT_CAP_S = 10800.0     # 3 h observation cap
DEFAULT_THRESHOLD = 0.8
DEFAULT_INIT_WINDOW = 10
DEFAULT_PERSISTENCE = 5
DEFAULT_MEDIAN_WINDOW = 5


class AnalysisError(ValueError):
    pass


class SamplingError(AnalysisError):
    """Sample rate too low for the drive frequency."""


class InsufficientData(AnalysisError):
    pass


@dataclasses.dataclass(frozen=True)
class DisplacementTrace:
    """Uniformly sampled displacement record of one trial."""

    t_s: np.ndarray
    displacement_mm: np.ndarray
    drive_freq_hz: float

    def __post_init__(self):
        t = np.asarray(self.t_s, dtype=float)
        x = np.asarray(self.displacement_mm, dtype=float)
        if t.shape != x.shape or t.ndim != 1:
            raise AnalysisError("t and displacement must be equal-length 1-D arrays")
        if len(t) >= 2 and np.any(np.diff(t) <= 0):
            raise AnalysisError("timestamps must be strictly increasing")
        object.__setattr__(self, "t_s", t)
        object.__setattr__(self, "displacement_mm", x)


@dataclasses.dataclass(frozen=True)
class AmplitudeSeries:
    """Per-cycle amplitude (max - min), timestamped at cycle centers."""

    t_s: np.ndarray
    amplitude_mm: np.ndarray

    def __len__(self):
        return len(self.t_s)


class Cause(str, enum.Enum):
    THRESHOLD = "ThresholdCrossed"
    HARD_FAILURE = "HardFailure"
    CAP = "Cap"
    ABORTED = "Aborted"


@dataclasses.dataclass(frozen=True)
class LifetimeResult:
    lifetime_s: float
    censored: bool
    initial_amplitude_mm: float
    terminal_cause: Cause


class AmplitudeTracker:
    """Streaming per-cycle amplitude reducer.

    Feed samples in time order; completed cycles are emitted as soon as a
    sample lands in a later cycle.  Gaps in the record simply skip cycles.
    Exactly equivalent to :func:`cycle_amplitudes` on the concatenated
    samples (after :meth:`finalize`).
    """

    def __init__(self, drive_freq_hz: float):
        if drive_freq_hz <= 0:
            raise AnalysisError("drive frequency must be > 0")
        self.freq = drive_freq_hz
        self._cycle: int | None = None
        self._lo = math.inf
        self._hi = -math.inf
        self._n = 0
        self.t_s: list[float] = []
        self.amplitude_mm: list[float] = []

    def _flush(self):
        if self._cycle is not None and self._n >= 2:
            self.t_s.append((self._cycle + 0.5) / self.freq)
            self.amplitude_mm.append(self._hi - self._lo)
        self._lo, self._hi, self._n = math.inf, -math.inf, 0

    def feed(self, t: float, x: float) -> None:
        cycle = int(math.floor(t * self.freq))
        if cycle != self._cycle:
            self._flush()
            self._cycle = cycle
        self._lo = min(self._lo, x)
        self._hi = max(self._hi, x)
        self._n += 1

    def finalize(self) -> AmplitudeSeries:
        self._flush()
        self._cycle = None
        return AmplitudeSeries(np.asarray(self.t_s), np.asarray(self.amplitude_mm))


def cycle_amplitudes(trace: DisplacementTrace) -> AmplitudeSeries:
    """Whole-trace amplitude extraction.

    Requires the sampling rate to be at least 4x the drive frequency so each
    half-cycle carries samples; cycles with fewer than two samples are
    dropped.
    """
    t = trace.t_s
    if len(t) < 2:
        raise InsufficientData("trace needs at least two samples")
    rate = 1.0 / float(np.median(np.diff(t)))
    if rate < 4.0 * trace.drive_freq_hz - 1e-9:
        raise SamplingError(
            f"sample rate {rate:.3g} Hz < 4x drive frequency {trace.drive_freq_hz:.3g} Hz")
    if t[-1] - t[0] < 2.0 / trace.drive_freq_hz:
        raise InsufficientData("trace must span at least two drive periods")
    tracker = AmplitudeTracker(trace.drive_freq_hz)
    for ti, xi in zip(t, trace.displacement_mm):
        tracker.feed(float(ti), float(xi))
    return tracker.finalize()


def moving_median(values, window: int = DEFAULT_MEDIAN_WINDOW) -> np.ndarray:
    """Centered moving median; the window shrinks symmetrically at the edges."""
    if window < 1 or window % 2 == 0:
        raise AnalysisError("median window must be a positive odd integer")
    x = np.asarray(values, dtype=float)
    half = window // 2
    out = np.empty_like(x)
    for i in range(len(x)):
        k = min(i, len(x) - 1 - i, half)
        out[i] = np.median(x[i - k:i + k + 1])
    return out


def lifetime(amplitudes: AmplitudeSeries,
             threshold: float = DEFAULT_THRESHOLD,
             cap_s: float = DEFAULT_CAP_S,
             hard_failure_t: float | None = None,
             aborted_t: float | None = None,
             init_window: int = DEFAULT_INIT_WINDOW,
             persistence: int = DEFAULT_PERSISTENCE,
             median_window: int = DEFAULT_MEDIAN_WINDOW) -> LifetimeResult:
    """Apply the lifetime rule to a cycle-amplitude series.

    The earliest of {confirmed threshold crossing, hard failure, abort, cap}
    decides the terminal cause; only a cap-terminated trial is censored.
    """
    if len(amplitudes) < init_window:
        raise InsufficientData(
            f"need at least {init_window} cycle amplitudes, got {len(amplitudes)}")
    amps = np.asarray(amplitudes.amplitude_mm, dtype=float)
    times = np.asarray(amplitudes.t_s, dtype=float)
    initial = float(statistics.median(amps[:init_window]))
    thr = threshold * initial

    med = moving_median(amps, median_window)
    below = med < thr
    t_cross = None
    run = 0
    for i in range(len(below) - 1, -1, -1):   # longest below-run ending at i
        run = run + 1 if below[i] else 0
        if run >= persistence:
            t_cross = float(times[i])
    events: list[tuple[float, Cause]] = []
    if t_cross is not None:
        events.append((t_cross, Cause.THRESHOLD))
    if hard_failure_t is not None:
        events.append((float(hard_failure_t), Cause.HARD_FAILURE))
    if aborted_t is not None:
        events.append((float(aborted_t), Cause.ABORTED))
    events = [(t, c) for (t, c) in events if t < cap_s]
    if not events:
        return LifetimeResult(cap_s, True, initial, Cause.CAP)
    t_end, cause = min(events, key=lambda e: e[0])
    return LifetimeResult(t_end, False, initial, cause)


def average_displacement(amplitudes: AmplitudeSeries,
                         up_to_s: float | None = None) -> float:
    """Arithmetic mean of cycle amplitudes recorded up to ``up_to_s``."""
    amps = np.asarray(amplitudes.amplitude_mm, dtype=float)
    if up_to_s is not None:
        amps = amps[np.asarray(amplitudes.t_s) <= up_to_s]
    if len(amps) == 0:
        raise InsufficientData("no cycle amplitudes in the averaging window")
    return float(np.mean(amps))


def capacitance_degradation(pre_sweep, post_sweep, ref_freq_hz: float = 1e4) -> float:
    """Fractional capacitance loss 1 - post/pre at a reference probe frequency.

    Sweeps are sequences of (probe_freq_hz, capacitance) points; the value at
    the reference frequency is log-interpolated.
    """
    def at_ref(points) -> float:
        pts = sorted((float(f), float(c)) for f, c in points)
        if len(pts) < 2:
            raise InsufficientData("sweep needs at least two points")
        freqs = np.array([p[0] for p in pts])
        caps = np.array([p[1] for p in pts])
        if not (freqs[0] <= ref_freq_hz <= freqs[-1]):
            raise AnalysisError("reference frequency outside sweep range")
        return float(np.interp(math.log10(ref_freq_hz), np.log10(freqs), caps))

    pre = at_ref(pre_sweep)
    post = at_ref(post_sweep)
    if pre <= 0:
        raise AnalysisError("pre-sweep capacitance must be positive")
    return 1.0 - post / pre
