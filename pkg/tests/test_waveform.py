"""Drive waveforms: voltage, periodicity, sweep phase, switch exclusivity."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from dealab import waveform as wf


class TestDCSquare:
    def test_field_to_voltage(self):
        spec = wf.dc_square(40.0, 1.0, 10.0)
        assert wf.voltage_at(spec, 0.25) == pytest.approx(1200.0)
        assert wf.voltage_at(spec, 0.75) == 0.0

    def test_mean_voltage_is_duty_times_high(self):
        spec = wf.dc_square(40.0, 2.0, 10.0, duty=0.3)
        period = 0.5
        val, _ = quad(lambda t: wf.voltage_at(spec, t), 0.0, period,
                      points=[0.0, 0.3 * period, period], limit=200)
        assert val / period == pytest.approx(0.3 * 1200.0, rel=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(t=st.floats(0.0, 8.0), freq=st.sampled_from([1.0, 5.0, 10.0, 50.0]))
    def test_periodicity(self, t, freq):
        spec = wf.dc_square(40.0, freq, 20.0)
        period = 1.0 / freq
        phase = (t % period) * freq
        # stay away from the discontinuities where float rounding may flip a sample
        if min(phase, abs(phase - 0.5), 1.0 - phase) < 1e-6:
            return
        assert wf.voltage_at(spec, t) == wf.voltage_at(spec, t + period)

    def test_out_of_range_rejected(self):
        spec = wf.dc_square(40.0, 1.0, 10.0)
        with pytest.raises(wf.WaveformError):
            wf.voltage_at(spec, -0.1)
        with pytest.raises(wf.WaveformError):
            wf.voltage_at(spec, 10.1)

    def test_validation(self):
        with pytest.raises(wf.WaveformError):
            wf.dc_square(40.0, 1.0, 10.0, duty=1.0)
        with pytest.raises(wf.WaveformError):
            wf.dc_square(40.0, -1.0, 10.0)
        with pytest.raises(wf.WaveformError):
            wf.dc_square(-40.0, 1.0, 10.0)


class TestSweep:
    def test_rising_edgeCount_matches_integrated_frequency(self):
        # 1 -> 100 Hz over 100 s: integral of f dt = 5050 cycles
        spec = wf.sweep(40.0, 1.0, 100.0, 100.0)
        assert wf.phase(spec, 100.0) == pytest.approx(5050.0, abs=1e-6)
        ts = np.arange(0.0, 100.0, 1e-4)
        v = wf.voltage_at(spec, ts)
        high = v > 0
        edges = int(np.sum(high[1:] & ~high[:-1])) + int(high[0])
        assert abs(edges - 5050) <= 1

    def test_instantaneous_frequency_monotone(self):
        spec = wf.sweep(40.0, 1.0, 100.0, 100.0)
        fs = [wf.instantaneous_frequency(spec, t) for t in np.linspace(0, 100, 33)]
        assert all(b > a for a, b in zip(fs, fs[1:]))
        assert fs[0] == pytest.approx(1.0)
        assert fs[-1] == pytest.approx(100.0)

    def test_log_sweep_phase_endpoints(self):
        spec = wf.sweep(40.0, 1.0, 100.0, 100.0, scale="log")
        # integral of f0 * r^(t/T) dt = f0*T*(r-1)/ln(r)
        expected = 1.0 * 100.0 * 99.0 / np.log(100.0)
        assert wf.phase(spec, 100.0) == pytest.approx(expected, rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(phi=st.floats(0.0, 2000.0),
           scale=st.sampled_from(["linear", "log"]))
    def test_time_of_phase_inverts_phase(self, phi, scale):
        spec = wf.sweep(40.0, 1.0, 100.0, 100.0, scale=scale)
        t = wf.time_of_phase(spec, phi)
        assert 0.0 <= t <= 100.0
        assert wf.phase(spec, t) == pytest.approx(phi, abs=1e-6)


class TestSwitchSchedule:
    def test_complementary_at_plateau(self):
        spec = wf.dc_square(40.0, 1.0, 10.0)
        mid_high = wf.switch_schedule(spec, 0.25)
        assert mid_high.charge_closed and not mid_high.discharge_closed
        mid_low = wf.switch_schedule(spec, 0.75)
        assert mid_low.discharge_closed and not mid_low.charge_closed

    def test_dead_time_opens_both(self):
        spec = wf.dc_square(40.0, 1.0, 10.0)
        for edge in (0.0, 0.5, 1.0):
            state = wf.switch_schedule(spec, edge + 50e-6)
            assert not state.charge_closed and not state.discharge_closed
            settled = wf.switch_schedule(spec, edge + 150e-6)
            assert state != settled

    @settings(max_examples=60, deadline=None)
    @given(t=st.floats(0.0, 10.0),
           freq=st.sampled_from([1.0, 5.0, 10.0, 50.0, 100.0]),
           duty=st.sampled_from([0.3, 0.5, 0.7]))
    def test_never_both_closed(self, t, freq, duty):
        spec = wf.dc_square(40.0, freq, 10.0, duty=duty)
        s = wf.switch_schedule(spec, t)
        assert not (s.charge_closed and s.discharge_closed)

    def test_vectorized_matches_scalar(self):
        spec = wf.dc_square(40.0, 10.0, 2.0)
        ts = np.linspace(0.0, 2.0, 501)
        charge, discharge = wf.switch_states(spec, ts)
        for i, t in enumerate(ts):
            s = wf.switch_schedule(spec, float(t))
            assert s.charge_closed == bool(charge[i])
            assert s.discharge_closed == bool(discharge[i])

    def test_sweep_switches_follow_phase(self):
        spec = wf.sweep(40.0, 1.0, 10.0, 10.0)
        s = wf.switch_schedule(spec, 0.2)   # early in first high segment
        assert s.charge_closed
        assert not (s.charge_closed and s.discharge_closed)
