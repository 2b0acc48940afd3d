"""Run-directory persistence: append-only logs, crash tolerance, round-trips."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dealab import store


def sample(t, channel=0, mode="actuating_displacement", disp=0.1):
    return {
        "t_s": t, "channel": channel, "mode": mode,
        "voltage_v": 900.0, "current_ua": 1.25,
        "displacement_mm": disp, "force_n": None,
        "clamp_force_n": None, "hv_isolated": False,
    }


def trial_row(device_id, channel=0, ref="telemetry/ch0.jsonl:1-10"):
    return {
        "device_id": device_id, "stage": 1, "replicate": 0, "channel": channel,
        "seed": 42, "field_v_um": 45.0, "frequency_hz": 50.0,
        "filler": "CB", "cnt_conc_ml_fa": 2.5,
        "lifetime_s": 1775.25, "censored": False,
        "terminal_cause": "ThresholdCrossed", "initial_amplitude_mm": 0.31,
        "avg_displacement_mm": 0.29, "capacitance_drop_frac": 0.04,
        "duration_s": 1801.0, "status": "Complete", "telemetry_ref": ref,
    }


class TestWriter:
    def test_manifest_written_before_any_telemetry(self, tmp_path):
        root = tmp_path / "run"
        writer = store.RunWriter(root, {"campaign": "demo"})
        assert (root / "manifest.json").exists()
        assert list((root / "telemetry").iterdir()) == []
        loaded = json.loads((root / "manifest.json").read_text())
        assert loaded["campaign"] == "demo"
        assert loaded["schema_version"] == store.SCHEMA_VERSION
        assert "run_epoch_unix_s" in loaded
        writer.close()

    def test_first_append_creates_channel_file(self, tmp_path):
        with store.RunWriter(tmp_path / "run", {}) as writer:
            assert not (tmp_path / "run/telemetry/ch3.jsonl").exists()
            writer.append_telemetry(3, sample(0.0, channel=3))
            assert (tmp_path / "run/telemetry/ch3.jsonl").exists()

    def test_many_appends_reload_count_and_order(self, tmp_path):
        n = 10_000
        with store.RunWriter(tmp_path / "run", {}) as writer:
            for i in range(n):
                writer.append_telemetry(0, sample(i * 0.01, disp=i * 1e-6))
        records, truncated = store.RunReader(tmp_path / "run").telemetry(0)
        assert not truncated
        assert len(records) == n
        assert [r["t_s"] for r in records] == [i * 0.01 for i in range(n)]

    def test_append_after_close_errors(self, tmp_path):
        writer = store.RunWriter(tmp_path / "run", {})
        writer.close()
        with pytest.raises(store.StoreError, match="closed"):
            writer.append_telemetry(0, sample(0.0))
        with pytest.raises(store.StoreError, match="closed"):
            writer.write_trial(trial_row("d1"))

    def test_existing_run_directory_refused(self, tmp_path):
        store.RunWriter(tmp_path / "run", {}).close()
        with pytest.raises(store.StoreError, match="already holds"):
            store.RunWriter(tmp_path / "run", {})

    def test_flush_cadence_follows_simulated_time(self, tmp_path):
        path = tmp_path / "run/telemetry/ch0.jsonl"
        writer = store.RunWriter(tmp_path / "run", {}, flush_every_s=1.0)
        writer.append_telemetry(0, sample(0.0))     # first append flushes
        writer.append_telemetry(0, sample(0.5))     # buffered
        assert len(path.read_text().splitlines()) == 1
        writer.append_telemetry(0, sample(1.0))     # one simulated second on
        assert len(path.read_text().splitlines()) == 3
        writer.close()

    def test_malformed_record_rejected(self, tmp_path):
        with store.RunWriter(tmp_path / "run", {}) as writer:
            bad = sample(0.0)
            del bad["voltage_v"]
            with pytest.raises(store.StoreError, match="malformed"):
                writer.append_telemetry(0, bad)
            with pytest.raises(store.StoreError, match="malformed"):
                writer.append_telemetry(0, sample(float("nan")))


class TestTrialTable:
    def test_empty_run_gives_header_only_csv(self, tmp_path):
        store.RunWriter(tmp_path / "run", {}).close()
        text = (tmp_path / "run/trials.csv").read_text()
        assert text.strip() == ",".join(store.TRIAL_COLUMNS)
        assert store.RunReader(tmp_path / "run").trials() == []

    def test_round_trip_typed_values(self, tmp_path):
        row = trial_row("d1")
        with store.RunWriter(tmp_path / "run", {}) as writer:
            writer.write_trial(row)
            none_row = trial_row("d2")
            none_row["avg_displacement_mm"] = None
            none_row["censored"] = True
            writer.write_trial(none_row)
        loaded = store.RunReader(tmp_path / "run").trials()
        assert loaded[0] == row
        assert loaded[1]["avg_displacement_mm"] is None
        assert loaded[1]["censored"] is True

    def test_duplicate_device_id_rejected(self, tmp_path):
        with store.RunWriter(tmp_path / "run", {}) as writer:
            writer.write_trial(trial_row("d1"))
            with pytest.raises(store.StoreError, match="duplicate"):
                writer.write_trial(trial_row("d1"))

    def test_missing_column_rejected(self, tmp_path):
        with store.RunWriter(tmp_path / "run", {}) as writer:
            row = trial_row("d1")
            del row["lifetime_s"]
            with pytest.raises(store.StoreError, match="missing columns"):
                writer.write_trial(row)


class TestReport:
    def test_report_round_trip_field_for_field(self, tmp_path):
        report = {
            "campaign": "demo", "seed": 7,
            "boundaries": [{"field_v_um": 45.0, "frequency_hz": 50.0}],
            "comparisons": [{
                "boundary_field_v_um": 45.0, "boundary_frequency_hz": 50.0,
                "rank": "best", "filler": "CG", "cnt_conc_ml_fa": 2.5,
                "lifetime_mean_s": 3530.2, "lifetime_std_s": 55.0,
                "displacement_mean_mm": 0.21, "displacement_std_mm": 0.004,
                "lifetime_improvement_pct": 99.2, "displacement_delta_mm": -0.01,
            }],
        }
        with store.RunWriter(tmp_path / "run", {}) as writer:
            writer.write_report(report)
        loaded = store.RunReader(tmp_path / "run").report()
        for key, value in report.items():
            assert loaded[key] == value
        csv_text = (tmp_path / "run/report.csv").read_text().splitlines()
        assert csv_text[0] == ",".join(store.REPORT_COLUMNS)
        assert len(csv_text) == 2
        assert "best" in csv_text[1]

    def test_missing_report_reads_as_none(self, tmp_path):
        store.RunWriter(tmp_path / "run", {}).close()
        assert store.RunReader(tmp_path / "run").report() is None


class TestCrashTolerance:
    def _write_run(self, tmp_path, n=50):
        with store.RunWriter(tmp_path / "run", {}) as writer:
            for i in range(n):
                writer.append_telemetry(0, sample(i * 0.01))
            writer.write_trial(trial_row("d1", ref=store.telemetry_ref(0, 1, 30)))
            writer.write_trial(trial_row("d2", ref=store.telemetry_ref(0, 31, n)))
        return tmp_path / "run"

    def test_partial_final_line_discarded_and_trial_flagged(self, tmp_path):
        root = self._write_run(tmp_path)
        path = root / "telemetry/ch0.jsonl"
        raw = path.read_bytes()
        cut = raw.rfind(b"\n", 0, len(raw) - 1) + 1 + 7   # mid final line
        path.write_bytes(raw[:cut])
        reader = store.RunReader(root)
        records, truncated = reader.telemetry(0)
        assert truncated
        assert len(records) == 49
        assert reader.flagged_trials() == {"d2"}

    def test_line_boundary_truncation_is_clean(self, tmp_path):
        root = self._write_run(tmp_path)
        path = root / "telemetry/ch0.jsonl"
        lines = path.read_bytes().splitlines(keepends=True)
        path.write_bytes(b"".join(lines[:30]))
        records, truncated = store.RunReader(root).telemetry(0)
        assert not truncated
        assert len(records) == 30
        assert store.RunReader(root).flagged_trials() == {"d2"}

    def test_mid_file_corruption_raises(self, tmp_path):
        root = self._write_run(tmp_path)
        path = root / "telemetry/ch0.jsonl"
        lines = path.read_text().splitlines()
        lines[10] = lines[10][:5] + "#garbage#"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(store.StoreError, match="corrupt"):
            store.RunReader(root).telemetry(0)

    @settings(max_examples=60, deadline=None)
    @given(cut_fraction=st.floats(min_value=0.0, max_value=1.0))
    def test_any_byte_truncation_yields_a_parseable_prefix(
            self, tmp_path_factory, cut_fraction):
        root = tmp_path_factory.mktemp("crash") / "run"
        with store.RunWriter(root, {}) as writer:
            for i in range(20):
                writer.append_telemetry(0, sample(i * 0.01))
        path = root / "telemetry/ch0.jsonl"
        raw = path.read_bytes()
        cut = int(round(cut_fraction * len(raw)))
        prefix = raw[:cut]
        path.write_bytes(prefix)
        records, truncated = store.RunReader(root).telemetry(0)
        whole_lines = prefix.count(b"\n")
        assert len(records) == whole_lines
        leftover = prefix.rfind(b"\n") + 1 < len(prefix)
        assert truncated == leftover
        for i, record in enumerate(records):
            assert record["t_s"] == pytest.approx(i * 0.01)


class TestRefs:
    def test_ref_round_trip(self):
        ref = store.telemetry_ref(2, 5, 17)
        assert ref == "telemetry/ch2.jsonl:5-17"
        assert store.parse_telemetry_ref(ref) == ("telemetry/ch2.jsonl", 5, 17)

    def test_empty_span(self):
        ref = store.telemetry_ref(1, 4, 3)
        assert store.parse_telemetry_ref(ref) is None
