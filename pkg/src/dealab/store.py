"""Durable, append-only persistence for runs: telemetry, trials, reports.

A run directory is laid out as::

    manifest.json           written first, before any other artifact
    telemetry/ch<N>.jsonl   one JSON record per sample, append-only
    events.jsonl            channel/campaign event log, append-only
    trials.csv              fixed-header trial table, append-only
    report.json             campaign report (written once at the end)
    report.csv              flat summary of the report comparison rows

Telemetry records are line-delimited JSON with a fixed field set; absent
measurements are explicit nulls.  Appending is crash-tolerant: any prefix of
a telemetry file that ends on a line boundary parses cleanly, and the reader
discards a trailing partial line while flagging the trials whose sample span
reaches into the discarded region.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from pathlib import Path
from typing import Any, Iterable, Mapping

__all__ = [
    "StoreError",
    "RunWriter",
    "RunReader",
    "TELEMETRY_FIELDS",
    "TRIAL_COLUMNS",
    "telemetry_ref",
    "parse_telemetry_ref",
    "default_data_root",
    "DATA_DIR_ENV",
]

DATA_DIR_ENV = "DEA_LAB_DATA_DIR"


def default_data_root() -> Path:
    """Root directory for run artifacts: the env override or ./dealab-runs."""
    configured = os.environ.get(DATA_DIR_ENV)
    if configured:
        return Path(configured)
    return Path.cwd() / "dealab-runs"


class StoreError(Exception):
    """Raised for storage misuse or unrecoverable on-disk corruption."""


SCHEMA_VERSION = 1

TELEMETRY_FIELDS = (
    "t_s", "channel", "mode", "voltage_v", "current_ua",
    "displacement_mm", "force_n", "clamp_force_n", "hv_isolated",
)

TRIAL_COLUMNS = (
    "device_id", "stage", "replicate", "channel", "seed",
    "field_v_um", "frequency_hz", "filler", "cnt_conc_ml_fa",
    "lifetime_s", "censored", "terminal_cause", "initial_amplitude_mm",
    "avg_displacement_mm", "capacitance_drop_frac", "duration_s",
    "status", "telemetry_ref",
)

_TRIAL_FLOATS = frozenset({
    "field_v_um", "frequency_hz", "cnt_conc_ml_fa", "lifetime_s",
    "initial_amplitude_mm", "avg_displacement_mm", "capacitance_drop_frac",
    "duration_s",
})
_TRIAL_INTS = frozenset({"stage", "replicate", "channel", "seed"})
_TRIAL_BOOLS = frozenset({"censored"})


def telemetry_ref(channel: int, first_line: int, last_line: int) -> str:
    """Reference to an inclusive 1-based line span of a channel's log."""
    if last_line < first_line:
        return f"telemetry/ch{channel}.jsonl:-"
    return f"telemetry/ch{channel}.jsonl:{first_line}-{last_line}"


def parse_telemetry_ref(ref: str) -> tuple[str, int, int] | None:
    """Split a telemetry ref into (relative path, first line, last line).

    Returns None for an empty span reference.
    """
    path, _, span = ref.partition(":")
    if not span or span == "-":
        return None
    first, _, last = span.partition("-")
    return path, int(first), int(last)


def _dump_json_line(record: Mapping[str, Any], order: tuple[str, ...]) -> str:
    ordered = {key: record[key] for key in order}
    return json.dumps(ordered, separators=(",", ":"), allow_nan=False)


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        # repr of the builtin float: shortest round-tripping decimal
        # (numpy scalars would otherwise stringify as np.float64(...))
        return repr(float(value))
    return str(value)


class _ChannelLog:
    def __init__(self, path: Path, flush_every_s: float):
        self.path = path
        self.flush_every_s = flush_every_s
        self.handle = path.open("a", encoding="utf-8")
        self.lines = 0
        self._last_flush_t: float | None = None

    def append(self, record: Mapping[str, Any]) -> int:
        try:
            line = _dump_json_line(record, TELEMETRY_FIELDS)
        except (KeyError, ValueError, TypeError) as exc:
            raise StoreError(f"malformed telemetry record: {exc}") from exc
        self.handle.write(line + "\n")
        self.lines += 1
        t = float(record["t_s"])
        if self._last_flush_t is None or t - self._last_flush_t >= self.flush_every_s:
            self.handle.flush()
            self._last_flush_t = t
        return self.lines

    def close(self) -> None:
        self.handle.flush()
        self.handle.close()


class RunWriter:
    """Single-writer persistence for one run directory.

    The manifest is written before anything else; telemetry files take one
    writer per channel; the trial table and reports are serialized through
    this object.  ``flush_every_s`` is the telemetry flush cadence in
    simulated seconds (default: once per simulated second).
    """

    def __init__(self, root: str | Path, manifest: Mapping[str, Any], *,
                 flush_every_s: float = 1.0):
        self.root = Path(root)
        if (self.root / "manifest.json").exists():
            raise StoreError(f"run directory {self.root} already holds a run")
        if flush_every_s <= 0:
            raise StoreError("flush_every_s must be > 0")
        self.flush_every_s = flush_every_s
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "telemetry").mkdir(exist_ok=True)

        payload = dict(manifest)
        payload.setdefault("schema_version", SCHEMA_VERSION)
        payload.setdefault("run_epoch_unix_s", time.time())
        manifest_path = self.root / "manifest.json"
        tmp = manifest_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                       encoding="utf-8")
        os.replace(tmp, manifest_path)
        self.manifest = payload

        self._channels: dict[int, _ChannelLog] = {}
        self._device_ids: set[str] = set()
        self._closed = False

        self._trials_handle = (self.root / "trials.csv").open(
            "w", encoding="utf-8", newline="")
        self._trials_csv = csv.writer(self._trials_handle)
        self._trials_csv.writerow(TRIAL_COLUMNS)
        self._trials_handle.flush()

        self._events_handle = (self.root / "events.jsonl").open(
            "a", encoding="utf-8")

    # -- telemetry -----------------------------------------------------------

    def _check_open(self) -> None:
        if self._closed:
            raise StoreError("run is closed")

    def append_telemetry(self, channel: int, sample: Mapping[str, Any]) -> int:
        """Append one sample; returns the 1-based line number written."""
        self._check_open()
        log = self._channels.get(channel)
        if log is None:
            log = _ChannelLog(self.root / "telemetry" / f"ch{channel}.jsonl",
                              self.flush_every_s)
            self._channels[channel] = log
        return log.append(sample)

    def telemetry_position(self, channel: int) -> int:
        """Number of lines written so far to a channel's log."""
        log = self._channels.get(channel)
        return 0 if log is None else log.lines

    def append_event(self, event: Mapping[str, Any]) -> None:
        self._check_open()
        self._events_handle.write(
            json.dumps(event, separators=(",", ":"), sort_keys=True) + "\n")
        self._events_handle.flush()

    # -- trial table and reports ---------------------------------------------

    def write_trial(self, row: Mapping[str, Any]) -> None:
        """Append one trial record; device_id must be unique within the run."""
        self._check_open()
        missing = [c for c in TRIAL_COLUMNS if c not in row]
        if missing:
            raise StoreError(f"trial record is missing columns: {missing}")
        device_id = str(row["device_id"])
        if device_id in self._device_ids:
            raise StoreError(f"duplicate device_id {device_id!r}")
        self._device_ids.add(device_id)
        self._trials_csv.writerow([_format_cell(row[c]) for c in TRIAL_COLUMNS])
        self._trials_handle.flush()

    def write_report(self, report: Mapping[str, Any]) -> None:
        """Write report.json plus the flat report.csv summary."""
        self._check_open()
        payload = dict(report)
        payload.setdefault("schema_version", SCHEMA_VERSION)
        (self.root / "report.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
        rows = payload.get("comparisons", [])
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow([_format_cell(row.get(c)) for c in REPORT_COLUMNS])
        (self.root / "report.csv").write_text(buf.getvalue(), encoding="utf-8")

    def close(self) -> None:
        if self._closed:
            return
        for log in self._channels.values():
            log.close()
        self._trials_handle.flush()
        self._trials_handle.close()
        self._events_handle.flush()
        self._events_handle.close()
        self._closed = True

    def __enter__(self) -> "RunWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


REPORT_COLUMNS = (
    "boundary_field_v_um", "boundary_frequency_hz", "rank",
    "filler", "cnt_conc_ml_fa", "lifetime_mean_s", "lifetime_std_s",
    "displacement_mean_mm", "displacement_std_mm",
    "lifetime_improvement_pct", "displacement_delta_mm",
)


class RunReader:
    """Tolerant loader for a run directory.

    Telemetry files may be mid-append or truncated by a crash: any trailing
    partial line is discarded, and ``flagged_trials()`` lists the device ids
    whose recorded sample span reaches into a discarded or missing region.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not (self.root / "manifest.json").exists():
            raise StoreError(f"{self.root} is not a run directory (no manifest)")

    def manifest(self) -> dict:
        return json.loads((self.root / "manifest.json").read_text(encoding="utf-8"))

    # -- telemetry -----------------------------------------------------------

    def channels(self) -> list[int]:
        tel = self.root / "telemetry"
        if not tel.is_dir():
            return []
        out = []
        for path in tel.glob("ch*.jsonl"):
            try:
                out.append(int(path.stem[2:]))
            except ValueError:
                continue
        return sorted(out)

    def telemetry(self, channel: int) -> tuple[list[dict], bool]:
        """All parseable records of one channel plus a truncation flag.

        A final line that is incomplete (no terminator or unparseable) is
        discarded and reported as truncation; damage anywhere earlier is
        corruption and raises.
        """
        path = self.root / "telemetry" / f"ch{channel}.jsonl"
        if not path.exists():
            return [], False
        raw = path.read_bytes()
        records: list[dict] = []
        truncated = False
        if not raw:
            return records, truncated
        lines = raw.split(b"\n")
        tail = lines.pop()          # b"" when the file ends with a newline
        if tail:
            truncated = True
        for index, line in enumerate(lines):
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                if index == len(lines) - 1:
                    truncated = True
                    break
                raise StoreError(
                    f"corrupt telemetry in {path.name} at line {index + 1}") from exc
        return records, truncated

    def valid_telemetry_lines(self, channel: int) -> int:
        records, _ = self.telemetry(channel)
        return len(records)

    # -- trial table and reports ---------------------------------------------

    def trials(self) -> list[dict]:
        path = self.root / "trials.csv"
        if not path.exists():
            return []
        out: list[dict] = []
        with path.open("r", encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None:
                return []
            if tuple(header) != TRIAL_COLUMNS:
                raise StoreError(f"unexpected trial table header: {header}")
            for cells in reader:
                if len(cells) != len(TRIAL_COLUMNS):
                    # a partially written final row is crash debris
                    continue
                row: dict[str, Any] = {}
                for key, cell in zip(TRIAL_COLUMNS, cells):
                    row[key] = _parse_cell(key, cell)
                out.append(row)
        return out

    def flagged_trials(self) -> set[str]:
        """Device ids whose telemetry span is not fully on disk."""
        valid: dict[int, int] = {}
        flagged: set[str] = set()
        for row in self.trials():
            parsed = parse_telemetry_ref(row["telemetry_ref"])
            if parsed is None:
                continue
            path, _, last = parsed
            channel = int(Path(path).stem[2:])
            if channel not in valid:
                valid[channel] = self.valid_telemetry_lines(channel)
            if last > valid[channel]:
                flagged.add(row["device_id"])
        return flagged

    def report(self) -> dict | None:
        path = self.root / "report.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def events(self) -> list[dict]:
        path = self.root / "events.jsonl"
        if not path.exists():
            return []
        out = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError:
                break   # partial tail from a crash
        return out


def _parse_cell(key: str, cell: str) -> Any:
    if cell == "":
        return None
    if key in _TRIAL_FLOATS:
        return float(cell)
    if key in _TRIAL_INTS:
        return int(cell)
    if key in _TRIAL_BOOLS:
        return cell == "true"
    return cell


def iter_jsonl(path: str | Path) -> Iterable[dict]:
    """Stream records from a JSONL file, stopping at a partial tail."""
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.endswith("\n"):
                return
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                return
