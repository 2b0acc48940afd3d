"""Staged lifetime-optimization pipeline.

Stage 1 scans the (field, frequency) grid at the baseline electrode material
and applies an early-stop rule to cells that only produce censored runs.
Stage 2 holds one boundary condition fixed and scans one material factor at a
time (filler at fixed CNT loading, CNT loading at fixed filler).  Stage 3
confirms the combined pick when the lifetime-best and displacement-best cells
disagree.  The report compares best/baseline/worst cells per boundary
condition with percent lifetime improvements.

All planning functions are pure: replanning from identical inputs yields
identical trial lists.  Execution delegates to rig channels (any number, one
worker per channel) and aggregates results keyed by device id, so completion
order never changes the outcome.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
import threading
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import analysis, device, randomness, rig, store
from .adapters import SimulatedChannelHardware
from .calibration import DEFAULT, Calibration
from .simclock import SimClock

__all__ = [
    "CampaignError", "SelectionError", "ParamSpace", "PlannedTrial",
    "TrialRecord", "TrialStatus", "CellKey", "CellStats", "BoundaryConditions",
    "MaterialSelection", "CampaignReport", "BoundarySummary",
    "ComparisonRow", "plan_stage1", "select_boundary",
    "plan_stage2", "select_best_material", "plan_stage3", "compile_report",
    "summarize", "run_campaign", "load_manifest", "default_manifest",
    "BASELINE_MATERIAL", "EARLY_STOP_COMPLETED",
]


class CampaignError(ValueError):
    """Domain error in campaign planning or execution."""


class SelectionError(CampaignError):
    """No cell satisfies a selection predicate."""


BASELINE_MATERIAL = device.MaterialConfig(device.Filler.CB, 2.5)

# Early-stop rule for stage 1: once this many replicates of a cell have
# completed with every one censored at the cap, the cell is marked Stable and
# its remaining replicates are skipped.
EARLY_STOP_COMPLETED = 3

DEFAULT_FLOOR_S = 1500.0


# ---------------------------------------------------------------------------
# domain types


@dataclasses.dataclass(frozen=True)
class ParamSpace:
    """The tested grid plus replication and censoring policy."""

    fields_v_um: tuple[float, ...] = (35.0, 40.0, 45.0, 50.0)
    frequencies_hz: tuple[float, ...] = (1.0, 5.0, 10.0, 50.0)
    fillers: tuple[device.Filler, ...] = (
        device.Filler.LM, device.Filler.CB, device.Filler.CG)
    cnt_concs_ml_fa: tuple[float, ...] = (1.8, 2.2, 2.5, 2.9, 3.3)
    replicates_per_cell: int = 5
    lifetime_cap_s: float = analysis.DEFAULT_CAP_S

    def __post_init__(self):
        object.__setattr__(self, "fields_v_um", tuple(self.fields_v_um))
        object.__setattr__(self, "frequencies_hz", tuple(self.frequencies_hz))
        object.__setattr__(
            self, "fillers", tuple(device.Filler(f) for f in self.fillers))
        object.__setattr__(self, "cnt_concs_ml_fa", tuple(self.cnt_concs_ml_fa))
        for name in ("fields_v_um", "frequencies_hz", "fillers",
                     "cnt_concs_ml_fa"):
            if not getattr(self, name):
                raise CampaignError(f"{name} must be non-empty")
        if self.replicates_per_cell < 1:
            raise CampaignError("replicates_per_cell must be >= 1")
        if self.lifetime_cap_s <= 0:
            raise CampaignError("lifetime_cap_s must be > 0")


@dataclasses.dataclass(frozen=True, order=True)
class CellKey:
    """One tested condition: drive point plus electrode material."""

    field_v_um: float
    frequency_hz: float
    filler: device.Filler
    cnt_conc_ml_fa: float

    @property
    def material(self) -> device.MaterialConfig:
        return device.MaterialConfig(self.filler, self.cnt_conc_ml_fa)

    @property
    def drive(self) -> device.Drive:
        return device.Drive(self.field_v_um, self.frequency_hz)

    @property
    def boundary(self) -> tuple[float, float]:
        return (self.field_v_um, self.frequency_hz)

    def label(self) -> str:
        return (f"f{self.field_v_um:g}-q{self.frequency_hz:g}-"
                f"{self.filler.value}{self.cnt_conc_ml_fa:g}")


@dataclasses.dataclass(frozen=True)
class PlannedTrial:
    stage: int
    cell: CellKey
    replicate: int
    # stage-1 replicates beyond the early-stop quorum are skipped when the
    # quorum came back all-censored
    skippable_when_stable: bool = False

    def device_id(self) -> str:
        return f"s{self.stage}-{self.cell.label()}-r{self.replicate}"


class TrialStatus(str, enum.Enum):
    COMPLETE = "Complete"
    ABORTED = "Aborted"
    FAULTED = "Faulted"


@dataclasses.dataclass(frozen=True)
class TrialRecord:
    """Executed-trial outcome, one physical device."""

    cell: CellKey
    stage: int
    replicate: int
    device_id: str
    channel: int
    seed: int
    lifetime: analysis.LifetimeResult | None
    avg_displacement_mm: float | None
    capacitance_drop_frac: float | None
    duration_s: float | None
    telemetry_ref: str
    status: TrialStatus

    def __post_init__(self):
        if self.status is TrialStatus.COMPLETE:
            if self.lifetime is None or self.avg_displacement_mm is None:
                raise CampaignError(
                    "a Complete record must carry lifetime and displacement")

    def to_row(self) -> dict:
        life = self.lifetime
        return {
            "device_id": self.device_id, "stage": self.stage,
            "replicate": self.replicate, "channel": self.channel,
            "seed": self.seed,
            "field_v_um": self.cell.field_v_um,
            "frequency_hz": self.cell.frequency_hz,
            "filler": self.cell.filler.value,
            "cnt_conc_ml_fa": self.cell.cnt_conc_ml_fa,
            "lifetime_s": None if life is None else life.lifetime_s,
            "censored": None if life is None else life.censored,
            "terminal_cause": None if life is None else life.terminal_cause.value,
            "initial_amplitude_mm": None if life is None else life.initial_amplitude_mm,
            "avg_displacement_mm": self.avg_displacement_mm,
            "capacitance_drop_frac": self.capacitance_drop_frac,
            "duration_s": self.duration_s,
            "status": self.status.value,
            "telemetry_ref": self.telemetry_ref,
        }

    @classmethod
    def from_row(cls, row: Mapping[str, Any]) -> "TrialRecord":
        life = None
        if row["lifetime_s"] is not None:
            life = analysis.LifetimeResult(
                lifetime_s=row["lifetime_s"], censored=row["censored"],
                initial_amplitude_mm=row["initial_amplitude_mm"],
                terminal_cause=analysis.Cause(row["terminal_cause"]))
        return cls(
            cell=CellKey(row["field_v_um"], row["frequency_hz"],
                         device.Filler(row["filler"]), row["cnt_conc_ml_fa"]),
            stage=row["stage"], replicate=row["replicate"],
            device_id=row["device_id"], channel=row["channel"],
            seed=row["seed"], lifetime=life,
            avg_displacement_mm=row["avg_displacement_mm"],
            capacitance_drop_frac=row["capacitance_drop_frac"],
            duration_s=row["duration_s"],
            telemetry_ref=row["telemetry_ref"],
            status=TrialStatus(row["status"]))


@dataclasses.dataclass(frozen=True)
class CellStats:
    """Order-independent aggregate over one cell's completed trials."""

    cell: CellKey
    n: int
    lifetime_mean_s: float
    lifetime_std_s: float
    displacement_mean_mm: float
    displacement_std_mm: float
    censored_count: int
    stable: bool

    @property
    def all_censored(self) -> bool:
        return self.n > 0 and self.censored_count == self.n


@dataclasses.dataclass(frozen=True)
class BoundaryConditions:
    pairs: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(
            (float(f), float(q)) for f, q in self.pairs))


@dataclasses.dataclass(frozen=True)
class MaterialSelection:
    """Per-boundary stage-2 outcome."""

    boundary: tuple[float, float]
    lifetime_best: CellKey
    displacement_best: CellKey
    split: bool                      # the two bests are different cells
    combination: CellKey | None      # untested union cell worth confirming

    def combined_cell(self) -> CellKey | None:
        return self.combination


@dataclasses.dataclass(frozen=True)
class ComparisonRow:
    boundary: tuple[float, float]
    rank: str                        # "best" | "baseline" | "worst"
    cell: CellKey
    lifetime_mean_s: float
    lifetime_std_s: float
    displacement_mean_mm: float
    displacement_std_mm: float
    lifetime_improvement_pct: float
    displacement_delta_mm: float


@dataclasses.dataclass(frozen=True)
class BoundarySummary:
    """Headline comparison numbers for one boundary condition."""

    boundary: tuple[float, float]
    best: CellKey
    baseline: CellKey
    worst: CellKey
    best_vs_baseline_pct: float
    best_vs_worst_pct: float


@dataclasses.dataclass(frozen=True)
class CampaignReport:
    name: str
    seed: int
    boundaries: BoundaryConditions
    cell_stats: tuple[CellStats, ...]
    selections: tuple[MaterialSelection, ...]
    comparisons: tuple[ComparisonRow, ...]
    summaries: tuple[BoundarySummary, ...]

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "boundaries": [
                {"field_v_um": f, "frequency_hz": q}
                for f, q in self.boundaries.pairs],
            "cells": [{
                "field_v_um": s.cell.field_v_um,
                "frequency_hz": s.cell.frequency_hz,
                "filler": s.cell.filler.value,
                "cnt_conc_ml_fa": s.cell.cnt_conc_ml_fa,
                "n": s.n,
                "lifetime_mean_s": s.lifetime_mean_s,
                "lifetime_std_s": s.lifetime_std_s,
                "displacement_mean_mm": s.displacement_mean_mm,
                "displacement_std_mm": s.displacement_std_mm,
                "censored_count": s.censored_count,
                "stable": s.stable,
            } for s in self.cell_stats],
            "selections": [{
                "boundary_field_v_um": sel.boundary[0],
                "boundary_frequency_hz": sel.boundary[1],
                "lifetime_best": _cell_material(sel.lifetime_best),
                "displacement_best": _cell_material(sel.displacement_best),
                "split": sel.split,
                "combination": (None if sel.combination is None
                                else _cell_material(sel.combination)),
            } for sel in self.selections],
            "comparisons": [{
                "boundary_field_v_um": row.boundary[0],
                "boundary_frequency_hz": row.boundary[1],
                "rank": row.rank,
                "filler": row.cell.filler.value,
                "cnt_conc_ml_fa": row.cell.cnt_conc_ml_fa,
                "lifetime_mean_s": row.lifetime_mean_s,
                "lifetime_std_s": row.lifetime_std_s,
                "displacement_mean_mm": row.displacement_mean_mm,
                "displacement_std_mm": row.displacement_std_mm,
                "lifetime_improvement_pct": row.lifetime_improvement_pct,
                "displacement_delta_mm": row.displacement_delta_mm,
            } for row in self.comparisons],
            "summaries": [{
                "boundary_field_v_um": s.boundary[0],
                "boundary_frequency_hz": s.boundary[1],
                "best": _cell_material(s.best),
                "baseline": _cell_material(s.baseline),
                "worst": _cell_material(s.worst),
                "best_vs_baseline_pct": s.best_vs_baseline_pct,
                "best_vs_worst_pct": s.best_vs_worst_pct,
            } for s in self.summaries],
        }


def _cell_material(cell: CellKey) -> dict:
    return {"filler": cell.filler.value, "cnt_conc_ml_fa": cell.cnt_conc_ml_fa}


# ---------------------------------------------------------------------------
# planning (pure functions)


def plan_stage1(space: ParamSpace) -> tuple[PlannedTrial, ...]:
    """Field × frequency grid at the baseline material, cell-major order.

    Every cell gets ``replicates_per_cell`` entries; entries past the
    early-stop quorum are marked skippable and are dropped at execution time
    when the quorum completed all-censored.
    """
    trials = []
    for field in space.fields_v_um:
        for freq in space.frequencies_hz:
            cell = CellKey(field, freq, BASELINE_MATERIAL.filler,
                           BASELINE_MATERIAL.cnt_conc_ml_fa)
            for r in range(space.replicates_per_cell):
                trials.append(PlannedTrial(
                    stage=1, cell=cell, replicate=r,
                    skippable_when_stable=r >= EARLY_STOP_COMPLETED))
    return tuple(trials)


def summarize(records: Iterable[TrialRecord], *,
              stable_cells: frozenset[tuple] = frozenset()) -> dict[CellKey, CellStats]:
    """Aggregate completed trials per cell, order-independently.

    Trials are pooled by cell key; numeric reductions run over values sorted
    by device id so that any arrival order produces bit-identical statistics.
    """
    by_cell: dict[CellKey, list[TrialRecord]] = {}
    for record in records:
        if record.status is not TrialStatus.COMPLETE:
            continue
        by_cell.setdefault(record.cell, []).append(record)
    out: dict[CellKey, CellStats] = {}
    for cell, rows in by_cell.items():
        rows.sort(key=lambda r: r.device_id)
        lifetimes = np.array([r.lifetime.lifetime_s for r in rows])
        disps = np.array([r.avg_displacement_mm for r in rows])
        censored = sum(1 for r in rows if r.lifetime.censored)
        out[cell] = CellStats(
            cell=cell, n=len(rows),
            lifetime_mean_s=float(np.mean(lifetimes)),
            lifetime_std_s=float(np.std(lifetimes, ddof=1)) if len(rows) > 1 else 0.0,
            displacement_mean_mm=float(np.mean(disps)),
            displacement_std_mm=float(np.std(disps, ddof=1)) if len(rows) > 1 else 0.0,
            censored_count=censored,
            stable=cell.boundary + (cell.filler.value, cell.cnt_conc_ml_fa)
            in stable_cells or (censored == len(rows)),
        )
    return out


def select_boundary(stats: Mapping[CellKey, CellStats], *,
                    floor_s: float = DEFAULT_FLOOR_S,
                    cap_s: float = analysis.DEFAULT_CAP_S) -> BoundaryConditions:
    """Pick the working point at the lowest and highest tested frequency.

    A cell qualifies when its mean lifetime is below the cap (there is still
    something to improve) and at or above the floor (still practical).  Among
    qualifying cells at each extreme frequency the one with the largest mean
    displacement wins; ties break toward the lower field.
    """
    if not stats:
        raise SelectionError("no stage-1 results to select from")
    freqs = sorted({cell.frequency_hz for cell in stats})
    picks = []
    for freq in (freqs[0], freqs[-1]):
        candidates = [
            s for cell, s in stats.items()
            if cell.frequency_hz == freq
            and floor_s <= s.lifetime_mean_s < cap_s
        ]
        if not candidates:
            raise SelectionError(
                f"no improvable cell at {freq:g} Hz "
                f"(need mean lifetime in [{floor_s:g}, {cap_s:g}) s)")
        best = min(candidates,
                   key=lambda s: (-s.displacement_mean_mm, s.cell.field_v_um))
        picks.append((best.cell.field_v_um, freq))
    # a single tested frequency yields one pair, not a duplicate
    unique = []
    for pair in picks:
        if pair not in unique:
            unique.append(pair)
    return BoundaryConditions(tuple(unique))


def plan_stage2(boundary: BoundaryConditions, space: ParamSpace,
                replicates: int | None = None) -> tuple[PlannedTrial, ...]:
    """Controlled-variable material scans at each boundary condition.

    Two sub-scans per boundary pair: every filler at the baseline CNT
    loading, and every CNT loading at the baseline filler.  The shared
    baseline cell appears exactly once.
    """
    if not boundary.pairs:
        raise CampaignError("boundary conditions are empty")
    reps = space.replicates_per_cell if replicates is None else replicates
    if reps < 1:
        raise CampaignError("replicates must be >= 1")
    trials = []
    for field, freq in boundary.pairs:
        cells: list[CellKey] = []
        for filler in space.fillers:
            cells.append(CellKey(field, freq, filler,
                                 BASELINE_MATERIAL.cnt_conc_ml_fa))
        for conc in space.cnt_concs_ml_fa:
            cell = CellKey(field, freq, BASELINE_MATERIAL.filler, conc)
            if cell not in cells:
                cells.append(cell)
        for cell in cells:
            for r in range(reps):
                trials.append(PlannedTrial(stage=2, cell=cell, replicate=r))
    return tuple(trials)


def select_best_material(stats: Mapping[CellKey, CellStats]) -> tuple[MaterialSelection, ...]:
    """Per boundary condition: lifetime-best and displacement-best cells.

    When the two bests are different cells, the selection proposes a
    combination candidate taking, for each material factor, the level that
    differs from baseline (the lifetime-best level when both differ).  The
    candidate is only emitted if that combined cell was not already tested.
    """
    boundaries = sorted({cell.boundary for cell in stats})
    selections = []
    for boundary in boundaries:
        cells = {cell: s for cell, s in stats.items() if cell.boundary == boundary}
        if not cells:
            continue
        life_best = min(cells.values(), key=_lifetime_rank).cell
        disp_best = min(cells.values(), key=_displacement_rank).cell
        split = life_best != disp_best
        combination = None
        if split:
            filler = _pick_level(life_best.filler, disp_best.filler,
                                 BASELINE_MATERIAL.filler)
            conc = _pick_level(life_best.cnt_conc_ml_fa,
                               disp_best.cnt_conc_ml_fa,
                               BASELINE_MATERIAL.cnt_conc_ml_fa)
            candidate = CellKey(boundary[0], boundary[1], filler, conc)
            if candidate not in cells:
                combination = candidate
        selections.append(MaterialSelection(
            boundary=boundary, lifetime_best=life_best,
            displacement_best=disp_best, split=split,
            combination=combination))
    return tuple(selections)


def _lifetime_rank(s: CellStats):
    return (-s.lifetime_mean_s, s.cell.filler.value, s.cell.cnt_conc_ml_fa)


def _displacement_rank(s: CellStats):
    return (-s.displacement_mean_mm, s.cell.filler.value, s.cell.cnt_conc_ml_fa)


def _pick_level(life_level, disp_level, baseline_level):
    """Union of the factor levels that deviate from baseline.

    When both bests deviate in the same factor the lifetime-best level wins;
    deviating in no factor keeps the baseline level.
    """
    if life_level != baseline_level:
        return life_level
    if disp_level != baseline_level:
        return disp_level
    return baseline_level


def plan_stage3(selections: Sequence[MaterialSelection], space: ParamSpace,
                replicates: int | None = None) -> tuple[PlannedTrial, ...]:
    """Confirmation runs for each boundary's combination candidate."""
    reps = space.replicates_per_cell if replicates is None else replicates
    trials = []
    for sel in selections:
        cell = sel.combined_cell()
        if cell is None:
            continue
        for r in range(reps):
            trials.append(PlannedTrial(stage=3, cell=cell, replicate=r))
    return tuple(trials)


def compile_report(name: str, seed: int, boundaries: BoundaryConditions,
                   stats: Mapping[CellKey, CellStats],
                   selections: Sequence[MaterialSelection]) -> CampaignReport:
    """Best/baseline/worst comparison per boundary from stored means only."""
    comparisons = []
    summaries = []
    for boundary in boundaries.pairs:
        pool = {cell: s for cell, s in stats.items() if cell.boundary == boundary}
        baseline_cell = CellKey(boundary[0], boundary[1],
                                BASELINE_MATERIAL.filler,
                                BASELINE_MATERIAL.cnt_conc_ml_fa)
        if baseline_cell not in pool:
            raise CampaignError(
                f"baseline cell missing at boundary {boundary}")
        base = pool[baseline_cell]
        best = min(pool.values(), key=_lifetime_rank)
        worst = min(pool.values(),
                    key=lambda s: (s.lifetime_mean_s, s.cell.filler.value,
                                   s.cell.cnt_conc_ml_fa))
        for rank, stat in (("best", best), ("baseline", base), ("worst", worst)):
            improvement = ((stat.lifetime_mean_s - base.lifetime_mean_s)
                           / base.lifetime_mean_s * 100.0)
            comparisons.append(ComparisonRow(
                boundary=boundary, rank=rank, cell=stat.cell,
                lifetime_mean_s=stat.lifetime_mean_s,
                lifetime_std_s=stat.lifetime_std_s,
                displacement_mean_mm=stat.displacement_mean_mm,
                displacement_std_mm=stat.displacement_std_mm,
                lifetime_improvement_pct=improvement,
                displacement_delta_mm=(stat.displacement_mean_mm
                                       - base.displacement_mean_mm)))
        summaries.append(BoundarySummary(
            boundary=boundary, best=best.cell, baseline=base.cell,
            worst=worst.cell,
            best_vs_baseline_pct=((best.lifetime_mean_s - base.lifetime_mean_s)
                                  / base.lifetime_mean_s * 100.0),
            best_vs_worst_pct=((best.lifetime_mean_s - worst.lifetime_mean_s)
                               / worst.lifetime_mean_s * 100.0)))
    ordered_stats = tuple(sorted(stats.values(), key=lambda s: s.cell))
    return CampaignReport(
        name=name, seed=seed, boundaries=boundaries,
        cell_stats=ordered_stats, selections=tuple(selections),
        comparisons=tuple(comparisons), summaries=tuple(summaries))


# ---------------------------------------------------------------------------
# manifests


def default_manifest() -> dict:
    """The stock full-grid campaign manifest shipped with the package."""
    path = Path(__file__).parent / "data" / "campaign.full-grid.v1.json"
    return json.loads(path.read_text(encoding="utf-8"))


def load_manifest(source: str | Path | Mapping[str, Any]) -> dict:
    if isinstance(source, Mapping):
        manifest = dict(source)
    else:
        manifest = json.loads(Path(source).read_text(encoding="utf-8"))
    if "name" not in manifest:
        raise CampaignError("manifest needs a 'name'")
    manifest.setdefault("seed", 0)
    manifest.setdefault("space", {})
    return manifest


def space_from_manifest(manifest: Mapping[str, Any]) -> ParamSpace:
    raw = dict(manifest.get("space", {}))
    kwargs = {}
    for src, dst in (("fields_v_um", "fields_v_um"),
                     ("frequencies_hz", "frequencies_hz"),
                     ("fillers", "fillers"),
                     ("cnt_concs_ml_fa", "cnt_concs_ml_fa"),
                     ("replicates_per_cell", "replicates_per_cell"),
                     ("lifetime_cap_s", "lifetime_cap_s")):
        if src in raw:
            kwargs[dst] = raw[src]
    return ParamSpace(**kwargs)


# ---------------------------------------------------------------------------
# execution


@dataclasses.dataclass
class CampaignResult:
    report: CampaignReport
    run_dir: Path
    records: tuple[TrialRecord, ...]
    boundaries: BoundaryConditions
    selections: tuple[MaterialSelection, ...]


class _Executor:
    """Runs planned trials on a fixed set of rig channels.

    Cells are assigned to channels statically (cell index modulo channel
    count) and each cell's replicates run in index order on one channel, so
    results are independent of worker timing.
    """

    def __init__(self, writer: store.RunWriter, seed: int, *,
                 channels: int = 2, accel: float | None = None,
                 cal: Calibration = DEFAULT,
                 protocol: rig.TrialProtocol = rig.TrialProtocol(),
                 progress: Callable[[dict], None] | None = None,
                 abort_event: threading.Event | None = None,
                 rig_channels: Sequence[rig.Channel] | None = None):
        self.writer = writer
        self.seed = seed
        self.cal = cal
        self.protocol = protocol
        self.progress = progress or (lambda event: None)
        self.abort_event = abort_event or threading.Event()
        if rig_channels is not None:
            self.channels = list(rig_channels)
        else:
            if channels < 1:
                raise CampaignError("need at least one channel")
            self.channels = [
                rig.Channel(cid, SimulatedChannelHardware(SimClock(accel=accel),
                                                          cal))
                for cid in range(channels)]
        if not self.channels:
            raise CampaignError("need at least one channel")
        self._attached: list[tuple[rig.Channel, Callable, Callable]] = []
        for channel in self.channels:
            tsink = self._telemetry_sink(channel.channel_id)
            esink = self._event_sink(channel.channel_id)
            channel.telemetry_sinks.append(tsink)
            channel.event_sinks.append(esink)
            self._attached.append((channel, tsink, esink))
        self._writer_lock = threading.Lock()
        self.cell_status: dict[tuple, str] = {}
        self.stable_cells: set[tuple] = set()

    def detach(self) -> None:
        """Remove this run's sinks so shared channels outlive the campaign."""
        for channel, tsink, esink in self._attached:
            channel.telemetry_sinks.remove(tsink)
            channel.event_sinks.remove(esink)
        self._attached = []

    def _telemetry_sink(self, cid: int):
        def sink(block: rig.TelemetryBlock) -> None:
            with self._writer_lock:
                for record in block.records():
                    self.writer.append_telemetry(cid, record)
        return sink

    def _event_sink(self, cid: int):
        def sink(event: rig.Event) -> None:
            with self._writer_lock:
                self.writer.append_event(event.to_record())
        return sink

    def run_stage(self, plan: Sequence[PlannedTrial],
                  protocol: rig.TrialProtocol | None = None) -> list[TrialRecord]:
        """Execute one stage's plan; returns records in plan order."""
        proto = protocol or self.protocol
        by_cell: dict[CellKey, list[PlannedTrial]] = {}
        for trial in plan:
            by_cell.setdefault(trial.cell, []).append(trial)
        cells = list(by_cell)
        assignment: dict[int, list[CellKey]] = {
            ch.channel_id: [] for ch in self.channels}
        for index, cell in enumerate(cells):
            assignment[index % len(self.channels)].append(cell)

        results: dict[str, TrialRecord] = {}
        results_lock = threading.Lock()
        errors: list[BaseException] = []

        def worker(channel: rig.Channel) -> None:
            try:
                for cell in assignment[channel.channel_id]:
                    self._run_cell(channel, cell, by_cell[cell], proto,
                                   results, results_lock)
            except BaseException as exc:   # pragma: no cover - defensive
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(ch,), daemon=True)
                   for ch in self.channels]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        if errors:
            raise errors[0]

        ordered = [results[t.device_id()] for t in plan
                   if t.device_id() in results]
        with self._writer_lock:
            for record in ordered:
                self.writer.write_trial(record.to_row())
        return ordered

    def _run_cell(self, channel: rig.Channel, cell: CellKey,
                  trials: list[PlannedTrial], proto: rig.TrialProtocol,
                  results: dict, results_lock: threading.Lock) -> None:
        cell_tag = cell.boundary + (cell.filler.value, cell.cnt_conc_ml_fa)
        self.cell_status[cell_tag] = "running"
        completed: list[TrialRecord] = []
        trials = sorted(trials, key=lambda t: t.replicate)
        early_stop_armed = any(t.skippable_when_stable for t in trials)
        stable = False
        for trial in trials:
            if self.abort_event.is_set():
                break
            if stable and trial.skippable_when_stable:
                continue
            record = self._run_trial(channel, trial, proto)
            with results_lock:
                results[trial.device_id()] = record
            if record.status is TrialStatus.COMPLETE:
                completed.append(record)
            quorum = completed[:EARLY_STOP_COMPLETED]
            if (early_stop_armed and not stable
                    and len(quorum) >= EARLY_STOP_COMPLETED
                    and all(r.lifetime.censored for r in quorum)):
                stable = True
        # stability is a property of the outcomes, not of the skip rule:
        # a cell whose completed replicates were all censored is Stable even
        # when there was nothing left to skip
        all_censored = bool(completed) and all(
            r.lifetime.censored for r in completed)
        if all_censored:
            self.stable_cells.add(cell_tag)
            self.cell_status[cell_tag] = "stable"
        else:
            self.cell_status[cell_tag] = "completed"
        self.progress({"kind": "cell_completed",
                       "field_v_um": cell.field_v_um,
                       "frequency_hz": cell.frequency_hz,
                       "filler": cell.filler.value,
                       "cnt_conc_ml_fa": cell.cnt_conc_ml_fa,
                       "status": self.cell_status[cell_tag]})

    def _run_trial(self, channel: rig.Channel, trial: PlannedTrial,
                   proto: rig.TrialProtocol) -> TrialRecord:
        device_id = trial.device_id()
        seed = randomness.derive_seed(
            "trial", self.seed, trial.stage, trial.cell.field_v_um,
            trial.cell.frequency_hz, trial.cell.filler.value,
            trial.cell.cnt_conc_ml_fa, trial.replicate)
        spec = device.testing_sample(trial.cell.material)
        cid = channel.channel_id
        start_line = self.writer.telemetry_position(cid) + 1
        self.progress({"kind": "trial_started", "device_id": device_id,
                       "channel": cid, "stage": trial.stage})
        try:
            outcome = channel.run_trial(
                spec, trial.cell.drive, proto, seed=seed, device_id=device_id,
                abort_poll=(lambda t: self.abort_event.is_set()))
        except rig.RigFault:
            channel.reset_fault()
            end_line = self.writer.telemetry_position(cid)
            record = TrialRecord(
                cell=trial.cell, stage=trial.stage, replicate=trial.replicate,
                device_id=device_id, channel=cid, seed=seed, lifetime=None,
                avg_displacement_mm=None, capacitance_drop_frac=None,
                duration_s=None,
                telemetry_ref=store.telemetry_ref(cid, start_line, end_line),
                status=TrialStatus.FAULTED)
            self.progress({"kind": "trial_finished", "device_id": device_id,
                           "channel": cid, "status": record.status.value})
            return record
        end_line = self.writer.telemetry_position(cid)
        status = (TrialStatus.ABORTED
                  if outcome.lifetime.terminal_cause is analysis.Cause.ABORTED
                  else TrialStatus.COMPLETE)
        record = TrialRecord(
            cell=trial.cell, stage=trial.stage, replicate=trial.replicate,
            device_id=device_id, channel=cid, seed=seed,
            lifetime=outcome.lifetime,
            avg_displacement_mm=outcome.average_displacement_mm,
            capacitance_drop_frac=outcome.capacitance_drop_frac,
            duration_s=outcome.duration_s,
            telemetry_ref=store.telemetry_ref(cid, start_line, end_line),
            status=status)
        self.progress({
            "kind": "trial_finished", "device_id": device_id, "channel": cid,
            "status": record.status.value,
            "lifetime_s": outcome.lifetime.lifetime_s,
            "censored": outcome.lifetime.censored})
        return record


def run_campaign(manifest: Mapping[str, Any] | str | Path,
                 out_dir: str | Path, *,
                 channels: int = 2, accel: float | None = None,
                 cal: Calibration = DEFAULT,
                 progress: Callable[[dict], None] | None = None,
                 abort_event: threading.Event | None = None,
                 rig_channels: Sequence[rig.Channel] | None = None) -> CampaignResult:
    """Execute the full three-stage pipeline and persist everything.

    ``accel`` throttles the per-channel simulation clocks (None = as fast as
    possible).  Passing ``rig_channels`` runs the campaign on existing
    channels (their sinks gain this run's persistence for the duration).
    With a fixed manifest seed, artifacts other than the wall-clock epoch in
    the manifest are byte-identical across runs.
    """
    manifest = load_manifest(manifest)
    space = space_from_manifest(manifest)
    seed = int(manifest["seed"])
    name = str(manifest["name"])
    reps2 = manifest.get("replicates_stage2")
    reps3 = manifest.get("replicates_stage3")
    floor_s = float(manifest.get("boundary_floor_s", DEFAULT_FLOOR_S))
    protocol = rig.TrialProtocol(lifetime_cap_s=space.lifetime_cap_s)
    notify = progress or (lambda event: None)

    stored_manifest = dict(manifest)
    stored_manifest["channels"] = (
        channels if rig_channels is None else len(rig_channels))
    writer = store.RunWriter(out_dir, stored_manifest)
    executor = None
    try:
        executor = _Executor(writer, seed, channels=channels, accel=accel,
                             cal=cal, protocol=protocol, progress=notify,
                             abort_event=abort_event, rig_channels=rig_channels)

        notify({"kind": "stage_started", "stage": 1})
        stage1 = executor.run_stage(plan_stage1(space))
        stats1 = summarize(stage1)
        boundaries = select_boundary(stats1, floor_s=floor_s,
                                     cap_s=space.lifetime_cap_s)
        notify({"kind": "boundary_selected",
                "pairs": [{"field_v_um": f, "frequency_hz": q}
                          for f, q in boundaries.pairs]})

        notify({"kind": "stage_started", "stage": 2})
        stage2 = executor.run_stage(plan_stage2(boundaries, space, reps2))
        stats2 = summarize(stage2)
        selections = select_best_material(stats2)

        notify({"kind": "stage_started", "stage": 3})
        stage3 = executor.run_stage(plan_stage3(selections, space, reps3))
        stats23 = summarize(stage2 + stage3)

        report = compile_report(name, seed, boundaries, stats23, selections)
        writer.write_report(report.to_json_dict())
        records = tuple(stage1 + stage2 + stage3)
        notify({"kind": "campaign_completed", "trials": len(records)})
        return CampaignResult(report=report, run_dir=Path(out_dir),
                              records=records, boundaries=boundaries,
                              selections=tuple(selections))
    finally:
        if executor is not None:
            executor.detach()
        writer.close()
