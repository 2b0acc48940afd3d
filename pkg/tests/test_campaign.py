"""Staged optimization pipeline: planning, selection, reporting, execution."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dealab import analysis, campaign, device, store
from dealab.campaign import (BASELINE_MATERIAL, BoundaryConditions, CellKey,
                             CellStats, ParamSpace)
from dealab.device import Filler

CAP = analysis.DEFAULT_CAP_S


def stats_for(cells, *, cap=CAP):
    """CellStats from (field, freq, filler, cnt, lifetime_mean, disp_mean)."""
    out = {}
    for field, freq, filler, cnt, life, disp in cells:
        key = CellKey(field, freq, Filler(filler), cnt)
        out[key] = CellStats(
            cell=key, n=5, lifetime_mean_s=life, lifetime_std_s=0.0,
            displacement_mean_mm=disp, displacement_std_mm=0.0,
            censored_count=5 if life >= cap else 0, stable=life >= cap)
    return out


def landscape_stats():
    """Stage-1 summary shaped like the calibrated model's expectation."""
    spec = device.testing_sample()
    rows = []
    for field in (35.0, 40.0, 45.0, 50.0):
        for freq in (1.0, 5.0, 10.0, 50.0):
            t_char = device.characteristic_life(spec, device.Drive(field, freq))
            life = min(t_char, CAP)
            disp = device.cycle_peak_displacement(
                spec, device.fresh_state(1), field, freq)
            rows.append((field, freq, "CB", 2.5, life, disp))
    return stats_for(rows)


class TestPlanStage1:
    def test_full_grid_shape(self):
        space = ParamSpace()
        plan = campaign.plan_stage1(space)
        assert len(plan) == 4 * 4 * 5
        cells = {t.cell for t in plan}
        assert len(cells) == 16
        assert all(t.cell.filler is Filler.CB and t.cell.cnt_conc_ml_fa == 2.5
                   for t in plan)
        for trial in plan:
            assert trial.skippable_when_stable == (trial.replicate >= 3)

    def test_single_cell_space(self):
        space = ParamSpace(fields_v_um=(40.0,), frequencies_hz=(1.0,),
                           replicates_per_cell=4)
        plan = campaign.plan_stage1(space)
        assert len(plan) == 4
        assert [t.replicate for t in plan] == [0, 1, 2, 3]

    def test_plan_is_pure(self):
        space = ParamSpace()
        assert campaign.plan_stage1(space) == campaign.plan_stage1(space)

    def test_device_ids_unique(self):
        plan = campaign.plan_stage1(ParamSpace())
        ids = [t.device_id() for t in plan]
        assert len(set(ids)) == len(ids)


class TestSelectBoundary:
    def test_model_landscape_gives_expected_pair(self):
        boundary = campaign.select_boundary(landscape_stats())
        assert set(boundary.pairs) == {(40.0, 1.0), (45.0, 50.0)}

    def test_all_censored_raises(self):
        stats = stats_for([(f, q, "CB", 2.5, CAP, 0.1)
                           for f in (35.0, 40.0) for q in (1.0, 50.0)])
        with pytest.raises(campaign.SelectionError, match="1 Hz"):
            campaign.select_boundary(stats)

    def test_error_names_the_empty_frequency(self):
        # improvable at 1 Hz, nothing at 50 Hz
        stats = stats_for([
            (40.0, 1.0, "CB", 2.5, 4000.0, 0.2),
            (40.0, 50.0, "CB", 2.5, CAP, 0.2),
            (45.0, 50.0, "CB", 2.5, 900.0, 0.3),
        ])
        with pytest.raises(campaign.SelectionError, match="50 Hz"):
            campaign.select_boundary(stats)

    def test_tie_breaks_to_lower_field(self):
        stats = stats_for([
            (40.0, 1.0, "CB", 2.5, 4000.0, 0.25),
            (45.0, 1.0, "CB", 2.5, 3000.0, 0.25),   # same displacement
        ])
        boundary = campaign.select_boundary(stats)
        assert boundary.pairs == ((40.0, 1.0),)

    def test_single_frequency_yields_one_pair(self):
        stats = stats_for([(45.0, 50.0, "CB", 2.5, 1800.0, 0.3)])
        assert campaign.select_boundary(stats).pairs == ((45.0, 50.0),)

    @settings(max_examples=120, deadline=None)
    @given(data=st.data())
    def test_matches_brute_force_oracle(self, data):
        fields = (35.0, 40.0, 45.0, 50.0)
        freqs = (1.0, 5.0, 10.0, 50.0)
        rows = []
        for f in fields:
            for q in freqs:
                life = data.draw(st.floats(100.0, CAP), label=f"life{f}/{q}")
                disp = data.draw(
                    st.sampled_from([0.1, 0.2, 0.3, 0.4]), label=f"disp{f}/{q}")
                rows.append((f, q, "CB", 2.5, life, disp))
        stats = stats_for(rows)

        # independent oracle: explicit filter + max scans
        def oracle(freq):
            pool = [(k, s) for k, s in stats.items()
                    if k.frequency_hz == freq
                    and 1500.0 <= s.lifetime_mean_s < CAP]
            if not pool:
                return None
            best_disp = max(s.displacement_mean_mm for _, s in pool)
            fields_at_best = [k.field_v_um for k, s in pool
                              if s.displacement_mean_mm == best_disp]
            return (min(fields_at_best), freq)

        expected = [oracle(1.0), oracle(50.0)]
        if None in expected:
            with pytest.raises(campaign.SelectionError):
                campaign.select_boundary(stats)
        else:
            unique = []
            for pair in expected:
                if pair not in unique:
                    unique.append(pair)
            got = campaign.select_boundary(stats)
            assert list(got.pairs) == unique


class TestPlanStage2:
    def test_stock_parameters_shape(self):
        space = ParamSpace()
        boundary = BoundaryConditions(((40.0, 1.0), (45.0, 50.0)))
        plan = campaign.plan_stage2(boundary, space)
        cells = {t.cell for t in plan}
        assert len(cells) == 7 * 2            # 3 fillers + 5 concs - shared baseline
        assert len(plan) == 7 * 2 * space.replicates_per_cell

    def test_baseline_cell_deduplicated(self):
        space = ParamSpace()
        plan = campaign.plan_stage2(BoundaryConditions(((45.0, 50.0),)), space,
                                    replicates=1)
        baseline = [t for t in plan
                    if t.cell.filler is Filler.CB and t.cell.cnt_conc_ml_fa == 2.5]
        assert len(baseline) == 1

    def test_one_filler_one_conc_gives_two_cells(self):
        space = ParamSpace(fillers=(Filler.CG,), cnt_concs_ml_fa=(2.9,))
        plan = campaign.plan_stage2(BoundaryConditions(((45.0, 50.0),)), space,
                                    replicates=1)
        assert {t.cell for t in plan} == {
            CellKey(45.0, 50.0, Filler.CG, 2.5),
            CellKey(45.0, 50.0, Filler.CB, 2.9),
        }

    def test_never_varies_two_factors_from_baseline(self):
        space = ParamSpace()
        plan = campaign.plan_stage2(
            BoundaryConditions(((40.0, 1.0), (45.0, 50.0))), space)
        for trial in plan:
            deviations = sum([
                trial.cell.filler is not BASELINE_MATERIAL.filler,
                trial.cell.cnt_conc_ml_fa != BASELINE_MATERIAL.cnt_conc_ml_fa,
            ])
            assert deviations <= 1

    def test_empty_boundary_rejected(self):
        with pytest.raises(campaign.CampaignError):
            campaign.plan_stage2(BoundaryConditions(()), ParamSpace())


def stage2_model_stats(field, freq):
    """Expected stage-2 cell metrics from the calibrated device model."""
    rows = []
    seen = set()
    for filler in ("LM", "CB", "CG"):
        seen.add((filler, 2.5))
    for cnt in (1.8, 2.2, 2.5, 2.9, 3.3):
        seen.add(("CB", cnt))
    for filler, cnt in sorted(seen):
        mat = device.MaterialConfig(Filler(filler), cnt)
        spec = device.testing_sample(mat)
        life = device.characteristic_life(spec, device.Drive(field, freq))
        disp = device.cycle_peak_displacement(
            spec, device.fresh_state(1), field, freq)
        rows.append((field, freq, filler, cnt, min(life, CAP), disp))
    return stats_for(rows)


class TestSelectBestMaterial:
    def test_split_spawns_union_candidate_at_high_frequency(self):
        stats = stage2_model_stats(45.0, 50.0)
        (sel,) = campaign.select_best_material(stats)
        assert sel.lifetime_best == CellKey(45.0, 50.0, Filler.CG, 2.5)
        assert sel.displacement_best.cnt_conc_ml_fa == 2.9
        assert sel.split
        assert sel.combination == CellKey(
            45.0, 50.0, sel.lifetime_best.filler,
            sel.displacement_best.cnt_conc_ml_fa)

    def test_dominating_cell_gives_no_candidate(self):
        stats = stats_for([
            (45.0, 50.0, "CG", 2.5, 3500.0, 0.40),
            (45.0, 50.0, "CB", 2.5, 1800.0, 0.30),
            (45.0, 50.0, "LM", 2.5, 600.0, 0.20),
        ])
        (sel,) = campaign.select_best_material(stats)
        assert not sel.split
        assert sel.combination is None
        assert sel.lifetime_best == sel.displacement_best

    def test_conflicting_same_factor_resolves_to_lifetime_side(self):
        # both bests deviate from baseline in filler only
        stats = stats_for([
            (45.0, 50.0, "CB", 2.5, 1800.0, 0.30),
            (45.0, 50.0, "CG", 2.5, 3500.0, 0.31),
            (45.0, 50.0, "LM", 2.5, 900.0, 0.45),
        ])
        (sel,) = campaign.select_best_material(stats)
        assert sel.split
        assert sel.lifetime_best.filler is Filler.CG
        assert sel.displacement_best.filler is Filler.LM
        # union would be the lifetime-best cell itself: already tested
        assert sel.combination is None

    @settings(max_examples=120, deadline=None)
    @given(data=st.data())
    def test_matches_argmax_oracle(self, data):
        cells = [("LM", 2.5), ("CB", 2.5), ("CG", 2.5),
                 ("CB", 1.8), ("CB", 2.2), ("CB", 2.9), ("CB", 3.3)]
        rows = []
        for filler, cnt in cells:
            life = data.draw(st.floats(100.0, 9000.0), label=f"life{filler}{cnt}")
            disp = data.draw(st.floats(0.05, 0.5), label=f"disp{filler}{cnt}")
            rows.append((45.0, 50.0, filler, cnt, life, disp))
        stats = stats_for(rows)
        (sel,) = campaign.select_best_material(stats)

        def argmax(metric):
            ranked = sorted(
                stats.values(),
                key=lambda s: (-metric(s), s.cell.filler.value,
                               s.cell.cnt_conc_ml_fa))
            return ranked[0].cell

        assert sel.lifetime_best == argmax(lambda s: s.lifetime_mean_s)
        assert sel.displacement_best == argmax(lambda s: s.displacement_mean_mm)
        assert sel.split == (sel.lifetime_best != sel.displacement_best)


class TestCompileReport:
    def _report(self, best_life, base_life=2000.0, worst_life=800.0):
        stats = stats_for([
            (45.0, 50.0, "CG", 2.5, best_life, 0.31),
            (45.0, 50.0, "CB", 2.5, base_life, 0.30),
            (45.0, 50.0, "LM", 2.5, worst_life, 0.20),
        ])
        selections = campaign.select_best_material(stats)
        return campaign.compile_report(
            "t", 0, BoundaryConditions(((45.0, 50.0),)), stats, selections)

    def test_22_percent_improvement(self):
        report = self._report(best_life=1.22 * 2000.0)
        (summary,) = report.summaries
        assert summary.best_vs_baseline_pct == pytest.approx(22.0, abs=1e-9)

    def test_equal_best_and_baseline_is_zero(self):
        stats = stats_for([
            (45.0, 50.0, "CB", 2.5, 2000.0, 0.30),
            (45.0, 50.0, "LM", 2.5, 800.0, 0.20),
        ])
        report = campaign.compile_report(
            "t", 0, BoundaryConditions(((45.0, 50.0),)), stats,
            campaign.select_best_material(stats))
        best_row = next(r for r in report.comparisons if r.rank == "best")
        assert best_row.lifetime_improvement_pct == pytest.approx(0.0, abs=1e-12)

    def test_best_vs_worst_percentage(self):
        report = self._report(best_life=2440.0, worst_life=610.0)
        (summary,) = report.summaries
        assert summary.best_vs_worst_pct == pytest.approx(300.0, abs=1e-9)

    def test_rows_cover_ranks_per_boundary(self):
        report = self._report(best_life=3000.0)
        assert [r.rank for r in report.comparisons] == ["best", "baseline", "worst"]
        assert report.comparisons[0].cell.filler is Filler.CG
        assert report.comparisons[2].cell.filler is Filler.LM

    def test_missing_baseline_raises(self):
        stats = stats_for([(45.0, 50.0, "CG", 2.5, 2000.0, 0.3)])
        with pytest.raises(campaign.CampaignError, match="baseline"):
            campaign.compile_report(
                "t", 0, BoundaryConditions(((45.0, 50.0),)), stats, ())


class TestSummarize:
    def test_order_independent(self):
        space = ParamSpace(fields_v_um=(45.0,), frequencies_hz=(50.0,),
                           replicates_per_cell=3)
        cell = CellKey(45.0, 50.0, Filler.CB, 2.5)
        records = []
        for r, (life, disp) in enumerate([(1800.0, 0.31), (1750.0, 0.29),
                                          (1900.0, 0.30)]):
            records.append(campaign.TrialRecord(
                cell=cell, stage=1, replicate=r, device_id=f"d{r}",
                channel=r % 2, seed=r,
                lifetime=analysis.LifetimeResult(life, False, 0.31,
                                                 analysis.Cause.THRESHOLD),
                avg_displacement_mm=disp, capacitance_drop_frac=0.05,
                duration_s=life + 10, telemetry_ref="telemetry/ch0.jsonl:-",
                status=campaign.TrialStatus.COMPLETE))
        forward = campaign.summarize(records)
        backward = campaign.summarize(list(reversed(records)))
        assert forward == backward
        stats = forward[cell]
        assert stats.lifetime_mean_s == pytest.approx(
            np.mean([1800.0, 1750.0, 1900.0]))
        assert stats.n == 3 and stats.censored_count == 0

    def test_incomplete_records_excluded(self):
        cell = CellKey(45.0, 50.0, Filler.CB, 2.5)
        faulted = campaign.TrialRecord(
            cell=cell, stage=1, replicate=0, device_id="d0", channel=0, seed=0,
            lifetime=None, avg_displacement_mm=None, capacitance_drop_frac=None,
            duration_s=None, telemetry_ref="telemetry/ch0.jsonl:-",
            status=campaign.TrialStatus.FAULTED)
        assert campaign.summarize([faulted]) == {}


MINI_MANIFEST = {
    "name": "mini",
    "seed": 424242,
    "space": {
        "fields_v_um": [35.0, 45.0],
        "frequencies_hz": [50.0],
        "replicates_per_cell": 5,
        "lifetime_cap_s": 10800.0,
    },
    "replicates_stage2": 2,
    "replicates_stage3": 2,
}


@pytest.fixture(scope="module")
def result(tmp_path_factory):
    out = tmp_path_factory.mktemp("camp") / "run"
    return campaign.run_campaign(MINI_MANIFEST, out, channels=2)


class TestExecution:
    def test_early_stop_truncates_censored_cell(self, result):
        stable = [r for r in result.records
                  if r.stage == 1 and r.cell.field_v_um == 35.0]
        assert len(stable) == 3
        assert all(r.lifetime.censored for r in stable)

    def test_boundary_and_stage3_candidate(self, result):
        assert result.boundaries.pairs == ((45.0, 50.0),)
        (sel,) = result.selections
        assert sel.lifetime_best.filler is Filler.CG
        assert sel.combination == CellKey(45.0, 50.0, Filler.CG, 2.9)

    def test_report_identifies_best_and_worst(self, result):
        (summary,) = result.report.summaries
        assert summary.best == CellKey(45.0, 50.0, Filler.CG, 2.9)
        assert summary.worst == CellKey(45.0, 50.0, Filler.LM, 2.5)
        assert summary.baseline == CellKey(45.0, 50.0, Filler.CB, 2.5)
        assert summary.best_vs_baseline_pct > 50.0
        assert summary.best_vs_worst_pct > 200.0

    def test_report_percentages_recomputable_from_raw_records(self, result):
        rows = store.RunReader(result.run_dir).trials()
        records = [campaign.TrialRecord.from_row(r) for r in rows
                   if r["stage"] >= 2]
        stats = campaign.summarize(records)
        for summary in result.report.summaries:
            base = stats[summary.baseline].lifetime_mean_s
            best = stats[summary.best].lifetime_mean_s
            worst = stats[summary.worst].lifetime_mean_s
            assert summary.best_vs_baseline_pct == pytest.approx(
                (best - base) / base * 100.0, rel=1e-9)
            assert summary.best_vs_worst_pct == pytest.approx(
                (best - worst) / worst * 100.0, rel=1e-9)

    def test_trial_rows_round_trip(self, result):
        rows = store.RunReader(result.run_dir).trials()
        assert len(rows) == len(result.records)
        by_id = {r.device_id: r for r in result.records}
        for row in rows:
            rebuilt = campaign.TrialRecord.from_row(row)
            assert rebuilt == by_id[row["device_id"]]

    def test_telemetry_refs_resolve(self, result):
        reader = store.RunReader(result.run_dir)
        assert reader.flagged_trials() == set()
        lines = {ch: reader.valid_telemetry_lines(ch) for ch in reader.channels()}
        for record in result.records:
            parsed = store.parse_telemetry_ref(record.telemetry_ref)
            assert parsed is not None
            path, first, last = parsed
            channel = int(path.removeprefix("telemetry/ch").removesuffix(".jsonl"))
            assert 1 <= first <= last <= lines[channel]

    def test_report_json_written(self, result):
        loaded = store.RunReader(result.run_dir).report()
        assert loaded is not None
        assert loaded["summaries"] == result.report.to_json_dict()["summaries"]
