"""Headless bench operation: campaigns, single trials, gait evaluation.

Every command runs entirely against the simulated bench, so no service has
to be up.  Campaign artifacts land under ``--out`` or, by default, a
name/seed-derived directory inside the data root (``DEA_LAB_DATA_DIR`` or
``./dealab-runs``).  With a fixed manifest seed the report artifacts are
byte-identical across runs.

Exit status is 0 on success and nonzero with a diagnostic on validation
errors, missing inputs, or a faulted channel.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import analysis, campaign, device, gait, rig, store
from .adapters import SimulatedChannelHardware
from .calibration import DEFAULT
from .simclock import SimClock

_MODE_FLAGS = {"printed": "as_printed", "corrected": "corrected"}


@click.group()
def main() -> None:
    """Bench automation for stacked-film actuator endurance studies."""


# ---------------------------------------------------------------------------
# campaign


@main.group("campaign")
def campaign_cli() -> None:
    """Run and inspect staged optimization campaigns."""


def _print_report_table(payload: dict) -> None:
    rows = payload.get("comparisons", [])
    header = (f"{'boundary':>16}  {'rank':<8} {'material':<8} "
              f"{'life mean s':>12} {'life sd':>9} {'disp mm':>8} "
              f"{'improvement':>12}")
    click.echo(header)
    click.echo("-" * len(header))
    for row in rows:
        boundary = (f"{row['boundary_field_v_um']:g} V/um "
                    f"{row['boundary_frequency_hz']:g} Hz")
        material = f"{row['filler']} {row['cnt_conc_ml_fa']:g}"
        click.echo(
            f"{boundary:>16}  {row['rank']:<8} {material:<8} "
            f"{row['lifetime_mean_s']:>12.1f} {row['lifetime_std_s']:>9.1f} "
            f"{row['displacement_mean_mm']:>8.4f} "
            f"{row['lifetime_improvement_pct']:>+11.1f}%")
    for summary in payload.get("summaries", []):
        best = summary["best"]
        click.echo(
            f"{summary['boundary_field_v_um']:g} V/um "
            f"{summary['boundary_frequency_hz']:g} Hz: best "
            f"{best['filler']} {best['cnt_conc_ml_fa']:g} — "
            f"{summary['best_vs_baseline_pct']:+.1f}% vs baseline, "
            f"{summary['best_vs_worst_pct']:+.1f}% vs worst")


@campaign_cli.command("run")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None,
              help="Override the manifest seed.")
@click.option("--accel", type=float, default=None,
              help="Simulated seconds per wall second (default: unpaced).")
@click.option("--out", type=click.Path(), default=None,
              help="Run directory (must not exist yet).")
@click.option("--channels", type=int, default=2, show_default=True,
              help="Number of simulated rig channels.")
def campaign_run(manifest: str, seed: int | None, accel: float | None,
                 out: str | None, channels: int) -> None:
    """Execute the full three-stage campaign in MANIFEST."""
    try:
        data = campaign.load_manifest(manifest)
    except (campaign.CampaignError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"bad manifest: {exc}")
    if seed is not None:
        data["seed"] = seed
    out_dir = (Path(out) if out
               else store.default_data_root() / f"{data['name']}-s{data['seed']}")

    def progress(event: dict) -> None:
        kind = event.get("kind")
        if kind == "stage_started":
            click.echo(f"stage {event['stage']} started")
        elif kind == "boundary_selected":
            pairs = ", ".join(f"{p['field_v_um']:g} V/um at "
                              f"{p['frequency_hz']:g} Hz"
                              for p in event["pairs"])
            click.echo(f"boundary conditions: {pairs}")
        elif kind == "cell_completed":
            click.echo(
                f"  cell {event['field_v_um']:g} V/um "
                f"{event['frequency_hz']:g} Hz "
                f"{event['filler']} {event['cnt_conc_ml_fa']:g}: "
                f"{event['status']}")

    try:
        result = campaign.run_campaign(data, out_dir, channels=channels,
                                       accel=accel, progress=progress)
    except (campaign.CampaignError, store.StoreError, rig.RigError) as exc:
        raise click.ClickException(str(exc))
    click.echo("")
    _print_report_table(result.report.to_json_dict())
    click.echo(f"\nartifacts: {result.run_dir}")


@campaign_cli.command("report")
@click.argument("run_dir", type=click.Path())
def campaign_report(run_dir: str) -> None:
    """Print (or regenerate) the comparison table for RUN_DIR."""
    try:
        reader = store.RunReader(run_dir)
        payload = reader.report()
        if payload is None:
            payload = _regenerate_report(reader)
        _print_report_table(payload)
    except (store.StoreError, campaign.CampaignError) as exc:
        raise click.ClickException(str(exc))


def _regenerate_report(reader: store.RunReader) -> dict:
    rows = reader.trials()
    if not rows:
        raise campaign.CampaignError("no trials in this run directory")
    records = [campaign.TrialRecord.from_row(row) for row in rows]
    pool = [r for r in records if r.stage >= 2]
    if not pool:
        raise campaign.CampaignError(
            "no comparison-stage trials in this run directory")
    stats = campaign.summarize(pool)
    boundaries = campaign.BoundaryConditions(
        tuple(sorted({r.cell.boundary for r in pool})))
    selections = campaign.select_best_material(stats)
    manifest = reader.manifest()
    report = campaign.compile_report(
        str(manifest.get("name", "run")), int(manifest.get("seed", 0)),
        boundaries, stats, selections)
    return report.to_json_dict()


# ---------------------------------------------------------------------------
# single trial


@main.group("trial")
def trial_cli() -> None:
    """Operate single lifetime trials."""


@trial_cli.command("run")
@click.option("--field", "field_v_um", type=float, required=True,
              help="Drive field, V/um.")
@click.option("--freq", "frequency_hz", type=float, required=True,
              help="Cycling frequency, Hz.")
@click.option("--filler", type=click.Choice([f.value for f in device.Filler]),
              default="CB", show_default=True)
@click.option("--cnt", "cnt_conc_ml_fa", type=float, default=2.5,
              show_default=True, help="CNT loading, mL per batch.")
@click.option("--cap", "cap_s", type=float, default=analysis.DEFAULT_CAP_S,
              show_default=True, help="Observation cap, seconds.")
@click.option("--seed", type=int, default=0, show_default=True)
def trial_run(field_v_um: float, frequency_hz: float, filler: str,
              cnt_conc_ml_fa: float, cap_s: float, seed: int) -> None:
    """Run one device to end of life on a fresh simulated channel."""
    try:
        material = device.MaterialConfig(device.Filler(filler), cnt_conc_ml_fa)
        spec = device.testing_sample(material)
        drive = device.Drive(field_v_um, frequency_hz)
    except device.DeviceError as exc:
        raise click.ClickException(str(exc))
    channel = rig.Channel(0, SimulatedChannelHardware(SimClock(), DEFAULT))
    protocol = rig.TrialProtocol(lifetime_cap_s=cap_s)
    try:
        result = channel.run_trial(spec, drive, protocol, seed=seed,
                                   device_id=f"cli-{filler}{cnt_conc_ml_fa:g}")
    except rig.RigError as exc:
        raise click.ClickException(f"trial failed: {exc}")
    life = result.lifetime
    click.echo(f"device:            {result.device_id}")
    click.echo(f"lifetime_s:        {life.lifetime_s:.3f}")
    click.echo(f"censored:          {life.censored}")
    click.echo(f"terminal_cause:    {life.terminal_cause.value}")
    if result.average_displacement_mm is not None:
        click.echo(f"avg_displacement_mm: {result.average_displacement_mm:.4f}")
    click.echo(f"capacitance_drop:  {result.capacitance_drop_frac:.4f}")
    click.echo(f"duration_s:        {result.duration_s:.1f}")


# ---------------------------------------------------------------------------
# gait


@main.group("gait")
def gait_cli() -> None:
    """Evaluate the walking-unit model."""


def _gait_config(config: str | None) -> gait.GaitConfig:
    try:
        return gait.load_config(config) if config else gait.default_config()
    except (gait.GaitError, OSError) as exc:
        raise click.ClickException(f"bad gait config: {exc}")


def _force_mode(cfg: gait.GaitConfig, flag: str | None) -> str:
    return _MODE_FLAGS[flag] if flag else cfg.mode


POSE_COLUMNS = ("center_height_mm", "center_offset_mm", "foot_drop_mm",
                "leg_engaged_mm", "foot_reach_mm", "stance_span_mm",
                "body_tilt_deg")


@gait_cli.command("pose")
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Gait config file (default: built-in).")
@click.option("--mode", type=click.Choice(sorted(_MODE_FLAGS)), default=None,
              help="Force-resolution variant (default: config value).")
def gait_pose(config: str | None, mode: str | None) -> None:
    """Print the unit pose and body forces for the configured drive as CSV."""
    cfg = _gait_config(config)
    drive = cfg.drive()
    try:
        p = gait.pose(cfg.geometry, drive)
        forces = gait.body_forces(p, drive, _force_mode(cfg, mode))
    except gait.GaitError as exc:
        raise click.ClickException(str(exc))
    click.echo(",".join(POSE_COLUMNS + ("horizontal_n", "vertical_n")))
    values = [getattr(p, c) for c in POSE_COLUMNS]
    values += [forces.horizontal_n, forces.vertical_n]
    click.echo(",".join(f"{v:.6g}" for v in values))


@gait_cli.command("cycle")
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Gait config file (default: built-in).")
@click.option("--mode", type=click.Choice(sorted(_MODE_FLAGS)), default=None,
              help="Force-resolution variant (default: config value).")
def gait_cycle(config: str | None, mode: str | None) -> None:
    """Simulate one walking cycle and print the per-phase trace as CSV."""
    cfg = _gait_config(config)
    try:
        traces = gait.simulate_cycle(
            cfg.geometry, cfg.device_spec(), cfg.field_v_um, cfg.schedule(),
            units=cfg.units, mode=_force_mode(cfg, mode))
    except gait.GaitError as exc:
        raise click.ClickException(str(exc))
    click.echo(",".join(("unit", "phase", "t_s", "duration_s", "active")
                        + POSE_COLUMNS + ("horizontal_n", "vertical_n")))
    for unit, trace in enumerate(traces):
        for point in trace:
            active = "+".join(str(n) for n in sorted(point.active_actuators))
            values = [getattr(point.pose, c) for c in POSE_COLUMNS]
            values += [point.forces.horizontal_n, point.forces.vertical_n]
            click.echo(",".join(
                [str(unit), str(point.phase_index),
                 f"{point.t_s:.6g}", f"{point.duration_s:.6g}", active]
                + [f"{v:.6g}" for v in values]))


# ---------------------------------------------------------------------------
# rig


@main.group("rig")
def rig_cli() -> None:
    """Exercise a single simulated channel."""


def _echo_event(ev: rig.Event) -> None:
    detail = ", ".join(f"{k}={v}" for k, v in ev.detail.items())
    click.echo(f"[{ev.t_s:10.3f}s] ch{ev.channel} {ev.kind}"
               + (f" ({detail})" if detail else ""))


@rig_cli.command("demo")
def rig_demo() -> None:
    """Scripted walkthrough: a short trial, then every station by hand."""
    channel = rig.Channel(0, SimulatedChannelHardware(SimClock(), DEFAULT))
    channel.event_sinks.append(_echo_event)
    spec = device.testing_sample()
    try:
        click.echo("== short capped lifetime trial ==")
        result = channel.run_trial(
            spec, device.Drive(45.0, 50.0),
            rig.TrialProtocol(lifetime_cap_s=120.0), seed=7,
            device_id="demo")
        life = result.lifetime
        click.echo(f"   lifetime {life.lifetime_s:.1f} s "
                   f"({life.terminal_cause.value}), capacitance drop "
                   f"{result.capacitance_drop_frac:.3%}")
        click.echo("== manual station walkthrough ==")
        channel.adapter.mount(device.testing_sample(), seed=1)
        channel.switch_mode("impedance")
        sweep = channel.impedance_sweep(8)
        click.echo(f"   capacitance at {sweep.frequencies_hz[0]:.0f} Hz: "
                   f"{sweep.capacitance_f[0] * 1e9:.3f} nF")
        channel.switch_mode("force")
        click.echo(f"   clamp settled at {channel.clamp_force_n:.3f} N")
        channel.switch_mode("displacement")
        channel.adapter.unmount()
        click.echo("== done ==")
    except rig.RigError as exc:
        raise click.ClickException(f"demo failed: {exc}")


# ---------------------------------------------------------------------------
# service


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--channels", type=int, default=2, show_default=True)
@click.option("--accel", type=float, default=1000.0, show_default=True,
              help="Simulated seconds per wall second.")
@click.option("--data-dir", type=click.Path(), default=None,
              help="Run-artifact root (default: DEA_LAB_DATA_DIR).")
def serve(host: str, port: int, channels: int, accel: float,
          data_dir: str | None) -> None:
    """Start the HTTP/streaming control service."""
    import uvicorn

    from .service import LabService, create_app

    app = create_app(LabService(channels=channels, accel=accel,
                                data_dir=data_dir))
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
