"""Report rendering: machine-readable CSV, summary tables, sweep series."""

from __future__ import annotations

import io
from dataclasses import replace

from ..scheduler import uplink_sweep
from ..topology import RackSpec
from .engine import SimReport, run_scenario
from .model import MODE_HOARD, MODE_NVME_COPY, MODE_REM
from .scenario import SPEEDUP_HORIZONS, Scenario

CSV_COLUMNS = ("job", "epoch", "mode", "duration_s", "fps",
               "remote_bytes", "peer_bytes", "mem_bytes")

MDR_SWEEP_VALUES = (0.1, 0.5, 1.1, 1.5)
REMOTE_SCALE_VALUES = (1.0, 0.5, 0.25, 0.125)
UPLINK_MISPLACED_PERCENTS = (20.0, 40.0, 60.0, 80.0)
UPLINK_JOB_POPULATION = 24


def report_to_csv(report: SimReport) -> str:
    out = io.StringIO()
    out.write(",".join(CSV_COLUMNS) + "\n")
    for r in report.rows:
        out.write(f"{r.job_id},{r.epoch},{r.mode},{r.duration_s:.6f},"
                  f"{r.fps:.6f},{r.remote_bytes:.3f},{r.peer_bytes:.3f},"
                  f"{r.mem_bytes:.3f}\n")
    return out.getvalue()


def fps_timeline_csv(reports: dict[str, SimReport]) -> str:
    """Per-epoch fps for each access mode (training-curve analogue)."""
    out = io.StringIO()
    out.write("mode,job,epoch,fps\n")
    for mode, report in reports.items():
        for r in report.rows:
            out.write(f"{mode},{r.job_id},{r.epoch},{r.fps:.6f}\n")
    return out.getvalue()


def _sweep_epochs(scenario: Scenario) -> Scenario:
    # warm behavior shows from epoch 2; three epochs keep sweeps cheap
    return replace(scenario, epochs=max(2, min(scenario.epochs, 3)))


def sweep_mdr(scenario: Scenario, values=MDR_SWEEP_VALUES,
              modes=(MODE_REM, MODE_NVME_COPY, MODE_HOARD)) -> list[dict]:
    """Warm/cold fps as the memory-to-dataset ratio varies."""
    base = _sweep_epochs(scenario)
    rows = []
    for mdr in values:
        for mode in modes:
            report = run_scenario(base.with_mdr(mdr).with_modes(mode),
                                  with_baseline=False)
            rows.append({
                "mdr": mdr,
                "mode": mode,
                "epoch1_fps": report.mean_fps(epoch=1),
                "warm_fps": report.mean_fps(warm=True),
            })
    return rows


def sweep_remote_bandwidth(scenario: Scenario, scales=REMOTE_SCALE_VALUES,
                           modes=(MODE_REM, MODE_NVME_COPY, MODE_HOARD)) -> list[dict]:
    """Warm/cold fps as remote-store bandwidth is scaled down."""
    base = _sweep_epochs(scenario)
    rows = []
    for scale in scales:
        for mode in modes:
            report = run_scenario(base.with_remote_scale(scale).with_modes(mode),
                                  with_baseline=False)
            rows.append({
                "remote_scale": scale,
                "mode": mode,
                "epoch1_fps": report.mean_fps(epoch=1),
                "warm_fps": report.mean_fps(warm=True),
            })
    return rows


def sweep_to_csv(rows: list[dict], key: str) -> str:
    out = io.StringIO()
    out.write(f"{key},mode,epoch1_fps,warm_fps\n")
    for r in rows:
        out.write(f"{r[key]},{r['mode']},{r['epoch1_fps']:.6f},"
                  f"{r['warm_fps']:.6f}\n")
    return out.getvalue()


def mode_reports(scenario: Scenario) -> dict[str, SimReport]:
    """The scenario re-run under each access mode (shared baseline twin)."""
    reports = {}
    for mode in (MODE_REM, MODE_NVME_COPY, MODE_HOARD):
        reports[mode] = run_scenario(scenario.with_modes(mode))
    return reports


def render_tables(scenario: Scenario, reports: dict[str, SimReport],
                  uplink_rack: RackSpec | None = None) -> str:
    """Summary tables: speedup projections, network usage, up-link sweep."""
    out = io.StringIO()

    out.write("Speedup vs remote-storage baseline\n")
    header = "mode".ljust(12) + "".join(f"{n:>4d} ep" for n in SPEEDUP_HORIZONS)
    out.write(header + "\n")
    for mode, report in reports.items():
        cells = "".join(f"{report.speedups[n]:>7.2f}" for n in SPEEDUP_HORIZONS)
        out.write(mode.ljust(12) + cells + "\n")

    out.write("\nNetwork usage during training (mean per job)\n")
    out.write(f"{'mode':<12}{'data (TB)':>12}{'rate (Gb/s)':>14}{'duration (h)':>15}\n")
    for mode, report in reports.items():
        tb = report.mean_job_transmitted_bytes() / 1e12
        gbps = report.mean_job_rate_bps() / 1e9
        hours = report.mean_job_duration_s() / 3600.0
        out.write(f"{mode:<12}{tb:>12.2f}{gbps:>14.2f}{hours:>15.2f}\n")

    rack = uplink_rack if uplink_rack is not None else scenario.topology.racks[0]
    per_job_rate = reports[MODE_HOARD].mean_job_rate_bps()
    out.write(f"\nRack up-link used by misplaced jobs "
              f"({UPLINK_JOB_POPULATION} jobs at "
              f"{per_job_rate / 1e9:.2f} Gb/s each, "
              f"{rack.uplink_bandwidth_bps / 1e9:.0f} Gb/s up-link)\n")
    out.write(f"{'misplaced %':<14}{'up-link %':>10}\n")
    for pct, util in uplink_sweep(rack, UPLINK_JOB_POPULATION,
                                  list(UPLINK_MISPLACED_PERCENTS), per_job_rate):
        out.write(f"{pct:<14.0f}{100 * util:>10.2f}\n")
    return out.getvalue()
