"""Report rendering: plot-ready CSV plus a human-readable summary.

Formatting is pinned so identical runs produce byte-identical files.
"""

from __future__ import annotations

import os

from .harness import Report, TrialResult

ACCURACY_HEADER = "scenario,param,accuracy_pct"
TRIALS_HEADER = "scenario,trial,hops_cint,hops_hinc,hops_cmap,capture_pct"
PARAM_ORDER = ("c_int", "h_inc", "c_map")


def accuracy_csv(reports: list[Report]) -> str:
    lines = [ACCURACY_HEADER]
    for report in reports:
        for param in PARAM_ORDER:
            lines.append(f"{report.scenario},{param},{report.accuracy_pct[param]:.1f}")
    return "\n".join(lines) + "\n"


def trials_csv(results: list[TrialResult]) -> str:
    lines = [TRIALS_HEADER]
    for r in results:
        lines.append(
            f"{r.scenario},{r.trial},{r.hops_cint},{r.hops_hinc},{r.hops_cmap},"
            f"{100.0 * r.capture_rate:.1f}"
        )
    return "\n".join(lines) + "\n"


def summary_text(reports: list[Report]) -> str:
    out = []
    for report in reports:
        out.append(f"scenario {report.scenario} ({report.trials} trials)")
        for param in PARAM_ORDER:
            q1, med, q3 = report.hops_stats[param]
            hops = "n/a" if med < 0 else f"median {med:.0f} hops (IQR {q1:.0f}-{q3:.0f})"
            out.append(
                f"  {param}: accuracy {report.accuracy_pct[param]:.1f}%, latency {hops}"
            )
        out.append(
            f"  capture: mean {report.capture_mean_pct:.1f}% "
            f"(stdev {report.capture_stdev_pct:.1f}), "
            f"resyncs/trial {report.resync_mean:.2f}, "
            f"failed trials {report.failed_trials}"
        )
    return "\n".join(out) + "\n"


def write_report_files(
    out_dir: str,
    label: str,
    reports: list[Report],
    results: list[TrialResult],
) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for suffix, content in (
        ("accuracy.csv", accuracy_csv(reports)),
        ("trials.csv", trials_csv(results)),
        ("summary.txt", summary_text(reports)),
    ):
        path = os.path.join(out_dir, f"{label}_{suffix}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(content)
        paths.append(path)
    return paths
