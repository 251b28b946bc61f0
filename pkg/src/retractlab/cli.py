"""Command-line harness: single runs, batch studies, kernel benchmark.

Single runs write a JSONL trace and a JSON report (plus an optional VTK
snapshot of the final deformed slab). Batches sweep grid sizes and
attachment fractions over consecutive seeds, writing one metrics.csv row
per run and aggregate statistics to summary.json. The metrics table keeps
the planner's deterministic work counters in its time columns so repeated
batches are byte-identical; wall-clock planning times are aggregated in
summary.json and in each run's report.json.
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

from retractlab.executive import RunReport, run_task
from retractlab.fem.bench import format_table, run_benchmark
from retractlab.fem.vtk import write_vtk
from retractlab.model import Config

__all__ = ["MetricsRow", "BatchSpec", "run_single", "run_batch", "main"]

CSV_HEADER = (
    "seed",
    "N",
    "f_%",
    "mode",
    "final_visibility",
    "replans",
    "replan_causes",
    "max_force",
    "planning_time_initial",
    "replanning_times",
    "outcome",
)

MODES = ("normal", "ignore-aps", "no-force-limit")


@dataclass(frozen=True)
class MetricsRow:
    """One batch run, serialized as one CSV line."""

    seed: int
    n: int
    f_pct: float
    mode: str
    final_visibility: float
    replans: int
    replan_causes: tuple
    max_force: float
    planning_time_initial: int
    replanning_times: tuple
    outcome: str

    def to_cells(self) -> list:
        """CSV cells; floats use repr so re-parsing round-trips exactly."""
        return [
            str(self.seed),
            str(self.n),
            repr(float(self.f_pct)),
            self.mode,
            repr(float(self.final_visibility)),
            str(self.replans),
            json.dumps(list(self.replan_causes), separators=(",", ":")),
            repr(float(self.max_force)),
            str(self.planning_time_initial),
            json.dumps(list(self.replanning_times), separators=(",", ":")),
            self.outcome,
        ]

    @classmethod
    def from_cells(cls, cells) -> "MetricsRow":
        if len(cells) != len(CSV_HEADER):
            raise ValueError(f"expected {len(CSV_HEADER)} cells, got {len(cells)}")
        return cls(
            seed=int(cells[0]),
            n=int(cells[1]),
            f_pct=float(cells[2]),
            mode=cells[3],
            final_visibility=float(cells[4]),
            replans=int(cells[5]),
            replan_causes=tuple(json.loads(cells[6])),
            max_force=float(cells[7]),
            planning_time_initial=int(cells[8]),
            replanning_times=tuple(json.loads(cells[9])),
            outcome=cells[10],
        )


@dataclass(frozen=True)
class BatchSpec:
    """A batch study: every (grid, fraction) combo over consecutive seeds.

    Run i of a combo uses seed base_seed + i.
    """

    runs: int
    grid_values: tuple
    ap_fractions: tuple
    mode: str
    base_seed: int
    vtk: bool = False

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("a batch needs at least one run")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.grid_values or not self.ap_fractions:
            raise ValueError("grid_values and ap_fractions must be non-empty")


def _mode_config(base: Config, mode: str) -> Config:
    if mode == "ignore-aps":
        return replace(base, ignore_aps=True)
    if mode == "no-force-limit":
        return replace(base, force_limit=False)
    return base


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _report_dict(report: RunReport) -> dict:
    return {
        "seed": report.seed,
        "outcome": report.outcome,
        "final_visibility": report.final_visibility,
        "replans": report.replans,
        "replan_causes": list(report.replan_causes),
        "max_force_seen": report.max_force_seen,
        "planning_times_s": list(report.planning_times),
        "planning_work": list(report.planning_work),
        "max_step_increase": report.max_step_increase,
        "max_residual": report.max_residual,
        "cycles": report.cycles,
    }


def _write_run_dir(out: Path, report: RunReport, state: dict, vtk: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        json.dumps(ev.to_json_dict(), sort_keys=True, separators=(",", ":"))
        for ev in report.trace
    ]
    (out / "trace.jsonl").write_text("\n".join(lines) + "\n")
    _write_json(out / "report.json", _report_dict(report))
    if vtk:
        run = state["run"]
        write_vtk(
            out / "final.vtk",
            run.sim.mesh,
            run.sim.positions,
            point_scalars=run.env.sigma,
        )


def run_single(config: Config, seed: int, out: Path, vtk: bool = False) -> RunReport:
    """One task execution with its artifacts written under ``out``."""
    state: dict = {}
    report = run_task(config, seed, state_out=state)
    _write_run_dir(out, report, state, vtk)
    return report


def _metrics_row(report: RunReport, n: int, f_pct: float, mode: str) -> MetricsRow:
    work = list(report.planning_work) or [0]
    return MetricsRow(
        seed=report.seed,
        n=n,
        f_pct=f_pct,
        mode=mode,
        final_visibility=report.final_visibility,
        replans=report.replans,
        replan_causes=tuple(report.replan_causes),
        max_force=report.max_force_seen,
        planning_time_initial=work[0],
        replanning_times=tuple(work[1:]),
        outcome=report.outcome,
    )


def _group_stats(rows, reports) -> dict:
    vis = [r.final_visibility for r in rows]
    forces = [r.max_force for r in rows]
    initial = [rep.planning_times[0] for rep in reports if rep.planning_times]
    replan = [t for rep in reports for t in rep.planning_times[1:]]
    outcomes: dict = {}
    for r in rows:
        outcomes[r.outcome] = outcomes.get(r.outcome, 0) + 1
    stats = {
        "runs": len(rows),
        "visibility_mean": statistics.mean(vis),
        "visibility_sd": statistics.pstdev(vis) if len(vis) > 1 else 0.0,
        "replan_fraction": sum(r.replans > 0 for r in rows) / len(rows),
        "force_mean": statistics.mean(forces),
        "force_max": max(forces),
        "planning_time_initial_median_s": statistics.median(initial) if initial else None,
        "replanning_time_median_s": statistics.median(replan) if replan else None,
        "outcomes": outcomes,
    }
    return stats


def run_batch(spec: BatchSpec, base: Config, out: Path) -> tuple:
    """Execute the batch, write metrics.csv / summary.json / per-run dirs.

    Returns (rows, summary). A run that dies with an unexpected exception is
    recorded as outcome error with zero visibility; the batch still finishes.
    """
    t0 = time.perf_counter()
    out.mkdir(parents=True, exist_ok=True)
    rows: list = []
    groups: list = []
    for n in spec.grid_values:
        for f_pct in spec.ap_fractions:
            cfg = _mode_config(replace(base, grid_n=n, ap_fraction=f_pct), spec.mode)
            combo_rows: list = []
            combo_reports: list = []
            for i in range(spec.runs):
                seed = spec.base_seed + i
                tag = f"n{n}-f{f_pct:g}-{spec.mode}-seed{seed}"
                state: dict = {}
                try:
                    report = run_task(cfg, seed, state_out=state)
                except Exception:
                    report = RunReport(
                        seed=seed,
                        outcome="error",
                        final_visibility=0.0,
                        replans=0,
                        replan_causes=[],
                        max_force_seen=0.0,
                        planning_times=[],
                        planning_work=[],
                    )
                else:
                    _write_run_dir(out / "runs" / tag, report, state, spec.vtk)
                combo_rows.append(_metrics_row(report, n, f_pct, spec.mode))
                combo_reports.append(report)
            rows.extend(combo_rows)
            groups.append(
                {
                    "N": n,
                    "f_%": f_pct,
                    "mode": spec.mode,
                    **_group_stats(combo_rows, combo_reports),
                }
            )

    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(row.to_cells())
    summary = {
        "spec": {
            "runs": spec.runs,
            "grid_values": list(spec.grid_values),
            "ap_fractions": list(spec.ap_fractions),
            "mode": spec.mode,
            "base_seed": spec.base_seed,
        },
        "groups": groups,
        "wall_seconds_total": time.perf_counter() - t0,
    }
    _write_json(out / "summary.json", summary)
    return rows, summary


def read_metrics(path: Path) -> list:
    """Parse a metrics.csv back into MetricsRow objects."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected header in {path}")
        return [MetricsRow.from_cells(cells) for cells in reader]


# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
# argument handling
# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~


def _int_list(text: str) -> tuple:
    return tuple(int(v) for v in text.split(","))


def _float_list(text: str) -> tuple:
    return tuple(float(v) for v in text.split(","))


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, default=None, help="visibility threshold")
    p.add_argument("--epsilon", type=float, default=None, help="force limit in N")
    p.add_argument("--pull-height", type=float, default=None, help="retraction extent in mm")
    p.add_argument("--horizon", type=int, default=None, help="planning horizon in steps")
    p.add_argument("--objective", choices=("min", "sum"), default=None,
                   help="attachment-distance aggregation in the grasp score")
    p.add_argument("--ignore-aps", action="store_true",
                   help="plan the first grasp without the attachment-distance term")
    p.add_argument("--no-force-limit", action="store_true",
                   help="disable the reaction-force gate")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--vtk", action="store_true", help="write final-state VTK snapshots")


def _base_config(args) -> Config:
    overrides = {}
    if args.delta is not None:
        overrides["delta"] = args.delta
    if args.epsilon is not None:
        overrides["epsilon"] = args.epsilon
    if args.pull_height is not None:
        overrides["pull_height"] = args.pull_height
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    if args.objective is not None:
        overrides["objective"] = args.objective
    return Config(**overrides)


def _mode_of(args, parser) -> str:
    if args.ignore_aps and args.no_force_limit:
        parser.error("--ignore-aps and --no-force-limit are mutually exclusive")
    if args.ignore_aps:
        return "ignore-aps"
    if args.no_force_limit:
        return "no-force-limit"
    return "normal"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retractlab",
        description="Tissue retraction lab: simulate, plan, execute, measure.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one seeded task execution")
    p_run.add_argument("--grid", type=int, default=7, help="reasoning grid size N")
    p_run.add_argument("--ap-fraction", type=float, default=50.0,
                       help="attachment coverage of the bottom surface, percent")
    p_run.add_argument("--seed", type=int, default=0, help="scenario seed")
    _add_config_flags(p_run)

    p_batch = sub.add_parser("batch", help="seed sweep over grid/fraction combos")
    p_batch.add_argument("--grid", type=_int_list, default=(7,),
                         help="comma list of grid sizes N")
    p_batch.add_argument("--ap-fraction", type=_float_list, default=(50.0,),
                         help="comma list of coverage percentages")
    p_batch.add_argument("--seed", type=int, default=0, help="base seed")
    p_batch.add_argument("--runs", type=int, default=25, help="runs per combo")
    _add_config_flags(p_batch)

    p_bench = sub.add_parser("bench", help="compare the kernel backends")
    p_bench.add_argument("--repeats", type=int, default=5, help="timing repeats")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "bench":
        rows = run_benchmark(repeats=args.repeats)
        print(format_table(rows))
        return 0

    mode = _mode_of(args, parser)
    base = _base_config(args)

    if args.command == "run":
        cfg = _mode_config(
            replace(base, grid_n=args.grid, ap_fraction=args.ap_fraction), mode
        )
        try:
            report = run_single(cfg, args.seed, args.out, vtk=args.vtk)
        except OSError as exc:
            print(f"error: cannot write under {args.out}: {exc}", file=sys.stderr)
            return 1
        print(
            f"seed {args.seed}: {report.outcome}, visibility "
            f"{report.final_visibility:.3f}, replans {report.replans}, "
            f"max force {report.max_force_seen:.3f} N"
        )
        return 0 if report.outcome == "success" else 1

    if args.runs < 1:
        parser.error("--runs must be at least 1")
    spec = BatchSpec(
        runs=args.runs,
        grid_values=args.grid,
        ap_fractions=args.ap_fraction,
        mode=mode,
        base_seed=args.seed,
        vtk=args.vtk,
    )
    try:
        rows, summary = run_batch(spec, base, args.out)
    except OSError as exc:
        print(f"error: cannot write under {args.out}: {exc}", file=sys.stderr)
        return 1
    for g in summary["groups"]:
        print(
            f"N={g['N']} f%={g['f_%']:g} {g['mode']}: "
            f"visibility {g['visibility_mean']:.4f} +- {g['visibility_sd']:.4f}, "
            f"replans in {g['replan_fraction']:.0%} of {g['runs']} runs, "
            f"force mean {g['force_mean']:.3f} max {g['force_max']:.3f} N"
        )
    print(f"wrote {len(rows)} rows to {args.out / 'metrics.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
