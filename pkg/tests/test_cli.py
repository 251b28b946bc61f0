"""Batch harness tests: CSV schema, determinism, exit codes, artifacts."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retractlab.cli import (
    CSV_HEADER,
    BatchSpec,
    MetricsRow,
    main,
    read_metrics,
    run_batch,
    run_single,
)
from retractlab.model import Config

ROW = MetricsRow(
    seed=3,
    n=7,
    f_pct=50.0,
    mode="normal",
    final_visibility=0.8888888888888888,
    replans=2,
    replan_causes=("force-at-grasp", "force-during-pull"),
    max_force=0.5123456789012345,
    planning_time_initial=2541,
    replanning_times=(2411, 2380),
    outcome="success",
)


class TestMetricsRow:
    def test_header_is_frozen(self):
        assert CSV_HEADER == (
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

    def test_cells_round_trip_exactly(self):
        assert MetricsRow.from_cells(ROW.to_cells()) == ROW

    def test_cell_count_validated(self):
        with pytest.raises(ValueError):
            MetricsRow.from_cells(ROW.to_cells()[:-1])

    @given(
        vis=st.floats(0, 1, allow_nan=False),
        force=st.floats(0, 1000, allow_nan=False),
        replans=st.integers(0, 20),
        causes=st.lists(
            st.sampled_from(["force-at-grasp", "force-during-pull", "height-exhausted"]),
            max_size=5,
        ),
        work=st.lists(st.integers(0, 10**9), max_size=5),
    )
    @settings(max_examples=60, deadline=None)
    def test_round_trip_property(self, vis, force, replans, causes, work):
        row = MetricsRow(
            seed=1,
            n=7,
            f_pct=50.0,
            mode="normal",
            final_visibility=vis,
            replans=replans,
            replan_causes=tuple(causes),
            max_force=force,
            planning_time_initial=work[0] if work else 0,
            replanning_times=tuple(work[1:]),
            outcome="no-plan",
        )
        assert MetricsRow.from_cells(row.to_cells()) == row


class TestBatchSpec:
    def test_validation(self):
        ok = dict(runs=1, grid_values=(7,), ap_fractions=(50.0,), mode="normal", base_seed=0)
        BatchSpec(**ok)
        with pytest.raises(ValueError):
            BatchSpec(**{**ok, "runs": 0})
        with pytest.raises(ValueError):
            BatchSpec(**{**ok, "mode": "turbo"})
        with pytest.raises(ValueError):
            BatchSpec(**{**ok, "grid_values": ()})
        with pytest.raises(ValueError):
            BatchSpec(**{**ok, "ap_fractions": ()})


@pytest.fixture(scope="module")
def batch_result(tmp_path_factory):
    out = tmp_path_factory.mktemp("batch")
    spec = BatchSpec(runs=2, grid_values=(7,), ap_fractions=(50.0,), mode="normal", base_seed=5)
    rows, summary = run_batch(spec, Config(), out)
    return spec, out, rows, summary


class TestBatch:
    def test_artifacts_written(self, batch_result):
        spec, out, rows, summary = batch_result
        assert (out / "metrics.csv").is_file()
        assert (out / "summary.json").is_file()
        run_dir = out / "runs" / "n7-f50-normal-seed5"
        assert (run_dir / "trace.jsonl").is_file()
        assert (run_dir / "report.json").is_file()

    def test_rows_cover_all_seeds(self, batch_result):
        spec, out, rows, summary = batch_result
        assert [r.seed for r in rows] == [5, 6]
        assert all(r.n == 7 and r.f_pct == 50.0 and r.mode == "normal" for r in rows)

    def test_read_metrics_round_trip(self, batch_result):
        spec, out, rows, summary = batch_result
        assert read_metrics(out / "metrics.csv") == rows

    def test_summary_group_fields(self, batch_result):
        spec, out, rows, summary = batch_result
        (group,) = summary["groups"]
        for key in (
            "N",
            "f_%",
            "mode",
            "runs",
            "visibility_mean",
            "visibility_sd",
            "replan_fraction",
            "force_mean",
            "force_max",
            "planning_time_initial_median_s",
            "outcomes",
        ):
            assert key in group
        assert group["runs"] == 2
        assert sum(group["outcomes"].values()) == 2
        assert summary["wall_seconds_total"] > 0.0

    def test_report_json_fields(self, batch_result):
        spec, out, rows, summary = batch_result
        rep = json.loads((out / "runs" / "n7-f50-normal-seed5" / "report.json").read_text())
        for key in (
            "seed",
            "outcome",
            "final_visibility",
            "replans",
            "max_force_seen",
            "planning_times_s",
            "planning_work",
            "max_residual",
        ):
            assert key in rep
        assert rep["seed"] == 5

    def test_repeat_batch_is_byte_identical(self, batch_result, tmp_path):
        spec, out, rows, summary = batch_result
        rows2, summary2 = run_batch(spec, Config(), tmp_path)
        assert (tmp_path / "metrics.csv").read_bytes() == (out / "metrics.csv").read_bytes()
        a = (out / "runs" / "n7-f50-normal-seed5" / "trace.jsonl").read_bytes()
        b = (tmp_path / "runs" / "n7-f50-normal-seed5" / "trace.jsonl").read_bytes()
        assert a == b
        # aggregates match except for wall-clock timings
        for g1, g2 in zip(summary["groups"], summary2["groups"]):
            for key in ("visibility_mean", "visibility_sd", "replan_fraction",
                        "force_mean", "force_max", "outcomes"):
                assert g1[key] == g2[key]

    def test_read_metrics_rejects_foreign_header(self, tmp_path):
        bad = tmp_path / "metrics.csv"
        bad.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            read_metrics(bad)


class TestCommandLine:
    def test_run_success_exit_zero(self, tmp_path, capsys):
        code = main(["run", "--seed", "2", "--out", str(tmp_path)])
        assert code == 0
        assert "success" in capsys.readouterr().out
        assert (tmp_path / "trace.jsonl").is_file()

    def test_run_failure_exit_one(self, tmp_path, capsys):
        code = main(["run", "--seed", "5", "--out", str(tmp_path)])
        assert code == 1
        assert "no-plan" in capsys.readouterr().out

    def test_vtk_snapshot(self, tmp_path):
        main(["run", "--seed", "2", "--out", str(tmp_path), "--vtk"])
        head = (tmp_path / "final.vtk").read_text().splitlines()
        assert head[0].startswith("# vtk DataFile")
        assert "POINTS 1050 double" in head

    def test_conflicting_modes_exit_two(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--ignore-aps", "--no-force-limit", "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_unknown_command_exit_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["explode"])
        assert exc.value.code == 2

    def test_missing_command_exit_two(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_bad_runs_value_exit_two(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["batch", "--runs", "0", "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_bench_prints_backend_table(self, capsys):
        assert main(["bench", "--repeats", "1"]) == 0
        out = capsys.readouterr().out
        assert "backend" in out
        assert "numpy" in out
        assert "gradient" in out


class TestRunSingle:
    def test_writes_trace_and_report(self, tmp_path):
        report = run_single(Config(), 2, tmp_path)
        assert report.outcome == "success"
        lines = (tmp_path / "trace.jsonl").read_text().splitlines()
        assert json.loads(lines[0])["kind"] == "fluents"
        assert json.loads(lines[-1])["kind"] == "metrics"
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["outcome"] == "success"
