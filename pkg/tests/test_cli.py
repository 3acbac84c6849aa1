from __future__ import annotations

import csv
import json
import re

import pytest

from csamsim.cli import main

FAST = ("road_length_m=1000", "vehicle_density_per_km=25", "sim_duration_s=2")


def run_cli(*argv) -> int:
    return main(list(argv))


def fast_args(*extra):
    args = ["run"]
    for kv in FAST:
        args += ["--set", kv]
    return args + list(extra)


class TestRun:
    def test_writes_reports_and_manifest(self, tmp_path, capsys):
        out = tmp_path / "r1"
        assert run_cli(*fast_args("--out", str(out))) == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["cbr_timeseries.csv", "ia_by_distance.csv",
                         "manifest.json", "per_by_distance.csv",
                         "summary.csv"]
        assert capsys.readouterr().out.startswith(f"run complete: {out}")

    def test_manifest_records_effective_config(self, tmp_path):
        out = tmp_path / "r2"
        run_cli(*fast_args("--seed", "9", "--out", str(out)))
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["tool"] == "csamsim"
        assert manifest["seed"] == 9
        assert manifest["config"]["sim_duration_s"] == 2.0
        assert manifest["config"]["seed"] == 9
        assert manifest["files"] == sorted(manifest["files"])

    def test_control_flag_beats_scenario_file(self, tmp_path):
        scenario = tmp_path / "s.cfg"
        scenario.write_text("control_enabled = true\nsim_duration_s = 1\n"
                            "road_length_m = 1000\n"
                            "vehicle_density_per_km = 25\n")
        out = tmp_path / "r3"
        assert run_cli("run", "--scenario", str(scenario), "--control", "off",
                       "--out", str(out)) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["control_enabled"] is False

    def test_missing_scenario_exits_2_naming_path(self, tmp_path, capsys):
        missing = tmp_path / "nope.cfg"
        assert run_cli("run", "--scenario", str(missing)) == 2
        assert str(missing) in capsys.readouterr().err

    def test_bad_override_exits_2(self, capsys):
        assert run_cli(*fast_args("--set", "no_such_key=1")) == 2
        assert "no_such_key" in capsys.readouterr().err
        assert run_cli(*fast_args("--set", "garbage")) == 2

    def test_trace_files_opt_in(self, tmp_path):
        out = tmp_path / "r4"
        run_cli(*fast_args("--out", str(out), "--trace-controller",
                           "--trace-vehicles", "--full-averages"))
        names = {p.name for p in out.iterdir()}
        assert {"controller_trace.csv", "vehicle_trace.csv",
                "per_by_distance_full.csv", "ia_by_distance_full.csv"} <= names
        with open(out / "controller_trace.csv") as fh:
            assert fh.readline().strip() == ("t,vehicle,cbr_observed,l_opt,"
                                             "k_r,k_rh,u_r,n_opt")

    def test_output_root_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CSAMSIM_OUTPUT_ROOT", str(tmp_path / "root"))
        monkeypatch.chdir(tmp_path)
        assert run_cli(*fast_args("--seed", "5")) == 0
        assert (tmp_path / "root" / "default_seed5" / "summary.csv").is_file()


class TestPack:
    def test_worked_example(self, capsys):
        assert run_cli("pack", "1000", "5", "3", "60", "40", "20") == 0
        assert capsys.readouterr().out.strip() == \
            "K_R=5 K_Rh=5 U_R=3 N=8 bytes=980"

    def test_no_unknowns_fills_with_known(self, capsys):
        assert run_cli("pack", "5400", "100", "0", "60", "40", "32") == 0
        assert capsys.readouterr().out.strip() == \
            "K_R=90 K_Rh=0 U_R=0 N=1 bytes=5400"

    def test_budget_too_small_prints_empty_plan(self, capsys):
        assert run_cli("pack", "0", "5", "3", "60", "40", "20") == 0
        assert capsys.readouterr().out.strip() == \
            "K_R=0 K_Rh=0 U_R=0 N=0 bytes=0"


class TestCalibrate:
    def test_prints_power_with_two_decimals(self, capsys):
        assert run_cli("calibrate", "--range", "500", "--draws", "4000") == 0
        out = capsys.readouterr().out.strip()
        m = re.fullmatch(r"tx_power_dbm=(-?\d+\.\d\d)", out)
        assert m
        assert 15.0 < float(m.group(1)) < 27.0

    def test_unreachable_target_exits_1(self, capsys):
        assert run_cli("calibrate", "--range", "80000",
                       "--draws", "2000") == 1
        assert capsys.readouterr().err.startswith("error:")


class TestSweep:
    def test_grid_runs_and_per_value_rows(self, tmp_path, capsys):
        out = tmp_path / "sw"
        code = run_cli("sweep", "--axis", "message_size",
                       "--values", "260,3980", "--seeds", "1,2,3",
                       "--jobs", "1", "--out", str(out),
                       "--set", "control_enabled=false",
                       "--set", "road_length_m=1000",
                       "--set", "vehicle_density_per_km=25",
                       "--set", "sim_duration_s=2")
        assert code == 0
        run_dirs = sorted(p for p in out.rglob("summary.csv"))
        assert len(run_dirs) == 6
        with open(out / "sweep_summary.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["value"] for r in rows] == ["260", "3980"]
        assert all(r["runs_ok"] == "3" and r["runs_failed"] == "0"
                   for r in rows)
        assert float(rows[0]["mean_message_size_bytes"]) == 260.0
        assert float(rows[1]["mean_message_size_bytes"]) == 3980.0

    def test_empty_values_exit_2(self, tmp_path, capsys):
        assert run_cli("sweep", "--axis", "density", "--values", ",",
                       "--out", str(tmp_path / "x")) == 2
        assert "value" in capsys.readouterr().err


class TestSummarize:
    def _make_run(self, out):
        run_cli(*fast_args("--seed", "7", "--out", str(out)))

    def test_merges_rows_with_seed_column(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        self._make_run(a)
        self._make_run(b)
        capsys.readouterr()
        assert run_cli("summarize", str(a), str(b)) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == ("run,seed,mean_cbr,offered_load_bytes_per_s,"
                            "idr,mean_message_size_bytes")
        assert len(lines) == 3
        assert lines[1].startswith(f"{a},7,")

    def test_write_to_file(self, tmp_path, capsys):
        a = tmp_path / "a"
        self._make_run(a)
        merged = tmp_path / "merged.csv"
        assert run_cli("summarize", str(a), "--out", str(merged)) == 0
        assert merged.read_text().count("\n") == 2

    def test_missing_summary_exits_2(self, tmp_path, capsys):
        assert run_cli("summarize", str(tmp_path)) == 2
        assert "summary.csv" in capsys.readouterr().err
