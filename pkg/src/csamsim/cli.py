"""Command-line front end.

Subcommands:

    run        one simulation, writes the report CSVs plus manifest.json
    sweep      cross product of one axis x seeds, parallel, with per-cell means
    pack       budget split for given record counts and sizes, printed
    calibrate  transmit power needed for a target range, printed
    summarize  merge summary.csv rows from several run directories

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
The default output root comes from $CSAMSIM_OUTPUT_ROOT (falling back to
./csamsim_out); --out always wins.
"""

from __future__ import annotations

import argparse
import csv
import json
import multiprocessing
import os
import sys
from pathlib import Path

from . import __version__
from .control import pack_counts
from .engine import run as run_engine
from .metrics import MetricsStore
from .phymac import PhyParams, calibrate_power_for_range
from .scenario import (Rng, ScenarioConfig, ScenarioError, coerce_override,
                       load_scenario)

OUTPUT_ROOT_ENV = "CSAMSIM_OUTPUT_ROOT"

_SWEEP_AXES = {
    "density": "vehicle_density_per_km",
    "tx_power": "tx_power_dbm",
    "message_size": "fixed_message_bytes",
    "control_enabled": "control_enabled",
}


def _output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "csamsim_out"))


def _effective_config(args) -> ScenarioConfig:
    cfg = load_scenario(args.scenario) if args.scenario else ScenarioConfig()
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ScenarioError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key, value = coerce_override(key, raw)
        overrides[key] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "control", None) is not None:
        overrides["control_enabled"] = args.control == "on"
    return cfg.with_overrides(**overrides) if overrides else cfg.validate()


def _write_manifest(out: Path, cfg: ScenarioConfig, files: list[str]):
    manifest = {
        "tool": "csamsim",
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.as_dict(),
        "files": sorted(files),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_trace(path: Path, header: list[str], rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _execute_run(cfg: ScenarioConfig, out: Path, trace_controller=False,
                 trace_vehicles=False, full_averages=False) -> MetricsStore:
    result = run_engine(cfg, trace_controller=trace_controller,
                        trace_vehicles=trace_vehicles)
    out.mkdir(parents=True, exist_ok=True)
    files = result.metrics.write_csvs(out, full_averages=full_averages)
    if trace_controller:
        _write_trace(out / "controller_trace.csv",
                     ["t", "vehicle", "cbr_observed", "l_opt", "k_r", "k_rh",
                      "u_r", "n_opt"], result.controller_trace)
        files.append("controller_trace.csv")
    if trace_vehicles:
        _write_trace(out / "vehicle_trace.csv", ["t", "id", "x", "lane"],
                     result.vehicle_trace)
        files.append("vehicle_trace.csv")
    _write_manifest(out, cfg, files)
    return result.metrics


def cmd_run(args) -> int:
    cfg = _effective_config(args)
    name = Path(args.scenario).stem if args.scenario else "default"
    out = Path(args.out) if args.out else _output_root() / f"{name}_seed{cfg.seed}"
    store = _execute_run(cfg, out, trace_controller=args.trace_controller,
                         trace_vehicles=args.trace_vehicles,
                         full_averages=args.full_averages)
    mean_cbr = store.mean_cbr()
    print(f"run complete: {out}")
    print(f"  vehicles={store.vehicle_count} messages={store.messages_sent} "
          f"mean_cbr={'n/a' if mean_cbr is None else format(mean_cbr, '.4f')}")
    return 0


def _sweep_cell(task) -> dict:
    cfg_dict, out_dir = task
    cfg_dict = dict(cfg_dict)
    lane_speeds = cfg_dict.pop("lane_speeds_mps")
    cfg = ScenarioConfig(lane_speeds_mps=tuple(lane_speeds), **cfg_dict)
    try:
        store = _execute_run(cfg, Path(out_dir))
        return {"ok": True, "summary": store.summary_row(),
                "out": out_dir, "error": ""}
    except Exception as exc:  # worker failures reported per cell
        return {"ok": False, "summary": None, "out": out_dir,
                "error": f"{type(exc).__name__}: {exc}"}


def cmd_sweep(args) -> int:
    cfg = _effective_config(args)
    field = _SWEEP_AXES[args.axis]
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ScenarioError("sweep needs at least one value")
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not seeds:
        raise ScenarioError("sweep needs at least one seed")

    out_root = Path(args.out) if args.out else _output_root() / "sweep"
    tasks, cells = [], []
    for raw in values:
        _, value = coerce_override(field, raw)
        for seed in seeds:
            cell_cfg = cfg.with_overrides(**{field: value, "seed": seed})
            out_dir = out_root / f"{args.axis}_{raw}" / f"seed_{seed}"
            tasks.append((cell_cfg.as_dict(), str(out_dir)))
            cells.append((raw, seed))

    jobs = min(len(tasks), args.jobs or multiprocessing.cpu_count())
    if jobs > 1:
        with multiprocessing.Pool(jobs) as pool:
            results = pool.map(_sweep_cell, tasks)
    else:
        results = [_sweep_cell(t) for t in tasks]

    out_root.mkdir(parents=True, exist_ok=True)
    failures = 0
    with open(out_root / "sweep_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "value", "runs_ok", "runs_failed", "mean_cbr",
                    "offered_load_bytes_per_s", "idr",
                    "mean_message_size_bytes"])
        for raw in values:
            rows = [r for (v, _), r in zip(cells, results) if v == raw]
            good = [r["summary"] for r in rows if r["ok"]]
            failures += sum(not r["ok"] for r in rows)
            means = []
            for k in range(4):
                vals = [s[k] for s in good if s[k] is not None]
                means.append(sum(vals) / len(vals) if vals else "")
            w.writerow([args.axis, raw, len(good), len(rows) - len(good)]
                       + means)
    for r in results:
        if not r["ok"]:
            print(f"cell {r['out']} failed: {r['error']}", file=sys.stderr)
    print(f"sweep complete: {out_root / 'sweep_summary.csv'}")
    return 1 if failures else 0


def cmd_pack(args) -> int:
    plan = pack_counts(args.budget, args.known, args.unknown,
                       args.l_k, args.l_h, args.l_u)
    used = (plan.k_r * args.l_k + plan.k_rh * args.l_h
            + plan.n_opt * plan.u_r * args.l_u)
    print(f"K_R={plan.k_r} K_Rh={plan.k_rh} U_R={plan.u_r} N={plan.n_opt} "
          f"bytes={used}")
    return 0


def cmd_calibrate(args) -> int:
    rng = Rng(args.seed, "calibrate")
    power = calibrate_power_for_range(args.range_m, PhyParams(), rng,
                                      target_success=args.target,
                                      draws=args.draws)
    print(f"tx_power_dbm={power:.2f}")
    return 0


def cmd_summarize(args) -> int:
    rows = []
    for run_dir in args.dirs:
        path = Path(run_dir)
        summary = path / "summary.csv"
        if not summary.is_file():
            raise ScenarioError(f"no summary.csv under {path}")
        seed = ""
        manifest = path / "manifest.json"
        if manifest.is_file():
            with open(manifest, encoding="utf-8") as fh:
                seed = json.load(fh).get("seed", "")
        with open(summary, newline="") as fh:
            reader = csv.DictReader(fh)
            for rec in reader:
                rows.append([str(path), seed, rec["mean_cbr"],
                             rec["offered_load_bytes_per_s"], rec["idr"],
                             rec["mean_message_size_bytes"]])
    header = ["run", "seed", "mean_cbr", "offered_load_bytes_per_s", "idr",
              "mean_message_size_bytes"]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        print(f"wrote {args.out}")
    else:
        w = csv.writer(sys.stdout)
        w.writerow(header)
        w.writerows(rows)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csamsim",
                                description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version",
                   version=f"csamsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--scenario", help="scenario file (key = value lines)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("run", help="execute one simulation")
    add_common(sp)
    sp.add_argument("--control", choices=["on", "off"], default=None,
                    help="force the size controller on or off")
    sp.add_argument("--trace-controller", action="store_true")
    sp.add_argument("--trace-vehicles", action="store_true")
    sp.add_argument("--full-averages", action="store_true",
                    help="also write untrimmed loss/staleness tables")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run one axis x seeds grid")
    add_common(sp)
    sp.add_argument("--axis", choices=sorted(_SWEEP_AXES), required=True)
    sp.add_argument("--values", required=True,
                    help="comma-separated axis values")
    sp.add_argument("--seeds", default="1", help="comma-separated seeds")
    sp.add_argument("--jobs", type=int, default=None,
                    help="parallel workers (default: cpu count)")
    sp.set_defaults(func=cmd_sweep, control=None)

    sp = sub.add_parser("pack", help="show the budget split for one message")
    sp.add_argument("budget", type=int)
    sp.add_argument("known", type=int)
    sp.add_argument("unknown", type=int)
    sp.add_argument("l_k", type=int)
    sp.add_argument("l_h", type=int)
    sp.add_argument("l_u", type=int)
    sp.set_defaults(func=cmd_pack)

    sp = sub.add_parser("calibrate",
                        help="transmit power for a target range")
    sp.add_argument("--range", dest="range_m", type=float, required=True)
    sp.add_argument("--target", type=float, default=0.9)
    sp.add_argument("--draws", type=int, default=20000)
    sp.add_argument("--seed", type=int, default=1)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("summarize", help="merge run summaries")
    sp.add_argument("dirs", nargs="+", help="run directories")
    sp.add_argument("--out", help="write merged CSV here instead of stdout")
    sp.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
