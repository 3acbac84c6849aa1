"""Run the regulated desk scenario and plot what the controller did.

Executes scenarios/desk_125_regulated.cfg (shortened by default so the
demo finishes in seconds; pass --full for the whole 100 s), then renders
the busy-ratio timeseries, the message-size trace, and loss over distance.
"""

import argparse
import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from csamsim import load_scenario, run

HERE = pathlib.Path(__file__).resolve().parent
OUT = HERE / "output"
OUT.mkdir(exist_ok=True)

parser = argparse.ArgumentParser()
parser.add_argument("--full", action="store_true",
                    help="run the full 100 s instead of 30 s")
args = parser.parse_args()

cfg = load_scenario(HERE.parent / "scenarios" / "desk_125_regulated.cfg")
if not args.full:
    cfg = cfg.with_overrides(sim_duration_s=30.0)
print(f"running {cfg.sim_duration_s:.0f} s,"
      f" {cfg.vehicle_density_per_km:.0f} veh/km, seed {cfg.seed}")

result = run(cfg, trace_controller=True)
store = result.metrics
store.write_csvs(OUT / "desk_run")
print(f"mean CBR {store.mean_cbr():.3f}, "
      f"mean frame {store.mean_message_size():.0f} B, "
      f"offered load {store.offered_load():.0f} B/s per vehicle")

fig, axes = plt.subplots(1, 3, figsize=(13, 4))

t_cbr = np.array([r[0] for r in store.cbr_rows])
v_cbr = np.array([r[2] for r in store.cbr_rows])
ticks = np.unique(t_cbr)
axes[0].plot(ticks, [v_cbr[t_cbr == t].mean() for t in ticks], lw=1.5)
axes[0].axhline(cfg.cbr_target, color="grey", ls=":", label="target")
axes[0].set_xlabel("time [s]")
axes[0].set_ylabel("fleet mean busy ratio")
axes[0].legend()

trace = np.array([(r[0], r[3]) for r in result.controller_trace])
axes[1].plot(trace[:, 0], trace[:, 1], ",", alpha=0.3)
axes[1].set_xlabel("time [s]")
axes[1].set_ylabel("message size l_opt [bytes]")

per = store.per_rows(trimmed=True)
mid = [0.5 * (lo + hi) for lo, hi, *_ in per]
loss = [row[5] if row[5] is not None else np.nan for row in per]
axes[2].plot(mid, loss, "o-", ms=3)
axes[2].set_xlabel("distance [m]")
axes[2].set_ylabel("packet error rate")
axes[2].set_ylim(0, 1)

fig.tight_layout()
fig.savefig(OUT / "desk_run.png", dpi=140)
print(f"wrote {OUT / 'desk_run.png'} and {OUT / 'desk_run'}/*.csv")
