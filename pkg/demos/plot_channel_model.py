"""Plot the bundled radio channel: two-ray path loss and Nakagami fading.

Left panel: the oscillatory two-ray gain against the smoothed envelope the
calibration uses. Right panel: Monte-Carlo link success over distance at
the three documented power presets. Writes channel_model.png next to this
script.
"""

import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from csamsim import (PhyParams, Rng, reception_probability,
                     smoothed_two_ray_gain_db, two_ray_gain_db)

OUT = pathlib.Path(__file__).with_name("output")
OUT.mkdir(exist_ok=True)

phy = PhyParams()
d = np.linspace(5.0, 1500.0, 4000)

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))

ax1.plot(d, two_ray_gain_db(d, phy), lw=0.6, label="two-ray (exact)")
ax1.plot(d, smoothed_two_ray_gain_db(d, phy), lw=2.0,
         label="phase-averaged envelope")
ax1.axhline(phy.receiver_sensitivity_dbm - 21.0, color="grey", ls=":",
            label="sensitivity at 21 dBm tx")
ax1.set_xscale("log")
ax1.set_xlabel("distance [m]")
ax1.set_ylabel("path gain [dB]")
ax1.set_title("path loss, 5.9 GHz, antennas at 1.5 m")
ax1.legend(fontsize=8)

dists = np.linspace(25.0, 1400.0, 56)
for power, style in ((10.0, "o-"), (21.0, "s-"), (31.0, "^-")):
    rng = Rng(4, f"demo-{power}")
    success = [reception_probability(power, dd, phy, rng, draws=3000)
               for dd in dists]
    ax2.plot(dists, success, style, ms=3, label=f"{power:.0f} dBm")
ax2.axhline(0.9, color="grey", ls=":")
ax2.set_xlabel("distance [m]")
ax2.set_ylabel("single-link success rate")
ax2.set_title("fading link budget (no interference)")
ax2.legend(title="tx power", fontsize=8)

fig.tight_layout()
fig.savefig(OUT / "channel_model.png", dpi=140)
print(f"wrote {OUT / 'channel_model.png'}")
