"""Show the proportional message-size controller settling on its target.

The channel is replaced by a synthetic plant where the busy ratio is simply
proportional to the message size, CBR(L) = min(1, L/8000). The controller
is run from both ends of its range and with a mid-run disturbance, which is
roughly what a platoon joining the road does to the real loop.
"""

import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from csamsim import ControllerState, update_message_size

OUT = pathlib.Path(__file__).with_name("output")
OUT.mkdir(exist_ok=True)


def plant(l_opt, load_scale):
    return min(1.0, l_opt / 8000.0 * load_scale)


def trajectory(start, steps=60):
    state = ControllerState(l_opt=start, l_min=316, l_max=8000,
                            gain=2000.0, cbr_target=0.68)
    sizes, ratios = [state.l_opt], []
    for k in range(steps):
        load = 1.0 if k < steps // 2 else 1.6   # disturbance halfway
        cbr = plant(state.l_opt, load)
        state = update_message_size(state, cbr)
        ratios.append(cbr)
        sizes.append(state.l_opt)
    return sizes, ratios


fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
for start in (316, 8000):
    sizes, ratios = trajectory(start)
    ax1.plot(sizes, label=f"start {start} B")
    ax2.plot(ratios)
ax1.set_ylabel("message size [bytes]")
ax1.legend()
ax2.axhline(0.68, color="grey", ls=":", label="target 0.68")
ax2.set_ylabel("busy ratio seen")
ax2.set_xlabel("update step (1 per beacon)")
ax2.legend()
ax1.set_title("size controller on a synthetic channel, load x1.6 at step 30")
fig.tight_layout()
fig.savefig(OUT / "size_controller.png", dpi=140)
print(f"wrote {OUT / 'size_controller.png'}")
