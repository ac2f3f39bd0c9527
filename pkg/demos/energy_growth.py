"""Energy pumped into the oscillator by repeated spin measurements.

Run with ``python3 demos/energy_growth.py``. Prints a few sampled
trajectories next to the ensemble average, which grows by the same amount
every period.
"""

# %%
import math

import numpy as np

from measkick import SystemParams, closed_form_moments, sample_batch, trajectory_energy

params = SystemParams(R=0.106, v=2.0, z0=complex(1, 1) / math.sqrt(2))
n_steps = 10

# %% [markdown]
# Each trajectory is a random record of measurement outcomes. Its energy
# fluctuates, while the average over records climbs linearly.

# %%
runs = sample_batch(params, n_steps, n_traj=4, master_seed=2024)
energies = np.array([[trajectory_energy(s) for s in run] for run in runs])
mean = np.array([closed_form_moments(params, n).mean_energy for n in range(n_steps + 1)])

print(" N " + "".join(f"  traj{k}" for k in range(len(runs))) + "    mean")
for n in range(n_steps + 1):
    print(f"{n:2d} " + "".join(f"{e:8.3f}" for e in energies[:, n]) + f"{mean[n]:8.3f}")

slope = np.diff(mean).mean()
print(f"\nenergy gained per period: {slope:.6f} (16 sin^2(pi R) = {16 * math.sin(math.pi * params.R) ** 2:.6f})")
print("records:", ", ".join(run[-1].record.to_string() for run in runs))

# %%
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for e in energies:
        ax.plot(e, marker="o", lw=1)
    ax.plot(mean, "k:", lw=2, label="ensemble")
    ax.set_xlabel("measurement step N")
    ax.set_ylabel(r"$\langle H\rangle / \hbar\omega_0$")
    ax.legend()
    fig.tight_layout()
    fig.savefig("energy_growth.png", dpi=120)
    print("saved energy_growth.png")
