"""Loschmidt echo along measured trajectories at the resonant frequency ratio.

The same outcome record is replayed with R nudged by 0.01; the overlap of
the two conditioned states collapses within a handful of steps.
"""

import numpy as np

from measkick import SystemParams, loschmidt_echo, resonance_ratio, sample_trajectory

r_star = resonance_ratio()
params = SystemParams(R=r_star, v=2.0)
print(f"resonant R = {r_star:.10f}")

for seed in range(3):
    record = sample_trajectory(params, 12, seed=seed)[-1].record
    echo = loschmidt_echo(params, 0.01, record)
    print(f"\nrecord {record.to_string()}")
    print("  " + " ".join(f"{x:.1e}" for x in echo))
    print(f"  deepest point {echo.min():.1e} at step {int(np.argmin(echo))}")

# with no perturbation the echo stays at one
record = sample_trajectory(params, 8, seed=0)[-1].record
print("\nunperturbed:", np.round(loschmidt_echo(params, 0.0, record), 12))
