"""Ensemble Husimi peaks at R = 1/4 (square lattice) and at the resonant R.

Prints how many distinct coherent centers the 2^N records produce and,
when matplotlib is available, draws the two Husimi fields.
"""

from measkick import HusimiGrid, SystemParams, crystal_lattice_check, ensemble_husimi, enumerate_ensemble, resonance_ratio

n = 10
for label, r in (("R = 1/4", 0.25), ("R = R*", resonance_ratio())):
    params = SystemParams(R=r, v=1.0, z0=0.5 + 0.5j)
    ens = enumerate_ensemble(params, n)
    rep = crystal_lattice_check(ens, params)
    line = f"{label}: {rep.n_distinct} distinct centers out of {2 ** n}, increment symmetry order {rep.symmetry_order}"
    if rep.max_lattice_residual is not None:
        line += f", max distance to the lattice v(1+i)(Z+iZ): {rep.max_lattice_residual:.1e}"
    print(line)

    field = ensemble_husimi(ens, params, HusimiGrid.covering(ens.centers, step=0.1))
    print(f"  Husimi integral / pi = {field.integral() / 3.141592653589793:.5f}")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        continue
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(field.values, origin="lower", extent=(field.q_min, field.q_max, field.p_min, field.p_max), cmap="magma")
    ax.set_xlabel("q'")
    ax.set_ylabel("p'")
    ax.set_title(label)
    name = "husimi_quarter.png" if r == 0.25 else "husimi_resonant.png"
    fig.tight_layout()
    fig.savefig(name, dpi=120)
    print(f"  saved {name}")
