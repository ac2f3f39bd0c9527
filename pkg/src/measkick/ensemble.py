"""Ensemble averages over all measurement records.

Averaging the trajectory projectors with their probabilities leaves the
equal-weight mixture of the 2^N branch coherent states, so every ensemble
quantity here needs only the list of centers.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .core import BranchIndex, SystemParams, compose_closed_form
from .errors import CapacityError, ConfigError
from .grid import HusimiGrid

__all__ = [
    "EnsembleState",
    "MomentReport",
    "CrystalReport",
    "enumerate_ensemble",
    "closed_form_moments",
    "enumerated_moments",
    "mean_power",
    "resonance_ratio",
    "ensemble_husimi",
    "husimi_centers",
    "crystal_lattice_check",
    "increment_symmetry_order",
]

LATTICE_TOL = 1e-9
DEDUP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class EnsembleState:
    """The 2^N branch centers in canonical order, each with weight 2^-N."""

    n_steps: int
    centers: np.ndarray

    @property
    def weight(self) -> float:
        return 2.0 ** -self.n_steps


@dataclass(frozen=True)
class MomentReport:
    """Ensemble moments.

    Energies in hbar omega0; ``var_x`` in units of 2 b^2 and ``var_p`` in
    units of 2 hbar^2 / b^2, so a coherent state has 1/4 for both.
    """

    n_steps: int
    mean_energy: float
    mean_q: float
    mean_p: float
    var_x: float
    var_p: float


def _bit_matrix(n: int) -> np.ndarray:
    """Row k holds i_1..i_N of canonical index k."""
    k = np.arange(1 << n)[:, None]
    j = np.arange(n)[None, :]
    return np.where((k >> j) & 1, -1.0, 1.0)


def enumerate_ensemble(params: SystemParams, n: int) -> EnsembleState:
    """Closed-form centers Z_I for every canonical index I of length n."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > params.max_steps:
        raise CapacityError(f"N={n} exceeds max_steps={params.max_steps}")
    if n == 0:
        return EnsembleState(0, np.array([params.z0]))
    ph = params.phase
    kick = 2j * params.v * cmath.exp(-0.5j * ph) * math.sin(0.5 * ph)
    w = kick * (_bit_matrix(n) @ np.exp(1j * ph * np.arange(1, n + 1)))
    centers = (params.z0 + w) * cmath.exp(-1j * n * ph)
    return EnsembleState(n, centers)


def closed_form_moments(params: SystemParams, n: int) -> MomentReport:
    """Energy, means and variances from their closed forms.

    The variance sums run over odd l = 1, 3, ..., 2N-1.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    s = math.sin(math.pi * params.R)
    kick = 4.0 * params.v ** 2 * s * s
    odd = np.arange(1, 2 * n, 2) * (math.pi * params.R)
    rotated = params.z0 * cmath.exp(-1j * n * params.phase)
    return MomentReport(
        n_steps=n,
        mean_energy=abs(params.z0) ** 2 + 0.5 + kick * n,
        mean_q=rotated.real,
        mean_p=rotated.imag,
        var_x=kick * math.fsum(np.sin(odd) ** 2) + 0.25,
        var_p=kick * math.fsum(np.cos(odd) ** 2) + 0.25,
    )


def enumerated_moments(ens: EnsembleState) -> MomentReport:
    """Moments as equal-weight averages of coherent-state diagonal elements."""
    c = ens.centers
    m = c.shape[0]
    q, p = c.real, c.imag
    mean_q = math.fsum(q) / m
    mean_p = math.fsum(p) / m
    return MomentReport(
        n_steps=ens.n_steps,
        mean_energy=math.fsum(q * q + p * p) / m + 0.5,
        mean_q=mean_q,
        mean_p=mean_p,
        var_x=math.fsum((q - mean_q) ** 2) / m + 0.25,
        var_p=math.fsum((p - mean_p) ** 2) / m + 0.25,
    )


def mean_power(params: SystemParams, continuous: bool = False) -> float:
    """Average delivered power in units of hbar / T_L^2.

    The default is the per-period average (<H>_N - <H>_0) / (N T)
    = 2 pi sin^2(pi R) / R. With ``continuous=True`` the energy is treated
    as a smooth function of t = N T and differentiated in t, written in
    terms of the period T = 2 pi R / omega0; this is the small-T (Zeno)
    description and vanishes linearly as T -> 0.
    """
    if params.larmor_period is None:
        raise ConfigError("mean power needs larmor_period", field="larmor_period")
    r = params.R
    if not continuous:
        return 2.0 * math.pi * math.sin(math.pi * r) ** 2 / r
    # d<H>/dt = 4 hbar omega0 v^2 sin^2(omega0 T / 2) / T, and
    # hbar omega0 v^2 = pi^2 hbar / (omega0 T_L^2); take omega0 = 1.
    period = 2.0 * math.pi * r
    return 4.0 * math.pi ** 2 * math.sin(0.5 * period) ** 2 / period


def resonance_ratio(tol: float = 1e-13) -> float:
    """Root of tan(pi R) = 2 pi R in (1/4, 1/2), i.e. the power maximum.

    Bisection on g(R) = sin(pi R) - 2 pi R cos(pi R).
    """
    def g(r):
        return math.sin(math.pi * r) - 2.0 * math.pi * r * math.cos(math.pi * r)

    lo, hi = 0.25, 0.4999
    glo = g(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) <= tol or hi - lo < 1e-16:
            return mid
        if (gm < 0) == (glo < 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ensemble_husimi(ens: EnsembleState, params: SystemParams, grid: HusimiGrid, chunk: int = 1 << 22) -> HusimiGrid:
    """<z|rho_N|z> = 2^-N sum_I exp(-|z - Z_I|^2) on every node (unit peak per Gaussian)."""
    nodes = grid.nodes().ravel()
    c = ens.centers
    acc = np.zeros(nodes.shape[0])
    step = max(1, chunk // nodes.shape[0])
    for lo in range(0, c.shape[0], step):
        d = nodes[:, None] - c[None, lo:lo + step]
        acc += np.exp(-(d.real ** 2 + d.imag ** 2)).sum(axis=1)
    return grid.with_values((acc * ens.weight).reshape(grid.n_p, grid.n_q))


def husimi_centers(params: SystemParams, idx: BranchIndex) -> tuple[float, float]:
    """Husimi peak (q'_I, p'_I) from the mean plus real increments per kick.

    Kick j contributes i_j v [cos((N-j) wT) - cos((N-j+1) wT)] to q' and
    i_j v [sin((N-j+1) wT) - sin((N-j) wT)] to p'.
    """
    n = len(idx)
    if n < 1:
        raise ValueError("branch index must have length >= 1")
    ph = params.phase
    x0, y0 = params.z0.real, params.z0.imag
    mean_q = x0 * math.cos(n * ph) + y0 * math.sin(n * ph)
    mean_p = -x0 * math.sin(n * ph) + y0 * math.cos(n * ph)
    dq = []
    dp = []
    for j, b in enumerate(idx.bits, start=1):
        a0, a1 = (n - j) * ph, (n - j + 1) * ph
        dq.append(b * (math.cos(a0) - math.cos(a1)))
        dp.append(b * (math.sin(a1) - math.sin(a0)))
    return mean_q + params.v * math.fsum(dq), mean_p + params.v * math.fsum(dp)


@dataclass(frozen=True, eq=False)
class CrystalReport:
    """Rotated-back displacements W_I = Z_I e^{i N wT} - z0 and lattice diagnostics.

    ``lattice_residuals`` holds the distance of each W_I to the square lattice
    v(1+i)(Z + iZ); it is only computed at R = 1/4 and is ``None`` otherwise.
    """

    n_steps: int
    displacements: np.ndarray
    n_distinct: int
    lattice_residuals: np.ndarray | None
    symmetry_order: int

    @property
    def max_lattice_residual(self) -> float | None:
        if self.lattice_residuals is None:
            return None
        return float(self.lattice_residuals.max(initial=0.0))


def _count_distinct(points: np.ndarray, tol: float) -> int:
    """Number of clusters after merging points closer than ``tol``."""
    if points.size == 0:
        return 0
    xy = np.stack([points.real, points.imag], axis=1)
    pairs = cKDTree(xy).query_pairs(tol, output_type="ndarray")
    m = xy.shape[0]
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(m, m))
    return int(connected_components(adj, directed=False)[0])


def increment_symmetry_order(params: SystemParams, n: int, max_order: int = 24, tol: float = 1e-9) -> int:
    """Largest k <= max_order such that the kick increments {+-e^{i wT j}, j=1..n}
    are closed under rotation by 2 pi / k. The +- pairing makes 2 the floor."""
    ph = params.phase
    base = np.exp(1j * ph * np.arange(1, n + 1))
    inc = np.concatenate([base, -base])
    for k in range(max_order, 1, -1):
        rot = inc * cmath.exp(2j * math.pi / k)
        if all(np.min(np.abs(inc - r)) <= tol for r in rot):
            return k
    return 1


def crystal_lattice_check(ens: EnsembleState, params: SystemParams) -> CrystalReport:
    n = ens.n_steps
    w = ens.centers * cmath.exp(1j * n * params.phase) - params.z0
    residuals = None
    if abs(params.R - 0.25) < 1e-12:
        cell = params.v * (1 + 1j)
        if cell == 0:
            residuals = np.abs(w)
        else:
            u = w / cell
            nearest = np.round(u.real) + 1j * np.round(u.imag)
            residuals = np.abs(w - nearest * cell)
    return CrystalReport(
        n_steps=n,
        displacements=w,
        n_distinct=_count_distinct(ens.centers, DEDUP_TOL),
        lattice_residuals=residuals,
        symmetry_order=increment_symmetry_order(params, n) if n > 0 else 1,
    )
