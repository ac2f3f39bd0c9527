"""Phase-space maps of the measurement-kicked oscillator and coherent-state algebra.

Units: hbar = 1, b = 1, energies in hbar*omega0. A coherent label is
z = q' + i p' with q' = q / (sqrt2 b) and p' = b p / (sqrt2 hbar).
Global phases of the branches are dropped throughout; every consumer works
with moduli or normalized overlaps.

Exact propagation of |z> under either block Hamiltonian also produces a
z-dependent phase, U_pm |z> = e^{i theta_pm(z)} |Z_pm(z)> with
theta_pm(z) = +-v [Im z - Im(z e^{-2 pi i R})] (up to a z-independent
constant). Since theta_+ and theta_- differ, it is not a global phase: it
changes outcome probabilities and is needed for the step evolution to be
unitary. It is kept by default, so that branch I carries c_I e^{i t_I} with
the real sign c_I from the measurement record and a record-independent phase
t_I. ``SystemParams(exact_phases=False)`` drops it and gives the plain
signed-sum model.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericalError

__all__ = [
    "SystemParams",
    "BranchIndex",
    "SignedCoherentSum",
    "map_apply",
    "propagation_phase",
    "compose_iterated",
    "compose_closed_form",
    "decompose_translation_rotation",
    "sign_coefficient",
    "coherent_overlap",
    "sum_norm_sq",
    "ho_number_matrix_element",
]


@dataclass(frozen=True)
class SystemParams:
    """Dimensionless model parameters.

    Attributes:
        R: frequency ratio omega0/omega; each period rotates phase space by 2 pi R.
        v: kick strength alpha / (hbar omega0).
        z0: initial coherent label.
        larmor_period: T_L, only needed to express power in hbar/T_L^2.
        max_steps: cap on the number of measurement steps for enumerations.
        exact_phases: carry the propagation phases theta_pm on each branch
            (default); ``False`` drops them (see the module docstring).
    """

    R: float
    v: float
    z0: complex = 0j
    larmor_period: float | None = None
    max_steps: int = 20
    exact_phases: bool = True

    def __post_init__(self):
        object.__setattr__(self, "R", float(self.R))
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "z0", complex(self.z0))
        if not (math.isfinite(self.R) and self.R > 0):
            raise ConfigError("must be finite and > 0", field="R")
        if not math.isfinite(self.v):
            raise ConfigError("must be finite", field="v")
        if not cmath.isfinite(self.z0):
            raise ConfigError("must be finite", field="z0")
        if self.larmor_period is not None:
            tl = float(self.larmor_period)
            if not (math.isfinite(tl) and tl > 0):
                raise ConfigError("must be finite and > 0", field="larmor_period")
            object.__setattr__(self, "larmor_period", tl)
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ConfigError("must be an integer >= 1", field="max_steps")
        object.__setattr__(self, "max_steps", int(self.max_steps))
        object.__setattr__(self, "exact_phases", bool(self.exact_phases))

    @property
    def phase(self) -> float:
        """Rotation angle per period, omega0 T = 2 pi R."""
        return 2.0 * math.pi * self.R

    @property
    def key(self) -> tuple:
        # what the branch centers and phases depend on
        return (self.R, self.v, self.z0, self.exact_phases)

    def replace(self, **changes) -> SystemParams:
        kw = dict(R=self.R, v=self.v, z0=self.z0,
                  larmor_period=self.larmor_period, max_steps=self.max_steps,
                  exact_phases=self.exact_phases)
        kw.update(changes)
        return SystemParams(**kw)


@dataclass(frozen=True)
class BranchIndex:
    """A sequence of map choices i_j = +1/-1.

    ``bits`` is stored in application order (i_1, ..., i_N): ``bits[0]`` is
    the map applied first. The canonical integer has i_1 as least
    significant bit with +1 -> 0 and -1 -> 1.
    """

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (1, -1) for b in bits):
            raise ValueError("branch bits must be +1 or -1")
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.bits)

    @classmethod
    def from_int(cls, k: int, n: int) -> BranchIndex:
        if not 0 <= k < (1 << n):
            raise ValueError(f"index {k} out of range for N={n}")
        return cls(tuple(-1 if (k >> j) & 1 else 1 for j in range(n)))

    def to_int(self) -> int:
        return sum(1 << j for j, b in enumerate(self.bits) if b == -1)

    @classmethod
    def all(cls, n: int) -> Iterator[BranchIndex]:
        for k in range(1 << n):
            yield cls.from_int(k, n)


@dataclass(frozen=True, eq=False)
class SignedCoherentSum:
    """Unnormalized superposition sum_I c_I e^{i t_I} |Z_I> with c_I = +1/-1.

    Entries are kept in canonical branch order. The phases t_I default to
    zero (a plain signed sum). Arrays are read-only.
    """

    signs: np.ndarray
    centers: np.ndarray = field(repr=False)
    phases: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        signs = np.array(self.signs, dtype=np.float64).reshape(-1)
        centers = np.array(self.centers, dtype=np.complex128).reshape(-1)
        if signs.shape != centers.shape:
            raise ValueError("signs and centers must have the same length")
        if self.phases is None:
            phases = np.zeros(signs.shape[0])
        else:
            phases = np.array(self.phases, dtype=np.float64).reshape(-1)
            if phases.shape != signs.shape:
                raise ValueError("phases and signs must have the same length")
            if not np.all(np.isfinite(phases)):
                raise ValueError("phases must be finite")
        if not np.all(np.abs(signs) == 1.0):
            raise ValueError("signs must be exactly +1 or -1")
        if not np.all(np.isfinite(centers)):
            raise ValueError("centers must be finite")
        for arr in (signs, centers, phases):
            arr.setflags(write=False)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "phases", phases)

    @classmethod
    def _trusted(cls, signs: np.ndarray, centers: np.ndarray, phases: np.ndarray) -> SignedCoherentSum:
        # skips validation; callers pass read-only float64/complex128 arrays
        obj = object.__new__(cls)
        object.__setattr__(obj, "signs", signs)
        object.__setattr__(obj, "centers", centers)
        object.__setattr__(obj, "phases", phases)
        return obj

    @property
    def weights(self) -> np.ndarray:
        """Complex branch amplitudes c_I e^{i t_I}."""
        return self.signs * np.exp(1j * self.phases)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[int, complex]]) -> SignedCoherentSum:
        if not pairs:
            return cls(np.empty(0), np.empty(0, dtype=complex))
        signs, centers = zip(*pairs)
        return cls(np.array(signs, dtype=float), np.array(centers, dtype=complex))

    def __len__(self) -> int:
        return self.signs.shape[0]

    def __iter__(self) -> Iterator[tuple[int, complex]]:
        for s, z in zip(self.signs, self.centers):
            yield int(s), complex(z)


def map_apply(z, sign: int, params: SystemParams):
    """Z_sign(z) = (z - sign v) e^{-2 pi i R} + sign v.

    Accepts a scalar or an array of labels.
    """
    sv = sign * params.v
    return (z - sv) * cmath.exp(-1j * params.phase) + sv


def propagation_phase(z, sign: int, params: SystemParams):
    """theta_sign(z) = sign v [Im z - Im(z e^{-2 pi i R})], the phase that
    exact propagation attaches to |Z_sign(z)> (constant part dropped)."""
    rotated = z * cmath.exp(-1j * params.phase)
    return sign * params.v * (np.imag(z) - np.imag(rotated))


def compose_iterated(params: SystemParams, idx: BranchIndex) -> complex:
    """Apply Z_{i_1}, then Z_{i_2}, ... to z0 one map at a time."""
    z = params.z0
    for b in idx.bits:
        z = map_apply(z, b, params)
    return z


def _kick_prefactor(params: SystemParams) -> complex:
    ph = params.phase
    return 2j * params.v * cmath.exp(-0.5j * ph) * math.sin(0.5 * ph)


def decompose_translation_rotation(params: SystemParams, idx: BranchIndex) -> tuple[complex, float]:
    """Split Z_I = e^{i theta} (z0 + W_I) into the z0-free displacement W_I and theta."""
    if len(idx) < 1:
        raise ValueError("branch index must have length >= 1")
    ph = params.phase
    j = np.arange(1, len(idx) + 1)
    total = np.sum(np.asarray(idx.bits) * np.exp(1j * ph * j))
    return complex(_kick_prefactor(params) * total), -ph * len(idx)


def compose_closed_form(params: SystemParams, idx: BranchIndex) -> complex:
    """Closed form of N composed maps."""
    w, theta = decompose_translation_rotation(params, idx)
    return (params.z0 + w) * cmath.exp(1j * theta)


def sign_coefficient(idx: BranchIndex, outcomes) -> int:
    """c_I = prod_j (s_j s_{j-1})^[i_j = -1] for a measurement record.

    ``outcomes`` is an :class:`~measkick.trajectory.OutcomeSequence` (or any
    object with ``s0`` and ``outcomes``).
    """
    rec = tuple(outcomes.outcomes)
    if len(rec) != len(idx):
        raise ValueError(f"branch index has length {len(idx)} but record has {len(rec)}")
    prev = outcomes.s0
    c = 1
    for b, s in zip(idx.bits, rec):
        if b == -1:
            c *= s * prev
        prev = s
    return c


def coherent_overlap(z1: complex, z2: complex) -> complex:
    """<z1|z2>, exponentiated from the log-domain exponent."""
    expo = -0.5 * abs(z1) ** 2 - 0.5 * abs(z2) ** 2 + z1.conjugate() * z2
    if expo.real < _kernels.UNDERFLOW_EXPONENT:
        return 0j
    return cmath.exp(expo)


def ho_number_matrix_element(z1: complex, z2: complex) -> complex:
    """<z1| a^dagger a |z2> = conj(z1) z2 <z1|z2>."""
    return z1.conjugate() * z2 * coherent_overlap(z1, z2)


def sum_norm_sq(s: SignedCoherentSum, prune_below: float | None = None) -> float:
    """Squared norm of the branch superposition, as an exact Gram double sum.

    ``prune_below`` skips index pairs whose overlap exponent -|Z_I-Z_J|^2/2
    lies below it; ``None`` keeps every pair (pairs under -745 underflow to 0
    anyway).
    """
    if len(s) == 0:
        return 0.0
    cut = -math.inf if prune_below is None else float(prune_below)
    rows = _kernels.gram_real_rows(s.signs, s.centers, s.phases, cut)
    val = math.fsum(rows)
    if val < -1e-12 * max(1.0, float(len(s))):
        raise NumericalError(f"negative squared norm {val}")
    return max(val, 0.0)
