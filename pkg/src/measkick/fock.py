"""Brute-force reference model in a truncated number basis.

The composite (oscillator x spin) state is stored as two orbital blocks,
one per sigma_z eigenvalue. Each block evolves under its own tridiagonal
Hamiltonian H_pm = a^dag a + 1/2 -+ v (a + a^dag) (units hbar omega0),
exponentiated through a symmetric tridiagonal eigendecomposition, and each
measurement is an explicit projection onto a sigma_x eigenvector. Nothing
here relies on the coherent-state map algebra of the main engine, which is
what makes it useful as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal
from scipy.special import gammaln

from .core import SignedCoherentSum, SystemParams
from .errors import ConfigError, NumericalError, TruncationError
from .trajectory import OutcomeSequence

__all__ = [
    "FockCompositeVector",
    "TridiagonalHamiltonian",
    "coherent_in_fock",
    "build_hpm",
    "propagate",
    "truncation_n_max",
    "oracle_replay",
    "branch_sum_in_fock",
    "fidelity",
    "map_fidelity",
]

DEFICIT_TOL = 1e-8
BOUNDARY_TOL = 1e-10
BOUNDARY_LEVELS = 10


@dataclass(frozen=True, eq=False)
class FockCompositeVector:
    """Amplitudes ordered (spin +, n = 0..n_max) then (spin -, n = 0..n_max)."""

    n_max: int
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (2 * (self.n_max + 1),):
            raise ValueError(f"expected {2 * (self.n_max + 1)} amplitudes, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NumericalError("non-finite amplitude in composite vector")
        if np.vdot(a, a).real > 1.0 + 1e-12:
            raise NumericalError("composite vector norm exceeds 1")
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def product(cls, orbital: np.ndarray, s: int) -> FockCompositeVector:
        """orbital x |s>_x with |s>_x = (|+> + s|->)/sqrt2."""
        orbital = np.asarray(orbital, dtype=complex)
        return cls(orbital.shape[0] - 1, np.concatenate([orbital, s * orbital]) / math.sqrt(2.0))

    @property
    def plus(self) -> np.ndarray:
        return self.amplitudes[: self.n_max + 1]

    @property
    def minus(self) -> np.ndarray:
        return self.amplitudes[self.n_max + 1:]

    def project_x(self, s: int) -> np.ndarray:
        """Unnormalized orbital factor <s|_x psi."""
        return (self.plus + s * self.minus) / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class TridiagonalHamiltonian:
    """Real symmetric tridiagonal matrix; the spectral decomposition is computed lazily and kept."""

    diagonal: np.ndarray
    off_diagonal: np.ndarray
    _eig: list = field(default_factory=list, repr=False)

    @property
    def size(self) -> int:
        return self.diagonal.shape[0]

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._eig:
            try:
                w, vecs = eigh_tridiagonal(self.diagonal, self.off_diagonal)
            except LinAlgError as exc:
                raise NumericalError(f"tridiagonal eigensolver failed: {exc}") from exc
            self._eig.append((w, vecs))
        return self._eig[0]

    def dense(self) -> np.ndarray:
        return np.diag(self.diagonal) + np.diag(self.off_diagonal, 1) + np.diag(self.off_diagonal, -1)


def coherent_in_fock(z: complex, n_max: int) -> tuple[np.ndarray, float]:
    """Number-basis amplitudes e^{-|z|^2/2} z^n / sqrt(n!) for n = 0..n_max.

    Returns the (untruncated-normalization) amplitudes and the deficit
    1 - sum |amp|^2, so that <vec, vec> = 1 - deficit. Raises
    :class:`TruncationError` when the deficit exceeds 1e-8.
    """
    if n_max < 1:
        raise ConfigError("n_max must be >= 1", field="n_max")
    z = complex(z)
    n = np.arange(n_max + 1)
    if z == 0:
        amp = np.zeros(n_max + 1, dtype=complex)
        amp[0] = 1.0
        return amp, 0.0
    r = abs(z)
    log_mag = -0.5 * r * r + n * math.log(r) - 0.5 * gammaln(n + 1)
    amp = np.exp(log_mag) * np.exp(1j * math.atan2(z.imag, z.real) * n)
    deficit = 1.0 - math.fsum(np.exp(2.0 * log_mag))
    if deficit > DEFICIT_TOL:
        raise TruncationError(f"coherent state |{z}> loses {deficit:.3g} of its norm at n_max={n_max}")
    return amp, deficit


@lru_cache(maxsize=32)
def build_hpm(v: float, n_max: int) -> tuple[TridiagonalHamiltonian, TridiagonalHamiltonian]:
    """H_+ and H_- for the two sigma_z blocks, units hbar omega0."""
    if n_max < 1:
        raise ConfigError("n_max must be >= 1", field="n_max")
    diag = np.arange(n_max + 1) + 0.5
    off = v * np.sqrt(np.arange(1, n_max + 1, dtype=float))
    for arr in (diag, off):
        arr.flags.writeable = False
    return TridiagonalHamiltonian(diag, -off), TridiagonalHamiltonian(diag, off)


def propagate(h: TridiagonalHamiltonian, phase: float, vec: np.ndarray) -> np.ndarray:
    """exp(-i phase H) vec, with phase = 2 pi R."""
    vec = np.asarray(vec, dtype=complex)
    if vec.shape != (h.size,):
        raise ValueError(f"vector length {vec.shape} does not match Hamiltonian size {h.size}")
    if phase == 0:
        return vec.copy()
    w, u = h.eigh()
    return u @ (np.exp(-1j * phase * w) * (u.T @ vec))


def truncation_n_max(params: SystemParams, n_steps: int) -> int:
    """Basis size that holds every center reachable in ``n_steps`` with Poisson-tail headroom."""
    reach = abs(params.z0) + 2.0 * params.v * n_steps
    return int(math.ceil(reach * reach + 10.0 * reach + 20.0))


def _check_boundary(vec: np.ndarray, step: int) -> None:
    tail = math.fsum(np.abs(vec[-BOUNDARY_LEVELS:]) ** 2)
    if tail > BOUNDARY_TOL:
        raise TruncationError(f"boundary occupation {tail:.3g} at step {step}; raise n_max")


def oracle_replay(params: SystemParams, seq: OutcomeSequence, n_max: int | None = None) -> tuple[np.ndarray, float]:
    """Replay ``seq`` by explicit block evolution and sigma_x projection.

    Returns the normalized orbital vector after the last projection and the
    product of the conditional outcome probabilities.
    """
    n = len(seq.outcomes)
    if n_max is None:
        n_max = truncation_n_max(params, n)
    h_plus, h_minus = build_hpm(float(params.v), int(n_max))
    orbital, _ = coherent_in_fock(params.z0, n_max)
    orbital = orbital / math.sqrt(np.vdot(orbital, orbital).real)
    spin = seq.s0
    prob = 1.0
    for j, s in enumerate(seq.outcomes, start=1):
        state = FockCompositeVector.product(orbital, spin)
        evolved = np.concatenate([
            propagate(h_plus, params.phase, state.plus),
            propagate(h_minus, params.phase, state.minus),
        ])
        _check_boundary(evolved[: n_max + 1], j)
        _check_boundary(evolved[n_max + 1:], j)
        projected = FockCompositeVector(n_max, evolved).project_x(s)
        p = float(np.vdot(projected, projected).real)
        if p <= 0.0:
            raise NumericalError(f"outcome {s:+d} at step {j} has zero probability in the oracle")
        prob *= p
        orbital = projected / math.sqrt(p)
        spin = s
    return orbital, prob


def branch_sum_in_fock(branch_sum: SignedCoherentSum, n_max: int) -> np.ndarray:
    """Expand sum_I c_I e^{i t_I} |Z_I> in the number basis (for comparison with the oracle)."""
    out = np.zeros(n_max + 1, dtype=complex)
    for c, z in zip(branch_sum.weights, branch_sum.centers):
        amp, _ = coherent_in_fock(z, n_max)
        out += c * amp
    return out


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """|<a|b>|^2 / (<a|a><b|b>)."""
    num = abs(np.vdot(a, b)) ** 2
    den = np.vdot(a, a).real * np.vdot(b, b).real
    if den == 0:
        raise NumericalError("fidelity of a zero vector")
    return float(num / den)


def map_fidelity(params: SystemParams, sign: int, n_max: int | None = None) -> float:
    """Fidelity between U_pm |z0> and the coherent state at the mapped center.

    The mapped center (z0 -+ v) e^{-2 pi i R} +- v is written out here
    rather than imported so the check stays independent of the engine.
    """
    if n_max is None:
        n_max = truncation_n_max(params, 1)
    h = build_hpm(float(params.v), int(n_max))[0 if sign > 0 else 1]
    start, _ = coherent_in_fock(params.z0, n_max)
    evolved = propagate(h, params.phase, start)
    target = (params.z0 - sign * params.v) * np.exp(-1j * params.phase) + sign * params.v
    expected, _ = coherent_in_fock(target, n_max)
    return fidelity(evolved, expected)
