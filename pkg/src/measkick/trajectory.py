"""Single quantum trajectories: branch doubling, sampled or forced outcomes,
probabilities, energies, Husimi fields and the Loschmidt echo.

The orbital state after N steps is the sum sum_I c_I e^{i t_I} |Z_I> over
the 2^N canonical branch centers. The centers and the propagation phases t_I
(zero when ``exact_phases`` is off) depend only on the parameters; the record
of sigma_x outcomes enters through the real signs c_I alone.

Squared norms of child candidates are evaluated by one of three routes,
chosen by branch count:

* child level <= ``GRAM_CACHE_MAX_LEVEL``: a cached sign-free Gram matrix
  of the level's centers, contracted with the signs;
* child level <= ``EXACT_MAX_LEVEL``: the same double sum streamed without
  storing the matrix;
* above that: trapezoidal quadrature of the position-space wavefunction.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from . import _kernels
from . import _quadrature as quad
from .core import SignedCoherentSum, SystemParams, map_apply, propagation_phase
from .errors import (
    CapacityError,
    ConfigError,
    DegenerateStateError,
    ImpossibleOutcomeError,
)
from .grid import HusimiGrid

__all__ = [
    "OutcomeSequence",
    "TrajectoryState",
    "Candidate",
    "initial_state",
    "step_candidates",
    "sample_step",
    "replay",
    "iter_replay",
    "sample_trajectory",
    "sample_batch",
    "all_records",
    "enumerate_trajectories",
    "trajectory_energy",
    "trajectory_husimi",
    "loschmidt_echo",
    "echo_params",
]

GRAM_CACHE_MAX_LEVEL = 10
EXACT_MAX_LEVEL = 12
IMPOSSIBLE_THRESHOLD = 1e-15
DEGENERATE_NORM = 1e-30
ENERGY_MAX_STEPS = 14


@dataclass(frozen=True)
class OutcomeSequence:
    """Initial sigma_x eigenvalue ``s0`` and the measured record s_1..s_N."""

    s0: int
    outcomes: tuple[int, ...] = ()

    def __post_init__(self):
        outs = tuple(int(s) for s in self.outcomes)
        if int(self.s0) not in (1, -1) or any(s not in (1, -1) for s in outs):
            raise ConfigError("spin outcomes must be +1 or -1", field="outcomes")
        object.__setattr__(self, "s0", int(self.s0))
        object.__setattr__(self, "outcomes", outs)

    def __len__(self) -> int:
        return len(self.outcomes)

    @classmethod
    def from_string(cls, text: str, s0: int = 1) -> OutcomeSequence:
        """Parse a record such as ``"+-+--"``."""
        table = {"+": 1, "-": -1}
        try:
            return cls(s0, tuple(table[ch] for ch in text.strip()))
        except KeyError:
            raise ConfigError(f"expected only '+'/'-' characters, got {text!r}", field="outcomes") from None

    def to_string(self) -> str:
        return "".join("+" if s > 0 else "-" for s in self.outcomes)

    def extended(self, s: int) -> OutcomeSequence:
        return OutcomeSequence(self.s0, self.outcomes + (int(s),))

    @property
    def last(self) -> int:
        return self.outcomes[-1] if self.outcomes else self.s0


@dataclass(frozen=True, eq=False)
class TrajectoryState:
    params: SystemParams
    record: OutcomeSequence
    branch_sum: SignedCoherentSum
    log_prob: float
    norm_sq: float

    @property
    def step(self) -> int:
        return len(self.record)

    @property
    def spin(self) -> int:
        return self.record.last

    @property
    def probability(self) -> float:
        return math.exp(self.log_prob)


class Candidate(NamedTuple):
    outcome: int
    branch_sum: SignedCoherentSum
    probability: float
    norm_sq: float


@lru_cache(maxsize=256)
def _level_centers(key: tuple, n: int) -> np.ndarray:
    """Canonical centers after n steps, built by iterating the two maps."""
    if n == 0:
        out = np.array([key[2]], dtype=complex)
    else:
        prev = _level_centers(key, n - 1)
        params = SystemParams(R=key[0], v=key[1], z0=key[2])
        out = np.concatenate([map_apply(prev, 1, params), map_apply(prev, -1, params)])
    out.setflags(write=False)
    return out


@lru_cache(maxsize=256)
def _level_phases(key: tuple, n: int) -> np.ndarray:
    """Canonical branch phases after n steps (all zero unless exact phases are on)."""
    if n == 0 or not key[3]:
        out = np.zeros(1 << n)
    else:
        prev = _level_phases(key, n - 1)
        centers = _level_centers(key, n - 1)
        params = SystemParams(R=key[0], v=key[1], z0=key[2])
        out = np.concatenate([prev + propagation_phase(centers, 1, params),
                              prev + propagation_phase(centers, -1, params)])
    out.setflags(write=False)
    return out


@lru_cache(maxsize=48)
def _level_gram(key: tuple, n: int) -> np.ndarray:
    g = _kernels.gram_real_matrix(_level_centers(key, n), _level_phases(key, n))
    g.setflags(write=False)
    return g


def _child_forms(params: SystemParams, n_child: int, signs: np.ndarray, prune_below) -> tuple[float, float, float]:
    """(||U+ psi||^2, ||U- psi||^2, Re<U+ psi|U- psi>) for the parent signs."""
    centers = _level_centers(params.key, n_child)
    phases = _level_phases(params.key, n_child)
    h = signs.shape[0]
    if n_child <= EXACT_MAX_LEVEL:
        if n_child <= GRAM_CACHE_MAX_LEVEL and prune_below is None:
            ra, rb, rx = _kernels.block_rows_from_matrix(_level_gram(params.key, n_child), signs)
        else:
            cut = -math.inf if prune_below is None else float(prune_below)
            ra, rb, rx = _kernels.block_rows_streaming(
                signs, centers[:h], centers[h:], phases[:h], phases[h:], cut)
        return math.fsum(ra), math.fsum(rb), math.fsum(rx)
    grid = quad.grid_for(centers)
    psi_p = quad.amplitudes(signs, centers[:h], phases[:h], grid)
    psi_m = quad.amplitudes(signs, centers[h:], phases[h:], grid)
    return quad.norm_sq(psi_p, grid), quad.norm_sq(psi_m, grid), quad.inner(psi_p, psi_m, grid).real


def initial_state(params: SystemParams, s0: int = 1) -> TrajectoryState:
    """|z0> with spin along sigma_x = s0; probability 1."""
    centers = _level_centers(params.key, 0)
    return TrajectoryState(
        params=params,
        record=OutcomeSequence(s0),
        branch_sum=SignedCoherentSum(np.ones(1), centers, _level_phases(params.key, 0)),
        log_prob=0.0,
        norm_sq=1.0,
    )


def step_candidates(state: TrajectoryState, prune_below: float | None = None) -> tuple[Candidate, Candidate]:
    """Both possible outcomes of the next measurement, (+1, -1) in that order.

    The child for outcome s is U_+ psi + s s_N U_- psi, i.e. the branches
    c_I |Z_+(Z_I)> followed by s s_N c_I |Z_-(Z_I)>. Its conditional
    probability is ||child||^2 / (2 (||U_+ psi||^2 + ||U_- psi||^2)). With
    exact phases both norms equal ||psi||^2 and this is the usual
    ||child||^2 / (4 ||psi||^2); without them the maps are not norm
    preserving and the denominator keeps the two outcomes summing to one.
    """
    params = state.params
    n = state.step
    if n >= params.max_steps:
        raise CapacityError(f"step {n + 1} exceeds max_steps={params.max_steps}")
    if state.norm_sq < DEGENERATE_NORM:
        raise DegenerateStateError(f"parent norm^2 {state.norm_sq:.3e} is degenerate")
    signs = state.branch_sum.signs
    a, b, x = _child_forms(params, n + 1, signs, prune_below)
    total = 2.0 * (a + b)
    centers = _level_centers(params.key, n + 1)
    phases = _level_phases(params.key, n + 1)
    out = []
    for s in (1, -1):
        ss = s * state.spin
        norm = max(a + b + 2.0 * ss * x, 0.0)
        child_signs = np.concatenate([signs, ss * signs])
        child_signs.setflags(write=False)
        child = SignedCoherentSum._trusted(child_signs, centers, phases)
        out.append(Candidate(s, child, norm / total, norm))
    return out[0], out[1]


def _advance(state: TrajectoryState, cand: Candidate) -> TrajectoryState:
    if cand.probability < IMPOSSIBLE_THRESHOLD:
        raise ImpossibleOutcomeError(
            f"outcome {cand.outcome:+d} at step {state.step + 1} has probability {cand.probability:.3e}"
        )
    return TrajectoryState(
        params=state.params,
        record=state.record.extended(cand.outcome),
        branch_sum=cand.branch_sum,
        log_prob=state.log_prob + math.log(cand.probability),
        norm_sq=cand.norm_sq,
    )


def sample_step(state: TrajectoryState, rng: np.random.Generator, prune_below: float | None = None) -> TrajectoryState:
    """Draw the next outcome: +1 iff u < p(+1) for u uniform in [0, 1)."""
    plus, minus = step_candidates(state, prune_below)
    u = rng.random()
    return _advance(state, plus if u < plus.probability else minus)


def iter_replay(params: SystemParams, seq: OutcomeSequence, prune_below: float | None = None) -> Iterator[TrajectoryState]:
    """Yield the states 0..N obtained by forcing the recorded outcomes."""
    if len(seq) > params.max_steps:
        raise CapacityError(f"record of length {len(seq)} exceeds max_steps={params.max_steps}")
    state = initial_state(params, seq.s0)
    yield state
    for s in seq.outcomes:
        plus, minus = step_candidates(state, prune_below)
        state = _advance(state, plus if s == 1 else minus)
        yield state


def replay(params: SystemParams, seq: OutcomeSequence, prune_below: float | None = None) -> TrajectoryState:
    """State after forcing every outcome of ``seq``.

    Raises ImpossibleOutcomeError when a recorded outcome has conditional
    probability below 1e-15.
    """
    state = None
    for state in iter_replay(params, seq, prune_below):
        pass
    return state


def sample_trajectory(params: SystemParams, steps: int, seed: int = 0, s0: int = 1,
                      prune_below: float | None = None) -> list[TrajectoryState]:
    """Sampled states 0..steps driven by a PCG64 stream seeded with ``seed``."""
    if steps > params.max_steps:
        raise CapacityError(f"steps={steps} exceeds max_steps={params.max_steps}")
    rng = np.random.Generator(np.random.PCG64(seed))
    states = [initial_state(params, s0)]
    for _ in range(steps):
        states.append(sample_step(states[-1], rng, prune_below))
    return states


def sample_batch(params: SystemParams, steps: int, n_traj: int, master_seed: int = 0, s0: int = 1,
                 workers: int | None = None) -> list[list[TrajectoryState]]:
    """``n_traj`` independent trajectories; trajectory k uses seed master_seed XOR k.

    Results are returned in trajectory-index order whatever ``workers`` is.
    """
    def run(k):
        return sample_trajectory(params, steps, seed=master_seed ^ k, s0=s0)

    if not workers or workers <= 1:
        return [run(k) for k in range(n_traj)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(n_traj)))


def enumerate_trajectories(params: SystemParams, n: int, s0: int = 1,
                           prune_below: float | None = None) -> Iterator[TrajectoryState]:
    """Final states of every record of length n that is not impossible.

    Walks the outcome tree depth first so each prefix is evaluated once;
    the yield order is not the :func:`all_records` order.
    """
    if n > params.max_steps:
        raise CapacityError(f"N={n} exceeds max_steps={params.max_steps}")
    stack = [initial_state(params, s0)]
    while stack:
        state = stack.pop()
        if state.step == n:
            yield state
            continue
        for cand in reversed(step_candidates(state, prune_below)):
            if cand.probability >= IMPOSSIBLE_THRESHOLD:
                stack.append(_advance(state, cand))


def all_records(n: int, s0: int = 1) -> Iterator[OutcomeSequence]:
    """Every record of length n, s_1 varying fastest (+1 before -1)."""
    for k in range(1 << n):
        yield OutcomeSequence(s0, tuple(-1 if (k >> j) & 1 else 1 for j in range(n)))


def trajectory_energy(state: TrajectoryState, max_steps: int = ENERGY_MAX_STEPS,
                      prune_below: float | None = None) -> float:
    """<psi_N| H |psi_N> in units of hbar omega0.

    The spin-position coupling drops out because the post-measurement spin is
    a sigma_x eigenstate, leaving <a^dagger a> + 1/2. Cost is O(4^N); steps
    beyond ``max_steps`` raise CapacityError.
    """
    if state.step > max_steps:
        raise CapacityError(f"energy at step {state.step} exceeds the O(4^N) cap of {max_steps}")
    if state.norm_sq < DEGENERATE_NORM:
        raise DegenerateStateError("cannot evaluate energy of a degenerate state")
    cut = -math.inf if prune_below is None else float(prune_below)
    s = state.branch_sum
    num = math.fsum(_kernels.number_rows(s.signs, s.centers, s.phases, cut))
    den = math.fsum(_kernels.gram_real_rows(s.signs, s.centers, s.phases, cut))
    return num / den + 0.5


def _projected_amplitudes(weights, centers, nodes, chunk=1 << 22) -> np.ndarray:
    """sum_I w_I <z|Z_I> for every node z."""
    nodes = np.asarray(nodes, dtype=complex).ravel()
    out = np.zeros(nodes.shape[0], dtype=complex)
    step = max(1, chunk // max(1, centers.shape[0]))
    half_c = -0.5 * np.abs(centers) ** 2
    for lo in range(0, nodes.shape[0], step):
        z = nodes[lo:lo + step, None]
        expo = -0.5 * np.abs(z) ** 2 + half_c[None, :] + np.conj(z) * centers[None, :]
        out[lo:lo + step] = np.exp(expo) @ weights
    return out


def trajectory_husimi(state: TrajectoryState, grid: HusimiGrid) -> HusimiGrid:
    """|<z|psi_N>|^2 on every grid node, peak-normalized (values in [0, 1])."""
    if state.norm_sq < DEGENERATE_NORM:
        raise DegenerateStateError("cannot evaluate Husimi field of a degenerate state")
    s = state.branch_sum
    amp = _projected_amplitudes(s.weights, s.centers, grid.nodes())
    field = np.abs(amp) ** 2 / state.norm_sq
    return grid.with_values(np.clip(field, 0.0, 1.0).reshape(grid.n_p, grid.n_q))


def echo_params(params: SystemParams, delta_R: float, hold_v: bool = False) -> SystemParams:
    """Perturbed parameters: omega0 -> omega0 + delta omega0 at fixed b and alpha.

    R' = R + delta_R; v' = v R / R' unless ``hold_v``.
    """
    r2 = params.R + delta_R
    if not r2 > 0:
        raise ConfigError("R + delta_R must be > 0", field="delta_R")
    v2 = params.v if hold_v else params.v * params.R / r2
    return params.replace(R=r2, v=v2)


def _overlap_sq(st1: TrajectoryState, st2: TrajectoryState, prune_below) -> float:
    s1, s2 = st1.branch_sum, st2.branch_sum
    if st1.step <= EXACT_MAX_LEVEL:
        cut = -math.inf if prune_below is None else float(prune_below)
        rre, rim = _kernels.cross_rows(s1.signs, s1.centers, s1.phases,
                                       s2.signs, s2.centers, s2.phases, cut)
        ov = complex(math.fsum(rre), math.fsum(rim))
        n1, n2 = st1.norm_sq, st2.norm_sq
    else:
        grid = quad.grid_for(s1.centers, s2.centers)
        psi1 = quad.amplitudes(s1.signs, s1.centers, s1.phases, grid)
        psi2 = quad.amplitudes(s2.signs, s2.centers, s2.phases, grid)
        ov = quad.inner(psi1, psi2, grid)
        n1, n2 = quad.norm_sq(psi1, grid), quad.norm_sq(psi2, grid)
    return min(max(abs(ov) ** 2 / (n1 * n2), 0.0), 1.0)


def loschmidt_echo(params: SystemParams, delta_R: float, seq: OutcomeSequence, hold_v: bool = False,
                   prune_below: float | None = None) -> np.ndarray:
    """Echo L_n = |<psi_n|psi'_n>|^2 for n = 0..N along a fixed record.

    ``psi'`` evolves under :func:`echo_params`. The returned array has
    length N + 1 with L_0 = 1.
    """
    other = echo_params(params, delta_R, hold_v)
    out = [1.0]
    pairs = zip(iter_replay(params, seq, prune_below), iter_replay(other, seq, prune_below))
    next(pairs)
    for st1, st2 in pairs:
        out.append(_overlap_sq(st1, st2, prune_below))
    return np.array(out)
