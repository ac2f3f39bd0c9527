"""Simulator for a harmonic oscillator kicked by stroboscopic spin measurements.

The conditioned orbital state is a signed superposition of coherent states
whose centers follow two affine phase-space maps; this package evolves such
superpositions, samples and replays measurement records, computes ensemble
statistics, Husimi fields and Loschmidt echoes, and checks all of it against
a truncated number-basis reference model.
"""

__version__ = "0.1.0"

from .core import (
    BranchIndex,
    SignedCoherentSum,
    SystemParams,
    coherent_overlap,
    compose_closed_form,
    compose_iterated,
    decompose_translation_rotation,
    ho_number_matrix_element,
    map_apply,
    propagation_phase,
    sign_coefficient,
    sum_norm_sq,
)
from .ensemble import (
    CrystalReport,
    EnsembleState,
    MomentReport,
    closed_form_moments,
    crystal_lattice_check,
    ensemble_husimi,
    enumerate_ensemble,
    enumerated_moments,
    husimi_centers,
    increment_symmetry_order,
    mean_power,
    resonance_ratio,
)
from .errors import (
    CapacityError,
    ConfigError,
    DegenerateStateError,
    ImpossibleOutcomeError,
    MeasKickError,
    NumericalError,
    TruncationError,
)
from .grid import HusimiGrid
from .trajectory import (
    OutcomeSequence,
    TrajectoryState,
    all_records,
    echo_params,
    enumerate_trajectories,
    initial_state,
    iter_replay,
    loschmidt_echo,
    replay,
    sample_batch,
    sample_step,
    sample_trajectory,
    step_candidates,
    trajectory_energy,
    trajectory_husimi,
)
