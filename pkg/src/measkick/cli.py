"""Command-line interface: ``measkick <subcommand> [options]``.

Every subcommand writes one CSV file (except ``resonance``, which only
prints). Floats are written with ``repr`` so they re-parse to the identical
double; files are written to a temporary sibling and renamed into place.

Errors are reported on stderr as a single line
``error: category=<name> [field=<name>] message=<text>`` and mapped to the
exit codes 2 (config), 3 (capacity), 4 (impossible-outcome), 5 (truncation)
and 6 (numerical).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import ensemble as ens
from . import fock
from . import trajectory as traj
from .core import SystemParams
from .errors import CapacityError, ConfigError, MeasKickError, NumericalError
from .grid import HusimiGrid

SUBCOMMANDS = ("trajectory", "replay", "ensemble", "husimi", "echo", "resonance", "crystal", "validate")
DEFAULT_OUTPUT = {
    "trajectory": "trajectory.csv",
    "replay": "trajectory.csv",
    "ensemble": "moments.csv",
    "husimi": "husimi.csv",
    "echo": "echo.csv",
    "crystal": "crystal.csv",
    "validate": "validate.csv",
}
DEFAULT_MAX_STEPS = 20
VALIDATE_PROB_TOL = 1e-8
VALIDATE_FID_TOL = 1e-6
VALIDATE_MAP_TOL = 1e-8


@dataclass
class RunConfig:
    command: str
    R: float = 0.106
    v: float = 2.0
    z0: complex = 0j
    larmor_period: float | None = None
    steps: int = 6
    seed: int = 0
    s0: int = 1
    delta_R: float = 0.0
    outcomes: str | None = None
    q_grid: str | None = None
    p_grid: str | None = None
    n_max: int | None = None
    output: str | None = None
    hold_v: bool = False
    prune: float = 0.0
    max_steps: int | None = None
    energy_max_steps: int = traj.ENERGY_MAX_STEPS
    exact_phases: bool = True
    mode: str = "ensemble"
    seed_given: bool = False

    def validate(self) -> None:
        for name in ("R", "v", "delta_R", "prune"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError("must be finite", field=name)
        if not (self.z0.real == self.z0.real and math.isfinite(abs(self.z0))):
            raise ConfigError("must be finite", field="z0")
        if self.steps < 0:
            raise ConfigError("must be >= 0", field="steps")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("must be an unsigned 64-bit integer", field="seed")
        if self.s0 not in (1, -1):
            raise ConfigError("must be +1 or -1", field="s0")
        if not 0.0 <= self.prune < 1.0:
            raise ConfigError("must lie in [0, 1)", field="prune")
        if self.outcomes is not None:
            if any(ch not in "+-" for ch in self.outcomes):
                raise ConfigError("must match [+-]{N}", field="outcomes")
            self.steps = len(self.outcomes)
        if self.mode not in ("ensemble", "trajectory"):
            raise ConfigError("must be 'ensemble' or 'trajectory'", field="mode")
        if self.n_max is not None and self.n_max < 1:
            raise ConfigError("must be >= 1", field="n_max")

    def params(self) -> SystemParams:
        cap = self.max_steps if self.max_steps is not None else DEFAULT_MAX_STEPS
        if self.steps > cap:
            raise CapacityError(f"steps={self.steps} exceeds max_steps={cap}")
        return SystemParams(self.R, self.v, self.z0, self.larmor_period, cap, self.exact_phases)

    @property
    def prune_below(self) -> float | None:
        # overlap-magnitude threshold t -> skip pairs with exponent < ln t
        return None if self.prune == 0 else math.log(self.prune)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message, field="argv")


def _parse_z0(text) -> complex:
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return complex(float(text[0]), float(text[1]))
    if isinstance(text, (int, float)):
        return complex(float(text), 0.0)
    try:
        re_, im_ = (float(x) for x in str(text).split(","))
    except ValueError:
        raise ConfigError(f"expected 're,im', got {text!r}", field="z0") from None
    return complex(re_, im_)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = common.add_argument_group("model")
    g.add_argument("--R", type=float, help="frequency ratio omega0/omega")
    g.add_argument("--v", type=float, help="kick strength")
    g.add_argument("--z0", type=str, help="initial coherent label as 're,im'")
    g.add_argument("--larmor-period", dest="larmor_period", type=float)
    g.add_argument("--sign-model", dest="exact_phases", action="store_false",
                   help="drop the per-branch propagation phases (plain signed sums)")
    r = common.add_argument_group("run")
    r.add_argument("--steps", type=int, help="number of measurement steps N")
    r.add_argument("--seed", type=int, help="unsigned 64-bit seed (default 0)")
    r.add_argument("--s0", type=int, choices=(1, -1), help="initial sigma_x eigenvalue")
    r.add_argument("--delta-R", dest="delta_R", type=float, help="echo perturbation of R")
    r.add_argument("--hold-v", dest="hold_v", action="store_true", help="keep v fixed in the echo")
    r.add_argument("--outcomes", type=str, help="record such as '+-+-'")
    r.add_argument("--q-grid", dest="q_grid", type=str, help="q' axis as min:max:step")
    r.add_argument("--p-grid", dest="p_grid", type=str, help="p' axis as min:max:step")
    r.add_argument("--mode", choices=("ensemble", "trajectory"), help="husimi field type")
    r.add_argument("--n-max", dest="n_max", type=int, help="Fock truncation for validate")
    r.add_argument("--prune", type=float, help="skip overlaps below this magnitude (0 = off)")
    r.add_argument("--max-steps", dest="max_steps", type=int, help="cap on N")
    r.add_argument("--energy-max-steps", dest="energy_max_steps", type=int,
                   help=f"cap on N for O(4^N) energies (default {traj.ENERGY_MAX_STEPS})")
    r.add_argument("--output", "-o", type=str, help="output CSV path")
    r.add_argument("--config", type=str, help="JSON file with defaults; flags override it")

    parser = _Parser(prog="measkick", description="Measurement-kicked harmonic oscillator simulator.")
    parser.add_argument("--version", action="version", version=f"measkick {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "trajectory": "sample one trajectory and write per-step records",
        "replay": "replay a forced outcome record",
        "ensemble": "closed-form and enumerated moments for N = 0..steps",
        "husimi": "Husimi field on a grid (ensemble or one trajectory)",
        "echo": "Loschmidt echo along one record",
        "resonance": "print the resonant R and the power there",
        "crystal": "rotated-back centers and lattice residuals",
        "validate": "cross-check the engine against the number-basis oracle",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def load_config(argv=None) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    merged = {}
    if "config" in ns:
        try:
            with open(ns.pop("config"), encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}", field="config") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object", field="config")
        known = {f.name for f in fields(RunConfig)} - {"command", "seed_given"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", field="config")
        merged.update(data)
    merged.update(ns)
    outs = merged.get("outcomes")
    if outs is not None and "steps" in merged and int(merged["steps"]) != len(outs):
        raise ConfigError(f"steps={merged['steps']} but the record has {len(outs)} outcomes", field="outcomes")
    cfg = RunConfig(command=merged.pop("command"))
    cfg.seed_given = "seed" in merged
    for key, val in merged.items():
        if key == "z0":
            val = _parse_z0(val)
        setattr(cfg, key, val)
    try:
        for name in ("R", "v", "delta_R", "prune"):
            setattr(cfg, name, float(getattr(cfg, name)))
        for name in ("steps", "seed", "s0", "energy_max_steps"):
            setattr(cfg, name, int(getattr(cfg, name)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field="config") from None
    cfg.validate()
    return cfg


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: str | os.PathLike, header, rows) -> Path:
    """Write atomically: temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _record(cfg: RunConfig, params: SystemParams) -> traj.OutcomeSequence:
    """The forced record if given, else one sampled with the configured seed."""
    if cfg.outcomes is not None:
        return traj.OutcomeSequence.from_string(cfg.outcomes, cfg.s0)
    states = traj.sample_trajectory(params, cfg.steps, seed=cfg.seed, s0=cfg.s0, prune_below=cfg.prune_below)
    return states[-1].record


def _check_energy_cap(cfg: RunConfig) -> None:
    if cfg.steps > cfg.energy_max_steps:
        raise CapacityError(
            f"energies up to N={cfg.steps} exceed the O(4^N) cap {cfg.energy_max_steps}; "
            "raise it with --energy-max-steps"
        )


def _trajectory_rows(cfg: RunConfig, states):
    rows = []
    prev = 0.0
    for st in states:
        energy = traj.trajectory_energy(st, max_steps=cfg.energy_max_steps, prune_below=cfg.prune_below)
        cond = math.exp(st.log_prob - prev)
        rows.append((st.step, st.spin, cond, st.probability, energy))
        prev = st.log_prob
    return rows


TRAJECTORY_HEADER = ("step", "outcome", "cond_prob", "cum_prob", "energy")


def cmd_trajectory(cfg: RunConfig, out):
    params = cfg.params()
    _check_energy_cap(cfg)
    states = traj.sample_trajectory(params, cfg.steps, seed=cfg.seed, s0=cfg.s0, prune_below=cfg.prune_below)
    path = write_csv(out, TRAJECTORY_HEADER, _trajectory_rows(cfg, states))
    print(f"outcomes={states[-1].record.to_string()}")
    print(f"probability={states[-1].probability!r}")
    return path


def cmd_replay(cfg: RunConfig, out):
    if cfg.outcomes is None:
        raise ConfigError("replay needs --outcomes", field="outcomes")
    params = cfg.params()
    _check_energy_cap(cfg)
    seq = traj.OutcomeSequence.from_string(cfg.outcomes, cfg.s0)
    states = list(traj.iter_replay(params, seq, cfg.prune_below))
    path = write_csv(out, TRAJECTORY_HEADER, _trajectory_rows(cfg, states))
    print(f"probability={states[-1].probability!r}")
    return path


def cmd_ensemble(cfg: RunConfig, out):
    params = cfg.params()
    rows = []
    for n in range(cfg.steps + 1):
        c = ens.closed_form_moments(params, n)
        e = ens.enumerated_moments(ens.enumerate_ensemble(params, n))
        rows.append((n, c.mean_energy, e.mean_energy, c.mean_q, c.mean_p,
                     c.var_x, e.var_x, c.var_p, e.var_p))
    header = ("N", "E_closed", "E_enum", "q_mean", "p_mean",
              "varx_closed", "varx_enum", "varp_closed", "varp_enum")
    return write_csv(out, header, rows)


def _grid(cfg: RunConfig, centers) -> HusimiGrid:
    if (cfg.q_grid is None) != (cfg.p_grid is None):
        raise ConfigError("give both --q-grid and --p-grid or neither", field="q_grid")
    if cfg.q_grid is None:
        return HusimiGrid.covering(centers)
    return HusimiGrid.from_steps(cfg.q_grid, cfg.p_grid)


def cmd_husimi(cfg: RunConfig, out):
    params = cfg.params()
    if cfg.mode == "trajectory" or cfg.outcomes is not None:
        seq = _record(cfg, params)
        state = traj.replay(params, seq, cfg.prune_below)
        field = traj.trajectory_husimi(state, _grid(cfg, state.branch_sum.centers))
        print(f"outcomes={seq.to_string()}")
    else:
        e = ens.enumerate_ensemble(params, cfg.steps)
        field = ens.ensemble_husimi(e, params, _grid(cfg, e.centers))
    q, p = field.q_axis, field.p_axis
    rows = ((q[j], p[i], field.values[i, j]) for i in range(field.n_p) for j in range(field.n_q))
    path = write_csv(out, ("q", "p", "h"), rows)
    print(f"integral={field.integral()!r}")
    return path


def cmd_echo(cfg: RunConfig, out):
    params = cfg.params()
    seq = _record(cfg, params)
    echo = traj.loschmidt_echo(params, cfg.delta_R, seq, hold_v=cfg.hold_v, prune_below=cfg.prune_below)
    path = write_csv(out, ("step", "L"), enumerate(echo.tolist()))
    print(f"outcomes={seq.to_string()}")
    print(f"min_L={float(echo.min())!r}")
    return path


def cmd_resonance(cfg: RunConfig, out):
    r_star = ens.resonance_ratio()
    power = 2.0 * math.pi * math.sin(math.pi * r_star) ** 2 / r_star
    residual = math.tan(math.pi * r_star) - 2.0 * math.pi * r_star
    print(f"R*={r_star!r}")
    print(f"residual={residual!r}")
    print(f"P_max={power!r} (units hbar/T_L^2; 2 pi sin^2(pi R*)/R*)")
    print(f"note: 2 pi/R* = {2.0 * math.pi / r_star!r} is the value without the sin^2 factor")
    return None


def cmd_crystal(cfg: RunConfig, out):
    params = cfg.params()
    e = ens.enumerate_ensemble(params, cfg.steps)
    rep = ens.crystal_lattice_check(e, params)
    res = rep.lattice_residuals if rep.lattice_residuals is not None else np.full(len(e.centers), np.nan)
    rows = zip(e.centers.real.tolist(), e.centers.imag.tolist(), res.tolist())
    path = write_csv(out, ("center_re", "center_im", "lattice_residual"), rows)
    print(f"distinct_centers={rep.n_distinct}")
    print(f"symmetry_order={rep.symmetry_order}")
    if rep.max_lattice_residual is not None:
        print(f"max_lattice_residual={rep.max_lattice_residual!r}")
    return path


def cmd_validate(cfg: RunConfig, out):
    params = cfg.params()
    if cfg.outcomes is not None:
        records = [traj.OutcomeSequence.from_string(cfg.outcomes, cfg.s0)]
    else:
        records = list(traj.all_records(cfg.steps, cfg.s0))
    n_max = cfg.n_max if cfg.n_max is not None else fock.truncation_n_max(params, cfg.steps)
    rows = []
    failed = False
    for sign, name in ((1, "map_plus"), (-1, "map_minus")):
        f = fock.map_fidelity(params, sign, n_max)
        rows.append((name, "fidelity", 1.0, f, abs(1.0 - f)))
        failed |= abs(1.0 - f) > VALIDATE_MAP_TOL
    for seq in records:
        case = seq.to_string() or "(empty)"
        vec, p_oracle = fock.oracle_replay(params, seq, n_max)
        try:
            state = traj.replay(params, seq, cfg.prune_below)
        except MeasKickError:
            rows.append((case, "probability", 0.0, p_oracle, p_oracle))
            failed |= p_oracle > VALIDATE_PROB_TOL
            continue
        p = state.probability
        f = fock.fidelity(vec, fock.branch_sum_in_fock(state.branch_sum, n_max))
        rows.append((case, "probability", p, p_oracle, abs(p - p_oracle)))
        rows.append((case, "fidelity", 1.0, f, abs(1.0 - f)))
        failed |= abs(p - p_oracle) > VALIDATE_PROB_TOL or 1.0 - f > VALIDATE_FID_TOL
    path = write_csv(out, ("case", "quantity", "engine", "oracle", "abs_diff"), rows)
    worst = max(r[4] for r in rows)
    print(f"cases={len(records)} max_abs_diff={worst!r}")
    if failed:
        raise NumericalError(f"engine and oracle disagree (max abs diff {worst:.3g}); see {path}")
    return path


COMMANDS = {
    "trajectory": cmd_trajectory,
    "replay": cmd_replay,
    "ensemble": cmd_ensemble,
    "husimi": cmd_husimi,
    "echo": cmd_echo,
    "resonance": cmd_resonance,
    "crystal": cmd_crystal,
    "validate": cmd_validate,
}


def _report(exc: MeasKickError) -> None:
    field = getattr(exc, "field", None)
    msg = str(getattr(exc, "message", exc)).replace("\n", " ")
    parts = [f"category={exc.category}"]
    if field:
        parts.append(f"field={field}")
    parts.append(f"message={msg}")
    print("error: " + " ".join(parts), file=sys.stderr)


def run(cfg: RunConfig) -> int:
    samples = cfg.command in ("trajectory", "echo") or (cfg.command == "husimi" and cfg.mode == "trajectory")
    if samples and not cfg.seed_given and cfg.outcomes is None:
        print("warning: no --seed given; using the fixed default seed 0 (results are deterministic, not random)",
              file=sys.stderr)
    out = cfg.output or DEFAULT_OUTPUT.get(cfg.command)
    path = COMMANDS[cfg.command](cfg, out)
    if path is not None:
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    try:
        return run(load_config(argv))
    except MeasKickError as exc:
        _report(exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
