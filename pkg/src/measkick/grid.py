"""Rectangular phase-space grids in the dimensionless (q', p') plane."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True, eq=False)
class HusimiGrid:
    """Grid of nodes z = q' + i p' with an optional evaluated field.

    ``values`` has shape ``(n_p, n_q)``: row index runs over p', column
    index over q'.
    """

    q_min: float
    q_max: float
    p_min: float
    p_max: float
    n_q: int
    n_p: int
    values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("q_min", "q_max", "p_min", "p_max"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise ConfigError("must be finite", field=name)
            object.__setattr__(self, name, val)
        if not self.q_min < self.q_max:
            raise ConfigError("q_min must be < q_max", field="grid")
        if not self.p_min < self.p_max:
            raise ConfigError("p_min must be < p_max", field="grid")
        if self.n_q < 2 or self.n_p < 2:
            raise ConfigError("need at least 2 nodes per axis", field="grid")
        if self.values is not None and np.shape(self.values) != (self.n_p, self.n_q):
            raise ValueError(f"values must have shape {(self.n_p, self.n_q)}")

    @classmethod
    def from_steps(cls, q_spec: str, p_spec: str) -> HusimiGrid:
        """Build from ``"min:max:step"`` strings (both ends included when they fall on the step)."""
        (q0, q1, dq), (p0, p1, dp) = _parse_axis(q_spec, "q"), _parse_axis(p_spec, "p")
        nq = int(math.floor((q1 - q0) / dq + 1e-9)) + 1
        npts = int(math.floor((p1 - p0) / dp + 1e-9)) + 1
        return cls(q0, q0 + (nq - 1) * dq, p0, p0 + (npts - 1) * dp, nq, npts)

    @classmethod
    def covering(cls, centers, margin: float = 5.0, step: float = 0.1) -> HusimiGrid:
        """Grid spanning every center plus ``margin`` on each side."""
        c = np.asarray(centers, dtype=complex)
        q0, q1 = c.real.min() - margin, c.real.max() + margin
        p0, p1 = c.imag.min() - margin, c.imag.max() + margin
        nq = int(math.ceil((q1 - q0) / step)) + 1
        npts = int(math.ceil((p1 - p0) / step)) + 1
        return cls(q0, q0 + (nq - 1) * step, p0, p0 + (npts - 1) * step, nq, npts)

    @property
    def q_axis(self) -> np.ndarray:
        return np.linspace(self.q_min, self.q_max, self.n_q)

    @property
    def p_axis(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.n_p)

    @property
    def cell_area(self) -> float:
        return (self.q_max - self.q_min) / (self.n_q - 1) * (self.p_max - self.p_min) / (self.n_p - 1)

    def nodes(self) -> np.ndarray:
        """Complex node labels, shape ``(n_p, n_q)``."""
        return self.q_axis[None, :] + 1j * self.p_axis[:, None]

    def with_values(self, values) -> HusimiGrid:
        return replace(self, values=np.asarray(values, dtype=float))

    def integral(self) -> float:
        """Riemann sum of the field with cell area dq' dp'."""
        if self.values is None:
            raise ValueError("grid has no values")
        return float(np.sum(self.values) * self.cell_area)


def _parse_axis(spec: str, name: str) -> tuple[float, float, float]:
    try:
        lo, hi, step = (float(x) for x in spec.split(":"))
    except ValueError:
        raise ConfigError(f"expected 'min:max:step', got {spec!r}", field=f"{name}_grid") from None
    if not all(math.isfinite(x) for x in (lo, hi, step)):
        raise ConfigError("entries must be finite", field=f"{name}_grid")
    if step <= 0:
        raise ConfigError("step must be > 0", field=f"{name}_grid")
    if not lo < hi:
        raise ConfigError("min must be < max", field=f"{name}_grid")
    return lo, hi, step
