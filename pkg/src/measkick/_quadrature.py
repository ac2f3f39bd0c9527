"""Inner products of branch sums by trapezoidal quadrature in position space.

Used for large branch counts, where the O(4^N) Gram sums are too slow.
Each coherent packet is a Gaussian of unit width in x = X/b, so on a grid
fine enough to resolve the largest momentum difference the trapezoidal rule
is accurate to about exp(-TAIL_EXPONENT) per packet pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

TAIL_EXPONENT = 40.0
REACH = math.sqrt(2.0 * TAIL_EXPONENT)
# alias-free margin: exp(-(2 pi/dx - k_max)^2 / 4) <= exp(-TAIL_EXPONENT)
_FREQ_MARGIN = 2.0 * math.sqrt(TAIL_EXPONENT)


@dataclass(frozen=True)
class PositionGrid:
    x0: float
    dx: float
    m: int


def grid_for(*center_sets) -> PositionGrid:
    c = np.concatenate([np.asarray(s, dtype=complex).ravel() for s in center_sets])
    q = math.sqrt(2.0) * c.real
    p = math.sqrt(2.0) * c.imag
    k_max = float(p.max() - p.min())
    dx = 2.0 * math.pi / (k_max + _FREQ_MARGIN)
    x0 = float(q.min()) - REACH - dx
    m = int(math.ceil((float(q.max()) + REACH + dx - x0) / dx)) + 1
    return PositionGrid(x0, dx, m)


def amplitudes(signs, centers, phases, grid: PositionGrid) -> np.ndarray:
    return _kernels.position_amplitudes(
        np.asarray(signs, dtype=float), np.asarray(centers, dtype=complex),
        np.asarray(phases, dtype=float), grid.x0, grid.dx, grid.m, REACH + grid.dx,
    )


def inner(psi1: np.ndarray, psi2: np.ndarray, grid: PositionGrid) -> complex:
    prod = np.conj(psi1) * psi2
    return complex(math.fsum(prod.real), math.fsum(prod.imag)) * grid.dx


def norm_sq(psi: np.ndarray, grid: PositionGrid) -> float:
    return math.fsum(psi.real ** 2 + psi.imag ** 2) * grid.dx
