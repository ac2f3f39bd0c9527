"""Compiled inner loops for Gram-type double sums over coherent branches.

All kernels return per-row partial sums in a fixed order (Kahan-compensated
along the row, except the contraction of a stored matrix, which lets the compiler
vectorize the row dot products); callers reduce the rows with ``math.fsum`` so
results do not depend on the thread schedule.

Re<a|b> = exp(-|a-b|^2/2) cos(Im(conj(a) b)) and
Im<a|b> = exp(-|a-b|^2/2) sin(Im(conj(a) b)).

Every kernel also takes per-branch phases t_I (radians): branch I carries
amplitude c_I e^{i t_I}, which adds t_J - t_I to the phase of each pair.
With all phases zero this is the plain signed sum.
"""

import math

import numpy as np
from numba import njit

# exp() of anything below this is exactly 0.0 in double precision
UNDERFLOW_EXPONENT = -745.0
INV_PI_QUARTER = math.pi ** -0.25


@njit(cache=True, nogil=True)
def gram_real_rows(signs, centers, phases, prune_below):
    """Rows r_I such that sum_I r_I = sum_{I,J} c_I c_J Re(e^{i(t_J - t_I)} <Z_I|Z_J>)."""
    n = centers.shape[0]
    rows = np.empty(n)
    for i in range(n):
        ar = centers[i].real
        ai = centers[i].imag
        acc = 0.0
        comp = 0.0
        for j in range(i + 1, n):
            br = centers[j].real
            bi = centers[j].imag
            dr = ar - br
            di = ai - bi
            expo = -0.5 * (dr * dr + di * di)
            if expo < prune_below:
                continue
            term = signs[j] * math.exp(expo) * math.cos(ar * bi - ai * br + phases[j] - phases[i])
            y = term - comp
            t = acc + y
            comp = (t - acc) - y
            acc = t
        rows[i] = signs[i] * signs[i] + 2.0 * signs[i] * acc
    return rows


@njit(cache=True, nogil=True)
def gram_real_matrix(centers, phases):
    """Dense sign-free real Gram matrix Re(e^{i(t_J - t_I)} <Z_I|Z_J>)."""
    n = centers.shape[0]
    g = np.empty((n, n))
    for i in range(n):
        g[i, i] = 1.0
        ar = centers[i].real
        ai = centers[i].imag
        for j in range(i + 1, n):
            br = centers[j].real
            bi = centers[j].imag
            dr = ar - br
            di = ai - bi
            expo = -0.5 * (dr * dr + di * di)
            val = 0.0
            if expo > UNDERFLOW_EXPONENT:
                val = math.exp(expo) * math.cos(ar * bi - ai * br + phases[j] - phases[i])
            g[i, j] = val
            g[j, i] = val
    return g


@njit(cache=True, nogil=True, fastmath={"reassoc", "contract"})
def _row_dot(g, row, col0, signs):
    h = signs.shape[0]
    acc = 0.0
    for j in range(h):
        acc += g[row, col0 + j] * signs[j]
    return acc


@njit(cache=True, nogil=True)
def block_rows_from_matrix(g, signs):
    """Row partials of the three blocks of a child Gram matrix.

    ``g`` is the Gram matrix of the 2h child centers (first h from the "+"
    map, last h from the "-" map); ``signs`` are the h parent signs.
    Returns rows for A = c^T G++ c, B = c^T G-- c and X = c^T G+- c.
    """
    h = signs.shape[0]
    ra = np.empty(h)
    rb = np.empty(h)
    rx = np.empty(h)
    for i in range(h):
        ci = signs[i]
        ra[i] = ci * _row_dot(g, i, 0, signs)
        rb[i] = ci * _row_dot(g, h + i, h, signs)
        rx[i] = ci * _row_dot(g, i, h, signs)
    return ra, rb, rx


@njit(cache=True, nogil=True)
def block_rows_streaming(signs, zp, zm, tp, tm, prune_below):
    """Same quantities as :func:`block_rows_from_matrix` without a stored matrix."""
    h = signs.shape[0]
    ra = np.empty(h)
    rb = np.empty(h)
    rx = np.empty(h)
    for i in range(h):
        pr = zp[i].real
        pi_ = zp[i].imag
        mr = zm[i].real
        mi = zm[i].imag
        acc_a = 0.0
        cmp_a = 0.0
        acc_b = 0.0
        cmp_b = 0.0
        for j in range(i + 1, h):
            br = zp[j].real
            bi = zp[j].imag
            expo = -0.5 * ((pr - br) ** 2 + (pi_ - bi) ** 2)
            if expo >= prune_below:
                y = signs[j] * math.exp(expo) * math.cos(pr * bi - pi_ * br + tp[j] - tp[i]) - cmp_a
                t = acc_a + y
                cmp_a = (t - acc_a) - y
                acc_a = t
            br = zm[j].real
            bi = zm[j].imag
            expo = -0.5 * ((mr - br) ** 2 + (mi - bi) ** 2)
            if expo >= prune_below:
                y = signs[j] * math.exp(expo) * math.cos(mr * bi - mi * br + tm[j] - tm[i]) - cmp_b
                t = acc_b + y
                cmp_b = (t - acc_b) - y
                acc_b = t
        acc_x = 0.0
        cmp_x = 0.0
        for j in range(h):
            br = zm[j].real
            bi = zm[j].imag
            expo = -0.5 * ((pr - br) ** 2 + (pi_ - bi) ** 2)
            if expo >= prune_below:
                y = signs[j] * math.exp(expo) * math.cos(pr * bi - pi_ * br + tm[j] - tp[i]) - cmp_x
                t = acc_x + y
                cmp_x = (t - acc_x) - y
                acc_x = t
        ci = signs[i]
        ra[i] = ci * ci + 2.0 * ci * acc_a
        rb[i] = ci * ci + 2.0 * ci * acc_b
        rx[i] = ci * acc_x
    return ra, rb, rx


@njit(cache=True, nogil=True)
def cross_rows(signs1, centers1, phases1, signs2, centers2, phases2, prune_below):
    """Rows (real, imag) of sum_{I,J} c_I d_J e^{i(u_J - t_I)} <Z_I|Y_J>."""
    n1 = centers1.shape[0]
    n2 = centers2.shape[0]
    rre = np.empty(n1)
    rim = np.empty(n1)
    for i in range(n1):
        ar = centers1[i].real
        ai = centers1[i].imag
        acc_r = 0.0
        cmp_r = 0.0
        acc_i = 0.0
        cmp_i = 0.0
        for j in range(n2):
            br = centers2[j].real
            bi = centers2[j].imag
            expo = -0.5 * ((ar - br) ** 2 + (ai - bi) ** 2)
            if expo < prune_below:
                continue
            mag = signs2[j] * math.exp(expo)
            ph = ar * bi - ai * br + phases2[j] - phases1[i]
            y = mag * math.cos(ph) - cmp_r
            t = acc_r + y
            cmp_r = (t - acc_r) - y
            acc_r = t
            y = mag * math.sin(ph) - cmp_i
            t = acc_i + y
            cmp_i = (t - acc_i) - y
            acc_i = t
        rre[i] = signs1[i] * acc_r
        rim[i] = signs1[i] * acc_i
    return rre, rim


@njit(cache=True, nogil=True)
def number_rows(signs, centers, phases, prune_below):
    """Rows of sum_{I,J} c_I c_J Re(e^{i(t_J - t_I)} conj(Z_I) Z_J <Z_I|Z_J>)."""
    n = centers.shape[0]
    rows = np.empty(n)
    for i in range(n):
        ar = centers[i].real
        ai = centers[i].imag
        acc = 0.0
        comp = 0.0
        for j in range(i + 1, n):
            br = centers[j].real
            bi = centers[j].imag
            expo = -0.5 * ((ar - br) ** 2 + (ai - bi) ** 2)
            if expo < prune_below:
                continue
            ph = ar * bi - ai * br
            # conj(a) b = (ar br + ai bi) + i ph
            pre = ar * br + ai * bi
            tot = ph + phases[j] - phases[i]
            term = signs[j] * math.exp(expo) * (pre * math.cos(tot) - ph * math.sin(tot))
            y = term - comp
            t = acc + y
            comp = (t - acc) - y
            acc = t
        rows[i] = signs[i] * signs[i] * (ar * ar + ai * ai) + 2.0 * signs[i] * acc
    return rows


@njit(cache=True, nogil=True)
def position_amplitudes(signs, centers, phases, x0, dx, m, reach):
    """psi(x_k) = sum_I c_I e^{i t_I} <x_k|Z_I> on the grid x_k = x0 + k dx.

    Position in units of b; <x|z> = pi^(-1/4) exp(-(x - q)^2/2 + i p x - i Re z Im z)
    with q = sqrt2 Re z, p = sqrt2 Im z. Contributions beyond ``reach`` from
    the packet center are dropped.
    """
    psi = np.zeros(m, dtype=np.complex128)
    s2 = math.sqrt(2.0)
    for i in range(centers.shape[0]):
        zr = centers[i].real
        zi = centers[i].imag
        q = s2 * zr
        p = s2 * zi
        lo = int(math.floor((q - reach - x0) / dx))
        hi = int(math.ceil((q + reach - x0) / dx))
        if lo < 0:
            lo = 0
        if hi > m - 1:
            hi = m - 1
        c = signs[i] * INV_PI_QUARTER
        for k in range(lo, hi + 1):
            x = x0 + k * dx
            d = x - q
            ph = p * x - zr * zi + phases[i]
            mag = c * math.exp(-0.5 * d * d)
            psi[k] += complex(mag * math.cos(ph), mag * math.sin(ph))
    return psi
