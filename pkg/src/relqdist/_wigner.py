"""Theta-dependence of spin-weighted harmonics on the unit sphere.

Half-integer labels are carried as doubled integers (``j2 = 2j`` etc.)
throughout.  A harmonic with weight ``sigma`` factorizes as

    Y(theta, phi) = phase(sigma, j, m) * R_{j,m}(theta) * exp(i (m+sigma) phi)

with real R.  R is built by upward three-term recursion in j (the
multiplication rule for cos(theta), stable in the increasing-j direction)
from a single-term closed-form seed at j = max(|m|, |sigma|) evaluated in
log space.  A direct evaluation of the defining symmetrized spinor
contraction is kept as an oracle for low degrees.
"""

from __future__ import annotations

from math import comb, lgamma, pi, sqrt

import numpy as np

_PHASE_I = (1.0, 1.0j, -1.0, -1.0j)


def phase(sigma2: int, j2: int, m2: int) -> complex:
    """Constant phase relating R_{j,m} e^{i(m+sigma)phi} to the harmonic.

    Independent of j along fixed (sigma, m) ladders, which keeps the
    recursion real.
    """
    e = (j2 - sigma2) // 2 + m2
    return (-1.0) ** (e & 1) * _PHASE_I[j2 % 4]


def _seed_log(sigma2: int, j2: int, m2: int, cos_half, sin_half):
    """R_{j,m}(theta) at j = max(|m|,|sigma|) where the defining sum has a
    single term; evaluated via lgamma to avoid overflow."""
    j, m, s = j2 / 2.0, m2 / 2.0, sigma2 / 2.0
    # single-k term of the d-function sum; k fixed by the degenerate label
    k_lo = max(0, (sigma2 - m2) // 2)
    k_hi = min((j2 + sigma2) // 2, (j2 - m2) // 2)
    if k_lo != k_hi:
        raise ValueError("seed requires j = max(|m|, |sigma|)")
    k = k_lo
    ln_norm = 0.5 * (lgamma(j + m + 1) + lgamma(j - m + 1)
                     + lgamma(j + s + 1) + lgamma(j - s + 1))
    ln_den = (lgamma(j + s - k + 1) + lgamma(k + 1)
              + lgamma(j - m - k + 1) + lgamma(m - s + k + 1))
    sign = (-1.0) ** ((m2 - sigma2) // 2 + k)
    e_c = j2 + (sigma2 - m2) // 2 - 2 * k  # exponent of cos(theta/2)
    e_s = (m2 - sigma2) // 2 + 2 * k       # exponent of sin(theta/2)
    ln_mag = (ln_norm - ln_den + 0.5 * np.log((j2 + 1) / (4.0 * pi))
              + e_c * np.log(cos_half) + e_s * np.log(sin_half))
    return sign * np.exp(ln_mag)


def _cos_coupling(sigma2: int, j2: int, m2):
    """Coefficients (A, B, C) of cos(theta) * Y_{j,m} in Y_{j+1,m}, Y_{j,m},
    Y_{j-1,m}; these are the z-direction matrix elements of the unit
    momentum direction."""
    j = j2 / 2.0
    m = np.asarray(m2, dtype=float) / 2.0
    s = sigma2 / 2.0
    A = (np.sqrt((j + s + 1) * (j - s + 1) * (j + m + 1) * (j - m + 1)
                 / ((j2 + 1.0) * (j2 + 3.0)))) / (j + 1)
    if j2 == 0:
        B = np.zeros_like(m)
        C = np.zeros_like(m)
    else:
        B = m * s / (j * (j + 1))
        num = np.maximum((j + s) * (j - s) * (j + m) * (j - m), 0.0)
        den = (j2 - 1.0) * (j2 + 1.0)
        C = np.sqrt(num / den) / j if den > 0 else np.zeros_like(m)
    return A, B, C


class ThetaTable:
    """Dense table R[j_idx, m_idx, node] for one spin weight.

    m_idx runs over m2 = -lmax2 .. lmax2 in steps of two; entries with
    |m| > j are zero.
    """

    def __init__(self, sigma2: int, lmax2: int, x_nodes: np.ndarray):
        if (lmax2 - sigma2) % 2 != 0:
            raise ValueError("lmax2 and sigma2 must have equal parity")
        if lmax2 < abs(sigma2):
            raise ValueError("band limit below |sigma|")
        self.sigma2 = sigma2
        self.lmax2 = lmax2
        x = np.asarray(x_nodes, dtype=float)
        self.x = x
        cos_half = np.sqrt((1.0 + x) / 2.0)
        sin_half = np.sqrt((1.0 - x) / 2.0)
        sabs = abs(sigma2)
        j2_vals = list(range(sabs, lmax2 + 1, 2))
        self.j2_vals = j2_vals
        n_m = lmax2 + 1
        self.m2_vals = np.arange(-lmax2, lmax2 + 1, 2)
        table = np.zeros((len(j2_vals), n_m, x.size))
        for ji, j2 in enumerate(j2_vals):
            # seed the fresh |m| = j columns (all |m| <= j at the first j)
            if ji == 0:
                seed_m2 = range(-j2, j2 + 1, 2)
            else:
                seed_m2 = (-j2, j2) if j2 > 0 else (0,)
            for m2 in seed_m2:
                table[ji, self._mi(m2)] = _seed_log(sigma2, j2, m2,
                                                    cos_half, sin_half)
            if ji + 1 < len(j2_vals):
                # recursion j -> j+1 for every |m| <= j
                m2s = np.arange(-j2, j2 + 1, 2)
                if m2s.size:
                    A, B, C = _cos_coupling(sigma2, j2, m2s)
                    idx = [self._mi(m2) for m2 in m2s]
                    cur = table[ji, idx]
                    prev = table[ji - 1, idx] if ji > 0 else np.zeros_like(cur)
                    table[ji + 1, idx] = ((x[None, :] - B[:, None]) * cur
                                          - C[:, None] * prev) / A[:, None]
        self.table = table

    def _mi(self, m2: int) -> int:
        return (m2 + self.lmax2) // 2

    def values(self, j2: int, m2: int) -> np.ndarray:
        """R_{j,m} at the construction nodes."""
        if abs(m2) > j2 or j2 > self.lmax2 or j2 < abs(self.sigma2):
            raise ValueError(f"label out of range: 2j={j2}, 2m={m2}")
        ji = (j2 - abs(self.sigma2)) // 2
        return self.table[ji, self._mi(m2)]


def dyad_direct(sigma2: int, j2: int, m2: int, zeta: np.ndarray) -> np.ndarray:
    """Harmonic via the defining symmetrized dyad contraction.

    Exact but combinatorial; intended as an oracle for small j.  ``zeta`` is
    the stereographic coordinate e^{i phi} cot(theta/2).
    """
    if abs(m2) > j2 or abs(sigma2) > j2 or (j2 - m2) % 2 or (j2 - sigma2) % 2:
        raise ValueError("invalid harmonic labels")
    zeta = np.asarray(zeta, dtype=complex)
    rt = 1.0 / np.sqrt(1.0 + np.abs(zeta) ** 2)
    a = -1j * rt                 # O_A otilde^A
    b = 1j * np.conj(zeta) * rt  # O_A itilde^A
    c = 1j * zeta * rt           # I_A otilde^A
    d = 1j * rt                  # I_A itilde^A
    p = (j2 - m2) // 2
    q = (j2 + m2) // 2
    u = (j2 + sigma2) // 2
    w = (j2 - sigma2) // 2
    total = np.zeros_like(zeta)
    for k in range(max(0, p - w), min(p, u) + 1):
        total = total + (comb(u, k) * comb(w, p - k)
                         * a ** k * b ** (p - k) * c ** (u - k)
                         * d ** (q - u + k))
    j = j2 / 2.0
    norm = ((-1.0) ** ((j2 + m2) // 2)
            * sqrt((j2 + 1) / (4.0 * pi))
            * np.exp(lgamma(j2 + 1)
                     - 0.5 * (lgamma(p + 1) + lgamma(q + 1)
                              + lgamma(u + 1) + lgamma(w + 1))))
    # the symmetrization prefactor p! q! / (2j)! folds into the norm
    pref = np.exp(lgamma(p + 1) + lgamma(q + 1) - lgamma(j2 + 1))
    return norm * pref * total
