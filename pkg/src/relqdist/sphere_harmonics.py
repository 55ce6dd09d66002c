"""Mass-shell geometry and spin-weighted harmonic analysis.

The momentum mass shell is foliated by spheres of radius p.  Functions on
one sphere are expanded in spin-weighted harmonics; the band-limit-exact
quadrature uses Gauss-Legendre nodes in cos(theta) and a uniform phi grid.
All half-integer labels are doubled integers (sigma2 = 2*sigma, ...).

The closed-form coupling coefficients of the unit direction components
n^i = p^i / p (the only machinery the operator engine needs besides the
diagonal edth relations) live here next to the public ``matrix_elements``
so that a single source feeds both.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi, sqrt
from typing import Optional

import numpy as np

from ._wigner import ThetaTable, dyad_direct, phase

__all__ = [
    "SphereGrid",
    "SwshIndex",
    "AngularField",
    "NPTetrad",
    "SpinorDyad",
    "BandLimitError",
    "eval_swsh",
    "analyze",
    "synthesize",
    "edth",
    "edth_prime",
    "matrix_elements",
    "tetrad_and_dyad",
]


class BandLimitError(ValueError):
    """A requested degree exceeds the grid's exact band limit."""


@dataclass(frozen=True)
class SwshIndex:
    """Doubled labels (2*sigma, 2*j, 2*m) of one harmonic."""

    sigma2: int
    j2: int
    m2: int

    def __post_init__(self):
        if self.j2 < abs(self.sigma2) or abs(self.m2) > self.j2:
            raise ValueError(f"invalid harmonic labels {self}")
        if (self.j2 - self.sigma2) % 2 or (self.j2 - self.m2) % 2:
            raise ValueError(f"labels of mixed parity {self}")

    @classmethod
    def of(cls, sigma: float, j: float, m: float) -> "SwshIndex":
        return cls(int(round(2 * sigma)), int(round(2 * j)), int(round(2 * m)))


class SphereGrid:
    """Quadrature grid exact for products of harmonics up to degree l_max.

    Gauss-Legendre nodes in x = cos(theta) (poles excluded) and a uniform
    phi grid; the phi count resolves every integer frequency difference
    occurring in such products.
    """

    def __init__(self, l_max: float, n_theta: Optional[int] = None,
                 n_phi: Optional[int] = None):
        lmax2 = int(round(2 * l_max))
        if lmax2 < 0:
            raise ValueError("band limit must be non-negative")
        self.lmax2 = lmax2
        lc = (lmax2 + 1) // 2  # ceil(l_max)
        self.n_theta = n_theta if n_theta is not None else lc + 2
        self.n_phi = n_phi if n_phi is not None else 2 * lc + 5
        if self.n_theta < lc + 1 or self.n_phi < 2 * lc + 1:
            raise ValueError("grid too small for this band limit")
        x, w = np.polynomial.legendre.leggauss(self.n_theta)
        order = np.argsort(-x)  # theta increasing
        self.x = x[order]
        self.w_theta = w[order]
        self.theta = np.arccos(self.x)
        self.phi = 2.0 * pi * np.arange(self.n_phi) / self.n_phi
        self.zeta = (np.exp(1j * self.phi)[None, :]
                     / np.tan(self.theta / 2.0)[:, None])
        self.weights = self.w_theta[:, None] * (2.0 * pi / self.n_phi) \
            * np.ones((1, self.n_phi))
        self._theta_tables: dict[int, ThetaTable] = {}

    @property
    def l_max(self) -> float:
        return self.lmax2 / 2.0

    def theta_table(self, sigma2: int) -> ThetaTable:
        tab = self._theta_tables.get(sigma2)
        if tab is None:
            tab = ThetaTable(sigma2, self.lmax2 - (self.lmax2 - sigma2) % 2,
                             self.x)
            self._theta_tables[sigma2] = tab
        return tab

    def integrate(self, values: np.ndarray) -> complex:
        return complex(np.sum(self.weights * values))


@dataclass
class AngularField:
    """Spin-weighted function, in grid samples or harmonic coefficients."""

    sigma2: int
    grid: Optional[SphereGrid] = None
    values: Optional[np.ndarray] = None
    coeffs: Optional[dict] = None  # (j2, m2) -> complex

    def __post_init__(self):
        if (self.values is None) == (self.coeffs is None):
            raise ValueError("provide exactly one of values, coeffs")
        if self.values is not None and self.grid is None:
            raise ValueError("grid samples need their grid")

    @property
    def is_grid(self) -> bool:
        return self.values is not None

    def band_limit2(self) -> int:
        if self.coeffs is not None:
            return max((j2 for (j2, _) in self.coeffs), default=abs(self.sigma2))
        return self.grid.lmax2


def eval_swsh(idx: SwshIndex, grid: SphereGrid) -> AngularField:
    """Samples of one harmonic on the grid."""
    if idx.j2 > grid.lmax2:
        raise BandLimitError(f"2j={idx.j2} exceeds grid limit {grid.lmax2}")
    tab = grid.theta_table(idx.sigma2)
    r = tab.values(idx.j2, idx.m2)
    q = (idx.m2 + idx.sigma2) // 2
    vals = (phase(idx.sigma2, idx.j2, idx.m2)
            * r[:, None] * np.exp(1j * q * grid.phi)[None, :])
    return AngularField(sigma2=idx.sigma2, grid=grid, values=vals)


def eval_swsh_direct(idx: SwshIndex, grid: SphereGrid) -> AngularField:
    """Same harmonic through the defining dyad contraction (low-j oracle)."""
    return AngularField(sigma2=idx.sigma2, grid=grid,
                        values=dyad_direct(idx.sigma2, idx.j2, idx.m2,
                                           grid.zeta))


def analyze(f: AngularField) -> AngularField:
    """Project grid samples onto the harmonic basis of the same weight."""
    if not f.is_grid:
        return f
    grid = f.grid
    sig2 = f.sigma2
    F = np.fft.fft(f.values, axis=1)
    tab = grid.theta_table(sig2)
    wt = grid.w_theta
    coeffs: dict[tuple, complex] = {}
    pref = 2.0 * pi / grid.n_phi
    for j2 in tab.j2_vals:
        for m2 in range(-j2, j2 + 1, 2):
            q = (m2 + sig2) // 2
            col = F[:, q % grid.n_phi]
            val = pref * np.conj(phase(sig2, j2, m2)) * np.dot(
                wt * tab.values(j2, m2), col)
            if abs(val) > 0.0:
                coeffs[(j2, m2)] = complex(val)
    return AngularField(sigma2=sig2, coeffs=coeffs)


def synthesize(f: AngularField, grid: SphereGrid) -> AngularField:
    """Grid samples of a coefficient-form field."""
    if f.is_grid:
        return f
    sig2 = f.sigma2
    tab = grid.theta_table(sig2)
    G = np.zeros((grid.n_theta, grid.n_phi), dtype=complex)
    for (j2, m2), c in f.coeffs.items():
        if j2 > grid.lmax2:
            raise BandLimitError(f"2j={j2} exceeds grid limit {grid.lmax2}")
        q = (m2 + sig2) // 2
        G[:, q % grid.n_phi] += c * phase(sig2, j2, m2) * tab.values(j2, m2)
    vals = np.fft.ifft(G * grid.n_phi, axis=1)
    return AngularField(sigma2=sig2, grid=grid, values=vals)


def edth_factor(sigma2: int, j2: int) -> float:
    """Unit-sphere coefficient in edth Y = factor * Y(weight+1)."""
    j = j2 / 2.0
    s = sigma2 / 2.0
    return -sqrt(max((j + s + 1) * (j - s), 0.0)) / sqrt(2.0)


def edth_prime_factor(sigma2: int, j2: int) -> float:
    j = j2 / 2.0
    s = sigma2 / 2.0
    return sqrt(max((j - s + 1) * (j + s), 0.0)) / sqrt(2.0)


def _edth_apply(f: AngularField, p: float, raise_weight: bool) -> AngularField:
    if f.is_grid:
        f = analyze(f)
    out: dict[tuple, complex] = {}
    for (j2, m2), c in f.coeffs.items():
        fac = (edth_factor(f.sigma2, j2) if raise_weight
               else edth_prime_factor(f.sigma2, j2))
        if fac != 0.0:
            out[(j2, m2)] = c * fac / p
    return AngularField(sigma2=f.sigma2 + (2 if raise_weight else -2),
                        coeffs=out)


def edth(f: AngularField, p: float) -> AngularField:
    """Edth on the sphere of radius p, exactly in coefficient space."""
    return _edth_apply(f, p, True)


def edth_prime(f: AngularField, p: float) -> AngularField:
    return _edth_apply(f, p, False)


# ----------------------------------------------------------------------
# closed-form couplings of the unit direction components n^i = p^i / p
# ----------------------------------------------------------------------

def couple_n(i: int, sigma2, j2, m2):
    """Branches of multiplication by n^i in the harmonic basis.

    Returns a list of (dj2, dm2, factor) with vectorized factors; the
    coefficient of Y_{j+dj, m+dm} in n^i * Y_{j,m}.  Entries whose target
    labels are out of range come out as exact zeros.
    """
    j = np.asarray(j2, dtype=float) / 2.0
    m = np.asarray(m2, dtype=float) / 2.0
    s = np.asarray(sigma2, dtype=float) / 2.0
    jj1 = np.where(j > 0, j * (j + 1), 1.0)
    f_up = np.sqrt((j + s + 1) * (j - s + 1)
                   / ((2 * j + 1) * (2 * j + 3))) / (2 * (j + 1))
    f_mid = np.where(j > 0, s / (2 * jj1), 0.0)
    f_dn = np.where(
        j > 0,
        np.sqrt(np.maximum((j + s) * (j - s), 0.0)
                / np.maximum((2 * j - 1) * (2 * j + 1), 1.0)) / np.maximum(2 * j, 1.0),
        0.0)

    def rad(expr):
        return np.sqrt(np.maximum(expr, 0.0))

    if i == 3:
        up = 2 * f_up * rad((j + m + 1) * (j - m + 1))
        mid = np.where(j > 0, m * s / jj1, 0.0)
        dn = 2 * f_dn * rad((j + m) * (j - m))
        return [(2, 0, up), (0, 0, mid), (-2, 0, dn)]

    a_up_mm = rad((j - m + 1) * (j - m + 2))   # dm = -1 at j+1
    a_up_mp = rad((j + m + 1) * (j + m + 2))   # dm = +1 at j+1
    a_mid_mm = rad((j + m) * (j - m + 1))
    a_mid_mp = rad((j - m) * (j + m + 1))
    a_dn_mm = rad((j + m) * (j + m - 1))
    a_dn_mp = rad((j - m) * (j - m - 1))
    if i == 1:
        return [(2, -2, f_up * a_up_mm), (2, 2, -f_up * a_up_mp),
                (0, -2, f_mid * a_mid_mm), (0, 2, f_mid * a_mid_mp),
                (-2, -2, -f_dn * a_dn_mm), (-2, 2, f_dn * a_dn_mp)]
    if i == 2:
        return [(2, -2, 1j * f_up * a_up_mm), (2, 2, 1j * f_up * a_up_mp),
                (0, -2, 1j * f_mid * a_mid_mm), (0, 2, -1j * f_mid * a_mid_mp),
                (-2, -2, -1j * f_dn * a_dn_mm), (-2, 2, -1j * f_dn * a_dn_mp)]
    raise ValueError(f"no such direction component: {i}")


def couple_m(i: int, sigma2, j2, m2):
    """Branches of multiplication by the null-vector component m^i.

    Follows from m^i being the weight-raising derivative of n^i: the
    product rule gives factor(m^i) = edth_after * n - n * edth_before,
    with the edth factors evaluated при the coupled degrees.  Weight goes
    up by one; degree and order shifts mirror the n couplings.
    """
    j = np.asarray(j2, dtype=float) / 2.0
    s = np.asarray(sigma2, dtype=float) / 2.0
    e_before = -np.sqrt(np.maximum((j + s + 1) * (j - s), 0.0) / 2.0)
    raised = {(dj2, dm2): fb
              for dj2, dm2, fb in couple_n(i, sigma2 + 2, j2, m2)}
    out = []
    for dj2, dm2, f in couple_n(i, sigma2, j2, m2):
        jt = j + dj2 / 2.0
        e_after = -np.sqrt(np.maximum((jt + s + 1) * (jt - s), 0.0) / 2.0)
        fac = e_after * f - e_before * raised[(dj2, dm2)]
        out.append((dj2, dm2, fac))
    return out


def couple_mbar(i: int, sigma2, j2, m2):
    """Multiplication by the conjugate null component; weight drops."""
    j = np.asarray(j2, dtype=float) / 2.0
    s = np.asarray(sigma2, dtype=float) / 2.0
    e_before = np.sqrt(np.maximum((j - s + 1) * (j + s), 0.0) / 2.0)
    lowered = {(dj2, dm2): fb
               for dj2, dm2, fb in couple_n(i, sigma2 - 2, j2, m2)}
    out = []
    for dj2, dm2, f in couple_n(i, sigma2, j2, m2):
        jt = j + dj2 / 2.0
        e_after = np.sqrt(np.maximum((jt - s + 1) * (jt + s), 0.0) / 2.0)
        fac = e_after * f - e_before * lowered[(dj2, dm2)]
        out.append((dj2, dm2, fac))
    return out


def _pp_diagonal(kind: str, sigma2: int, j2: int, m2: int) -> float:
    """<Y|n^i n^i|Y> at equal labels; regular limits at 2j <= 1."""
    if j2 <= 1:
        return 1.0 / 3.0
    j = j2 / 2.0
    m = m2 / 2.0
    s = sigma2 / 2.0
    den = j * (j + 1) * (2 * j - 1) * (2 * j + 3)
    if kind == "33":
        num = (6 * s * s * m * m - 2 * j * (j + 1) * (s * s + m * m)
               + j * (j + 1) * (2 * j * j + 2 * j - 1))
    else:
        num = (-3 * s * s * m * m + j * (j + 1) * (s * s + m * m)
               + j * (j + 1) * (j * j + j - 1))
    return num / den


def n3_power_diagonal(sigma2: int, j2: int, m2: int, power: int) -> float:
    """Exact <Y_{j,m}|(n^3)^power|Y_{j,m}> by chaining the coupling rule."""
    vec = {(j2, m2): 1.0}
    for _ in range(power):
        nxt: dict[tuple, float] = {}
        for (jj2, mm2), c in vec.items():
            for dj2, dm2, fac in couple_n(3, sigma2, jj2, mm2):
                t2 = jj2 + dj2
                f = float(fac)
                if f == 0.0 or t2 < abs(sigma2) or abs(mm2) > t2:
                    continue
                nxt[(t2, mm2)] = nxt.get((t2, mm2), 0.0) + c * f
        vec = nxt
    return vec.get((j2, m2), 0.0)


def matrix_elements(kind: str, sigma: float, kn: tuple, jm: tuple,
                    p: float) -> complex:
    """Closed-form momentum matrix elements between harmonics of one weight.

    ``kn`` and ``jm`` are (degree, order) pairs of the bra and ket.  Kinds:
    "p0"; "p1", "p2", "p3"; diagonal quadratics "p1p1", "p2p2", "p3p3";
    cubic diagonals "p1p1p3", "p2p2p3", "p3p3p3" (extremal weight only);
    "p3p3p3p3" (exact) and "p3p3p3p3_leading" (large-spin form, top order);
    "mmbar_sym_ij" / "mmbar_anti_ij" for the null-vector products.
    """
    sigma2 = int(round(2 * sigma))
    k2, n2 = int(round(2 * kn[0])), int(round(2 * kn[1]))
    j2, m2 = int(round(2 * jm[0])), int(round(2 * jm[1]))
    SwshIndex(sigma2, j2, m2)
    SwshIndex(sigma2, k2, n2)
    j = j2 / 2.0
    m = m2 / 2.0
    if kind == "p0":
        return 1.0 + 0j if (k2, n2) == (j2, m2) else 0.0 + 0j

    if kind in ("p1", "p2", "p3"):
        i = int(kind[1])
        for dj2, dm2, fac in couple_n(i, sigma2, j2, m2):
            if (j2 + dj2, m2 + dm2) == (k2, n2):
                return complex(fac) * p
        return 0.0 + 0j

    if kind in ("p1p1", "p2p2", "p3p3"):
        if (k2, n2) != (j2, m2):
            raise ValueError("quadratic diagonals require equal labels")
        return _pp_diagonal("33" if kind == "p3p3" else "11",
                            sigma2, j2, m2) * p * p + 0j

    if kind in ("p1p1p3", "p2p2p3", "p3p3p3"):
        if abs(sigma2) != j2 or (k2, n2) != (j2, m2):
            raise ValueError("cubic closed forms hold at extremal weight, "
                             "equal labels")
        s = j
        sign = 1.0 if sigma2 > 0 else -1.0
        den = (s + 1) * (s + 2) * (2 * s + 3)
        if kind == "p3p3p3":
            val = m * (3 * s + 4 + 2 * m * m) / den
        else:
            val = m * ((s + 1) ** 2 - m * m) / den
        return sign * val * p**3 + 0j

    if kind == "p3p3p3p3":
        if (k2, n2) != (j2, m2):
            raise ValueError("quartic diagonal requires equal labels")
        return n3_power_diagonal(sigma2, j2, m2, 4) * p**4 + 0j

    if kind == "p3p3p3p3_leading":
        if abs(sigma2) != j2 or m2 != j2 or (k2, n2) != (j2, m2):
            raise ValueError("large-spin form holds at top order, extremal "
                             "weight")
        s = j
        return (p * s / (s + 1)) ** 4 + 0j

    if kind.startswith("mmbar_sym_") or kind.startswith("mmbar_anti_"):
        if (k2, n2) != (j2, m2):
            raise ValueError("null-product closed forms require equal labels")
        i1, i2 = int(kind[-2]), int(kind[-1])
        if kind.startswith("mmbar_sym_"):
            if i1 != i2:
                return 0.0 + 0j
            kk = "33" if i1 == 3 else "11"
            return 0.5 - 0.5 * _pp_diagonal(kk, sigma2, j2, m2) + 0j
        anti = 0.0 + 0j
        if (i1, i2) == (1, 2):
            anti = 0.5j * (sigma / (j * (j + 1))) * m if j2 > 0 else 0.0
        elif (i1, i2) == (2, 1):
            anti = -0.5j * (sigma / (j * (j + 1))) * m if j2 > 0 else 0.0
        return anti

    raise ValueError(f"unknown matrix element kind: {kind}")


# ----------------------------------------------------------------------
# null tetrad and spinor dyad on the mass shell
# ----------------------------------------------------------------------

@dataclass
class NPTetrad:
    """Cartesian components of {p, v, m, mbar} at the grid nodes."""

    mu: float
    p_radial: float
    p: np.ndarray      # (4, n_theta, n_phi)
    v: np.ndarray
    m: np.ndarray
    mbar: np.ndarray


@dataclass
class SpinorDyad:
    """Boosted dyad (o, iota) and its unboosted companion at the nodes."""

    o: np.ndarray          # (2, n_theta, n_phi)
    iota: np.ndarray
    o_flat: np.ndarray
    iota_flat: np.ndarray


def direction_components(zeta: np.ndarray):
    """Unit direction n^i of the momentum as functions of zeta."""
    den = 1.0 + zeta * np.conj(zeta)
    n1 = (zeta + np.conj(zeta)) / den
    n2 = 1j * (np.conj(zeta) - zeta) / den
    n3 = (zeta * np.conj(zeta) - 1.0) / den
    return np.real(n1), np.real(n2), np.real(n3)


def m_components(zeta: np.ndarray):
    """Complex null vector m^a tangent to the momentum spheres."""
    den = 1.0 + zeta * np.conj(zeta)
    m1 = (1.0 - zeta**2) / den / sqrt(2.0)
    m2 = 1j * (1.0 + zeta**2) / den / sqrt(2.0)
    m3 = 2.0 * zeta / den / sqrt(2.0)
    return m1, m2, m3


def dyad_at(mu: float, p: float, zeta: np.ndarray):
    """Boosted dyad (o^A, iota^A) at given radius and stereographic point."""
    p0 = sqrt(mu**2 + p**2)
    rt = 1.0 / np.sqrt(1.0 + zeta * np.conj(zeta))
    bo = sqrt((p0 + p) / mu)
    o = -1j * bo * rt * np.stack([zeta, np.ones_like(zeta)])
    iota = (-1j / bo) * rt * np.stack([np.ones_like(zeta), -np.conj(zeta)])
    return o, iota


def tetrad_and_dyad(grid: SphereGrid, mu: float, p: float):
    """Tetrad and dyad fields adapted to the sphere of radius p."""
    if mu <= 0 or p < 0:
        raise ValueError("need mu > 0 and p >= 0")
    z = grid.zeta
    p0 = sqrt(mu**2 + p**2)
    n1, n2, n3 = direction_components(z)
    ones = np.ones_like(n1)
    pvec = np.stack([p0 * ones, p * n1, p * n2, p * n3]).astype(complex)
    vvec = np.stack([(p / mu) * ones, (p0 / mu) * n1, (p0 / mu) * n2,
                     (p0 / mu) * n3]).astype(complex)
    m1, m2, m3 = m_components(z)
    mvec = np.stack([np.zeros_like(m1), m1, m2, m3])
    o, iota = dyad_at(mu, p, z)
    rt = 1.0 / np.sqrt(1.0 + z * np.conj(z))
    o_flat = -1j * rt * np.stack([z, np.ones_like(z)])
    iota_flat = -1j * rt * np.stack([np.ones_like(z), -np.conj(z)])
    tet = NPTetrad(mu=mu, p_radial=p, p=pvec, v=vvec, m=mvec,
                   mbar=np.conj(mvec))
    dyad = SpinorDyad(o=o, iota=iota, o_flat=o_flat, iota_flat=iota_flat)
    return tet, dyad
