"""Representation-space states on the mass shell.

A state of spin s is a list of terms (component index r, radial expression,
angular field of weight s - r).  Radial dependence is kept symbolic: every
term is a linear combination of monomials p^a (p0)^b times one common
Gaussian profile, a family closed under d/dp and under multiplication by
the powers the operators produce.  Only the final 1-d integrals are
numerical: after substituting x = p / (sqrt(2) eps mu) they reduce to
moments of exp(-x^2) against half-integer powers of (1 + 2 eps^2 x^2),
evaluated exactly via Gamma when the power is a non-negative integer and by
adaptive quadrature otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, gamma, pi, sqrt
from typing import Iterable

import numpy as np
from scipy.integrate import quad

from .sphere_harmonics import AngularField, SwshIndex

__all__ = [
    "GaussianProfile",
    "RadialExpr",
    "RadialIntegrals",
    "QState",
    "NonIntegrable",
    "com_state",
    "state_inner",
    "radial_integral",
    "gaussian_x_moment",
]

X_CUTOFF = 9.0  # exp(-81) ~ 6e-36: tail negligible at the 1e-12 target


class NonIntegrable(ValueError):
    """Radial integrand diverges at p = 0."""


def gaussian_x_moment(n: int) -> float:
    """Integral of x^n exp(-x^2) over [0, inf)."""
    return 0.5 * gamma((n + 1) / 2.0)


@dataclass(frozen=True)
class GaussianProfile:
    """Square root of a Gaussian on the mass shell, width eps, mass mu."""

    epsilon: float
    mu: float

    def __post_init__(self):
        if self.epsilon <= 0 or self.mu <= 0:
            raise ValueError("width and mass must be positive")

    def value(self, p):
        p = np.asarray(p, dtype=float)
        p0 = np.sqrt(self.mu**2 + p**2)
        return ((2.0 / pi) ** 0.25
                * np.sqrt(p0 / (self.epsilon**3 * self.mu**3))
                * np.exp(-0.25 * p**2 / (self.epsilon**2 * self.mu**2)))


@dataclass(frozen=True)
class RadialExpr:
    """Sum of c * p^a * (p0)^b monomials multiplying the common profile."""

    terms: tuple  # of (complex, int, int)

    @classmethod
    def monomial(cls, c=1.0, a: int = 0, b: int = 0) -> "RadialExpr":
        return cls(terms=((complex(c), int(a), int(b)),))

    def scaled(self, c) -> "RadialExpr":
        return RadialExpr(tuple((ci * c, a, b) for ci, a, b in self.terms))

    def shifted(self, da: int, db: int) -> "RadialExpr":
        return RadialExpr(tuple((c, a + da, b + db) for c, a, b in self.terms))

    def __add__(self, other: "RadialExpr") -> "RadialExpr":
        acc: dict[tuple, complex] = {}
        for c, a, b in self.terms + other.terms:
            acc[(a, b)] = acc.get((a, b), 0.0) + c
        return RadialExpr(tuple((c, a, b) for (a, b), c in sorted(acc.items())
                                if c != 0.0))

    def ddp(self, profile: GaussianProfile) -> "RadialExpr":
        """Exact derivative, using d(profile)/dp = p/2 (1/p0^2 - 1/(e m)^2) f."""
        em2 = (profile.epsilon * profile.mu) ** 2
        out = []
        for c, a, b in self.terms:
            if a != 0:
                out.append((c * a, a - 1, b))
            out.append((c * (b + 0.5), a + 1, b - 2))
            out.append((-c / (2.0 * em2), a + 1, b))
        return RadialExpr(tuple(out))

    def value(self, p, profile: GaussianProfile):
        p = np.asarray(p, dtype=float)
        p0 = np.sqrt(profile.mu**2 + p**2)
        acc = np.zeros_like(p, dtype=complex)
        for c, a, b in self.terms:
            acc = acc + c * p**a * p0**b
        return acc * profile.value(p)


class RadialIntegrals:
    """Memoized integrals I(A, B) = int p^A (p0)^B f^2 dp for one profile."""

    def __init__(self, profile: GaussianProfile, rel_tol: float = 1e-12):
        self.profile = profile
        self.rel_tol = rel_tol
        self._cache: dict[tuple, float] = {}

    def value(self, A: int, B: int) -> float:
        key = (A, B)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if A < 0:
            raise NonIntegrable(f"p-exponent {A} at the origin")
        eps, mu = self.profile.epsilon, self.profile.mu
        pref = (sqrt(2.0 / pi) * sqrt(2.0) ** (A + 1)
                * eps ** (A - 2) * mu ** (A + B - 1))
        c = B + 1  # (1 + 2 eps^2 x^2) ** (c/2)
        if c >= 0 and c % 2 == 0:
            k = c // 2
            val = sum(comb(k, i) * (2.0 * eps**2) ** i
                      * gaussian_x_moment(A + 2 * i) for i in range(k + 1))
        else:
            val, _ = quad(lambda x: x**A * (1.0 + 2.0 * eps**2 * x**2) ** (c / 2.0)
                          * np.exp(-x**2),
                          0.0, X_CUTOFF, epsabs=0.0, epsrel=self.rel_tol / 10.0,
                          limit=200)
        out = pref * val
        self._cache[key] = out
        return out


def radial_integral(terms: Iterable[tuple], epsilon: float, mu: float,
                    rel_tol: float = 1e-12) -> complex:
    """Integral of sum c p^A (p0)^B f_eps^2 over p; the measure factor is the
    caller's responsibility."""
    table = RadialIntegrals(GaussianProfile(epsilon, mu), rel_tol)
    return sum(c * table.value(A, B) for c, A, B in terms)


@dataclass
class QState:
    """Term-list state: spin, mass, profile and (r, radial, angular) terms."""

    s2: int
    mu: float
    profile: GaussianProfile
    terms: list  # of (r, RadialExpr, AngularField)
    hbar: float = 1.0
    lmax2: int = 0  # band-limit budget, 2*(s + margin)

    def __post_init__(self):
        for r, _, ang in self.terms:
            if not 0 <= r <= self.s2:
                raise ValueError(f"component index {r} out of range")
            if ang.sigma2 != self.s2 - 2 * r:
                raise ValueError("angular weight inconsistent with component")
        if self.lmax2 == 0:
            self.lmax2 = self.s2 + 16

    @property
    def s(self) -> float:
        return self.s2 / 2.0


def com_state(s: float, m: float, mu: float, epsilon: float,
              chirality: str = "symmetric", hbar: float = 1.0,
              l_margin: int = 8) -> QState:
    """Co-moving centre-of-mass state of spin s and order m.

    "plus" puts the profile on the top component with a weight -s harmonic,
    "minus" on the bottom with weight +s, "symmetric" is their normalized
    sum (the combination whose momentum points along the time axis).
    """
    s2 = int(round(2 * s))
    m2 = int(round(2 * m))
    if abs(m2) > s2 or (s2 - m2) % 2:
        raise ValueError(f"invalid spin/order pair ({s}, {m})")
    prof = GaussianProfile(epsilon, mu)
    lmax2 = s2 + 2 * l_margin
    plus = (s2, RadialExpr.monomial(1.0),
            AngularField(sigma2=-s2, coeffs={(s2, m2): 1.0 + 0j}))
    minus = (0, RadialExpr.monomial((-1.0) ** s2),
             AngularField(sigma2=s2, coeffs={(s2, m2): 1.0 + 0j}))
    if chirality == "plus":
        terms = [plus]
    elif chirality == "minus":
        terms = [minus]
    elif chirality == "symmetric":
        terms = [(r, expr.scaled(1.0 / sqrt(2.0)), ang)
                 for r, expr, ang in (plus, minus)]
    else:
        raise ValueError(f"unknown chirality: {chirality}")
    return QState(s2=s2, mu=mu, profile=prof, terms=terms, hbar=hbar,
                  lmax2=lmax2)


def state_inner(phi: QState, psi: QState) -> complex:
    """L2 scalar product on the mass shell.

    Angular factors pair through harmonic orthonormality, radial factors
    through the memoized profile integrals with the p^2/p0 measure.
    """
    from . import _engine

    if (phi.s2, phi.mu) != (psi.s2, psi.mu):
        raise ValueError("states live in different representations")
    return _engine.CoeffBackend.for_state(phi).inner(
        _engine.pack_qstate(phi), _engine.pack_qstate(psi))
