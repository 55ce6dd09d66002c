"""Classical Poincare-invariant systems and distances between world lines.

A system is the pair (p, J) of a future-timelike momentum and an
antisymmetric angular-momentum tensor.  Derived observables (mass, spin
vector, mass moment) localize the system to a timelike straight line, and
the spatial separation of two such lines is expressible through invariants
of the pair of systems alone.  A direct closest-approach solver provides an
independent geometric check for that expression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_kernel import (
    ETA_DIAG,
    LorentzTransform,
    PoincareTransform,
    boost_to,
    _EPS,
)

PARALLEL_TOL = 1e-12

__all__ = [
    "ClassicalSystem",
    "TimelikeLine",
    "ParallelMomenta",
    "ParallelTangents",
    "NullSeparation",
    "spin_and_moment",
    "line_from_system",
    "system_from_line",
    "pair_invariants",
    "relative_position",
    "lorentz_distance",
    "closest_approach_oracle",
    "realize_point_distance",
    "transform_system",
    "transform_line",
]


class ParallelMomenta(ValueError):
    pass


class ParallelTangents(ValueError):
    pass


class NullSeparation(ValueError):
    pass


def _dot(u, v):
    return float(np.dot(u, ETA_DIAG * v))


@dataclass(frozen=True)
class ClassicalSystem:
    """Momentum/angular-momentum pair with p timelike and future pointing."""

    p: np.ndarray
    J: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        J = np.asarray(self.J, dtype=float)
        if _dot(p, p) <= 0 or p[0] <= 0:
            raise ValueError("momentum must be future timelike")
        if np.max(np.abs(J + J.T)) > 1e-10 * (1.0 + np.max(np.abs(J))):
            raise ValueError("J must be antisymmetric")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "J", 0.5 * (J - J.T))

    @property
    def mu(self) -> float:
        return np.sqrt(_dot(self.p, self.p))


@dataclass(frozen=True)
class TimelikeLine:
    """Line gamma(u) = Lambda gamma0(u) + xi with gamma0(u) = u*delta_0."""

    boost: LorentzTransform
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation",
                           np.asarray(self.translation, dtype=float))

    @property
    def tangent(self) -> np.ndarray:
        """Unit tangent u^a = Lambda^a_0."""
        return self.boost.matrix[:, 0].copy()

    def point(self, u: float) -> np.ndarray:
        return u * self.tangent + self.translation


def spin_and_moment(sys: ClassicalSystem):
    """Spin vector S_a = eps_abcd J^bc p^d / 2, moment M_a = J_ab p^b.

    Returns upper-index (S^a, M^a) and the max-norm residual of the
    spin/orbital decomposition identity, which vanishes for mu > 0.
    """
    p, J = sys.p, sys.J
    p_lo = ETA_DIAG * p
    J_lo = np.einsum("a,b,ab->ab", ETA_DIAG, ETA_DIAG, J)
    S_lo = 0.5 * np.einsum("abcd,bc,d->a", _EPS, J, p)
    M_lo = J_lo @ p
    S = ETA_DIAG * S_lo
    M = ETA_DIAG * M_lo
    mu2 = _dot(p, p)
    # identity: mu^2 J_ab = -eps_abcd S^c p^d + M_a p_b - M_b p_a
    resid = (mu2 * J_lo
             + np.einsum("abcd,c,d->ab", _EPS, S, p)
             - np.outer(M_lo, p_lo) + np.outer(p_lo, M_lo))
    scale = max(abs(mu2) * np.max(np.abs(J_lo)), 1.0)
    return S, M, float(np.max(np.abs(resid)) / scale)


def line_from_system(sys: ClassicalSystem) -> TimelikeLine:
    """Centre-of-mass line through M/mu^2 with tangent p/mu."""
    mu = sys.mu
    _, M, _ = spin_and_moment(sys)
    return TimelikeLine(boost=boost_to(sys.p / mu), translation=M / mu**2)


def system_from_line(line: TimelikeLine, mu: float, spin: float = 0.0) -> ClassicalSystem:
    """System of mass ``mu`` and spin magnitude ``spin`` localized on ``line``.

    The spin vector points along the line frame's boosted z-axis; J is
    reconstructed by inverting the spin/orbital decomposition with the mass
    moment fixed by the line's translation.
    """
    if mu <= 0:
        raise ValueError("mass must be positive")
    if spin < 0:
        raise ValueError("spin magnitude must be non-negative")
    p = mu * line.boost.matrix[:, 0]
    S = spin * line.boost.matrix[:, 3]
    xi = line.translation
    M_lo = (mu**2 * ETA_DIAG * xi) - (ETA_DIAG * p) * _dot(p, xi)
    M = ETA_DIAG * M_lo
    p_lo = ETA_DIAG * p
    J_lo = (-np.einsum("abcd,c,d->ab", _EPS, S, p)
            + np.outer(M_lo, p_lo) - np.outer(p_lo, M_lo)) / mu**2
    J = np.einsum("a,b,ab->ab", ETA_DIAG, ETA_DIAG, J_lo)
    return ClassicalSystem(p=p, J=J)


def pair_invariants(sys1: ClassicalSystem, sys2: ClassicalSystem):
    """(P12^2, S12^a, Pi^a_b) for a two-system union.

    Pi projects onto the spacelike 2-plane orthogonal to both momenta and is
    undefined for parallel momenta.
    """
    p1, p2 = sys1.p, sys2.p
    P2 = _dot(p1, p2)
    mu1sq, mu2sq = _dot(p1, p1), _dot(p2, p2)
    den = P2**2 - mu1sq * mu2sq
    if den <= PARALLEL_TOL * mu1sq * mu2sq:
        raise ParallelMomenta("momenta are (numerically) parallel")
    S12 = 0.5 * np.einsum("a,abcd,bc,d->a", ETA_DIAG, _EPS,
                          sys1.J, p2)
    S12 = S12 + 0.5 * np.einsum("a,abcd,bc,d->a", ETA_DIAG, _EPS,
                                sys2.J, p1)
    p1_lo, p2_lo = ETA_DIAG * p1, ETA_DIAG * p2
    Pi = (np.eye(4)
          + (mu2sq * np.outer(p1, p1_lo) + mu1sq * np.outer(p2, p2_lo)
             - P2 * (np.outer(p1, p2_lo) + np.outer(p2, p1_lo))) / den)
    return P2, S12, Pi


def relative_position(sys1: ClassicalSystem, sys2: ClassicalSystem):
    """Spacelike separation vector d^a between the two centre-of-mass lines
    and its length, both built from pair invariants only."""
    p1, p2 = sys1.p, sys2.p
    P2, S12, _ = pair_invariants(sys1, sys2)
    mu1sq, mu2sq = _dot(p1, p1), _dot(p2, p2)
    den = P2**2 - mu1sq * mu2sq
    S1, _, _ = spin_and_moment(sys1)
    S2, _, _ = spin_and_moment(sys2)
    vec = S12 - P2 * (S1 / mu1sq + S2 / mu2sq)
    d = -np.einsum("a,abcd,b,c,d->a", ETA_DIAG, _EPS, p1, p2, vec) / den
    d2 = -_dot(d, d)
    return d, np.sqrt(max(d2, 0.0))


def lorentz_distance(line1: TimelikeLine, line2: TimelikeLine) -> float:
    """Spatial distance between two non-parallel timelike lines."""
    u1, u2 = line1.tangent, line2.tangent
    c = _dot(u1, u2)
    if c**2 - 1.0 <= PARALLEL_TOL:
        raise ParallelTangents("line tangents are (numerically) parallel")
    sys1 = ClassicalSystem(p=u1, J=np.zeros((4, 4)))
    sys2 = ClassicalSystem(p=u2, J=np.zeros((4, 4)))
    _, _, Pi = pair_invariants(sys1, sys2)
    dxi = line1.translation - line2.translation
    Pi_lo = np.einsum("a,ab->ab", ETA_DIAG, Pi)
    d2 = -float(dxi @ Pi_lo @ dxi)
    return np.sqrt(max(d2, 0.0))


def closest_approach_oracle(line1: TimelikeLine, line2: TimelikeLine):
    """Solve directly for the mutual perpendicular's foot points.

    Independent of the invariant-based route: finds (u1, u2) with
    gamma1(u1) - gamma2(u2) orthogonal to both tangents and returns the foot
    points and their separation.
    """
    u1, u2 = line1.tangent, line2.tangent
    a = _dot(u1, u1)
    b = _dot(u1, u2)
    c = _dot(u2, u2)
    dx = line1.translation - line2.translation
    mat = np.array([[a, -b], [b, -c]])
    rhs = -np.array([_dot(dx, u1), _dot(dx, u2)])
    det = np.linalg.det(mat)
    if abs(det) <= PARALLEL_TOL:
        raise ParallelTangents("line tangents are (numerically) parallel")
    t1, t2 = np.linalg.solve(mat, rhs)
    nu12 = line1.point(t1)
    nu21 = line2.point(t2)
    sep = nu12 - nu21
    return nu12, nu21, np.sqrt(max(-_dot(sep, sep), 0.0))


def _unit_spacelike_orthogonal(vs) -> np.ndarray:
    """Any unit spacelike vector eta-orthogonal to every vector in ``vs``."""
    for trial in np.vstack([np.eye(4)[1:], np.ones((1, 4))]):
        w = trial.astype(float)
        for v in vs:
            nv = _dot(v, v)
            w = w - v * (_dot(w, v) / nv)
        n2 = -_dot(w, w)
        if n2 > 1e-12:
            return w / np.sqrt(n2)
    raise RuntimeError("no orthogonal spacelike direction found")


def realize_point_distance(x1, x2):
    """Two non-parallel timelike lines realizing the separation of x1, x2.

    Spacelike pair: the lines' distance equals the Lorentzian distance
    sqrt(-dx.dx).  Timelike pair: the construction puts the second line at
    spatial offset T/2 from the midpoint, so the lines' distance is T/2 with
    T = sqrt(dx.dx); the caller accounts for that factor.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    dx = x1 - x2
    q = _dot(dx, dx)
    scale = max(float(np.max(np.abs(dx))) ** 2, 1e-300)
    if abs(q) <= 1e-12 * scale:
        raise NullSeparation("points are null separated")
    if q < 0:
        n = dx / np.sqrt(-q)
        t = np.array([1.0, 0, 0, 0]) + n * _dot(np.array([1.0, 0, 0, 0]), n)
        u1 = t / np.sqrt(_dot(t, t))
        w = _unit_spacelike_orthogonal([n, u1])
        u2 = np.cosh(1.0) * u1 + np.sinh(1.0) * w
        return (TimelikeLine(boost_to(u1), x1.copy()),
                TimelikeLine(boost_to(u2), x2.copy()))
    # timelike separation: lines through the midpoint and through a point
    # at spatial offset T/2 in the instantaneous rest 3-space
    T = np.sqrt(q)
    u = dx / T if dx[0] > 0 else -dx / T
    mid = 0.5 * (x1 + x2)
    e = _unit_spacelike_orthogonal([u])
    xt = mid + 0.5 * T * e
    w = _unit_spacelike_orthogonal([u, e])
    ut = np.cosh(1.0) * u + np.sinh(1.0) * w
    return (TimelikeLine(boost_to(u), mid),
            TimelikeLine(boost_to(ut), xt))


def transform_system(g: PoincareTransform, sys: ClassicalSystem) -> ClassicalSystem:
    """Push (p, J) forward: p -> Lp, J -> LJL^T + 2 xi^[a (Lp)^b]."""
    L = g.lorentz.matrix
    xi = g.translation
    p = L @ sys.p
    J = L @ sys.J @ L.T + np.outer(xi, p) - np.outer(p, xi)
    return ClassicalSystem(p=p, J=J)


def transform_line(g: PoincareTransform, line: TimelikeLine) -> TimelikeLine:
    u = g.lorentz.matrix @ line.tangent
    return TimelikeLine(boost_to(u), g.apply(line.translation))
