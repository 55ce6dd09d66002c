"""Basic observables on states, word moments, and the closed-form oracle.

The four generator families act on term-list states through their forms in
the adapted null frame; arbitrary ordered products ("words") are evaluated
against a state by cascaded application, with an adjoint-split option that
halves the intermediate band-limit growth.  ``closed_form_oracle`` collects
the independently known expectation values and variances of the co-moving
states for cross-checking the word engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt, pi
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad

from . import _engine
from .quantum_states import QState, com_state
from .sphere_harmonics import BandLimitError
from .tensor_kernel import _EPS, ETA_DIAG

__all__ = [
    "OperatorSymbol",
    "ExpectationReport",
    "apply_operator",
    "word_moment",
    "moment_tensor",
    "closed_form_oracle",
    "algebra_checks",
]


@dataclass(frozen=True)
class OperatorSymbol:
    """One generator with concrete upper Cartesian indices.

    kind is 'P', 'S', 'C' (one index) or 'J' (antisymmetric index pair).
    """

    kind: str
    indices: tuple

    def __post_init__(self):
        if self.kind not in ("P", "S", "C", "J"):
            raise ValueError(f"unknown operator kind {self.kind}")
        n = 2 if self.kind == "J" else 1
        if len(self.indices) != n:
            raise ValueError(f"{self.kind} takes {n} index(es)")
        for i in self.indices:
            if isinstance(i, int) and not 0 <= i <= 3:
                raise ValueError(f"index {i} out of range")
        if self.kind == "J" and self.indices[0] == self.indices[1]:
            raise ValueError("J label pair must be antisymmetric")

    def engine_sym(self):
        return (self.kind, *self.indices)


def _as_sym(op) -> tuple:
    if isinstance(op, OperatorSymbol):
        return op.engine_sym()
    return tuple(op)


def apply_operator(sym, psi: QState) -> QState:
    """New state O|psi> for a single generator."""
    backend = _engine.CoeffBackend.for_state(psi)
    st = _engine.pack_qstate(psi)
    out = backend.apply(st, _as_sym(sym))
    return _engine.unpack_to_qstate(out, psi)


def word_moment(word: Sequence, psi: QState,
                split: Optional[bool] = None) -> complex:
    """Normalized expectation <psi|O1...On|psi> / <psi|psi>."""
    if len(word) > 12:
        raise ValueError("word length capped at 12")
    backend = _engine.CoeffBackend.for_state(psi)
    ev = _engine.WordEvaluator(backend, _engine.pack_qstate(psi))
    return ev.moment([_as_sym(s) for s in word], split=split)


def moment_tensor(pattern: Sequence, psi: QState) -> np.ndarray:
    """Dense tensor of word moments over the pattern's free labels.

    Pattern entries are engine symbols whose slots may be ints (fixed),
    strings (free axes, ordered alphabetically in the result) or 4-tuples
    (contract with a constant lower-component vector).
    """
    backend = _engine.CoeffBackend.for_state(psi)
    ev = _engine.WordEvaluator(backend, _engine.pack_qstate(psi))
    return ev.tensor([_as_sym(s) for s in pattern])


def _xi_quartic_integral(eps: float) -> float:
    """(2/sqrt(pi)) eps^2 * int x^4 / (1 + 2 eps^2 x^2) exp(-x^2) dx."""
    v, _ = quad(lambda x: x**4 / (1.0 + 2.0 * eps**2 * x**2)
                * np.exp(-x**2), 0.0, 9.0, epsabs=0.0, epsrel=1e-13)
    return 2.0 / sqrt(pi) * eps**2 * v


@dataclass
class ExpectationReport:
    """Closed-form expectations of one co-moving state.

    ``flagged`` lists entries whose printed source is under numerical
    suspicion (they are recorded, not asserted, by the cross tests);
    ``corrected`` lists entries where this library's re-derivation replaces
    the printed value (the discrepancy is documented in the repo notes).
    """

    s: float
    m: float
    mu: float
    epsilon: float
    hbar: float
    p: np.ndarray
    S: np.ndarray
    C: np.ndarray
    J: np.ndarray
    var_p: np.ndarray
    var_J: dict
    casimir_p2: float
    casimir_S2: float
    flagged: set = field(default_factory=set)
    corrected: set = field(default_factory=set)


def closed_form_oracle(s: float, m: float, mu: float, epsilon: float,
                       hbar: float = 1.0) -> ExpectationReport:
    """Independent expectation values for the symmetric co-moving state.

    Angular factors are exact closed forms; the radial factors reduce to
    Gaussian moments plus one non-elementary 1-d integral.  The boost-
    variance entries require s > 1.
    """
    s2 = int(round(2 * s))
    if abs(m) > s:
        raise ValueError("need |m| <= s")
    from .quantum_states import GaussianProfile, RadialIntegrals

    table = RadialIntegrals(GaussianProfile(epsilon, mu))
    E1 = table.value(2, 0)     # <p0>
    eps2 = epsilon**2
    p = np.array([E1, 0.0, 0.0, 0.0])
    S = np.zeros(4)
    S[3] = m * hbar * (s / (s + 1.0) * E1 + (2.0 / 3.0) * mu * (s2 == 1))
    C = np.zeros(4)
    J = np.zeros((4, 4))
    J[1, 2], J[2, 1] = m * hbar, -m * hbar

    var_p = np.empty(4)
    var_p[0] = mu**2 * (1.0 + 3.0 * eps2) - E1**2
    den = (s + 1.0) * (2.0 * s + 3.0)
    # the printed transverse/longitudinal momentum variances are twice
    # these; the values below follow from the Gaussian moments and the
    # quadratic direction matrix elements, and close under summation to
    # the total <p^2> = 3 mu^2 eps^2
    var_p[1] = var_p[2] = 3.0 * mu**2 * eps2 * ((s + 1.0) ** 2 - m**2) / den
    var_p[3] = 3.0 * mu**2 * eps2 * (s + 1.0 + 2.0 * m**2) / den

    var_J = {(1, 2): 0.0}
    if s > 1:
        var_J[(2, 3)] = var_J[(3, 1)] = hbar**2 * (s**2 - m**2 + s) / 2.0
        K = _xi_quartic_integral(epsilon)
        common = K + 0.75 - 0.5 * s + (0.75 - s) / eps2
        var_J[(0, 1)] = var_J[(0, 2)] = hbar**2 / den * (
            (s**2 - m**2) * common + (2.0 * s + 1.0) * K
            + 2.25 + 5.0 * s + 2.5 * s**2 + s**3
            + (0.75 + 3.5 * s + 3.0 * s**2 + 2.0 * s**3) / eps2)
        # the (m^2 - s^2) bracket carries weight 2 here (weight 1 as
        # printed); with weight 2 the m-dependence cancels from the sum
        # over boost directions, and the word engine confirms it
        var_J[(0, 3)] = hbar**2 / den * (
            2.0 * (m**2 - s**2) * common + (2.0 * s**2 + s + 1.0) * K
            + 2.25 + 4.25 * s + 4.5 * s**2
            + (0.75 + 2.75 * s + 5.5 * s**2) / eps2)

    flagged = set()
    if s2 == 1:
        flagged.add("S3")  # relative-phase-sensitive chirality cross term
    corrected = {"var_p1", "var_p2", "var_p3"}
    if s > 1:
        corrected.add("var_J03_m_dependence")
    return ExpectationReport(
        s=s, m=m, mu=mu, epsilon=epsilon, hbar=hbar, p=p, S=S, C=C, J=J,
        var_p=var_p, var_J=var_J, casimir_p2=mu**2,
        casimir_S2=-hbar**2 * mu**2 * s * (s + 1.0),
        flagged=flagged, corrected=corrected)


# ----------------------------------------------------------------------
# algebra residuals
# ----------------------------------------------------------------------

def _combine(parts):
    keys = np.concatenate([p.keys for p in parts])
    vals = np.concatenate([p.vals for p in parts])
    return _engine.EState(*_engine.coalesce(keys, vals))


def _scaled(st, c):
    return _engine.EState(st.keys, st.vals * c)


def _residual(backend, diff, scales) -> float:
    """Norm of the difference state over the norm of the scale states,
    measured in the canonical radial form where the zero function has zero
    coefficients."""
    shift = -min([_engine.min_a(diff)] + [_engine.min_a(s) for s in scales]
                 + [0])
    dc = _engine.canonical_radial(diff, backend.mu, shift)
    num = abs(backend.inner(dc, dc)) ** 0.5
    den = 0.0
    for st in scales:
        sc = _engine.canonical_radial(st, backend.mu, shift)
        den += abs(backend.inner(sc, sc)) ** 0.5
    return num / max(den, 1e-300)


def algebra_checks(psi: QState, tolerance: float = 1e-8) -> dict:
    """Residuals of the generator algebra applied to ``psi``.

    Returns a mapping name -> worst relative residual over all index
    combinations; nothing is raised, callers compare against their
    tolerance.
    """
    backend = _engine.CoeffBackend.for_state(psi)
    base = _engine.pack_qstate(psi)
    hbar = psi.hbar
    mu = psi.mu
    eta = ETA_DIAG

    cache: dict[tuple, object] = {}

    def ap(*syms):
        word = tuple(syms)
        if word not in cache:
            st = base
            for sym in reversed(word):
                st = backend.apply(st, sym)
            cache[word] = st
        return cache[word]

    def comm(s1, s2):
        lhs = ap(s1, s2)
        rhs = ap(s2, s1)
        return _combine([lhs, _scaled(rhs, -1.0)]), [lhs, rhs]

    out: dict[str, float] = {}

    worst = 0.0
    for a in range(4):
        for b in range(a + 1, 4):
            d, sc = comm(("P", a), ("P", b))
            worst = max(worst, _residual(backend, d, sc))
    out["momentum_commute"] = worst

    worst = 0.0
    for a in range(4):
        for b in range(4):
            for c in range(4):
                if b == c:
                    continue
                d, sc = comm(("P", a), ("J", b, c))
                parts = [d]
                if a == b:
                    parts.append(_scaled(ap(("P", c)), -1j * hbar * eta[a]))
                if a == c:
                    parts.append(_scaled(ap(("P", b)), 1j * hbar * eta[a]))
                worst = max(worst,
                            _residual(backend, _combine(parts), sc))
    out["momentum_rotation_commute"] = worst

    worst = 0.0
    pairs = [(0, 1), (0, 3), (1, 2), (2, 3)]
    for (a, b) in pairs:
        for (c, dd) in pairs:
            d, sc = comm(("J", a, b), ("J", c, dd))
            parts = [d]
            for (x, y, w) in (((dd, b), (a, c), eta[a] if a == c else 0.0),
                              ((c, b), (a, dd), -eta[a] if a == dd else 0.0),
                              ((c, a), (b, dd), eta[b] if b == dd else 0.0),
                              ((dd, a), (b, c), -eta[b] if b == c else 0.0)):
                if w != 0.0 and x[0] != x[1]:
                    parts.append(_scaled(ap(("J", x[0], x[1])),
                                         -1j * hbar * w))
            worst = max(worst, _residual(backend, _combine(parts), sc))
    out["rotation_algebra"] = worst

    worst = 0.0
    for a in range(4):
        for b in range(4):
            d, sc = comm(("S", a), ("P", b))
            worst = max(worst, _residual(backend, d, sc))
    out["spin_momentum_commute"] = worst

    worst = 0.0
    for a in range(4):
        for b in range(a + 1, 4):
            d, sc = comm(("S", a), ("S", b))
            parts = [d]
            for c in range(4):
                for e in range(4):
                    w = _EPS[a, b, c, e] * eta[a] * eta[b]
                    if w != 0.0:
                        parts.append(_scaled(ap(("S", c), ("P", e)),
                                             1j * hbar * w))
            worst = max(worst, _residual(backend, _combine(parts), sc))
    out["spin_algebra"] = worst

    worst = 0.0
    for a in range(4):
        for b in range(4):
            d, sc = comm(("C", a), ("P", b))
            parts = [d, _scaled(ap(("P", a), ("P", b)), -1j * hbar)]
            if a == b:
                parts.append(_scaled(base, 1j * hbar * mu**2 * eta[a]))
            worst = max(worst, _residual(backend, _combine(parts), sc))
    out["com_momentum_commute"] = worst

    worst = 0.0
    for a in range(4):
        for b in range(a + 1, 4):
            d, sc = comm(("C", a), ("C", b))
            parts = [d, _scaled(ap(("J", a, b)), -1j * hbar * mu**2)]
            worst = max(worst, _residual(backend, _combine(parts), sc))
    out["com_algebra"] = worst

    worst = 0.0
    for a in range(4):
        for b in range(4):
            d, sc = comm(("C", a), ("S", b))
            parts = [d, _scaled(ap(("S", a), ("P", b)), -1j * hbar)]
            worst = max(worst, _residual(backend, _combine(parts), sc))
    out["com_spin_commute"] = worst

    worst = 0.0
    for a in range(4):
        for b in range(4):
            if a == b:
                continue
            parts = [_scaled(ap(("J", a, b)), mu**2)]
            for c in range(4):
                for e in range(4):
                    w = _EPS[a, b, c, e] * eta[a] * eta[b]
                    if w != 0.0:
                        parts.append(_scaled(ap(("S", c), ("P", e)), w))
            parts.append(_scaled(ap(("C", a), ("P", b)), -1.0))
            parts.append(_scaled(ap(("C", b), ("P", a)), 1.0))
            scales = [ap(("J", a, b)), ap(("C", a), ("P", b))]
            worst = max(worst, _residual(backend, _combine(parts), scales))
    out["decomposition_identity"] = worst

    return out
