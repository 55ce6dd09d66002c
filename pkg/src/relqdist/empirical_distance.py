"""Two-particle observables and the empirical distance.

The distance-squared between two systems is a quotient of two expectation
values built from per-particle momentum/rotation generators contracted with
two volume forms.  Operators live here as symbolic tensor polynomials: each
term carries constant tensors (metric, volume form, frame matrices and
translations) plus one ordered generator word per particle, tied together
by index labels.  Transforming to general frames rewrites the symbols
through the generator transformation laws; evaluation factorizes every term
into per-particle moment tensors (memoized across terms, since the frame
dependence sits entirely in the constant factors) and contracts the
network numerically.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import sqrt
from typing import Optional

import numpy as np

from . import _engine
from .quantum_states import com_state
from .tensor_kernel import _EPS, ETA_DIAG, PoincareTransform

__all__ = [
    "OperatorPolynomial",
    "ParticleSpec",
    "DegenerateDenominator",
    "ComplexExpectation",
    "build_operators",
    "transform_polynomial",
    "expect_polynomial",
    "empirical_distance",
    "evaluate_distance",
    "uncertainty",
    "momentum_poly",
    "com_poly",
]

_ETA_ARR = np.diag(ETA_DIAG)
_EPS_UP1 = np.einsum("e,eghb->eghb", ETA_DIAG, _EPS)  # first slot raised

DENOM_TOL = 1e-10
IMAG_TOL = 1e-8


class DegenerateDenominator(ArithmeticError):
    """The expectation in the denominator is too close to zero."""


class ComplexExpectation(ArithmeticError):
    """A formally real expectation came out with a large imaginary part."""


_label_counter = itertools.count()


def _fresh(tag: str = "t") -> str:
    return f"{tag}{next(_label_counter)}"


@dataclass(frozen=True)
class PolyTerm:
    coeff: complex
    consts: tuple          # of (ndarray, (labels...))
    word1: tuple           # generator symbols with str labels
    word2: tuple

    def labels(self):
        out = []
        for _, labs in self.consts:
            out.extend(labs)
        for word in (self.word1, self.word2):
            for sym in word:
                for slot in sym[1:]:
                    if isinstance(slot, str):
                        out.append(slot)
        return out


@dataclass
class OperatorPolynomial:
    """Sum of constant-tensor-dressed two-particle generator words."""

    terms: list

    def __add__(self, other: "OperatorPolynomial") -> "OperatorPolynomial":
        return OperatorPolynomial(self.terms + other.terms)

    def scaled(self, c) -> "OperatorPolynomial":
        return OperatorPolynomial([
            PolyTerm(t.coeff * c, t.consts, t.word1, t.word2)
            for t in self.terms])

    def __mul__(self, other: "OperatorPolynomial") -> "OperatorPolynomial":
        """Operator product; self acts to the left of other."""
        out = []
        for t1 in self.terms:
            for t2 in other.terms:
                t2r = _relabel(t2)
                out.append(PolyTerm(t1.coeff * t2r.coeff,
                                    t1.consts + t2r.consts,
                                    t1.word1 + t2r.word1,
                                    t1.word2 + t2r.word2))
        return OperatorPolynomial(out)

    def adjoint(self) -> "OperatorPolynomial":
        swap = {"K": "Kt", "Kt": "K"}
        out = []
        for t in self.terms:
            words = []
            for word in (t.word1, t.word2):
                rev = []
                for sym in reversed(word):
                    kind = swap.get(sym[0], sym[0])
                    if kind == "Pd":
                        rev.append((kind, tuple(np.conj(sym[1]))))
                    else:
                        rev.append((kind, *sym[1:]))
                words.append(tuple(rev))
            out.append(PolyTerm(np.conj(t.coeff), t.consts,
                                words[0], words[1]))
        return OperatorPolynomial(out)

    def free_labels(self):
        counts: dict[str, int] = {}
        for t in self.terms:
            seen = t.labels()
            for lab in set(seen):
                counts.setdefault(lab, seen.count(lab))
        return sorted(lab for lab, n in counts.items() if n == 1)

    def n_terms(self) -> int:
        return len(self.terms)


def _relabel(term: PolyTerm) -> PolyTerm:
    free = {}
    for lab in dict.fromkeys(term.labels()):
        free[lab] = _fresh()
    consts = tuple((arr, tuple(free[x] for x in labs))
                   for arr, labs in term.consts)

    def rw(word):
        out = []
        for sym in word:
            slots = [free[s] if isinstance(s, str) else s for s in sym[1:]]
            out.append((sym[0], *slots))
        return tuple(out)

    return PolyTerm(term.coeff, consts, rw(term.word1), rw(term.word2))


def momentum_poly(particle: int, label: str) -> OperatorPolynomial:
    w = (("P", label),)
    return OperatorPolynomial([PolyTerm(1.0, (),
                                        w if particle == 1 else (),
                                        w if particle == 2 else ())])


def com_poly(particle: int, label: str, hbar: float = 1.0) -> OperatorPolynomial:
    """Centre-of-mass vector: momentum-folded rotation word minus the
    self-adjointness counterterm."""
    wk = (("K", label),)
    wp = (("P", label),)
    empty = ()
    return OperatorPolynomial([
        PolyTerm(1.0, (), wk if particle == 1 else empty,
                 wk if particle == 2 else empty),
        PolyTerm(-1.5j * hbar, (), wp if particle == 1 else empty,
                 wp if particle == 2 else empty)])


def _build_A_entrywise(mu1: float, mu2: float) -> OperatorPolynomial:
    """Numerator with explicit volume-form factors and folded units.

    Index moments of words holding two folded units on one side diverge
    individually (only their contraction is finite), so this form is used
    for cross-checks of the plain expectation, never squared.
    """
    a, c, d, e, g, h, b = [_fresh() for _ in range(7)]
    eps1 = (_EPS, (a, c, d, e))
    eps2 = (_EPS_UP1, (e, g, h, b))
    return OperatorPolynomial([
        PolyTerm(1.0 / mu1**4, (eps1, eps2),
                 (("K", a), ("P", c), ("P", g), ("Kt", b)),
                 (("P", d), ("P", h))),
        PolyTerm(-1.0 / (mu1**2 * mu2**2), (eps1, eps2),
                 (("K", a), ("P", c), ("P", g)),
                 (("P", d), ("P", h), ("Kt", b))),
        PolyTerm(-1.0 / (mu1**2 * mu2**2), (eps1, eps2),
                 (("P", c), ("P", g), ("Kt", b)),
                 (("K", a), ("P", d), ("P", h))),
        PolyTerm(1.0 / mu2**4, (eps1, eps2),
                 (("P", c), ("P", g)),
                 (("K", a), ("P", d), ("P", h), ("Kt", b))),
    ])


def build_operators(mu1: float, mu2: float, hbar: float = 1.0) -> dict:
    """Distance numerator A, denominator B, and the pair observables.

    A carries the two volume-form contractions with the centre-of-mass
    vectors already reduced to rotation-momentum words: the momentum part
    of each centre-of-mass vector dies on the antisymmetric contraction,
    leaving exactly four terms.  Each rotation-momentum pair is kept glued
    to its volume form (the U/Ut units), which keeps every intermediate
    state square integrable even when terms are multiplied.
    """
    d, h = _fresh(), _fresh()
    t1 = PolyTerm(1.0 / mu1**4, (),
                  (("W", d, h),), (("P", d), ("P", h)))
    d, e, g = _fresh(), _fresh(), _fresh()
    t2 = PolyTerm(1.0 / (mu1**2 * mu2**2), (),
                  (("U", d, e), ("P", g)), (("P", d), ("Ut", e, g)))
    c, e, h = _fresh(), _fresh(), _fresh()
    t3 = PolyTerm(1.0 / (mu1**2 * mu2**2), (),
                  (("P", c), ("Ut", e, h)), (("U", c, e), ("P", h)))
    c, g = _fresh(), _fresh()
    t4 = PolyTerm(1.0 / mu2**4, (),
                  (("P", c), ("P", g)), (("W", c, g),))
    A = OperatorPolynomial([t1, t2, t3, t4])
    x1, x2, y1, y2 = [_fresh() for _ in range(4)]
    B = OperatorPolynomial([
        PolyTerm(1.0, ((_ETA_ARR, (x1, y1)), (_ETA_ARR, (x2, y2))),
                 (("P", x1), ("P", x2)), (("P", y1), ("P", y2))),
        PolyTerm(-mu1**2 * mu2**2, (), (), ()),
    ])
    la, lb = _fresh(), _fresh()
    P12sq = OperatorPolynomial([
        PolyTerm(1.0, ((_ETA_ARR, (la, lb)),), (("P", la),), (("P", lb),))])
    fa = "a"
    bb, cc, dd = [_fresh() for _ in range(3)]
    eps_up = (np.einsum("x,xbcd->xbcd", ETA_DIAG, _EPS), (fa, bb, cc, dd))
    S12 = OperatorPolynomial([
        PolyTerm(0.5, (eps_up,), (("J", bb, cc),), (("P", dd),)),
        PolyTerm(0.5, (eps_up,), (("P", dd),), (("J", bb, cc),)),
    ])
    sig = (com_poly(1, "a", hbar).scaled(1.0 / mu1**2)
           + com_poly(2, "a", hbar).scaled(-1.0 / mu2**2))
    return {"Sigma": sig, "A": A, "B": B, "P12sq": P12sq, "S12": S12}


def transform_polynomial(poly: OperatorPolynomial,
                         frame1: PoincareTransform,
                         frame2: PoincareTransform) -> OperatorPolynomial:
    """Conjugate every generator by the frame of its particle.

    Momenta pick up one frame matrix; each rotation generator splits into
    a translation piece and a boosted-rotation piece (so J-occurrences
    double the term count); the momentum-folded units split threefold,
    their translation piece keeping the momentum square as a word.
    """
    frames = {1: frame1, 2: frame2}

    def unit_pieces(kind, l1, l2, fr: PoincareTransform):
        """Frame action on one volume-form unit.

        Expanding the frame matrices of the unit's two factors and
        recontracting the volume form (unit determinant) returns the unit
        with inverse-matrix-dressed slots, plus pure-momentum remainders.
        """
        L = fr.lorentz.matrix
        Li = _ETA_ARR @ L.T @ _ETA_ARR
        xi = fr.translation
        w = tuple((ETA_DIAG * xi) @ L)
        n1, n2, x, y = _fresh(), _fresh(), _fresh(), _fresh()
        if kind == "U":
            R1 = np.einsum("acde,a,cx->dex", _EPS, xi, L)
            R2 = -np.einsum("acde,ay,cx->dexy", _EPS, L, L)
            return [
                (1.0, ((R1, (l1, l2, x)),), (("Psq",), ("P", x))),
                (1.0, ((R2, (l1, l2, x, y)),),
                 (("Pd", w), ("P", y), ("P", x))),
                (1.0, ((Li, (n1, l1)), (Li, (n2, l2))), (("U", n1, n2),)),
            ]
        R1 = np.einsum("eghb,b,gx->ehx", _EPS_UP1, xi, L)
        R2 = -np.einsum("eghb,by,gx->ehxy", _EPS_UP1, L, L)
        return [
            (1.0, ((R1, (l1, l2, x)),), (("P", x), ("Psq",))),
            (1.0, ((R2, (l1, l2, x, y)),),
             (("P", x), ("Pd", w), ("P", y))),
            (1.0, ((L.T, (n1, l1)), (Li, (n2, l2))), (("Ut", n1, n2),)),
        ]

    def sym_pieces(sym, fr: PoincareTransform):
        L = fr.lorentz.matrix
        xi = fr.translation
        w = tuple((ETA_DIAG * xi) @ L)
        kind = sym[0]
        if kind == "P":
            lbl = sym[1]
            e = _fresh()
            return [(1.0, ((L, (lbl, e)),), (("P", e),))]
        if kind == "Pd":
            wv = np.asarray(sym[1], dtype=complex)
            return [(1.0, (), (("Pd", tuple(wv @ L)),))]
        if kind == "Psq":
            return [(1.0, (), (("Psq",),))]
        if kind == "J":
            l1, l2 = sym[1], sym[2]
            e = _fresh()
            XI = (np.einsum("a,be->abe", xi, L)
                  - np.einsum("b,ae->abe", xi, L))
            c1, c2 = _fresh(), _fresh()
            return [
                (1.0, ((XI, (l1, l2, e)),), (("P", e),)),
                (1.0, ((L, (l1, c1)), (L, (l2, c2))), (("J", c1, c2),)),
            ]
        if kind in ("K", "Kt"):
            lbl = sym[1]
            e3 = _fresh()
            return [
                # translation piece: xi^l times the momentum square
                (1.0, ((xi.copy(), (lbl,)),), (("Psq",),)),
                (-1.0, ((L, (lbl, e3)),), (("Pd", w), ("P", e3))),
                (1.0, ((L, (lbl, e3)),), ((kind, e3),)),
            ]
        if kind in ("U", "Ut"):
            return unit_pieces(kind, sym[1], sym[2], fr)
        if kind == "W":
            l1, l2 = sym[1], sym[2]
            e = _fresh()
            Li = _ETA_ARR @ L.T @ _ETA_ARR
            out = []
            for (cu, ku, wu) in unit_pieces("U", l1, e, fr):
                for (ct, kt, wt) in unit_pieces("Ut", e, l2, fr):
                    if wu[0][0] == "U" and wt[0][0] == "Ut":
                        # the shared slot contracts the two dressings to
                        # the identity: the fused unit transforms into
                        # itself with inverse-dressed outer slots
                        n1, n4 = _fresh(), _fresh()
                        out.append((cu * ct,
                                    ((Li, (n1, l1)), (Li, (n4, l2))),
                                    (("W", n1, n4),)))
                    else:
                        out.append((cu * ct, tuple(ku) + tuple(kt),
                                    tuple(wu) + tuple(wt)))
            return out
        raise KeyError(f"cannot transform symbol {sym}")

    out_terms = []
    for term in poly.terms:
        variants = [(term.coeff, list(term.consts), [], [])]
        for pi, word in ((1, term.word1), (2, term.word2)):
            fr = frames[pi]
            for sym in word:
                pieces = sym_pieces(sym, fr)
                new_variants = []
                for (co, cs, w1, w2) in variants:
                    for (pc, pconsts, psyms) in pieces:
                        nw1 = w1 + list(psyms) if pi == 1 else list(w1)
                        nw2 = w2 + list(psyms) if pi == 2 else list(w2)
                        new_variants.append((co * pc, cs + list(pconsts),
                                             nw1, nw2))
                variants = new_variants
        for (co, cs, w1, w2) in variants:
            out_terms.append(PolyTerm(co, tuple((arr, tuple(ll))
                                                for arr, ll in cs),
                                      tuple(w1), tuple(w2)))
    return OperatorPolynomial(out_terms)


# ----------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ParticleSpec:
    """One particle: spin/width/mass, its frame, and evaluation knobs."""

    s: float
    mu: float
    epsilon: float
    frame: PoincareTransform
    hbar: float = 1.0
    l_margin: int = 8

    def __post_init__(self):
        if self.mu <= 0 or self.epsilon <= 0:
            raise ValueError("mass and width must be positive")

    def state(self):
        return com_state(self.s, self.s, self.mu, self.epsilon,
                         "symmetric", self.hbar, self.l_margin)

    def backend_key(self, backend: str, rel_tol: float):
        return (backend, int(round(2 * self.s)), self.mu, self.epsilon,
                self.hbar, self.l_margin, rel_tol)


_EVALUATORS: dict[tuple, _engine.WordEvaluator] = {}
_TENSORS: dict[tuple, np.ndarray] = {}


def _evaluator_for(spec: ParticleSpec, backend: str,
                   rel_tol: float) -> _engine.WordEvaluator:
    key = spec.backend_key(backend, rel_tol)
    ev = _EVALUATORS.get(key)
    if ev is None:
        q = spec.state()
        if backend == "coeff":
            be = _engine.CoeffBackend.for_state(q, rel_tol)
            ev = _engine.WordEvaluator(be, be.make_state(q))
        elif backend == "grid":
            be = _engine.GridBackend(q.s2, q.mu, q.profile.epsilon, q.hbar,
                                     q.lmax2, rel_tol=rel_tol)
            ev = _engine.WordEvaluator(be, be.make_state(q))
        else:
            raise ValueError(f"unknown backend {backend}")
        _EVALUATORS[key] = ev
    return ev


def _word_tensor(spec: ParticleSpec, word: tuple, backend: str,
                 rel_tol: float):
    """Per-particle moment tensor, memoized on (state, word structure)."""
    key = (spec.backend_key(backend, rel_tol), word)
    hit = _TENSORS.get(key)
    if hit is None:
        ev = _evaluator_for(spec, backend, rel_tol)
        hit = ev.tensor(word)
        _TENSORS[key] = hit
    return hit


def clear_caches():
    _EVALUATORS.clear()
    _TENSORS.clear()


_COMMUTING = ("P", "Pd", "Psq")


def _canonical_word(word):
    """Canonical shape of a word for tensor caching.

    Runs of adjacent momentum symbols commute, so they are sorted into a
    fixed order; labels are then renamed a0, a1, ... by first appearance.
    Structurally equal words share cached tensors.
    """
    def sort_key(sym):
        return (sym[0], tuple(str(x) for x in sym[1:]))

    reordered = []
    run: list = []
    for sym in word:
        if sym[0] in _COMMUTING:
            run.append(sym)
        else:
            reordered.extend(sorted(run, key=sort_key))
            run = []
            reordered.append(sym)
    reordered.extend(sorted(run, key=sort_key))
    mapping: dict[str, str] = {}
    out = []
    for sym in reordered:
        slots = []
        for slot in sym[1:]:
            if isinstance(slot, str):
                if slot not in mapping:
                    mapping[slot] = f"a{len(mapping)}"
                slots.append(mapping[slot])
            else:
                slots.append(slot)
        out.append((sym[0], *slots))
    return tuple(out), mapping


def expect_polynomial(poly: OperatorPolynomial, spec1: ParticleSpec,
                      spec2: ParticleSpec, backend: str = "coeff",
                      rel_tol: float = 1e-12):
    """Normalized expectation of a polynomial in the two-particle state.

    Each term factorizes into per-particle moment tensors contracted with
    the term's constant tensors.  Labels used exactly once become output
    axes (sorted), so polynomials with free labels evaluate to arrays.
    """
    free = poly.free_labels()
    out = np.zeros((4,) * len(free), dtype=complex)
    for term in poly.terms:
        ops = []
        axes = []
        for arr, labs in term.consts:
            ops.append(np.asarray(arr))
            axes.append(list(labs))
        for spec, word in ((spec1, term.word1), (spec2, term.word2)):
            cword, mapping = _canonical_word(word)
            tens = _word_tensor(spec, cword, backend, rel_tol)
            counts: dict[str, int] = {}
            for sym in word:
                for slot in sym[1:]:
                    if isinstance(slot, str):
                        counts[slot] = counts.get(slot, 0) + 1
            # labels repeated inside one word are summed by the evaluator;
            # tensor axes follow the remaining labels, sorted canonically
            word_labels = [lab for lab, n in counts.items() if n == 1]
            canon_sorted = sorted(mapping[lab] for lab in word_labels)
            inv = {v: k for k, v in mapping.items()}
            ops.append(tens)
            axes.append([inv[cl] for cl in canon_sorted])
        label_ids: dict[str, int] = {}
        for labs in axes:
            for lab in labs:
                label_ids.setdefault(lab, len(label_ids))
        operands = []
        for op, labs in zip(ops, axes):
            operands.append(op)
            operands.append([label_ids[lab] for lab in labs])
        operands.append([label_ids[lab] for lab in free])
        out = out + term.coeff * np.einsum(*operands, optimize="greedy")
    return out if free else complex(out)


# ----------------------------------------------------------------------
# the distance and its uncertainty
# ----------------------------------------------------------------------

@dataclass
class DistanceResult:
    d2: float
    d: float
    a_val: complex
    b_val: complex
    imag_residual: float


def evaluate_distance(spec1: ParticleSpec, spec2: ParticleSpec,
                      backend: str = "coeff",
                      rel_tol: float = 1e-12) -> DistanceResult:
    """Empirical distance with diagnostics."""
    if spec1.hbar != spec2.hbar:
        raise ValueError("specs disagree on the action unit")
    ops = build_operators(spec1.mu, spec2.mu, spec1.hbar)
    # the folded-unit numerator is equal (tested) but tuned for squaring;
    # plain expectations are cheaper through the explicit form
    A = _build_A_entrywise(spec1.mu, spec2.mu)
    At = transform_polynomial(A, spec1.frame, spec2.frame)
    Bt = transform_polynomial(ops["B"], spec1.frame, spec2.frame)
    a_val = expect_polynomial(At, spec1, spec2, backend, rel_tol)
    b_val = expect_polynomial(Bt, spec1, spec2, backend, rel_tol)
    scale = (spec1.mu * spec2.mu) ** 2
    if b_val.real <= DENOM_TOL * scale:
        raise DegenerateDenominator(
            f"<B> = {b_val:.3e} below tolerance {DENOM_TOL * scale:.3e}")
    imag_res = abs(a_val.imag) / max(abs(a_val), 1e-300)
    imag_res = max(imag_res, abs(b_val.imag) / max(abs(b_val), 1e-300))
    if imag_res > IMAG_TOL:
        raise ComplexExpectation(
            f"imaginary residual {imag_res:.3e} exceeds {IMAG_TOL:.0e}")
    d2 = a_val.real / b_val.real
    return DistanceResult(d2=d2, d=sqrt(max(d2, 0.0)), a_val=a_val,
                          b_val=b_val, imag_residual=imag_res)


def empirical_distance(spec1: ParticleSpec, spec2: ParticleSpec,
                       backend: str = "coeff", rel_tol: float = 1e-12):
    """(d^2, d); d^2 may sit slightly below zero at small spin, d clamps."""
    res = evaluate_distance(spec1, spec2, backend, rel_tol)
    return res.d2, res.d


def uncertainty(spec1: ParticleSpec, spec2: ParticleSpec,
                cap: float = 8.0, backend: str = "coeff",
                rel_tol: float = 1e-12):
    """(delta_d2, dA/|<A>|, dB/<B>); the quartic part is skipped above cap.

    The denominator spread uses fourth-order momentum moments only; the
    numerator spread squares the full four-term operator, which costs
    rank-8 moment tensors per particle and is gated by ``cap``.
    """
    import dataclasses

    ops = build_operators(spec1.mu, spec2.mu, spec1.hbar)
    res = evaluate_distance(spec1, spec2, backend, rel_tol)
    Bt = transform_polynomial(ops["B"], spec1.frame, spec2.frame)
    b2 = expect_polynomial(Bt * Bt, spec1, spec2, backend, rel_tol)
    var_b = b2.real - res.b_val.real**2
    rel_b = sqrt(max(var_b, 0.0)) / res.b_val.real
    if spec1.s > cap or spec2.s > cap:
        return None, None, rel_b
    # squared-numerator words walk farther up the degree ladder than the
    # plain evaluation; give them the extra headroom
    hi1 = dataclasses.replace(spec1, l_margin=spec1.l_margin + 6)
    hi2 = dataclasses.replace(spec2, l_margin=spec2.l_margin + 6)
    At = transform_polynomial(ops["A"], spec1.frame, spec2.frame)
    a2 = expect_polynomial(At * At, hi1, hi2, backend, rel_tol)
    var_a = a2.real - res.a_val.real**2
    rel_a = sqrt(max(var_a, 0.0)) / max(abs(res.a_val), 1e-300)
    delta_d2 = (rel_a + rel_b) * abs(res.d2)
    return delta_d2, rel_a, rel_b
