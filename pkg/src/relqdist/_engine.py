"""Word engine: generator actions on states and moments of operator words.

States are sparse vectors over the key lattice (r, a, b, 2j, 2m): component
index, powers of p and p0 in the radial monomial, and harmonic labels.  The
four generators map lattice points to nearby lattice points with closed-form
factors, so a word of operators is a cascade of vectorized re-keyings; the
final scalar products reduce to radial profile integrals times sparse
angular dot products.

Two interchangeable backends drive the same branch plans: ``CoeffBackend``
(the production path, harmonic coefficients) and ``GridBackend`` (an
independent check: pointwise tetrad multiplication on a dense (theta, phi)
grid with finite-difference edth).  Hot loops sit behind
:mod:`relqdist._kernels` with a NumPy fallback.

Symbols are tuples with upper Cartesian indices:
  ("P", a), ("S", a), ("C", a), ("J", a, b)   concrete generators
  ("Pd", (u0, u1, u2, u3))                    u_a p^a for a constant u
  ("K", a)                                    J^{a}{}_f p^f (eta folded)
In word templates the slots may also be str labels (free tensor axes); a
4-tuple slot on "P" is shorthand for "Pd".
"""

from __future__ import annotations

from itertools import product
from math import comb, sqrt
from typing import Optional

import numpy as np

from .quantum_states import GaussianProfile, QState, RadialIntegrals
from .sphere_harmonics import (BandLimitError, couple_m, couple_mbar,
                               couple_n, direction_components, m_components)
from .tensor_kernel import _EPS

try:  # compiled kernels are optional
    from . import _kernels as _K
    HAVE_COMPILED_KERNELS = True
except ImportError:  # pragma: no cover - depends on build environment
    from . import _kernels_fallback as _K
    HAVE_COMPILED_KERNELS = False

# key layout: r(9) | j2(9) | m2+512(10) | a+32(8) | b+64(7)
_B_BITS, _A_BITS, _M_BITS, _J_BITS = 7, 8, 10, 9
_AB_BITS = _A_BITS + _B_BITS
_A_OFF, _B_OFF, _M_OFF = 32, 64, 512
DROP_TOL = 1e-15


class EngineRangeError(ValueError):
    """A key field left its packed range (word too long for the budget)."""


def pack_keys(r, j2, m2, a, b):
    for name, arr, lo, hi in (("r", r, 0, 1 << _J_BITS),
                              ("j2", j2, 0, 1 << _J_BITS),
                              ("m2", m2, -_M_OFF, _M_OFF),
                              ("a", a, -_A_OFF, (1 << _A_BITS) - _A_OFF),
                              ("b", b, -_B_OFF, (1 << _B_BITS) - _B_OFF)):
        if arr.size and (arr.min() < lo or arr.max() >= hi):
            raise EngineRangeError(f"field {name} out of packed range")
    return ((((((r.astype(np.int64) << _J_BITS) | j2) << _M_BITS)
              | (m2 + _M_OFF)) << _AB_BITS)
            | ((a + _A_OFF) << _B_BITS) | (b + _B_OFF))


def unpack_keys(keys):
    b = (keys & ((1 << _B_BITS) - 1)) - _B_OFF
    a = ((keys >> _B_BITS) & ((1 << _A_BITS) - 1)) - _A_OFF
    m2 = ((keys >> _AB_BITS) & ((1 << _M_BITS) - 1)) - _M_OFF
    j2 = (keys >> (_AB_BITS + _M_BITS)) & ((1 << _J_BITS) - 1)
    r = keys >> (_AB_BITS + _M_BITS + _J_BITS)
    return (r.astype(np.int64), j2.astype(np.int64), m2.astype(np.int64),
            a.astype(np.int64), b.astype(np.int64))


def coalesce(keys, vals):
    if keys.size == 0:
        return keys, vals
    order = np.argsort(keys, kind="stable")
    k = keys[order]
    v = vals[order]
    starts = np.r_[0, np.flatnonzero(np.diff(k)) + 1]
    sums = np.add.reduceat(v, starts)
    uk = k[starts]
    mag = np.abs(sums)
    keep = mag > DROP_TOL * (mag.max() if mag.size else 0.0)
    return uk[keep], sums[keep]


class EState:
    """Sorted sparse state plus lazily cached group structure."""

    __slots__ = ("keys", "vals", "_g", "_gstarts", "_gcounts", "_uid",
                 "_ab_u", "_ranges", "_gamin", "acache")

    def __init__(self, keys, vals):
        self.keys = keys
        self.vals = vals
        self._g = None
        self._uid = None
        self._ranges = None
        self._gamin = None
        self.acache = {}

    def groups(self):
        if self._g is None:
            g = self.keys >> _AB_BITS
            if g.size:
                starts = np.r_[0, np.flatnonzero(np.diff(g)) + 1].astype(np.int64)
                self._g = g[starts]
                self._gstarts = starts
                self._gcounts = np.diff(np.r_[starts, g.size]).astype(np.int64)
            else:
                self._g = g
                self._gstarts = np.zeros(0, dtype=np.int64)
                self._gcounts = np.zeros(0, dtype=np.int64)
        return self._g, self._gstarts, self._gcounts

    def group_amin(self):
        if self._gamin is None:
            _, starts, _ = self.groups()
            a = ((self.keys >> _B_BITS) & ((1 << _A_BITS) - 1)) - _A_OFF
            self._gamin = (np.minimum.reduceat(a, starts)
                           if a.size else np.zeros(0, dtype=np.int64))
        return self._gamin

    def ab_compact(self):
        if self._uid is None:
            ab = self.keys & ((1 << _AB_BITS) - 1)
            uab, uid = np.unique(ab, return_inverse=True)
            self._uid = uid.astype(np.int64)
            self._ab_u = ((uab >> _B_BITS) - _A_OFF,
                          (uab & ((1 << _B_BITS) - 1)) - _B_OFF)
        return self._uid, self._ab_u

    def ranges(self):
        """(m2_min, m2_max, r_min, r_max) for quick disjointness tests."""
        if self._ranges is None:
            if self.keys.size == 0:
                self._ranges = (1, 0, 1, 0)
            else:
                m2 = ((self.keys >> _AB_BITS) & ((1 << _M_BITS) - 1)) - _M_OFF
                r = self.keys >> (_AB_BITS + _M_BITS + _J_BITS)
                self._ranges = (int(m2.min()), int(m2.max()),
                                int(r.min()), int(r.max()))
        return self._ranges


EMPTY = EState(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=complex))


def pack_qstate(q: QState) -> EState:
    keys, vals = [], []
    for r, expr, ang in q.terms:
        for (j2, m2), cang in (ang.coeffs or {}).items():
            for c, a, b in expr.terms:
                keys.append((r, j2, m2, a, b))
                vals.append(c * cang)
    if not keys:
        return EMPTY
    arr = np.array(keys, dtype=np.int64).T
    k = pack_keys(arr[0], arr[1], arr[2], arr[3], arr[4])
    return EState(*coalesce(k, np.array(vals, dtype=complex)))


def unpack_to_qstate(st: EState, template: QState) -> QState:
    """Back to the public term-list form (one term per (r, a, b))."""
    from .quantum_states import RadialExpr
    from .sphere_harmonics import AngularField

    r, j2, m2, a, b = unpack_keys(st.keys)
    buckets: dict[tuple, dict] = {}
    for i in range(st.keys.size):
        buckets.setdefault((int(r[i]), int(a[i]), int(b[i])), {})[
            (int(j2[i]), int(m2[i]))] = complex(st.vals[i])
    terms = []
    for (ri, ai, bi), coeffs in sorted(buckets.items()):
        terms.append((ri, RadialExpr.monomial(1.0, ai, bi),
                      AngularField(sigma2=template.s2 - 2 * ri, coeffs=coeffs)))
    return QState(s2=template.s2, mu=template.mu, profile=template.profile,
                  terms=terms, hbar=template.hbar, lmax2=template.lmax2)


def canonical_radial(st: EState, mu: float, a_shift: int = 0) -> EState:
    """Reduce radial monomials modulo the mass-shell relation.

    Multiplies by p^a_shift (to clear negative powers) and then rewrites
    p^(2k+d) (p0)^b with p-exponent d in {0, 1} via p^2 = (p0)^2 - mu^2.
    In that form the monomials are linearly independent functions, so a
    state representing the zero function becomes (numerically) empty.
    Used for residual measurements only; the production path keeps raw
    exponents, whose integrals are better conditioned.
    """
    from math import comb as _comb

    if st.keys.size == 0:
        return st
    r, j2, m2, a, b = unpack_keys(st.keys)
    a = a + a_shift
    if a.min() < 0:
        raise ValueError("a_shift too small to clear negative powers")
    keys_out, vals_out = [], []
    for i_pow in range(0, int(a.max()) // 2 + 1):
        for delta in (0, 1):
            sel = (a == 2 * i_pow + delta)
            if not sel.any():
                continue
            for t in range(i_pow + 1):
                w = _comb(i_pow, t) * (-mu**2) ** (i_pow - t)
                keys_out.append(pack_keys(r[sel], j2[sel], m2[sel],
                                          np.full(int(sel.sum()), delta,
                                                  dtype=np.int64),
                                          b[sel] + 2 * t))
                vals_out.append(st.vals[sel] * w)
    return EState(*coalesce(np.concatenate(keys_out),
                            np.concatenate(vals_out)))


def min_a(st: EState) -> int:
    if st.keys.size == 0:
        return 0
    return int((((st.keys >> _B_BITS) & ((1 << _A_BITS) - 1)) - _A_OFF).min())


# ----------------------------------------------------------------------
# generator plans.  A branch (dr, use_ddp, da, db, alpha, beta, chain)
# maps the component-r part of the state through d/dp (optionally) and the
# radial shift, scales by alpha + beta*r, and pushes the angular factor
# through the chain of ('n'|'m'|'mbar', i) multiplications and ('edth',) /
# ('edthp',); an edth always sits first in a chain.
# ----------------------------------------------------------------------

def _wedge(compA, compB, a: int, b: int):
    out = []
    for da1, db1, c1, ch1 in compA[a]:
        for da2, db2, c2, ch2 in compB[b]:
            out.append((da1 + da2, db1 + db2, c1 * c2, ch1 + ch2))
    for da1, db1, c1, ch1 in compA[b]:
        for da2, db2, c2, ch2 in compB[a]:
            out.append((da1 + da2, db1 + db2, -c1 * c2, ch1 + ch2))
    return out


def build_plans(s2: int, mu: float, hbar: float) -> dict:
    """Lower-index generator branch tables for one representation."""
    s = s2 / 2.0
    ih = 1j * hbar

    comp_p = {0: [(0, 1, 1.0, ())]}
    comp_v = {0: [(1, 0, 1.0 / mu, ())]}
    comp_m = {0: []}
    comp_mb = {0: []}
    for i in (1, 2, 3):
        comp_p[i] = [(1, 0, -1.0, (("n", i),))]
        comp_v[i] = [(0, 1, -1.0 / mu, (("n", i),))]
        comp_m[i] = [(0, 0, -1.0, (("m", i),))]
        comp_mb[i] = [(0, 0, -1.0, (("mbar", i),))]

    plans: dict[tuple, list] = {}
    for a in range(4):
        plans[("Plow", a)] = [(0, False, da, db, c, 0.0, ch)
                              for da, db, c, ch in comp_p[a]]

        br = []
        for da, db, c, ch in comp_v[a]:
            br.append((0, False, da, db, mu * hbar * s * c, -mu * hbar * c, ch))
        for da, db, c, ch in comp_m[a]:
            br.append((-1, False, da, db,
                       mu * hbar * (s2 + 1) * c / sqrt(2.0),
                       -mu * hbar * c / sqrt(2.0), ch))
        for da, db, c, ch in comp_mb[a]:
            br.append((1, False, da, db, mu * hbar * c / sqrt(2.0),
                       mu * hbar * c / sqrt(2.0), ch))
        plans[("Slow", a)] = br

        br = []
        for da, db, c, ch in comp_p[a]:
            br.append((0, False, da, db, 1.5 * ih * c, 0.0, ch))
        for da, db, c, ch in comp_v[a]:
            br.append((0, True, da, db + 1, ih * mu * c, 0.0, ch))
        for da, db, c, ch in comp_m[a]:
            br.append((0, False, da - 1, db, ih * mu**2 * c, 0.0,
                       (("edthp",),) + ch))
            br.append((-1, False, da - 1, db + 1,
                       -ih * mu * (s2 + 1) * c / sqrt(2.0),
                       ih * mu * c / sqrt(2.0), ch))
        for da, db, c, ch in comp_mb[a]:
            br.append((0, False, da - 1, db, ih * mu**2 * c, 0.0,
                       (("edth",),) + ch))
            br.append((1, False, da - 1, db + 1, ih * mu * c / sqrt(2.0),
                       ih * mu * c / sqrt(2.0), ch))
        plans[("Clow", a)] = br

    for a in range(4):
        for b in range(4):
            if a == b:
                plans[("Jlow", a, b)] = []
                continue
            br = []
            for da, db, c, ch in _wedge(comp_p, comp_v, a, b):
                br.append((0, True, da, db + 1, -ih * c / mu, 0.0, ch))
            for da, db, c, ch in _wedge(comp_p, comp_m, a, b):
                br.append((0, False, da - 1, db, -ih * c, 0.0,
                           (("edthp",),) + ch))
                br.append((-1, False, da - 1, db + 1,
                           ih * (s2 + 1) * c / (sqrt(2.0) * mu),
                           -ih * c / (sqrt(2.0) * mu), ch))
            for da, db, c, ch in _wedge(comp_p, comp_mb, a, b):
                br.append((0, False, da - 1, db, -ih * c, 0.0,
                           (("edth",),) + ch))
                br.append((1, False, da - 1, db + 1,
                           -ih * c / (sqrt(2.0) * mu),
                           -ih * c / (sqrt(2.0) * mu), ch))
            for da, db, c, ch in _wedge(comp_v, comp_m, a, b):
                br.append((-1, False, da, db,
                           -ih * (s2 + 1) * c / sqrt(2.0),
                           ih * c / sqrt(2.0), ch))
            for da, db, c, ch in _wedge(comp_v, comp_mb, a, b):
                br.append((1, False, da, db, ih * c / sqrt(2.0),
                           ih * c / sqrt(2.0), ch))
            for da, db, c, ch in _wedge(comp_m, comp_mb, a, b):
                br.append((0, False, da, db, -ih * s * c, ih * c, ch))
            plans[("Jlow", a, b)] = br
    psq = [(0, False, 0, 2, 1.0, 0.0, ())]
    for i in (1, 2, 3):
        psq.append((0, False, 2, 0, -1.0, 0.0, (("n", i), ("n", i))))
    plans[("Psq",)] = psq
    return plans


def _sign(a: int) -> float:
    return 1.0 if a == 0 else -1.0


def _scale_branch(br, c):
    dr, ddp, da, db, alpha, beta, ch = br
    return (dr, ddp, da, db, alpha * c, beta * c, ch)


def upper_plan(plans: dict, sym: tuple) -> list:
    """Branch list of an upper-index symbol ('P'|'S'|'C'|'J'|'Pd')."""
    kind = sym[0]
    if kind in ("P", "S", "C"):
        a = sym[1]
        return [_scale_branch(br, _sign(a))
                for br in plans[(kind + "low", a)]]
    if kind == "J":
        a, b = sym[1], sym[2]
        return [_scale_branch(br, _sign(a) * _sign(b))
                for br in plans[("Jlow", a, b)]]
    if kind == "Pd":
        u = sym[1]
        out = []
        for a in range(4):
            if u[a] != 0:
                out.extend(_scale_branch(br, _sign(a) * u[a])
                           for br in plans[("Plow", a)])
        return out
    if kind == "Psq":
        return plans[("Psq",)]
    raise KeyError(f"no direct plan for symbol {sym}")


def _merge_blocks(blocks):
    if len(blocks) == 1:
        return blocks[0]
    return tuple(np.concatenate([blk[i] for blk in blocks])
                 for i in range(7))


# ----------------------------------------------------------------------
# backends.  A "block" is (r, j2, m2, a, b, sig2, val): parallel label
# arrays plus the payload (coefficients, or stacked grid fields).  sig2 is
# the current spin weight of the angular factor; it starts at s2 - 2 r and
# is updated by edth inside chains.
# ----------------------------------------------------------------------

class _BackendBase:
    def __init__(self, s2, mu, epsilon, hbar, lmax2, rel_tol=1e-12):
        self.s2 = s2
        self.mu = mu
        self.epsilon = epsilon
        self.hbar = hbar
        self.lmax2 = lmax2
        self.rel_tol = rel_tol
        self.profile = GaussianProfile(epsilon, mu)
        self.radial = RadialIntegrals(self.profile, rel_tol)
        self.plans = build_plans(s2, mu, hbar)
        self.wr = np.array([comb(s2, r) for r in range(s2 + 1)], dtype=float)
        self._em2 = (epsilon * mu) ** 2
        self._norm_cache: dict[int, float] = {}

    # subclass interface -------------------------------------------------
    def _blocks_of(self, st):
        raise NotImplementedError

    def _collect(self, blocks):
        raise NotImplementedError

    def _ang_apply(self, op, block):
        raise NotImplementedError

    def inner(self, bra, ket) -> complex:
        raise NotImplementedError

    # shared --------------------------------------------------------------
    def apply(self, st, sym):
        if sym[0] == "K":
            return self._apply_K(st, sym[1])
        if sym[0] == "Kt":
            return self._apply_Kt(st, sym[1])
        if sym[0] == "U":
            return self._apply_U(st, sym[1], sym[2])
        if sym[0] == "Ut":
            return self._apply_Ut(st, sym[1], sym[2])
        if sym[0] == "W":
            return self._apply_W(st, sym[1], sym[2])
        branches = upper_plan(self.plans, sym)
        return self._apply_branches(st, branches)

    def _apply_U(self, st, d, e):
        """U^{de} = eps_{acde} K^a P^c: the volume-form contraction kills
        the singular parts of the rotation action, keeping states regular
        at the origin of the shell."""
        if d == e:
            return self._collect([])
        x, y = [i for i in range(4) if i not in (d, e)]
        w = float(_EPS[x, y, d, e])
        t1 = self.apply(self.apply(st, ("P", y)), ("K", x))
        t2 = self.apply(self.apply(st, ("P", x)), ("K", y))
        return self._sum_states([self._scale(t1, w), self._scale(t2, -w)])

    _apply_U_doc = None

    def _apply_Ut(self, st, e, h):
        """Ut^{eh} = eps^e_{ghb} P^g Kt^b (adjoint companion of U)."""
        if e == h:
            return self._collect([])
        g, b = [i for i in range(4) if i not in (e, h)]
        w = float(_sign(e) * _EPS[e, g, h, b])
        t1 = self.apply(self.apply(st, ("Kt", b)), ("P", g))
        t2 = self.apply(self.apply(st, ("Kt", g)), ("P", b))
        return self._sum_states([self._scale(t1, w), self._scale(t2, -w)])

    def _apply_W(self, st, d, h):
        """Fused double unit W^{dh} = sum_e U^{de} Ut^{eh}."""
        parts = []
        for e in range(4):
            if e == d:
                continue  # U^{de} vanishes for coincident labels
            tmp = self.apply(st, ("Ut", e, h))
            parts.append(self.apply(tmp, ("U", d, e)))
        return self._sum_states(parts)

    def _scale(self, st, c):
        raise NotImplementedError

    def _apply_K(self, st, a):
        """K^a = J^{af} p_f: multiplication first, then the rotation part."""
        parts = []
        for f in range(4):
            if f == a:
                continue
            tmp = self._apply_branches(st, self.plans[("Plow", f)])
            parts.append(self.apply(tmp, ("J", a, f)))
        return self._sum_states(parts)

    def _apply_Kt(self, st, a):
        """Kt^a = p_f J^{af}: the formal adjoint of K^a."""
        parts = []
        for f in range(4):
            if f == a:
                continue
            tmp = self.apply(st, ("J", a, f))
            parts.append(self._apply_branches(tmp, self.plans[("Plow", f)]))
        return self._sum_states(parts)

    def _ang_chain(self, chain, blocks):
        for op in chain:
            nxt = []
            for blk in blocks:
                if blk[0].size:
                    nxt.extend(self._ang_apply(op, blk))
            blocks = nxt
        return blocks

    def _pay_mul(self, val, fac):
        """Multiply payload by a per-entry factor array."""
        if val.ndim == 1:
            return val * fac
        return val * fac[(...,) + (None,) * (val.ndim - 1)]

    def _apply_branches(self, st, branches):
        base = self._blocks_of(st)
        by_chain: dict[tuple, list] = {}
        for dr, ddp, da, db, alpha, beta, chain in branches:
            for blk in base:
                r, j2, m2, a, b, sig2, val = blk
                if r.size == 0:
                    continue
                if dr:
                    sel = (r + dr >= 0) & (r + dr <= self.s2)
                    if not sel.any():
                        continue
                    if not sel.all():
                        r, j2, m2, a, b, sig2 = (r[sel], j2[sel], m2[sel],
                                                 a[sel], b[sel], sig2[sel])
                        val = val[sel]
                val = self._pay_mul(val, alpha + beta * r)
                if ddp:
                    pieces = []
                    for na, nb, f in ((a - 1, b, a.astype(float)),
                                      (a + 1, b - 2, b + 0.5),
                                      (a + 1, b,
                                       np.full(a.shape,
                                               -0.5 / self._em2))):
                        keep = f != 0.0
                        if not keep.any():
                            continue
                        pieces.append((r[keep], j2[keep], m2[keep],
                                       na[keep], nb[keep], sig2[keep],
                                       self._pay_mul(val, f)[keep]))
                else:
                    pieces = [(r, j2, m2, a, b, sig2, val)]
                for (pr, pj, pm, pa, pb, ps, pv) in pieces:
                    by_chain.setdefault(chain, []).append(
                        (pr + dr, pj, pm, pa + da, pb + db, ps, pv))
        out_blocks = []
        for chain, blocks in by_chain.items():
            merged = _merge_blocks(blocks)
            for ob in self._ang_chain(chain, [merged]):
                if ob[0].size:
                    out_blocks.append(ob)
        return self._collect(out_blocks)

    def _sum_states(self, parts):
        blocks = []
        for p in parts:
            blocks.extend(self._blocks_of(p))
        return self._collect(blocks)

    def norm2(self, st) -> float:
        key = id(st)
        val = self._norm_cache.get(key)
        if val is None:
            val = float(np.real(self.inner(st, st)))
            self._norm_cache[key] = val
        return val


class CoeffBackend(_BackendBase):
    """Production backend: harmonic coefficients, closed-form couplings."""

    _instances: dict[tuple, "CoeffBackend"] = {}

    @classmethod
    def for_state(cls, q: QState, rel_tol: float = 1e-12) -> "CoeffBackend":
        key = (q.s2, q.mu, q.profile.epsilon, q.hbar, q.lmax2, rel_tol)
        inst = cls._instances.get(key)
        if inst is None:
            inst = cls(q.s2, q.mu, q.profile.epsilon, q.hbar, q.lmax2,
                       rel_tol)
            cls._instances[key] = inst
        return inst

    def make_state(self, q: QState) -> EState:
        return pack_qstate(q)

    def _scale(self, st: EState, c) -> EState:
        return EState(st.keys, st.vals * c)

    def _blocks_of(self, st: EState):
        if st.keys.size == 0:
            return []
        r, j2, m2, a, b = unpack_keys(st.keys)
        return [(r, j2, m2, a, b, self.s2 - 2 * r, st.vals)]

    def _collect(self, blocks) -> EState:
        blocks = [blk for blk in blocks if blk[0].size]
        if not blocks:
            return EMPTY
        r, j2, m2, a, b, _, val = _merge_blocks(blocks)
        if int(j2.max()) > self.lmax2:
            raise BandLimitError(f"band limit 2j={int(j2.max())} exceeds "
                                 f"budget {self.lmax2}")
        return EState(*coalesce(pack_keys(r, j2, m2, a, b), val))

    def _ang_apply(self, op, blk):
        r, j2, m2, a, b, sig2, val = blk
        name = op[0]
        if name in ("n", "m", "mbar"):
            couple = {"n": couple_n, "m": couple_m, "mbar": couple_mbar}[name]
            dsig = {"n": 0, "m": 2, "mbar": -2}[name]
            outs = []
            for dj2, dm2, f in couple(op[1], sig2, j2, m2):
                nj2 = j2 + dj2
                nm2 = m2 + dm2
                ok = ((nj2 >= np.abs(sig2 + dsig)) & (np.abs(nm2) <= nj2)
                      & (f != 0.0))
                if ok.any():
                    outs.append((r[ok], nj2[ok], nm2[ok], a[ok], b[ok],
                                 sig2[ok] + dsig, val[ok] * f[ok]))
            return outs
        if name in ("edth", "edthp"):
            j = j2 / 2.0
            s = sig2 / 2.0
            if name == "edth":
                f = -np.sqrt(np.maximum((j + s + 1) * (j - s), 0.0) / 2.0)
                dsig = 2
            else:
                f = np.sqrt(np.maximum((j - s + 1) * (j + s), 0.0) / 2.0)
                dsig = -2
            ok = f != 0.0
            if not ok.any():
                return []
            return [(r[ok], j2[ok], m2[ok], a[ok], b[ok], sig2[ok] + dsig,
                     val[ok] * f[ok])]
        raise KeyError(f"unknown angular op {op}")

    def _radial_nodes(self):
        nodes = getattr(self, "_rad_nodes", None)
        if nodes is None:
            x, w = np.polynomial.legendre.leggauss(128)
            x = 4.5 * (x + 1.0)
            w = 4.5 * w
            scale = sqrt(2.0) * self.epsilon * self.mu
            pv = scale * x
            p0 = np.sqrt(self.mu**2 + pv**2)
            f2 = self.profile.value(pv) ** 2
            W = w * scale * f2 * pv**2 / p0
            nodes = (pv, p0, W)
            self._rad_nodes = nodes
        return nodes

    def _sampled_group(self, bra, ket, sa, na, sb, nb) -> complex:
        """Radial integral of one matched group by pointwise summation;
        used where singular monomials cancel only in the sum."""
        pv, p0, W = self._radial_nodes()
        aA = ((bra.keys[sa:sa + na] >> _B_BITS) & ((1 << _A_BITS) - 1)) - _A_OFF
        bA = (bra.keys[sa:sa + na] & ((1 << _B_BITS) - 1)) - _B_OFF
        aB = ((ket.keys[sb:sb + nb] >> _B_BITS) & ((1 << _A_BITS) - 1)) - _A_OFF
        bB = (ket.keys[sb:sb + nb] & ((1 << _B_BITS) - 1)) - _B_OFF
        s1 = np.conj(bra.vals[sa:sa + na]) @ (pv[None, :] ** aA[:, None]
                                              * p0[None, :] ** bA[:, None])
        s2 = ket.vals[sb:sb + nb] @ (pv[None, :] ** aB[:, None]
                                     * p0[None, :] ** bB[:, None])
        return complex(np.sum(W * s1 * s2))

    def inner(self, bra: EState, ket: EState) -> complex:
        if bra.keys.size == 0 or ket.keys.size == 0:
            return 0.0 + 0j
        mb = bra.ranges()
        mk = ket.ranges()
        if mb[0] > mk[1] or mk[0] > mb[1] or mb[2] > mk[3] or mk[2] > mb[3]:
            return 0.0 + 0j
        gA, sA, cA = bra.groups()
        gB, sB, cB = ket.groups()
        common, ia, ib = np.intersect1d(gA, gB, assume_unique=True,
                                        return_indices=True)
        if common.size == 0:
            return 0.0 + 0j
        rr = (common >> (_M_BITS + _J_BITS)).astype(np.int64)
        wr = self.wr[rr]
        bad = (bra.group_amin()[ia] + ket.group_amin()[ib] + 2) < 0
        total = 0.0 + 0j
        if bad.any():
            for k in np.flatnonzero(bad):
                total += wr[k] * self._sampled_group(
                    bra, ket, int(sA[ia[k]]), int(cA[ia[k]]),
                    int(sB[ib[k]]), int(cB[ib[k]]))
            good = ~bad
            if not good.any():
                return total
            ia, ib, wr = ia[good], ib[good], wr[good]
        uidA, (aA, bA) = bra.ab_compact()
        uidB, (aB, bB) = ket.ab_compact()
        A_tot = aA[:, None] + aB[None, :] + 2
        B_tot = bA[:, None] + bB[None, :] - 1
        M = self._radial_block(A_tot, B_tot)
        return total + _K.group_dot(sA[ia], cA[ia], sB[ib], cB[ib], wr,
                                    uidA, np.conj(bra.vals), uidB,
                                    ket.vals, M)

    def _radial_block(self, A_tot, B_tot):
        """Vectorized radial-integral gather with a lazily grown dense
        cache; entries with negative total p-power (reachable only from
        sampled groups) read as zero."""
        dense = getattr(self, "_radial_dense", None)
        amax = int(A_tot.max()) if A_tot.size else 0
        if dense is None or dense.shape[0] <= amax:
            old = dense
            dense = np.full((amax + 8, 160), np.nan)
            if old is not None:
                dense[:old.shape[0]] = old
            self._radial_dense = dense
        Bo = B_tot + 80
        Ac = np.clip(A_tot, 0, None)
        block = dense[Ac, Bo]
        missing = np.isnan(block)
        if missing.any():
            for i, jj in zip(*np.nonzero(missing)):
                a = int(A_tot[i, jj])
                if a >= 0:
                    dense[a, Bo[i, jj]] = self.radial.value(
                        a, int(B_tot[i, jj]))
            block = dense[Ac, Bo]
        block = np.where(A_tot < 0, 0.0, block)
        return np.ascontiguousarray(block)


# ----------------------------------------------------------------------
# grid backend: independent angular numerics for cross-validation
# ----------------------------------------------------------------------

def _fornberg_weights(x, x0):
    """First-derivative stencil weights at x0 for nodes x (Fornberg)."""
    n = len(x)
    order = 1
    w = np.zeros((order + 1, n))
    w[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0] - x0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    w[k, i] = c1 * (k * w[k - 1, i - 1]
                                    - c5 * w[k, i - 1]) / c2
                w[0, i] = -c1 * c5 * w[0, i - 1] / c2
            for k in range(mn, 0, -1):
                w[k, j] = (c4 * w[k, j] - k * w[k - 1, j]) / c3
            w[0, j] = c4 * w[0, j] / c3
        c1 = c2
    return w[order]


class GridState:
    __slots__ = ("r", "a", "b", "fields", "acache")

    def __init__(self, r, a, b, fields):
        self.r = r
        self.a = a
        self.b = b
        self.fields = fields  # (n_terms, n_theta, n_phi) complex
        self.acache = {}


class GridBackend(_BackendBase):
    """Brute-force backend on a (theta, phi) product grid.

    Tetrad components come pointwise from their stereographic formulas and
    multiply directly; edth uses exact FFT phi-derivatives plus local-stencil
    theta-derivatives.  Only the symbolic radial bookkeeping is shared with
    the production path.
    """

    def __init__(self, s2, mu, epsilon, hbar, lmax2, n_theta=200,
                 stencil=11, rel_tol=1e-12):
        super().__init__(s2, mu, epsilon, hbar, lmax2, rel_tol)
        n_phi = 2 * (lmax2 + 8)
        x, w = np.polynomial.legendre.leggauss(n_theta)
        order = np.argsort(-x)
        self.x = x[order]
        self.w_theta = w[order]
        self.theta = np.arccos(self.x)
        self.n_theta = n_theta
        self.n_phi = n_phi
        self.phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
        self.zeta = (np.exp(1j * self.phi)[None, :]
                     / np.tan(self.theta / 2.0)[:, None])
        self.weights = self.w_theta[:, None] * (2.0 * np.pi / n_phi) \
            * np.ones((1, n_phi))
        n1, n2, n3 = direction_components(self.zeta)
        self.nvec = (n1.astype(complex), n2.astype(complex),
                     n3.astype(complex))
        self.mvec = m_components(self.zeta)
        D = np.zeros((n_theta, n_theta))
        half = stencil // 2
        for i in range(n_theta):
            lo = min(max(i - half, 0), n_theta - stencil)
            D[i, lo:lo + stencil] = _fornberg_weights(
                self.theta[lo:lo + stencil], self.theta[i])
        self.Dtheta = D
        self.kphi = np.fft.fftfreq(n_phi, d=1.0 / n_phi)
        self.sin_theta = np.sin(self.theta)
        self.cot_half = 1.0 / np.tan(self.theta / 2.0)
        self.eiphi = np.exp(1j * self.phi)

    def make_state(self, q: QState) -> GridState:
        from ._wigner import dyad_direct

        rows = []
        for r, expr, ang in q.terms:
            field = np.zeros((self.n_theta, self.n_phi), dtype=complex)
            for (j2, m2), c in (ang.coeffs or {}).items():
                field += c * dyad_direct(ang.sigma2, j2, m2, self.zeta)
            for c, a, b in expr.terms:
                rows.append((r, a, b, c * field))
        blocks = [(np.array([r]), np.zeros(1, dtype=np.int64),
                   np.zeros(1, dtype=np.int64), np.array([a]),
                   np.array([b]), np.array([self.s2 - 2 * r]),
                   f[None, :, :]) for r, a, b, f in rows]
        return self._collect(blocks)

    def _scale(self, st: GridState, c) -> GridState:
        return GridState(st.r, st.a, st.b, st.fields * c)

    def _blocks_of(self, st: GridState):
        if st.r.size == 0:
            return []
        z = np.zeros_like(st.r)
        return [(st.r, z, z, st.a, st.b, self.s2 - 2 * st.r, st.fields)]

    def _collect(self, blocks) -> GridState:
        blocks = [blk for blk in blocks if blk[0].size]
        if not blocks:
            return GridState(np.zeros(0, dtype=np.int64),
                             np.zeros(0, dtype=np.int64),
                             np.zeros(0, dtype=np.int64),
                             np.zeros((0, self.n_theta, self.n_phi),
                                      dtype=complex))
        r = np.concatenate([blk[0] for blk in blocks])
        a = np.concatenate([blk[3] for blk in blocks])
        b = np.concatenate([blk[4] for blk in blocks])
        f = np.concatenate([blk[6] for blk in blocks], axis=0)
        key = ((r + 256) * 4096 + (a + 256)) * 4096 + (b + 256)
        order = np.argsort(key, kind="stable")
        key = key[order]
        f = f[order]
        starts = np.r_[0, np.flatnonzero(np.diff(key)) + 1]
        uk = key[starts]
        out = np.add.reduceat(f, starts, axis=0)
        rr = uk // (4096 * 4096) - 256
        aa = (uk // 4096) % 4096 - 256
        bb = uk % 4096 - 256
        keep = np.max(np.abs(out), axis=(1, 2)) > 0.0
        return GridState(rr[keep], aa[keep], bb[keep], out[keep])

    def _edth_fields(self, f, sig2, prime: bool):
        ft = np.einsum("ij,njk->nik", self.Dtheta, f)
        fp = np.fft.ifft(1j * self.kphi[None, None, :]
                         * np.fft.fft(f, axis=2), axis=2)
        sg = (sig2.astype(float) / 2.0)[:, None, None] \
            * self.cot_half[None, :, None]
        if not prime:
            return ((-ft + 1j * fp / self.sin_theta[None, :, None] + sg * f)
                    * self.eiphi[None, None, :] / sqrt(2.0))
        return ((-ft - 1j * fp / self.sin_theta[None, :, None] - sg * f)
                * np.conj(self.eiphi)[None, None, :] / sqrt(2.0))

    def _ang_apply(self, op, blk):
        r, j2, m2, a, b, sig2, f = blk
        name = op[0]
        if name == "n":
            g = self.nvec[op[1] - 1]
            return [(r, j2, m2, a, b, sig2, f * g[None, :, :])]
        if name == "m":
            g = self.mvec[op[1] - 1]
            return [(r, j2, m2, a, b, sig2 + 2, f * g[None, :, :])]
        if name == "mbar":
            g = np.conj(self.mvec[op[1] - 1])
            return [(r, j2, m2, a, b, sig2 - 2, f * g[None, :, :])]
        if name == "edth":
            return [(r, j2, m2, a, b, sig2 + 2,
                     self._edth_fields(f, sig2, False))]
        if name == "edthp":
            return [(r, j2, m2, a, b, sig2 - 2,
                     self._edth_fields(f, sig2, True))]
        raise KeyError(f"unknown angular op {op}")

    def inner(self, bra: GridState, ket: GridState) -> complex:
        total = 0.0 + 0j
        w = self.weights
        for i in range(bra.r.size):
            same = np.flatnonzero(ket.r == bra.r[i])
            if same.size == 0:
                continue
            fa = np.conj(bra.fields[i]) * w
            for j in same:
                ang = np.sum(fa * ket.fields[j])
                rad = self.radial.value(int(bra.a[i] + ket.a[j] + 2),
                                        int(bra.b[i] + ket.b[j] - 1))
                total += self.wr[bra.r[i]] * ang * rad
        return total


# ----------------------------------------------------------------------
# word moments and moment tensors
# ----------------------------------------------------------------------

_SYM_WEIGHT = {"P": 1, "Pd": 1, "Psq": 1, "S": 2, "C": 2, "J": 2,
               "K": 3, "Kt": 3, "U": 8, "Ut": 8, "W": 16}


def _resolve(sym, assignment):
    kind = sym[0]
    slots = []
    for slot in sym[1:]:
        if isinstance(slot, str):
            slots.append(assignment[slot])
        else:
            slots.append(slot)
    if kind == "P" and len(slots) == 1 and isinstance(slots[0], tuple):
        return ("Pd", slots[0])
    return (kind, *slots)


def _labels_of(word):
    labels = []
    for sym in word:
        for slot in sym[1:]:
            if isinstance(slot, str) and slot not in labels:
                labels.append(slot)
    return labels


def _split_point(word):
    wts = [_SYM_WEIGHT[s[0]] for s in word]
    best, best_cost = 0, float("inf")
    for k in range(len(word) + 1):
        cost = max(sum(wts[:k]), sum(wts[k:]))
        if cost < best_cost:
            best, best_cost = k, cost
    return best


class WordEvaluator:
    """Moment evaluation with suffix memoization and adjoint-split form.

    Every generator is formally self-adjoint, so <psi|O1...On|psi> equals
    the inner product of (Ok...O1)psi with (Ok+1...On)psi for any split;
    splitting near the middle halves the band-limit growth on each side.
    """

    def __init__(self, backend, base_state):
        self.backend = backend
        self.base = base_state
        self._cache: dict[tuple, object] = {}
        self.norm2 = backend.norm2(base_state)

    def state_for(self, word: tuple):
        if not word:
            return self.base
        hit = self._cache.get(word)
        if hit is None:
            prev = self.state_for(word[1:])
            hit = self.backend.apply(prev, word[0])
            self._cache[word] = hit
        return hit

    def moment(self, word, split: Optional[bool] = None) -> complex:
        word = tuple(word)
        if split is None:
            split = len(word) > 3
        if not split:
            ket = self.state_for(word)
            return self.backend.inner(self.base, ket) / self.norm2
        k = _split_point(word)
        bra = self.state_for(tuple(reversed(word[:k])))
        ket = self.state_for(word[k:])
        return self.backend.inner(bra, ket) / self.norm2

    def tensor(self, word) -> np.ndarray:
        """Dense array over the word's free labels, alphabetical axis order.

        Assignments differing only by permutations inside runs of adjacent
        momentum symbols (which commute) are evaluated once.
        """
        word = tuple(word)
        counts: dict[str, int] = {}
        for sym in word:
            for slot in sym[1:]:
                if isinstance(slot, str):
                    counts[slot] = counts.get(slot, 0) + 1
        if any(v > 2 for v in counts.values()):
            raise EngineRangeError("a label may appear at most twice")
        labels = [lab for lab in _labels_of(word) if counts[lab] == 1]
        bound = [lab for lab in _labels_of(word) if counts[lab] == 2]
        n = len(labels)
        if n == 0 and not bound:
            return np.array(self.moment(word))
        if n > 8:
            raise EngineRangeError(f"moment tensor rank {n} exceeds 8")
        slabels = sorted(labels)
        runs = []
        cur: list[str] = []
        for sym in word:
            if sym[0] in ("P", "Pd", "Psq"):
                for slot in sym[1:]:
                    if isinstance(slot, str):
                        cur.append(slot)
            else:
                if len(cur) > 1:
                    runs.append(tuple(cur))
                cur = []
        if len(cur) > 1:
            runs.append(tuple(cur))
        k = _split_point(word)
        out = np.zeros((4,) * n, dtype=complex)
        cache: dict[tuple, complex] = {}
        for assign_vals in product(range(4), repeat=n):
            assignment = dict(zip(slabels, assign_vals))
            total = 0.0 + 0j
            for bound_vals in product(range(4), repeat=len(bound)):
                assignment.update(zip(bound, bound_vals))
                canon = dict(assignment)
                for run in runs:
                    vals = sorted(canon[lab] for lab in run)
                    for lab, v in zip(run, vals):
                        canon[lab] = v
                ckey = tuple(sorted(canon.items()))
                val = cache.get(ckey)
                if val is None:
                    bra_word = tuple(_resolve(s, canon)
                                     for s in reversed(word[:k]))
                    ket_word = tuple(_resolve(s, canon) for s in word[k:])
                    bra = self.state_for(bra_word)
                    ket = self.state_for(ket_word)
                    val = self.backend.inner(bra, ket) / self.norm2
                    cache[ckey] = val
                total += val
            out[assign_vals] = total
        return out
