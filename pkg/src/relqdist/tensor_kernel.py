"""Minimal dense 4-dimensional tensor algebra.

Everything lives in a fixed Cartesian frame with metric signature (+,-,-,-).
Index raising and lowering is always explicit: callers insert the metric
``eta()`` themselves, ``contract`` only sums paired slots.  The Levi-Civita
convention is pinned to ``eps[0,1,2,3] = +1``; with this choice the null
tetrad built in :mod:`relqdist.sphere_harmonics` satisfies the contraction
identity ``eps_{abcd} p^a v^b m^c mbar^d = i*mu`` (checked in the test suite).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import Iterable, Sequence

import numpy as np

MAX_RANK = 8

ETA_DIAG = np.array([1.0, -1.0, -1.0, -1.0])

__all__ = [
    "Tensor4",
    "LorentzTransform",
    "PoincareTransform",
    "eta",
    "epsilon",
    "contract",
    "make_boost",
    "make_rotation",
    "compose",
    "inverse",
]


class TensorError(ValueError):
    """Raised for invalid slots, ranks, or non-finite entries."""


@dataclass(frozen=True)
class Tensor4:
    """Dense complex tensor with ``rank`` slots, each running over 0..3."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=complex)
        if arr.ndim > MAX_RANK:
            raise TensorError(f"rank {arr.ndim} exceeds maximum {MAX_RANK}")
        if arr.shape != (4,) * arr.ndim:
            raise TensorError(f"every axis must have length 4, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise TensorError("non-finite tensor entries")
        object.__setattr__(self, "entries", arr)

    @property
    def rank(self) -> int:
        return self.entries.ndim

    def __getitem__(self, idx):
        return self.entries[idx]

    def __add__(self, other: "Tensor4") -> "Tensor4":
        return Tensor4(self.entries + other.entries)

    def __sub__(self, other: "Tensor4") -> "Tensor4":
        return Tensor4(self.entries - other.entries)

    def __mul__(self, scalar) -> "Tensor4":
        return Tensor4(self.entries * scalar)

    __rmul__ = __mul__


def eta() -> Tensor4:
    """Metric eta_ab = diag(1,-1,-1,-1) (identical entries for eta^ab)."""
    return Tensor4(np.diag(ETA_DIAG).astype(complex))


def _levi_civita() -> np.ndarray:
    e = np.zeros((4, 4, 4, 4))
    for perm in permutations(range(4)):
        # parity via inversion count
        inv = sum(perm[i] > perm[j] for i in range(4) for j in range(i + 1, 4))
        e[perm] = -1.0 if inv % 2 else 1.0
    return e


_EPS = _levi_civita()


def epsilon() -> Tensor4:
    """Totally antisymmetric volume form with eps[0,1,2,3] = +1 (all lower)."""
    return Tensor4(_EPS.astype(complex))


def contract(t1: Tensor4, t2: Tensor4, index_pairs: Iterable[tuple[int, int]]) -> Tensor4:
    """Tensor product of ``t1`` and ``t2`` with the given slot pairs summed.

    ``index_pairs`` holds ``(slot_of_t1, slot_of_t2)`` pairs; the contraction
    is a plain component sum, so metric contractions require an explicit
    ``eta()`` factor on one side.
    """
    pairs = list(index_pairs)
    ax1 = [p[0] for p in pairs]
    ax2 = [p[1] for p in pairs]
    for a in ax1:
        if not 0 <= a < t1.rank:
            raise TensorError(f"slot {a} out of range for rank-{t1.rank} tensor")
    for a in ax2:
        if not 0 <= a < t2.rank:
            raise TensorError(f"slot {a} out of range for rank-{t2.rank} tensor")
    if len(set(ax1)) != len(ax1) or len(set(ax2)) != len(ax2):
        raise TensorError("repeated slot in contraction")
    out_rank = t1.rank + t2.rank - 2 * len(pairs)
    if out_rank > MAX_RANK:
        raise TensorError(f"result rank {out_rank} exceeds maximum {MAX_RANK}")
    return Tensor4(np.tensordot(t1.entries, t2.entries, axes=(ax1, ax2)))


@dataclass(frozen=True)
class LorentzTransform:
    """Proper orthochronous Lorentz matrix Lambda^a_b."""

    matrix: np.ndarray
    _TOL: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise TensorError("Lorentz matrix must be 4x4")
        eta_m = np.diag(ETA_DIAG)
        defect = m.T @ eta_m @ m - eta_m
        if np.max(np.abs(defect)) > self._TOL:
            raise TensorError("matrix does not preserve the metric")
        if abs(np.linalg.det(m) - 1.0) > self._TOL:
            raise TensorError("determinant is not +1")
        if m[0, 0] < 1.0 - self._TOL:
            raise TensorError("transformation is not orthochronous")
        object.__setattr__(self, "matrix", m)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(vec, dtype=float)


@dataclass(frozen=True)
class PoincareTransform:
    """Pair (Lambda, xi): x -> Lambda x + xi."""

    lorentz: LorentzTransform
    translation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float)
        if t.shape != (4,):
            raise TensorError("translation must be a 4-vector")
        object.__setattr__(self, "translation", t)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.lorentz.apply(vec) + self.translation


def make_boost(rapidity: Sequence[float]) -> LorentzTransform:
    """Pure boost with rapidity 3-vector chi; Lambda^0_0 = cosh|chi|."""
    chi = np.asarray(rapidity, dtype=float)
    mag = float(np.linalg.norm(chi))
    m = np.eye(4)
    if mag > 0.0:
        n = chi / mag
        ch, sh = np.cosh(mag), np.sinh(mag)
        m[0, 0] = ch
        m[0, 1:] = sh * n
        m[1:, 0] = sh * n
        m[1:, 1:] = np.eye(3) + (ch - 1.0) * np.outer(n, n)
    return LorentzTransform(m)


def make_rotation(axis: Sequence[float], angle: float) -> LorentzTransform:
    """Spatial rotation about ``axis`` by ``angle`` (right-handed)."""
    n = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(n)
    if norm == 0.0:
        raise TensorError("rotation axis must be non-zero")
    n = n / norm
    k = np.array([[0.0, -n[2], n[1]], [n[2], 0.0, -n[0]], [-n[1], n[0], 0.0]])
    r3 = np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)
    m = np.eye(4)
    m[1:, 1:] = r3
    return LorentzTransform(m)


def compose(a: LorentzTransform, b: LorentzTransform) -> LorentzTransform:
    return LorentzTransform(a.matrix @ b.matrix)


def inverse(a: LorentzTransform) -> LorentzTransform:
    eta_m = np.diag(ETA_DIAG)
    return LorentzTransform(eta_m @ a.matrix.T @ eta_m)


def boost_to(u: np.ndarray) -> LorentzTransform:
    """Pure boost mapping (1,0,0,0) to the unit timelike vector ``u``."""
    u = np.asarray(u, dtype=float)
    norm = u @ (ETA_DIAG * u)
    if abs(norm - 1.0) > 1e-9 or u[0] <= 0:
        raise TensorError("boost_to needs a future unit timelike vector")
    m = np.eye(4)
    g = u[0]
    m[0, 0] = g
    m[0, 1:] = u[1:]
    m[1:, 0] = u[1:]
    m[1:, 1:] = np.eye(3) + np.outer(u[1:], u[1:]) / (1.0 + g)
    return LorentzTransform(m)
