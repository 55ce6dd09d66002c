import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from relqdist.tensor_kernel import (LorentzTransform, PoincareTransform,
                                    Tensor4, TensorError, boost_to, compose,
                                    contract, epsilon, eta, inverse,
                                    make_boost, make_rotation)

ETA = np.array([1.0, -1.0, -1.0, -1.0])


def test_metric_inverse_is_identity():
    # one raised slot of the metric gives the identity map
    delta = contract(eta(), eta(), [(1, 0)])
    assert_allclose(delta.entries, np.eye(4), atol=1e-15)


def test_epsilon_total_contraction():
    # raise all four slots and contract: signature (+,-,-,-) gives -24
    eps = epsilon().entries.real
    eps_up = np.einsum("a,b,c,d,abcd->abcd", ETA, ETA, ETA, ETA, eps)
    assert_allclose(np.einsum("abcd,abcd->", eps_up, eps), -24.0)


def test_epsilon_components():
    eps = epsilon()
    assert eps[0, 1, 2, 3] == 1.0
    assert eps[0, 1, 3, 2] == -1.0
    assert eps[0, 0, 1, 2] == 0.0


def test_rest_momentum_norm():
    p = Tensor4(np.array([2.5, 0, 0, 0], dtype=complex))
    p_lo = contract(eta(), p, [(1, 0)])
    assert_allclose(contract(p, p_lo, [(0, 0)]).entries, 2.5**2)


def test_contract_slot_errors():
    p = Tensor4(np.zeros(4, dtype=complex))
    with pytest.raises(TensorError):
        contract(p, p, [(1, 0)])
    big = Tensor4(np.zeros((4,) * 5, dtype=complex))
    with pytest.raises(TensorError):
        contract(big, big, [])  # rank 10 > 8


@given(st.lists(st.floats(-1.2, 1.2), min_size=3, max_size=3),
       st.lists(st.floats(-1.2, 1.2), min_size=3, max_size=3))
@settings(max_examples=25, deadline=None)
def test_boost_group_laws(chi1, chi2):
    b1 = make_boost(chi1)
    b2 = make_boost(chi2)
    eta_m = np.diag(ETA)
    prod = LorentzTransform(b1.matrix @ b2.matrix, _TOL=1e-10)
    assert np.abs(prod.matrix.T @ eta_m @ prod.matrix - eta_m).max() < 1e-11
    ident = compose(b1, inverse(b1)).matrix
    assert np.abs(ident - np.eye(4)).max() < 1e-12


def test_boost_components():
    chi = 0.83
    b = make_boost([chi, 0, 0])
    assert_allclose(b.matrix[0, 0], np.cosh(chi))
    assert_allclose(b.matrix[0, 1], np.sinh(chi))
    assert_allclose(make_boost([0, 0, 0]).matrix, np.eye(4))


def test_rotation_is_lorentz_and_fixes_time():
    r = make_rotation([1.0, -0.3, 2.0], 1.2)
    assert_allclose(r.matrix[:, 0], [1, 0, 0, 0], atol=1e-15)
    assert_allclose(r.matrix[0, :], [1, 0, 0, 0], atol=1e-15)


def test_boost_to_maps_rest_axis():
    u = np.array([np.cosh(0.9), 0.2, 0.3, 1.0])
    u = u / np.sqrt(u @ (ETA * u))
    u[0] = np.sqrt(1 + u[1:] @ u[1:])
    b = boost_to(u)
    assert_allclose(b.matrix[:, 0], u, atol=1e-12)


def test_contract_bilinear():
    rng = np.random.default_rng(0)
    t1 = Tensor4(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    t2 = Tensor4(rng.normal(size=(4, 4)))
    u = Tensor4(rng.normal(size=(4, 4)))
    a, b = 0.7 - 0.2j, 1.3
    lhs = contract(Tensor4(a * t1.entries + b * t2.entries), u, [(1, 0)])
    rhs = (a * contract(t1, u, [(1, 0)]).entries
           + b * contract(t2, u, [(1, 0)]).entries)
    assert_allclose(lhs.entries, rhs, rtol=1e-12)


def test_lorentz_validation_rejects_bad_matrix():
    m = np.eye(4)
    m[0, 0] = 1.1
    with pytest.raises(TensorError):
        LorentzTransform(m)


def test_poincare_apply():
    g = PoincareTransform(make_boost([0, 0, 0.5]), np.array([1.0, 2, 3, 4]))
    x = np.array([0.0, 0, 0, 0])
    assert_allclose(g.apply(x), g.translation)
