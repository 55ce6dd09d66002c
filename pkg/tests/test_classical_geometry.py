import numpy as np
import pytest
from numpy.testing import assert_allclose

from relqdist.classical_geometry import (ClassicalSystem, NullSeparation,
                                         ParallelMomenta, TimelikeLine,
                                         closest_approach_oracle,
                                         line_from_system, lorentz_distance,
                                         pair_invariants, realize_point_distance,
                                         relative_position, spin_and_moment,
                                         system_from_line, transform_line,
                                         transform_system)
from relqdist.tensor_kernel import (PoincareTransform, compose, make_boost,
                                    make_rotation)

ETA = np.array([1.0, -1.0, -1.0, -1.0])


def random_system(rng, spin_scale=1.0):
    line = TimelikeLine(make_boost(rng.normal(size=3) * 0.6),
                        rng.normal(size=4) * 2.0)
    mu = float(rng.uniform(0.5, 3.0))
    return system_from_line(line, mu, spin_scale * rng.uniform(0, 2.0))


def test_spin_and_moment_rest_frame():
    mu, S0 = 2.0, 0.7
    J = np.zeros((4, 4))
    J[1, 2], J[2, 1] = S0, -S0
    sys = ClassicalSystem(p=np.array([mu, 0, 0, 0]), J=J)
    S, M, resid = spin_and_moment(sys)
    # only z-component of the spin survives; sign set by the orientation
    assert_allclose(S, [0, 0, 0, mu * S0], atol=1e-14)
    assert_allclose(M, 0, atol=1e-14)
    assert resid < 1e-12


def test_spin_and_moment_zero():
    sys = ClassicalSystem(p=np.array([1.5, 0.1, 0, 0.3]),
                          J=np.zeros((4, 4)))
    S, M, resid = spin_and_moment(sys)
    assert_allclose(S, 0, atol=1e-14)
    assert_allclose(M, 0, atol=1e-14)


def test_decomposition_identity_random():
    rng = np.random.default_rng(1)
    for _ in range(10):
        sys = random_system(rng)
        S, M, resid = spin_and_moment(sys)
        assert resid < 1e-10
        p_lo = ETA * sys.p
        assert abs(S @ p_lo) < 1e-10 * np.linalg.norm(S + 1e-30)
        assert abs(M @ p_lo) < 1e-9 * max(np.linalg.norm(M), 1.0)


def test_line_system_round_trip():
    rng = np.random.default_rng(2)
    for _ in range(8):
        line = TimelikeLine(make_boost(rng.normal(size=3) * 0.5),
                            rng.normal(size=4))
        mu, s0 = rng.uniform(0.5, 2.0), rng.uniform(0, 1.5)
        back = line_from_system(system_from_line(line, mu, s0))
        assert_allclose(back.tangent, line.tangent, atol=1e-12)
        # representative point differs only along the tangent
        diff = back.translation - line.translation
        u_lo = ETA * line.tangent
        proj = diff - (diff @ u_lo) * line.tangent
        assert_allclose(proj, 0, atol=1e-10)


def test_line_from_offset_system():
    line = TimelikeLine(make_boost([0, 0, 0]), np.array([0.0, 1.0, 0, 0]))
    sys = system_from_line(line, 2.0, 0.0)
    _, M, _ = spin_and_moment(sys)
    assert_allclose(M / 4.0, [0, 1, 0, 0], atol=1e-14)


def test_pair_invariants():
    mu = 1.3
    s1 = ClassicalSystem(p=np.array([mu, 0, 0, 0]), J=np.zeros((4, 4)))
    with pytest.raises(ParallelMomenta):
        pair_invariants(s1, s1)
    chi = 0.8
    s2 = system_from_line(TimelikeLine(make_boost([0, 0, chi]),
                                       np.zeros(4)), 2.0, 0.0)
    P2, S12, Pi = pair_invariants(s1, s2)
    assert_allclose(P2, mu * 2.0 * np.cosh(chi), rtol=1e-13)
    # projector algebra
    assert_allclose(Pi @ Pi, Pi, atol=1e-11)
    assert_allclose(Pi @ s1.p, 0, atol=1e-10)
    assert_allclose(Pi @ s2.p, 0, atol=1e-10)
    assert_allclose(np.trace(Pi), 2.0, rtol=1e-12)


def test_relative_position_intersecting_lines():
    l1 = TimelikeLine(make_boost([0, 0, 0]), np.zeros(4))
    l2 = TimelikeLine(make_boost([0.5, 0, 0.2]), np.zeros(4))
    s1 = system_from_line(l1, 1.0, 0.4)
    s2 = system_from_line(l2, 2.0, 0.9)
    _, d = relative_position(s1, s2)
    assert d < 1e-10


def test_relative_position_known_offset():
    l1 = TimelikeLine(make_boost([0, 0, 0]), np.zeros(4))
    l2 = TimelikeLine(make_boost([0, 0, 1.0]), np.array([0, 3.0, 0, 0]))
    s1 = system_from_line(l1, 1.0, 0.0)
    s2 = system_from_line(l2, 1.7, 1.1)
    dvec, d = relative_position(s1, s2)
    assert_allclose(d, 3.0, rtol=1e-12)
    for sys in (s1, s2):
        assert abs(dvec @ (ETA * sys.p)) < 1e-10 * np.linalg.norm(dvec)


def test_relative_position_rescaling_invariance():
    rng = np.random.default_rng(3)
    s1 = random_system(rng)
    s2 = random_system(rng)
    d1, _ = relative_position(s1, s2)
    s1b = ClassicalSystem(p=2.7 * s1.p, J=2.7 * s1.J)
    s2b = ClassicalSystem(p=0.4 * s2.p, J=0.4 * s2.J)
    d2, _ = relative_position(s1b, s2b)
    assert_allclose(d1, d2, atol=1e-10 * (1 + np.abs(d1).max()))


def test_translation_invariance_of_relative_position():
    rng = np.random.default_rng(4)
    s1 = random_system(rng)
    s2 = random_system(rng)
    xi = rng.normal(size=4)
    g = PoincareTransform(make_boost([0, 0, 0]), xi)
    d1, _ = relative_position(s1, s2)
    d2, _ = relative_position(transform_system(g, s1),
                              transform_system(g, s2))
    assert_allclose(d1, d2, atol=1e-10 * (1 + np.abs(d1).max()))


def test_lorentz_distance_gauge_invariance():
    l1 = TimelikeLine(make_boost([0.2, 0, 0.3]), np.array([1.0, 2, 0, 1]))
    l2 = TimelikeLine(make_boost([0, 0.4, -0.1]), np.array([0, 1, 1, 0.0]))
    D = lorentz_distance(l1, l2)
    l1b = TimelikeLine(l1.boost, l1.translation + 3.3 * l1.tangent)
    assert_allclose(lorentz_distance(l1b, l2), D, rtol=1e-12)


def test_lorentz_distance_vs_oracle_random():
    rng = np.random.default_rng(5)
    count = 0
    while count < 100:
        l1 = TimelikeLine(make_boost(rng.normal(size=3) * 0.7),
                          rng.normal(size=4) * 2)
        l2 = TimelikeLine(make_boost(rng.normal(size=3) * 0.7),
                          rng.normal(size=4) * 2)
        try:
            D = lorentz_distance(l1, l2)
        except Exception:
            continue
        nu12, nu21, Do = closest_approach_oracle(l1, l2)
        assert_allclose(D, Do, rtol=1e-12, atol=1e-12)
        # foot-point separation orthogonal to both tangents
        sep = nu12 - nu21
        assert abs(sep @ (ETA * l1.tangent)) < 1e-9
        assert abs(sep @ (ETA * l2.tangent)) < 1e-9
        count += 1


def test_distance_matches_system_route():
    rng = np.random.default_rng(6)
    for _ in range(20):
        l1 = TimelikeLine(make_boost(rng.normal(size=3) * 0.5),
                          rng.normal(size=4))
        l2 = TimelikeLine(make_boost(rng.normal(size=3) * 0.5),
                          rng.normal(size=4))
        s1 = system_from_line(l1, rng.uniform(0.5, 2), rng.uniform(0, 1))
        s2 = system_from_line(l2, rng.uniform(0.5, 2), rng.uniform(0, 1))
        _, d_sys = relative_position(s1, s2)
        assert_allclose(d_sys, lorentz_distance(l1, l2), rtol=1e-10,
                        atol=1e-11)


def test_poincare_covariance_of_distance():
    rng = np.random.default_rng(7)
    l1 = TimelikeLine(make_boost([0.1, 0.2, 0]), np.array([0, 1.0, 0, 2]))
    l2 = TimelikeLine(make_boost([0, -0.3, 0.5]), np.array([1, 0, 2.0, 0]))
    D = lorentz_distance(l1, l2)
    g = PoincareTransform(compose(make_boost(rng.normal(size=3) * 0.4),
                                  make_rotation([1, 1, 0], 0.9)),
                          rng.normal(size=4))
    assert_allclose(lorentz_distance(transform_line(g, l1),
                                     transform_line(g, l2)), D, rtol=1e-10)


def test_realize_point_distance_spacelike():
    x1 = np.array([0.0, 1.0, 0, 0])
    x2 = np.zeros(4)
    l1, l2 = realize_point_distance(x1, x2)
    assert_allclose(lorentz_distance(l1, l2), 1.0, rtol=1e-10)


def test_realize_point_distance_timelike_half():
    x1 = np.array([1.0, 0, 0, 0])
    x2 = np.array([-1.0, 0, 0, 0])
    l1, l2 = realize_point_distance(x1, x2)
    # the construction realizes half the two-point separation
    assert_allclose(lorentz_distance(l1, l2), 1.0, rtol=1e-10)


def test_realize_point_distance_null_rejected():
    with pytest.raises(NullSeparation):
        realize_point_distance(np.array([1.0, 1.0, 0, 0]), np.zeros(4))


def test_realize_random_points():
    rng = np.random.default_rng(8)
    for _ in range(10):
        x1 = rng.normal(size=4) * 2
        x2 = rng.normal(size=4) * 2
        dx = x1 - x2
        q = dx @ (ETA * dx)
        if abs(q) < 1e-3:
            continue
        l1, l2 = realize_point_distance(x1, x2)
        target = np.sqrt(-q) if q < 0 else 0.5 * np.sqrt(q)
        assert_allclose(lorentz_distance(l1, l2), target, rtol=1e-10)
