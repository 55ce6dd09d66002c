import numpy as np
import pytest
from numpy.testing import assert_allclose

from relqdist.sphere_harmonics import (AngularField, BandLimitError,
                                       SphereGrid, SwshIndex, analyze,
                                       couple_m, couple_mbar, couple_n,
                                       direction_components, dyad_at, edth,
                                       edth_prime, eval_swsh,
                                       eval_swsh_direct, m_components,
                                       matrix_elements, n3_power_diagonal,
                                       synthesize, tetrad_and_dyad)
from relqdist.tensor_kernel import epsilon

ETA = np.array([1.0, -1.0, -1.0, -1.0])


@pytest.fixture(scope="module")
def grid():
    return SphereGrid(10)


def all_indices(sig2, j2_max):
    return [(j2, m2) for j2 in range(abs(sig2), j2_max + 1, 2)
            for m2 in range(-j2, j2 + 1, 2)]


def test_lowest_harmonic_is_constant(grid):
    f = eval_swsh(SwshIndex(0, 0, 0), grid)
    assert_allclose(f.values, 1.0 / np.sqrt(4 * np.pi), atol=1e-15)


def test_orthonormality(grid):
    for sig2 in (-3, -1, 0, 2, 4):
        idxs = all_indices(sig2, 16)
        basis = np.array([eval_swsh(SwshIndex(sig2, j2, m2), grid)
                          .values.ravel() for j2, m2 in idxs])
        gram = (basis.conj() * grid.weights.ravel()) @ basis.T
        assert np.abs(gram - np.eye(len(idxs))).max() < 1e-12


def test_matches_defining_contraction(grid):
    for sig2 in (-2, -1, 0, 1, 2):
        for j2 in range(abs(sig2), 7, 2):
            for m2 in range(-j2, j2 + 1, 2):
                a = eval_swsh(SwshIndex(sig2, j2, m2), grid).values
                b = eval_swsh_direct(SwshIndex(sig2, j2, m2), grid).values
                assert np.abs(a - b).max() < 1e-10


def test_conjugation_rule(grid):
    for (sig2, j2, m2) in [(1, 5, 3), (0, 4, -2), (-2, 6, 0), (3, 3, 1),
                           (-1, 7, -5)]:
        a = np.conj(eval_swsh(SwshIndex(sig2, j2, m2), grid).values)
        b = ((-1.0) ** ((m2 - sig2) // 2)
             * eval_swsh(SwshIndex(-sig2, j2, -m2), grid).values)
        assert np.abs(a - b).max() < 1e-12


def test_wigner_seed_against_sympy(grid):
    sympy = pytest.importorskip("sympy")
    from sympy.physics.quantum.spin import Rotation

    from relqdist._wigner import phase

    theta = sympy.Rational(7, 10)
    i3 = int(np.argmin(np.abs(grid.theta - float(theta))))
    theta_f = grid.theta[i3]
    for (sig2, j2, m2) in [(1, 3, 1), (0, 4, 2), (-1, 5, -3), (2, 6, 0)]:
        expr = Rotation.d(sympy.Rational(j2, 2), sympy.Rational(m2, 2),
                          sympy.Rational(sig2, 2), theta_f).doit()
        d = complex(sympy.N(expr)).real
        q = (m2 + sig2) // 2
        want = (phase(sig2, j2, m2) * np.sqrt((j2 + 1) / (4 * np.pi)) * d
                * np.exp(1j * q * grid.phi[0]))
        got = eval_swsh(SwshIndex(sig2, j2, m2), grid).values[i3, 0]
        assert abs(got - want) < 1e-12


def test_analyze_synthesize_round_trip(grid):
    rng = np.random.default_rng(0)
    for sig2 in (-1, 0, 2):
        coeffs = {}
        for j2 in range(abs(sig2), 15, 2):
            for m2 in range(-j2, j2 + 1, 2):
                coeffs[(j2, m2)] = complex(rng.normal(), rng.normal())
        f = AngularField(sigma2=sig2, coeffs=coeffs)
        g = synthesize(f, grid)
        back = analyze(g)
        for k, v in coeffs.items():
            assert abs(back.coeffs[k] - v) < 1e-12


def test_analyze_of_single_harmonic(grid):
    f = analyze(eval_swsh(SwshIndex(1, 5, -1), grid))
    for k, v in f.coeffs.items():
        target = 1.0 if k == (5, -1) else 0.0
        assert abs(v - target) < 1e-12


def test_edth_eigenrelations(grid):
    p = 1.7
    for (sig2, j2, m2) in [(0, 2, 0), (1, 5, 3), (-2, 4, -2), (0, 2, 2)]:
        f = eval_swsh(SwshIndex(sig2, j2, m2), grid)
        j, sig = j2 / 2, sig2 / 2
        out = edth(f, p)
        fac = -np.sqrt((j + sig + 1) * (j - sig) / 2.0) / p
        assert out.sigma2 == sig2 + 2
        got = out.coeffs.get((j2, m2), 0.0)
        assert abs(got - fac) < 1e-10
        outp = edth_prime(f, p)
        facp = np.sqrt((j - sig + 1) * (j + sig) / 2.0) / p
        assert abs(outp.coeffs.get((j2, m2), 0.0) - facp) < 1e-10


def test_edth_kills_extremal_weight(grid):
    f = eval_swsh(SwshIndex(4, 4, 2), grid)
    out = edth(f, 1.0).coeffs
    assert max((abs(v) for v in out.values()), default=0.0) < 1e-12


def test_edth_anticommutator_eigenvalue(grid):
    p = 0.9
    sig2, j2, m2 = 1, 5, -1
    f = analyze(eval_swsh(SwshIndex(sig2, j2, m2), grid))
    lap = edth_prime(edth(f, p), p).coeffs[(j2, m2)] \
        + edth(edth_prime(f, p), p).coeffs[(j2, m2)]
    j, sig = j2 / 2, sig2 / 2
    assert_allclose(lap, -(j * (j + 1) - sig**2) / p**2, rtol=1e-12)


def test_edth_leibniz_rule(grid):
    # product of two low harmonics, derivative in coefficient space vs
    # grid product of the term-wise derivatives
    p = 1.3
    f = eval_swsh(SwshIndex(1, 3, 1), grid)
    g = eval_swsh(SwshIndex(-1, 3, 1), grid)
    prod = AngularField(sigma2=0, grid=grid, values=f.values * g.values)
    lhs = synthesize(edth(analyze(prod), p), grid).values
    rhs = (synthesize(edth(analyze(f), p), grid).values * g.values
           + f.values * synthesize(edth(analyze(g), p), grid).values)
    assert np.abs(lhs - rhs).max() < 1e-10


# ----------------------------------------------------------------------
# closed-form matrix elements against quadrature
# ----------------------------------------------------------------------

def test_direction_couplings_vs_quadrature(grid):
    ncomp = direction_components(grid.zeta)
    for sig2 in (-1, 0, 1, 2):
        for j2 in range(abs(sig2), 9, 2):
            for m2 in range(-j2, j2 + 1, 2):
                Y = eval_swsh(SwshIndex(sig2, j2, m2), grid).values
                for i in (1, 2, 3):
                    prod = ncomp[i - 1] * Y
                    for dj2, dm2, fac in couple_n(i, sig2, j2, m2):
                        t2, n2 = j2 + dj2, m2 + dm2
                        if t2 < abs(sig2) or abs(n2) > t2:
                            continue
                        Yt = eval_swsh(SwshIndex(sig2, t2, n2), grid).values
                        quad = np.sum(grid.weights * np.conj(Yt) * prod)
                        assert abs(quad - complex(fac)) < 1e-12


def test_null_vector_couplings_vs_quadrature(grid):
    mcomp = m_components(grid.zeta)
    for sig2 in (-1, 0, 2):
        for j2 in range(abs(sig2), 7, 2):
            for m2 in range(-j2, j2 + 1, 2):
                Y = eval_swsh(SwshIndex(sig2, j2, m2), grid).values
                for i in (1, 2, 3):
                    for table, comp, dsig in ((couple_m, mcomp[i - 1], 2),
                                              (couple_mbar,
                                               np.conj(mcomp[i - 1]), -2)):
                        prod = comp * Y
                        for dj2, dm2, fac in table(i, sig2, j2, m2):
                            t2, n2 = j2 + dj2, m2 + dm2
                            if t2 < abs(sig2 + dsig) or abs(n2) > t2:
                                continue
                            Yt = eval_swsh(SwshIndex(sig2 + dsig, t2, n2),
                                           grid).values
                            quad = np.sum(grid.weights * np.conj(Yt) * prod)
                            assert abs(quad - complex(fac)) < 1e-11


def test_matrix_elements_instances(grid):
    # longitudinal direction at extremal weight, explicit value
    val = matrix_elements("p3", -1.0, (1.0, 1.0), (1.0, 1.0), 1.0)
    assert_allclose(val, -0.5, atol=1e-14)
    # order selection: shifting the order by two gives zero
    assert matrix_elements("p1", 1.0, (3.0, 1.0), (3.0, 3.0), 1.0) == 0
    # antisymmetric null product
    val = matrix_elements("mmbar_anti_12", 1.0, (2.0, 1.0), (2.0, 1.0), 1.0)
    assert_allclose(val, 0.5j * 1 * 1 / (2 * 3), atol=1e-14)


def test_quadratic_elements_vs_quadrature(grid):
    ncomp = direction_components(grid.zeta)
    p = 1.0
    for sig2 in (0, 1, 2, -3):
        for j2 in range(abs(sig2), 9, 2):
            for m2 in range(-j2, j2 + 1, 2):
                Y = eval_swsh(SwshIndex(sig2, j2, m2), grid).values
                for kind, i in (("p1p1", 1), ("p2p2", 2), ("p3p3", 3)):
                    closed = matrix_elements(kind, sig2 / 2, (j2 / 2, m2 / 2),
                                             (j2 / 2, m2 / 2), p)
                    quad = np.sum(grid.weights * np.abs(Y) ** 2
                                  * ncomp[i - 1] ** 2)
                    assert abs(closed - quad) < 1e-10


def test_quadratic_elements_limit_cases(grid):
    for (sig2, j2) in ((0, 0), (1, 1), (-1, 1)):
        for m2 in range(-j2, j2 + 1, 2):
            for kind in ("p1p1", "p3p3"):
                v = matrix_elements(kind, sig2 / 2, (j2 / 2, m2 / 2),
                                    (j2 / 2, m2 / 2), 1.0)
                assert_allclose(v, 1.0 / 3.0, atol=1e-14)


def test_quadratic_completeness(grid):
    for sig2 in (0, 1, 4):
        for j2 in range(abs(sig2), 11, 2):
            for m2 in range(-j2, j2 + 1, 2):
                tot = sum(matrix_elements(k, sig2 / 2, (j2 / 2, m2 / 2),
                                          (j2 / 2, m2 / 2), 1.0).real
                          for k in ("p1p1", "p2p2", "p3p3"))
                assert_allclose(tot, 1.0, rtol=1e-12)


def test_cubic_elements_vs_quadrature(grid):
    ncomp = direction_components(grid.zeta)
    for sig2 in (4, -4, 5):
        j2 = abs(sig2)
        for m2 in range(-j2, j2 + 1, 2):
            Y = eval_swsh(SwshIndex(sig2, j2, m2), grid).values
            for kind, prod in (("p1p1p3", ncomp[0] ** 2 * ncomp[2]),
                               ("p2p2p3", ncomp[1] ** 2 * ncomp[2]),
                               ("p3p3p3", ncomp[2] ** 3)):
                closed = matrix_elements(kind, sig2 / 2, (j2 / 2, m2 / 2),
                                         (j2 / 2, m2 / 2), 1.0)
                quad = np.sum(grid.weights * np.abs(Y) ** 2 * prod)
                assert abs(closed - quad) < 1e-10


def test_quartic_exact_vs_quadrature(grid):
    ncomp = direction_components(grid.zeta)
    for sig2 in (2, -3, 4):
        for j2 in range(abs(sig2), 9, 2):
            for m2 in (j2, j2 % 2, -j2):
                Y = eval_swsh(SwshIndex(sig2, j2, m2), grid).values
                closed = matrix_elements("p3p3p3p3", sig2 / 2,
                                         (j2 / 2, m2 / 2),
                                         (j2 / 2, m2 / 2), 1.0)
                quad = np.sum(grid.weights * np.abs(Y) ** 2 * ncomp[2] ** 4)
                assert abs(closed - quad) < 1e-10


def test_quartic_leading_form_scaling():
    # the top-order form approaches the exact diagonal as the spin grows
    devs = []
    for s2 in (8, 16, 32, 64):
        exact = n3_power_diagonal(s2, s2, s2, 4)
        lead = (s2 / (s2 + 2.0)) ** 4
        devs.append(abs(exact - lead))
    assert all(b < a for a, b in zip(devs, devs[1:]))


def test_mmbar_products_vs_quadrature(grid):
    mcomp = m_components(grid.zeta)
    for sig2 in (1, -2, 3):
        for j2 in range(abs(sig2), 7, 2):
            for m2 in range(-j2, j2 + 1, 2):
                Y = eval_swsh(SwshIndex(sig2, j2, m2), grid).values
                w = grid.weights * np.abs(Y) ** 2
                for (i1, i2) in ((1, 1), (3, 3), (1, 2)):
                    sym = 0.5 * (mcomp[i1 - 1] * np.conj(mcomp[i2 - 1])
                                 + mcomp[i2 - 1] * np.conj(mcomp[i1 - 1]))
                    anti = 0.5 * (mcomp[i1 - 1] * np.conj(mcomp[i2 - 1])
                                  - mcomp[i2 - 1] * np.conj(mcomp[i1 - 1]))
                    cs = matrix_elements(f"mmbar_sym_{i1}{i2}", sig2 / 2,
                                         (j2 / 2, m2 / 2), (j2 / 2, m2 / 2),
                                         1.0)
                    ca = matrix_elements(f"mmbar_anti_{i1}{i2}", sig2 / 2,
                                         (j2 / 2, m2 / 2), (j2 / 2, m2 / 2),
                                         1.0)
                    assert abs(np.sum(w * sym) - cs) < 1e-10
                    assert abs(np.sum(w * anti) - ca) < 1e-10


def test_band_limit_guard(grid):
    with pytest.raises(BandLimitError):
        eval_swsh(SwshIndex(0, 2 * grid.lmax2, 0), grid)


# ----------------------------------------------------------------------
# tetrad and dyad
# ----------------------------------------------------------------------

def test_tetrad_invariants(grid):
    mu, p = 1.3, 0.8
    tet, dyad = tetrad_and_dyad(grid, mu, p)
    lower = lambda v: np.einsum("a,aij->aij", ETA, v)
    assert np.abs(np.einsum("aij,aij->ij", tet.m, lower(tet.m))).max() < 1e-12
    assert np.abs(np.einsum("aij,aij->ij", tet.m, lower(tet.mbar))
                  + 1).max() < 1e-12
    assert np.abs(np.einsum("aij,aij->ij", tet.v, lower(tet.v))
                  + 1).max() < 1e-12
    assert np.abs(np.einsum("aij,aij->ij", tet.p, lower(tet.v))).max() < 1e-12
    assert np.abs(np.einsum("aij,aij->ij", tet.p, lower(tet.m))).max() < 1e-12
    eps = epsilon().entries.real
    det = np.einsum("abcd,aij,bij,cij,dij->ij", eps, tet.p, tet.v, tet.m,
                    tet.mbar)
    assert np.abs(det - 1j * mu).max() < 1e-12
    sym = dyad.o[0] * dyad.iota[1] - dyad.o[1] * dyad.iota[0]
    assert np.abs(sym - 1).max() < 1e-12


def test_m_vector_at_south_point():
    # zeta = 0 corresponds to the direction (0, 0, -1)
    m1, m2, m3 = m_components(np.array(0.0 + 0j))
    assert_allclose([m1, m2, m3],
                    [1 / np.sqrt(2), 1j / np.sqrt(2), 0], atol=1e-15)
    n = direction_components(np.array(0.0 + 0j))
    assert_allclose(n, [0, 0, -1], atol=1e-15)


def test_m_is_weight_raised_direction(grid):
    # the null vector components arise from the direction components by
    # the weight-raising derivative
    from relqdist.sphere_harmonics import edth as edth_op

    ncomp = direction_components(grid.zeta)
    mcomp = m_components(grid.zeta)
    for i in range(3):
        f = AngularField(sigma2=0, grid=grid,
                         values=ncomp[i].astype(complex))
        raised = synthesize(edth_op(analyze(f), 1.0), grid).values
        assert np.abs(raised - mcomp[i]).max() < 1e-11


def test_dyad_derivative_relations(grid):
    # radial and angular directional derivatives of the dyad against
    # finite differences
    mu, p = 1.1, 0.9
    z0 = 0.4 + 0.3j
    h = 1e-6
    o0, i0 = dyad_at(mu, p, np.array(z0))
    op, _ = dyad_at(mu, p + h, np.array(z0))
    om, _ = dyad_at(mu, p - h, np.array(z0))
    # v-direction: (p0/mu) d/dp, expected o/(2 mu)
    p0 = np.sqrt(mu**2 + p**2)
    lhs = (p0 / mu) * (op - om) / (2 * h)
    assert np.abs(lhs - o0 / (2 * mu)).max() < 1e-5
    # mbar-direction on iota: expected beta-conjugate times iota
    dzr, _ = dyad_at(mu, p, np.array(z0 + h))
    dzl, _ = dyad_at(mu, p, np.array(z0 - h))
    dzi_u, _ = dyad_at(mu, p, np.array(z0 + 1j * h))
    dzi_d, _ = dyad_at(mu, p, np.array(z0 - 1j * h))
    do_dz = (dzr - dzl) / (2 * h) - 1j * (dzi_u - dzi_d) / (2 * h)
    do_dz *= 0.5
    mbar_dir = (1.0 + z0 * np.conj(z0)) / (np.sqrt(2) * p) * do_dz
    beta = -z0 / (2 * np.sqrt(2) * p)
    _, iota0 = dyad_at(mu, p, np.array(z0))
    expected = (-np.conj(beta) * o0
                + (p0 + p) / (np.sqrt(2) * p * mu) * iota0)
    assert np.abs(mbar_dir - expected).max() < 1e-5
