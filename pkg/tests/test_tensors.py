import numpy as np
import pytest

from nemlab import tensors as T


RNG = np.random.default_rng(20240811)


def m(q):
    return T.to_matrix(q)


# ---------------------------------------------------------------------------
# storage and frames
# ---------------------------------------------------------------------------

def test_roundtrip_matrix_components():
    q = T.random_tensor(RNG)
    M = T.to_matrix(q)
    assert abs(np.trace(M)) < 1e-14
    assert np.allclose(M, M.T, atol=0)
    assert np.allclose(T.from_matrix(M), q, atol=1e-15)


def test_from_matrix_rejects_asymmetric():
    M = np.arange(9.0).reshape(3, 3)
    with pytest.raises(T.ValidationError):
        T.from_matrix(M)


def test_frame_validation():
    with pytest.raises(T.ValidationError):
        T.Frame(np.array([1.0, 0, 0]), np.array([1.0, 0, 0]), np.array([0, 0, 1.0]))
    f = T.standard_frame()
    assert f.orientation == 1


def test_dot_matches_matrix_contraction():
    for _ in range(20):
        p, q = T.random_tensor(RNG), T.random_tensor(RNG)
        assert np.isclose(T.dot(p, q), np.sum(m(p) * m(q)), atol=1e-13)


# ---------------------------------------------------------------------------
# basis and decomposition
# ---------------------------------------------------------------------------

def test_basis_standard_frame_E0_diag():
    E = T.basis_from_frame(T.standard_frame())
    assert np.allclose(m(E[0]), np.diag([2 / 3, -1 / 3, -1 / 3]), atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_basis_orthogonality_table(seed):
    f = T.random_frame(np.random.default_rng(seed))
    E = T.basis_from_frame(f)
    G = np.array([[T.dot(E[i], E[j]) for j in range(5)] for i in range(5)])
    want = np.diag([2 / 3, 2, 2, 2, 2])
    assert np.abs(G - want).max() < 1e-13


def test_decompose_E0_is_unit_vector():
    f = T.random_frame(np.random.default_rng(3))
    E = T.basis_from_frame(f)
    assert np.allclose(T.decompose(E[0], f), [1, 0, 0, 0, 0], atol=1e-13)


def test_decompose_rotated_frame_covariance():
    # Q = nn - I/3 for a frame whose first axis is n decomposes to (1,0,0,0,0)
    f = T.random_frame(np.random.default_rng(7))
    q = T.outer_dev(f.n, f.n)
    assert np.allclose(T.decompose(q, f), [1, 0, 0, 0, 0], atol=1e-13)


def test_decompose_roundtrip_random():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        f = T.random_frame(rng)
        q = T.random_tensor(rng)
        r = T.reconstruct(T.decompose(q, f), f)
        assert np.abs(r - q).max() < 1e-12


# ---------------------------------------------------------------------------
# bulk potential and force
# ---------------------------------------------------------------------------

def test_potential_zeros_and_uniaxial_segment():
    z = np.zeros(5)
    assert T.bulk_potential(z) == 0.0
    f = T.random_frame(np.random.default_rng(1))
    e0 = T.outer_dev(f.n, f.n)
    assert abs(T.bulk_potential(e0)) < 1e-14
    # F(s E0) = s^2 (1-s)^2 / 3  (symbolic oracle: Tr Q^2 = 2/3 s^2, Tr Q^3 = 2/9 s^3)
    for s in (0.3, 0.77, -0.2, 1.4):
        val = T.bulk_potential(s * e0)
        assert np.isclose(val, s**2 * (1 - s) ** 2 / 3.0, atol=1e-13)
    assert np.isclose(T.bulk_potential(0.3 * e0), 0.0147, atol=1e-12)


def test_force_critical_points_and_uniaxial_closure():
    f = T.random_frame(np.random.default_rng(2))
    e0 = T.outer_dev(f.n, f.n)
    assert np.abs(T.bulk_force(np.zeros(5))).max() == 0.0
    assert np.abs(T.bulk_force(e0)).max() < 1e-13
    # f(s E0) = (-2 s^3 + 3 s^2 - s) E0
    for s in (0.1, 0.5, 0.9, 1.3):
        got = T.bulk_force(s * e0)
        want = (-2 * s**3 + 3 * s**2 - s) * e0
        assert np.abs(got - want).max() < 1e-12


def test_force_is_minus_gradient_of_potential():
    h = 1e-6
    for seed in range(10):
        rng = np.random.default_rng(seed)
        q = T.random_tensor(rng)
        d = T.random_tensor(rng)
        num = (T.bulk_potential(q + h * d) - T.bulk_potential(q - h * d)) / (2 * h)
        assert np.isclose(-T.dot(T.bulk_force(q), d), num, rtol=1e-6, atol=1e-8)


# ---------------------------------------------------------------------------
# multilinear operators and the Hessian
# ---------------------------------------------------------------------------

def test_taylor_B_values_and_symmetry():
    f = T.random_frame(np.random.default_rng(4))
    E = T.basis_from_frame(f)
    assert np.abs(T.taylor_B(E[0], E[0]) - 6 * E[0]).max() < 1e-12
    q, p = T.random_tensor(RNG), T.random_tensor(RNG)
    assert np.abs(T.taylor_B(q, p) - T.taylor_B(p, q)).max() < 1e-12
    assert np.abs(T.taylor_B(q, np.zeros(5))).max() == 0.0


def test_taylor_C_values_and_permutation_symmetry():
    f = T.random_frame(np.random.default_rng(5))
    E = T.basis_from_frame(f)
    assert np.abs(T.taylor_C(E[0], E[0], E[0]) + 6 * E[0]).max() < 1e-12
    a, b, c = (T.random_tensor(RNG) for _ in range(3))
    base = T.taylor_C(a, b, c)
    for perm in ((a, c, b), (b, a, c), (c, b, a), (b, c, a), (c, a, b)):
        assert np.abs(T.taylor_C(*perm) - base).max() < 1e-12


def test_hessian_matches_finite_difference_jacobian():
    # acceptance-grade: 100 random pairs, |H_P Q - FD| < 1e-6 (1 + |Q|)
    h = 1e-5
    rng = np.random.default_rng(99)
    for _ in range(100):
        p = T.random_tensor(rng)
        q = T.random_tensor(rng)
        fd = (T.bulk_force(p + h * q) - T.bulk_force(p - h * q)) / (2 * h)
        err = np.abs(T.hessian_apply(p, q) - fd).max()
        assert err < 1e-6 * (1.0 + np.sqrt(T.norm2(q)))


@pytest.mark.parametrize("s", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_hessian_diagonalizes_on_basis(s):
    theta = 1 - 6 * s + 6 * s**2
    kappa = 1 - 3 * s + 2 * s**2
    iota = 1 + 6 * s + 2 * s**2
    coef = [-theta, -kappa, -kappa, -iota, -iota]
    for seed in range(20):
        f = T.random_frame(np.random.default_rng(seed))
        E = T.basis_from_frame(f)
        p = s * E[0]
        for i in range(5):
            got = T.hessian_apply(p, E[i])
            assert np.abs(got - coef[i] * E[i]).max() < 1e-12


def test_hessian_endpoint_values():
    f = T.standard_frame()
    E = T.basis_from_frame(f)
    assert np.abs(T.hessian_apply(E[0], E[0]) + E[0]).max() < 1e-12      # -theta(1) = -1
    assert np.abs(T.hessian_apply(E[0], E[1])).max() < 1e-12             # -kappa(1) = 0
    assert np.abs(T.hessian_apply(E[0], E[3]) + 9 * E[3]).max() < 1e-12  # -iota(1) = -9


def test_frame_covariance_of_operators():
    rng = np.random.default_rng(11)
    f1 = T.standard_frame()
    f2 = T.random_frame(rng)
    R = np.stack([f2.n, f2.l, f2.m]).T @ np.stack([f1.n, f1.l, f1.m])

    def rot(q):
        return T.from_matrix(R @ T.to_matrix(q) @ R.T)

    q = T.random_tensor(rng)
    p = T.random_tensor(rng)
    assert np.abs(rot(T.bulk_force(q)) - T.bulk_force(rot(q))).max() < 1e-12
    assert np.abs(rot(T.hessian_apply(p, q)) - T.hessian_apply(rot(p), rot(q))).max() < 1e-12
    assert np.abs(T.decompose(q, f1) - T.decompose(rot(q), f2)).max() < 1e-12


# ---------------------------------------------------------------------------
# f_second and the restricted inverse
# ---------------------------------------------------------------------------

def test_f_second_against_finite_differences():
    h = 1e-4
    rng = np.random.default_rng(21)
    for _ in range(20):
        p = T.random_tensor(rng)
        q = T.random_tensor(rng)
        fd = (T.bulk_force(p + h * q) - 2 * T.bulk_force(p) + T.bulk_force(p - h * q)) / h**2
        err = np.abs(T.f_second(p, q) - fd).max()
        assert err < 1e-6 * (1.0 + T.norm2(q))


def test_f_second_trivial_cases():
    f = T.standard_frame()
    E = T.basis_from_frame(f)
    assert np.abs(T.f_second(np.zeros(5), E[0]) - 6 * E[0]).max() < 1e-12
    assert np.abs(T.f_second(T.random_tensor(RNG), np.zeros(5))).max() == 0.0


def test_f_second_basis_coefficient_table_spot_value():
    # coefficient of the (q0^2, s10) slot is -4(-1+2s); vanishes at s = 1/2
    f = T.standard_frame()
    E = T.basis_from_frame(f)
    for s in (0.5, 0.2, 0.9):
        val = T.dot(T.f_second(s * E[0], E[0]), E[0])  # Q = E0, contracted with E0
        assert np.isclose(val, -4 * (-1 + 2 * s), atol=1e-12)


def test_hplus_inverse_eigenvalues_and_domain():
    rng = np.random.default_rng(31)
    f = T.random_frame(rng)
    E = T.basis_from_frame(f)
    assert np.abs(T.hplus_inverse(E[0], f) - E[0]).max() < 1e-12
    assert np.abs(T.hplus_inverse(E[3], f) - E[3] / 9.0).max() < 1e-12
    assert np.abs(T.hplus_inverse(E[4], f) - E[4] / 9.0).max() < 1e-12
    with pytest.raises(T.DomainError):
        T.hplus_inverse(E[1], f)
    # composition with the Jacobian of f is minus the identity on the span
    q = 0.7 * E[0] - 1.3 * E[3] + 0.4 * E[4]
    comp = T.hessian_apply(E[0], T.hplus_inverse(q, f))
    assert np.abs(comp + q).max() < 1e-12


def test_model_params_validation():
    p = T.ModelParams(L=-0.5, epsilon=0.05)
    assert np.isclose(p.sigma, 2 / 3)
    with pytest.raises(T.ValidationError):
        T.ModelParams(L=0.5, epsilon=0.05)
    with pytest.raises(T.ValidationError):
        T.ModelParams(L=-0.5, epsilon=-1.0)
    with pytest.raises(T.ValidationError):
        T.ModelParams(L=-0.5, epsilon=0.05, b=8.0)
