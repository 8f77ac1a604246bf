import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_density_matrix
from ionnode.linalg import (
    SIGMA_X,
    SIGMA_Z,
    expm,
    herm_eig,
    kron,
    partial_trace,
    svd3,
    thermal_state,
    trace_distance,
    validate_density_matrix,
)

RNG = np.random.default_rng(20240811)


def brute_force_partial_trace(rho, dims, keep):
    """Elementwise index-sum oracle, independent of the reshape tricks."""
    n = len(dims)
    d_keep = dims[keep]
    out = np.zeros((d_keep, d_keep), dtype=complex)
    ranges = [range(d) for d in dims]

    def flat(idx):
        f = 0
        for d, i in zip(dims, idx):
            f = f * d + i
        return f

    import itertools

    for row in itertools.product(*ranges):
        for col in itertools.product(*ranges):
            if all(row[k] == col[k] for k in range(n) if k != keep):
                out[row[keep], col[keep]] += rho[flat(row), flat(col)]
    return out


class TestKron:
    def test_identity(self):
        assert np.array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_pauli_product(self):
        m = kron(SIGMA_X, SIGMA_Z)
        expected = np.zeros((4, 4), dtype=complex)
        expected[0, 2] = 1
        expected[1, 3] = -1
        expected[2, 0] = 1
        expected[3, 1] = -1
        assert np.array_equal(m, expected)

    def test_index_formula(self):
        a = RNG.normal(size=(2, 3)) + 1j * RNG.normal(size=(2, 3))
        b = RNG.normal(size=(3, 2)) + 1j * RNG.normal(size=(3, 2))
        m = kron(a, b)
        assert m.shape == (6, 6)
        # ulp-level tolerance: the vectorized complex product may fuse
        # multiply-adds differently from the scalar path
        for i in range(2):
            for j in range(3):
                for k in range(3):
                    for l in range(2):
                        want = a[i, j] * b[k, l]
                        assert abs(m[i * 3 + k, j * 2 + l] - want) <= 1e-15 * abs(want)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_associative(self, seed):
        # dyadic-rational entries keep every float product exact, so the
        # two association orders must agree bit for bit
        rng = np.random.default_rng(seed)

        def dyadic(shape):
            return (rng.integers(-8, 9, size=shape) + 1j * rng.integers(-8, 9, size=shape)) / 16.0

        mats = [dyadic((2, 2)) for _ in range(3)]
        left = kron(kron(mats[0], mats[1]), mats[2])
        right = kron(mats[0], kron(mats[1], mats[2]))
        assert np.array_equal(left, right)

    def test_associative_generic_close(self):
        mats = [RNG.normal(size=(2, 2)) + 1j * RNG.normal(size=(2, 2)) for _ in range(3)]
        left = kron(kron(mats[0], mats[1]), mats[2])
        right = kron(mats[0], kron(mats[1], mats[2]))
        assert np.allclose(left, right, rtol=1e-15, atol=1e-15)


class TestPartialTrace:
    def test_bell_state(self):
        ket = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
        rho = np.outer(ket, ket.conj())
        reduced = partial_trace(rho, [2, 2], 1)
        assert np.allclose(reduced, np.eye(2) / 2, atol=1e-14)

    def test_product_state(self):
        a = random_density_matrix(RNG, 2)
        b = random_density_matrix(RNG, 3)
        assert np.allclose(partial_trace(kron(a, b), [2, 3], 0), a, atol=1e-14)
        assert np.allclose(partial_trace(kron(a, b), [2, 3], 1), b, atol=1e-14)

    def test_against_brute_force(self):
        for dims, keep in [([2, 2], 0), ([2, 2], 1), ([2, 3, 2], 1)]:
            d = int(np.prod(dims))
            rho = random_density_matrix(RNG, d)
            got = partial_trace(rho, dims, keep)
            want = brute_force_partial_trace(rho, dims, keep)
            assert np.max(np.abs(got - want)) < 1e-12

    def test_trace_preserved(self):
        rho = random_density_matrix(RNG, 4)
        assert abs(np.trace(partial_trace(rho, [2, 2], 0)) - 1.0) < 1e-12

    def test_both_orders_give_full_trace(self):
        rho = random_density_matrix(RNG, 4)
        via_a = np.trace(partial_trace(rho, [2, 2], 0))
        via_b = np.trace(partial_trace(rho, [2, 2], 1))
        assert abs(via_a - 1.0) < 1e-12 and abs(via_b - 1.0) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            partial_trace(np.eye(4) / 4, [2, 3], 0)


class TestHermEig:
    def test_sigma_z(self):
        evals, _ = herm_eig(SIGMA_Z)
        assert np.allclose(evals, [-1.0, 1.0])

    def test_sigma_x_eigenvectors(self):
        evals, evecs = herm_eig(SIGMA_X)
        assert np.allclose(evals, [-1.0, 1.0])
        for k in range(2):
            resid = SIGMA_X @ evecs[:, k] - evals[k] * evecs[:, k]
            assert np.max(np.abs(resid)) < 1e-12

    def test_reconstruction(self):
        m = random_density_matrix(RNG, 8) * 8.0
        evals, evecs = herm_eig(m)
        rebuilt = (evecs * evals) @ evecs.conj().T
        assert np.max(np.abs(rebuilt - m)) < 1e-9 * max(1.0, np.linalg.norm(m, 2))
        assert np.all(np.diff(evals) >= -1e-12)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            herm_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestExpm:
    def test_zero(self):
        assert np.allclose(expm(np.zeros((3, 3))), np.eye(3))

    def test_pi_rotation(self):
        u = expm(-1j * np.pi / 2 * SIGMA_X)
        assert np.max(np.abs(u - (-1j) * SIGMA_X)) < 1e-12

    def test_antihermitian_gives_unitary(self):
        for _ in range(10):
            h = random_density_matrix(RNG, 6) * 6.0
            u = expm(-1j * h)
            assert np.max(np.abs(u.conj().T @ u - np.eye(6))) < 1e-10

    def test_inverse_property(self):
        a = RNG.normal(size=(5, 5)) + 1j * RNG.normal(size=(5, 5))
        a = a / np.linalg.norm(a, 2) * 10.0
        assert np.max(np.abs(expm(a) @ expm(-a) - np.eye(5))) < 1e-9


class TestSvd3:
    def test_sign_flip_diagonal(self):
        s1, s2, s3, _, _ = svd3(np.diag([1.0, -1.0, 1.0]))
        assert (s1, s2, s3) == (1.0, 1.0, 1.0)

    def test_diagonal(self):
        s1, s2, s3, _, _ = svd3(np.diag([0.9, -0.5, 0.2]))
        assert np.allclose([s1, s2, s3], [0.9, 0.5, 0.2])

    def test_matches_eigenvalues_of_gram_matrix(self):
        t = RNG.normal(size=(3, 3))
        s1, s2, s3, _, _ = svd3(t)
        gram = np.sort(np.linalg.eigvalsh(t.T @ t))[::-1]
        assert np.allclose([s1**2, s2**2, s3**2], gram, atol=1e-12)

    def test_reconstruction_1000_random(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(1000):
            t = rng.normal(size=(3, 3))
            s1, s2, s3, v, w = svd3(t)
            resid = np.linalg.norm(t - v @ np.diag([s1, s2, s3]) @ w.T)
            worst = max(worst, resid / max(np.linalg.norm(t), 1.0))
            assert s1 >= s2 >= s3 >= 0
            assert np.max(np.abs(v @ v.T - np.eye(3))) < 1e-12
            assert np.max(np.abs(w @ w.T - np.eye(3))) < 1e-12
        assert worst < 1e-12


class TestValidation:
    def test_accepts_physical(self):
        validate_density_matrix(random_density_matrix(RNG, 4))

    def test_rejects_negative_eigenvalue(self):
        bad = np.diag([1.1, -0.1, 0.0, 0.0]).astype(complex)
        with pytest.raises(ValueError, match="negative eigenvalue"):
            validate_density_matrix(bad)

    def test_rejects_trace(self):
        with pytest.raises(ValueError, match="trace"):
            validate_density_matrix(np.eye(4, dtype=complex))

    def test_trace_distance(self):
        a = np.diag([1.0, 0.0]).astype(complex)
        b = np.diag([0.0, 1.0]).astype(complex)
        assert abs(trace_distance(a, b) - 1.0) < 1e-14

    def test_thermal_state(self):
        th = thermal_state(0.5, 20)
        assert abs(np.trace(th).real - 1.0) < 1e-12
        n_mean = np.sum(np.arange(21) * np.diag(th).real)
        assert abs(n_mean - 0.5) < 1e-6
