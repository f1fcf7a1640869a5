import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nearcrit.errors import NotPrimitiveWithin
from nearcrit.spectral import (
    check_primitive,
    normalize_to_critical,
    perron_decompose,
    project,
    wielandt_bound,
)

PHI = (1 + np.sqrt(5)) / 2


class TestCheckPrimitive:
    def test_positive_matrix_is_power_one(self):
        assert check_primitive(0.5 * np.ones((2, 2))) == 1

    def test_permutation_matrix_rejected(self):
        with pytest.raises(NotPrimitiveWithin):
            check_primitive(np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_fibonacci_needs_square(self):
        # [[0,1],[1,1]]^2 = [[1,1],[1,2]] is the first positive power
        assert check_primitive(np.array([[0.0, 1.0], [1.0, 1.0]])) == 2

    def test_scalar_cases(self):
        assert check_primitive(np.array([[3.0]])) == 1
        with pytest.raises(NotPrimitiveWithin):
            check_primitive(np.array([[0.0]]))

    def test_negative_entries_rejected(self):
        with pytest.raises(ValueError):
            check_primitive(np.array([[1.0, -0.1], [1.0, 1.0]]))

    def test_wielandt_default(self):
        assert wielandt_bound(6) == 26
        # a ring with one extra arc is primitive but needs many powers
        d = 4
        M = np.zeros((d, d))
        for i in range(d):
            M[(i + 1) % d, i] = 1.0
        M[1, d - 1] = 1.0  # arc making gcd of cycle lengths 1
        k = check_primitive(M)
        assert 1 < k <= wielandt_bound(d)


class TestPerronDecompose:
    def test_averaging_matrix_exact(self, sd5):
        assert sd5.eig == 1.0
        np.testing.assert_array_equal(sd5.r, [1.0, 1.0])
        np.testing.assert_array_equal(sd5.ell, [0.5, 0.5])
        assert sd5.rho == 0.0
        assert sd5.primitivity_power == 1

    def test_scalar_identity(self):
        sd = perron_decompose(np.array([[1.0]]))
        assert sd.eig == 1.0 and sd.r[0] == 1.0 and sd.ell[0] == 1.0

    def test_fibonacci_golden_ratio(self):
        sd = perron_decompose(np.array([[0.0, 1.0], [1.0, 1.0]]))
        assert abs(sd.eig - PHI) < 1e-10

    def test_scaling_convention(self, corpus):
        for M in corpus[:12]:
            sd = perron_decompose(M)
            assert abs(sd.r.sum() - sd.d) < 1e-9
            assert abs(float(sd.ell @ sd.r) - 1.0) < 1e-12
            assert np.all(sd.r > 0) and np.all(sd.ell > 0)


class TestNormalizeToCritical:
    def test_already_critical_unchanged(self):
        M = 0.5 * np.ones((2, 2))
        Mc, sd = normalize_to_critical(M)
        np.testing.assert_array_equal(Mc, M)
        assert sd.eig == 1.0

    def test_doubled_matrix_halved(self):
        Mc, sd = normalize_to_critical(np.ones((2, 2)))
        np.testing.assert_allclose(Mc, 0.5 * np.ones((2, 2)), atol=1e-14)
        assert abs(sd.eig - 2.0) < 1e-11

    def test_fibonacci_divided_by_phi(self):
        M = np.array([[0.0, 1.0], [1.0, 1.0]])
        Mc, sd = normalize_to_critical(M)
        np.testing.assert_allclose(Mc, M / PHI, rtol=1e-11)
        assert abs(sd.eig - PHI) < 1e-10

    def test_eigen_residuals(self, corpus):
        for M in corpus:
            Mc, sd = normalize_to_critical(M)
            assert np.max(np.abs(sd.ell @ Mc - sd.ell)) < 1e-10
            assert np.max(np.abs(Mc @ sd.r - sd.r)) < 1e-10
            assert sd.rho < 1.0


class TestProject:
    def test_hand_example(self, sd5):
        x_hat, x_check = project(np.array([2.0, 0.0]), sd5)
        np.testing.assert_array_equal(x_hat, [1.0, 1.0])
        np.testing.assert_array_equal(x_check, [1.0, -1.0])

    def test_eigenvector_case(self, sd5):
        x_hat, x_check = project(sd5.r, sd5)
        np.testing.assert_array_equal(x_hat, sd5.r)
        np.testing.assert_array_equal(x_check, [0.0, 0.0])

    def test_zero(self, sd5):
        x_hat, x_check = project(np.zeros(2), sd5)
        assert not x_hat.any() and not x_check.any()

    def test_resum_within_one_ulp_and_batch(self, sd5):
        # b + (a - b) == a is not an IEEE identity, so generic states
        # re-sum to within one rounding, not bitwise
        rng = np.random.default_rng(3)
        X = rng.normal(size=(100, 2))
        x_hat, x_check = project(X, sd5)
        np.testing.assert_allclose(x_hat + x_check, X, rtol=2 ** -52, atol=0)

    def test_scalar_dimension_has_no_transverse(self, sd1):
        for v in (0.0, 1.0, 7.5):
            _, x_check = project(np.array([v]), sd1)
            assert x_check[0] == 0.0

    @given(st.integers(0, 10**6))
    def test_idempotence_and_annihilation(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 6))
        M = rng.uniform(0.1, 2.0, size=(d, d))
        _, sd = normalize_to_critical(M)
        x = rng.normal(size=d) * 10
        x_hat, x_check = project(x, sd)
        hat2, check2 = project(x_hat, sd)
        assert np.max(np.abs(hat2 - x_hat)) < 1e-12 * max(1, np.abs(x_hat).max())
        assert np.max(np.abs(check2)) < 1e-12 * max(1, np.abs(x_hat).max())
        assert abs(float(sd.ell @ x_check)) < 1e-10 * max(1, np.abs(x).max())
