import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nearcrit.errors import SlackTooSmall, SpectralRadiusNotLessThanOne
from nearcrit.geometry import (
    L1Norm,
    build_contraction_norm,
    cone_constant,
    norm_equivalence_bounds,
    operator_norm,
    transverse_recursion_constants,
    vector_norm,
)
from nearcrit.spectral import normalize_to_critical, perron_decompose, project

PHI = (1 + np.sqrt(5)) / 2


class TestBuildContractionNorm:
    def test_averaging_matrix_identity_basis(self, sd5, nb5):
        np.testing.assert_array_equal(nb5.W, np.eye(2))
        assert nb5.rho_certified == 0.0
        assert nb5.cond == 1.0

    def test_scalar_dimension(self, nb1):
        assert nb1.rho_certified == 0.0
        assert nb1.W[0, 0] == 1.0

    def test_fibonacci_certifies_near_spectral_radius(self):
        _, sd = normalize_to_critical(np.array([[0.0, 1.0], [1.0, 1.0]]))
        nb = build_contraction_norm(sd, epsilon=0.01)
        # second eigenvalue magnitude after rescaling is 1/phi^2
        assert abs(sd.rho - PHI ** -2) < 1e-10
        assert sd.rho <= nb.rho_certified <= 0.392

    def test_slack_too_small(self):
        _, sd = normalize_to_critical(np.array([[0.0, 1.0], [1.0, 1.0]]))
        with pytest.raises(SlackTooSmall):
            build_contraction_norm(sd, epsilon=1e-18)

    def test_noncritical_input_rejected(self):
        sd = perron_decompose(np.array([[3.0, 3.0], [3.0, 3.0]]))
        with pytest.raises(SpectralRadiusNotLessThanOne):
            build_contraction_norm(sd)

    def test_contraction_property_sampled(self, corpus):
        rng = np.random.default_rng(5)
        for M in corpus[:15]:
            _, sd = normalize_to_critical(M)
            nb = build_contraction_norm(sd)
            A = sd.M - sd.ray_projector
            X = rng.normal(size=(2000, sd.d))
            lhs = nb.vector(X @ A.T)
            rhs = nb.rho_certified * nb.vector(X)
            assert np.all(lhs <= rhs + 1e-10)


class TestOperatorNorm:
    def test_identity_is_one(self, nb5):
        assert abs(operator_norm(nb5, np.eye(2)) - 1.0) < 1e-12

    def test_zero_matrix(self, nb5):
        assert operator_norm(nb5, np.zeros((2, 2))) == 0.0

    def test_averaging_transverse_part_vanishes(self, sd5, nb5):
        A = sd5.M - sd5.ray_projector
        assert operator_norm(nb5, A) == 0.0

    def test_submultiplicative(self, nb5):
        rng = np.random.default_rng(11)
        for _ in range(50):
            A, B = rng.normal(size=(2, 2, 2))
            assert operator_norm(nb5, A @ B) <= (
                operator_norm(nb5, A) * operator_norm(nb5, B) + 1e-10)

    def test_induced_by_vector_norm(self):
        _, sd = normalize_to_critical(np.array([[0.0, 1.0], [1.0, 1.0]]))
        nb = build_contraction_norm(sd)
        rng = np.random.default_rng(2)
        A = rng.normal(size=(2, 2))
        na = operator_norm(nb, A)
        X = rng.normal(size=(500, 2))
        assert np.all(nb.vector(X @ A.T) <= na * nb.vector(X) + 1e-10)


class TestVectorNorm:
    def test_zero(self, nb5):
        assert vector_norm(nb5, np.zeros(2)) == 0.0

    def test_euclidean_when_identity(self, nb5):
        assert abs(vector_norm(nb5, np.array([3.0, 4.0])) - 5.0) < 1e-12

    def test_l1_norm(self):
        l1 = L1Norm()
        assert l1.vector(np.array([3.0, -4.0])) == 7.0
        assert l1.operator(np.array([[1.0, -2.0], [3.0, 4.0]])) == 6.0

    @given(st.integers(0, 10**6))
    def test_norm_axioms(self, seed):
        rng = np.random.default_rng(seed)
        _, sd = normalize_to_critical(rng.uniform(0.1, 2.0, size=(3, 3)))
        nb = build_contraction_norm(sd)
        x, y = rng.normal(size=(2, 3)) * 10
        c = float(rng.normal() * 5)
        assert nb.vector(x + y) <= nb.vector(x) + nb.vector(y) + 1e-10
        assert abs(nb.vector(c * x) - abs(c) * nb.vector(x)) < 1e-9 * max(1, nb.vector(x))
        if np.abs(x).max() > 1e-9:
            assert nb.vector(x) > 0


class TestConeConstant:
    def test_scalar_dimension_zero(self, sd1, nb1):
        assert cone_constant(sd1, nb1).lam == 0.0

    def test_averaging_l1_is_two_exact(self, sd5):
        cc = cone_constant(sd5, L1Norm())
        assert cc.lam == 2.0

    def test_vertex_dominates_sampled_supremum(self):
        rng = np.random.default_rng(17)
        M = rng.uniform(0.1, 2.0, size=(3, 3))
        _, sd = normalize_to_critical(M)
        nb = build_contraction_norm(sd)
        cc = cone_constant(sd, nb)
        X = rng.exponential(size=(100_000, 3))
        _, xc = project(X, sd)
        ratios = nb.vector(xc) / (X @ sd.ell)
        assert float(ratios.max()) <= cc.lam + 1e-9
        vertex = np.zeros(3)
        vertex[cc.attaining_vertex] = 1.0 / sd.ell[cc.attaining_vertex]
        _, vc = project(vertex, sd)
        attained = float(nb.vector(vc)) / float(sd.ell @ vertex)
        assert abs(attained - cc.lam) < 1e-9


class TestNormBridges:
    def test_equivalence_bounds_hold_on_sphere(self):
        rng = np.random.default_rng(23)
        _, sd = normalize_to_critical(rng.uniform(0.1, 2.0, size=(4, 4)))
        nb = build_contraction_norm(sd)
        c1, c2 = norm_equivalence_bounds(nb)
        assert 0 < c1 <= c2
        X = rng.normal(size=(5000, 4))
        X /= np.abs(X).sum(axis=1, keepdims=True)
        wn = nb.vector(X)
        assert np.all(wn >= c1 - 1e-12)
        assert np.all(wn <= c2 + 1e-12)

    def test_transverse_recursion_constants_shapes(self, sd5, nb5):
        rho, c_g, c_xi = transverse_recursion_constants(sd5, nb5)
        assert rho == 0.0
        assert c_g > 0 and c_xi >= 0
