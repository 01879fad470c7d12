import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transportops import (
    DimensionMismatch,
    NonFiniteError,
    NumericsConfig,
    central_difference_gradient,
    eigenvalues,
    expm,
    expm_adjoint,
    expm_frechet,
)
from oracles import charpoly_eigenvalues, jacobi_eigenvalues, taylor_expm

CFG = NumericsConfig()
SO2 = np.array([[0.0, -1.0], [1.0, 0.0]])


def random_matrix(rng, d, norm=None):
    a = rng.normal(size=(d, d))
    if norm is not None:
        a *= norm / np.linalg.norm(a)
    return a


class TestExpm:
    def test_zero_matrix_is_identity(self):
        assert np.array_equal(expm(np.zeros((2, 2))), np.eye(2))

    def test_quarter_turn_rotation(self):
        got = expm((np.pi / 2) * SO2)
        np.testing.assert_allclose(got, SO2, atol=1e-14)

    def test_matches_series_oracle(self):
        rng = np.random.default_rng(101)
        for _ in range(50):
            a = random_matrix(rng, 4, norm=rng.uniform(0.1, 2.0))
            got = expm(a)
            want = taylor_expm(a)
            rel = np.linalg.norm(got - want) / np.linalg.norm(want)
            assert rel < CFG.series_oracle_tol

    def test_determinant_is_exp_trace(self):
        rng = np.random.default_rng(7)
        a = random_matrix(rng, 3, norm=1.5)
        np.testing.assert_allclose(
            np.linalg.det(expm(a)), np.exp(np.trace(a)), rtol=1e-10
        )

    def test_overflow_reports_input_norm(self):
        with pytest.raises(NonFiniteError, match="norm"):
            expm(np.array([[800.0, 0.0], [0.0, 800.0]]))

    def test_nonfinite_input_rejected(self):
        with pytest.raises(NonFiniteError):
            expm(np.array([[np.nan, 0.0], [0.0, 0.0]]))

    def test_nonsquare_rejected(self):
        with pytest.raises(DimensionMismatch):
            expm(np.zeros((2, 3)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_inverse_identity(self, seed):
        rng = np.random.default_rng(seed)
        a = random_matrix(rng, 3, norm=rng.uniform(0.0, 5.0))
        err = np.linalg.norm(expm(a) @ expm(-a) - np.eye(3))
        assert err < CFG.inverse_tol

    @settings(max_examples=20, deadline=None)
    @given(
        st.integers(0, 2**32 - 1),
        st.floats(-2, 2),
        st.floats(-2, 2),
    )
    def test_one_parameter_subgroup(self, seed, s, t):
        rng = np.random.default_rng(seed)
        a = random_matrix(rng, 3, norm=1.0)
        lhs = expm((s + t) * a)
        rhs = expm(s * a) @ expm(t * a)
        assert np.linalg.norm(lhs - rhs) < CFG.subgroup_tol


class TestExpmFrechet:
    def test_derivative_at_zero_is_identity_map(self):
        rng = np.random.default_rng(3)
        e = rng.normal(size=(3, 3))
        _, l = expm_frechet(np.zeros((3, 3)), e)
        np.testing.assert_allclose(l, e, rtol=1e-14, atol=1e-16)

    def test_zero_direction_gives_zero(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(3, 3))
        _, l = expm_frechet(a, np.zeros((3, 3)))
        assert np.all(l == 0.0)

    def test_returns_expm_of_base(self):
        rng = np.random.default_rng(5)
        a = random_matrix(rng, 4, norm=1.0)
        expa, _ = expm_frechet(a, rng.normal(size=(4, 4)))
        np.testing.assert_allclose(expa, taylor_expm(a), rtol=1e-13)

    def test_matches_central_difference_oracle(self):
        rng = np.random.default_rng(42)
        h = CFG.frechet_fd_step
        for _ in range(20):
            a = random_matrix(rng, 3, norm=rng.uniform(0.2, 1.5))
            e = random_matrix(rng, 3, norm=1.0)
            _, l = expm_frechet(a, e)
            fd = (taylor_expm(a + h * e) - taylor_expm(a - h * e)) / (2 * h)
            rel = np.linalg.norm(l - fd) / np.linalg.norm(fd)
            assert rel < CFG.frechet_fd_tol

    def test_linearity_in_direction(self):
        rng = np.random.default_rng(99)
        a = random_matrix(rng, 4, norm=1.2)
        e1 = rng.normal(size=(4, 4))
        e2 = rng.normal(size=(4, 4))
        alpha, beta = 0.7, -1.3
        _, l_combo = expm_frechet(a, alpha * e1 + beta * e2)
        _, l1 = expm_frechet(a, e1)
        _, l2 = expm_frechet(a, e2)
        err = np.linalg.norm(l_combo - (alpha * l1 + beta * l2))
        assert err / np.linalg.norm(l_combo) < CFG.frechet_linearity_tol

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionMismatch):
            expm_frechet(np.zeros((2, 2)), np.zeros((3, 3)))


class TestExpmAdjoint:
    def test_adjoint_at_zero_is_identity_map(self):
        rng = np.random.default_rng(11)
        g = rng.normal(size=(3, 3))
        np.testing.assert_allclose(
            expm_adjoint(np.zeros((3, 3)), g), g, rtol=1e-14, atol=1e-16
        )

    def test_inner_product_identity(self):
        # <L(A, E), G> == <E, L*(A, G)> under the Frobenius inner product.
        rng = np.random.default_rng(12)
        for _ in range(10):
            a = random_matrix(rng, 4, norm=rng.uniform(0.2, 2.0))
            e = rng.normal(size=(4, 4))
            g = rng.normal(size=(4, 4))
            _, l = expm_frechet(a, e)
            adj = expm_adjoint(a, g)
            lhs = float(np.sum(l * g))
            rhs = float(np.sum(e * adj))
            assert abs(lhs - rhs) / max(abs(lhs), 1e-30) < CFG.adjoint_tol

    def test_matches_transposed_frechet(self):
        rng = np.random.default_rng(13)
        a = random_matrix(rng, 4, norm=1.0)
        g = rng.normal(size=(4, 4))
        _, l_t = expm_frechet(a.T, g)
        np.testing.assert_array_equal(expm_adjoint(a, g), l_t)


class TestEigenvalues:
    def test_rotation_generator_is_pure_imaginary(self):
        vals = np.sort_complex(eigenvalues(SO2))
        np.testing.assert_allclose(vals, [-1j, 1j], atol=1e-14)

    def test_diagonal(self):
        vals = np.sort(eigenvalues(np.diag([1.0, -1.0])).real)
        np.testing.assert_allclose(vals, [-1.0, 1.0], atol=1e-14)

    def test_symmetric_matches_jacobi_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(5):
            s = rng.normal(size=(5, 5))
            s = 0.5 * (s + s.T)
            got = np.sort(eigenvalues(s).real)
            want = jacobi_eigenvalues(s)
            np.testing.assert_allclose(got, want, atol=1e-10)

    def test_sum_equals_trace(self):
        rng = np.random.default_rng(22)
        for _ in range(20):
            a = rng.normal(size=(6, 6))
            norm = np.linalg.norm(a)
            err = abs(np.sum(eigenvalues(a)) - np.trace(a))
            assert err / norm < CFG.eigenvalue_trace_tol

    def test_matches_charpoly_oracle(self):
        rng = np.random.default_rng(23)
        a = rng.normal(size=(4, 4))
        got = np.sort_complex(eigenvalues(a))
        want = np.sort_complex(charpoly_eigenvalues(a))
        np.testing.assert_allclose(got, want, atol=1e-10)


def test_central_difference_gradient_on_quadratic():
    h = np.array([[2.0, 0.5], [0.5, 1.0]])
    f = lambda x: 0.5 * x @ h @ x
    x0 = np.array([1.0, -2.0])
    np.testing.assert_allclose(
        central_difference_gradient(f, x0), h @ x0, rtol=1e-8
    )
