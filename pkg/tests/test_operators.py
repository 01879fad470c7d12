import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transportops import (
    DimensionMismatch,
    InvalidScale,
    LaplacePrior,
    LatentPoint,
    NonFiniteError,
    OperatorDictionary,
    PointPair,
    dictionary_from_json,
    dictionary_to_json,
    generate_path,
    load_dictionary,
    operator_magnitudes,
    sample_laplace,
    sample_transform,
    save_dictionary,
    sparsity,
    transform,
)
from oracles import rotation_matrix, taylor_expm

SO2 = np.array([[0.0, -1.0], [1.0, 0.0]])


def so2_dictionary(gamma=0.0):
    return OperatorDictionary(SO2[None], gamma=gamma)


def random_dictionary(rng, m=3, d=4, scale=0.5, gamma=0.0):
    return OperatorDictionary(scale * rng.normal(size=(m, d, d)), gamma=gamma)


class TestDomainTypes:
    def test_dictionary_validation(self):
        with pytest.raises(DimensionMismatch):
            OperatorDictionary(np.zeros((2, 3)))
        with pytest.raises(DimensionMismatch):
            OperatorDictionary(np.zeros((1, 2, 3)))
        with pytest.raises(NonFiniteError):
            OperatorDictionary(np.full((1, 2, 2), np.inf))
        with pytest.raises(ValueError):
            OperatorDictionary(np.zeros((1, 2, 2)), gamma=-1.0)

    def test_dictionary_is_immutable(self):
        d = so2_dictionary()
        with pytest.raises(ValueError):
            d.psi[0, 0, 0] = 5.0

    def test_coefficient_validation(self):
        d = so2_dictionary()
        with pytest.raises(DimensionMismatch):
            d.coefficients([1.0, 2.0])
        with pytest.raises(NonFiniteError):
            d.coefficients([np.nan])

    def test_latent_point(self):
        p = LatentPoint([1.0, 2.0], label=3)
        assert p.dim == 2 and p.label == 3
        assert LatentPoint([0.0]).label is None
        with pytest.raises(NonFiniteError):
            LatentPoint([np.inf])
        with pytest.raises(ValueError):
            LatentPoint([0.0], label=-1)

    def test_point_pair(self):
        with pytest.raises(DimensionMismatch):
            PointPair([1.0, 0.0], [1.0])

    def test_laplace_prior_requires_positive_scale(self):
        assert LaplacePrior(0.5).zeta == 0.5
        with pytest.raises(InvalidScale):
            LaplacePrior(0.0)

    def test_sparsity(self):
        assert sparsity([0.0, 1e-300, -2.0]) == 2
        assert sparsity(np.zeros(4)) == 0


class TestTransform:
    def test_zero_coefficients_identity(self):
        d = random_dictionary(np.random.default_rng(0))
        z = np.array([1.0, -2.0, 0.5, 3.0])
        np.testing.assert_array_equal(transform(d, np.zeros(3), z), z)

    def test_half_rotation(self):
        out = transform(so2_dictionary(), [np.pi], np.array([1.0, 0.0]))
        np.testing.assert_allclose(out, [-1.0, 0.0], atol=1e-12)

    def test_matches_series_oracle(self):
        rng = np.random.default_rng(1)
        d = random_dictionary(rng)
        c = rng.normal(size=3) * 0.5
        z = rng.normal(size=4)
        want = taylor_expm(np.einsum("m,mij->ij", c, d.psi)) @ z
        np.testing.assert_allclose(transform(d, c, z), want, atol=1e-12)

    def test_label_propagates(self):
        out = transform(so2_dictionary(), [0.3], LatentPoint([1.0, 0.0], label=7))
        assert isinstance(out, LatentPoint) and out.label == 7

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_group_inverse(self, seed):
        rng = np.random.default_rng(seed)
        d = random_dictionary(rng, m=2, d=3)
        c = 0.5 * rng.normal(size=2)
        z = rng.normal(size=3)
        back = transform(d, -c, transform(d, c, z))
        assert np.linalg.norm(back - z) < 1e-8

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            transform(so2_dictionary(), [0.1], np.zeros(3))


class TestSampleLaplace:
    def test_median_maps_to_zero(self):
        assert sample_laplace(2.0, 0.0) == 0.0

    def test_quartile_closed_form(self):
        np.testing.assert_allclose(sample_laplace(2.0, 0.25), 2.0 * np.log(2.0))

    def test_sign_matches_uniform_sign(self):
        u = np.linspace(-0.49, 0.49, 99)
        out = sample_laplace(1.0, u)
        np.testing.assert_array_equal(np.sign(out), np.sign(u))

    def test_monotone_on_positive_branch(self):
        u = np.linspace(0.01, 0.49, 50)
        out = sample_laplace(1.0, u)
        assert np.all(np.diff(out) > 0)

    def test_variance_matches_monte_carlo(self):
        # Var(Laplace(0, b)) = 2 b^2; empirical estimate at b = 1.
        rng = np.random.default_rng(2024)
        u = rng.uniform(-0.5, 0.5, size=1_000_000)
        u = np.clip(u, np.nextafter(-0.5, 0), np.nextafter(0.5, 0))
        var = np.var(sample_laplace(1.0, u))
        assert abs(var - 2.0) / 2.0 < 0.02

    def test_per_operator_scales_broadcast(self):
        out = sample_laplace(np.array([1.0, 2.0]), np.array([0.25, 0.25]))
        np.testing.assert_allclose(out, [np.log(2.0), 2 * np.log(2.0)])


class TestSampleTransform:
    def test_degenerate_prior_returns_input(self):
        d = so2_dictionary()
        z = np.array([1.0, 2.0])
        out = sample_transform(d, z, scales=1e-300, rng_seed=5)
        np.testing.assert_allclose(out, z, atol=1e-12)

    def test_seed_determinism_is_bitwise(self):
        d = so2_dictionary()
        z = np.array([1.0, 2.0])
        a = sample_transform(d, z, scales=0.3, noise_sigma=0.1, rng_seed=42)
        b = sample_transform(d, z, scales=0.3, noise_sigma=0.1, rng_seed=42)
        np.testing.assert_array_equal(a, b)
        c = sample_transform(d, z, scales=0.3, noise_sigma=0.1, rng_seed=43)
        assert not np.array_equal(a, c)

    def test_invalid_scale_rejected(self):
        d = so2_dictionary()
        with pytest.raises(InvalidScale):
            sample_transform(d, np.zeros(2), scales=0.0)
        with pytest.raises(InvalidScale):
            sample_transform(d, np.zeros(2), scales=[0.1], noise_sigma=-1.0)

    def test_label_propagates(self):
        out = sample_transform(so2_dictionary(), LatentPoint([1.0, 0.0], 2), 0.1)
        assert out.label == 2

    def test_mean_matches_monte_carlo_oracle(self):
        # For c ~ Laplace(0, b) and the SO(2) dictionary, the transformed
        # mean is E[R(c)] z; the oracle estimates it with numpy's own
        # Laplace sampler and closed-form rotations.
        d = so2_dictionary()
        z = np.array([1.0, 0.0])
        b = 0.1
        n = 100_000
        lib = np.mean(
            [sample_transform(d, z, scales=b, rng_seed=seed) for seed in range(n)],
            axis=0,
        )
        oracle_rng = np.random.default_rng(999)
        cs = oracle_rng.laplace(0.0, b, size=n)
        oracle = np.einsum("nij,j->i", rotation_matrix(cs), z) / n
        assert np.linalg.norm(lib - oracle) / np.linalg.norm(oracle) < 0.01


class TestGeneratePath:
    def test_t_zero_is_start_point(self):
        d = so2_dictionary()
        z0 = np.array([2.0, 1.0])
        path = generate_path(d, [0.4], z0, [0.0, 0.5])
        np.testing.assert_array_equal(path[0], z0)

    def test_extrapolation_doubles_rotation(self):
        d = so2_dictionary()
        z0 = np.array([1.0, 0.0])
        theta = 0.3
        path = generate_path(d, [theta], z0, [2.0])
        np.testing.assert_allclose(path[0], rotation_matrix(2 * theta) @ z0, atol=1e-12)

    def test_t_one_equals_transform(self):
        rng = np.random.default_rng(8)
        d = random_dictionary(rng)
        c = 0.3 * rng.normal(size=3)
        z0 = rng.normal(size=4)
        path = generate_path(d, c, z0, [1.0])
        np.testing.assert_array_equal(path[0], transform(d, c, z0))

    def test_one_parameter_subgroup_composition(self):
        rng = np.random.default_rng(9)
        d = random_dictionary(rng, m=2, d=3)
        c = 0.4 * rng.normal(size=2)
        z0 = rng.normal(size=3)
        t, s = 0.7, 0.6
        mid = generate_path(d, c, z0, [t])[0]
        end_via_mid = generate_path(d, c, mid, [s])[0]
        end_direct = generate_path(d, c, z0, [t + s])[0]
        assert np.linalg.norm(end_via_mid - end_direct) < 1e-8

    def test_latent_point_keeps_label(self):
        path = generate_path(so2_dictionary(), [0.1], LatentPoint([1.0, 0.0], 4), [0.0, 1.0])
        assert all(p.label == 4 for p in path)

    def test_nonfinite_multipliers_rejected(self):
        with pytest.raises(NonFiniteError):
            generate_path(so2_dictionary(), [0.1], np.zeros(2), [np.inf])


class TestOperatorMagnitudes:
    def test_zero_dictionary(self):
        d = OperatorDictionary(np.zeros((3, 2, 2)))
        np.testing.assert_array_equal(operator_magnitudes(d), np.zeros(3))

    def test_so2_norm(self):
        np.testing.assert_allclose(operator_magnitudes(so2_dictionary()), [np.sqrt(2.0)])

    def test_matches_sum_of_squares_oracle(self):
        rng = np.random.default_rng(10)
        d = random_dictionary(rng)
        want = [np.sqrt(np.sum(psi**2)) for psi in d.psi]
        np.testing.assert_allclose(operator_magnitudes(d), want, rtol=1e-15)


class TestSerialization:
    def test_round_trip_is_value_exact(self):
        # Awkward doubles: repr-based JSON must reproduce every bit.
        psi = np.array(
            [
                [[0.1, 1.0 / 3.0], [-1e-308, 1.7976931348623157e308 / 1e10]],
                [[np.pi, -0.0], [2.0**-52, 123456789.123456789]],
            ]
        )
        d = OperatorDictionary(psi, gamma=2e-6)
        back, scale = dictionary_from_json(dictionary_to_json(d, latent_scale=30.0))
        np.testing.assert_array_equal(back.psi, d.psi)
        assert back.gamma == d.gamma
        assert scale == 30.0

    def test_default_latent_scale_is_one(self):
        d = so2_dictionary(gamma=1e-4)
        _, scale = dictionary_from_json(dictionary_to_json(d))
        assert scale == 1.0

    def test_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        d = random_dictionary(rng, gamma=1e-5)
        path = tmp_path / "model.json"
        save_dictionary(path, d, latent_scale=2.5)
        back, scale = load_dictionary(path)
        np.testing.assert_array_equal(back.psi, d.psi)
        assert (back.gamma, scale) == (d.gamma, 2.5)

    def test_json_schema_fields(self):
        doc = json.loads(dictionary_to_json(so2_dictionary(gamma=0.5)))
        assert doc["dim"] == 2 and doc["count"] == 1 and doc["gamma"] == 0.5
        assert doc["operators"] == [[0.0, -1.0, 1.0, 0.0]]  # row-major

    def test_operator_count_mismatch_rejected(self):
        doc = json.loads(dictionary_to_json(so2_dictionary()))
        doc["count"] = 2
        with pytest.raises(DimensionMismatch):
            dictionary_from_json(json.dumps(doc))
