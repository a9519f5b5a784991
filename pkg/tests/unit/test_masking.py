import numpy as np
import pytest

from attribution_leakage.masking import (
    SamplerKind,
    SubsetSampler,
    derive_seed,
    enumerate_subset_matrix,
    enumerate_subsets,
    kernel_size_distribution,
    mask,
    mask_batch,
    shapley_kernel_weight,
    top_n,
    top_n_batch,
)
from attribution_leakage.structs import AttributionVector, SubsetMask


def three_sigma(p: float, draws: int) -> float:
    return 3.0 * np.sqrt(p * (1.0 - p) / draws)


@pytest.mark.unit
class TestMask:
    @pytest.mark.parametrize(
        "bits,values",
        [
            ([1, 1], [3.0, -1.0]),
            ([0, 0], [0.0, 0.0]),
            ([1, 0], [3.0, 0.0]),
        ],
    )
    def test_mask_values(self, bits, values):
        masked = mask([3.0, -1.0], bits)
        np.testing.assert_array_equal(masked.values, values)
        np.testing.assert_array_equal(masked.indicator.bits, bits)

    def test_mask_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            mask([1.0, 2.0, 3.0], SubsetMask(bits=[1, 0]))

    def test_mask_batch_broadcasts_a_single_instance(self):
        X = np.array([[3.0, -1.0]])
        S = np.array([[1, 0], [0, 1], [1, 1]], dtype=np.int8)
        out = mask_batch(X, S)
        assert out.shape == (3, 4)
        np.testing.assert_array_equal(out[0], [3.0, 0.0, 1.0, 0.0])
        np.testing.assert_array_equal(out[1], [0.0, -1.0, 0.0, 1.0])

    def test_mask_batch_matches_model_input(self):
        X = np.array([[0.5, 2.0, -3.0]])
        S = np.array([[0, 1, 1]], dtype=np.int8)
        np.testing.assert_array_equal(mask_batch(X, S)[0], mask(X[0], S[0]).model_input)


@pytest.mark.unit
class TestShapleyKernel:
    @pytest.mark.parametrize("d,k,expected", [(4, 1, 0.25), (4, 2, 0.125)])
    def test_weight(self, d, k, expected):
        assert shapley_kernel_weight(d, k) == pytest.approx(expected)

    @pytest.mark.parametrize("d", [2, 3, 5, 8])
    def test_weight_symmetry(self, d):
        for k in range(1, d):
            assert shapley_kernel_weight(d, k) == pytest.approx(shapley_kernel_weight(d, d - k))

    @pytest.mark.parametrize("k", [0, 4])
    def test_weight_undefined_at_ends(self, k):
        with pytest.raises(ValueError):
            shapley_kernel_weight(4, k)

    def test_size_distribution_d3(self):
        sizes, probs = kernel_size_distribution(3)
        np.testing.assert_array_equal(sizes, [1, 2])
        np.testing.assert_allclose(probs, [0.5, 0.5])


@pytest.mark.unit
class TestSubsetSampler:
    def test_uniform_cardinality_d1(self):
        draws = SubsetSampler("uniform-cardinality", 1, seed=0).sample_batch(100_000)
        freq = draws[:, 0].mean()
        assert abs(freq - 0.5) < three_sigma(0.5, 100_000)

    def test_uniform_cardinality_d2(self):
        n = 100_000
        draws = SubsetSampler(SamplerKind.UNIFORM_CARDINALITY, 2, seed=1).sample_batch(n)
        expected = {(0, 0): 1 / 3, (1, 0): 1 / 6, (0, 1): 1 / 6, (1, 1): 1 / 3}
        for bits, p in expected.items():
            freq = np.all(draws == np.array(bits), axis=1).mean()
            assert abs(freq - p) < three_sigma(p, n)

    def test_shapley_kernel_d2(self):
        n = 100_000
        draws = SubsetSampler(SamplerKind.SHAPLEY_KERNEL, 2, seed=2).sample_batch(n)
        assert np.all(draws.sum(axis=1) == 1)
        assert abs(draws[:, 0].mean() - 0.5) < three_sigma(0.5, n)

    def test_shapley_kernel_cardinalities_d5(self):
        n = 100_000
        draws = SubsetSampler(SamplerKind.SHAPLEY_KERNEL, 5, seed=3).sample_batch(n)
        sizes, probs = kernel_size_distribution(5)
        counts = draws.sum(axis=1)
        for k, p in zip(sizes, probs):
            assert abs((counts == k).mean() - p) < three_sigma(p, n)

    def test_shapley_kernel_needs_two_features(self):
        with pytest.raises(ValueError):
            SubsetSampler(SamplerKind.SHAPLEY_KERNEL, 1)

    def test_restricted_sizes(self):
        draws = SubsetSampler(SamplerKind.SHAPLEY_KERNEL, 6, seed=0).sample_batch(
            500, sizes=[2, 3, 4]
        )
        assert set(np.unique(draws.sum(axis=1))) <= {2, 3, 4}

    def test_full_enumeration_visits_every_mask_once(self):
        sampler = SubsetSampler(SamplerKind.FULL_ENUMERATION, 3)
        draws = sampler.sample_batch(8)
        assert len({row.tobytes() for row in draws}) == 8

    def test_same_seed_same_stream(self):
        a = SubsetSampler("shapley-kernel", 4, seed=11).sample_batch(50)
        b = SubsetSampler("shapley-kernel", 4, seed=11).sample_batch(50)
        np.testing.assert_array_equal(a, b)

    def test_single_draw_matches_batch_stream(self):
        a = SubsetSampler("uniform-cardinality", 4, seed=5)
        b = SubsetSampler("uniform-cardinality", 4, seed=5)
        np.testing.assert_array_equal(a.sample().bits, b.sample_batch(1)[0])

    def test_kind_specific_draws_check_kind(self):
        sampler = SubsetSampler("uniform-cardinality", 3)
        assert sampler.sample_uniform_cardinality().d == 3
        with pytest.raises(ValueError):
            sampler.sample_shapley_kernel()

    def test_derive_seed(self):
        assert derive_seed(0, 5) == 5
        assert derive_seed(6, 3) == 5


@pytest.mark.unit
class TestEnumeration:
    def test_d1(self):
        np.testing.assert_array_equal(enumerate_subset_matrix(1), [[0], [1]])

    def test_d2_order(self):
        np.testing.assert_array_equal(
            enumerate_subset_matrix(2), [[0, 0], [0, 1], [1, 0], [1, 1]]
        )

    def test_length(self):
        assert len(enumerate_subsets(10)) == 1024

    def test_guard(self):
        with pytest.raises(ValueError):
            enumerate_subset_matrix(21)


@pytest.mark.unit
class TestTopN:
    def test_ceiling(self):
        s = top_n(AttributionVector(scores=[0.3, 0.9, 0.1]), 34)
        np.testing.assert_array_equal(s.bits, [1, 1, 0])

    @pytest.mark.parametrize("n,expected", [(0, [0, 0, 0]), (100, [1, 1, 1])])
    def test_ends(self, n, expected):
        np.testing.assert_array_equal(top_n([0.3, 0.9, 0.1], n).bits, expected)

    def test_ties_go_to_lower_index(self):
        np.testing.assert_array_equal(top_n([1.0, 1.0, 1.0], 34).bits, [1, 1, 0])

    def test_absolute(self):
        np.testing.assert_array_equal(top_n([-5.0, 1.0], 50, absolute=True).bits, [1, 0])
        np.testing.assert_array_equal(top_n([-5.0, 1.0], 50).bits, [0, 1])

    def test_exact_multiples_do_not_round_up(self):
        assert top_n_batch(np.arange(10.0), 30).sum() == 3

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            top_n([1.0, 2.0], 101)
