import numpy as np
import pytest

from attribution_leakage.core import InsufficientSamplesError
from attribution_leakage.masking import SamplerKind, enumerate_subset_matrix
from attribution_leakage.models import PredictionModel
from attribution_leakage.shapley import (
    CooperativeGame,
    exact_shapley,
    kernel_shap_solve,
    lime,
    shap,
    shap_kl,
    shap_s,
    solve_constrained_wls,
)
from attribution_leakage.surrogate import BaselineReplacement
from attribution_leakage.value_functions import ValueFunction


@pytest.mark.unit
class TestExactShapley:
    def test_symmetric_game(self):
        game = CooperativeGame.from_coalitions(
            2, {frozenset({0}): 0.3, frozenset({1}): 0.3, frozenset({0, 1}): 1.0}
        )
        np.testing.assert_allclose(exact_shapley(game).phi.scores, [0.5, 0.5])

    def test_hand_computed_game(self):
        game = CooperativeGame.from_coalitions(
            2, {frozenset({0}): 1.0, frozenset({1}): 2.0, frozenset({0, 1}): 4.0}
        )
        np.testing.assert_allclose(exact_shapley(game).phi.scores, [1.5, 2.5])

    def test_dummy_player(self):
        base = CooperativeGame.random(3, seed=0)
        # player 3 never changes the value
        game = CooperativeGame.from_function(
            4, lambda bits: float(base.values(bits[None, :3])[0])
        )
        assert exact_shapley(game).phi.scores[3] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("d", [1, 3, 6])
    def test_efficiency(self, d):
        game = CooperativeGame.random(d, seed=d)
        est = exact_shapley(game)
        assert est.efficiency_residual == pytest.approx(0.0, abs=1e-12)

    def test_table_size_checked(self):
        with pytest.raises(ValueError):
            CooperativeGame(3, np.zeros(7))

    def test_value_function_needs_instance(self, lemma3_oracle):
        with pytest.raises(ValueError):
            exact_shapley(ValueFunction.kl(lemma3_oracle))


@pytest.mark.unit
class TestKernelShap:
    @pytest.mark.parametrize("d", [2, 3, 4, 5, 6, 7, 8])
    def test_matches_enumeration_on_random_games(self, d):
        for seed in range(50):
            game = CooperativeGame.random(d, seed=seed)
            est = kernel_shap_solve(game, None, num_samples=8 * 2**d, seed=seed)
            exact = exact_shapley(game).phi.scores
            spread = game.table.max() - game.table.min()
            assert np.max(np.abs(est.phi.scores - exact)) < 0.01 * spread
            assert abs(est.efficiency_residual) < 1e-10

    @pytest.mark.parametrize("d", [9, 10])
    def test_matches_enumeration_large_d(self, d):
        game = CooperativeGame.random(d, seed=1)
        est = kernel_shap_solve(game, None, num_samples=8 * 2**d, seed=1)
        spread = game.table.max() - game.table.min()
        exact = exact_shapley(game).phi.scores
        assert np.max(np.abs(est.phi.scores - exact)) < 0.01 * spread

    def test_sampled_budget_keeps_efficiency(self):
        game = CooperativeGame.random(10, seed=2)
        est = kernel_shap_solve(game, None, num_samples=200, seed=3)
        assert est.num_subset_samples <= 200
        assert abs(est.efficiency_residual) < 1e-10

    def test_same_seed_same_estimate(self):
        game = CooperativeGame.random(10, seed=4)
        a = kernel_shap_solve(game, None, num_samples=150, seed=7)
        b = kernel_shap_solve(game, None, num_samples=150, seed=7)
        np.testing.assert_array_equal(a.phi.scores, b.phi.scores)

    def test_budget_must_cover_d(self):
        with pytest.raises(ValueError):
            kernel_shap_solve(CooperativeGame.random(5, seed=0), None, num_samples=3)

    def test_needs_two_players(self):
        with pytest.raises(ValueError):
            kernel_shap_solve(CooperativeGame.random(1, seed=0), None, num_samples=4)

    def test_singular_design(self):
        masks = np.array([[1, 0, 0], [1, 0, 0]], dtype=np.int8)
        with pytest.raises(InsufficientSamplesError):
            solve_constrained_wls(masks, np.ones(2), np.array([0.2, 0.2]), 0.0, 1.0)

    def test_too_few_subsets(self):
        masks = np.array([[1, 0, 0, 0]], dtype=np.int8)
        with pytest.raises(InsufficientSamplesError):
            solve_constrained_wls(masks, np.ones(1), np.array([0.2]), 0.0, 1.0)


@pytest.mark.unit
class TestShapKL:
    @pytest.mark.parametrize("x", [[1.0, 0.0], [1.0, 1.0], [0.0, 0.0], [0.0, 1.0]])
    def test_matches_exact_on_lemma3(self, lemma3_oracle, x):
        est = shap_kl(lemma3_oracle, x, num_samples=16)
        exact = exact_shapley(ValueFunction.kl(lemma3_oracle), x)
        np.testing.assert_allclose(est.phi.scores, exact.phi.scores, atol=1e-6)

    def test_full_value_is_zero(self, lemma3_oracle):
        est = shap_kl(lemma3_oracle, [1.0, 0.0], num_samples=16)
        assert est.full_value == 0.0
        assert est.base_value < 0.0

    def test_dummy_feature_gets_zero(self, dummy_oracle):
        for x in ([1.0, 0.0], [0.0, 1.0], [1.0, 1.0]):
            est = shap_kl(dummy_oracle, x, num_samples=16)
            assert est.phi.scores[1] == pytest.approx(0.0, abs=1e-6)

    def test_constant_feature_gets_zero_on_lemma1(self, lemma1_oracle):
        est = shap_kl(lemma1_oracle, [0.8, 0.5], num_samples=16)
        assert est.phi.scores[1] == pytest.approx(0.0, abs=1e-9)
        assert est.phi.scores[0] > 0.0


@pytest.mark.unit
class TestShapS:
    def test_efficiency(self, lemma1_oracle):
        x = np.array([0.3, 0.5])
        est = shap_s(lemma1_oracle, x, 1, num_samples=16)
        full = lemma1_oracle.full_batch(x)[0, 1]
        empty = lemma1_oracle.empty_batch(x)[0, 1]
        assert est.phi.scores.sum() == pytest.approx(full - empty, abs=1e-10)

    def test_complementary_classes(self, lemma1_oracle):
        x = [0.3, 0.5]
        a = shap_s(lemma1_oracle, x, 0, num_samples=16).phi.scores
        b = shap_s(lemma1_oracle, x, 1, num_samples=16).phi.scores
        np.testing.assert_allclose(a, -b, atol=1e-8)

    def test_class_dependent_on_lemma1(self, lemma1_oracle):
        x = [0.3, 0.5]
        a = shap_s(lemma1_oracle, x, 0, num_samples=16).phi.scores
        b = shap_s(lemma1_oracle, x, 1, num_samples=16).phi.scores
        assert not np.allclose(a, b)


@pytest.mark.unit
class TestProbabilityGames:
    @pytest.mark.parametrize("d", [3, 4, 5])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_efficiency_and_kernel_agreement(self, d, seed):
        rng = np.random.default_rng(seed)
        model = PredictionModel("mlp", input_dim=d, output_dim=3, hidden_dim=6)
        model.init_weights(rng)
        model.weights = model.weights * 20.0
        x = rng.normal(size=d)
        for y in range(3):
            vf = ValueFunction.probability(BaselineReplacement(model), y)
            exact = exact_shapley(vf, x)
            est = kernel_shap_solve(vf, x, num_samples=2**d + 8, seed=seed)
            assert exact.efficiency_residual == pytest.approx(0.0, abs=1e-12)
            assert abs(est.efficiency_residual) < 1e-10
            np.testing.assert_allclose(est.phi.scores, exact.phi.scores, atol=1e-8)

    def test_classes_cancel(self):
        rng = np.random.default_rng(7)
        model = PredictionModel("mlp", input_dim=4, output_dim=3, hidden_dim=5)
        model.init_weights(rng)
        model.weights = model.weights * 20.0
        x = rng.normal(size=4)
        total = sum(
            exact_shapley(ValueFunction.probability(BaselineReplacement(model), y), x).phi.scores
            for y in range(3)
        )
        np.testing.assert_allclose(total, 0.0, atol=1e-12)

    def test_symmetric_features_share_credit(self):
        model = PredictionModel("linear", input_dim=3, output_dim=2)
        W = np.array([[0.7, -0.4], [0.7, -0.4], [-1.2, 0.3]])
        model.weights = np.concatenate([W.ravel(), [0.1, -0.1]])
        x = np.array([1.5, 1.5, -0.5])
        vf = ValueFunction.probability(BaselineReplacement(model), 1)
        for est in (exact_shapley(vf, x), kernel_shap_solve(vf, x, num_samples=16)):
            assert est.phi.scores[0] == pytest.approx(est.phi.scores[1], abs=1e-10)

    def test_oracle_probability_game_on_lemma3(self, lemma3_oracle, lemma3_inputs):
        for x in lemma3_inputs:
            phis = []
            for y in range(3):
                vf = ValueFunction.probability(lemma3_oracle, y)
                est = exact_shapley(vf, x)
                assert est.efficiency_residual == pytest.approx(0.0, abs=1e-12)
                phis.append(est.phi.scores)
            np.testing.assert_allclose(np.sum(phis, axis=0), 0.0, atol=1e-12)


@pytest.mark.unit
class TestShap:
    def test_uses_zero_baseline(self):
        model = PredictionModel("linear", input_dim=3, output_dim=2)
        model.weights = np.array([0.5, -0.5, 1.0, -1.0, 0.2, 0.1, 0.0, 0.0])
        x = np.array([1.0, -2.0, 0.5])
        est = shap(model, x, 1, num_samples=32)
        exact = exact_shapley(ValueFunction.probability(BaselineReplacement(model), 1), x)
        np.testing.assert_allclose(est.phi.scores, exact.phi.scores, atol=1e-10)
        assert est.base_value == pytest.approx(0.5)


@pytest.mark.unit
class TestLime:
    def test_deterministic(self):
        game = CooperativeGame.random(5, seed=0)
        a = lime(game, None, num_samples=200, seed=3).scores
        b = lime(game, None, num_samples=200, seed=3).scores
        np.testing.assert_array_equal(a, b)

    def test_wide_kernel_is_unweighted_least_squares(self):
        game = CooperativeGame.random(4, seed=1)
        S = enumerate_subset_matrix(4).astype(float)
        design = np.column_stack([np.ones(16), S])
        coef, *_ = np.linalg.lstsq(design, game.table, rcond=None)
        est = lime(
            game,
            None,
            num_samples=16,
            kernel_width=1e6,
            ridge=1e-10,
            sampler_kind=SamplerKind.FULL_ENUMERATION,
        )
        np.testing.assert_allclose(est.scores, coef[1:], atol=1e-6)

    def test_additive_game_ranks_by_coefficient(self):
        coef = np.array([5.0, -1.0, 3.0, 0.5, 2.0])
        game = CooperativeGame.from_function(5, lambda bits: float(bits @ coef))
        est = lime(game, None, num_samples=500, seed=0)
        np.testing.assert_array_equal(
            np.argsort(-np.abs(est.scores)), np.argsort(-np.abs(coef))
        )

    def test_kernel_width_positive(self):
        with pytest.raises(ValueError):
            lime(CooperativeGame.random(3, seed=0), None, num_samples=10, kernel_width=0.0)
