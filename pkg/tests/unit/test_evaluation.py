import itertools

import numpy as np
import pytest

from attribution_leakage.core import UsageError
from attribution_leakage.evaluation import (
    DEFAULT_GRID,
    MAX_BRUTEFORCE_D,
    bootstrap_ci,
    evaluate_attributions,
    expected_inclusion_curve,
    iauc,
    inclusion_curve,
    leakage_check,
    optimal_explainer_bruteforce,
    overconfidence_witnesses,
    pointwise_ci,
    predicted_class_overconfidence_check,
    ranking_scores,
)
from attribution_leakage.shapley import shap_kl
from attribution_leakage.structs import AttributionVector, InclusionCurve
from attribution_leakage.surrogate import ConditionalOracle
from attribution_leakage.synthetic import (
    DummyFeatureProcess,
    LinearGaussianProcess,
    lemma1_adversary,
    lemma3_adversary,
)


def flat_curve(values, grid=DEFAULT_GRID, samples=5):
    values = np.asarray(values, dtype=float)
    return InclusionCurve(
        grid=list(grid),
        mean_loglik=values,
        per_sample_loglik=np.repeat(values[:, None], samples, axis=1),
    )


def adversary_scores(data):
    return np.vstack(
        [lemma1_adversary(x, int(y)).scores for x, y in zip(data.features, data.labels)]
    )


@pytest.mark.unit
class TestIAUC:
    def test_constant_curve(self):
        assert iauc(flat_curve(np.full(13, -0.4))) == pytest.approx(-0.4, abs=1e-12)

    def test_two_point_grid(self):
        assert iauc(flat_curve([-1.0, -0.2], grid=[0, 100])) == pytest.approx(-0.6)

    def test_trapezoid_on_default_grid(self):
        grid = np.asarray(DEFAULT_GRID, dtype=float)
        values = -1.0 + grid / 100.0 + 0.1 * np.sin(grid)
        expected = sum(
            (grid[i + 1] - grid[i]) * (values[i + 1] + values[i]) / 2.0 for i in range(12)
        ) / 100.0
        assert iauc(flat_curve(values)) == pytest.approx(expected, abs=1e-12)

    def test_grid_validated(self):
        with pytest.raises(ValueError):
            flat_curve([-1.0, -0.5], grid=[10, 100])
        with pytest.raises(ValueError):
            flat_curve([-1.0, -0.5, -0.4], grid=[0, 50, 50])


@pytest.mark.unit
class TestConfidenceIntervals:
    def test_zero_variance_is_degenerate(self):
        curve = flat_curve(np.linspace(-1.0, -0.1, 13))
        low, high = bootstrap_ci(curve, resamples=200)
        assert low == pytest.approx(iauc(curve), abs=1e-12)
        assert high == pytest.approx(iauc(curve), abs=1e-12)

    def test_contains_estimate_and_narrows_with_samples(self, lemma3_oracle, lemma3):
        widths = []
        for count in (100, 10_000):
            data = lemma3.sample(count, seed=0)
            scores = np.random.default_rng(1).normal(size=data.features.shape)
            curve = inclusion_curve(scores, lemma3_oracle, data)
            low, high = bootstrap_ci(curve, resamples=300)
            assert low <= iauc(curve) <= high
            widths.append(high - low)
        assert widths[1] < widths[0]

    def test_pointwise_bands(self, lemma3_oracle, lemma3):
        data = lemma3.sample(500, seed=2)
        curve = inclusion_curve(np.zeros(data.features.shape), lemma3_oracle, data)
        low, high = pointwise_ci(curve, resamples=200)
        assert low.shape == (13,)
        assert np.all(low <= curve.mean_loglik) and np.all(curve.mean_loglik <= high)


@pytest.mark.unit
class TestInclusionCurve:
    def test_endpoints_do_not_depend_on_the_method(self, lemma3_oracle, lemma3):
        data = lemma3.sample(300, seed=0)
        rng = np.random.default_rng(0)
        a = inclusion_curve(rng.normal(size=(300, 2)), lemma3_oracle, data)
        b = inclusion_curve(rng.normal(size=(300, 2)), lemma3_oracle, data)
        assert a.mean_loglik[0] == b.mean_loglik[0]
        assert a.mean_loglik[-1] == b.mean_loglik[-1]

    def test_full_point_is_full_feature_loglik(self, lemma3_oracle, lemma3):
        data = lemma3.sample(300, seed=1)
        curve = inclusion_curve(np.ones((300, 2)), lemma3_oracle, data)
        full = lemma3_oracle.full_batch(data.features)[np.arange(300), data.labels]
        assert curve.full_feature_loglik == pytest.approx(np.log(full).mean())

    def test_accepts_attribution_vectors(self, lemma3_oracle, lemma3):
        data = lemma3.sample(4, seed=0)
        vectors = [AttributionVector(scores=[1.0, 0.0])] * 4
        a = inclusion_curve(vectors, lemma3_oracle, data)
        b = inclusion_curve(np.tile([1.0, 0.0], (4, 1)), lemma3_oracle, data)
        np.testing.assert_array_equal(a.mean_loglik, b.mean_loglik)

    def test_shape_checked(self, lemma3_oracle, lemma3):
        data = lemma3.sample(10, seed=0)
        with pytest.raises(ValueError):
            inclusion_curve(np.zeros((9, 2)), lemma3_oracle, data)

    def test_invariant_to_monotone_rescaling(self, lemma3_oracle, lemma3):
        data = lemma3.sample(200, seed=3)
        scores = np.random.default_rng(3).normal(size=(200, 2))
        a = evaluate_attributions("raw", scores, lemma3_oracle, data, resamples=100)
        b = evaluate_attributions("exp", np.exp(scores), lemma3_oracle, data, resamples=100)
        assert a.iauc == b.iauc

    def test_report_carries_the_curve(self, lemma3_oracle, lemma3):
        data = lemma3.sample(100, seed=4)
        report = evaluate_attributions("zero", np.zeros((100, 2)), lemma3_oracle, data, resamples=50)
        assert report.curve is not None
        assert report.iauc == pytest.approx(iauc(report.curve))
        assert "curve" not in report.model_dump()


@pytest.mark.unit
class TestLeakage:
    def test_lemma1_adversary_beats_full_features(self, lemma1, lemma1_oracle):
        data = lemma1.sample(2000, seed=0)
        curve = inclusion_curve(adversary_scores(data), lemma1_oracle, data)
        at_50 = curve.mean_loglik[list(DEFAULT_GRID).index(50)]
        assert at_50 > curve.mean_loglik[-1]
        assert leakage_check(curve, resamples=500)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_shap_kl_does_not_leak_on_lemma1(self, lemma1, lemma1_oracle, seed):
        data = lemma1.sample(400, seed=seed)
        scores = np.vstack(
            [shap_kl(lemma1_oracle, x, num_samples=16).phi.scores for x in data.features]
        )
        report = evaluate_attributions("shap-kl", scores, lemma1_oracle, data, resamples=500)
        assert not report.leakage_flag

    @pytest.mark.parametrize("process", ["lemma1", "lemma3"])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_random_ranking_does_not_leak(self, request, process, seed):
        process = request.getfixturevalue(process)
        oracle = ConditionalOracle(process)
        data = process.sample(2000, seed=seed)
        scores = np.random.default_rng(seed).random(data.features.shape)
        report = evaluate_attributions("random", scores, oracle, data, resamples=500)
        assert not report.leakage_flag

    @pytest.mark.slow
    @pytest.mark.parametrize("process", ["lemma1", "lemma3"])
    @pytest.mark.parametrize("seed", range(20))
    def test_shap_kl_never_leaks(self, request, process, seed):
        process = request.getfixturevalue(process)
        oracle = ConditionalOracle(process)
        data = process.sample(300, seed=seed)
        scores = np.vstack(
            [shap_kl(oracle, x, num_samples=16).phi.scores for x in data.features]
        )
        report = evaluate_attributions("shap-kl", scores, oracle, data, resamples=500)
        assert not report.leakage_flag


@pytest.mark.unit
class TestBruteForce:
    def test_ranking_scores(self):
        np.testing.assert_array_equal(ranking_scores([2, 0, 1]), [2.0, 1.0, 3.0])

    def test_single_feature(self):
        oracle = ConditionalOracle(LinearGaussianProcess(weights=[1.0]))
        np.testing.assert_array_equal(optimal_explainer_bruteforce(oracle, [0.3]).scores, [1.0])

    def test_puts_the_informative_feature_first(self, dummy_oracle):
        for x in ([1.0, 0.0], [0.0, 1.0]):
            scores = optimal_explainer_bruteforce(dummy_oracle, x).scores
            assert scores[0] > scores[1]

    def test_dimension_limit(self):
        d = MAX_BRUTEFORCE_D + 1
        oracle = ConditionalOracle(LinearGaussianProcess(weights=[1.0] * d))
        with pytest.raises(ValueError):
            optimal_explainer_bruteforce(oracle, np.zeros(d))

    @pytest.mark.parametrize(
        "process",
        [DummyFeatureProcess(num_features=3), DummyFeatureProcess(num_features=2, low=0.3)],
    )
    def test_attains_the_best_expected_iauc(self, process):
        self._check_exhaustively(ConditionalOracle(process))

    def test_attains_the_best_expected_iauc_on_lemma3(self, lemma3_oracle):
        self._check_exhaustively(lemma3_oracle)

    @staticmethod
    def _check_exhaustively(oracle):
        inputs, probs = oracle.process.support()
        d = inputs.shape[1]
        for x in inputs:
            best = optimal_explainer_bruteforce(oracle, x)
            found = iauc(expected_inclusion_curve([best], oracle, x[None, :]))
            candidates = [
                iauc(expected_inclusion_curve(ranking_scores(order)[None, :], oracle, x[None, :]))
                for order in itertools.permutations(range(d))
            ]
            assert found >= max(candidates) - 1e-12

    def test_support_weighted_expected_curve(self, lemma3_oracle):
        inputs, probs = lemma3_oracle.process.support()
        best = np.vstack([optimal_explainer_bruteforce(lemma3_oracle, x).scores for x in inputs])
        optimal = iauc(expected_inclusion_curve(best, lemma3_oracle, inputs, weights=probs))
        for order in itertools.permutations(range(2)):
            fixed = np.tile(ranking_scores(order), (inputs.shape[0], 1))
            other = iauc(expected_inclusion_curve(fixed, lemma3_oracle, inputs, weights=probs))
            assert optimal >= other - 1e-12


@pytest.mark.unit
class TestOverconfidence:
    def test_lemma3_adversary_witnesses(self, lemma3_oracle):
        witnesses = overconfidence_witnesses(lemma3_oracle, lambda x, y: lemma3_adversary(x))
        found = {
            (tuple(w.features), round(w.subset_probability, 12), w.full_probability)
            for w in witnesses
        }
        assert found == {((1.0, 1.0), 0.75, 0.5), ((0.0, 0.0), 0.9, 0.5)}
        assert {w.n for w in witnesses} == {1.0, 5.0, 10.0, 15.0, 25.0, 50.0}
        assert all(w.predicted_class == 0 for w in witnesses)

    def test_explicit_grid(self, lemma3_oracle):
        assert predicted_class_overconfidence_check(
            lemma3_oracle, lambda x, y: lemma3_adversary(x), grid=[50]
        )
        assert not predicted_class_overconfidence_check(
            lemma3_oracle, lambda x, y: lemma3_adversary(x), grid=[100]
        )

    def test_shap_kl_has_no_witnesses(self, lemma3_oracle):
        def explain(x, y):
            return shap_kl(lemma3_oracle, x, num_samples=16).phi

        assert overconfidence_witnesses(lemma3_oracle, explain) == []

    def test_needs_finite_support(self):
        oracle = ConditionalOracle(LinearGaussianProcess())
        with pytest.raises(UsageError):
            overconfidence_witnesses(oracle, lambda x, y: np.ones(2))
