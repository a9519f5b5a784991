import itertools
import logging
from typing import Callable, Optional, Protocol, Sequence, Union

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel

from .core import PROB_FLOOR, UsageError, as_features, kl_divergence_batch, log_likelihood_batch
from .masking import top_n, top_n_batch
from .structs import AttributionVector, Dataset, EvalReport, InclusionCurve, Instance
from .surrogate import ConditionalModel, ConditionalOracle

logger = logging.getLogger()

DEFAULT_GRID: tuple[float, ...] = (0, 1, 5, 10, 15, 25, 50, 75, 85, 90, 95, 99, 100)
DEFAULT_RESAMPLES = 1000
MAX_BRUTEFORCE_D = 6
# probabilities closer than this are treated as equal by the overconfidence check
OVERCONFIDENCE_TOL = 1e-12

AttributionsLike = Union[Sequence[AttributionVector], npt.ArrayLike]

__all__ = [
    "DEFAULT_GRID",
    "bootstrap_ci",
    "evaluate_attributions",
    "expected_inclusion_curve",
    "iauc",
    "inclusion_curve",
    "leakage_check",
    "optimal_explainer_bruteforce",
    "pointwise_ci",
    "overconfidence_witnesses",
    "predicted_class_overconfidence_check",
    "top_n",
]


def as_score_matrix(attribs: AttributionsLike) -> npt.NDArray[np.float64]:
    if isinstance(attribs, (list, tuple)) and attribs and isinstance(
        attribs[0], AttributionVector
    ):
        return np.vstack([a.scores for a in attribs])
    return np.atleast_2d(np.asarray(attribs, dtype=np.float64))


def _grid(grid: Optional[Sequence[float]]) -> npt.NDArray[np.float64]:
    return np.asarray(DEFAULT_GRID if grid is None else grid, dtype=np.float64)


def inclusion_curve(
    attribs: AttributionsLike,
    cond_model: ConditionalModel,
    data: Dataset,
    grid: Optional[Sequence[float]] = None,
    absolute: bool = False,
) -> InclusionCurve:
    """Mean log-likelihood of the true label given the top n% features, per n."""
    E = as_score_matrix(attribs)
    if E.shape != data.features.shape:
        raise ValueError(
            f"{E.shape[0]} attributions of width {E.shape[1]} for a dataset of shape "
            f"{data.features.shape}"
        )
    points = _grid(grid)
    rows = []
    for n in points:
        S = top_n_batch(E, float(n), absolute)
        probs = cond_model.predict_batch(data.features, S)
        rows.append(log_likelihood_batch(probs, data.labels))
    per_sample = np.vstack(rows)
    return InclusionCurve(
        grid=points, mean_loglik=per_sample.mean(axis=1), per_sample_loglik=per_sample
    )


def _area(values: npt.NDArray[np.float64], grid: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    out: npt.NDArray[np.float64] = np.trapezoid(values, grid, axis=0) / 100.0
    return out


def iauc(curve: InclusionCurve) -> float:
    """Trapezoid area under the curve, as an average over n in [0, 100]."""
    return float(_area(curve.mean_loglik, curve.grid))


def bootstrap_ci(
    curve: InclusionCurve, resamples: int = DEFAULT_RESAMPLES, seed: int = 0
) -> tuple[float, float]:
    """95% percentile interval of iAUC over resampled test instances."""
    per_instance = _area(curve.per_sample_loglik, curve.grid)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, per_instance.size, size=(resamples, per_instance.size))
    estimates = per_instance[idx].mean(axis=1)
    low, high = np.percentile(estimates, [2.5, 97.5])
    point = iauc(curve)
    return float(min(low, point)), float(max(high, point))


def pointwise_ci(
    curve: InclusionCurve, resamples: int = DEFAULT_RESAMPLES, seed: int = 0
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """Per-grid-point 95% percentile intervals of the mean log-likelihood."""
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, curve.num_samples, size=(resamples, curve.num_samples))
    boot = curve.per_sample_loglik[:, idx].mean(axis=2)
    low, high = np.percentile(boot, [2.5, 97.5], axis=1)
    return np.minimum(low, curve.mean_loglik), np.maximum(high, curve.mean_loglik)


def leakage_check(
    curve: InclusionCurve, resamples: int = DEFAULT_RESAMPLES, seed: int = 0
) -> bool:
    """True if some grid point beats the full-feature log-likelihood beyond noise.

    A point is flagged when the 2.5th bootstrap percentile of its mean
    per-instance improvement over n = 100 is strictly positive.
    """
    diffs = curve.per_sample_loglik[:-1] - curve.per_sample_loglik[-1]
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, curve.num_samples, size=(resamples, curve.num_samples))
    boot = diffs[:, idx].mean(axis=2)
    lower = np.percentile(boot, 2.5, axis=1)
    flagged = np.flatnonzero(lower > 0.0)
    if flagged.size:
        logger.info(f"leakage at grid points {curve.grid[flagged].tolist()}")
    return bool(flagged.size)


def evaluate_attributions(
    method: str,
    attribs: AttributionsLike,
    cond_model: ConditionalModel,
    data: Dataset,
    grid: Optional[Sequence[float]] = None,
    resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
    absolute: bool = False,
) -> EvalReport:
    curve = inclusion_curve(attribs, cond_model, data, grid, absolute)
    low, high = bootstrap_ci(curve, resamples, seed)
    report = EvalReport(
        method=method,
        iauc=iauc(curve),
        ci_low=low,
        ci_high=high,
        full_feature_loglik=curve.full_feature_loglik,
        leakage_flag=leakage_check(curve, resamples, seed),
        seed=seed,
        curve=curve,
    )
    logger.info(
        f"{method}: iAUC {report.iauc:.4f} [{low:.4f}, {high:.4f}] leakage={report.leakage_flag}"
    )
    return report


def expected_inclusion_curve(
    attribs: AttributionsLike,
    oracle: ConditionalOracle,
    inputs: npt.ArrayLike,
    grid: Optional[Sequence[float]] = None,
    weights: Optional[npt.ArrayLike] = None,
) -> InclusionCurve:
    """Inclusion curve with the label integrated out under F(y | x).

    Each instance contributes sum_y F(y|x) log F(y|x_s). `weights` (for
    example the support probabilities of a discrete process) replace the
    plain average.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    E = as_score_matrix(attribs)
    points = _grid(grid)
    full = oracle.full_batch(X)
    rows = []
    for n in points:
        sub = oracle.predict_batch(X, top_n_batch(E, float(n)))
        rows.append((full * np.log(np.maximum(sub, PROB_FLOOR))).sum(axis=1))
    per_sample = np.vstack(rows)
    w = (
        np.full(X.shape[0], 1.0 / X.shape[0])
        if weights is None
        else np.asarray(weights, dtype=np.float64) / np.sum(weights)
    )
    return InclusionCurve(
        grid=points, mean_loglik=per_sample @ w, per_sample_loglik=per_sample
    )


def ranking_scores(order: Sequence[int]) -> npt.NDArray[np.float64]:
    """Scores d, d-1, ..., 1 assigned to features in `order`."""
    d = len(order)
    scores = np.zeros(d)
    scores[list(order)] = np.arange(d, 0, -1, dtype=np.float64)
    return scores


def optimal_explainer_bruteforce(
    oracle: ConditionalOracle,
    x: Union[Instance, npt.ArrayLike],
    grid: Optional[Sequence[float]] = None,
) -> AttributionVector:
    """The feature ranking minimizing the grid-averaged KL(F(y|x) || F(y|x_top_n))."""
    features = as_features(x)
    d = features.size
    if d > MAX_BRUTEFORCE_D:
        raise ValueError(f"brute-force search is limited to d <= {MAX_BRUTEFORCE_D}")
    points = _grid(grid)
    orders = list(itertools.permutations(range(d)))
    scores = np.vstack([ranking_scores(o) for o in orders])
    full = oracle.full_batch(features)
    kls = []
    for n in points:
        sub = oracle.predict_batch(features[None, :], top_n_batch(scores, float(n)))
        kls.append(kl_divergence_batch(np.broadcast_to(full, sub.shape), sub))
    objective = _area(np.vstack(kls), points)
    best = 0
    for i in range(1, len(orders)):
        if objective[i] < objective[best]:
            best = i
    return AttributionVector(scores=scores[best])


class Witness(BaseModel):
    """An input and grid point where the explanation beats the full input for ŷ."""

    features: list[float]
    n: float
    predicted_class: int
    subset_probability: float
    full_probability: float


Adversary = Callable[[npt.NDArray[np.float64], int], Union[AttributionVector, npt.ArrayLike]]


class ClassPredictor(Protocol):
    def predicted_class_batch(self, X: npt.ArrayLike) -> npt.NDArray[np.int64]: ...


def overconfidence_witnesses(
    oracle: ConditionalOracle,
    adversary: Adversary,
    model: Optional[ClassPredictor] = None,
    grid: Optional[Sequence[float]] = None,
) -> list[Witness]:
    """Scan every positive-probability input of a discrete process.

    n = 0 is left out of the default grid: the empty explanation is the same
    for every explainer.
    """
    support = oracle.process.support()
    if support is None:
        raise UsageError(f"{oracle.process.kind} has no finite support to scan")
    inputs, probs = support
    inputs = inputs[probs > 0.0]
    points = _grid(grid) if grid is not None else _grid(DEFAULT_GRID)[1:]
    predictor = model if model is not None else oracle
    y_hat = predictor.predicted_class_batch(inputs)
    full = oracle.full_batch(inputs)
    witnesses = []
    for x, y, p_full in zip(inputs, y_hat, full):
        attribution = adversary(x, int(y))
        scores = (
            attribution.scores
            if isinstance(attribution, AttributionVector)
            else np.asarray(attribution, dtype=np.float64)
        )
        for n in points:
            s = top_n(scores, float(n))
            p_sub = oracle.predict_batch(x, s.bits)[0]
            if p_sub[y] > p_full[y] + OVERCONFIDENCE_TOL:
                witnesses.append(
                    Witness(
                        features=x.tolist(),
                        n=float(n),
                        predicted_class=int(y),
                        subset_probability=float(p_sub[y]),
                        full_probability=float(p_full[y]),
                    )
                )
    return witnesses


def predicted_class_overconfidence_check(
    oracle: ConditionalOracle,
    adversary: Adversary,
    model: Optional[ClassPredictor] = None,
    grid: Optional[Sequence[float]] = None,
) -> bool:
    return bool(overconfidence_witnesses(oracle, adversary, model, grid))
