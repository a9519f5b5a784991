import itertools
import logging
from typing import Callable, Optional, Union

import numpy as np
import numpy.typing as npt
from scipy.special import comb
from sklearn.linear_model import Ridge

from .core import InsufficientSamplesError
from .masking import (
    SamplerKind,
    SubsetSampler,
    enumerate_subset_matrix,
)
from .models import PredictionModel
from .structs import AttributionVector, Instance, Label, ShapleyEstimate
from .surrogate import BaselineReplacement, ConditionalModel
from .value_functions import Game, ValueFunction

logger = logging.getLogger()

MAX_EXACT_D = 12
LIME_RIDGE = 1e-3
# normal equations worse conditioned than this are treated as singular
MAX_CONDITION = 1e12

GameLike = Union[Game, ValueFunction]


class CooperativeGame:
    """A game given by its full value table, indexed like enumerate_subsets."""

    d: int
    table: npt.NDArray[np.float64]

    def __init__(self, d: int, table: npt.ArrayLike) -> None:
        values = np.asarray(table, dtype=np.float64).reshape(-1)
        if values.size != 2**d:
            raise ValueError(f"a game on {d} players needs {2**d} values, got {values.size}")
        self.d = d
        self.table = values
        self._powers = 2 ** np.arange(d - 1, -1, -1)

    @classmethod
    def from_function(
        cls, d: int, fn: Callable[[npt.NDArray[np.int8]], float]
    ) -> "CooperativeGame":
        return cls(d, [fn(bits) for bits in enumerate_subset_matrix(d)])

    @classmethod
    def from_coalitions(cls, d: int, values: dict[frozenset[int], float]) -> "CooperativeGame":
        """Players are 0-based; missing coalitions are worth 0."""
        return cls.from_function(
            d, lambda bits: values.get(frozenset(np.flatnonzero(bits).tolist()), 0.0)
        )

    @classmethod
    def random(cls, d: int, seed: int) -> "CooperativeGame":
        return cls(d, np.random.default_rng(seed).random(2**d))

    def values(self, S: npt.NDArray[np.int8]) -> npt.NDArray[np.float64]:
        idx = np.atleast_2d(S).astype(np.int64) @ self._powers
        out: npt.NDArray[np.float64] = self.table[idx]
        return out

    def __repr__(self) -> str:
        return f"<CooperativeGame d={self.d}>"


def _as_game(game: GameLike, x: Optional[Union[Instance, npt.ArrayLike]]) -> Game:
    if isinstance(game, ValueFunction):
        if x is None:
            raise ValueError("an instance is needed to evaluate a value function")
        return game.bind(x)
    return game


def exact_shapley(
    vf: GameLike, x: Optional[Union[Instance, npt.ArrayLike]] = None
) -> ShapleyEstimate:
    """Shapley values by summing weighted marginal contributions over all subsets."""
    game = _as_game(vf, x)
    d = game.d
    if d > MAX_EXACT_D:
        raise ValueError(f"exact Shapley enumeration is limited to d <= {MAX_EXACT_D}")
    S = enumerate_subset_matrix(d)
    v = game.values(S)
    sizes = S.sum(axis=1)
    weights = 1.0 / (d * comb(d - 1, np.minimum(sizes, d - 1)))
    phi = np.zeros(d)
    for i in range(d):
        without = np.flatnonzero(S[:, i] == 0)
        with_i = without + 2 ** (d - 1 - i)
        phi[i] = np.sum(weights[without] * (v[with_i] - v[without]))
    return ShapleyEstimate(
        phi=AttributionVector(scores=phi),
        base_value=float(v[0]),
        full_value=float(v[-1]),
        num_subset_samples=int(S.shape[0]),
    )


def _kernel_design(
    d: int, num_samples: int, seed: int, paired: bool = True
) -> tuple[npt.NDArray[np.int8], npt.NDArray[np.float64]]:
    """Masks and regression weights for a kernel regression with a fixed budget.

    Whole subset-size layers (with their complements) are enumerated while
    the budget covers them; the remaining sizes are sampled from the kernel,
    complements included, and repeated masks are merged into count weights.
    """
    num_sizes = int(np.ceil((d - 1) / 2.0))
    num_paired = int(np.floor((d - 1) / 2.0))
    size_weight = np.array([(d - 1.0) / (k * (d - k)) for k in range(1, num_sizes + 1)])
    size_weight[:num_paired] *= 2
    size_weight /= size_weight.sum()

    masks: list[npt.NDArray[np.int8]] = []
    weights: list[float] = []
    samples_left = num_samples
    remaining = size_weight.copy()
    num_full = 0
    for k in range(1, num_sizes + 1):
        layer = comb(d, k, exact=True)
        count = layer * 2 if k <= num_paired else layer
        if samples_left * remaining[k - 1] / count < 1.0 - 1e-8:
            break
        num_full += 1
        samples_left -= count
        if remaining[k - 1] < 1.0:
            remaining /= 1.0 - remaining[k - 1]
        w = size_weight[k - 1] / layer
        if k <= num_paired:
            w /= 2.0
        for inds in itertools.combinations(range(d), k):
            bits = np.zeros(d, dtype=np.int8)
            bits[list(inds)] = 1
            masks.append(bits)
            weights.append(w)
            if k <= num_paired:
                masks.append(1 - bits)
                weights.append(w)
    logger.debug(f"kernel design: {num_full} of {num_sizes} size layers enumerated")

    if num_full < num_sizes and samples_left > 0:
        fixed = len(masks)
        sizes = [k for k in range(num_full + 1, d - num_full)]
        sampler = SubsetSampler(SamplerKind.SHAPLEY_KERNEL, d, seed)
        draws = sampler.sample_batch(4 * samples_left, sizes=sizes)
        seen: dict[bytes, int] = {}
        for bits in draws:
            if samples_left <= 0:
                break
            key = bits.tobytes()
            if key in seen:
                weights[seen[key]] += 1.0
            else:
                seen[key] = len(masks)
                masks.append(bits.copy())
                weights.append(1.0)
                samples_left -= 1
            if not paired or samples_left <= 0:
                continue
            comp = (1 - bits).astype(np.int8)
            ckey = comp.tobytes()
            if ckey in seen:
                weights[seen[ckey]] += 1.0
            else:
                seen[ckey] = len(masks)
                masks.append(comp)
                weights.append(1.0)
                samples_left -= 1
        weight_left = float(size_weight[num_full:].sum())
        sampled = np.asarray(weights[fixed:])
        weights[fixed:] = list(sampled * weight_left / sampled.sum())

    if not masks:
        return np.zeros((0, d), dtype=np.int8), np.zeros(0)
    return np.array(masks, dtype=np.int8), np.asarray(weights, dtype=np.float64)


def solve_constrained_wls(
    masks: npt.NDArray[np.int8],
    weights: npt.NDArray[np.float64],
    values: npt.NDArray[np.float64],
    base_value: float,
    full_value: float,
) -> npt.NDArray[np.float64]:
    """argmin sum_j w_j (v_j - v0 - s_j.phi)^2 subject to sum(phi) = v1 - v0.

    The last coordinate is eliminated through the constraint and the
    remaining d-1 come from the weighted normal equations.
    """
    d = masks.shape[1]
    total = full_value - base_value
    if d == 1:
        return np.array([total])
    if masks.shape[0] < d - 1:
        raise InsufficientSamplesError(
            f"{masks.shape[0]} distinct subsets cannot identify {d} attributions"
        )
    M = masks.astype(np.float64)
    A = M[:, :-1] - M[:, -1:]
    b = values - base_value - M[:, -1] * total
    WA = weights[:, None] * A
    normal = A.T @ WA
    if np.linalg.matrix_rank(normal) < d - 1 or np.linalg.cond(normal) > MAX_CONDITION:
        raise InsufficientSamplesError(
            f"singular kernel regression with {masks.shape[0]} subsets for d={d}"
        )
    head = np.linalg.solve(normal, WA.T @ b)
    return np.append(head, total - head.sum())


def kernel_shap_solve(
    vf: GameLike,
    x: Optional[Union[Instance, npt.ArrayLike]],
    num_samples: int,
    seed: int = 0,
    paired: bool = True,
) -> ShapleyEstimate:
    game = _as_game(vf, x)
    d = game.d
    if d < 2:
        raise ValueError("kernel regression needs d >= 2")
    if num_samples < d:
        raise ValueError(f"num_samples must be at least d={d}, got {num_samples}")
    masks, weights = _kernel_design(d, num_samples, seed, paired)
    ends = np.vstack([np.zeros(d, dtype=np.int8), np.ones(d, dtype=np.int8)])
    values = game.values(np.vstack([ends, masks]) if masks.size else ends)
    base_value, full_value = float(values[0]), float(values[1])
    phi = solve_constrained_wls(masks, weights, values[2:], base_value, full_value)
    logger.debug(f"kernel SHAP d={d} subsets={masks.shape[0]} seed={seed}")
    return ShapleyEstimate(
        phi=AttributionVector(scores=phi),
        base_value=base_value,
        full_value=full_value,
        num_subset_samples=int(masks.shape[0]),
        seed=seed,
    )


def shap_kl(
    model: ConditionalModel,
    x: Union[Instance, npt.ArrayLike],
    num_samples: int = 2048,
    seed: int = 0,
) -> ShapleyEstimate:
    return kernel_shap_solve(ValueFunction.kl(model), x, num_samples, seed)


def shap_s(
    surr: ConditionalModel,
    x: Union[Instance, npt.ArrayLike],
    y: Union[Label, int],
    num_samples: int = 2048,
    seed: int = 0,
) -> ShapleyEstimate:
    return kernel_shap_solve(ValueFunction.probability(surr, y), x, num_samples, seed)


def shap(
    model: PredictionModel,
    x: Union[Instance, npt.ArrayLike],
    y: Union[Label, int],
    num_samples: int = 2048,
    seed: int = 0,
    baseline: Optional[npt.ArrayLike] = None,
) -> ShapleyEstimate:
    replaced = BaselineReplacement(model, baseline)
    return kernel_shap_solve(
        ValueFunction.probability(replaced, y), x, num_samples, seed
    )


def lime(
    vf: GameLike,
    x: Optional[Union[Instance, npt.ArrayLike]],
    num_samples: int,
    kernel_width: Optional[float] = None,
    seed: int = 0,
    ridge: float = LIME_RIDGE,
    sampler_kind: Union[SamplerKind, str] = SamplerKind.UNIFORM_CARDINALITY,
) -> AttributionVector:
    """Local linear surrogate over subsets, weighted by exp(-H^2 / width^2).

    H counts removed features. The default width is d.
    """
    game = _as_game(vf, x)
    d = game.d
    if num_samples < d:
        raise ValueError(f"num_samples must be at least d={d}, got {num_samples}")
    width = float(d) if kernel_width is None else float(kernel_width)
    if width <= 0:
        raise ValueError(f"kernel width must be positive, got {width}")
    S = SubsetSampler(sampler_kind, d, seed).sample_batch(num_samples)
    removed = d - S.sum(axis=1)
    weights = np.exp(-(removed.astype(np.float64) ** 2) / width**2)
    fit = Ridge(alpha=ridge, fit_intercept=True)
    fit.fit(S.astype(np.float64), game.values(S), sample_weight=weights)
    return AttributionVector(scores=np.asarray(fit.coef_, dtype=np.float64))

