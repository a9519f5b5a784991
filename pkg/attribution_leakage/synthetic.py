"""Data-generating processes with exact conditionals F(y | x_s).

Every process is a pydantic model so its parameters can be read straight
from the `[process]` section of a run config.
"""

import itertools
import logging
from abc import ABC, abstractmethod
from typing import Any, Literal, Optional, Union

import numpy as np
import numpy.typing as npt
from numpy.polynomial.legendre import leggauss
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.special import expit
from scipy.stats import norm

from .core import UsageError, as_features
from .masking import top_n_batch
from .structs import AttributionVector, Dataset, Instance, Label

logger = logging.getLogger()

QUADRATURE_NODES = 64
# N(0, 1) mass beyond this many standard deviations is below float resolution
GAUSSIAN_CUTOFF = 8.0


def _gauss_legendre(
    low: float, high: float, nodes: int
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    z, w = leggauss(nodes)
    half = (high - low) / 2.0
    return low + half * (z + 1.0), half * w


class SyntheticProcess(BaseModel, ABC):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: str
    quadrature_nodes: int = Field(QUADRATURE_NODES, ge=2)

    @property
    @abstractmethod
    def d(self) -> int: ...

    @property
    @abstractmethod
    def num_classes(self) -> int: ...

    @abstractmethod
    def _sample_features(
        self, rng: np.random.Generator, count: int
    ) -> npt.NDArray[np.float64]: ...

    @abstractmethod
    def full_conditional_batch(
        self, X: npt.NDArray[np.float64]
    ) -> npt.NDArray[np.float64]:
        """F(y | x) for every row of X."""

    @abstractmethod
    def conditional_batch(
        self, X: npt.NDArray[np.float64], S: npt.NDArray[np.int8]
    ) -> npt.NDArray[np.float64]:
        """F(y | x_s) for every (row of X, row of S) pair."""

    def support(
        self,
    ) -> Optional[tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]]:
        """(inputs, probabilities) for discrete processes, None otherwise."""
        return None

    def sample(self, count: int, seed: int) -> Dataset:
        if count < 1:
            raise ValueError(f"count must be at least 1, got {count}")
        rng = np.random.default_rng(seed)
        X = self._sample_features(rng, count)
        cdf = np.cumsum(self.full_conditional_batch(X), axis=1)
        u = rng.random(count)
        y = np.minimum((cdf < u[:, None]).sum(axis=1), self.num_classes - 1)
        return Dataset(features=X, labels=y, num_classes=self.num_classes)

    def _pair(
        self, X: npt.ArrayLike, S: npt.ArrayLike
    ) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.int8]]:
        X2 = np.atleast_2d(np.asarray(X, dtype=np.float64))
        S2 = np.atleast_2d(np.asarray(S, dtype=np.int8))
        if X2.shape[1] != self.d or S2.shape[1] != self.d:
            raise ValueError(f"{self.kind} has d={self.d}")
        X2, S2 = np.broadcast_arrays(X2, S2)
        return X2, S2


class Lemma1Process(SyntheticProcess):
    """x1 ~ U(0,1), x2 fixed at 1/2, y ~ Bernoulli((x1 + x2) / 2)."""

    kind: Literal["lemma1"] = "lemma1"
    x2_value: float = 0.5

    @property
    def d(self) -> int:
        return 2

    @property
    def num_classes(self) -> int:
        return 2

    def _sample_features(
        self, rng: np.random.Generator, count: int
    ) -> npt.NDArray[np.float64]:
        x1 = rng.random(count)
        return np.column_stack([x1, np.full(count, self.x2_value)])

    def _class_probs(self, p1: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        return np.column_stack([1.0 - p1, p1])

    def full_conditional_batch(
        self, X: npt.NDArray[np.float64]
    ) -> npt.NDArray[np.float64]:
        X = np.atleast_2d(X)
        return self._class_probs((X[:, 0] + X[:, 1]) / 2.0)

    def conditional_batch(
        self, X: npt.NDArray[np.float64], S: npt.NDArray[np.int8]
    ) -> npt.NDArray[np.float64]:
        X, S = self._pair(X, S)
        x2 = np.where(S[:, 1] == 1, X[:, 1], self.x2_value)
        t, w = _gauss_legendre(0.0, 1.0, self.quadrature_nodes)
        integrated = ((t[None, :] + x2[:, None]) / 2.0) @ w
        p1 = np.where(S[:, 0] == 1, (X[:, 0] + x2) / 2.0, integrated)
        return self._class_probs(p1)


class LinearGaussianProcess(SyntheticProcess):
    """x ~ N(0, I), y ~ Bernoulli(sigmoid(w.x + b))."""

    kind: Literal["linear-gaussian"] = "linear-gaussian"
    weights: list[float] = Field(default_factory=lambda: [2.0, -1.0, 0.5, 0.0])
    bias: float = 0.0

    @model_validator(mode="after")
    def _has_features(self) -> "LinearGaussianProcess":
        if len(self.weights) < 1:
            raise ValueError("linear-gaussian needs at least one weight")
        return self

    @property
    def d(self) -> int:
        return len(self.weights)

    @property
    def num_classes(self) -> int:
        return 2

    def _sample_features(
        self, rng: np.random.Generator, count: int
    ) -> npt.NDArray[np.float64]:
        return rng.standard_normal((count, self.d))

    def full_conditional_batch(
        self, X: npt.NDArray[np.float64]
    ) -> npt.NDArray[np.float64]:
        p1 = expit(np.atleast_2d(X) @ np.asarray(self.weights) + self.bias)
        return np.column_stack([1.0 - p1, p1])

    def conditional_batch(
        self, X: npt.NDArray[np.float64], S: npt.NDArray[np.int8]
    ) -> npt.NDArray[np.float64]:
        X, S = self._pair(X, S)
        w = np.asarray(self.weights)
        kept = np.where(S == 1, X, 0.0) @ w + self.bias
        # the masked part of w.x is N(0, sum of masked w_i^2)
        spread = np.sqrt(np.where(S == 0, w**2, 0.0).sum(axis=1))
        t, q = _gauss_legendre(-GAUSSIAN_CUTOFF, GAUSSIAN_CUTOFF, self.quadrature_nodes)
        density = q * norm.pdf(t)
        p1 = expit(kept[:, None] + spread[:, None] * t[None, :]) @ density
        p1 = p1 / density.sum()
        return np.column_stack([1.0 - p1, p1])


class DiscreteProcess(SyntheticProcess):
    """Independent discrete features; conditionals by exact enumeration."""

    @abstractmethod
    def marginals(self) -> list[tuple[list[float], list[float]]]:
        """Per-feature (values, probabilities)."""

    @property
    def d(self) -> int:
        return len(self.marginals())

    def _sample_features(
        self, rng: np.random.Generator, count: int
    ) -> npt.NDArray[np.float64]:
        columns = [
            rng.choice(np.asarray(values), size=count, p=np.asarray(probs))
            for values, probs in self.marginals()
        ]
        return np.column_stack(columns).astype(np.float64)

    def _table(
        self,
    ) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
        """Every input combination and per-feature probabilities of its values."""
        margs = self.marginals()
        combos = np.array(
            list(itertools.product(*[values for values, _ in margs])), dtype=np.float64
        )
        feature_probs = np.array(
            list(itertools.product(*[probs for _, probs in margs])), dtype=np.float64
        )
        return combos, feature_probs

    def support(
        self,
    ) -> Optional[tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]]:
        combos, feature_probs = self._table()
        return combos, feature_probs.prod(axis=1)

    def conditional_batch(
        self, X: npt.NDArray[np.float64], S: npt.NDArray[np.int8]
    ) -> npt.NDArray[np.float64]:
        X, S = self._pair(X, S)
        combos, feature_probs = self._table()
        masked = S[:, None, :] == 0
        agree = np.all((combos[None, :, :] == X[:, None, :]) | masked, axis=2)
        weight = np.prod(np.where(masked, feature_probs[None, :, :], 1.0), axis=2)
        weight = weight * agree
        total = weight.sum(axis=1)
        if np.any(total == 0.0):
            bad = X[np.argmax(total == 0.0)]
            raise ValueError(f"input {bad.tolist()} is not realizable under {self.kind}")
        probs: npt.NDArray[np.float64] = (
            weight @ self.full_conditional_batch(combos)
        ) / total[:, None]
        return probs


class Lemma3Process(DiscreteProcess):
    """x1 ~ Bern(0.8), x2 ~ Bern(0.5), three classes.

    With q = max((x1 - x2) / 2, 0) + 1/2 the class distribution is
    [q, (1 - q) / 2, (1 - q) / 2], so class 0 is always the most likely.
    """

    kind: Literal["lemma3"] = "lemma3"
    p_x1: float = Field(0.8, gt=0.0, lt=1.0)
    p_x2: float = Field(0.5, gt=0.0, lt=1.0)

    @property
    def num_classes(self) -> int:
        return 3

    def marginals(self) -> list[tuple[list[float], list[float]]]:
        return [
            ([0.0, 1.0], [1.0 - self.p_x1, self.p_x1]),
            ([0.0, 1.0], [1.0 - self.p_x2, self.p_x2]),
        ]

    def full_conditional_batch(
        self, X: npt.NDArray[np.float64]
    ) -> npt.NDArray[np.float64]:
        X = np.atleast_2d(X)
        q = np.maximum((X[:, 0] - X[:, 1]) / 2.0, 0.0) + 0.5
        rest = (1.0 - q) / 2.0
        return np.column_stack([q, rest, rest])


class DummyFeatureProcess(DiscreteProcess):
    """Binary features; only x1 moves y, the rest are dummies."""

    kind: Literal["dummy-feature"] = "dummy-feature"
    num_features: int = Field(2, ge=2)
    low: float = Field(0.1, ge=0.0, le=1.0)
    high: float = Field(0.9, ge=0.0, le=1.0)

    @property
    def num_classes(self) -> int:
        return 2

    def marginals(self) -> list[tuple[list[float], list[float]]]:
        return [([0.0, 1.0], [0.5, 0.5]) for _ in range(self.num_features)]

    def full_conditional_batch(
        self, X: npt.NDArray[np.float64]
    ) -> npt.NDArray[np.float64]:
        p1 = self.low + (self.high - self.low) * np.atleast_2d(X)[:, 0]
        return np.column_stack([1.0 - p1, p1])


PROCESSES: dict[str, type[SyntheticProcess]] = {
    "lemma1": Lemma1Process,
    "lemma3": Lemma3Process,
    "linear-gaussian": LinearGaussianProcess,
    "dummy-feature": DummyFeatureProcess,
}


def make_process(name: str, **params: Any) -> SyntheticProcess:
    if name not in PROCESSES:
        raise UsageError(
            f"unknown process '{name}', choose from {', '.join(sorted(PROCESSES))}"
        )
    try:
        return PROCESSES[name](**params)
    except ValidationError as e:
        raise UsageError(f"invalid parameters for process '{name}': {e}") from e


def sample(proc: SyntheticProcess, count: int, seed: int) -> Dataset:
    return proc.sample(count, seed)


def lemma1_adversary(
    x: Union[Instance, npt.ArrayLike], y: Union[Label, int]
) -> AttributionVector:
    """Keeps x1 exactly when it pushes toward the given label, x2 otherwise."""
    x1 = float(as_features(x)[0])
    label = int(y)
    if label == 1:
        keep_x1 = x1 >= 0.5
    else:
        keep_x1 = x1 <= 0.5
    return AttributionVector(scores=[1.0, 0.0] if keep_x1 else [0.0, 1.0])


def lemma3_adversary(x: Union[Instance, npt.ArrayLike]) -> AttributionVector:
    """Explains the (always identical) predicted class 0 from x1 alone."""
    x1 = float(as_features(x)[0])
    return AttributionVector(scores=[1.0, 0.0] if x1 == 1.0 else [0.0, 1.0])


def _lemma1_half(
    proc: Lemma1Process, low: float, high: float, nodes: int
) -> tuple[float, float]:
    """Full-feature and adversarial top-50% expected log-likelihood on [low, high]."""
    t, w = _gauss_legendre(low, high, nodes)
    X = np.column_stack([t, np.full(t.size, proc.x2_value)])
    full = proc.full_conditional_batch(X)
    full_term = 0.0
    top_term = 0.0
    for y in range(proc.num_classes):
        scores = np.array([lemma1_adversary(row, y).scores for row in X])
        S = top_n_batch(scores, 50.0)
        sub = proc.conditional_batch(X, S)
        full_term += float(np.dot(w, full[:, y] * np.log(full[:, y])))
        top_term += float(np.dot(w, full[:, y] * np.log(sub[:, y])))
    return full_term, top_term


def lemma1_expected_logliks(
    nodes: int = QUADRATURE_NODES, proc: Optional[Lemma1Process] = None
) -> tuple[float, float]:
    """(E log F(y|x), E log F(y | x_top50%)) for the adversarial explainer."""
    proc = proc or Lemma1Process(quadrature_nodes=nodes)
    # the adversary switches at x1 = 1/2; integrate each side separately
    full_lo, top_lo = _lemma1_half(proc, 0.0, 0.5, nodes)
    full_hi, top_hi = _lemma1_half(proc, 0.5, 1.0, nodes)
    return full_lo + full_hi, top_lo + top_hi


def exact_leakage_gap_lemma1(nodes: int = QUADRATURE_NODES) -> float:
    full, top = lemma1_expected_logliks(nodes)
    gap = top - full
    logger.debug(f"lemma1 leakage gap with {nodes} nodes: {gap:.12f}")
    return gap

