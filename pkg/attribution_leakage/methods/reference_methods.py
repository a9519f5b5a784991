"""Explainers with known behavior, used as references for the evaluation."""

from typing import Optional

import numpy as np
import numpy.typing as npt

from ..evaluation import optimal_explainer_bruteforce
from ..explainer import Explainer
from ..synthetic import lemma1_adversary, lemma3_adversary


class Lemma1Adversary(Explainer):
    """Keeps x1 exactly when it argues for the class it is handed."""

    METHOD_ID = "lemma1-adversary"
    CLASS_DEPENDENT = True

    def explain(
        self, x: npt.NDArray[np.float64], y: Optional[int], seed: int
    ) -> npt.NDArray[np.float64]:
        assert y is not None
        return lemma1_adversary(x, y).scores


class Lemma3Adversary(Explainer):
    # the predicted class is constant on this process, so only x is read
    METHOD_ID = "lemma3-adversary"
    CLASS_DEPENDENT = True

    def explain(
        self, x: npt.NDArray[np.float64], y: Optional[int], seed: int
    ) -> npt.NDArray[np.float64]:
        return lemma3_adversary(x).scores


class OptimalBruteforce(Explainer):
    """The ranking minimizing the grid-averaged KL under exact conditionals."""

    METHOD_ID = "optimal-bruteforce"

    def explain(
        self, x: npt.NDArray[np.float64], y: Optional[int], seed: int
    ) -> npt.NDArray[np.float64]:
        oracle = self.ctx.require_oracle(self.METHOD_ID)
        return optimal_explainer_bruteforce(oracle, x).scores


class RandomRanking(Explainer):
    METHOD_ID = "random"

    def explain(
        self, x: npt.NDArray[np.float64], y: Optional[int], seed: int
    ) -> npt.NDArray[np.float64]:
        return np.random.default_rng(seed).random(x.size)
