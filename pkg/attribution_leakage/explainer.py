import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt

from .config import ClassSource, ExplainSection
from .core import UsageError
from .models import PredictionModel
from .structs import Dataset
from .surrogate import ConditionalModel, ConditionalOracle
from .swarm import Swarm

logger = logging.getLogger()


@dataclass
class ExplainContext:
    """What an explainer may read: never the labels, only the classes it is handed."""

    settings: ExplainSection
    conditional: Optional[ConditionalModel] = None
    model: Optional[PredictionModel] = None

    def require_model(self, method: str) -> PredictionModel:
        if self.model is None:
            raise UsageError(f"{method} needs a prediction model (explain.model)")
        return self.model

    def require_conditional(self, method: str) -> ConditionalModel:
        if self.conditional is None:
            raise UsageError(
                f"{method} needs a conditional model (a [process] for the oracle or a surrogate)"
            )
        return self.conditional

    def require_oracle(self, method: str) -> ConditionalOracle:
        if not isinstance(self.conditional, ConditionalOracle):
            raise UsageError(f"{method} needs exact conditionals (explain.conditional = oracle)")
        return self.conditional


class Explainer(ABC):
    """Interface for one attribution method."""

    METHOD_ID: str
    # class-dependent methods explain one chosen class; the rest never take one
    CLASS_DEPENDENT: bool = False

    ctx: ExplainContext

    def __init__(self, ctx: ExplainContext) -> None:
        self.ctx = ctx

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} {self.METHOD_ID}>"

    @property
    def settings(self) -> ExplainSection:
        return self.ctx.settings

    @classmethod
    def check_class_source(cls, source: ClassSource) -> None:
        if cls.CLASS_DEPENDENT and source == ClassSource.NONE:
            raise UsageError(
                f"{cls.METHOD_ID} is class-dependent; set class_source to "
                "true-label or predicted"
            )
        if not cls.CLASS_DEPENDENT and source != ClassSource.NONE:
            raise UsageError(
                f"{cls.METHOD_ID} does not take a class; set class_source = none"
            )

    @abstractmethod
    def explain(
        self, x: npt.NDArray[np.float64], y: Optional[int], seed: int
    ) -> npt.NDArray[np.float64]:
        """Attribution scores for one instance; `y` is None for class-independent methods."""
        raise NotImplementedError

    def explain_all(
        self,
        data: Dataset,
        classes: Optional[npt.NDArray[np.int64]],
        workers: Optional[int] = None,
    ) -> npt.NDArray[np.float64]:
        X = data.features
        if (classes is None) == self.CLASS_DEPENDENT:
            raise UsageError(f"class argument contract violated for {self.METHOD_ID}")

        def task(i: int, seed: int) -> npt.NDArray[np.float64]:
            y = None if classes is None else int(classes[i])
            return self.explain(X[i], y, seed)

        rows = Swarm(task, len(data), self.settings.seed, workers, name=self.METHOD_ID).main()
        logger.info(f"{self.METHOD_ID}: explained {len(rows)} instances")
        return np.vstack(rows) if rows else np.zeros((0, data.d))
