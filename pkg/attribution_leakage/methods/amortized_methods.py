from typing import Optional

import numpy as np
import numpy.typing as npt

from ..amortized import AmortizedExplainer, AmortizedKind
from ..core import UsageError
from ..explainer import ExplainContext, Explainer
from ..structs import Dataset


def _load(ctx: ExplainContext, kind: AmortizedKind) -> AmortizedExplainer:
    path = ctx.settings.explainer
    if not path:
        raise UsageError(f"{kind.value} needs trained weights (explain.explainer)")
    expl = AmortizedExplainer.load(path, ctx.require_conditional(kind.value))
    if expl.kind != kind:
        raise UsageError(f"{path} holds a {expl.kind.value} explainer, not {kind.value}")
    return expl


class _Amortized:
    """One forward pass for the whole dataset; per-instance calls go through it too."""

    KIND: AmortizedKind
    expl: AmortizedExplainer

    def _batch(
        self, X: npt.NDArray[np.float64], classes: Optional[npt.NDArray[np.int64]]
    ) -> npt.NDArray[np.float64]:
        return self.expl.explain_batch(X, classes)


class FastShap(_Amortized, Explainer):
    METHOD_ID = "fastshap"
    CLASS_DEPENDENT = True
    KIND = AmortizedKind.FASTSHAP

    def __init__(self, ctx: ExplainContext) -> None:
        super().__init__(ctx)
        self.expl = _load(ctx, self.KIND)

    def explain(
        self, x: npt.NDArray[np.float64], y: Optional[int], seed: int
    ) -> npt.NDArray[np.float64]:
        return self._batch(x[None, :], np.array([y]))[0]

    def explain_all(
        self, data: Dataset, classes: Optional[npt.NDArray[np.int64]], workers: Optional[int] = None
    ) -> npt.NDArray[np.float64]:
        if classes is None:
            raise UsageError("fastshap attributions are per class")
        return self._batch(data.features, classes)


class FastShapKL(_Amortized, Explainer):
    METHOD_ID = "fastshap-kl"
    KIND = AmortizedKind.FASTSHAP_KL

    def __init__(self, ctx: ExplainContext) -> None:
        super().__init__(ctx)
        self.expl = _load(ctx, self.KIND)

    def explain(
        self, x: npt.NDArray[np.float64], y: Optional[int], seed: int
    ) -> npt.NDArray[np.float64]:
        return self._batch(x[None, :], None)[0]

    def explain_all(
        self, data: Dataset, classes: Optional[npt.NDArray[np.int64]], workers: Optional[int] = None
    ) -> npt.NDArray[np.float64]:
        if classes is not None:
            raise UsageError("fastshap-kl does not take a class")
        return self._batch(data.features, None)


class RealX(_Amortized, Explainer):
    """Selection probabilities of a trained REAL-X selector."""

    METHOD_ID = "real-x"
    KIND = AmortizedKind.REAL_X

    def __init__(self, ctx: ExplainContext) -> None:
        super().__init__(ctx)
        self.expl = _load(ctx, self.KIND)

    def explain(
        self, x: npt.NDArray[np.float64], y: Optional[int], seed: int
    ) -> npt.NDArray[np.float64]:
        return self._batch(x[None, :], None)[0]

    def explain_all(
        self, data: Dataset, classes: Optional[npt.NDArray[np.int64]], workers: Optional[int] = None
    ) -> npt.NDArray[np.float64]:
        if classes is not None:
            raise UsageError("real-x does not take a class")
        return self._batch(data.features, None)
