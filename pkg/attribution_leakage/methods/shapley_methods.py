from typing import Optional

import numpy as np
import numpy.typing as npt

from ..explainer import Explainer
from ..shapley import lime, shap, shap_kl, shap_s
from ..surrogate import BaselineReplacement
from ..value_functions import ValueFunction


class Shap(Explainer):
    """KernelSHAP on the prediction model, removed features set to zero."""

    METHOD_ID = "shap"
    CLASS_DEPENDENT = True

    def explain(
        self, x: npt.NDArray[np.float64], y: Optional[int], seed: int
    ) -> npt.NDArray[np.float64]:
        model = self.ctx.require_model(self.METHOD_ID)
        assert y is not None
        return shap(model, x, y, self.settings.num_samples, seed).phi.scores


class ShapS(Explainer):
    """KernelSHAP on the surrogate's probability of the chosen class."""

    METHOD_ID = "shap-s"
    CLASS_DEPENDENT = True

    def explain(
        self, x: npt.NDArray[np.float64], y: Optional[int], seed: int
    ) -> npt.NDArray[np.float64]:
        assert y is not None
        surr = self.ctx.require_conditional(self.METHOD_ID)
        return shap_s(surr, x, y, self.settings.num_samples, seed).phi.scores


class ShapKL(Explainer):
    """KernelSHAP on -KL(p(y|x) || p(y|x_s)); never sees a class."""

    METHOD_ID = "shap-kl"

    def explain(
        self, x: npt.NDArray[np.float64], y: Optional[int], seed: int
    ) -> npt.NDArray[np.float64]:
        surr = self.ctx.require_conditional(self.METHOD_ID)
        return shap_kl(surr, x, self.settings.num_samples, seed).phi.scores


class Lime(Explainer):
    METHOD_ID = "lime"
    CLASS_DEPENDENT = True

    def explain(
        self, x: npt.NDArray[np.float64], y: Optional[int], seed: int
    ) -> npt.NDArray[np.float64]:
        assert y is not None
        model = self.ctx.require_model(self.METHOD_ID)
        vf = ValueFunction.probability(BaselineReplacement(model), y)
        return lime(
            vf, x, self.settings.num_samples, self.settings.kernel_width, seed
        ).scores
