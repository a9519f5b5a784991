from typing import Optional

import numpy as np
import numpy.typing as npt

from ..explainer import Explainer
from ..gradients import intgrad, smoothgrad
from ..structs import GradConfig


class SmoothGrad(Explainer):
    """Input gradients of p(y | x) averaged over Gaussian-noised copies of x."""

    METHOD_ID = "smoothgrad"
    CLASS_DEPENDENT = True

    def explain(
        self, x: npt.NDArray[np.float64], y: Optional[int], seed: int
    ) -> npt.NDArray[np.float64]:
        assert y is not None
        model = self.ctx.require_model(self.METHOD_ID)
        cfg = GradConfig(
            num_samples=self.settings.grad_samples,
            noise_sigma=self.settings.noise_sigma,
            seed=seed,
        )
        return smoothgrad(model, x, y, cfg).scores


class IntGrad(Explainer):
    """Integrated gradients from the zero input."""

    METHOD_ID = "intgrad"
    CLASS_DEPENDENT = True

    def explain(
        self, x: npt.NDArray[np.float64], y: Optional[int], seed: int
    ) -> npt.NDArray[np.float64]:
        assert y is not None
        model = self.ctx.require_model(self.METHOD_ID)
        cfg = GradConfig(num_samples=self.settings.grad_samples, seed=seed)
        return intgrad(model, x, y, cfg).scores
