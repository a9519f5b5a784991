from typing import Optional, Union

import numpy as np
import numpy.typing as npt

from .core import as_features
from .models import PredictionModel
from .structs import AttributionVector, GradConfig, Instance, Label

InstanceLike = Union[Instance, npt.ArrayLike]


def smoothgrad(
    model: PredictionModel,
    x: InstanceLike,
    y: Union[Label, int],
    cfg: Optional[GradConfig] = None,
) -> AttributionVector:
    """Mean gradient of p(y | x + noise) over cfg.num_samples Gaussian draws."""
    cfg = cfg or GradConfig()
    features = as_features(x)
    if cfg.noise_sigma == 0.0:
        return AttributionVector(scores=model.input_gradient(features, y))
    rng = np.random.default_rng(cfg.seed)
    noisy = features + cfg.noise_sigma * rng.standard_normal(
        (cfg.num_samples, features.size)
    )
    grads = model.input_gradient_batch(noisy, np.full(cfg.num_samples, int(y)))
    return AttributionVector(scores=grads.mean(axis=0))


def intgrad(
    model: PredictionModel,
    x: InstanceLike,
    y: Union[Label, int],
    cfg: Optional[GradConfig] = None,
) -> AttributionVector:
    """(x - baseline) times the midpoint-rule average gradient along the path."""
    cfg = cfg or GradConfig()
    features = as_features(x)
    baseline = np.zeros_like(features) if cfg.baseline is None else cfg.baseline
    if baseline.shape != features.shape:
        raise ValueError(f"baseline has {baseline.size} features, x has {features.size}")
    n = cfg.num_samples
    alphas = (np.arange(1, n + 1) - 0.5) / n
    diff = features - baseline
    path = baseline[None, :] + alphas[:, None] * diff[None, :]
    grads = model.input_gradient_batch(path, np.full(n, int(y)))
    return AttributionVector(scores=diff * grads.mean(axis=0))


def completeness_residual(
    model: PredictionModel,
    x: InstanceLike,
    y: Union[Label, int],
    cfg: Optional[GradConfig] = None,
) -> float:
    """sum(intgrad) - (p(y | x) - p(y | baseline))."""
    cfg = cfg or GradConfig()
    features = as_features(x)
    baseline = np.zeros_like(features) if cfg.baseline is None else cfg.baseline
    e = intgrad(model, features, y, cfg)
    probs = model.predict_batch(np.vstack([features, baseline]))
    return float(e.scores.sum() - (probs[0, int(y)] - probs[1, int(y)]))
