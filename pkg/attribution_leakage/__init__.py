from typing import Type, cast

from dotenv import load_dotenv

from .explainer import ExplainContext, Explainer
from .methods import (
    FastShap,
    FastShapKL,
    IntGrad,
    Lemma1Adversary,
    Lemma3Adversary,
    Lime,
    OptimalBruteforce,
    RandomRanking,
    RealX,
    Shap,
    ShapKL,
    ShapS,
    SmoothGrad,
)
from .recorder import RunLog
from .swarm import Swarm

load_dotenv()

AVAILABLE_METHODS: dict[str, Type[Explainer]] = {
    cls.METHOD_ID: cast(Type[Explainer], cls) for cls in Explainer.__subclasses__()
}

__all__ = [
    "AVAILABLE_METHODS",
    "ExplainContext",
    "Explainer",
    "FastShap",
    "FastShapKL",
    "IntGrad",
    "Lemma1Adversary",
    "Lemma3Adversary",
    "Lime",
    "OptimalBruteforce",
    "RandomRanking",
    "RealX",
    "RunLog",
    "Shap",
    "ShapKL",
    "ShapS",
    "SmoothGrad",
    "Swarm",
]
