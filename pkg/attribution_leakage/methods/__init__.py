from .amortized_methods import FastShap, FastShapKL, RealX
from .gradient_methods import IntGrad, SmoothGrad
from .reference_methods import (
    Lemma1Adversary,
    Lemma3Adversary,
    OptimalBruteforce,
    RandomRanking,
)
from .shapley_methods import Lime, Shap, ShapKL, ShapS

__all__ = [
    "FastShap",
    "FastShapKL",
    "IntGrad",
    "Lemma1Adversary",
    "Lemma3Adversary",
    "Lime",
    "OptimalBruteforce",
    "RandomRanking",
    "RealX",
    "Shap",
    "ShapKL",
    "ShapS",
    "SmoothGrad",
]
