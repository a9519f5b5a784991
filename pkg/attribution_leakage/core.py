from typing import Union

import numpy as np
import numpy.typing as npt
from scipy.special import rel_entr

from .structs import ClassDistribution, Instance, Label

# clamp applied before every log or KL of a learned output
PROB_FLOOR = 1e-12


class AttributionError(Exception):
    """Base class for errors raised by the toolkit; carries a process exit code."""

    exit_code: int = 1


class UsageError(AttributionError):
    exit_code = 2


class NumericError(AttributionError):
    exit_code = 3


class InsufficientSamplesError(NumericError):
    """The weighted normal equations are singular for the sampled subsets."""


class TrainingDivergedError(NumericError):
    """A training loss or weight became non-finite."""


class DomainError(AttributionError, ValueError):
    exit_code = 3


ProbsLike = Union[ClassDistribution, npt.ArrayLike]


def as_probs(p: ProbsLike) -> npt.NDArray[np.float64]:
    if isinstance(p, ClassDistribution):
        return p.probs
    return np.asarray(p, dtype=np.float64)


def as_features(x: Union[Instance, npt.ArrayLike]) -> npt.NDArray[np.float64]:
    if isinstance(x, Instance):
        return x.features
    return np.asarray(x, dtype=np.float64)


def floor_probs(p: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    """Clamp to [PROB_FLOOR, 1] along the last axis and renormalize."""
    clipped = np.clip(p, PROB_FLOOR, 1.0)
    out: npt.NDArray[np.float64] = clipped / clipped.sum(axis=-1, keepdims=True)
    return out


def kl_divergence_batch(
    p: npt.NDArray[np.float64], q: npt.NDArray[np.float64]
) -> npt.NDArray[np.float64]:
    """Row-wise KL(p || q) for (n, K) arrays."""
    p = np.atleast_2d(p)
    q = np.atleast_2d(q)
    if p.shape[-1] != q.shape[-1]:
        raise ValueError(f"class counts differ: {p.shape[-1]} vs {q.shape[-1]}")
    if np.any((q == 0.0) & (p > 0.0)):
        raise DomainError("q has a structural zero where p is positive")
    q_safe = np.where(q > 0.0, np.maximum(q, PROB_FLOOR), 1.0)
    out: npt.NDArray[np.float64] = rel_entr(p, q_safe).sum(axis=-1)
    # rounding can leave a tiny negative residue when p == q
    return np.maximum(out, 0.0)


def kl_divergence(p: ProbsLike, q: ProbsLike) -> float:
    """KL(p || q) = sum_i p_i log(p_i / q_i), with 0 log(0/q) = 0."""
    return float(kl_divergence_batch(as_probs(p), as_probs(q))[0])


def log_likelihood_batch(
    p: npt.NDArray[np.float64], y: npt.ArrayLike
) -> npt.NDArray[np.float64]:
    p = np.atleast_2d(p)
    labels = np.asarray(y, dtype=np.int64).reshape(-1)
    picked = p[np.arange(p.shape[0]), labels]
    out: npt.NDArray[np.float64] = np.log(np.maximum(picked, PROB_FLOOR))
    return out


def log_likelihood(p: ProbsLike, y: Union[Label, int]) -> float:
    """log(max(p_y, PROB_FLOOR))."""
    return float(log_likelihood_batch(as_probs(p), [int(y)])[0])


def entropy(p: ProbsLike) -> float:
    probs = as_probs(p)
    return float(-np.sum(probs * np.log(np.maximum(probs, PROB_FLOOR))))
