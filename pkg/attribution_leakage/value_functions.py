from enum import Enum
from typing import Optional, Protocol, Union

import numpy as np
import numpy.typing as npt

from .core import as_features, kl_divergence_batch
from .masking import MaskLike, as_bits
from .structs import Instance, Label
from .surrogate import ConditionalModel


class Game(Protocol):
    """A set function on {0,1}^d, evaluated on rows of a mask matrix."""

    d: int

    def values(self, S: npt.NDArray[np.int8]) -> npt.NDArray[np.float64]: ...


class ValueKind(str, Enum):
    CLASS_PROBABILITY = "class-probability"
    KL_DIVERGENCE = "kl-divergence"


class ValueFunction:
    """v_x(s) built from a conditional model.

    class-probability: p(y | x_s) for a fixed target class.
    kl-divergence: -KL(p(. | x) || p(. | x_s)), which never reads a label.
    """

    kind: ValueKind
    model: ConditionalModel
    target: Optional[int]

    def __init__(
        self,
        kind: Union[ValueKind, str],
        model: ConditionalModel,
        target: Optional[Union[Label, int]] = None,
    ) -> None:
        self.kind = ValueKind(kind)
        self.model = model
        if self.kind == ValueKind.CLASS_PROBABILITY:
            if target is None:
                raise ValueError("a class-probability value function needs a class")
            if not 0 <= int(target) < model.num_classes:
                raise ValueError(f"class {int(target)} out of range")
            self.target = int(target)
        else:
            if target is not None:
                raise ValueError("the KL value function does not take a class")
            self.target = None

    @classmethod
    def probability(
        cls, model: ConditionalModel, y: Union[Label, int]
    ) -> "ValueFunction":
        return cls(ValueKind.CLASS_PROBABILITY, model, y)

    @classmethod
    def kl(cls, model: ConditionalModel) -> "ValueFunction":
        return cls(ValueKind.KL_DIVERGENCE, model)

    def __repr__(self) -> str:
        target = "" if self.target is None else f" y={self.target}"
        return f"<ValueFunction {self.kind.value}{target} {self.model!r}>"

    def evaluate(
        self, x: Union[Instance, npt.ArrayLike], S: npt.ArrayLike
    ) -> npt.NDArray[np.float64]:
        """Values of every subset (row of S) for the one instance x."""
        features = as_features(x)
        masks = np.atleast_2d(np.asarray(S, dtype=np.int8))
        probs = self.model.predict_batch(features[None, :], masks)
        if self.kind == ValueKind.CLASS_PROBABILITY:
            out: npt.NDArray[np.float64] = probs[:, self.target]
            return out
        full = self.model.full_batch(features)
        values = -kl_divergence_batch(np.broadcast_to(full, probs.shape), probs)
        values[np.all(masks == 1, axis=1)] = 0.0
        return values

    def bind(self, x: Union[Instance, npt.ArrayLike]) -> "BoundGame":
        return BoundGame(self, as_features(x))


class BoundGame:
    """A value function with the explained instance fixed."""

    def __init__(self, vf: ValueFunction, x: npt.NDArray[np.float64]) -> None:
        self.vf = vf
        self.x = x
        self.d = int(x.size)

    def values(self, S: npt.NDArray[np.int8]) -> npt.NDArray[np.float64]:
        return self.vf.evaluate(self.x, S)


def value_prob(
    vf: ValueFunction,
    x: Union[Instance, npt.ArrayLike],
    y: Union[Label, int],
    s: MaskLike,
) -> float:
    if vf.kind != ValueKind.CLASS_PROBABILITY:
        raise ValueError(f"value function kind is {vf.kind.value}")
    if int(y) != vf.target:
        vf = ValueFunction.probability(vf.model, y)
    return float(vf.evaluate(x, as_bits(s))[0])


def value_kl(vf: ValueFunction, x: Union[Instance, npt.ArrayLike], s: MaskLike) -> float:
    if vf.kind != ValueKind.KL_DIVERGENCE:
        raise ValueError(f"value function kind is {vf.kind.value}")
    return float(vf.evaluate(x, as_bits(s))[0])
