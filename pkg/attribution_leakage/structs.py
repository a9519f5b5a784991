from enum import Enum
from typing import Annotated, Any, Iterator, Optional

import numpy as np
import numpy.typing as npt
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    computed_field,
    field_validator,
    model_validator,
)

NORMALIZATION_TOLERANCE = 1e-9


def _float_vector(value: Any) -> npt.NDArray[np.float64]:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("all entries must be finite")
    arr.setflags(write=False)
    return arr


def _float_matrix(value: Any) -> npt.NDArray[np.float64]:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("all entries must be finite")
    arr.setflags(write=False)
    return arr


def _bit_vector(value: Any) -> npt.NDArray[np.int8]:
    arr = np.array(value)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D mask, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("mask entries must be 0 or 1")
    bits = arr.astype(np.int8)
    bits.setflags(write=False)
    return bits


def _int_vector(value: Any) -> npt.NDArray[np.int64]:
    arr = np.array(value)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D label vector, got shape {arr.shape}")
    if arr.size and not np.all(arr == np.round(arr)):
        raise ValueError("labels must be integers")
    ints = arr.astype(np.int64)
    ints.setflags(write=False)
    return ints


_to_list = PlainSerializer(lambda a: a.tolist(), return_type=list)

FloatVector = Annotated[npt.NDArray[np.float64], BeforeValidator(_float_vector), _to_list]
FloatMatrix = Annotated[npt.NDArray[np.float64], BeforeValidator(_float_matrix), _to_list]
BitVector = Annotated[npt.NDArray[np.int8], BeforeValidator(_bit_vector), _to_list]
IntVector = Annotated[npt.NDArray[np.int64], BeforeValidator(_int_vector), _to_list]


class _ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class Instance(_ArrayModel):
    """A single feature vector x = (x_1, ..., x_d)."""

    features: FloatVector

    @field_validator("features")
    @classmethod
    def _non_empty(cls, v: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        if v.size < 1:
            raise ValueError("an instance needs at least one feature")
        return v

    @property
    def d(self) -> int:
        return int(self.features.size)


class Label(BaseModel):
    """A zero-based class index in 0..K-1."""

    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=0)
    num_classes: int = Field(ge=2)

    @model_validator(mode="after")
    def _in_range(self) -> "Label":
        if self.index >= self.num_classes:
            raise ValueError(
                f"class {self.index} out of range for K={self.num_classes}"
            )
        return self

    def __int__(self) -> int:
        return self.index


class Dataset(_ArrayModel):
    """Paired samples from F(x, y), stored row-wise."""

    features: FloatMatrix
    labels: IntVector
    num_classes: int = Field(ge=2)

    @model_validator(mode="after")
    def _consistent(self) -> "Dataset":
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.features.shape[0]} instances but {self.labels.shape[0]} labels"
            )
        if self.features.shape[1] < 1:
            raise ValueError("instances need at least one feature")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.num_classes
        ):
            raise ValueError(f"labels must lie in 0..{self.num_classes - 1}")
        return self

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    def __len__(self) -> int:
        return int(self.features.shape[0])

    def instance(self, i: int) -> Instance:
        return Instance(features=self.features[i])

    def label(self, i: int) -> Label:
        return Label(index=int(self.labels[i]), num_classes=self.num_classes)

    @property
    def instances(self) -> Iterator[Instance]:
        return (self.instance(i) for i in range(len(self)))

    def subset(self, rows: npt.ArrayLike) -> "Dataset":
        idx = np.asarray(rows, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            num_classes=self.num_classes,
        )

    def split(self, fraction: float, seed: int) -> tuple["Dataset", "Dataset"]:
        """Shuffle with `seed` and cut into (first `fraction`, rest)."""
        order = np.random.default_rng(seed).permutation(len(self))
        cut = int(round(fraction * len(self)))
        if cut == 0 or cut == len(self):
            raise ValueError(
                f"splitting {len(self)} rows at fraction {fraction:g} leaves one side empty"
            )
        return self.subset(order[:cut]), self.subset(order[cut:])


class ClassDistribution(_ArrayModel):
    probs: FloatVector

    @field_validator("probs")
    @classmethod
    def _normalized(cls, v: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        if v.size < 2:
            raise ValueError("a class distribution needs K >= 2 entries")
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(float(v.sum()) - 1.0) > NORMALIZATION_TOLERANCE:
            raise ValueError(f"probabilities sum to {v.sum()!r}, not 1")
        return v

    @property
    def num_classes(self) -> int:
        return int(self.probs.size)

    def __getitem__(self, y: int) -> float:
        return float(self.probs[y])


class AttributionVector(_ArrayModel):
    """Per-feature scores e(x) in R^d."""

    scores: FloatVector

    @property
    def d(self) -> int:
        return int(self.scores.size)


class AttributionMatrix(_ArrayModel):
    """Per-class scores e(x, .) in R^{d x K}."""

    per_class: FloatMatrix

    def column(self, y: int) -> AttributionVector:
        return AttributionVector(scores=self.per_class[:, y])


class SubsetMask(_ArrayModel):
    """s in {0,1}^d; bit i = 1 keeps feature i."""

    bits: BitVector

    @property
    def d(self) -> int:
        return int(self.bits.size)

    @property
    def size(self) -> int:
        return int(self.bits.sum())

    def __str__(self) -> str:
        return "".join(str(int(b)) for b in self.bits)

    @classmethod
    def from_string(cls, text: str) -> "SubsetMask":
        return cls(bits=[int(c) for c in text.strip()])

    @classmethod
    def full(cls, d: int) -> "SubsetMask":
        return cls(bits=np.ones(d, dtype=np.int8))

    @classmethod
    def empty(cls, d: int) -> "SubsetMask":
        return cls(bits=np.zeros(d, dtype=np.int8))


class MaskedInstance(_ArrayModel):
    """m(x, s): removed features zeroed, with the indicator carried alongside."""

    values: FloatVector
    indicator: SubsetMask

    @model_validator(mode="after")
    def _sentinel(self) -> "MaskedInstance":
        if self.values.size != self.indicator.d:
            raise ValueError("values and indicator lengths differ")
        if np.any(self.values[self.indicator.bits == 0] != 0.0):
            raise ValueError("removed features must carry the sentinel value 0")
        return self

    @property
    def model_input(self) -> npt.NDArray[np.float64]:
        """The 2d-wide vector (values ⊕ indicator) consumed by surrogates."""
        return np.concatenate([self.values, self.indicator.bits.astype(np.float64)])


class Architecture(str, Enum):
    LINEAR = "linear"
    MLP = "mlp"


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(0.1, gt=0)
    epochs: int = Field(50, gt=0)
    batch_size: int = Field(64, gt=0)
    seed: int = 0
    l2_penalty: float = Field(0.0, ge=0)
    architecture: Architecture = Architecture.MLP
    hidden_dim: Optional[int] = Field(default=None, gt=0)
    log_every: int = Field(10, gt=0)


class GradConfig(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    num_samples: int = Field(256, ge=1)
    noise_sigma: float = Field(0.1, ge=0)
    baseline: Optional[FloatVector] = None
    seed: int = 0


class ShapleyEstimate(_ArrayModel):
    phi: AttributionVector
    base_value: float
    full_value: float
    num_subset_samples: int = Field(ge=0)
    seed: Optional[int] = None

    @property
    def efficiency_residual(self) -> float:
        return float(self.phi.scores.sum() - (self.full_value - self.base_value))


class InclusionCurve(_ArrayModel):
    grid: FloatVector
    mean_loglik: FloatVector
    per_sample_loglik: FloatMatrix

    @model_validator(mode="after")
    def _valid_grid(self) -> "InclusionCurve":
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if self.grid[0] != 0.0 or self.grid[-1] != 100.0:
            raise ValueError("grid must start at 0 and end at 100")
        if self.mean_loglik.size != self.grid.size:
            raise ValueError("one mean log-likelihood per grid point")
        if self.per_sample_loglik.shape[0] != self.grid.size:
            raise ValueError("per-sample matrix needs one row per grid point")
        return self

    @property
    def full_feature_loglik(self) -> float:
        return float(self.mean_loglik[-1])

    @property
    def num_samples(self) -> int:
        return int(self.per_sample_loglik.shape[1])


class EvalReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    method: str
    iauc: float
    ci_low: float
    ci_high: float
    full_feature_loglik: float
    leakage_flag: bool
    seed: int
    curve: Optional[InclusionCurve] = Field(None, exclude=True)

    @model_validator(mode="after")
    def _ci_contains_estimate(self) -> "EvalReport":
        if not (self.ci_low <= self.iauc <= self.ci_high):
            raise ValueError("confidence interval must contain the iAUC estimate")
        return self

    @computed_field(return_type=float)
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low
