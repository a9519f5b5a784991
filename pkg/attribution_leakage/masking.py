import itertools
import math
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
import numpy.typing as npt
from scipy.special import comb

from .core import as_features
from .structs import AttributionVector, Instance, MaskedInstance, SubsetMask

MAX_ENUMERATION_D = 20

MaskLike = Union[SubsetMask, npt.ArrayLike]


class SamplerKind(str, Enum):
    UNIFORM_CARDINALITY = "uniform-cardinality"
    SHAPLEY_KERNEL = "shapley-kernel"
    FULL_ENUMERATION = "full-enumeration"


def as_bits(s: MaskLike) -> npt.NDArray[np.int8]:
    if isinstance(s, SubsetMask):
        return s.bits
    return np.asarray(s, dtype=np.int8)


def derive_seed(base_seed: int, index: int) -> int:
    """Seed for worker/task `index` derived from a run's base seed."""
    return int(base_seed) ^ int(index)


def mask(x: Union[Instance, npt.ArrayLike], s: MaskLike) -> MaskedInstance:
    values = as_features(x)
    bits = as_bits(s)
    if values.shape != bits.shape:
        raise ValueError(
            f"instance has {values.size} features but mask has {bits.size} bits"
        )
    return MaskedInstance(
        values=np.where(bits == 1, values, 0.0),
        indicator=SubsetMask(bits=bits),
    )


def mask_batch(
    X: npt.NDArray[np.float64], S: npt.NDArray[np.int8]
) -> npt.NDArray[np.float64]:
    """Rows of (values ⊕ indicator), shape (n, 2d). X or S may be a single row."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    S = np.atleast_2d(np.asarray(S))
    if X.shape[1] != S.shape[1]:
        raise ValueError(f"instances have d={X.shape[1]} but masks have d={S.shape[1]}")
    X, S = np.broadcast_arrays(X, S)
    keep = S == 1
    return np.concatenate([np.where(keep, X, 0.0), keep.astype(np.float64)], axis=1)


def shapley_kernel_weight(d: int, k: int) -> float:
    """(d-1) / (C(d,k) k (d-k)); the weight of any single subset of size k."""
    if not 1 <= k <= d - 1:
        raise ValueError(f"kernel weight undefined for k={k} with d={d}")
    return float((d - 1) / (comb(d, k, exact=True) * k * (d - k)))


def kernel_size_distribution(
    d: int, sizes: Optional[Sequence[int]] = None
) -> tuple[npt.NDArray[np.int64], npt.NDArray[np.float64]]:
    """Cardinalities and their probabilities under the Shapley kernel."""
    support = np.arange(1, d, dtype=np.int64) if sizes is None else np.asarray(sizes)
    if support.size == 0:
        raise ValueError(f"no subset sizes to sample for d={d}")
    # summing the per-subset weight over the C(d,k) subsets of size k
    mass = np.array([(d - 1) / (k * (d - k)) for k in support], dtype=np.float64)
    return support.astype(np.int64), mass / mass.sum()


def top_n_size(n: float, d: int) -> int:
    if not 0.0 <= n <= 100.0:
        raise ValueError(f"n must lie in [0, 100], got {n}")
    # tolerance keeps n*d/100 landing exactly on an integer from rounding up
    return int(min(d, max(0, math.ceil(n * d / 100.0 - 1e-9))))


def top_n_batch(
    scores: npt.ArrayLike, n: float, absolute: bool = False
) -> npt.NDArray[np.int8]:
    """Keep the ceil(n d / 100) highest-scoring features of every row."""
    E = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    if absolute:
        E = np.abs(E)
    k = top_n_size(n, E.shape[1])
    order = np.argsort(-E, axis=1, kind="stable")
    S = np.zeros(E.shape, dtype=np.int8)
    np.put_along_axis(S, order[:, :k], 1, axis=1)
    return S


def top_n(
    e: Union[AttributionVector, npt.ArrayLike], n: float, absolute: bool = False
) -> SubsetMask:
    scores = e.scores if isinstance(e, AttributionVector) else e
    return SubsetMask(bits=top_n_batch(scores, n, absolute)[0])


def enumerate_subsets(d: int) -> list[SubsetMask]:
    return [SubsetMask(bits=row) for row in enumerate_subset_matrix(d)]


def enumerate_subset_matrix(d: int) -> npt.NDArray[np.int8]:
    """All 2^d masks as rows, in lexicographic order of the bit string."""
    if d < 1:
        raise ValueError(f"d must be positive, got {d}")
    if d > MAX_ENUMERATION_D:
        raise ValueError(f"refusing to enumerate 2^{d} subsets (d > {MAX_ENUMERATION_D})")
    return np.array(list(itertools.product([0, 1], repeat=d)), dtype=np.int8)


class SubsetSampler:
    """Seeded source of subset masks. Single-owner: one sampler per worker."""

    kind: SamplerKind
    d: int
    seed: int

    def __init__(self, kind: Union[SamplerKind, str], d: int, seed: int = 0) -> None:
        self.kind = SamplerKind(kind)
        if d < 1:
            raise ValueError(f"d must be positive, got {d}")
        if self.kind == SamplerKind.SHAPLEY_KERNEL and d < 2:
            raise ValueError("the Shapley kernel needs d >= 2")
        self.d = d
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._cursor = 0
        self._table: Optional[npt.NDArray[np.int8]] = None

    def __repr__(self) -> str:
        return f"<SubsetSampler kind={self.kind.value} d={self.d} seed={self.seed}>"

    def _uniform_k_subsets(self, sizes: npt.NDArray[np.int64]) -> npt.NDArray[np.int8]:
        ranks = self._rng.random((sizes.size, self.d)).argsort(axis=1).argsort(axis=1)
        return (ranks < sizes[:, None]).astype(np.int8)

    def sample_batch(
        self, count: int, sizes: Optional[Sequence[int]] = None
    ) -> npt.NDArray[np.int8]:
        if self.kind == SamplerKind.UNIFORM_CARDINALITY:
            ks = self._rng.integers(0, self.d + 1, size=count)
            return self._uniform_k_subsets(ks)
        if self.kind == SamplerKind.SHAPLEY_KERNEL:
            support, probs = kernel_size_distribution(self.d, sizes)
            ks = self._rng.choice(support, size=count, p=probs)
            return self._uniform_k_subsets(ks)
        if self._table is None:
            self._table = enumerate_subset_matrix(self.d)
        idx = (self._cursor + np.arange(count)) % self._table.shape[0]
        self._cursor = int((self._cursor + count) % self._table.shape[0])
        return self._table[idx]

    def sample(self) -> SubsetMask:
        return SubsetMask(bits=self.sample_batch(1)[0])

    def sample_uniform_cardinality(self) -> SubsetMask:
        if self.kind != SamplerKind.UNIFORM_CARDINALITY:
            raise ValueError(f"sampler kind is {self.kind.value}")
        return self.sample()

    def sample_shapley_kernel(self) -> SubsetMask:
        if self.kind != SamplerKind.SHAPLEY_KERNEL:
            raise ValueError(f"sampler kind is {self.kind.value}")
        return self.sample()
