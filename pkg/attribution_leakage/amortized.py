"""Explainers trained once and queried with a single forward pass."""

import logging
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
import numpy.typing as npt
from scipy.special import expit

from .core import (
    PROB_FLOOR,
    TrainingDivergedError,
    UsageError,
    as_features,
    kl_divergence_batch,
)
from .masking import SamplerKind, SubsetSampler, derive_seed
from .models import Network, load_network, save_weights
from .structs import (
    AttributionMatrix,
    AttributionVector,
    Dataset,
    Instance,
    Label,
    TrainConfig,
)
from .surrogate import ConditionalModel

logger = logging.getLogger()

BASELINE_DECAY = 0.99
# mean selection probability below which a REAL-X selector is considered collapsed
DEGENERATE_SELECTION = 0.01


class AmortizedKind(str, Enum):
    FASTSHAP = "fastshap"
    FASTSHAP_KL = "fastshap-kl"
    REAL_X = "real-x"


def efficiency_normalize(
    phi: npt.NDArray[np.float64], total: npt.NDArray[np.float64]
) -> npt.NDArray[np.float64]:
    """Shift each row additively so that it sums to `total`."""
    out: npt.NDArray[np.float64] = (
        phi + ((total - phi.sum(axis=1)) / phi.shape[1])[:, None]
    )
    return out


def _centered(grad: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    # gradient through efficiency_normalize: (I - 11^T / d) g
    out: npt.NDArray[np.float64] = grad - grad.mean(axis=1, keepdims=True)
    return out


class AmortizedExplainer:
    kind: AmortizedKind
    network: Network
    model: ConditionalModel
    subsets_per_instance: int
    lam: float
    seed: int
    degenerate: bool

    def __init__(
        self,
        kind: Union[AmortizedKind, str],
        network: Network,
        model: ConditionalModel,
        subsets_per_instance: int = 1,
        lam: float = 0.0,
        seed: int = 0,
    ) -> None:
        self.kind = AmortizedKind(kind)
        self.network = network
        self.model = model
        self.subsets_per_instance = subsets_per_instance
        self.lam = lam
        self.seed = seed
        self.degenerate = False
        expected = self.d * model.num_classes if self.kind == AmortizedKind.FASTSHAP else self.d
        if network.output_dim != expected:
            raise ValueError(f"{self.kind.value} needs {expected} outputs")
        if model.d != self.d:
            raise ValueError(f"conditional model has d={model.d}, explainer d={self.d}")

    def __repr__(self) -> str:
        return f"<AmortizedExplainer {self.kind.value} d={self.d} {self.network!r}>"

    @property
    def d(self) -> int:
        return self.network.input_dim

    @property
    def num_classes(self) -> int:
        return self.model.num_classes

    def _kl_totals(self, X: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        # v(1) - v(0) of the KL game is KL(p(.|x) || p(.|empty))
        return kl_divergence_batch(self.model.full_batch(X), self.model.empty_batch(X))

    def _prob_totals(self, X: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        """(n, K) matrix of p(y | x) - p(y | empty)."""
        out: npt.NDArray[np.float64] = self.model.full_batch(X) - self.model.empty_batch(X)
        return out

    def explain_batch(
        self, X: npt.ArrayLike, y: Optional[npt.ArrayLike] = None
    ) -> npt.NDArray[np.float64]:
        X2 = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.kind == AmortizedKind.FASTSHAP:
            if y is None:
                raise UsageError("fastshap attributions are per class; pass a class")
            labels = np.broadcast_to(np.asarray(y, dtype=np.int64), (X2.shape[0],))
            matrices = self.explain_matrix_batch(X2)
            return matrices[np.arange(X2.shape[0]), :, labels]
        if y is not None:
            raise UsageError(f"{self.kind.value} does not take a class")
        outputs = self.network.forward(X2).outputs
        if self.kind == AmortizedKind.REAL_X:
            selection: npt.NDArray[np.float64] = expit(outputs)
            return selection
        return efficiency_normalize(outputs, self._kl_totals(X2))

    def explain_matrix_batch(self, X: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """(n, d, K) per-class attributions, each column efficiency-normalized."""
        if self.kind != AmortizedKind.FASTSHAP:
            raise UsageError(f"{self.kind.value} has no per-class output")
        X2 = np.atleast_2d(np.asarray(X, dtype=np.float64))
        raw = self.network.forward(X2).outputs.reshape(X2.shape[0], self.d, -1)
        totals = self._prob_totals(X2)
        shift = (totals - raw.sum(axis=1)) / self.d
        out: npt.NDArray[np.float64] = raw + shift[:, None, :]
        return out

    def save(self, path: str) -> None:
        save_weights(
            path,
            self.network,
            kind="amortized",
            extra={
                "explainer": self.kind.value,
                "subsets_per_instance": str(self.subsets_per_instance),
                "lam": repr(self.lam),
                "seed": str(self.seed),
            },
        )

    @classmethod
    def load(cls, path: str, model: ConditionalModel) -> "AmortizedExplainer":
        fields, net = load_network(path)
        if fields.get("kind") != "amortized":
            raise ValueError(f"{path} holds a {fields.get('kind')}, not an explainer")
        return cls(
            fields["explainer"],
            net,
            model,
            subsets_per_instance=int(fields["subsets_per_instance"]),
            lam=float(fields["lam"]),
            seed=int(fields["seed"]),
        )


def amortized_explain(
    expl: AmortizedExplainer,
    x: Union[Instance, npt.ArrayLike],
    y: Optional[Union[Label, int]] = None,
) -> AttributionVector:
    labels = None if y is None else [int(y)]
    return AttributionVector(scores=expl.explain_batch(as_features(x), labels)[0])


def amortized_explain_matrix(
    expl: AmortizedExplainer, x: Union[Instance, npt.ArrayLike]
) -> AttributionMatrix:
    return AttributionMatrix(per_class=expl.explain_matrix_batch(as_features(x))[0])


# (rows, outputs, epoch) -> (summed per-instance loss, gradient of the batch-mean loss)
StepFn = Callable[
    [npt.NDArray[np.int64], npt.NDArray[np.float64], int],
    tuple[float, npt.NDArray[np.float64]],
]


def _fit(
    net: Network, n: int, cfg: TrainConfig, step: StepFn, X: npt.NDArray[np.float64], name: str
) -> list[float]:
    rng = np.random.default_rng(cfg.seed)
    net.init_weights(rng)
    history: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            cache = net.forward(X[rows])
            loss, grad_out = step(rows, cache.outputs, epoch)
            total += loss
            grad_w, _ = net.backward(cache, grad_out)
            grad_w += cfg.l2_penalty * net.weights
            net.weights = net.weights - cfg.learning_rate * grad_w
        loss = total / n
        if not np.isfinite(loss) or not np.all(np.isfinite(net.weights)):
            raise TrainingDivergedError(f"{name} diverged at epoch {epoch}: loss={loss}")
        history.append(loss)
        if epoch % cfg.log_every == 0 or epoch == cfg.epochs - 1:
            logger.info(f"{name} epoch {epoch}: loss {loss:.6f}")
    return history


class _KernelMasks:
    """Shapley-kernel masks per (row, epoch); optionally frozen after the first draw."""

    def __init__(self, n: int, d: int, m: int, seed: int, fixed: bool) -> None:
        self.m = m
        self.d = d
        self.sampler = SubsetSampler(SamplerKind.SHAPLEY_KERNEL, d, derive_seed(seed, 1))
        self.table = self.sampler.sample_batch(n * m).reshape(n, m, d) if fixed else None

    def draw(self, rows: npt.NDArray[np.int64]) -> npt.NDArray[np.int8]:
        if self.table is not None:
            return self.table[rows]
        return self.sampler.sample_batch(rows.size * self.m).reshape(rows.size, self.m, self.d)


def _network_for(cfg: TrainConfig, d: int, outputs: int) -> Network:
    return Network(cfg.architecture, input_dim=d, output_dim=outputs, hidden_dim=cfg.hidden_dim)


def train_fastshap_kl(
    model: ConditionalModel,
    data: Dataset,
    cfg: TrainConfig,
    subsets_per_instance: int = 4,
    fixed_subsets: bool = False,
    history: Optional[list[float]] = None,
) -> AmortizedExplainer:
    """Regress KL-game values on s.phi(x) with phi efficiency-normalized."""
    X = data.features
    n, d, m = len(data), data.d, subsets_per_instance
    expl = AmortizedExplainer(
        AmortizedKind.FASTSHAP_KL, _network_for(cfg, d, d), model, m, seed=cfg.seed
    )
    full = model.full_batch(X)
    totals = expl._kl_totals(X)
    masks = _KernelMasks(n, d, m, cfg.seed, fixed_subsets)

    def step(
        rows: npt.NDArray[np.int64], outputs: npt.NDArray[np.float64], epoch: int
    ) -> tuple[float, npt.NDArray[np.float64]]:
        S = masks.draw(rows)
        flat = S.reshape(-1, d)
        probs = model.predict_batch(np.repeat(X[rows], m, axis=0), flat)
        values = -kl_divergence_batch(np.repeat(full[rows], m, axis=0), probs)
        values = values.reshape(rows.size, m)
        phi = efficiency_normalize(outputs, totals[rows])
        # v(empty) = -total for the KL game
        resid = values + totals[rows][:, None] - np.einsum("bmd,bd->bm", S, phi)
        grad_phi = -2.0 * np.einsum("bm,bmd->bd", resid, S) / (rows.size * m)
        return float((resid**2).sum() / m), _centered(grad_phi)

    losses = _fit(expl.network, n, cfg, step, X, "fastshap-kl")
    if history is not None:
        history.extend(losses)
    return expl


def train_fastshap(
    model: ConditionalModel,
    data: Dataset,
    cfg: TrainConfig,
    subsets_per_instance: int = 4,
    fixed_subsets: bool = False,
    history: Optional[list[float]] = None,
) -> AmortizedExplainer:
    """Per-class FastSHAP with the explained class drawn uniformly per step."""
    X = data.features
    n, d, m, K = len(data), data.d, subsets_per_instance, data.num_classes
    expl = AmortizedExplainer(
        AmortizedKind.FASTSHAP, _network_for(cfg, d, d * K), model, m, seed=cfg.seed
    )
    empty = model.empty_batch(X)
    totals = expl._prob_totals(X)
    masks = _KernelMasks(n, d, m, cfg.seed, fixed_subsets)
    class_rng = np.random.default_rng(derive_seed(cfg.seed, 2))
    fixed_classes = class_rng.integers(K, size=n) if fixed_subsets else None

    def step(
        rows: npt.NDArray[np.int64], outputs: npt.NDArray[np.float64], epoch: int
    ) -> tuple[float, npt.NDArray[np.float64]]:
        B = rows.size
        y = fixed_classes[rows] if fixed_classes is not None else class_rng.integers(K, size=B)
        S = masks.draw(rows)
        probs = model.predict_batch(np.repeat(X[rows], m, axis=0), S.reshape(-1, d))
        values = probs[np.arange(B * m), np.repeat(y, m)].reshape(B, m)
        raw = outputs.reshape(B, d, K)[np.arange(B), :, y]
        phi = efficiency_normalize(raw, totals[rows, y])
        resid = values - empty[rows, y][:, None] - np.einsum("bmd,bd->bm", S, phi)
        grad_phi = -2.0 * np.einsum("bm,bmd->bd", resid, S) / (B * m)
        grad = np.zeros((B, d, K))
        grad[np.arange(B), :, y] = _centered(grad_phi)
        return float((resid**2).sum() / m), grad.reshape(B, d * K)

    losses = _fit(expl.network, n, cfg, step, X, "fastshap")
    if history is not None:
        history.extend(losses)
    return expl


def train_real_x(
    model: ConditionalModel,
    data: Dataset,
    cfg: TrainConfig,
    lam: float = 0.0,
    subsets_per_instance: int = 4,
    history: Optional[list[float]] = None,
) -> AmortizedExplainer:
    """Selector q(s | x) = prod Bernoulli(sigmoid(logits)) trained on
    E[-log p(y | x_s)] + lam * E|s| with score-function gradients.
    """
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    X = data.features
    labels = np.asarray(data.labels)
    n, d, m = len(data), data.d, subsets_per_instance
    expl = AmortizedExplainer(
        AmortizedKind.REAL_X, _network_for(cfg, d, d), model, m, lam=lam, seed=cfg.seed
    )
    mask_rng = np.random.default_rng(derive_seed(cfg.seed, 1))
    baseline: list[float] = []

    def step(
        rows: npt.NDArray[np.int64], outputs: npt.NDArray[np.float64], epoch: int
    ) -> tuple[float, npt.NDArray[np.float64]]:
        B = rows.size
        pi = expit(outputs)
        S = (mask_rng.random((B, m, d)) < pi[:, None, :]).astype(np.int8)
        probs = model.predict_batch(np.repeat(X[rows], m, axis=0), S.reshape(-1, d))
        picked = probs[np.arange(B * m), np.repeat(labels[rows], m)]
        nll = -np.log(np.maximum(picked, PROB_FLOOR)).reshape(B, m)
        b = baseline[0] if baseline else float(nll.mean())
        score = np.einsum("bm,bmd->bd", nll - b, S - pi[:, None, :]) / m
        grad = (score + lam * pi * (1.0 - pi)) / B
        ema = BASELINE_DECAY * b + (1.0 - BASELINE_DECAY) * float(nll.mean())
        baseline[:] = [ema]
        loss = float(nll.mean(axis=1).sum() + lam * pi.sum())
        return loss, grad

    losses = _fit(expl.network, n, cfg, step, X, "real-x")
    if history is not None:
        history.extend(losses)
    mean_selection = float(expit(expl.network.forward(X).outputs).mean())
    if mean_selection < DEGENERATE_SELECTION:
        expl.degenerate = True
        logger.warning(
            f"real-x selector collapsed: mean selection probability {mean_selection:.4f}"
        )
    return expl
