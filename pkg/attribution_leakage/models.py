import logging
import os
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import numpy.typing as npt
from scipy.special import log_softmax, softmax

from .core import TrainingDivergedError, as_features, floor_probs
from .structs import Architecture, ClassDistribution, Dataset, Instance, Label, TrainConfig

logger = logging.getLogger()

WEIGHTS_HEADER = "attribution-leakage-weights"
WEIGHTS_VERSION = "v1"
INIT_SCALE = 0.1


def default_hidden_dim(d: int) -> int:
    return max(16, 4 * d)


@dataclass
class ForwardCache:
    inputs: npt.NDArray[np.float64]
    hidden: Optional[npt.NDArray[np.float64]]
    outputs: npt.NDArray[np.float64]


class Network:
    """Linear or one-hidden-layer tanh network over a flat weight vector.

    Layout is row-major: W (in, out), b (out) for the linear map and
    W1 (in, h), b1 (h), W2 (h, out), b2 (out) for the perceptron.
    """

    architecture: Architecture
    input_dim: int
    hidden_dim: int
    output_dim: int
    weights: npt.NDArray[np.float64]

    def __init__(
        self,
        architecture: Union[Architecture, str],
        input_dim: int,
        output_dim: int,
        hidden_dim: Optional[int] = None,
        weights: Optional[npt.ArrayLike] = None,
    ) -> None:
        self.architecture = Architecture(architecture)
        self.input_dim = input_dim
        self.output_dim = output_dim
        if self.architecture == Architecture.MLP:
            self.hidden_dim = hidden_dim or default_hidden_dim(input_dim)
        else:
            self.hidden_dim = 0
        if weights is None:
            self.weights = np.zeros(self.num_weights, dtype=np.float64)
        else:
            w = np.asarray(weights, dtype=np.float64).reshape(-1)
            if w.size != self.num_weights:
                raise ValueError(f"expected {self.num_weights} weights, got {w.size}")
            if not np.all(np.isfinite(w)):
                raise TrainingDivergedError("weights contain non-finite values")
            self.weights = w.copy()

    def __repr__(self) -> str:
        return (
            f"<{type(self).__name__} {self.architecture.value} "
            f"in={self.input_dim} hidden={self.hidden_dim} out={self.output_dim}>"
        )

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        i, h, o = self.input_dim, self.hidden_dim, self.output_dim
        if self.architecture == Architecture.LINEAR:
            return [(i, o), (o,)]
        return [(i, h), (h,), (h, o), (o,)]

    @property
    def num_weights(self) -> int:
        return int(sum(np.prod(s) for s in self.shapes))

    def unpack(
        self, weights: Optional[npt.NDArray[np.float64]] = None
    ) -> list[npt.NDArray[np.float64]]:
        flat = self.weights if weights is None else weights
        parts = []
        offset = 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            parts.append(flat[offset : offset + size].reshape(shape))
            offset += size
        return parts

    def init_weights(self, rng: np.random.Generator) -> None:
        self.weights = rng.uniform(-INIT_SCALE, INIT_SCALE, size=self.num_weights)

    def forward(self, inputs: npt.ArrayLike) -> ForwardCache:
        X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} inputs, got {X.shape[1]}")
        if self.architecture == Architecture.LINEAR:
            W, b = self.unpack()
            return ForwardCache(inputs=X, hidden=None, outputs=X @ W + b)
        W1, b1, W2, b2 = self.unpack()
        H = np.tanh(X @ W1 + b1)
        return ForwardCache(inputs=X, hidden=H, outputs=H @ W2 + b2)

    def backward(
        self, cache: ForwardCache, grad_out: npt.NDArray[np.float64]
    ) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
        """Gradients (flat weights, inputs) of sum(grad_out * outputs)."""
        X = cache.inputs
        if self.architecture == Architecture.LINEAR:
            W, _ = self.unpack()
            grads = [X.T @ grad_out, grad_out.sum(axis=0)]
            return np.concatenate([g.ravel() for g in grads]), grad_out @ W.T
        W1, _, W2, _ = self.unpack()
        H = cache.hidden
        assert H is not None
        dA = (grad_out @ W2.T) * (1.0 - H**2)
        grads = [X.T @ dA, dA.sum(axis=0), H.T @ grad_out, grad_out.sum(axis=0)]
        return np.concatenate([g.ravel() for g in grads]), dA @ W1.T

    def header_fields(self) -> dict[str, str]:
        return {
            "architecture": self.architecture.value,
            "input_dim": str(self.input_dim),
            "hidden_dim": str(self.hidden_dim),
            "output_dim": str(self.output_dim),
        }


class PredictionModel(Network):
    """Softmax classifier p(y | x) over K = output_dim classes."""

    @property
    def num_classes(self) -> int:
        return self.output_dim

    def predict_batch(self, inputs: npt.ArrayLike) -> npt.NDArray[np.float64]:
        logits = self.forward(inputs).outputs
        return floor_probs(softmax(logits, axis=1))

    def predict_proba(self, x: Union[Instance, npt.ArrayLike]) -> ClassDistribution:
        return ClassDistribution(probs=self.predict_batch(as_features(x))[0])

    def input_gradient_batch(
        self, inputs: npt.ArrayLike, labels: npt.ArrayLike
    ) -> npt.NDArray[np.float64]:
        """d p(y_i | x_i) / d x_i for every row."""
        cache = self.forward(inputs)
        P = softmax(cache.outputs, axis=1)
        y = np.asarray(labels, dtype=np.int64).reshape(-1)
        y = np.broadcast_to(y, (P.shape[0],))
        rows = np.arange(P.shape[0])
        p_y = P[rows, y]
        onehot = np.zeros_like(P)
        onehot[rows, y] = 1.0
        grad_logits = p_y[:, None] * (onehot - P)
        _, grad_inputs = self.backward(cache, grad_logits)
        return grad_inputs

    def input_gradient(
        self, x: Union[Instance, npt.ArrayLike], y: Union[Label, int]
    ) -> npt.NDArray[np.float64]:
        return self.input_gradient_batch(as_features(x), [int(y)])[0]

    def predicted_class_batch(self, inputs: npt.ArrayLike) -> npt.NDArray[np.int64]:
        # argmax returns the first maximum, so ties go to the lowest index
        return np.argmax(self.predict_batch(inputs), axis=1).astype(np.int64)

    def predicted_class(self, x: Union[Instance, npt.ArrayLike]) -> Label:
        y = int(self.predicted_class_batch(as_features(x))[0])
        return Label(index=y, num_classes=self.num_classes)

    def mean_nll(self, inputs: npt.ArrayLike, labels: npt.ArrayLike) -> float:
        logp = np.log(self.predict_batch(inputs))
        y = np.asarray(labels, dtype=np.int64)
        return float(-logp[np.arange(y.size), y].mean())


InputFn = Callable[[npt.NDArray[np.int64], int], npt.NDArray[np.float64]]


def fit_classifier(
    model: PredictionModel,
    labels: npt.NDArray[np.int64],
    cfg: TrainConfig,
    make_inputs: InputFn,
    name: str = "model",
) -> list[float]:
    """Mini-batch gradient descent on mean NLL (+ L2).

    Returns one loss per epoch, accumulated batch by batch before each
    update; with a full batch it is the objective at the epoch's starting
    weights.

    `make_inputs(rows, epoch)` builds the network inputs for a batch of rows,
    which lets surrogate training draw a fresh mask per row and epoch.
    """
    n = labels.size
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    model.init_weights(rng)
    history: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        penalty = 0.5 * cfg.l2_penalty * float(model.weights @ model.weights)
        for start in range(0, n, cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            cache = model.forward(make_inputs(rows, epoch))
            logp = log_softmax(cache.outputs, axis=1)
            y = labels[rows]
            total += float(-logp[np.arange(rows.size), y].sum())
            grad_logits = np.exp(logp)
            grad_logits[np.arange(rows.size), y] -= 1.0
            grad_w, _ = model.backward(cache, grad_logits / rows.size)
            grad_w += cfg.l2_penalty * model.weights
            model.weights = model.weights - cfg.learning_rate * grad_w
        loss = total / n + penalty
        if not np.isfinite(loss) or not np.all(np.isfinite(model.weights)):
            raise TrainingDivergedError(
                f"{name} diverged at epoch {epoch}: loss={loss}"
            )
        history.append(loss)
        if epoch % cfg.log_every == 0 or epoch == cfg.epochs - 1:
            logger.info(f"{name} epoch {epoch}: loss {loss:.6f}")
    return history


def train_model(
    data: Dataset, cfg: TrainConfig, history: Optional[list[float]] = None
) -> PredictionModel:
    model = PredictionModel(
        cfg.architecture,
        input_dim=data.d,
        output_dim=data.num_classes,
        hidden_dim=cfg.hidden_dim,
    )
    X = data.features
    losses = fit_classifier(
        model,
        np.asarray(data.labels),
        cfg,
        lambda rows, epoch: X[rows],
        name="prediction model",
    )
    if history is not None:
        history.extend(losses)
    return model


def save_weights(
    path: str, net: Network, kind: str, extra: Optional[dict[str, str]] = None
) -> None:
    fields = {"kind": kind, **net.header_fields(), **(extra or {})}
    header = " ".join(
        [WEIGHTS_HEADER, WEIGHTS_VERSION] + [f"{k}={v}" for k, v in fields.items()]
    )
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        # repr gives the shortest string that round-trips exactly
        for w in net.weights:
            f.write(repr(float(w)) + "\n")


def read_weights(path: str) -> tuple[dict[str, str], npt.NDArray[np.float64]]:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) < 2 or header[0] != WEIGHTS_HEADER:
            raise ValueError(f"{path} is not a weight file")
        if header[1] != WEIGHTS_VERSION:
            raise ValueError(f"unsupported weight file version {header[1]}")
        fields = dict(item.split("=", 1) for item in header[2:])
        weights = np.array([float(line) for line in f if line.strip()])
    return fields, weights


def load_network(path: str) -> tuple[dict[str, str], Network]:
    fields, weights = read_weights(path)
    net = Network(
        fields["architecture"],
        input_dim=int(fields["input_dim"]),
        output_dim=int(fields["output_dim"]),
        hidden_dim=int(fields["hidden_dim"]) or None,
        weights=weights,
    )
    return fields, net


def load_model(path: str) -> PredictionModel:
    _, net = load_network(path)
    return PredictionModel(
        net.architecture,
        input_dim=net.input_dim,
        output_dim=net.output_dim,
        hidden_dim=net.hidden_dim or None,
        weights=net.weights,
    )
