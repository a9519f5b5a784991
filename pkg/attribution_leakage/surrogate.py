import logging
from abc import ABC, abstractmethod
from typing import Optional, Union

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel
from scipy.special import comb
from sklearn.metrics import roc_auc_score
from sklearn.preprocessing import label_binarize

from .core import PROB_FLOOR, as_features, entropy, floor_probs
from .masking import MaskLike, SubsetSampler, as_bits, enumerate_subset_matrix, mask_batch
from .models import (
    PredictionModel,
    default_hidden_dim,
    fit_classifier,
    load_network,
    save_weights,
)
from .structs import ClassDistribution, Dataset, Instance, Label, TrainConfig
from .synthetic import SyntheticProcess

logger = logging.getLogger()


class ConditionalModel(ABC):
    """Anything that answers p(y | x_s): a surrogate, an oracle or a raw model."""

    d: int
    num_classes: int

    @abstractmethod
    def predict_batch(
        self, X: npt.ArrayLike, S: npt.ArrayLike
    ) -> npt.NDArray[np.float64]:
        """Class probabilities for every (row of X, row of S) pair, shape (n, K)."""

    def predict(
        self, x: Union[Instance, npt.ArrayLike], s: MaskLike
    ) -> ClassDistribution:
        return ClassDistribution(
            probs=self.predict_batch(as_features(x), as_bits(s))[0]
        )

    def full_batch(self, X: npt.ArrayLike) -> npt.NDArray[np.float64]:
        X2 = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self.predict_batch(X2, np.ones(X2.shape, dtype=np.int8))

    def empty_batch(self, X: npt.ArrayLike) -> npt.NDArray[np.float64]:
        X2 = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self.predict_batch(X2, np.zeros(X2.shape, dtype=np.int8))

    def predicted_class_batch(self, X: npt.ArrayLike) -> npt.NDArray[np.int64]:
        return np.argmax(self.full_batch(X), axis=1).astype(np.int64)

    def predicted_class(self, x: Union[Instance, npt.ArrayLike]) -> Label:
        y = int(self.predicted_class_batch(as_features(x))[0])
        return Label(index=y, num_classes=self.num_classes)


class SurrogateModel(ConditionalModel):
    """Classifier over (values ⊕ indicator) trained on randomly masked inputs."""

    backbone: PredictionModel
    trained: bool

    def __init__(self, backbone: PredictionModel, d: int, trained: bool = True) -> None:
        if backbone.input_dim != 2 * d:
            raise ValueError(
                f"surrogate backbone needs {2 * d} inputs, has {backbone.input_dim}"
            )
        self.backbone = backbone
        self.d = d
        self.num_classes = backbone.num_classes
        self.trained = trained

    def __repr__(self) -> str:
        return f"<SurrogateModel d={self.d} K={self.num_classes} {self.backbone!r}>"

    def predict_batch(
        self, X: npt.ArrayLike, S: npt.ArrayLike
    ) -> npt.NDArray[np.float64]:
        X2 = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X2.shape[1] != self.d:
            raise ValueError(f"surrogate expects d={self.d}, got {X2.shape[1]}")
        return self.backbone.predict_batch(mask_batch(X2, np.asarray(S)))

    def save(self, path: str) -> None:
        save_weights(path, self.backbone, kind="surrogate", extra={"d": str(self.d)})

    @classmethod
    def load(cls, path: str) -> "SurrogateModel":
        fields, net = load_network(path)
        if fields.get("kind") != "surrogate":
            raise ValueError(f"{path} holds a {fields.get('kind')}, not a surrogate")
        backbone = PredictionModel(
            net.architecture,
            input_dim=net.input_dim,
            output_dim=net.output_dim,
            hidden_dim=net.hidden_dim or None,
            weights=net.weights,
        )
        return cls(backbone, d=int(fields["d"]))


class ConditionalOracle(ConditionalModel):
    """Exact F(y | x_s) of a synthetic process."""

    process: SyntheticProcess

    def __init__(self, process: SyntheticProcess) -> None:
        self.process = process
        self.d = process.d
        self.num_classes = process.num_classes

    def __repr__(self) -> str:
        return f"<ConditionalOracle {self.process.kind}>"

    def predict_batch(
        self, X: npt.ArrayLike, S: npt.ArrayLike
    ) -> npt.NDArray[np.float64]:
        return self.process.conditional_batch(
            np.asarray(X, dtype=np.float64), np.asarray(S, dtype=np.int8)
        )

    def full_batch(self, X: npt.ArrayLike) -> npt.NDArray[np.float64]:
        return self.process.full_conditional_batch(
            np.atleast_2d(np.asarray(X, dtype=np.float64))
        )


class BaselineReplacement(ConditionalModel):
    """A plain prediction model with removed features set to a fixed baseline.

    No indicator channel is involved, so masked inputs can fall off the data
    manifold; this is the value function plain SHAP uses.
    """

    model: PredictionModel
    baseline: npt.NDArray[np.float64]

    def __init__(
        self, model: PredictionModel, baseline: Optional[npt.ArrayLike] = None
    ) -> None:
        self.model = model
        self.d = model.input_dim
        self.num_classes = model.num_classes
        self.baseline = (
            np.zeros(self.d) if baseline is None else np.asarray(baseline, dtype=np.float64)
        )

    def predict_batch(
        self, X: npt.ArrayLike, S: npt.ArrayLike
    ) -> npt.NDArray[np.float64]:
        X2 = np.atleast_2d(np.asarray(X, dtype=np.float64))
        S2 = np.atleast_2d(np.asarray(S))
        return self.model.predict_batch(np.where(S2 == 1, X2, self.baseline))


def train_surrogate(
    data: Dataset,
    sampler: SubsetSampler,
    cfg: TrainConfig,
    history: Optional[list[float]] = None,
) -> SurrogateModel:
    if sampler.d != data.d:
        raise ValueError(f"sampler has d={sampler.d}, data has d={data.d}")
    backbone = PredictionModel(
        cfg.architecture,
        input_dim=2 * data.d,
        output_dim=data.num_classes,
        hidden_dim=cfg.hidden_dim or default_hidden_dim(data.d),
    )
    X = data.features

    def masked_rows(rows: npt.NDArray[np.int64], epoch: int) -> npt.NDArray[np.float64]:
        return mask_batch(X[rows], sampler.sample_batch(rows.size))

    losses = fit_classifier(
        backbone, np.asarray(data.labels), cfg, masked_rows, name="surrogate"
    )
    if history is not None:
        history.extend(losses)
    return SurrogateModel(backbone, d=data.d)


def surrogate_predict(
    surr: ConditionalModel, x: Union[Instance, npt.ArrayLike], s: MaskLike
) -> ClassDistribution:
    return surr.predict(x, s)


def analytic_conditional(
    oracle: ConditionalOracle, x: Union[Instance, npt.ArrayLike], s: MaskLike
) -> ClassDistribution:
    return oracle.predict(x, s)


def masked_conditional_entropy(oracle: ConditionalOracle) -> float:
    """E_s E_x H(F(y | x_s)) with s from the uniform-cardinality sampler.

    This is the lowest loss surrogate training can reach on a discrete process.
    """
    support = oracle.process.support()
    if support is None:
        raise ValueError(f"{oracle.process.kind} has no finite support")
    inputs, probs = support
    d = oracle.d
    total = 0.0
    for bits in enumerate_subset_matrix(d):
        k = int(bits.sum())
        p_s = 1.0 / ((d + 1) * comb(d, k, exact=True))
        cond = oracle.predict_batch(inputs, bits)
        total += p_s * float(sum(p * entropy(row) for p, row in zip(probs, cond)))
    return total


class AgreementReport(BaseModel):
    model_nll: float
    surrogate_nll: float
    model_auroc: float
    surrogate_auroc: float

    @property
    def nll_gap(self) -> float:
        return abs(self.surrogate_nll - self.model_nll)


def _auroc(labels: npt.NDArray[np.int64], P: npt.NDArray[np.float64]) -> float:
    if P.shape[1] == 2:
        return float(roc_auc_score(labels, P[:, 1]))
    onehot = label_binarize(labels, classes=np.arange(P.shape[1]))
    return float(roc_auc_score(onehot, P, average="micro"))


def model_agreement(
    model: PredictionModel, surr: ConditionalModel, data: Dataset
) -> AgreementReport:
    """Full-input performance of the prediction model and the surrogate."""
    y = np.asarray(data.labels)
    rows = np.arange(y.size)
    P_model = model.predict_batch(data.features)
    P_surr = floor_probs(surr.full_batch(data.features))
    report = AgreementReport(
        model_nll=float(-np.log(np.maximum(P_model[rows, y], PROB_FLOOR)).mean()),
        surrogate_nll=float(-np.log(np.maximum(P_surr[rows, y], PROB_FLOOR)).mean()),
        model_auroc=_auroc(y, P_model),
        surrogate_auroc=_auroc(y, P_surr),
    )
    logger.info(
        f"full-input NLL model={report.model_nll:.4f} surrogate={report.surrogate_nll:.4f}"
    )
    return report
