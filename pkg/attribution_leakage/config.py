"""Run configuration.

A run config is an INI file, one section per command plus `[process]`:

    [process]
    name = lemma3
    p_x1 = 0.8

    [explain]
    method = shap-kl
    data = data/test.csv

Values given with `--set section.key=value` replace file values before the
section is validated. Unknown keys are rejected.
"""

import configparser
import logging
import os
from enum import Enum
from typing import Any, Optional, Sequence, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .core import UsageError
from .evaluation import DEFAULT_GRID
from .masking import SamplerKind
from .structs import Architecture, TrainConfig
from .synthetic import SyntheticProcess, make_process

logger = logging.getLogger()

ORACLE = "oracle"


class ClassSource(str, Enum):
    TRUE_LABEL = "true-label"
    PREDICTED = "predicted"
    NONE = "none"


class TrainTarget(str, Enum):
    MODEL = "model"
    SURROGATE = "surrogate"
    FASTSHAP = "fastshap"
    FASTSHAP_KL = "fastshap-kl"
    REAL_X = "real-x"


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GenDataSection(_Section):
    count: int = Field(1000, ge=1)
    seed: int = 0
    output: str = "data/dataset.csv"


class TrainSection(_Section):
    target: TrainTarget = TrainTarget.MODEL
    data: str
    output: str
    log: str = ""
    # "oracle" or a surrogate weight file; used by the amortized targets
    conditional: str = ORACLE
    learning_rate: float = Field(0.1, gt=0.0)
    epochs: int = Field(50, ge=1)
    batch_size: int = Field(64, ge=1)
    seed: int = 0
    l2_penalty: float = Field(0.0, ge=0.0)
    architecture: Architecture = Architecture.MLP
    hidden_dim: Optional[int] = Field(None, ge=1)
    log_every: int = Field(10, ge=1)
    sampler: SamplerKind = SamplerKind.UNIFORM_CARDINALITY
    subsets_per_instance: int = Field(4, ge=1)
    fixed_subsets: bool = False
    lam: float = Field(0.0, ge=0.0)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            l2_penalty=self.l2_penalty,
            architecture=self.architecture,
            hidden_dim=self.hidden_dim,
            log_every=self.log_every,
        )


class ExplainSection(_Section):
    method: str
    data: str
    output: str
    class_source: ClassSource = ClassSource.NONE
    # prediction model weights: shap, lime, smoothgrad, intgrad and ŷ
    model: str = ""
    conditional: str = ORACLE
    # amortized explainer weights
    explainer: str = ""
    num_samples: int = Field(2048, ge=1)
    kernel_width: Optional[float] = Field(None, gt=0.0)
    grad_samples: int = Field(256, ge=1)
    noise_sigma: float = Field(0.1, ge=0.0)
    seed: int = 0
    workers: Optional[int] = Field(None, ge=1)


class EvaluateSection(_Section):
    attributions: str
    data: str
    conditional: str = ORACLE
    output_dir: str = "results"
    grid: list[float] = Field(default_factory=lambda: list(DEFAULT_GRID))
    resamples: int = Field(1000, ge=1)
    seed: int = 0
    absolute: bool = False

    @field_validator("grid", mode="before")
    @classmethod
    def _grid_list(cls, value: Any) -> Any:
        return _split_list(value)


class DemoSection(_Section):
    test_size: int = Field(2000, ge=10)
    train_size: int = Field(20000, ge=10)
    seed: int = 0
    surrogate: bool = True
    epochs: int = Field(30, ge=1)
    resamples: int = Field(1000, ge=1)
    output_dir: str = ""


class SweepSection(_Section):
    method: str
    preset: str
    data: str
    conditional: str = ORACLE
    model: str = ""
    class_source: ClassSource = ClassSource.NONE
    validation_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    seed: int = 0
    epochs: int = Field(20, ge=1)
    output: str = ""
    workers: Optional[int] = Field(None, ge=1)


SECTIONS: dict[str, Type[_Section]] = {
    "gen-data": GenDataSection,
    "train": TrainSection,
    "explain": ExplainSection,
    "evaluate": EvaluateSection,
    "demo": DemoSection,
    "sweep": SweepSection,
}

S = TypeVar("S", bound=_Section)


def read_config(path: Optional[str], overrides: Sequence[str] = ()) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    if path:
        if not os.path.isfile(path):
            raise UsageError(f"no such config file: {path}")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as e:
            raise UsageError(f"cannot parse {path}: {e}") from e
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().partition(".")
        if not sep or not dot or not section or not option:
            raise UsageError(f"override '{item}' is not of the form section.key=value")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, option, value.strip())
    unknown = set(parser.sections()) - set(SECTIONS) - {"process"}
    if unknown:
        raise UsageError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    return parser


def section(parser: configparser.ConfigParser, name: str, model: Type[S]) -> S:
    values = dict(parser.items(name)) if parser.has_section(name) else {}
    values = {k.replace("-", "_"): v for k, v in values.items()}
    try:
        return model.model_validate(values)
    except ValidationError as e:
        raise UsageError(f"invalid [{name}] section: {e}") from e


def process_from_config(parser: configparser.ConfigParser) -> Optional[SyntheticProcess]:
    if not parser.has_section("process"):
        return None
    params: dict[str, Any] = {
        k.replace("-", "_"): v for k, v in parser.items("process")
    }
    name = params.pop("name", None)
    if not name:
        raise UsageError("[process] needs a name")
    for key, value in list(params.items()):
        if isinstance(value, str) and "," in value:
            params[key] = _split_list(value)
    logger.debug(f"process {name} with {params}")
    return make_process(name, **params)
