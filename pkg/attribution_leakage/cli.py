import argparse
import configparser
import json
import logging
import os
from typing import Any, Callable, Optional, Sequence

import numpy as np
import numpy.typing as npt
import pandas as pd
from pydantic import BaseModel, ValidationError

from .amortized import AmortizedExplainer, train_fastshap, train_fastshap_kl, train_real_x
from .config import (
    ORACLE,
    ClassSource,
    DemoSection,
    EvaluateSection,
    ExplainSection,
    GenDataSection,
    SweepSection,
    TrainSection,
    TrainTarget,
    process_from_config,
    read_config,
    section,
)
from .core import AttributionError, UsageError
from .evaluation import (
    evaluate_attributions,
    overconfidence_witnesses,
    pointwise_ci,
)
from .explainer import ExplainContext, Explainer
from .masking import SamplerKind, SubsetSampler, derive_seed
from .models import PredictionModel, load_model, save_weights, train_model
from .plotting import plot_curve
from .storage import (
    read_attributions,
    read_dataset,
    write_attributions,
    write_curve,
    write_dataset,
    write_report,
    write_table,
    write_training_log,
)
from .structs import Architecture, Dataset, EvalReport, TrainConfig
from .surrogate import (
    ConditionalModel,
    ConditionalOracle,
    SurrogateModel,
    masked_conditional_entropy,
    train_surrogate,
)
from .synthetic import (
    Lemma1Process,
    Lemma3Process,
    SyntheticProcess,
    exact_leakage_gap_lemma1,
    lemma3_adversary,
)
from .tracing import trace_command

logger = logging.getLogger()

# Named hyperparameter grids for `sweep`: preset -> (setting, values, methods)
SWEEP_PRESETS: dict[str, tuple[str, tuple[float, ...], tuple[str, ...]]] = {
    "subset-samples": (
        "num_samples",
        (512, 1024, 2048, 4096, 8192),
        ("shap", "shap-s", "shap-kl", "lime"),
    ),
    "gradient-samples": (
        "grad_samples",
        (64, 128, 256, 512, 1024),
        ("smoothgrad", "intgrad"),
    ),
    "amortized-subsets": (
        "subsets_per_instance",
        (1, 2, 4, 8, 16),
        ("fastshap", "fastshap-kl", "real-x"),
    ),
    "real-x-lambda": ("lam", (1e-5, 1e-4, 1e-3, 1e-2, 1e-1), ("real-x",)),
}


def _require_file(path: str, what: str) -> str:
    if not path:
        raise UsageError(f"no {what} path given")
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")
    return path


def resolve_conditional(
    backend: str, process: Optional[SyntheticProcess]
) -> Optional[ConditionalModel]:
    """'oracle' needs a [process]; anything else is a surrogate weight file."""
    if backend == ORACLE:
        return ConditionalOracle(process) if process is not None else None
    return SurrogateModel.load(_require_file(backend, "surrogate"))


def require_conditional(
    backend: str, process: Optional[SyntheticProcess]
) -> ConditionalModel:
    cond = resolve_conditional(backend, process)
    if cond is None:
        raise UsageError("the oracle conditional needs a [process] section")
    return cond


def class_indices(
    source: ClassSource,
    data: Dataset,
    model: Optional[PredictionModel],
    conditional: Optional[ConditionalModel],
) -> Optional[npt.NDArray[np.int64]]:
    if source == ClassSource.NONE:
        return None
    if source == ClassSource.TRUE_LABEL:
        return np.asarray(data.labels, dtype=np.int64)
    if model is not None:
        return model.predicted_class_batch(data.features)
    if conditional is not None:
        return conditional.predicted_class_batch(data.features)
    raise UsageError("class_source = predicted needs a model or a conditional model")


def build_explainer(
    settings: ExplainSection,
    conditional: Optional[ConditionalModel],
    model: Optional[PredictionModel],
) -> Explainer:
    from . import AVAILABLE_METHODS

    if settings.method not in AVAILABLE_METHODS:
        raise UsageError(
            f"unknown method '{settings.method}', choose from "
            f"{', '.join(sorted(AVAILABLE_METHODS))}"
        )
    cls = AVAILABLE_METHODS[settings.method]
    cls.check_class_source(settings.class_source)
    return cls(ExplainContext(settings=settings, conditional=conditional, model=model))


@trace_command("gen-data")
def cmd_gen_data(parser: configparser.ConfigParser) -> Dataset:
    settings = section(parser, "gen-data", GenDataSection)
    process = process_from_config(parser)
    if process is None:
        raise UsageError("gen-data needs a [process] section")
    data = process.sample(settings.count, settings.seed)
    write_dataset(settings.output, data, process=process.kind)
    logger.info(f"wrote {len(data)} {process.kind} samples to {settings.output}")
    return data


@trace_command("train")
def cmd_train(parser: configparser.ConfigParser) -> None:
    settings = section(parser, "train", TrainSection)
    data = read_dataset(_require_file(settings.data, "dataset"))
    process = process_from_config(parser)
    cfg = settings.train_config()
    history: list[float] = []

    if settings.target == TrainTarget.MODEL:
        model = train_model(data, cfg, history)
        save_weights(settings.output, model, kind="model")
    elif settings.target == TrainTarget.SURROGATE:
        sampler = SubsetSampler(settings.sampler, data.d, derive_seed(cfg.seed, 3))
        surr = train_surrogate(data, sampler, cfg, history)
        surr.save(settings.output)
        if process is not None and process.support() is not None:
            floor = masked_conditional_entropy(ConditionalOracle(process))
            logger.info(f"surrogate loss {history[-1]:.4f}, entropy floor {floor:.4f}")
    else:
        cond = require_conditional(settings.conditional, process)
        expl: AmortizedExplainer
        if settings.target == TrainTarget.FASTSHAP:
            expl = train_fastshap(
                cond, data, cfg, settings.subsets_per_instance, settings.fixed_subsets, history
            )
        elif settings.target == TrainTarget.FASTSHAP_KL:
            expl = train_fastshap_kl(
                cond, data, cfg, settings.subsets_per_instance, settings.fixed_subsets, history
            )
        else:
            expl = train_real_x(
                cond, data, cfg, settings.lam, settings.subsets_per_instance, history
            )
        expl.save(settings.output)

    log_path = settings.log or f"{settings.output}.log.csv"
    write_training_log(log_path, history, kind=settings.target.value)
    logger.info(f"saved {settings.target.value} to {settings.output}, log in {log_path}")


@trace_command("explain")
def cmd_explain(parser: configparser.ConfigParser) -> npt.NDArray[np.float64]:
    settings = section(parser, "explain", ExplainSection)
    from . import AVAILABLE_METHODS

    # the class contract is checked before anything is loaded
    if settings.method in AVAILABLE_METHODS:
        AVAILABLE_METHODS[settings.method].check_class_source(settings.class_source)
    data = read_dataset(_require_file(settings.data, "dataset"))
    process = process_from_config(parser)
    conditional = resolve_conditional(settings.conditional, process)
    model = load_model(_require_file(settings.model, "model")) if settings.model else None
    explainer = build_explainer(settings, conditional, model)
    classes = class_indices(settings.class_source, data, model, conditional)
    scores = explainer.explain_all(data, classes, settings.workers)
    write_attributions(settings.output, settings.method, scores, classes)
    logger.info(f"wrote {scores.shape[0]} {settings.method} attributions to {settings.output}")
    return scores


@trace_command("evaluate")
def cmd_evaluate(parser: configparser.ConfigParser) -> EvalReport:
    settings = section(parser, "evaluate", EvaluateSection)
    method, scores, _ = read_attributions(_require_file(settings.attributions, "attributions"))
    data = read_dataset(_require_file(settings.data, "dataset"))
    if scores.shape != data.features.shape:
        raise UsageError(
            f"attributions have shape {scores.shape}, dataset {data.features.shape}"
        )
    conditional = require_conditional(settings.conditional, process_from_config(parser))
    report = evaluate_attributions(
        method,
        scores,
        conditional,
        data,
        settings.grid,
        settings.resamples,
        settings.seed,
        settings.absolute,
    )
    assert report.curve is not None
    ci = pointwise_ci(report.curve, settings.resamples, settings.seed)
    stem = os.path.join(settings.output_dir, method)
    write_curve(f"{stem}.curve.csv", report, ci)
    write_report(f"{stem}.report.json", report)
    plot_curve(f"{stem}.curve.svg", method, report.curve, ci)
    logger.info(json.dumps(report.model_dump(), indent=2))
    return report


class DemoRow(BaseModel):
    process: str
    backend: str
    method: str
    iauc: float
    ci_low: float
    ci_high: float
    full_feature_loglik: float
    leakage: str


def _demo_rows(
    process: SyntheticProcess,
    backend: str,
    conditional: ConditionalModel,
    test: Dataset,
    runs: Sequence[tuple[str, ClassSource]],
    settings: DemoSection,
) -> list[DemoRow]:
    rows = []
    for method, source in runs:
        explain = ExplainSection(
            method=method,
            data="",
            output="",
            class_source=source,
            conditional=ORACLE if backend == ORACLE else "surrogate",
            num_samples=64,
            seed=settings.seed,
        )
        explainer = build_explainer(explain, conditional, None)
        classes = class_indices(source, test, None, conditional)
        scores = explainer.explain_all(test, classes)
        report = evaluate_attributions(
            method, scores, conditional, test, resamples=settings.resamples, seed=settings.seed
        )
        rows.append(
            DemoRow(
                process=process.kind,
                backend=backend,
                method=method,
                iauc=report.iauc,
                ci_low=report.ci_low,
                ci_high=report.ci_high,
                full_feature_loglik=report.full_feature_loglik,
                leakage="LEAK" if report.leakage_flag else "OK",
            )
        )
    return rows


@trace_command("demo-leakage")
def cmd_demo_leakage(parser: configparser.ConfigParser) -> list[DemoRow]:
    settings = section(parser, "demo", DemoSection)
    rows: list[DemoRow] = []

    lemma1 = Lemma1Process()
    gap = exact_leakage_gap_lemma1()
    logger.info(f"lemma1: exact top-50% minus full-feature log-likelihood = {gap:.6f}")
    test1 = lemma1.sample(settings.test_size, settings.seed)
    lemma1_runs = [
        ("lemma1-adversary", ClassSource.TRUE_LABEL),
        ("shap-s", ClassSource.TRUE_LABEL),
        ("shap-kl", ClassSource.NONE),
        ("random", ClassSource.NONE),
    ]
    oracle1 = ConditionalOracle(lemma1)
    bruteforce = [("optimal-bruteforce", ClassSource.NONE)]
    rows += _demo_rows(lemma1, ORACLE, oracle1, test1, lemma1_runs + bruteforce, settings)

    lemma3 = Lemma3Process()
    oracle3 = ConditionalOracle(lemma3)
    test3 = lemma3.sample(settings.test_size, settings.seed)
    lemma3_runs = [
        ("lemma3-adversary", ClassSource.PREDICTED),
        ("shap-kl", ClassSource.NONE),
        ("random", ClassSource.NONE),
    ]
    rows += _demo_rows(lemma3, ORACLE, oracle3, test3, lemma3_runs, settings)

    witnesses = overconfidence_witnesses(oracle3, lambda x, y: lemma3_adversary(x))
    for w in witnesses:
        logger.info(
            f"lemma3 witness x={w.features} n={w.n:g}: "
            f"p(ŷ={w.predicted_class} | subset) = {w.subset_probability:.4f} > "
            f"{w.full_probability:.4f} = p(ŷ | x)"
        )

    if settings.surrogate:
        for process, test, runs in ((lemma1, test1, lemma1_runs), (lemma3, test3, lemma3_runs)):
            train = process.sample(settings.train_size, derive_seed(settings.seed, 1))
            cfg = TrainConfig(
                learning_rate=0.2,
                epochs=settings.epochs,
                batch_size=128,
                seed=settings.seed,
                architecture=Architecture.MLP,
            )
            sampler = SubsetSampler(
                SamplerKind.UNIFORM_CARDINALITY, process.d, derive_seed(settings.seed, 3)
            )
            surr = train_surrogate(train, sampler, cfg)
            rows += _demo_rows(process, "surrogate", surr, test, runs, settings)

    table = pd.DataFrame([r.model_dump() for r in rows])
    print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    print(f"lemma3 overconfidence witnesses: {len(witnesses)}")
    for w in witnesses:
        print(
            f"  x={w.features} n={w.n:g} subset={w.subset_probability:.4f} "
            f"full={w.full_probability:.4f}"
        )
    if settings.output_dir:
        write_table(
            os.path.join(settings.output_dir, "demo.csv"),
            [r.model_dump() for r in rows],
            "demo-summary",
        )
    return rows


class SweepRow(BaseModel):
    value: float
    iauc: float
    ci_low: float
    ci_high: float
    leakage: bool


class SweepResult(BaseModel):
    method: str
    preset: str
    setting: str
    best_value: float
    rows: list[SweepRow]


def _amortized_scores(
    method: str,
    setting: str,
    value: float,
    cond: ConditionalModel,
    train: Dataset,
    val: Dataset,
    classes: Optional[npt.NDArray[np.int64]],
    settings: SweepSection,
) -> npt.NDArray[np.float64]:
    cfg = TrainConfig(epochs=settings.epochs, seed=settings.seed)
    params: dict[str, Any] = {"subsets_per_instance": 4, "lam": 0.0}
    params[setting] = int(value) if setting == "subsets_per_instance" else float(value)
    if method == "fastshap":
        expl = train_fastshap(cond, train, cfg, params["subsets_per_instance"])
        assert classes is not None
        return expl.explain_batch(val.features, classes)
    if method == "fastshap-kl":
        expl = train_fastshap_kl(cond, train, cfg, params["subsets_per_instance"])
    else:
        expl = train_real_x(cond, train, cfg, params["lam"], params["subsets_per_instance"])
    return expl.explain_batch(val.features)


@trace_command("sweep")
def cmd_sweep(parser: configparser.ConfigParser) -> SweepResult:
    settings = section(parser, "sweep", SweepSection)
    if settings.preset not in SWEEP_PRESETS:
        raise UsageError(
            f"unknown preset '{settings.preset}', choose from {', '.join(SWEEP_PRESETS)}"
        )
    setting, values, methods = SWEEP_PRESETS[settings.preset]
    if settings.method not in methods:
        raise UsageError(f"preset {settings.preset} applies to {', '.join(methods)}")
    data = read_dataset(_require_file(settings.data, "dataset"))
    try:
        val, train = data.split(settings.validation_fraction, settings.seed)
    except ValueError as e:
        raise UsageError(f"validation_fraction: {e}") from e
    cond = require_conditional(settings.conditional, process_from_config(parser))
    model = load_model(_require_file(settings.model, "model")) if settings.model else None
    classes = class_indices(settings.class_source, val, model, cond)

    rows = []
    for value in values:
        logger.info(f"sweep {settings.method}: {setting} = {value:g}")
        if settings.preset in ("amortized-subsets", "real-x-lambda"):
            scores = _amortized_scores(
                settings.method, setting, value, cond, train, val, classes, settings
            )
        else:
            explain = ExplainSection(
                method=settings.method,
                data=settings.data,
                output="",
                class_source=settings.class_source,
                model=settings.model,
                conditional=settings.conditional,
                seed=settings.seed,
                **{setting: int(value)},
            )
            scores = build_explainer(explain, cond, model).explain_all(
                val, classes, settings.workers
            )
        report = evaluate_attributions(settings.method, scores, cond, val, seed=settings.seed)
        rows.append(
            SweepRow(
                value=value,
                iauc=report.iauc,
                ci_low=report.ci_low,
                ci_high=report.ci_high,
                leakage=report.leakage_flag,
            )
        )
    best = max(range(len(rows)), key=lambda i: (rows[i].iauc, -i))
    result = SweepResult(
        method=settings.method,
        preset=settings.preset,
        setting=setting,
        best_value=rows[best].value,
        rows=rows,
    )
    if settings.output:
        write_table(settings.output, [r.model_dump() for r in rows], "sweep")
    logger.info(f"sweep {settings.method}: best {setting} = {result.best_value:g}")
    return result


COMMANDS: dict[str, Callable[[configparser.ConfigParser], Any]] = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "explain": cmd_explain,
    "evaluate": cmd_evaluate,
    "demo-leakage": cmd_demo_leakage,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="Path to an INI run config.")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override one config value; may be repeated.",
    )
    parser = argparse.ArgumentParser(
        prog="attribution-leakage",
        description="Evaluate feature attributions for label leakage.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code: 0, 2 (usage) or 3 (numeric)."""
    args = build_parser().parse_args(argv)
    try:
        config = read_config(args.config, args.overrides)
        COMMANDS[args.command](config)
    except AttributionError as e:
        logger.error(f"{args.command}: {e}")
        return e.exit_code
    except (ValidationError, ValueError, FileNotFoundError) as e:
        logger.error(f"{args.command}: {e}")
        return UsageError.exit_code
    return 0
