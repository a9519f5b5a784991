"""CSV artifacts.

Every CSV file starts with one version line

    # attribution-leakage <artifact> v1 key=value ...

followed by a plain pandas CSV. The JSON report carries the same version in
its "format" field. Weight files live in models.py.
"""

import json
import logging
import os
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt
import pandas as pd
from pydantic import ValidationError

from .core import UsageError
from .structs import Dataset, EvalReport, InclusionCurve

logger = logging.getLogger()

FORMAT_HEADER = "# attribution-leakage"
FORMAT_VERSION = "v1"
REPORT_FORMAT = f"attribution-leakage report {FORMAT_VERSION}"


def _write(path: str, artifact: str, frame: pd.DataFrame, **fields: object) -> None:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    extra = "".join(f" {k}={v}" for k, v in fields.items())
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"{FORMAT_HEADER} {artifact} {FORMAT_VERSION}{extra}\n")
        frame.to_csv(f, index=False, lineterminator="\n")
    logger.debug(f"wrote {artifact} ({len(frame)} rows) to {path}")


def _read(path: str, artifact: str) -> tuple[dict[str, str], pd.DataFrame]:
    if not os.path.isfile(path):
        raise UsageError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
        parts = first.split()
        if first[: len(FORMAT_HEADER)] != FORMAT_HEADER or len(parts) < 4:
            raise UsageError(f"{path} is missing the '{FORMAT_HEADER}' version line")
        if parts[2] != artifact:
            raise UsageError(f"{path} holds a {parts[2]}, expected a {artifact}")
        if parts[3] != FORMAT_VERSION:
            raise UsageError(f"{path} has format {parts[3]}, expected {FORMAT_VERSION}")
        fields = dict(p.split("=", 1) for p in parts[4:] if "=" in p)
        frame = pd.read_csv(f)
    return fields, frame


def feature_columns(d: int) -> list[str]:
    return [f"x_{i + 1}" for i in range(d)]


def score_columns(d: int) -> list[str]:
    return [f"e_{i + 1}" for i in range(d)]


def write_dataset(path: str, data: Dataset, process: str = "") -> None:
    frame = pd.DataFrame(data.features, columns=feature_columns(data.d))
    frame["y"] = data.labels
    fields: dict[str, object] = {"d": data.d, "K": data.num_classes}
    if process:
        fields["process"] = process
    _write(path, "dataset", frame, **fields)


def read_dataset(path: str) -> Dataset:
    fields, frame = _read(path, "dataset")
    d = int(fields["d"])
    if list(frame.columns) != feature_columns(d) + ["y"]:
        raise UsageError(f"{path}: header does not match d={d}")
    return Dataset(
        features=frame[feature_columns(d)].to_numpy(dtype=np.float64),
        labels=frame["y"].to_numpy(dtype=np.int64),
        num_classes=int(fields["K"]),
    )


def write_attributions(
    path: str,
    method: str,
    scores: npt.NDArray[np.float64],
    classes: Optional[Sequence[int]] = None,
    indices: Optional[Sequence[int]] = None,
) -> None:
    """Raw scores, one row per instance; `classes` for class-dependent methods."""
    E = np.atleast_2d(scores)
    frame = pd.DataFrame(
        {"index": np.arange(E.shape[0]) if indices is None else np.asarray(indices)}
    )
    if classes is not None:
        frame["class"] = np.asarray(classes, dtype=np.int64)
    frame[score_columns(E.shape[1])] = E
    _write(path, "attributions", frame, method=method, d=E.shape[1])


def read_attributions(
    path: str,
) -> tuple[str, npt.NDArray[np.float64], Optional[npt.NDArray[np.int64]]]:
    fields, frame = _read(path, "attributions")
    d = int(fields["d"])
    frame = frame.sort_values("index", kind="stable")
    classes = frame["class"].to_numpy(dtype=np.int64) if "class" in frame else None
    return fields.get("method", ""), frame[score_columns(d)].to_numpy(dtype=np.float64), classes


def write_curve(
    path: str,
    report: EvalReport,
    ci: Optional[tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]] = None,
) -> None:
    curve = report.curve
    if curve is None:
        raise ValueError(f"report for {report.method} carries no curve")
    low, high = ci if ci is not None else (curve.mean_loglik, curve.mean_loglik)
    frame = pd.DataFrame(
        {
            "n": curve.grid,
            "mean_loglik": curve.mean_loglik,
            "ci_low": low,
            "ci_high": high,
        }
    )
    _write(path, "curve", frame, method=report.method)


def read_curve(path: str) -> pd.DataFrame:
    _, frame = _read(path, "curve")
    return frame


def curve_from_frame(frame: pd.DataFrame) -> InclusionCurve:
    """A curve without per-sample rows; enough for iauc and plotting."""
    mean = frame["mean_loglik"].to_numpy(dtype=np.float64)
    return InclusionCurve(
        grid=frame["n"].to_numpy(dtype=np.float64),
        mean_loglik=mean,
        per_sample_loglik=mean[:, None],
    )


def write_training_log(path: str, losses: Sequence[float], kind: str) -> None:
    frame = pd.DataFrame({"epoch": np.arange(1, len(losses) + 1), "loss": list(losses)})
    _write(path, "training-log", frame, kind=kind)


def read_training_log(path: str) -> pd.DataFrame:
    _, frame = _read(path, "training-log")
    return frame


def write_report(path: str, report: EvalReport) -> None:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    payload = {"format": REPORT_FORMAT, **report.model_dump(mode="json")}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def read_report(path: str) -> EvalReport:
    if not os.path.isfile(path):
        raise UsageError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as e:
            raise UsageError(f"{path} is not a JSON report: {e}") from e
    if not isinstance(payload, dict):
        raise UsageError(f"{path} is not a JSON report")
    found = payload.pop("format", None)
    if found != REPORT_FORMAT:
        raise UsageError(f"{path} has format {found!r}, expected {REPORT_FORMAT!r}")
    try:
        return EvalReport.model_validate(payload)
    except ValidationError as e:
        raise UsageError(f"{path}: invalid report: {e}") from e


def write_table(path: str, rows: list[dict[str, object]], artifact: str) -> None:
    _write(path, artifact, pd.DataFrame(rows))
