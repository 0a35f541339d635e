"""Dataset container, CSV ingestion, and preprocessing transforms.

A Dataset bundles the feature matrix, the surrogate vector, and (partially
observed) binary labels. Transforms are pure: each returns a new Dataset and
records its parameters in the dataset's TransformLog so that held-out data
can be pushed through the identical sequence of floating-point operations.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Raised on malformed input data."""


@dataclass(frozen=True)
class TransformLog:
    """Ordered record of applied transforms with their fitted parameters."""

    steps: tuple[dict, ...] = ()

    def appended(self, step: dict) -> "TransformLog":
        return TransformLog(self.steps + (step,))

    def to_json(self) -> str:
        return json.dumps({"steps": list(self.steps)}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TransformLog":
        return cls(tuple(json.loads(text)["steps"]))


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with surrogate outcome and partially observed labels.

    labels is a full-length float vector with NaN marking unlabeled rows;
    observed entries must be exactly 0 or 1.
    """

    features: np.ndarray
    surrogate: np.ndarray
    labels: np.ndarray | None = None
    column_names: tuple[str, ...] = ()
    utilization_col: int | None = None
    transform_log: TransformLog = field(default_factory=TransformLog)

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        surr = np.asarray(self.surrogate, dtype=np.float64)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "surrogate", surr)
        if feats.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        n_obs, p = feats.shape
        if n_obs < 1 or p < 1:
            raise DataError("need at least one row and one feature column")
        if surr.shape != (n_obs,):
            raise DataError("surrogate length does not match feature rows")
        if not np.isfinite(feats).all():
            raise DataError("features contain missing or non-finite values")
        if not np.isfinite(surr).all():
            raise DataError("surrogate contains missing or non-finite values")
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.float64)
            object.__setattr__(self, "labels", lab)
            if lab.shape != (n_obs,):
                raise DataError("labels length does not match feature rows")
            observed = lab[~np.isnan(lab)]
            if not np.isin(observed, (0.0, 1.0)).all():
                raise DataError("label not binary")
        if not self.column_names:
            object.__setattr__(
                self, "column_names", tuple(f"x{j + 1}" for j in range(p))
            )
        elif len(self.column_names) != p:
            raise DataError("column_names length does not match feature count")
        else:
            object.__setattr__(self, "column_names", tuple(self.column_names))
        if self.utilization_col is not None and not (
            0 <= self.utilization_col < p
        ):
            raise DataError("utilization_col out of range")

    @property
    def n_obs(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def labeled_idx(self) -> np.ndarray:
        if self.labels is None:
            return np.array([], dtype=np.intp)
        return np.flatnonzero(~np.isnan(self.labels))

    @property
    def n_labeled(self) -> int:
        return len(self.labeled_idx)

    def labeled_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(y, surrogate, features) restricted to labeled rows."""
        idx = self.labeled_idx
        if idx.size == 0:
            raise DataError("dataset has no labeled rows")
        return self.labels[idx], self.surrogate[idx], self.features[idx]

    def replace(self, **kwargs) -> "Dataset":
        out = {
            "features": self.features,
            "surrogate": self.surrogate,
            "labels": self.labels,
            "column_names": self.column_names,
            "utilization_col": self.utilization_col,
            "transform_log": self.transform_log,
        }
        out.update(kwargs)
        return Dataset(**out)


def load_csv(path, surrogate_col: str, label_col: str | None = None,
             utilization_col: str | None = None) -> Dataset:
    """Read a UTF-8 comma-delimited file with a header row into a Dataset.

    The label column may contain empty cells (unlabeled rows); empty feature
    or surrogate cells are errors. All remaining columns become features in
    file order.
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file: no header row") from None
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise DataError(f"duplicate column names: {dupes}")
        if surrogate_col not in header:
            raise DataError(f"surrogate column {surrogate_col!r} not in header")
        if label_col is not None and label_col not in header:
            raise DataError(f"label column {label_col!r} not in header")
        if utilization_col is not None and utilization_col not in header:
            raise DataError(
                f"utilization column {utilization_col!r} not in header")

        s_pos = header.index(surrogate_col)
        y_pos = header.index(label_col) if label_col is not None else None
        feature_pos = [
            k for k in range(len(header)) if k != s_pos and k != y_pos
        ]
        feature_names = [header[k] for k in feature_pos]

        rows, surr, lab = [], [], []
        for i, record in enumerate(reader):
            if len(record) != len(header):
                raise DataError(
                    f"row {i}: expected {len(header)} cells, got {len(record)}")
            surr.append(_parse_cell(record[s_pos], i, header[s_pos]))
            if y_pos is not None:
                cell = record[y_pos].strip()
                if cell == "":
                    lab.append(math.nan)
                else:
                    val = _parse_cell(cell, i, header[y_pos])
                    if val not in (0.0, 1.0):
                        raise DataError(
                            f"label not binary at (row {i}, col "
                            f"{header[y_pos]!r}): {cell!r}")
                    lab.append(val)
            rows.append([
                _parse_cell(record[k], i, header[k]) for k in feature_pos
            ])

    if not rows:
        raise DataError("no data rows")
    util_idx = (
        feature_names.index(utilization_col)
        if utilization_col is not None else None
    )
    return Dataset(
        features=np.asarray(rows, dtype=np.float64),
        surrogate=np.asarray(surr, dtype=np.float64),
        labels=np.asarray(lab, dtype=np.float64) if y_pos is not None else None,
        column_names=tuple(feature_names),
        utilization_col=util_idx,
    )


def _parse_cell(cell: str, row: int, col: str) -> float:
    text = cell.strip()
    if text == "":
        raise DataError(f"missing value at (row {row}, col {col!r})")
    try:
        val = float(text)
    except ValueError:
        raise DataError(
            f"non-numeric cell at (row {row}, col {col!r}): {cell!r}"
        ) from None
    if not math.isfinite(val):
        raise DataError(f"non-finite cell at (row {row}, col {col!r})")
    return val


def save_csv(ds: Dataset, path, label_name: str = "y",
             surrogate_name: str = "s") -> None:
    """Write a Dataset back out in the load_csv schema."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        cols = list(ds.column_names)
        header = ([label_name] if ds.labels is not None else []) \
            + [surrogate_name] + cols
        writer.writerow(header)
        for i in range(ds.n_obs):
            row = []
            if ds.labels is not None:
                li = ds.labels[i]
                row.append("" if math.isnan(li) else repr(int(li)))
            row.append(repr(float(ds.surrogate[i])))
            row.extend(repr(float(v)) for v in ds.features[i])
            writer.writerow(row)


# ---------------------------------------------------------------------------
# transforms
#
# Every transform is expressed as a parameterized step; both the initial
# application and later replays run through _apply_step so the float
# operations are identical.
# ---------------------------------------------------------------------------

def _apply_step(features: np.ndarray, surrogate: np.ndarray, step: dict):
    kind = step["kind"]
    features = features.copy()
    surrogate = surrogate.copy()
    if kind == "log1p":
        for j in step["cols"]:
            col = features[:, j]
            if (col < 0).any():
                raise DataError(f"negative input cell in column {j}")
            features[:, j] = np.log1p(col)
        if step["surrogate"]:
            if (surrogate < 0).any():
                raise DataError("negative input cell in surrogate")
            surrogate = np.log1p(surrogate)
    elif kind == "orthogonalize":
        util = features[:, step["util_col"]].copy()
        for j, (a, b) in zip(step["cols"], step["coefs"]):
            features[:, j] = features[:, j] - a - b * util
    elif kind == "standardize":
        for j, m, s in zip(step["cols"], step["means"], step["scales"]):
            features[:, j] = (features[:, j] - m) / s
    else:
        raise DataError(f"unknown transform step kind {kind!r}")
    return features, surrogate


def apply_transform_log(ds: Dataset, log: TransformLog) -> Dataset:
    """Replay a recorded transform sequence on raw data."""
    feats, surr = ds.features, ds.surrogate
    for step in log.steps:
        feats, surr = _apply_step(feats, surr, step)
    return ds.replace(features=feats, surrogate=surr,
                      transform_log=TransformLog(ds.transform_log.steps
                                                 + log.steps))


def log1p_counts(ds: Dataset, cols=None, include_surrogate: bool = True
                 ) -> Dataset:
    """Replace x by ln(1+x) in the selected count columns.

    cols selects feature columns by index or name; None means all feature
    columns. The surrogate is transformed too when include_surrogate is set.
    """
    idx = _resolve_cols(ds, cols)
    step = {"kind": "log1p", "cols": idx, "surrogate": bool(include_surrogate)}
    feats, surr = _apply_step(ds.features, ds.surrogate, step)
    return ds.replace(features=feats, surrogate=surr,
                      transform_log=ds.transform_log.appended(step))


def orthogonalize_against_utilization(ds: Dataset) -> Dataset:
    """Residualize every other feature column on (1, utilization).

    The utilization column itself is kept unchanged; per-column regression
    coefficients (intercept, slope) go into the TransformLog so validation
    data can be residualized with the training fit.
    """
    if ds.utilization_col is None:
        raise DataError("utilization_col is not set")
    u = ds.features[:, ds.utilization_col]
    du = u - u.mean()
    denom = float(du @ du)
    if denom <= 0.0:
        raise DataError("utilization column is constant: singular fit")
    cols = [j for j in range(ds.p) if j != ds.utilization_col]
    coefs = []
    for j in cols:
        col = ds.features[:, j]
        slope = float(du @ col) / denom
        inter = float(col.mean() - slope * u.mean())
        coefs.append((inter, slope))
    step = {"kind": "orthogonalize", "util_col": int(ds.utilization_col),
            "cols": cols, "coefs": coefs}
    feats, surr = _apply_step(ds.features, ds.surrogate, step)
    return ds.replace(features=feats, surrogate=surr,
                      transform_log=ds.transform_log.appended(step))


def standardize(ds: Dataset, cols=None) -> Dataset:
    """Center selected feature columns to mean 0 and scale to unit sd.

    The sd uses divisor n_obs. Constant columns are an error. Means and
    scales are logged so coefficients can be mapped back to the input scale.
    """
    idx = _resolve_cols(ds, cols)
    means, scales = [], []
    for j in idx:
        col = ds.features[:, j]
        m = float(col.mean())
        s = float(np.sqrt(np.mean((col - m) ** 2)))
        if s <= 0.0:
            raise DataError(f"constant column {ds.column_names[j]!r} "
                            "cannot be standardized")
        means.append(m)
        scales.append(s)
    step = {"kind": "standardize", "cols": idx, "means": means,
            "scales": scales}
    feats, surr = _apply_step(ds.features, ds.surrogate, step)
    return ds.replace(features=feats, surrogate=surr,
                      transform_log=ds.transform_log.appended(step))


def unstandardize(ds: Dataset) -> Dataset:
    """Invert the most recent standardize step."""
    if not ds.transform_log.steps or ds.transform_log.steps[-1]["kind"] != "standardize":
        raise DataError("last transform is not standardize")
    step = ds.transform_log.steps[-1]
    feats = ds.features.copy()
    for j, m, s in zip(step["cols"], step["means"], step["scales"]):
        feats[:, j] = feats[:, j] * s + m
    return ds.replace(features=feats,
                      transform_log=TransformLog(ds.transform_log.steps[:-1]))


def coefficients_to_input_scale(beta: np.ndarray, intercept: float,
                                log: TransformLog) -> tuple[np.ndarray, float]:
    """Map coefficients fitted on standardized features back to input scale.

    Only standardize steps are invertible at the coefficient level; other
    steps must be replayed on the data instead.
    """
    beta = np.array(beta, dtype=np.float64)
    intercept = float(intercept)
    for step in reversed(log.steps):
        if step["kind"] != "standardize":
            continue
        for j, m, s in zip(step["cols"], step["means"], step["scales"]):
            intercept -= beta[j] * m / s
            beta[j] = beta[j] / s
    return beta, intercept


def _resolve_cols(ds: Dataset, cols) -> list[int]:
    if cols is None:
        return list(range(ds.p))
    out = []
    for c in cols:
        if isinstance(c, str):
            if c not in ds.column_names:
                raise DataError(f"unknown column {c!r}")
            out.append(ds.column_names.index(c))
        else:
            j = int(c)
            if not 0 <= j < ds.p:
                raise DataError(f"column index {j} out of range")
            out.append(j)
    return out
