"""Evaluation metrics, cross-validation folds, and replicate aggregation."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .data import Dataset
from .simgen import TruthOracle
from .solver import logistic_loss, sigmoid

METRIC_NAMES = ("auc", "er", "mse_p", "bss")


@dataclass
class MetricsReport:
    """Metric values for one evaluation, or aggregates across replicates.

    er and mse_p require a truth oracle; bss requires labels. For an
    aggregated report the main fields hold means, se holds the standard
    errors, and replicates holds the per-replicate values.
    """

    auc: float | None = None
    er: float | None = None
    mse_p: float | None = None
    bss: float | None = None
    n_eval: int = 0
    n_replicates: int = 1
    se: dict = field(default_factory=dict)
    replicates: dict = field(default_factory=dict)

    def available(self) -> tuple[str, ...]:
        return tuple(m for m in METRIC_NAMES if getattr(self, m) is not None)

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "er": self.er,
            "mse_p": self.mse_p,
            "bss": self.bss,
            "n_eval": self.n_eval,
            "n_replicates": self.n_replicates,
            "se": self.se,
            "replicates": self.replicates,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of labeled rows into cross-validation folds."""

    fold_of: np.ndarray
    n_folds: int
    seed: int
    stratified: bool

    def __post_init__(self):
        object.__setattr__(self, "fold_of",
                           np.asarray(self.fold_of, dtype=np.intp))
        counts = np.bincount(self.fold_of, minlength=self.n_folds)
        if (counts == 0).any():
            raise ValueError("every fold must be nonempty")

    def split(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(train_idx, test_idx) for fold k."""
        test = self.fold_of == k
        return np.flatnonzero(~test), np.flatnonzero(test)


def make_folds(labels: np.ndarray, n_folds: int, seed: int,
               stratified: bool = True) -> FoldAssignment:
    """Seeded fold assignment, stratified by label by default.

    Stratification deals each class round-robin across folds (per-fold class
    counts within 1 of proportional). If some class has fewer members than
    n_folds the assignment falls back to unstratified with a warning.
    """
    labels = np.asarray(labels, dtype=np.float64)
    n = len(labels)
    if n < n_folds:
        raise ValueError(f"cannot make {n_folds} folds from {n} rows")
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    fold_of = np.empty(n, dtype=np.intp)

    if stratified:
        classes, counts = np.unique(labels, return_counts=True)
        if counts.min() < n_folds:
            warnings.warn("a class has fewer members than folds; "
                          "falling back to unstratified assignment")
            stratified = False

    if stratified:
        offset = 0
        for cls in classes:
            members = np.flatnonzero(labels == cls)
            members = members[rng.permutation(len(members))]
            for i, row in enumerate(members):
                fold_of[row] = (offset + i) % n_folds
            offset += len(members)
    else:
        order = rng.permutation(n)
        for i, row in enumerate(order):
            fold_of[row] = i % n_folds

    return FoldAssignment(fold_of=fold_of, n_folds=n_folds, seed=seed,
                          stratified=stratified)


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability of concordance with ties counted 1/2 (rank statistic)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(scores, method="average")
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _scores_for(fit, ds: Dataset) -> np.ndarray:
    """Linear score of a fitted model on every row of ds.

    Operation order matches TruthOracle.linear_predictor so a fit holding
    the true coefficients reproduces the true scores bit for bit.
    """
    gamma = getattr(fit, "gamma", None)
    beta = np.asarray(fit.beta)
    if gamma is None:
        return fit.zeta + ds.features @ beta
    return fit.zeta + gamma * ds.surrogate + ds.features @ beta


def excess_risk(fit, test: Dataset, oracle: TruthOracle) -> float:
    """Mean logistic loss of the fit minus that of the true score."""
    if oracle is None:
        raise ValueError("excess risk needs a truth oracle")
    if test.labels is None or np.isnan(test.labels).any():
        raise ValueError("excess risk needs fully labeled test data")
    eta_hat = _scores_for(fit, test)
    eta_true = oracle.linear_predictor(test.surrogate, test.features)
    y = test.labels
    return float(np.mean(logistic_loss(y, eta_hat) - logistic_loss(y, eta_true)))


def mse_p(fit, test: Dataset, oracle: TruthOracle) -> float:
    """Mean squared difference between predicted and true probabilities."""
    if oracle is None:
        raise ValueError("probability MSE needs a truth oracle")
    p_hat = sigmoid(_scores_for(fit, test))
    p_true = sigmoid(oracle.linear_predictor(test.surrogate, test.features))
    return float(np.mean((p_hat - p_true) ** 2))


def bss(fit, validation: Dataset) -> float:
    """Brier skill score against the constant mean-label forecaster.

    1 - mean[(Y - p_hat)^2] / mean[(Y - mean(Y))^2] over the validation rows.
    """
    if validation.labels is None:
        raise ValueError("BSS needs labeled validation data")
    idx = validation.labeled_idx
    y = validation.labels[idx]
    if y.min() == y.max():
        raise ValueError("BSS undefined on single-class validation data")
    p_hat = sigmoid(_scores_for(fit, validation))[idx]
    denom = float(np.mean((y - y.mean()) ** 2))
    return 1.0 - float(np.mean((y - p_hat) ** 2)) / denom


def evaluate(fit, test: Dataset, oracle: TruthOracle | None = None,
             with_bss: bool = False) -> MetricsReport:
    """AUC on the test labels, plus ER/MSE-P when the oracle is known."""
    idx = test.labeled_idx
    scores = _scores_for(fit, test)[idx]
    report = MetricsReport(n_eval=len(idx))
    report.auc = auc(scores, test.labels[idx])
    if oracle is not None:
        report.er = excess_risk(fit, test, oracle)
        report.mse_p = mse_p(fit, test, oracle)
    if with_bss:
        report.bss = bss(fit, test)
    return report


def aggregate_replicates(reports: list[MetricsReport]) -> MetricsReport:
    """Per-metric mean and standard error of the mean across replicates."""
    if not reports:
        raise ValueError("no reports to aggregate")
    avail = reports[0].available()
    for r in reports[1:]:
        if r.available() != avail:
            raise ValueError("inconsistent metric availability across "
                             "replicates")
    out = MetricsReport(n_eval=reports[0].n_eval,
                        n_replicates=len(reports))
    for m in avail:
        vals = np.array([getattr(r, m) for r in reports], dtype=np.float64)
        setattr(out, m, float(vals.mean()))
        out.replicates[m] = vals.tolist()
        if len(vals) > 1:
            out.se[m] = float(vals.std(ddof=1) / np.sqrt(len(vals)))
        else:
            out.se[m] = 0.0
    return out
