"""Benchmark estimators the PASS fit is compared against.

All supervised fits model the label on (1, surrogate, features) with the
surrogate coefficient unpenalized; cross-validated fits accept a shared
FoldAssignment so method comparisons are paired. The low-dimensional
semi-supervised fits (surrogate-prior and the label-free-direction variant)
use unpenalized Newton with the same separation clamp as the main solver.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .metrics import FoldAssignment, make_folds
from .solver import (
    ETA_CAP,
    PenaltySpec,
    fit_weighted_l1_logistic,
    lambda_grid,
    lambda_max,
    logistic_loss,
    newton_logistic,
    sigmoid,
)
from .surrogate import AlphaFit

METHOD_TAGS = ("lasso", "alasso", "ss_prior", "plasso1", "plasso2",
               "ulasso", "ss_ulasso", "pass")
DEFAULT_N_LAMBDA = 30
DEFAULT_LAMBDA_MIN_RATIO = 0.01
DEFAULT_MIXING_GRID = (0.0, 0.25, 0.5, 1.0, 2.0)

# fold fits only produce selection scores; they run at a looser tolerance
# than returned fits, which keep the full KKT-certified convergence
CV_FIT_KW = dict(inner_tol=1e-5, outer_tol=1e-4, max_outer=25,
                 kkt_refine=False)

# fold paths stop once the training fit explains this fraction of the null
# deviance (but never before CV_MIN_PATH points); deeper fits are overfit
# territory and never win CV selection
CV_DEV_EXPLAINED_EXIT = 0.97
CV_MIN_PATH = 10


@dataclass
class Coefficients:
    """Fitted parameter bundle on the (1, surrogate, features) scale.

    gamma is None for fits that never see the surrogate as a predictor.
    """

    zeta: float
    gamma: float | None
    beta: np.ndarray
    method_tag: str

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if not np.isfinite(self.beta).all():
            raise ValueError("beta contains non-finite entries")
        if self.method_tag not in METHOD_TAGS:
            raise ValueError(f"unknown method tag {self.method_tag!r}")

    def linear_scores(self, ds: Dataset) -> np.ndarray:
        eta = self.zeta + ds.features @ self.beta
        if self.gamma is not None:
            eta = eta + self.gamma * ds.surrogate
        return eta

    def to_dict(self) -> dict:
        return {"zeta": self.zeta, "gamma": self.gamma,
                "beta": self.beta.tolist(), "method_tag": self.method_tag}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "Coefficients":
        return cls(zeta=float(d["zeta"]),
                   gamma=None if d["gamma"] is None else float(d["gamma"]),
                   beta=np.asarray(d["beta"], dtype=np.float64),
                   method_tag=d["method_tag"])


def _supervised_design(ds: Dataset):
    y, s, X = ds.labeled_arrays()
    return y, np.column_stack([s, X])


def _cv_deviance_table(design, y, weights, folds: FoldAssignment,
                       n_lambda=DEFAULT_N_LAMBDA,
                       lambda_min_ratio=DEFAULT_LAMBDA_MIN_RATIO,
                       allow_fractional=False, y_fit=None):
    """Out-of-fold deviance along a lambda grid with paired folds.

    Models are trained on y_fit (defaults to y); deviance is always scored
    against y. Fold paths stop early once the training fit explains
    CV_DEV_EXPLAINED_EXIT of the null deviance; grid points no fold reached
    carry deviance +inf and cannot be selected.
    Returns (lams, dev) with lams descending.
    """
    if y_fit is None:
        y_fit = y
    lmax = lambda_max(design, y_fit, weights, "logistic",
                      allow_fractional=allow_fractional)
    lams = lambda_grid(lmax, n_lambda, lambda_min_ratio)
    n = len(y)
    oof = np.full((len(lams), n), np.nan)
    for k in range(folds.n_folds):
        tr, te = folds.split(k)
        d_tr = design[tr]
        xsq = d_tr * d_tr
        # explained deviance is measured above the label-entropy floor so
        # the exit also works for fractional labels
        floor = _entropy_floor(y_fit[tr])
        null_loss = float(np.mean(logistic_loss(
            y_fit[tr], np.full(len(tr), _clamped_logit(y_fit[tr].mean())))))
        coef, intercept = None, 0.0
        for li, lam in enumerate(lams):
            pen = PenaltySpec(lam=float(lam), weights=weights)
            fit = fit_weighted_l1_logistic(d_tr, y_fit[tr], pen,
                                           coef_init=coef,
                                           intercept_init=intercept,
                                           allow_fractional=allow_fractional,
                                           xsq=xsq, **CV_FIT_KW)
            coef, intercept = fit.coefficients, fit.intercept
            oof[li, te] = fit.intercept + design[te] @ fit.coefficients
            if li + 1 >= CV_MIN_PATH and fit.loss_value - floor < \
                    (1.0 - CV_DEV_EXPLAINED_EXIT) * (null_loss - floor):
                break
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        dev = np.array([
            np.inf if np.isnan(oof[li]).any()
            else float(np.mean(logistic_loss(y, oof[li])))
            for li in range(len(lams))
        ])
    return lams, dev


def _clamped_logit(m):
    m = min(max(float(m), 1e-12), 1.0 - 1e-12)
    t = np.log(m / (1.0 - m))
    return float(np.clip(t, -ETA_CAP, ETA_CAP))


def _entropy_floor(y) -> float:
    """Mean binary entropy of (possibly fractional) labels: the smallest
    achievable mean logistic loss on them."""
    y = np.asarray(y, dtype=np.float64)
    inner = (y > 0) & (y < 1)
    h = np.zeros_like(y)
    yi = y[inner]
    h[inner] = -yi * np.log(yi) - (1 - yi) * np.log(1 - yi)
    return float(h.mean())


def _cv_logistic(design, y, weights, folds: FoldAssignment,
                 n_lambda=DEFAULT_N_LAMBDA,
                 lambda_min_ratio=DEFAULT_LAMBDA_MIN_RATIO,
                 allow_fractional=False, y_fit=None):
    """CV-tuned weighted-L1 logistic fit.

    Ties in out-of-fold deviance break to the larger penalty. The returned
    fit is a strict full-data refit at the selected penalty.
    Returns (fit, lam, cv_deviance).
    """
    lams, dev = _cv_deviance_table(design, y, weights, folds, n_lambda,
                                   lambda_min_ratio, allow_fractional, y_fit)
    best = int(np.argmin(dev))  # first occurrence = largest lambda on ties
    pen = PenaltySpec(lam=float(lams[best]), weights=weights)
    fit = fit_weighted_l1_logistic(design, y if y_fit is None else y_fit, pen,
                                   allow_fractional=allow_fractional)
    return fit, float(lams[best]), float(dev[best])


def fit_lasso_supervised(ds: Dataset, n_folds: int = 10, seed: int = 0,
                         folds: FoldAssignment | None = None) -> Coefficients:
    """L1 logistic fit of the label on (1, surrogate, features).

    Only the feature coefficients are penalized; the penalty level is chosen
    by K-fold cross-validated deviance.
    """
    y, design = _supervised_design(ds)
    if len(y) < 20:
        raise ValueError("need at least 20 labeled rows")
    if folds is None:
        folds = make_folds(y, n_folds, seed)
    weights = np.r_[0.0, np.ones(ds.p)]
    fit, _, _ = _cv_logistic(design, y, weights, folds)
    return Coefficients(zeta=fit.intercept, gamma=float(fit.coefficients[0]),
                        beta=fit.coefficients[1:], method_tag="lasso")


def fit_alasso_supervised(ds: Dataset, nu: float = 1.0, n_folds: int = 10,
                          seed: int = 0,
                          folds: FoldAssignment | None = None) -> Coefficients:
    """Two-stage adaptive fit: CV L1 fit, then reweighted CV fit.

    Stage-two weights are |beta_init_j|^-nu with stage-one zeros excluded.
    An all-zero stage one falls back to the intercept+surrogate model.
    """
    y, design = _supervised_design(ds)
    if len(y) < 20:
        raise ValueError("need at least 20 labeled rows")
    if folds is None:
        folds = make_folds(y, n_folds, seed)
    weights = np.r_[0.0, np.ones(ds.p)]
    init, _, _ = _cv_logistic(design, y, weights, folds)
    beta_init = init.coefficients[1:]
    if not beta_init.any():
        warnings.warn("initial fit selected no features; falling back to "
                      "the intercept+surrogate model")
        fit = newton_logistic(design[:, :1], y)
        return Coefficients(zeta=fit.intercept,
                            gamma=float(fit.coefficients[0]),
                            beta=np.zeros(ds.p), method_tag="alasso")
    with np.errstate(divide="ignore"):
        w2 = np.r_[0.0, np.abs(beta_init) ** -float(nu)]
    fit, _, _ = _cv_logistic(design, y, w2, folds)
    return Coefficients(zeta=fit.intercept, gamma=float(fit.coefficients[0]),
                        beta=fit.coefficients[1:], method_tag="alasso")


def fit_ss_prior(ds: Dataset, alpha_fit: AlphaFit) -> Coefficients:
    """Three-parameter fit of the label on (1, surrogate, prior score).

    The prior score is x'alpha from the surrogate stage; the returned beta
    is the fitted scale times alpha, so its direction is alpha exactly.
    """
    if alpha_fit.is_null:
        raise ValueError("surrogate-prior fit undefined: alpha is all zero")
    y, s, X = ds.labeled_arrays()
    design = np.column_stack([s, X @ alpha_fit.alpha])
    fit = newton_logistic(design, y)
    rho = float(fit.coefficients[1])
    return Coefficients(zeta=fit.intercept, gamma=float(fit.coefficients[0]),
                        beta=rho * alpha_fit.alpha, method_tag="ss_prior")


def fit_plasso(ds: Dataset, alpha_fit: AlphaFit, variant: int,
               mixing_grid=DEFAULT_MIXING_GRID, n_folds: int = 10,
               seed: int = 0,
               folds: FoldAssignment | None = None) -> Coefficients:
    """Pseudo-label-augmented L1 fit (mixing prior predictions into the loss).

    Pseudo-labels for the labeled rows come from (variant 1) a logistic fit
    of the label on (1, surrogate, features) with the surrogate-support
    features unpenalized, CV-tuned, or (variant 2) the surrogate-prior fit's
    predicted probabilities. The combined objective

        (1/n) sum_i [loss(y_i, eta_i) + m * loss(yp_i, eta_i)] + lam ||beta||_1

    is minimized by an equivalent fractional-label fit; the mixing weight m
    and lam are selected jointly by CV deviance on the true labels.
    """
    if variant not in (1, 2):
        raise ValueError("variant must be 1 or 2")
    y, s, X = ds.labeled_arrays()
    design = np.column_stack([s, X])
    n = len(y)
    if folds is None:
        folds = make_folds(y, n_folds, seed)

    if variant == 1:
        support = alpha_fit.support
        if len(support) >= n:
            raise ValueError(
                "variant-1 pseudo-labels need an unpenalized fit on the "
                f"surrogate support, infeasible with |support|={len(support)}"
                f" >= n={n}")
        w = np.r_[0.0, np.ones(ds.p)]
        w[1 + support] = 0.0
        stage, _, _ = _cv_logistic(design, y, w, folds)
        eta_p = stage.intercept + design @ stage.coefficients
    else:
        prior = fit_ss_prior(ds, alpha_fit)
        eta_p = prior.zeta + prior.gamma * s + X @ prior.beta
    yp = sigmoid(np.clip(eta_p, -ETA_CAP, ETA_CAP))

    weights = np.r_[0.0, np.ones(ds.p)]
    best = None  # (dev, m, lam_frac, y_mix)
    for m in mixing_grid:
        m = float(m)
        if m < 0:
            raise ValueError("mixing weights must be >= 0")
        # (1+m)*[(1/n) sum loss(y_mix, eta) + lam/(1+m) ||beta||_1]
        y_mix = (y + m * yp) / (1.0 + m)
        lams, dev = _cv_deviance_table(design, y, weights, folds,
                                       allow_fractional=True, y_fit=y_mix)
        li = int(np.argmin(dev))
        cand = (float(dev[li]), m, float(lams[li]), y_mix)
        if best is None or cand[0] < best[0]:
            best = cand
    _, _, lam_frac, y_mix = best
    pen = PenaltySpec(lam=lam_frac, weights=weights)
    fit = fit_weighted_l1_logistic(design, y_mix, pen, allow_fractional=True)
    return Coefficients(zeta=fit.intercept, gamma=float(fit.coefficients[0]),
                        beta=fit.coefficients[1:],
                        method_tag=f"plasso{variant}")


def fit_ulasso(ds: Dataset, q_upper: float = 0.9, q_lower: float = 0.1,
               n_folds: int = 10, seed: int = 0) -> Coefficients:
    """Label-free direction fit from the extreme-surrogate subset.

    An indicator of surrogate above its upper quantile is regressed on the
    features over the rows whose surrogate is beyond either cutoff; the
    labels are never read and the surrogate is not a predictor (gamma absent).
    """
    s = ds.surrogate
    c_u = float(np.quantile(s, q_upper))
    c_l = float(np.quantile(s, q_lower))
    if c_u <= c_l:
        raise ValueError(f"degenerate quantiles: c_u={c_u} <= c_l={c_l}")
    keep = (s > c_u) | (s < c_l)
    pseudo = (s[keep] > c_u).astype(np.float64)
    if pseudo.min() == pseudo.max():
        raise ValueError("extreme-surrogate subset has a single class")
    X = ds.features[keep]
    folds = make_folds(pseudo, n_folds, seed)
    fit, _, _ = _cv_logistic(X, pseudo, np.ones(ds.p), folds)
    return Coefficients(zeta=fit.intercept, gamma=None,
                        beta=fit.coefficients, method_tag="ulasso")


def fit_ss_ulasso(ds: Dataset, ulasso_beta: np.ndarray) -> Coefficients:
    """Label fit on (1, surrogate, direction score) from a label-free beta.

    Analogous to the surrogate-prior fit with the label-free direction in
    place of alpha; returns beta proportional to the given direction.
    """
    ulasso_beta = np.asarray(ulasso_beta, dtype=np.float64)
    if not ulasso_beta.any():
        raise ValueError("label-free direction is all zero")
    y, s, X = ds.labeled_arrays()
    design = np.column_stack([s, X @ ulasso_beta])
    fit = newton_logistic(design, y)
    scale = float(fit.coefficients[1])
    return Coefficients(zeta=fit.intercept, gamma=float(fit.coefficients[0]),
                        beta=scale * ulasso_beta, method_tag="ss_ulasso")
