"""Prior-adaptive semi-supervised (PASS) logistic estimator.

The feature coefficients are shrunk toward a data-chosen multiple of the
surrogate direction: with alpha the estimated direction and A its support,
the fit solves

    min over (zeta, gamma, rho, delta) of
    (1/n) sum_i loss(y_i, zeta + gamma*s_i + rho*(x_i'alpha) + x_i'delta)
    + lambda1 * (||delta_A||_1 + kappa * ||delta_{A^c}||_1)

and reports beta = delta + rho * alpha. This is a weighted-L1 logistic
problem on the augmented design [s, X@alpha, X] with the surrogate and
prior-score columns unpenalized. lambda1 and kappa are tuned by K-fold
cross-validated deviance on the labeled rows.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .baselines import CV_DEV_EXPLAINED_EXIT, CV_FIT_KW, CV_MIN_PATH, _clamped_logit
from .data import Dataset
from .metrics import FoldAssignment, auc, make_folds
from .solver import (
    GlmFit,
    PenaltySpec,
    fit_weighted_l1_logistic,
    lambda_grid,
    lambda_max,
    logistic_loss,
    sigmoid,
)
from .surrogate import AlphaFit

DEFAULT_KAPPA_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)
DEFAULT_N_LAMBDA1 = 30
DEFAULT_LAMBDA1_MIN_RATIO = 0.01


@dataclass
class PassFit:
    """Fitted PASS model with its reparametrized pieces."""

    zeta: float
    gamma: float
    rho: float
    delta: np.ndarray
    beta: np.ndarray
    alpha_used: AlphaFit
    lambda1: float
    kappa: float
    objective_value: float
    kkt_max_violation: float
    converged: bool
    degenerate_prior: bool = False
    cv_deviance: float | None = None

    def linear_scores(self, ds: Dataset) -> np.ndarray:
        return self.zeta + self.gamma * ds.surrogate + ds.features @ self.beta

    def to_dict(self) -> dict:
        return {
            "zeta": self.zeta,
            "gamma": self.gamma,
            "rho": self.rho,
            "delta": self.delta.tolist(),
            "beta": self.beta.tolist(),
            "alpha": self.alpha_used.alpha.tolist(),
            "lambda1": self.lambda1,
            "kappa": self.kappa,
            "diagnostics": {
                "objective_value": self.objective_value,
                "kkt_max_violation": self.kkt_max_violation,
                "converged": self.converged,
                "degenerate_prior": self.degenerate_prior,
                "cv_deviance": self.cv_deviance,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def build_augmented_design(X: np.ndarray, s: np.ndarray,
                           alpha_hat: np.ndarray) -> np.ndarray:
    """n x (p+2) design [surrogate, prior score X@alpha, features].

    The intercept is left to the solver; column order is fixed.
    """
    X = np.asarray(X, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    alpha_hat = np.asarray(alpha_hat, dtype=np.float64)
    if alpha_hat.shape != (X.shape[1],):
        raise ValueError("alpha_hat length does not match feature count")
    if s.shape != (X.shape[0],):
        raise ValueError("surrogate length does not match feature rows")
    return np.column_stack([s, X @ alpha_hat, X])


def _penalty_weights(p: int, support: np.ndarray, kappa: float) -> np.ndarray:
    w = np.full(p + 2, kappa)
    w[0] = 0.0  # surrogate coefficient
    w[1] = 0.0  # prior-score coefficient
    w[2 + np.asarray(support, dtype=np.intp)] = 1.0
    return w


def _degenerate_weights(p: int) -> np.ndarray:
    # empty support: plain supervised design [s, X], surrogate unpenalized
    return np.r_[0.0, np.ones(p)]


def fit_pass(ds: Dataset, alpha_fit: AlphaFit, lambda1: float,
             kappa: float) -> PassFit:
    """PASS fit on the labeled rows at a fixed (lambda1, kappa).

    With an empty surrogate support the prior carries no information: the
    fit falls back to a supervised L1 fit (penalty level kappa*lambda1 on
    every feature) with rho fixed at 0, and a warning is attached.
    """
    if lambda1 < 0:
        raise ValueError("lambda1 must be >= 0")
    if not kappa > 0:
        raise ValueError("kappa must be > 0")
    y, s, X = ds.labeled_arrays()
    fit, degenerate = _fit_pass_arrays(y, s, X, alpha_fit, lambda1, kappa)
    return _package(fit, alpha_fit, lambda1, kappa, degenerate)


def _fit_pass_arrays(y, s, X, alpha_fit, lambda1, kappa, coef_init=None,
                     intercept_init=0.0, xsq=None, design=None):
    p = X.shape[1]
    if alpha_fit.is_null:
        design = np.column_stack([s, X]) if design is None else design
        pen = PenaltySpec(lam=lambda1, weights=kappa * _degenerate_weights(p))
        fit = fit_weighted_l1_logistic(design, y, pen, coef_init=coef_init,
                                       intercept_init=intercept_init, xsq=xsq)
        return fit, True
    design = build_augmented_design(X, s, alpha_fit.alpha) \
        if design is None else design
    pen = PenaltySpec(lam=lambda1,
                      weights=_penalty_weights(p, alpha_fit.support, kappa))
    fit = fit_weighted_l1_logistic(design, y, pen, coef_init=coef_init,
                                   intercept_init=intercept_init, xsq=xsq)
    return fit, False


def _package(fit: GlmFit, alpha_fit: AlphaFit, lambda1: float, kappa: float,
             degenerate: bool, cv_deviance: float | None = None) -> PassFit:
    if degenerate:
        warnings.warn("surrogate support is empty; PASS degrades to a "
                      "supervised L1 fit with rho = 0")
        gamma = float(fit.coefficients[0])
        delta = fit.coefficients[1:].copy()
        rho = 0.0
    else:
        gamma = float(fit.coefficients[0])
        rho = float(fit.coefficients[1])
        delta = fit.coefficients[2:].copy()
    beta = delta + rho * alpha_fit.alpha
    return PassFit(
        zeta=float(fit.intercept),
        gamma=gamma,
        rho=rho,
        delta=delta,
        beta=beta,
        alpha_used=alpha_fit,
        lambda1=float(lambda1),
        kappa=float(kappa),
        objective_value=fit.objective_value,
        kkt_max_violation=fit.kkt_max_violation,
        converged=fit.converged,
        degenerate_prior=degenerate,
        cv_deviance=cv_deviance,
    )


def tune_pass(ds: Dataset, alpha_fit: AlphaFit,
              lambda1_grid=None,
              kappa_grid=DEFAULT_KAPPA_GRID,
              n_folds: int = 10,
              seed: int = 0,
              folds: FoldAssignment | None = None,
              selection: str = "deviance",
              n_lambda1: int = DEFAULT_N_LAMBDA1,
              lambda1_min_ratio: float = DEFAULT_LAMBDA1_MIN_RATIO) -> PassFit:
    """Cross-validated PASS fit on the labeled rows.

    For each kappa a geometric lambda1 grid is anchored at that penalty
    pattern's lambda_max (unless an explicit lambda1_grid is given). The
    (lambda1, kappa) pair minimizing pooled out-of-fold deviance is refit on
    all labeled rows; exact ties break to the smallest lambda1, then the
    smallest kappa. selection='auc' maximizes pooled out-of-fold AUC
    instead.
    """
    if selection not in ("deviance", "auc"):
        raise ValueError("selection must be 'deviance' or 'auc'")
    kappa_grid = tuple(float(k) for k in kappa_grid)
    if not kappa_grid:
        raise ValueError("kappa grid is empty")
    if lambda1_grid is not None:
        lambda1_grid = np.asarray(lambda1_grid, dtype=np.float64)
        if lambda1_grid.size == 0:
            raise ValueError("lambda1 grid is empty")

    y, s, X = ds.labeled_arrays()
    n = len(y)
    if n < 2 * n_folds:
        raise ValueError(f"need at least {2 * n_folds} labeled rows for "
                         f"{n_folds}-fold tuning")
    if folds is None:
        folds = make_folds(y, n_folds, seed)
    if len(np.unique(y)) < 2:
        raise ValueError("labeled data has a single class")

    design_full = _design_for(y, s, X, alpha_fit)
    p = X.shape[1]

    # out-of-fold linear scores per grid point, then pooled selection
    results = []  # (criterion_value, lambda1, kappa)
    for kappa in kappa_grid:
        weights = (kappa * _degenerate_weights(p) if alpha_fit.is_null
                   else _penalty_weights(p, alpha_fit.support, kappa))
        if lambda1_grid is None:
            lmax = lambda_max(design_full, y, weights, "logistic")
            lams = lambda_grid(lmax, n_lambda1, lambda1_min_ratio)
        else:
            lams = np.sort(lambda1_grid)[::-1]
        oof = np.full((len(lams), n), np.nan)
        for k in range(folds.n_folds):
            tr, te = folds.split(k)
            d_tr = design_full[tr]
            xsq = d_tr * d_tr
            null_loss = float(np.mean(logistic_loss(
                y[tr], np.full(len(tr), _clamped_logit(y[tr].mean())))))
            coef = None
            intercept = 0.0
            for li, lam in enumerate(lams):
                pen = PenaltySpec(lam=float(lam), weights=weights)
                fit = fit_weighted_l1_logistic(
                    d_tr, y[tr], pen, coef_init=coef,
                    intercept_init=intercept, xsq=xsq, **CV_FIT_KW)
                coef, intercept = fit.coefficients, fit.intercept
                oof[li, te] = fit.intercept + design_full[te] @ fit.coefficients
                if li + 1 >= CV_MIN_PATH and \
                        fit.loss_value < (1.0 - CV_DEV_EXPLAINED_EXIT) * null_loss:
                    break
        for li, lam in enumerate(lams):
            if np.isnan(oof[li]).any():
                continue
            if selection == "deviance":
                crit = float(np.mean(logistic_loss(y, oof[li])))
            else:
                crit = -auc(oof[li], y)
            results.append((crit, float(lam), kappa))

    best_crit = min(r[0] for r in results)
    ties = [r for r in results if r[0] == best_crit]
    _, lam_star, kappa_star = min(ties, key=lambda r: (r[1], r[2]))

    fit, degenerate = _fit_pass_arrays(y, s, X, alpha_fit, lam_star,
                                       kappa_star, design=design_full)
    return _package(fit, alpha_fit, lam_star, kappa_star, degenerate,
                    cv_deviance=best_crit if selection == "deviance" else None)


def _design_for(y, s, X, alpha_fit):
    if alpha_fit.is_null:
        return np.column_stack([s, X])
    return build_augmented_design(X, s, alpha_fit.alpha)


def predict_prob(fit, s, x) -> float:
    """P(Y=1) for one observation: sigmoid(zeta + gamma*s + x'beta).

    Accepts any fitted bundle with zeta/beta and optional gamma (absent for
    label-free direction fits, which carry no surrogate term).
    """
    x = np.asarray(x, dtype=np.float64)
    beta = np.asarray(fit.beta, dtype=np.float64)
    if x.shape != beta.shape:
        raise ValueError("feature vector length does not match beta")
    eta = fit.zeta + float(x @ beta)
    gamma = getattr(fit, "gamma", None)
    if gamma is not None:
        eta += gamma * float(s)
    return float(sigmoid(eta))
