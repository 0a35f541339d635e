"""Weighted-L1 penalized GLM solver (linear and logistic losses).

The solver minimizes

    (1/n) sum_i loss(y_i, b + x_i'c) + lam * sum_j w_j |c_j|

with per-coordinate penalty weights w_j in [0, +inf]: weight 0 leaves a
coordinate unpenalized, weight +inf pins it to zero. The linear loss is the
half squared error (y - eta)^2 / 2, so the gradient of the smooth part is
X'(eta - y)/n for both losses and a single KKT certificate applies.

Logistic fits run iteratively reweighted least squares with an inner cyclic
coordinate descent on the working quadratic. Linear fits run coordinate
descent on the (centered) Gram matrix. Every fit reports its maximum KKT
violation; fits keep iterating past plain coefficient-change convergence
until the certificate is below target or iteration caps are hit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

# Engineering defaults; the tolerances are surfaced here rather than buried
# in call sites so experiment configs can override them in one place.
ETA_CAP = 30.0
WORKING_WEIGHT_FLOOR = 1e-5
INNER_TOL = 1e-7
OUTER_TOL = 1e-6
MAX_OUTER = 100
MAX_TOTAL_SWEEPS = 10_000
KKT_TARGET = 2e-7


class SolverError(ValueError):
    """Raised on invalid solver inputs."""


@dataclass(frozen=True)
class PenaltySpec:
    """Global penalty level plus per-coordinate weights.

    weights entries lie in [0, +inf]; 0 marks unpenalized coordinates and
    +inf marks coordinates excluded from the model (pinned to 0).
    """

    lam: float
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if not np.isfinite(self.lam) or self.lam < 0:
            raise SolverError(f"lam must be finite and >= 0, got {self.lam}")
        if np.isnan(w).any():
            raise SolverError("penalty weights contain NaN")
        if (w < 0).any():
            raise SolverError("penalty weights must be nonnegative")

    @property
    def excluded(self) -> np.ndarray:
        return np.isinf(self.weights)


@dataclass
class GlmFit:
    """Result of a penalized GLM fit."""

    coefficients: np.ndarray
    intercept: float
    loss_value: float
    objective_value: float
    n_iterations: int
    converged: bool
    kkt_max_violation: float
    fit_intercept: bool = True
    eta_clamped: bool = False
    loss_kind: str = "linear"

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + X @ self.coefficients

    def to_dict(self) -> dict:
        return {
            "coefficients": self.coefficients.tolist(),
            "intercept": self.intercept,
            "loss_value": self.loss_value,
            "objective_value": self.objective_value,
            "n_iterations": self.n_iterations,
            "converged": self.converged,
            "kkt_max_violation": self.kkt_max_violation,
            "fit_intercept": self.fit_intercept,
            "eta_clamped": self.eta_clamped,
            "loss_kind": self.loss_kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GlmFit":
        d = dict(d)
        d["coefficients"] = np.asarray(d["coefficients"], dtype=np.float64)
        return cls(**d)


def sigmoid(eta):
    """Overflow-safe logistic function e^t / (1 + e^t)."""
    eta = np.asarray(eta, dtype=np.float64)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def logistic_loss(y, eta):
    """Negative Bernoulli log-likelihood -y*eta + log(1 + e^eta).

    Stable for |eta| large: computed as max(eta, 0) - y*eta + log1p(e^-|eta|).
    Accepts fractional y in [0, 1].
    """
    y = np.asarray(y, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    out = np.maximum(eta, 0.0) - y * eta + np.log1p(np.exp(-np.abs(eta)))
    return out if out.ndim else float(out)


def _penalty_value(coef: np.ndarray, penalty: PenaltySpec) -> float:
    w = penalty.weights
    finite = ~np.isinf(w)
    return penalty.lam * float(np.sum(w[finite] * np.abs(coef[finite])))


def _validate_design(X: np.ndarray, y: np.ndarray, penalty: PenaltySpec):
    if X.ndim != 2:
        raise SolverError("design matrix must be 2-D")
    n, p = X.shape
    if n == 0:
        raise SolverError("design matrix has zero rows")
    if y.shape != (n,):
        raise SolverError(f"response length {y.shape} does not match {n} rows")
    if not np.isfinite(X).all():
        raise SolverError("design matrix contains non-finite entries")
    if not np.isfinite(y).all():
        raise SolverError("response contains non-finite entries")
    if penalty.weights.shape != (p,):
        raise SolverError(
            f"penalty weights length {penalty.weights.shape[0]} != design width {p}"
        )


def fit_weighted_l1_linear(
    X: np.ndarray,
    y: np.ndarray,
    penalty: PenaltySpec,
    fit_intercept: bool = True,
    coef_init: np.ndarray | None = None,
    tol: float = INNER_TOL,
    max_sweeps: int = MAX_TOTAL_SWEEPS,
    gram: np.ndarray | None = None,
    xty: np.ndarray | None = None,
) -> GlmFit:
    """Penalized least squares via coordinate descent on the Gram matrix.

    Minimizes (1/(2n)) ||y - b - Xc||^2 + lam * sum_j w_j |c_j|. When
    fit_intercept is set the problem is solved on centered data and the
    intercept recovered as mean(y) - mean(X) @ c. Precomputed (gram, xty)
    of the centered problem may be passed to amortize path fits.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _validate_design(X, y, penalty)
    n, p = X.shape

    if gram is None or xty is None:
        gram, xty, x_mean, y_mean = _linear_gram(X, y, fit_intercept)
    else:
        x_mean = X.mean(axis=0) if fit_intercept else np.zeros(p)
        y_mean = float(y.mean()) if fit_intercept else 0.0

    coef = np.zeros(p) if coef_init is None else np.array(coef_init, dtype=np.float64)
    excluded = penalty.excluded
    coef[excluded] = 0.0
    weights = np.where(excluded, 0.0, penalty.weights)

    total_sweeps = 0
    converged = False
    while total_sweeps < max_sweeps:
        budget = min(max_sweeps - total_sweeps, 200)
        sweeps, delta = _kernels.linear_cd_gram(
            gram, xty, coef, penalty.lam, weights, excluded, tol, budget
        )
        total_sweeps += sweeps
        if delta > tol:
            continue
        grad = gram @ coef - xty
        viol = _kkt_violation(grad, coef, penalty, grad_intercept=0.0,
                              fit_intercept=False)
        converged = True
        if viol <= max(KKT_TARGET, tol):
            break
        # certificate not yet tight: keep sweeping at a finer tolerance
        tol = tol / 10.0
        if tol < 1e-14:
            break

    intercept = y_mean - float(x_mean @ coef) if fit_intercept else 0.0
    resid = y - intercept - X @ coef
    loss = float(resid @ resid) / (2.0 * n)
    fit = GlmFit(
        coefficients=coef,
        intercept=intercept,
        loss_value=loss,
        objective_value=loss + _penalty_value(coef, penalty),
        n_iterations=total_sweeps,
        converged=converged,
        kkt_max_violation=0.0,
        fit_intercept=fit_intercept,
        loss_kind="linear",
    )
    fit.kkt_max_violation = kkt_check(fit, X, y, penalty, "linear")
    return fit


def _linear_gram(X, y, fit_intercept):
    n = X.shape[0]
    if fit_intercept:
        x_mean = X.mean(axis=0)
        y_mean = float(y.mean())
        Xc = X - x_mean
        yc = y - y_mean
    else:
        x_mean = np.zeros(X.shape[1])
        y_mean = 0.0
        Xc, yc = X, y
    gram = (Xc.T @ Xc) / n
    xty = (Xc.T @ yc) / n
    return gram, xty, x_mean, y_mean


def fit_weighted_l1_logistic(
    X: np.ndarray,
    y: np.ndarray,
    penalty: PenaltySpec,
    fit_intercept: bool = True,
    coef_init: np.ndarray | None = None,
    intercept_init: float = 0.0,
    allow_fractional: bool = False,
    inner_tol: float = INNER_TOL,
    outer_tol: float = OUTER_TOL,
    max_outer: int = MAX_OUTER,
    max_total_sweeps: int = MAX_TOTAL_SWEEPS,
    xsq: np.ndarray | None = None,
    kkt_refine: bool = True,
) -> GlmFit:
    """Penalized logistic regression via IRLS + inner coordinate descent.

    Minimizes (1/n) sum_i loss(y_i, b + x_i'c) + lam * sum_j w_j |c_j| with
    loss(y, eta) = -y*eta + log(1 + e^eta). Labels must be 0/1 unless
    allow_fractional is set, in which case any y in [0, 1] is accepted.

    Perfect separation is guarded by capping the linear predictor at
    |eta| <= ETA_CAP inside the working response; a fit that hits the cap is
    flagged eta_clamped (and converges to predictors at the cap) rather than
    failing.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _validate_design(X, y, penalty)
    if allow_fractional:
        if (y < 0).any() or (y > 1).any():
            raise SolverError("fractional labels must lie in [0, 1]")
    elif not np.isin(y, (0.0, 1.0)).all():
        raise SolverError("labels must be 0 or 1")

    n, p = X.shape
    coef = np.zeros(p) if coef_init is None else np.array(coef_init, dtype=np.float64)
    excluded = penalty.excluded
    coef[excluded] = 0.0
    weights = np.where(excluded, 0.0, penalty.weights)
    b = float(intercept_init) if fit_intercept else 0.0

    if xsq is None:
        xsq = X * X

    b, n_outer, total_sweeps, converged, clamped = _kernels.irls_logistic(
        X, xsq, y, penalty.lam, weights, excluded, fit_intercept, coef, b,
        ETA_CAP, WORKING_WEIGHT_FLOOR, inner_tol, outer_tol, max_outer,
        max_total_sweeps, KKT_TARGET if kkt_refine else np.inf,
    )

    if fit_intercept and not coef.any() and not (weights[~excluded] == 0).any():
        # model reduced to intercept-only: its optimum is analytic, and the
        # working-weight floor would otherwise creep toward it arbitrarily
        # slowly in the saturated regime
        m = min(max(float(y.mean()), 0.0), 1.0)
        if m in (0.0, 1.0):
            b = ETA_CAP if m == 1.0 else -ETA_CAP
            clamped = True
            converged = True
        else:
            logit = float(np.log(m / (1.0 - m)))
            if abs(logit) > ETA_CAP:
                clamped = True
                converged = True
            b = float(np.clip(logit, -ETA_CAP, ETA_CAP))

    eta = b + X @ coef
    loss = float(np.mean(logistic_loss(y, np.clip(eta, -ETA_CAP, ETA_CAP))))
    fit = GlmFit(
        coefficients=coef,
        intercept=b,
        loss_value=loss,
        objective_value=loss + _penalty_value(coef, penalty),
        n_iterations=n_outer,
        converged=bool(converged),
        kkt_max_violation=0.0,
        fit_intercept=fit_intercept,
        eta_clamped=bool(clamped),
        loss_kind="logistic",
    )
    fit.kkt_max_violation = kkt_check(fit, X, y, penalty, "logistic")
    return fit


def _kkt_violation(grad, coef, penalty, grad_intercept, fit_intercept):
    lam, w = penalty.lam, penalty.weights
    finite = ~np.isinf(w)
    g, c, wf = grad[finite], coef[finite], w[finite]
    nonzero = c != 0
    viol_zero = np.maximum(np.abs(g[~nonzero]) - lam * wf[~nonzero], 0.0)
    viol_active = np.abs(g[nonzero] + lam * wf[nonzero] * np.sign(c[nonzero]))
    worst = 0.0
    if viol_zero.size:
        worst = max(worst, float(viol_zero.max()))
    if viol_active.size:
        worst = max(worst, float(viol_active.max()))
    if fit_intercept:
        worst = max(worst, abs(grad_intercept))
    return worst


def kkt_check(fit: GlmFit, X, y, penalty: PenaltySpec, loss_kind: str) -> float:
    """Maximum violation of the subgradient optimality conditions.

    For zero coordinates the violation is max(|g_j| - lam*w_j, 0); for active
    coordinates it is |g_j + lam*w_j*sign(c_j)|; g is the gradient of the
    (1/n)-scaled smooth loss. The intercept enters as an unpenalized
    coordinate when it was fitted. Coordinates with infinite weight are
    pinned and carry no condition.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    eta = fit.linear_predictor(X)
    n = len(y)
    if loss_kind == "linear":
        resid = eta - y
        grad = X.T @ resid / n
        grad_b = float(resid.mean())
    elif loss_kind == "logistic":
        pi = sigmoid(np.clip(eta, -ETA_CAP, ETA_CAP))
        resid = pi - y
        grad = X.T @ resid / n
        grad_b = float(resid.mean())
    else:
        raise SolverError(f"unknown loss kind {loss_kind!r}")
    return _kkt_violation(grad, fit.coefficients, penalty, grad_b,
                          fit.fit_intercept)


def null_model_fit(X, y, weights, loss_kind, fit_intercept=True,
                   allow_fractional=False) -> GlmFit:
    """Fit with every penalized coordinate pinned to zero.

    Unpenalized coordinates (weight exactly 0) and the intercept are fitted
    freely; the result anchors lambda_max for a regularization path.
    """
    weights = np.asarray(weights, dtype=np.float64)
    pinned = np.where(weights == 0.0, 0.0, np.inf)
    null_pen = PenaltySpec(lam=0.0, weights=pinned)
    if loss_kind == "linear":
        return fit_weighted_l1_linear(X, y, null_pen, fit_intercept=fit_intercept)
    return fit_weighted_l1_logistic(X, y, null_pen, fit_intercept=fit_intercept,
                                    allow_fractional=allow_fractional)


def lambda_max(X, y, weights, loss_kind, fit_intercept=True,
               allow_fractional=False) -> float:
    """Smallest lam for which every penalized coordinate is zero.

    Computed from the smooth-loss gradient at the null model (free
    coordinates fitted, penalized ones at zero): max_j |g_j| / w_j over
    penalized coordinates with finite weight.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    null = null_model_fit(X, y, weights, loss_kind, fit_intercept,
                          allow_fractional)
    eta = null.linear_predictor(X)
    if loss_kind == "linear":
        resid = eta - y
    else:
        resid = sigmoid(np.clip(eta, -ETA_CAP, ETA_CAP)) - y
    grad = X.T @ resid / len(y)
    pen = np.isfinite(weights) & (weights > 0.0)
    if not pen.any():
        return 0.0
    lmax = float(np.max(np.abs(grad[pen]) / weights[pen]))
    # nudge up so the top-of-grid fit lands exactly at the all-zero solution
    return lmax * (1.0 + 1e-9) if lmax > 0 else 1e-12


def lambda_grid(lmax: float, n_lambda: int, lambda_min_ratio: float) -> np.ndarray:
    if n_lambda < 2:
        raise SolverError("n_lambda must be >= 2")
    return np.geomspace(lmax, lmax * lambda_min_ratio, n_lambda)


def regularization_path(
    X,
    y,
    weights,
    loss_kind: str,
    n_lambda: int = 100,
    lambda_min_ratio: float = 1e-4,
    fit_intercept: bool = True,
    allow_fractional: bool = False,
    lam_values: np.ndarray | None = None,
) -> list[tuple[float, GlmFit]]:
    """Warm-started fits along a geometric lambda grid (descending).

    The grid runs from lambda_max (all penalized coordinates zero) down to
    lambda_max * lambda_min_ratio; an explicit lam_values overrides it.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if lam_values is None:
        lmax = lambda_max(X, y, weights, loss_kind, fit_intercept,
                          allow_fractional)
        lam_values = lambda_grid(lmax, n_lambda, lambda_min_ratio)

    out: list[tuple[float, GlmFit]] = []
    coef = None
    intercept = 0.0
    gram = xty = xsq = None
    if loss_kind == "linear":
        gram, xty, _, _ = _linear_gram(X, y, fit_intercept)
    else:
        xsq = X * X
    for lam in lam_values:
        pen = PenaltySpec(lam=float(lam), weights=weights)
        if loss_kind == "linear":
            fit = fit_weighted_l1_linear(X, y, pen, fit_intercept,
                                         coef_init=coef, gram=gram, xty=xty)
        else:
            fit = fit_weighted_l1_logistic(X, y, pen, fit_intercept,
                                           coef_init=coef,
                                           intercept_init=intercept,
                                           allow_fractional=allow_fractional,
                                           xsq=xsq)
            intercept = fit.intercept
        coef = fit.coefficients
        out.append((float(lam), fit))
    return out


def newton_logistic(X, y, fit_intercept: bool = True, tol: float = 1e-10,
                    max_iter: int = 100) -> GlmFit:
    """Unpenalized logistic fit by damped Newton (dense, low-dimensional).

    Uses the same |eta| <= ETA_CAP separation clamp as the penalized solver.
    Intended for small designs (a handful of columns).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if fit_intercept:
        Xd = np.hstack([np.ones((n, 1)), X])
    else:
        Xd = X
    theta = np.zeros(Xd.shape[1])
    clamped = False
    loss_old = float(np.mean(logistic_loss(y, Xd @ theta)))
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        eta = Xd @ theta
        if (np.abs(eta) > ETA_CAP).any():
            clamped = True
        eta_used = np.clip(eta, -ETA_CAP, ETA_CAP)
        pi = sigmoid(eta_used)
        grad = Xd.T @ (pi - y) / n
        v = np.maximum(pi * (1.0 - pi), WORKING_WEIGHT_FLOOR)
        hess = (Xd * (v / n)[:, None]).T @ Xd
        hess[np.diag_indices_from(hess)] += 1e-12
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        for _ in range(40):
            cand = theta - t * step
            loss_new = float(np.mean(logistic_loss(
                y, np.clip(Xd @ cand, -ETA_CAP, ETA_CAP))))
            if loss_new <= loss_old + 1e-14:
                break
            t *= 0.5
        theta = theta - t * step
        if float(np.max(np.abs(t * step))) < tol:
            loss_old = loss_new
            break
        loss_old = loss_new

    if fit_intercept:
        intercept, coef = float(theta[0]), theta[1:]
    else:
        intercept, coef = 0.0, theta
    pen = PenaltySpec(lam=0.0, weights=np.zeros(p))
    fit = GlmFit(
        coefficients=coef,
        intercept=intercept,
        loss_value=loss_old,
        objective_value=loss_old,
        n_iterations=n_iter,
        converged=True,
        kkt_max_violation=0.0,
        fit_intercept=fit_intercept,
        eta_clamped=clamped,
        loss_kind="logistic",
    )
    fit.kkt_max_violation = kkt_check(fit, X, y, pen, "logistic")
    return fit
