"""Surrogate-direction estimation from the full (mostly unlabeled) data.

The surrogate is regressed on the features by penalized least squares in two
stages: a plain L1 fit to get initial magnitudes, then an adaptive fit whose
per-coordinate weights are the reciprocal initial magnitudes (zero initial
coordinates are dropped outright). Both stages pick their penalty level by
BIC along a geometric grid, which is cheap and stable in the many-rows
regime this stage runs in.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .solver import GlmFit, regularization_path

ALPHA_PATH_LEN = 100
ALPHA_MIN_RATIO = 1e-4


@dataclass
class AlphaInit:
    """First-stage L1 least squares fit for the surrogate direction."""

    tau: float
    alpha: np.ndarray
    mu: float
    bic: float


@dataclass
class AlphaFit:
    """Adaptive-stage surrogate direction estimate.

    support is the set of nonzero coordinates of alpha; every coordinate
    that was zero in alpha_init is zero here as well (infinite weight).
    """

    alpha: np.ndarray
    tau: float
    alpha_init: np.ndarray
    support: np.ndarray
    mu_init: float
    mu: float
    bic_init: float
    bic: float
    nu: float = 1.0

    @property
    def is_null(self) -> bool:
        return self.support.size == 0

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha.tolist(),
            "tau": self.tau,
            "alpha_init": self.alpha_init.tolist(),
            "support": self.support.tolist(),
            "mu_init": self.mu_init,
            "mu": self.mu,
            "bic_init": self.bic_init,
            "bic": self.bic,
            "nu": self.nu,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AlphaFit":
        return cls(
            alpha=np.asarray(d["alpha"], dtype=np.float64),
            tau=float(d["tau"]),
            alpha_init=np.asarray(d["alpha_init"], dtype=np.float64),
            support=np.asarray(d["support"], dtype=np.intp),
            mu_init=float(d["mu_init"]),
            mu=float(d["mu"]),
            bic_init=float(d["bic_init"]),
            bic=float(d["bic"]),
            nu=float(d.get("nu", 1.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "AlphaFit":
        return cls.from_dict(json.loads(text))


def bic_linear(fit: GlmFit, X: np.ndarray, y: np.ndarray) -> float:
    """Gaussian-profile BIC: N*ln(RSS/N) + df*ln(N).

    df counts nonzero coefficients, intercept excluded. A perfect fit
    (RSS = 0) returns -inf with a warning.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    resid = y - fit.linear_predictor(X)
    rss = float(resid @ resid)
    df = int(np.count_nonzero(fit.coefficients))
    if rss <= 0.0:
        warnings.warn("zero residual sum of squares; BIC is -inf")
        return -np.inf
    return n * np.log(rss / n) + df * np.log(n)


def _bic_path(X, y, weights, n_mu, lambda_min_ratio):
    path = regularization_path(X, y, weights, "linear", n_lambda=n_mu,
                               lambda_min_ratio=lambda_min_ratio)
    bics = np.array([bic_linear(fit, X, y) for _, fit in path])
    best = int(np.argmin(bics))
    lam, fit = path[best]
    return lam, fit, float(bics[best])


def fit_alpha_init(ds: Dataset, n_mu: int = ALPHA_PATH_LEN,
                   lambda_min_ratio: float = ALPHA_MIN_RATIO) -> AlphaInit:
    """L1 least squares of the surrogate on all features, BIC-selected.

    Runs on every row of the dataset; labels are not used.
    """
    if ds.n_obs < 2:
        raise ValueError("need at least 2 rows to fit the surrogate model")
    lam, fit, bic = _bic_path(ds.features, ds.surrogate, np.ones(ds.p),
                              n_mu, lambda_min_ratio)
    return AlphaInit(tau=fit.intercept, alpha=fit.coefficients, mu=lam,
                     bic=bic)


def fit_alpha_alasso(ds: Dataset, alpha_init, nu: float = 1.0,
                     n_mu: int = ALPHA_PATH_LEN,
                     lambda_min_ratio: float = ALPHA_MIN_RATIO) -> AlphaFit:
    """Adaptive-weight stage: weights |alpha_init_j|^-nu, zeros dropped."""
    if isinstance(alpha_init, AlphaInit):
        init_vec = alpha_init.alpha
        mu_init, bic_init = alpha_init.mu, alpha_init.bic
    else:
        init_vec = np.asarray(alpha_init, dtype=np.float64)
        mu_init, bic_init = np.nan, np.nan
    if init_vec.shape != (ds.p,):
        raise ValueError("alpha_init length does not match feature count")

    with np.errstate(divide="ignore"):
        weights = np.abs(init_vec) ** -float(nu)
    if not np.isfinite(weights).any():
        warnings.warn("initial surrogate fit is empty; adaptive stage "
                      "returns the null direction")
        return AlphaFit(alpha=np.zeros(ds.p), tau=float(ds.surrogate.mean()),
                        alpha_init=init_vec,
                        support=np.array([], dtype=np.intp),
                        mu_init=mu_init, mu=np.nan, bic_init=bic_init,
                        bic=np.nan, nu=float(nu))

    lam, fit, bic = _bic_path(ds.features, ds.surrogate, weights, n_mu,
                              lambda_min_ratio)
    return AlphaFit(alpha=fit.coefficients, tau=fit.intercept,
                    alpha_init=init_vec,
                    support=np.flatnonzero(fit.coefficients),
                    mu_init=mu_init, mu=lam, bic_init=bic_init, bic=bic,
                    nu=float(nu))


def estimate_alpha(ds: Dataset, nu: float = 1.0,
                   n_mu: int = ALPHA_PATH_LEN,
                   lambda_min_ratio: float = ALPHA_MIN_RATIO) -> AlphaFit:
    """Both surrogate-direction stages back to back."""
    init = fit_alpha_init(ds, n_mu=n_mu, lambda_min_ratio=lambda_min_ratio)
    return fit_alpha_alasso(ds, init, nu=nu, n_mu=n_mu,
                            lambda_min_ratio=lambda_min_ratio)
