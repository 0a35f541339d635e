"""Semi-supervised high-dimensional logistic regression with surrogate outcomes.

The package implements the prior-adaptive semi-supervised (PASS) estimator,
its benchmark estimators, the simulation scenarios used to compare them, and
evaluation metrics, behind a reproducible experiment CLI.
"""

__version__ = "0.1.0"
