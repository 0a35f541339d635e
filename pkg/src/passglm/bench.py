"""Replicated benchmark engine: generate, fit every method, evaluate.

One replicate draws a scenario dataset with seed+replicate, estimates the
surrogate direction once, builds a single fold assignment shared by every
cross-validated method (so comparisons are paired), fits the requested
methods on identical data, and evaluates them on the independent test set.
Replicate failures are recorded, not raised; the caller decides whether the
failure rate is acceptable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import baselines, pass_fit, simgen, surrogate
from .data import Dataset
from .metrics import MetricsReport, aggregate_replicates, evaluate, make_folds
from .simgen import ScenarioSpec, TruthOracle

ALL_METHODS = list(baselines.METHOD_TAGS)
ALPHA_METHODS = {"pass", "ss_prior", "plasso1", "plasso2"}


@dataclass
class BenchResult:
    """Per-replicate metric rows plus aggregates keyed by method."""

    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (replicate, message)
    n_replicates: int = 0

    @property
    def reports(self) -> dict:
        """method -> list of per-replicate MetricsReports (from rows)."""
        by_rep: dict[tuple[int, str], MetricsReport] = {}
        for row in self.rows:
            key = (row["replicate"], row["method"])
            rep = by_rep.setdefault(key, MetricsReport(n_eval=0))
            setattr(rep, row["metric"], row["value"])
        out: dict[str, list[MetricsReport]] = {}
        for (r, method), rep in sorted(by_rep.items()):
            out.setdefault(method, []).append(rep)
        return out

    def aggregate(self) -> dict:
        return {m: aggregate_replicates(r) for m, r in self.reports.items()}

    def mean(self, method: str, metric: str) -> float:
        vals = [row["value"] for row in self.rows
                if row["method"] == method and row["metric"] == metric]
        if not vals:
            raise KeyError(f"no {metric} rows for {method}")
        return float(np.mean(vals))


def fit_method(method: str, train: Dataset, *, alpha_fit=None, folds=None,
               seed: int = 0, n_folds: int = 10, mixing_grid=None,
               kappa_grid=None, lambda1_grid=None,
               q_upper: float = 0.9, q_lower: float = 0.1,
               selection: str = "deviance"):
    """Fit one method by tag on the training data."""
    if method == "lasso":
        return baselines.fit_lasso_supervised(train, n_folds=n_folds,
                                              seed=seed, folds=folds)
    if method == "alasso":
        return baselines.fit_alasso_supervised(train, n_folds=n_folds,
                                               seed=seed, folds=folds)
    if method == "ss_prior":
        return baselines.fit_ss_prior(train, alpha_fit)
    if method in ("plasso1", "plasso2"):
        kw = {} if mixing_grid is None else {"mixing_grid": mixing_grid}
        return baselines.fit_plasso(train, alpha_fit,
                                    variant=int(method[-1]),
                                    n_folds=n_folds, seed=seed, folds=folds,
                                    **kw)
    if method == "ulasso":
        return baselines.fit_ulasso(train, q_upper=q_upper, q_lower=q_lower,
                                    n_folds=n_folds, seed=seed)
    if method == "ss_ulasso":
        ul = baselines.fit_ulasso(train, q_upper=q_upper, q_lower=q_lower,
                                  n_folds=n_folds, seed=seed)
        return baselines.fit_ss_ulasso(train, ul.beta)
    if method == "pass":
        kw = {}
        if kappa_grid is not None:
            kw["kappa_grid"] = kappa_grid
        if lambda1_grid is not None:
            kw["lambda1_grid"] = lambda1_grid
        return pass_fit.tune_pass(train, alpha_fit, n_folds=n_folds,
                                  seed=seed, folds=folds,
                                  selection=selection, **kw)
    raise ValueError(f"unknown method {method!r}")


def run_replicate(train: Dataset, test: Dataset, oracle: TruthOracle | None,
                  methods, seed: int, n_folds: int = 10,
                  with_bss: bool = False, alpha_fit=None, **method_kw):
    """Fit the requested methods on shared data with paired folds.

    Returns {method: (fit, MetricsReport)}.
    """
    y, _, _ = train.labeled_arrays()
    folds = make_folds(y, n_folds, seed)
    if alpha_fit is None and any(m in ALPHA_METHODS for m in methods):
        alpha_fit = surrogate.estimate_alpha(train)

    out = {}
    for method in methods:
        fit = fit_method(method, train, alpha_fit=alpha_fit, folds=folds,
                         seed=seed, n_folds=n_folds, **method_kw)
        report = evaluate(fit, test, oracle, with_bss=with_bss)
        out[method] = (fit, report)
    return out


def _extra_metric_rows(method, fit, test, oracle, extras):
    """Optional per-fit diagnostics emitted as additional metric rows."""
    from .metrics import _scores_for
    from .solver import logistic_loss

    out = {}
    if "beta_cos" in extras and oracle is not None:
        beta = np.asarray(fit.beta)
        denom = np.linalg.norm(beta) * np.linalg.norm(oracle.beta0)
        out["beta_cos"] = float(beta @ oracle.beta0 / denom) if denom > 0 \
            else 0.0
    if "test_dev" in extras:
        idx = test.labeled_idx
        eta = _scores_for(fit, test)[idx]
        out["test_dev"] = float(np.mean(logistic_loss(test.labels[idx], eta)))
    if "rho" in extras and hasattr(fit, "rho"):
        out["rho"] = float(fit.rho)
    return out


def scenario_replicate_job(args: dict):
    """One benchmark replicate; picklable for worker pools.

    Returns (replicate_index, rows, failure_message_or_None).
    """
    r = args["replicate"]
    spec = ScenarioSpec(id=args["scenario_id"], n=args["n"], N=args["N"],
                        p=args["p"], seed=args["seed"] + r,
                        test_size=args["test_size"])
    extras = args.get("extra_metrics", ())
    rows = []
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            train, test, oracle = simgen.generate(spec)
            fits = run_replicate(train, test, oracle, args["methods"],
                                 seed=args["seed"] + r,
                                 n_folds=args.get("n_folds", 10),
                                 **args.get("method_kw", {}))
    except Exception as exc:  # noqa: BLE001 - recorded, run continues
        return r, [], f"{type(exc).__name__}: {exc}"
    for method in args["methods"]:
        fit, report = fits[method]
        values = {m: getattr(report, m) for m in report.available()}
        values.update(_extra_metric_rows(method, fit, test, oracle, extras))
        for metric, value in values.items():
            rows.append({
                "replicate": r,
                "method": method,
                "metric": metric,
                "value": value,
                "n": args["n"], "N": args["N"], "p": args["p"],
                "scenario": args["scenario_id"],
                "seed": args["seed"] + r,
            })
    return r, rows, None


def run_scenario_bench(scenario_id: str, methods, n: int = 100,
                       N: int = 2000, p: int = 200, test_size: int = 2000,
                       replicates: int = 50, seed: int = 0,
                       n_folds: int = 10, log=None, pool_map=None,
                       max_failure_rate: float = 0.1, extra_metrics=(),
                       **method_kw) -> BenchResult:
    """Replicated scenario benchmark with paired data across methods.

    Replicate r uses seed+r for generation and folds. pool_map may be an
    executor map; results are gathered in replicate order either way, so the
    output is identical for any degree of parallelism.
    """
    methods = list(methods)
    jobs = [{
        "replicate": r,
        "scenario_id": scenario_id,
        "n": n, "N": N, "p": p,
        "test_size": test_size,
        "seed": seed,
        "methods": methods,
        "n_folds": n_folds,
        "method_kw": method_kw,
        "extra_metrics": tuple(extra_metrics),
    } for r in range(1, replicates + 1)]

    result = BenchResult(n_replicates=replicates)
    mapper = pool_map if pool_map is not None else map
    for r, rows, failure in mapper(scenario_replicate_job, jobs):
        if failure is not None:
            result.failures.append((r, failure))
            if log:
                log(f"replicate {r}: FAILED ({failure})")
        else:
            result.rows.extend(rows)
            if log:
                log(f"replicate {r}/{replicates} done")
    result.rows.sort(key=lambda row: (row["replicate"], row["method"],
                                      row["metric"]))
    if replicates and len(result.failures) > max_failure_rate * replicates:
        raise RuntimeError(
            f"{len(result.failures)}/{replicates} replicates failed")
    return result
