"""Command-line orchestration: simulate, fit, evaluate, bench.

Configuration comes from a JSON file (--config) with CLI flags overriding
individual keys; the resolved config, a manifest with versions and hashes,
and all outputs land in the output directory. Exit codes: 0 ok, 1 usage,
2 data/config error, 3 too many failed replicates.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, baselines, bench, simgen, surrogate, svgplot
from .data import (
    DataError,
    Dataset,
    apply_transform_log,
    load_csv,
    log1p_counts,
    orthogonalize_against_utilization,
    save_csv,
    standardize,
)
from .metrics import aggregate_replicates, bss as bss_metric, evaluate, make_folds
from .simgen import MAIN_IDS, MIS_IDS, ScenarioSpec, TruthOracle


class ConfigError(ValueError):
    """Raised on invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    """Validated experiment settings; unknown keys are rejected."""

    scenario: str | None = None
    n: int = 100
    N: int = 2000
    p: int = 200
    test_size: int = 2000
    seed: int = 0
    replicates: int = 50
    methods: list = field(default_factory=lambda: ["pass", "lasso"])
    n_folds: int = 10
    out: str = "out"
    threads: int = 1
    selection: str = "deviance"
    kappa_grid: list | None = None
    mixing_grid: list | None = None
    q_upper: float = 0.9
    q_lower: float = 0.1
    # CSV ingestion
    train_csv: str | None = None
    test_csv: str | None = None
    surrogate_col: str = "s"
    label_col: str | None = "y"
    utilization_col: str | None = None
    oracle_json: str | None = None
    # preprocessing switches
    log1p: bool = False
    log1p_surrogate: bool = True
    orthogonalize: bool = False
    standardize: bool = False
    # single-fit mode
    method: str | None = None
    model_json: str | None = None
    # real-data nested resampling
    eval_folds: int = 4
    label_resamples: int = 20
    outer_reps: int = 10

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def validate(self):
        if self.scenario is not None and \
                self.scenario not in MAIN_IDS + MIS_IDS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        for key in ("n", "N", "p", "test_size", "replicates", "n_folds",
                    "threads", "eval_folds", "label_resamples", "outer_reps"):
            if int(getattr(self, key)) < 1:
                raise ConfigError(f"{key} must be a positive integer")
        if not 0 <= self.q_lower < self.q_upper <= 1:
            raise ConfigError("need 0 <= q_lower < q_upper <= 1")
        for m in self.methods:
            if m not in baselines.METHOD_TAGS:
                raise ConfigError(f"unknown method {m!r}")
        if self.method is not None and \
                self.method not in baselines.METHOD_TAGS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.selection not in ("deviance", "auc"):
            raise ConfigError("selection must be 'deviance' or 'auc'")
        if self.scenario in MIS_IDS and self.p < 20:
            raise ConfigError(f"scenario {self.scenario} needs p >= 20")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def _load_config(args) -> ExperimentConfig:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
    overrides = {
        "scenario": args.scenario,
        "n": args.n, "N": args.N, "p": args.p,
        "seed": args.seed,
        "replicates": args.reps,
        "out": args.out,
        "threads": args.threads,
        "test_size": getattr(args, "test_size", None),
        "method": getattr(args, "method", None),
        "train_csv": getattr(args, "real_data", None),
        "test_csv": getattr(args, "test_csv", None),
        "surrogate_col": getattr(args, "surrogate_col", None),
        "label_col": getattr(args, "label_col", None),
        "utilization_col": getattr(args, "utilization_col", None),
        "model_json": getattr(args, "model", None),
        "oracle_json": getattr(args, "oracle", None),
    }
    methods = getattr(args, "methods", None)
    if methods:
        overrides["methods"] = [m.strip() for m in methods.split(",")]
    for key, val in overrides.items():
        if val is not None:
            raw[key] = val
    return ExperimentConfig.from_dict(raw)


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(cfg: ExperimentConfig, out: Path, command: str,
                    extra: dict | None = None):
    import numba
    import scipy

    (out / "resolved_config.json").write_text(cfg.to_json())
    manifest = {
        "command": command,
        "config_sha256": cfg.sha256(),
        "seed": cfg.seed,
        "versions": {
            "passglm": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
            "python": sys.version.split()[0],
        },
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                  sort_keys=True))


def _log(msg: str):
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# data plumbing
# ---------------------------------------------------------------------------

def _preprocess(ds: Dataset, cfg: ExperimentConfig) -> Dataset:
    if cfg.log1p:
        ds = log1p_counts(ds, include_surrogate=cfg.log1p_surrogate)
    if cfg.orthogonalize:
        ds = orthogonalize_against_utilization(ds)
    if cfg.standardize:
        ds = standardize(ds)
    return ds


def _load_train(cfg: ExperimentConfig):
    """(train, test, oracle) from either a scenario or CSV inputs."""
    if cfg.train_csv:
        train = load_csv(cfg.train_csv, surrogate_col=cfg.surrogate_col,
                         label_col=cfg.label_col,
                         utilization_col=cfg.utilization_col)
        raw_train = train
        train = _preprocess(train, cfg)
        test = oracle = None
        if cfg.test_csv:
            test = load_csv(cfg.test_csv, surrogate_col=cfg.surrogate_col,
                            label_col=cfg.label_col,
                            utilization_col=cfg.utilization_col)
            if train.transform_log.steps:
                test = apply_transform_log(test, _new_steps(raw_train, train))
        if cfg.oracle_json:
            oracle = TruthOracle.from_dict(
                json.loads(Path(cfg.oracle_json).read_text()))
        return train, test, oracle
    if cfg.scenario is None:
        raise ConfigError("either a scenario or --real-data must be given")
    spec = ScenarioSpec(id=cfg.scenario, n=cfg.n, N=cfg.N, p=cfg.p,
                        seed=cfg.seed, test_size=cfg.test_size)
    return simgen.generate(spec)


def _new_steps(raw: Dataset, transformed: Dataset):
    from .data import TransformLog

    k = len(raw.transform_log.steps)
    return TransformLog(transformed.transform_log.steps[k:])


def _alpha_cached(train: Dataset, out: Path, log=_log):
    """Surrogate-direction stage, cached by a hash of data and settings."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(train.features).tobytes())
    h.update(np.ascontiguousarray(train.surrogate).tobytes())
    h.update(f"{surrogate.ALPHA_PATH_LEN}:{surrogate.ALPHA_MIN_RATIO}".encode())
    cache = out / "cache" / f"alpha_{h.hexdigest()[:16]}.json"
    if cache.exists():
        log(f"alpha cache hit: {cache.name}")
        return surrogate.AlphaFit.from_json(cache.read_text())
    fit = surrogate.estimate_alpha(train)
    cache.parent.mkdir(parents=True, exist_ok=True)
    cache.write_text(fit.to_json())
    log(f"alpha cache write: {cache.name}")
    return fit


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig) -> int:
    if cfg.scenario is None:
        raise ConfigError("simulate needs --scenario")
    out = _out_dir(cfg)
    spec = ScenarioSpec(id=cfg.scenario, n=cfg.n, N=cfg.N, p=cfg.p,
                        seed=cfg.seed, test_size=cfg.test_size)
    train, test, oracle = simgen.generate(spec)
    save_csv(train, out / "train.csv")
    save_csv(test, out / "test.csv")
    (out / "oracle.json").write_text(json.dumps(oracle.to_dict(), indent=2))
    _write_manifest(cfg, out, "simulate")
    _log(f"wrote train.csv test.csv oracle.json manifest.json to {out}")
    return 0


def cmd_fit(cfg: ExperimentConfig) -> int:
    if cfg.method is None:
        raise ConfigError("fit needs --method")
    out = _out_dir(cfg)
    train, _, _ = _load_train(cfg)
    if cfg.method in ("ulasso", "ss_ulasso") and train.n_labeled == train.n_obs:
        raise DataError(f"{cfg.method} needs unlabeled rows beyond the "
                        "labeled set")
    alpha_fit = None
    if cfg.method in bench.ALPHA_METHODS:
        alpha_fit = _alpha_cached(train, out)
    y, _, _ = train.labeled_arrays()
    folds = make_folds(y, cfg.n_folds, cfg.seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = bench.fit_method(
            cfg.method, train, alpha_fit=alpha_fit, folds=folds,
            seed=cfg.seed, n_folds=cfg.n_folds, selection=cfg.selection,
            q_upper=cfg.q_upper, q_lower=cfg.q_lower,
            mixing_grid=cfg.mixing_grid, kappa_grid=cfg.kappa_grid)
    path = out / f"model_{cfg.method}.json"
    path.write_text(fit.to_json())
    _write_manifest(cfg, out, "fit")
    _log(f"wrote {path}")
    return 0


def _load_model(path: str):
    blob = json.loads(Path(path).read_text())
    if "rho" in blob:
        blob = {"zeta": blob["zeta"], "gamma": blob["gamma"],
                "beta": blob["beta"], "method_tag": "pass"}
    return baselines.Coefficients.from_dict(blob)


def cmd_evaluate(cfg: ExperimentConfig) -> int:
    if cfg.model_json is None:
        raise ConfigError("evaluate needs --model")
    if cfg.test_csv is None and cfg.scenario is None:
        raise ConfigError("evaluate needs --test-csv or a scenario")
    out = _out_dir(cfg)
    fit = _load_model(cfg.model_json)
    if cfg.test_csv:
        test = load_csv(cfg.test_csv, surrogate_col=cfg.surrogate_col,
                        label_col=cfg.label_col,
                        utilization_col=cfg.utilization_col)
        oracle = None
        if cfg.oracle_json:
            oracle = TruthOracle.from_dict(
                json.loads(Path(cfg.oracle_json).read_text()))
    else:
        spec = ScenarioSpec(id=cfg.scenario, n=cfg.n, N=cfg.N, p=cfg.p,
                            seed=cfg.seed, test_size=cfg.test_size)
        _, test, oracle = simgen.generate(spec)
    report = evaluate(fit, test, oracle, with_bss=True)
    path = out / "metrics.json"
    path.write_text(report.to_json())
    _write_manifest(cfg, out, "evaluate")
    _log(f"wrote {path}")
    print(report.to_json())
    return 0


def _write_rows_csv(rows, path: Path):
    cols = ["replicate", "method", "metric", "value", "n", "N", "p",
            "scenario", "seed"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float)
                             else row[c] for c in cols])


def _write_boxplots(rows, out: Path, scenario: str):
    by_metric: dict[str, dict[str, list[float]]] = {}
    for row in rows:
        by_metric.setdefault(row["metric"], {}) \
            .setdefault(row["method"], []).append(row["value"])
    for metric, groups in by_metric.items():
        svg = svgplot.boxplot_svg(groups,
                                  title=f"scenario {scenario}: {metric}",
                                  ylabel=metric)
        (out / f"boxplot_{metric}.svg").write_text(svg)


def cmd_bench(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    t0 = time.time()
    if cfg.train_csv:
        rows, failures = _real_data_bench(cfg)
        scenario_name = Path(cfg.train_csv).stem
    else:
        if cfg.scenario is None:
            raise ConfigError("bench needs --scenario or --real-data")
        pool_map = None
        executor = None
        if cfg.threads > 1:
            executor = ProcessPoolExecutor(max_workers=cfg.threads)
            pool_map = executor.map
        try:
            result = bench.run_scenario_bench(
                cfg.scenario, cfg.methods, n=cfg.n, N=cfg.N, p=cfg.p,
                test_size=cfg.test_size, replicates=cfg.replicates,
                seed=cfg.seed, n_folds=cfg.n_folds, log=_log,
                pool_map=pool_map, selection=cfg.selection,
                mixing_grid=cfg.mixing_grid, kappa_grid=cfg.kappa_grid,
                q_upper=cfg.q_upper, q_lower=cfg.q_lower)
        finally:
            if executor is not None:
                executor.shutdown()
        rows, failures = result.rows, result.failures
        scenario_name = cfg.scenario

    _write_rows_csv(rows, out / "results.csv")
    summary = _summarize(rows)
    summary["failures"] = [{"replicate": r, "error": e} for r, e in failures]
    summary["elapsed_seconds"] = round(time.time() - t0, 3)
    summary["paired_folds"] = True
    (out / "summary.json").write_text(json.dumps(summary, indent=2,
                                                 sort_keys=True))
    _write_boxplots(rows, out, scenario_name)
    _write_manifest(cfg, out, "bench",
                    extra={"n_failures": len(failures)})
    _log(f"bench done in {time.time() - t0:.1f}s -> {out}")
    if cfg.replicates and len(failures) > 0.1 * cfg.replicates:
        return 3
    return 0


def _summarize(rows) -> dict:
    by_mm: dict[tuple[str, str], list[float]] = {}
    for row in rows:
        by_mm.setdefault((row["method"], row["metric"]), []) \
            .append(row["value"])
    table = {}
    for (method, metric), vals in sorted(by_mm.items()):
        vals = np.asarray(vals)
        se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 \
            else 0.0
        table.setdefault(method, {})[metric] = {
            "mean": float(vals.mean()), "se": se, "n": int(len(vals)),
        }
    return {"methods": table}


def _real_data_bench(cfg: ExperimentConfig):
    """Nested resampling on a labeled CSV.

    The labeled rows are split into eval_folds validation folds; for each
    fold, n training labels are resampled from the remaining folds
    label_resamples times, methods are trained (with the rest of the data
    unlabeled) and scored on the held-out fold. The whole procedure repeats
    outer_reps times with fresh splits.
    """
    train_all, _, _ = _load_train(cfg)
    labeled = train_all.labeled_idx
    if len(labeled) < 2 * cfg.eval_folds:
        raise DataError("not enough labeled rows for the evaluation folds")
    rows = []
    failures = []
    rep = 0
    for outer in range(1, cfg.outer_reps + 1):
        fold_seed = cfg.seed + 7919 * outer
        folds = make_folds(train_all.labels[labeled], cfg.eval_folds,
                           fold_seed)
        for k in range(cfg.eval_folds):
            tr_pos, va_pos = folds.split(k)
            pool_idx = labeled[tr_pos]
            val_idx = labeled[va_pos]
            for s in range(cfg.label_resamples):
                rep += 1
                rng = np.random.Generator(np.random.Philox(
                    key=np.uint64(fold_seed + 104729 * k + s)))
                take = min(cfg.n, len(pool_idx))
                chosen = pool_idx[rng.permutation(len(pool_idx))[:take]]
                labels = np.full(train_all.n_obs, np.nan)
                labels[chosen] = train_all.labels[chosen]
                train = train_all.replace(labels=labels)
                val_labels = np.full(train_all.n_obs, np.nan)
                val_labels[val_idx] = train_all.labels[val_idx]
                validation = train_all.replace(labels=val_labels)
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        fits = bench.run_replicate(
                            train, validation, None, cfg.methods,
                            seed=fold_seed + s, n_folds=cfg.n_folds,
                            with_bss=True, selection=cfg.selection,
                            mixing_grid=cfg.mixing_grid,
                            kappa_grid=cfg.kappa_grid,
                            q_upper=cfg.q_upper, q_lower=cfg.q_lower)
                except Exception as exc:  # noqa: BLE001
                    failures.append((rep, f"{type(exc).__name__}: {exc}"))
                    continue
                for method, (fit, report) in fits.items():
                    for metric in report.available():
                        rows.append({
                            "replicate": rep, "method": method,
                            "metric": metric,
                            "value": getattr(report, metric),
                            "n": cfg.n, "N": train_all.n_obs,
                            "p": train_all.p,
                            "scenario": f"real:outer{outer}:fold{k}",
                            "seed": fold_seed + s,
                        })
    return rows, failures


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--scenario", help="scenario id (I..VI, i..iii)")
    sub.add_argument("--n", type=int, help="labeled training size")
    sub.add_argument("--N", type=int, help="total training size")
    sub.add_argument("--p", type=int, help="feature dimension")
    sub.add_argument("--test-size", type=int, dest="test_size")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--reps", type=int, help="replicate count")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--threads", type=int, help="worker processes")
    sub.add_argument("--real-data", dest="real_data",
                     help="training CSV path")
    sub.add_argument("--test-csv", dest="test_csv", help="test CSV path")
    sub.add_argument("--surrogate-col", dest="surrogate_col")
    sub.add_argument("--label-col", dest="label_col")
    sub.add_argument("--utilization-col", dest="utilization_col")
    sub.add_argument("--oracle", help="truth oracle JSON path")


def build_parser() -> _Parser:
    parser = _Parser(prog="passglm",
                     description="semi-supervised surrogate-outcome "
                                 "regression experiments")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="write scenario data to CSV")
    _add_common(sim)

    fit = subs.add_parser("fit", help="fit one estimator, write model JSON")
    _add_common(fit)
    fit.add_argument("--method", help="estimator tag")

    ev = subs.add_parser("evaluate", help="score a model JSON on test data")
    _add_common(ev)
    ev.add_argument("--model", help="model JSON path")

    be = subs.add_parser("bench", help="replicated method comparison")
    _add_common(be)
    be.add_argument("--methods", help="comma-separated method tags")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "fit":
            return cmd_fit(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "bench":
            return cmd_bench(cfg)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigError, DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
