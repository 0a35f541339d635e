"""Synthetic data generators for the benchmark scenarios.

Two families are provided. The main family (ids I..VI) draws correlated
Gaussians, maps them through a zero-inflated count transform, and generates
the surrogate from a single-index model and the label from a logistic model,
with the surrogate-direction and label-direction coefficient vectors sharing
progressively less structure from I to VI. The misspecification family
(ids i..iii) makes the label a probit-style threshold of the features and
feeds the label back into the surrogate, so the logistic working model is
deliberately wrong and the surrogate-feature independence is progressively
violated.

All randomness flows through a counter-based Philox stream with normals via
inverse CDF, so identical ScenarioSpecs reproduce datasets bit for bit on
any platform.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import toeplitz
from scipy.special import ndtr, ndtri

from .data import Dataset

MAIN_IDS = ("I", "II", "III", "IV", "V", "VI")
MIS_IDS = ("i", "ii", "iii")

A1 = np.array([0.5, 1.0, -0.8, 0.6, 0.2])
D1 = np.array([-0.05, -0.5, 1.4, 0.5, -0.6])
A2 = np.array([0.1, -0.2, -0.2, 0.2, 0.7])
D2 = np.array([0.02, 0.05, 0.02, -0.02, -0.05])
A3 = np.array([0.6, -0.4, 0.4, 0.5, -0.5])
D3 = np.array([0.3, 0.4, 0.6, -0.5, -0.5])

ZETA0 = -4.0
GAMMA0 = 0.5
SURROGATE_NOISE_SD = 2.0
MIS_BLOCK = 20

# sample size and stream key for the large-sample fit that defines the
# best-logistic-approximation coefficients of the misspecified scenarios
LIMIT_FIT_N = 500_000
LIMIT_FIT_SEED = 744_001_001

_MIN_P = {"I": 10, "II": 10, "III": 20, "IV": 10, "V": 10, "VI": 15,
          "i": MIS_BLOCK, "ii": MIS_BLOCK, "iii": MIS_BLOCK}


@dataclass(frozen=True)
class ScenarioSpec:
    """Scenario identifier plus dimensions and RNG seed."""

    id: str
    n: int
    N: int
    p: int
    seed: int
    test_size: int = 2000

    def __post_init__(self):
        if self.id not in MAIN_IDS + MIS_IDS:
            raise ValueError(f"unknown scenario id {self.id!r}")
        if self.n > self.N:
            raise ValueError("labeled size n cannot exceed total size N")
        if self.n < 1 or self.test_size < 1:
            raise ValueError("n and test_size must be positive")
        if self.p < _MIN_P[self.id]:
            raise ValueError(
                f"scenario {self.id} needs p >= {_MIN_P[self.id]}, got {self.p}")


@dataclass
class TruthOracle:
    """True (or best-approximation) generative parameters of a scenario.

    kind 'exact': the label model is logistic with the stored coefficients.
    kind 'approx': the label model is misspecified; the stored coefficients
    are the population best logistic approximation, estimated once from a
    very large sample and cached.
    """

    scenario_id: str
    kind: str
    p: int
    zeta0: float | None = None
    gamma0: float | None = None
    beta0: np.ndarray | None = None
    alpha0: np.ndarray | None = None
    mu: float | None = None
    eta1: np.ndarray | None = None
    eta2: np.ndarray | None = None
    beta_y: np.ndarray | None = None

    def _ensure_coefficients(self):
        if self.beta0 is None:
            zeta, gamma, beta_head = limit_coefficients(self.scenario_id)
            beta = np.zeros(self.p)
            beta[: len(beta_head)] = beta_head
            self.zeta0, self.gamma0, self.beta0 = zeta, gamma, beta

    def linear_predictor(self, s, X) -> np.ndarray:
        """True linear score zeta0 + gamma0 * s + X @ beta0."""
        self._ensure_coefficients()
        s = np.asarray(s, dtype=np.float64)
        X = np.asarray(X, dtype=np.float64)
        return self.zeta0 + self.gamma0 * s + X @ self.beta0

    def prob(self, s, X) -> np.ndarray:
        eta = self.linear_predictor(s, X)
        return np.where(eta >= 0, 1.0 / (1.0 + np.exp(-np.abs(eta))),
                        np.exp(-np.abs(eta)) / (1.0 + np.exp(-np.abs(eta))))

    def to_dict(self) -> dict:
        self._ensure_coefficients()
        out = {
            "scenario_id": self.scenario_id,
            "kind": self.kind,
            "p": self.p,
            "zeta0": self.zeta0,
            "gamma0": self.gamma0,
            "beta0": self.beta0.tolist(),
        }
        for name in ("alpha0", "eta1", "eta2", "beta_y"):
            v = getattr(self, name)
            out[name] = None if v is None else v.tolist()
        out["mu"] = self.mu
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TruthOracle":
        d = dict(d)
        for name in ("beta0", "alpha0", "eta1", "eta2", "beta_y"):
            if d.get(name) is not None:
                d[name] = np.asarray(d[name], dtype=np.float64)
        return cls(**d)


def _pad(blocks, p: int) -> np.ndarray:
    head = np.concatenate(blocks)
    if len(head) > p:
        raise ValueError("p too small for the scenario's support")
    out = np.zeros(p)
    out[: len(head)] = head
    return out


def coefficient_constants(scenario_id: str, p: int) -> dict:
    """Exact coefficient vectors of a scenario, padded to length p."""
    if scenario_id in MAIN_IDS:
        alpha = {
            "I": [A1, A2],
            "II": [A1, A2],
            "III": [A1, A2, A2, A2],
            "IV": [A1],
            "V": [A1, A2],
            "VI": [A1, A2],
        }[scenario_id]
        beta = {
            "I": [A1, A2],
            "II": [A1 + D1, A2 + D2],
            "III": [A1 + D1, A2 + D2],
            "IV": [A1 + D1, A2 + D2],
            "V": [A2, A1],
            "VI": [A2, np.zeros(5), A1],
        }[scenario_id]
        return {
            "alpha0": _pad(alpha, p),
            "beta0": 1.5 * _pad(beta, p),
        }
    if scenario_id in MIS_IDS:
        mu = {"i": 1.0, "ii": 1.5, "iii": 2.0}[scenario_id]
        eta_blocks = {
            "i": ([np.zeros(5)], [np.zeros(5)]),
            "ii": ([A3], [D3]),
            "iii": ([A3, A3, A3], [D3, D3, D3]),
        }[scenario_id]
        return {
            "mu": mu,
            "eta1": _pad(eta_blocks[0], p),
            "eta2": _pad(eta_blocks[1], p),
            "beta_y": _pad([np.array([0.8, 1.0, -1.0, 0.8, 0.4])], p),
        }
    raise ValueError(f"unknown scenario id {scenario_id!r}")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def _uniform(rng, size):
    # midpoints of the 2^53 dyadic grid: strictly inside (0, 1)
    return (rng.integers(0, 1 << 53, size=size).astype(np.float64) + 0.5) \
        * 2.0 ** -53


def _normal(rng, size):
    return ndtri(_uniform(rng, size))


@lru_cache(maxsize=8)
def _main_cholesky(p: int) -> np.ndarray:
    sigma = toeplitz(4.0 * 0.5 ** np.arange(p))
    chol = np.linalg.cholesky(sigma)
    chol.setflags(write=False)
    return chol


@lru_cache(maxsize=8)
def _mis_cholesky(p: int) -> np.ndarray:
    chol = np.zeros((p, p))
    b1 = toeplitz(0.5 ** np.arange(MIS_BLOCK))
    chol[:MIS_BLOCK, :MIS_BLOCK] = np.linalg.cholesky(b1)
    if p > MIS_BLOCK:
        b2 = toeplitz(0.5 ** np.arange(p - MIS_BLOCK))
        chol[MIS_BLOCK:, MIS_BLOCK:] = np.linalg.cholesky(b2)
    chol.setflags(write=False)
    return chol


def count_log_transform(t):
    """log(1 + [e^t]) with [u] the integer nearest to u.

    Halves round away from zero (a measure-zero event here). For t > 500
    the rounding is far below double resolution and the value is t itself.
    """
    t = np.asarray(t, dtype=np.float64)
    safe = np.minimum(t, 500.0)
    counts = np.floor(np.exp(safe) + 0.5)
    return np.where(t > 500.0, t, np.log1p(counts))


def _sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _draw_main(rng, rows: int, p: int, alpha0, beta0):
    z = _normal(rng, (rows, p)) @ _main_cholesky(p).T
    x = count_log_transform(z)
    eps = SURROGATE_NOISE_SD * _normal(rng, rows)
    s = count_log_transform(1.0 + x @ alpha0 + eps)
    py = _sigmoid(ZETA0 + GAMMA0 * s + x @ beta0)
    y = (_uniform(rng, rows) < py).astype(np.float64)
    return x, s, y


def gen_main(spec: ScenarioSpec):
    """Training and test Datasets plus truth oracle for scenarios I..VI.

    Training data has N rows with exactly the first n labeled; the test set
    is drawn independently from the same stream and fully labeled.
    """
    if spec.id not in MAIN_IDS:
        raise ValueError(f"gen_main needs a scenario in {MAIN_IDS}")
    consts = coefficient_constants(spec.id, spec.p)
    alpha0, beta0 = consts["alpha0"], consts["beta0"]
    rng = _rng(spec.seed)

    x, s, y = _draw_main(rng, spec.N, spec.p, alpha0, beta0)
    labels = np.full(spec.N, np.nan)
    labels[: spec.n] = y[: spec.n]
    train = Dataset(features=x, surrogate=s, labels=labels)

    xt, st, yt = _draw_main(rng, spec.test_size, spec.p, alpha0, beta0)
    test = Dataset(features=xt, surrogate=st, labels=yt)

    oracle = TruthOracle(scenario_id=spec.id, kind="exact", p=spec.p,
                         zeta0=ZETA0, gamma0=GAMMA0, beta0=beta0,
                         alpha0=alpha0)
    return train, test, oracle


def _draw_mis(rng, rows: int, p: int, consts: dict):
    z = _normal(rng, (rows, p)) @ _mis_cholesky(p).T
    x = 2.0 * ndtr(z) - 1.0
    eps_y = _normal(rng, rows)
    y = (x @ consts["beta_y"] + eps_y >= 0.0).astype(np.float64)
    eps_s = _normal(rng, rows)
    s = consts["mu"] * y + x @ consts["eta1"] + y * (x @ consts["eta2"]) \
        + eps_s
    return x, s, y


def gen_mis(spec: ScenarioSpec):
    """Training and test Datasets plus truth oracle for scenarios i..iii.

    The label model is misspecified by construction; the oracle's
    coefficients are the large-sample best logistic approximation (computed
    lazily and cached on disk).
    """
    if spec.id not in MIS_IDS:
        raise ValueError(f"gen_mis needs a scenario in {MIS_IDS}")
    consts = coefficient_constants(spec.id, spec.p)
    rng = _rng(spec.seed)

    x, s, y = _draw_mis(rng, spec.N, spec.p, consts)
    labels = np.full(spec.N, np.nan)
    labels[: spec.n] = y[: spec.n]
    train = Dataset(features=x, surrogate=s, labels=labels)

    xt, st, yt = _draw_mis(rng, spec.test_size, spec.p, consts)
    test = Dataset(features=xt, surrogate=st, labels=yt)

    oracle = TruthOracle(scenario_id=spec.id, kind="approx", p=spec.p,
                         mu=consts["mu"], eta1=consts["eta1"],
                         eta2=consts["eta2"], beta_y=consts["beta_y"])
    return train, test, oracle


def generate(spec: ScenarioSpec):
    """Dispatch to the scenario family of spec.id."""
    if spec.id in MAIN_IDS:
        return gen_main(spec)
    return gen_mis(spec)


def true_linear_predictor(oracle: TruthOracle, s, x) -> np.ndarray:
    """True linear score for evaluation; delegates to the oracle."""
    return oracle.linear_predictor(s, x)


# ---------------------------------------------------------------------------
# best logistic approximation for the misspecified family
# ---------------------------------------------------------------------------

_limit_memo: dict[str, tuple[float, float, np.ndarray]] = {}


def _cache_dir() -> Path:
    env = os.environ.get("PASSGLM_CACHE")
    if env:
        return Path(env)
    xdg = os.environ.get("XDG_CACHE_HOME", "~/.cache")
    return Path(xdg).expanduser() / "passglm"


def limit_coefficients(scenario_id: str):
    """(zeta0, gamma0, beta0_head) minimizing the population logistic loss.

    Only the surrogate and the first correlated feature block carry signal,
    so the fit is restricted to those columns; the remaining coefficients
    are exactly zero by independence and symmetry. The result is estimated
    once from LIMIT_FIT_N draws on a fixed stream and cached to disk.
    """
    if scenario_id not in MIS_IDS:
        raise ValueError(f"no limit coefficients for scenario {scenario_id!r}")
    if scenario_id in _limit_memo:
        return _limit_memo[scenario_id]

    cache_file = _cache_dir() / f"limit_coefs_{scenario_id}.json"
    if cache_file.exists():
        blob = json.loads(cache_file.read_text())
        if blob.get("fit_n") == LIMIT_FIT_N and blob.get("seed") == LIMIT_FIT_SEED:
            out = (blob["zeta0"], blob["gamma0"],
                   np.asarray(blob["beta0_head"], dtype=np.float64))
            _limit_memo[scenario_id] = out
            return out

    consts = coefficient_constants(scenario_id, MIS_BLOCK)
    rng = _rng(LIMIT_FIT_SEED + MIS_IDS.index(scenario_id))
    x, s, y = _draw_mis(rng, LIMIT_FIT_N, MIS_BLOCK, consts)
    design = np.column_stack([s, x])

    from .solver import newton_logistic

    fit = newton_logistic(design, y)
    zeta0 = float(fit.intercept)
    gamma0 = float(fit.coefficients[0])
    beta_head = fit.coefficients[1:].copy()

    cache_file.parent.mkdir(parents=True, exist_ok=True)
    cache_file.write_text(json.dumps({
        "scenario": scenario_id,
        "zeta0": zeta0,
        "gamma0": gamma0,
        "beta0_head": beta_head.tolist(),
        "fit_n": LIMIT_FIT_N,
        "seed": LIMIT_FIT_SEED,
    }, indent=2))
    out = (zeta0, gamma0, beta_head)
    _limit_memo[scenario_id] = out
    return out
