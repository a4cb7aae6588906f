"""Linear soft-margin SVM.

The default solver is averaged stochastic subgradient descent on

    penalty(omega) + mean_i max(0, 1 - y_i (omega . z_i + b))

with ``penalty = (lam/2) ||omega||^2`` (L2) or ``lam ||omega||_1`` (L1,
applied by truncated-gradient shrinkage).  ``z`` are the features z-scored
with training statistics, and labels 1/2 map to -1/+1.

``solver="dual"`` runs dual coordinate descent on the L2 problem instead
(bias folded in as a constant feature, so it is regularised too).  It
converges to the exact optimum and is used where SGD noise would mask a
property of the optimum itself.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numba
import numpy as np

from ..datagen import LabeledDataset, make_rng
from ..exceptions import ConfigError, DegenerateModelError, DegenerateTaskError, DimensionError
from ..linalg import as_vector


@dataclass(frozen=True)
class SvmConfig:
    penalty: str = "l2"
    strength: Optional[float] = None  # None means 1 / n_train
    epochs: int = 50
    eta0: float = 1.0
    solver: str = "sgd"
    standardize: bool = True
    tol: float = 1e-10
    max_dual_epochs: int = 20000

    def __post_init__(self):
        if self.penalty not in ("l1", "l2"):
            raise ConfigError(f"unknown penalty {self.penalty!r}")
        if self.solver not in ("sgd", "dual"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.solver == "dual" and self.penalty != "l2":
            raise ConfigError("the dual solver supports the l2 penalty only")
        if self.strength is not None and not self.strength > 0:
            raise ConfigError("strength must be positive")


@dataclass
class SvmModel:
    omega_weights: np.ndarray
    bias: float
    config: SvmConfig = field(default_factory=SvmConfig)
    strength: float = 0.0
    feature_mean: Optional[np.ndarray] = None
    feature_scale: Optional[np.ndarray] = None
    objective_trace: list = field(default_factory=list)
    seed: int = 0

    kind = "svm"

    def __post_init__(self):
        self.omega_weights = np.asarray(self.omega_weights, dtype=np.float64)
        self.bias = float(self.bias)
        if self.feature_mean is not None:
            self.feature_mean = np.asarray(self.feature_mean, dtype=np.float64)
            self.feature_scale = np.asarray(self.feature_scale, dtype=np.float64)

    @property
    def d(self) -> int:
        return self.omega_weights.shape[0]

    def transform(self, x: np.ndarray) -> np.ndarray:
        if self.feature_mean is None:
            return x
        return (x - self.feature_mean) / self.feature_scale


@numba.njit(cache=True, nogil=True)
def _objective(z, y, w, b, lam, l1):
    n = z.shape[0]
    loss = 0.0
    for i in range(n):
        m = y[i] * (np.dot(z[i], w) + b)
        if m < 1.0:
            loss += 1.0 - m
    reg = lam * np.sum(np.abs(w)) if l1 else 0.5 * lam * np.dot(w, w)
    return reg + loss / n


@numba.njit(cache=True, nogil=True)
def _sgd(z, y, orders, lam, l1, eta0):
    epochs, n = orders.shape
    d = z.shape[1]
    w = np.zeros(d)
    b = 0.0
    w_avg = np.zeros(d)
    b_avg = 0.0
    n_avg = 0
    burn_in = n if epochs > 1 else 0
    trace = np.empty(epochs)
    step = 0
    for e in range(epochs):
        for ii in range(n):
            i = orders[e, ii]
            eta = eta0 / (1.0 + eta0 * lam * step)
            margin = y[i] * (np.dot(z[i], w) + b)
            if not l1:
                w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * y[i] * z[i]
                b += eta * y[i]
            if l1:
                shrink = eta * lam
                for j in range(d):
                    if w[j] > shrink:
                        w[j] -= shrink
                    elif w[j] < -shrink:
                        w[j] += shrink
                    else:
                        w[j] = 0.0
            step += 1
            if step > burn_in:
                n_avg += 1
                w_avg += (w - w_avg) / n_avg
                b_avg += (b - b_avg) / n_avg
        trace[e] = _objective(z, y, w_avg, b_avg, lam, l1)
    return w_avg, b_avg, trace


@numba.njit(cache=True, nogil=True)
def _dual_cd(z, y, orders, c, tol, max_epochs):
    """Dual coordinate descent for the hinge loss with an augmented bias."""
    n, d = z.shape
    alpha = np.zeros(n)
    w = np.zeros(d + 1)
    qii = np.empty(n)
    for i in range(n):
        qii[i] = np.dot(z[i], z[i]) + 1.0
    e = 0
    while e < max_epochs:
        pg_max = -np.inf
        pg_min = np.inf
        for ii in range(n):
            i = orders[e % orders.shape[0], ii]
            g = y[i] * (np.dot(w[:d], z[i]) + w[d]) - 1.0
            pg = g
            if alpha[i] <= 0.0:
                pg = min(g, 0.0)
            elif alpha[i] >= c:
                pg = max(g, 0.0)
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if pg != 0.0:
                old = alpha[i]
                alpha[i] = min(max(old - g / qii[i], 0.0), c)
                delta = (alpha[i] - old) * y[i]
                w[:d] += delta * z[i]
                w[d] += delta
        e += 1
        if pg_max - pg_min < tol:
            break
    return w[:d].copy(), w[d], e


def _check_task(data: LabeledDataset):
    n1, n2 = data.class_counts()
    if n1 == 0 or n2 == 0:
        raise DegenerateTaskError(f"both classes required, got counts {n1}/{n2}")


def train_svm(data: LabeledDataset, config: Optional[SvmConfig] = None,
              seed: int = 0) -> SvmModel:
    config = config or SvmConfig()
    _check_task(data)
    x = data.features
    mean = scale = None
    if config.standardize:
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        z = (x - mean) / scale
    else:
        z = x.copy()
    y = np.where(data.labels == 2, 1.0, -1.0)
    n = data.n
    lam = 1.0 / n if config.strength is None else float(config.strength)
    rng = make_rng(seed)

    if config.solver == "sgd":
        orders = np.stack([rng.permutation(n) for _ in range(config.epochs)]).astype(np.int64)
        eta0 = min(config.eta0, 1.0 / lam) if config.penalty == "l2" else config.eta0
        w, b, trace = _sgd(z, y, orders, lam, config.penalty == "l1", eta0)
        trace = trace.tolist()
    else:
        orders = np.stack([rng.permutation(n) for _ in range(16)]).astype(np.int64)
        w, b, _ = _dual_cd(z, y, orders, 1.0 / (lam * n), config.tol, config.max_dual_epochs)
        trace = [float(_objective(z, y, w, b, lam, False))]

    if not np.any(w != 0):
        raise DegenerateModelError("training produced an all-zero weight vector")
    return SvmModel(w, float(b), config, lam, mean, scale, trace, seed)


def svm_score(model: SvmModel, x):
    """``omega . x + b`` (after the model's feature standardisation)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.d:
        raise DimensionError(f"expected {model.d} features, got {x.shape[1]}")
    s = model.transform(x) @ model.omega_weights + model.bias
    return float(s[0]) if single else s


def svm_to_dict(model: SvmModel) -> dict:
    w = model.omega_weights
    norm = np.linalg.norm(w)
    return {
        "kind": "svm",
        "dimension": model.d,
        "omega": w.tolist(),
        "bias": model.bias,
        "lambda": np.outer(w / norm, w / norm).ravel().tolist() if norm > 0 else None,
        "relevance": ((w / norm) ** 2).tolist() if norm > 0 else None,
        "strength": model.strength,
        "feature_mean": None if model.feature_mean is None else model.feature_mean.tolist(),
        "feature_scale": None if model.feature_scale is None else model.feature_scale.tolist(),
        "objective_trace": list(model.objective_trace),
        "config": asdict(model.config),
        "seed": int(model.seed),
    }


def svm_from_dict(doc: dict) -> SvmModel:
    return SvmModel(np.array(doc["omega"], dtype=np.float64), doc["bias"],
                    SvmConfig(**doc.get("config", {})), doc.get("strength", 0.0),
                    doc.get("feature_mean"), doc.get("feature_scale"),
                    list(doc.get("objective_trace", [])), int(doc.get("seed", 0)))
