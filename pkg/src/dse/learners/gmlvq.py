"""Generalized Matrix LVQ with a global quadratic metric.

Distances are ``(x - w)^T Lambda (x - w)`` with ``Lambda = Omega^T Omega``.
Training is stochastic gradient descent on ``sum_i Phi(mu_i)`` where
``mu = (d_J - d_K) / (d_J + d_K)`` compares the closest correct prototype J
with the closest wrong prototype K and ``Phi`` is a logistic function.
``Omega`` is rescaled to unit Frobenius norm after every update, which keeps
``trace(Lambda) = 1``.

Features are centred and divided by one global scale before training.  A
common scale leaves the learned ``Lambda`` unchanged (only its overall
magnitude would be affected, and that is fixed by the trace), but makes the
fixed learning rates meaningful for data of any magnitude.  Prototypes are
mapped back to input coordinates afterwards.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numba
import numpy as np

from ..datagen import LabeledDataset, make_rng
from ..exceptions import ConfigError, DegenerateTaskError, DimensionError
from ..linalg import OFFDIAG_TOL, MAX_SWEEPS, as_vector, jacobi_eigh


@dataclass(frozen=True)
class GmlvqConfig:
    prototypes_per_class: int = 1
    epochs: int = 100
    lr_prototypes: float = 0.05
    lr_metric: Optional[float] = None  # defaults to lr_prototypes / 10
    anneal_epochs: float = 10.0
    phi_slope: float = 4.0
    jitter: float = 0.01
    eps: float = 1e-12

    def __post_init__(self):
        if int(self.prototypes_per_class) < 1:
            raise ConfigError("prototypes_per_class must be at least 1")
        if int(self.epochs) < 0:
            raise ConfigError("epochs must be non-negative")
        for name in ("lr_prototypes", "anneal_epochs", "phi_slope", "eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.lr_metric is not None and not self.lr_metric > 0:
            raise ConfigError("lr_metric must be positive")
        if not self.jitter >= 0:
            raise ConfigError("jitter must be non-negative")

    @property
    def metric_rate(self) -> float:
        return self.lr_prototypes / 10.0 if self.lr_metric is None else self.lr_metric


@dataclass
class GmlvqModel:
    prototypes: np.ndarray         # (k, d), input coordinates
    prototype_labels: np.ndarray   # (k,) class ids
    omega: np.ndarray              # (d, d)
    cost_trace: list = field(default_factory=list)
    config: GmlvqConfig = field(default_factory=GmlvqConfig)
    seed: int = 0
    monitor: Optional[dict] = None

    kind = "gmlvq"

    def __post_init__(self):
        self.prototypes = np.atleast_2d(np.asarray(self.prototypes, dtype=np.float64))
        self.prototype_labels = np.asarray(self.prototype_labels, dtype=np.int64)
        self.omega = np.asarray(self.omega, dtype=np.float64)
        k, d = self.prototypes.shape
        if self.omega.shape != (d, d):
            raise DimensionError(f"omega must be {d}x{d}, got {self.omega.shape}")
        if self.prototype_labels.shape != (k,):
            raise DimensionError("one label per prototype required")
        if not (np.any(self.prototype_labels == 1) and np.any(self.prototype_labels == 2)):
            raise DegenerateTaskError("need at least one prototype per class")

    @property
    def d(self) -> int:
        return self.prototypes.shape[1]

    @property
    def lambda_(self) -> np.ndarray:
        return self.omega.T @ self.omega


# -- compiled core ---------------------------------------------------------

# Reassociation lets the inner reductions vectorise; no inf/nan assumptions.
_FAST = {"reassoc", "contract", "nsz"}


@numba.njit(cache=True, nogil=True, fastmath=_FAST)
def _project(x, c, w, wl, omega, proj):
    """Fill ``proj[m] = Omega (x - w_m)`` and return the closest correct (J)
    and closest wrong (K) prototype with their distances.  Ties go to the
    lower prototype index."""
    k, d = w.shape
    jbest = -1
    kbest = -1
    dj = np.inf
    dk = np.inf
    u = np.empty(d)
    for m in range(k):
        for b in range(d):
            u[b] = x[b] - w[m, b]
        dist = 0.0
        for a in range(d):
            s = 0.0
            for b in range(d):
                s += omega[a, b] * u[b]
            proj[m, a] = s
            dist += s * s
        if wl[m] == c:
            if dist < dj:
                dj = dist
                jbest = m
        else:
            if dist < dk:
                dk = dist
                kbest = m
    return jbest, kbest, dj, dk


@numba.njit(cache=True, nogil=True, fastmath=_FAST)
def _terms(x, c, w, wl, omega, slope, eps, proj, uj, uk, pj, pk):
    """Winner indices, cost and distance-derivative weights of one sample.

    Fills ``u = x - w`` and ``p = Omega u`` for both winners.
    """
    d = x.shape[0]
    jb, kb, dj, dk = _project(x, c, w, wl, omega, proj)
    s = dj + dk + eps
    mu = (dj - dk) / s
    phi = 1.0 / (1.0 + np.exp(-slope * mu))
    dphi = slope * phi * (1.0 - phi)
    # dPhi/dd_J = xi_j and dPhi/dd_K = -xi_k
    xi_j = dphi * (2.0 * dk + eps) / (s * s)
    xi_k = dphi * (2.0 * dj + eps) / (s * s)
    for b in range(d):
        uj[b] = x[b] - w[jb, b]
        uk[b] = x[b] - w[kb, b]
        pj[b] = proj[jb, b]
        pk[b] = proj[kb, b]
    return phi, mu, jb, kb, xi_j, xi_k


@numba.njit(cache=True, nogil=True, fastmath=_FAST)
def _prototype_grads(omega, xi_j, xi_k, pj, pk, gwj, gwk):
    # d(d_J)/d(w_J) = -2 Omega^T Omega (x - w_J)
    d = omega.shape[0]
    gwj[:] = 0.0
    gwk[:] = 0.0
    for a in range(d):
        cj = -2.0 * xi_j * pj[a]
        ck = 2.0 * xi_k * pk[a]
        for b in range(d):
            gwj[b] += cj * omega[a, b]
            gwk[b] += ck * omega[a, b]


@numba.njit(cache=True, nogil=True, fastmath=_FAST)
def _omega_step(omega, rate, xi_j, xi_k, uj, uk, pj, pk):
    """``omega -= rate * dPhi/dOmega``; returns the squared Frobenius norm
    of the result.  d(d_J)/dOmega = 2 (Omega u_J) u_J^T."""
    d = omega.shape[0]
    norm = 0.0
    for a in range(d):
        cj = 2.0 * rate * xi_j * pj[a]
        ck = 2.0 * rate * xi_k * pk[a]
        for b in range(d):
            v = omega[a, b] - (cj * uj[b] - ck * uk[b])
            omega[a, b] = v
            norm += v * v
    return norm


@numba.njit(cache=True, nogil=True)
def sample_gradient(x, c, w, wl, omega, slope, eps):
    """Cost ``Phi(mu)`` of one sample and its gradients, using the same
    routines as the training loop.

    Returns ``(phi, mu, J, K, grad_wJ, grad_wK, grad_omega)``.
    """
    d = x.shape[0]
    uj = np.empty(d)
    uk = np.empty(d)
    pj = np.empty(d)
    pk = np.empty(d)
    proj = np.empty(w.shape)
    phi, mu, jb, kb, xi_j, xi_k = _terms(x, c, w, wl, omega, slope, eps, proj, uj, uk, pj, pk)
    gwj = np.empty(d)
    gwk = np.empty(d)
    _prototype_grads(omega, xi_j, xi_k, pj, pk, gwj, gwk)
    gom = np.zeros((d, d))
    _omega_step(gom, -1.0, xi_j, xi_k, uj, uk, pj, pk)
    return phi, mu, jb, kb, gwj, gwk, gom


@numba.njit(cache=True, nogil=True)
def _total_cost(x, y, w, wl, omega, slope, eps):
    proj = np.empty(w.shape)
    total = 0.0
    for i in range(x.shape[0]):
        _, _, dj, dk = _project(x[i], y[i], w, wl, omega, proj)
        mu = (dj - dk) / (dj + dk + eps)
        total += 1.0 / (1.0 + np.exp(-slope * mu))
    return total


@numba.njit(cache=True, nogil=True, fastmath=_FAST)
def _sgd(x, y, w, wl, omega, orders, lr_w, lr_o, anneal, slope, eps, monitor_every):
    epochs, n = orders.shape
    d = x.shape[1]
    uj = np.empty(d)
    uk = np.empty(d)
    pj = np.empty(d)
    pk = np.empty(d)
    gwj = np.empty(d)
    gwk = np.empty(d)
    proj = np.empty(w.shape)
    costs = np.empty(epochs + 1)
    costs[0] = _total_cost(x, y, w, wl, omega, slope, eps)
    worst_trace = 0.0
    worst_eig = np.inf
    checks = 0
    step = 0
    for e in range(epochs):
        decay = 1.0 + e / anneal
        ew = lr_w / decay
        eo = lr_o / decay
        for ii in range(n):
            i = orders[e, ii]
            _, _, jb, kb, xi_j, xi_k = _terms(x[i], y[i], w, wl, omega, slope, eps,
                                             proj, uj, uk, pj, pk)
            _prototype_grads(omega, xi_j, xi_k, pj, pk, gwj, gwk)
            for b in range(d):
                w[jb, b] -= ew * gwj[b]
                w[kb, b] -= ew * gwk[b]
            scale = 1.0 / np.sqrt(_omega_step(omega, eo, xi_j, xi_k, uj, uk, pj, pk))
            for a in range(d):
                for b in range(d):
                    omega[a, b] *= scale
            step += 1
            if monitor_every > 0 and step % monitor_every == 0:
                lam = omega.T @ omega
                tr = 0.0
                for a in range(d):
                    tr += lam[a, a]
                worst_trace = max(worst_trace, abs(tr - 1.0))
                ev, _, _ = jacobi_eigh(lam, OFFDIAG_TOL, MAX_SWEEPS)
                worst_eig = min(worst_eig, ev.min())
                checks += 1
        costs[e + 1] = _total_cost(x, y, w, wl, omega, slope, eps)
    return costs, worst_trace, worst_eig, checks


# -- public API ------------------------------------------------------------

def _check_task(data: LabeledDataset):
    n1, n2 = data.class_counts()
    if n1 == 0 or n2 == 0:
        raise DegenerateTaskError(f"both classes required, got counts {n1}/{n2}")


def train_gmlvq(data: LabeledDataset, config: Optional[GmlvqConfig] = None,
                seed: int = 0, monitor_every: int = 0) -> GmlvqModel:
    """Fit prototypes and metric by shuffled-epoch SGD.

    With ``monitor_every > 0`` the trace and smallest eigenvalue of Lambda
    are checked every that many updates; the worst values end up in
    ``model.monitor``.
    """
    config = config or GmlvqConfig()
    _check_task(data)
    x = data.features
    centre = x.mean(axis=0)
    scale = float(np.sqrt(np.mean(x.var(axis=0))))
    if not scale > 0:
        scale = 1.0
    xs = (x - centre) / scale
    d = x.shape[1]
    rng = make_rng(seed)

    protos, plabels = [], []
    for c in (1, 2):
        mean_c = xs[data.labels == c].mean(axis=0)
        for _ in range(config.prototypes_per_class):
            protos.append(mean_c + config.jitter * rng.standard_normal(d))
            plabels.append(c)
    w = np.array(protos)
    wl = np.array(plabels, dtype=np.int64)
    omega = np.eye(d) / np.sqrt(d)
    orders = np.stack([rng.permutation(data.n) for _ in range(config.epochs)]) \
        if config.epochs > 0 else np.zeros((0, data.n), dtype=np.int64)

    costs, worst_trace, worst_eig, checks = _sgd(
        xs, data.labels, w, wl, omega, orders.astype(np.int64),
        config.lr_prototypes, config.metric_rate, config.anneal_epochs,
        config.phi_slope, config.eps, int(monitor_every))

    monitor = None
    if monitor_every > 0:
        monitor = {"checks": int(checks), "max_trace_deviation": float(worst_trace),
                   "min_eigenvalue": float(worst_eig)}
    return GmlvqModel(centre + scale * w, wl, omega, costs.tolist(), config, seed, monitor)


def gmlvq_distance(model: GmlvqModel, w, x) -> float:
    w = as_vector(w, "w")
    x = as_vector(x, "x")
    if w.shape[0] != model.d or x.shape[0] != model.d:
        raise DimensionError(f"expected vectors of length {model.d}")
    u = model.omega @ (x - w)
    return float(u @ u)


def _distances(model: GmlvqModel, x: np.ndarray) -> np.ndarray:
    """(n, k) matrix of distances from every row of ``x`` to every prototype."""
    diff = x[:, None, :] - model.prototypes[None, :, :]
    proj = diff @ model.omega.T
    return np.einsum("nkd,nkd->nk", proj, proj)


def gmlvq_mu(model: GmlvqModel, data: LabeledDataset) -> np.ndarray:
    """Relative distance difference of each labelled sample."""
    if data.d != model.d:
        raise DimensionError(f"data has {data.d} features, model {model.d}")
    dist = _distances(model, data.features)
    same = data.labels[:, None] == model.prototype_labels[None, :]
    dj = np.where(same, dist, np.inf).min(axis=1)
    dk = np.where(~same, dist, np.inf).min(axis=1)
    return (dj - dk) / (dj + dk + model.config.eps)


def gmlvq_cost(model: GmlvqModel, data: LabeledDataset) -> float:
    mu = gmlvq_mu(model, data)
    return float(np.sum(1.0 / (1.0 + np.exp(-model.config.phi_slope * mu))))


def gmlvq_score(model: GmlvqModel, x) -> np.ndarray:
    """``(d1 - d2) / (d1 + d2)`` with d_c the distance to the nearest class-c
    prototype.  Positive values favour class 2."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.d:
        raise DimensionError(f"expected {model.d} features, got {x.shape[1]}")
    dist = _distances(model, x)
    d1 = dist[:, model.prototype_labels == 1].min(axis=1)
    d2 = dist[:, model.prototype_labels == 2].min(axis=1)
    score = (d1 - d2) / (d1 + d2 + model.config.eps)
    return float(score[0]) if single else score


def gmlvq_to_dict(model: GmlvqModel) -> dict:
    lam = model.lambda_
    return {
        "kind": "gmlvq",
        "dimension": model.d,
        "prototypes": [{"w": p.tolist(), "class": int(c)}
                       for p, c in zip(model.prototypes, model.prototype_labels)],
        "omega": model.omega.ravel().tolist(),
        "lambda": lam.ravel().tolist(),
        "relevance": np.diag(lam).tolist(),
        "cost_trace": list(model.cost_trace),
        "config": asdict(model.config),
        "seed": int(model.seed),
    }


def gmlvq_from_dict(doc: dict) -> GmlvqModel:
    d = int(doc["dimension"])
    protos = np.array([p["w"] for p in doc["prototypes"]], dtype=np.float64).reshape(-1, d)
    labels = np.array([p["class"] for p in doc["prototypes"]], dtype=np.int64)
    omega = np.array(doc["omega"], dtype=np.float64).reshape(d, d)
    return GmlvqModel(protos, labels, omega, list(doc.get("cost_trace", [])),
                      GmlvqConfig(**doc.get("config", {})), int(doc.get("seed", 0)))
