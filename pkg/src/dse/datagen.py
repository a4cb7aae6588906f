"""Synthetic two-class Gaussian tasks.

Class 1 is drawn from N(0, nu^2 I) and class 2 from N(t a, nu^2 I) with a
unit direction ``a``.  Two such tasks whose directions differ play the
roles of population A and population B.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import ConfigError, DataError, DimensionError
from .linalg import as_vector, rotation_in_plane

# Shared support pattern of the two 17-feature benchmark directions.
_A1_PATTERN = (1.0, 1.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0)
_A2_PATTERN = (0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.5, 0.5)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator seeded with a 64-bit integer."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    population: Optional[str] = None
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels).astype(np.int64)
        if x.ndim != 2:
            raise DimensionError(f"features must be 2-D, got shape {x.shape}")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise DimensionError(
                f"{y.shape[0] if y.ndim == 1 else y.shape} labels for {x.shape[0]} rows")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        if y.size and not np.all(np.isin(y, (1, 2))):
            raise DataError("labels must be 1 or 2")
        if self.population is not None and self.population not in ("A", "B"):
            raise DataError(f"unknown population {self.population!r}")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != x.shape[1]:
                raise DimensionError("feature_names length does not match columns")
            object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> tuple[int, int]:
        return int(np.sum(self.labels == 1)), int(np.sum(self.labels == 2))

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(self.features[idx], self.labels[idx],
                              self.population, self.feature_names)


@dataclass(frozen=True)
class GaussianTaskSpec:
    """Parameters of one synthetic task.

    ``a`` is normalised to unit length on construction; the vector as given
    is kept in ``a_raw``.
    """

    d: int
    t: float
    nu: float = 1.0
    a: Optional[np.ndarray] = None
    n_per_class: int = 500
    seed: int = 0
    a_raw: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.d) < 1:
            raise ConfigError("d must be positive")
        if not self.t >= 0:
            raise ConfigError("t must be non-negative")
        if not self.nu > 0:
            raise ConfigError("nu must be positive")
        if int(self.n_per_class) < 1:
            raise ConfigError("n_per_class must be at least 1")
        raw = np.eye(self.d)[0] if self.a is None else as_vector(self.a, "a")
        if raw.shape[0] != self.d:
            raise DimensionError(f"direction has {raw.shape[0]} entries, d={self.d}")
        norm = np.linalg.norm(raw)
        if norm == 0:
            raise ConfigError("direction must be non-zero")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "n_per_class", int(self.n_per_class))
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "a_raw", raw.copy())
        object.__setattr__(self, "a", raw / norm)

    def with_seed(self, seed: int) -> "GaussianTaskSpec":
        return GaussianTaskSpec(self.d, self.t, self.nu, self.a_raw,
                                self.n_per_class, seed)


def sample_task(spec: GaussianTaskSpec, population: Optional[str] = None) -> LabeledDataset:
    """Draw ``n_per_class`` samples of each class; class-1 rows come first."""
    rng = make_rng(spec.seed)
    n = spec.n_per_class
    z = rng.standard_normal((2 * n, spec.d))
    x = spec.nu * z
    x[n:] += spec.t * spec.a
    labels = np.repeat(np.array([1, 2]), n)
    return LabeledDataset(x, labels, population)


def paper_directions(d: int = 17) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal unit directions with disjoint supports {1,2,5,6} and {3,4,7,8}.

    For d = 17 these are the benchmark vectors; other d >= 8 zero-pad the
    same pattern.
    """
    if d < 8:
        raise DimensionError(f"benchmark directions need d >= 8, got {d}")
    a1 = np.zeros(d)
    a2 = np.zeros(d)
    a1[:8] = _A1_PATTERN
    a2[:8] = _A2_PATTERN
    return a1 / np.linalg.norm(a1), a2 / np.linalg.norm(a2)


def raw_paper_directions(d: int = 17) -> tuple[np.ndarray, np.ndarray]:
    if d < 8:
        raise DimensionError(f"benchmark directions need d >= 8, got {d}")
    a1 = np.zeros(d)
    a2 = np.zeros(d)
    a1[:8] = _A1_PATTERN
    a2[:8] = _A2_PATTERN
    return a1, a2


def rotated_direction(a, alpha: float, plane: tuple[int, int] = (0, 1)) -> np.ndarray:
    a = as_vector(a, "a")
    if abs(np.linalg.norm(a) - 1.0) > 1e-12:
        raise ConfigError("direction must have unit norm")
    r = rotation_in_plane(a.shape[0], plane[0], plane[1], alpha)
    out = r @ a
    return out / np.linalg.norm(out)


def theoretical_covariance(spec: GaussianTaskSpec) -> np.ndarray:
    """Covariance of the flat two-component mixture: nu^2 I + (t^2/4) a a^T."""
    return spec.nu ** 2 * np.eye(spec.d) + (spec.t ** 2 / 4.0) * np.outer(spec.a, spec.a)


def kl_monte_carlo(spec: GaussianTaskSpec, n_samples: int = 100_000,
                   seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo estimate of KL(class 1 || class 2) and its standard error.

    Averages log p1(x) - log p2(x) over samples of class 1.
    """
    rng = make_rng(seed)
    x = spec.nu * rng.standard_normal((n_samples, spec.d))
    mu2 = spec.t * spec.a
    # shared normalising constants cancel in the log-ratio
    log_ratio = (np.sum((x - mu2) ** 2, axis=1) - np.sum(x ** 2, axis=1)) / (2 * spec.nu ** 2)
    return float(log_ratio.mean()), float(log_ratio.std(ddof=1) / np.sqrt(n_samples))
