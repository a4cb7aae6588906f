"""Closed-form and ensemble-based separations between relevance vectors.

For class means 0 and t a with spherical noise nu, the mixture covariance
has normalised eigen-spectrum ``(1 + g, 1, ..., 1) / (d + g)`` with
``g = t^2 / (4 nu^2)``.  Relevance vectors of two tasks whose directions
differ by a rotation ``alpha`` in the (e1, e2) plane are therefore a fixed
distance apart (the pessimistic separation); the rank-one stationary
metrics give the optimistic one.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigError, DegenerateSeparationError, DimensionError

SQRT2 = math.sqrt(2.0)
ZERO_SPREAD_RTOL = 1e-12


@dataclass(frozen=True)
class SeparationInputs:
    d: int
    t: float
    nu: float = 1.0
    alpha: float = math.pi / 2

    def __post_init__(self):
        if self.d < 2:
            raise ConfigError("d must be at least 2")
        if not self.t >= 0:
            raise ConfigError("t must be non-negative")
        if not self.nu > 0:
            raise ConfigError("nu must be positive")
        if not 0.0 <= self.alpha <= math.pi / 2 + 1e-12:
            raise ConfigError("alpha must lie in [0, pi/2]")


@dataclass(frozen=True)
class SeparationRecord:
    epsilon_p: Optional[float]
    epsilon_o: Optional[float]
    epsilon_e: float
    delta_e: float
    varsigma_1: float
    varsigma_2: float
    ratio_predicted: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


def kl_gamma_squared(t: float, nu: float) -> float:
    """KL divergence between N(0, nu^2 I) and N(t a, nu^2 I)."""
    if not nu > 0:
        raise ConfigError("nu must be positive")
    return t * t / (2.0 * nu * nu)


def _gamma_hat(t, nu):
    return kl_gamma_squared(t, nu) / 2.0


def theoretical_relevance(d: int, t: float, nu: float, a) -> np.ndarray:
    """Diagonal of the normalised mixture covariance for direction ``a``."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (d,):
        raise DimensionError(f"direction must have {d} entries")
    a = a / np.linalg.norm(a)
    g = _gamma_hat(t, nu)
    return (1.0 + g * a ** 2) / (d + g)


def theoretical_relevance_case1(d: int, t: float, nu: float) -> np.ndarray:
    g = _gamma_hat(t, nu)
    r = np.ones(d)
    r[0] += g
    return r / (d + g)


def theoretical_relevance_case2(d: int, t: float, nu: float, alpha: float) -> np.ndarray:
    g = _gamma_hat(t, nu)
    r = np.ones(d)
    r[0] += g * math.cos(alpha) ** 2
    r[1] += g * math.sin(alpha) ** 2
    return r / (d + g)


def pessimistic_separation(inputs: SeparationInputs) -> float:
    g = _gamma_hat(inputs.t, inputs.nu)
    return SQRT2 * (g / (inputs.d + g)) * math.sin(inputs.alpha) ** 2


def optimistic_separation(alpha: float) -> float:
    return SQRT2 * math.sin(alpha) ** 2


def separation_ratio(inputs: SeparationInputs) -> float:
    """Pessimistic over optimistic separation, ``1 / (1 + beta^2)`` with
    ``beta = 2 sqrt(d) nu / t``."""
    if inputs.t == 0:
        return 0.0
    beta = 2.0 * math.sqrt(inputs.d) / (inputs.t / inputs.nu)
    return 1.0 / (1.0 + beta * beta)


def _relevance_rows(ensemble) -> np.ndarray:
    rows = getattr(ensemble, "relevances", ensemble)
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise DimensionError("ensemble must be a non-empty (runs, d) array")
    return rows


def experimental_separation(r1, r2, inputs: Optional[SeparationInputs] = None,
                            strict: bool = True) -> SeparationRecord:
    """Distance between ensemble means and its size relative to the spread
    of the runs along the separating direction.

    ``r1`` and ``r2`` are relevance ensembles or (runs, d) arrays.  A zero
    mean difference always raises.  A zero spread raises when ``strict``;
    otherwise ``delta_e`` is reported as ``nan``.  Spreads below
    ``ZERO_SPREAD_RTOL * epsilon_e`` count as zero.  When ``inputs`` are given
    the closed-form bounds are filled in as well.
    """
    a = _relevance_rows(r1)
    b = _relevance_rows(r2)
    if a.shape[1] != b.shape[1]:
        raise DimensionError("ensembles differ in dimension")
    m1 = a.mean(axis=0)
    m2 = b.mean(axis=0)
    diff = m2 - m1
    eps_e = float(np.linalg.norm(diff))
    if eps_e == 0.0:
        raise DegenerateSeparationError("ensemble means coincide; no separating direction")
    r_hat = diff / eps_e
    spreads = []
    for rows, mean in ((a, m1), (b, m2)):
        p = (rows - mean) @ r_hat
        n = rows.shape[0]
        spreads.append(float(np.sqrt(np.sum(p ** 2) / (n - 1))) if n > 1 else 0.0)
    spread = (spreads[0] + spreads[1]) / 2.0
    # rounding in the means leaves ~1e-17 residue on constant ensembles
    if spread <= ZERO_SPREAD_RTOL * eps_e:
        if strict:
            raise DegenerateSeparationError("ensembles have zero spread along the separation")
        delta = math.nan
    else:
        delta = eps_e / spread
    eps_p = eps_o = ratio = None
    if inputs is not None:
        eps_p = pessimistic_separation(inputs)
        eps_o = optimistic_separation(inputs.alpha)
        ratio = separation_ratio(inputs)
    return SeparationRecord(eps_p, eps_o, eps_e, delta, spreads[0], spreads[1], ratio)


def direction_bounds(d: int, t: float, nu: float, a1, a2) -> tuple[float, float]:
    """Pessimistic and optimistic separation for arbitrary unit directions.

    Reduces to the closed forms above when ``a2`` is ``a1 = e1`` rotated in
    the (e1, e2) plane.
    """
    a1 = np.asarray(a1, dtype=np.float64) / np.linalg.norm(a1)
    a2 = np.asarray(a2, dtype=np.float64) / np.linalg.norm(a2)
    stationary = float(np.linalg.norm(a2 ** 2 - a1 ** 2))
    g = _gamma_hat(t, nu)
    return g / (d + g) * stationary, stationary


@dataclass(frozen=True)
class SweepCell:
    alpha_deg: float
    d: int
    eps_p_mean: float
    eps_p_std: float
    eps_o: float
    eps_e_mean: float
    eps_e_std: float
    delta_e_mean: float
    per_t: tuple = ()

    def row(self) -> dict:
        out = asdict(self)
        out.pop("per_t")
        return out


SWEEP_COLUMNS = ("alpha_deg", "d", "eps_p_mean", "eps_p_std", "eps_o",
                 "eps_e_mean", "eps_e_std", "delta_e_mean")


def _std(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(v.std(ddof=1)) if v.size > 1 else 0.0


def bound_sandwich_sweep(d_values, alpha_grid_deg, t_grid, runs: int = 100,
                         learner: str = "gmlvq", learner_config=None, nu: float = 1.0,
                         n_per_class: int = 500, base_seed: int = 0,
                         test_fraction: float = 0.3, threads: int = 1,
                         progress=None) -> list[SweepCell]:
    """Pessimistic, optimistic and experimental separation per (d, alpha) cell.

    Case 1 separates along e1; Case 2 along e1 rotated by alpha in the
    (e1, e2) plane.  Experimental separations are averaged over ``t_grid``.
    The Case-1 ensemble of a given (d, t) is shared by all angles.
    """
    from .datagen import GaussianTaskSpec, rotated_direction
    from .pipeline import PhaseOneConfig, run_phase1_case

    d_values = list(d_values)
    alpha_grid_deg = list(alpha_grid_deg)
    t_grid = list(t_grid)
    if not (d_values and alpha_grid_deg and t_grid):
        raise ConfigError("sweep grids must be non-empty")

    cells = []
    for d in d_values:
        e1 = np.eye(d)[0]
        case1 = {}
        for ti, t in enumerate(t_grid):
            cfg = PhaseOneConfig(runs=runs, learner=learner, learner_config=learner_config,
                                 test_fraction=test_fraction,
                                 base_seed=_cell_seed(base_seed, d, -1, ti))
            spec = GaussianTaskSpec(d, t, nu, e1, n_per_class)
            case1[ti] = run_phase1_case(spec, cfg, 1, threads=threads)
        for alpha_deg in alpha_grid_deg:
            alpha = math.radians(alpha_deg)
            a2 = rotated_direction(e1, alpha)
            eps_p, eps_e, delta = [], [], []
            for ti, t in enumerate(t_grid):
                if progress:
                    progress(f"bounds d={d} alpha={alpha_deg:g} t={t:g}")
                cfg = PhaseOneConfig(runs=runs, learner=learner, learner_config=learner_config,
                                     test_fraction=test_fraction,
                                     base_seed=_cell_seed(base_seed, d, alpha_deg, ti))
                ens2 = run_phase1_case(GaussianTaskSpec(d, t, nu, a2, n_per_class), cfg, 2,
                                       threads=threads)
                inputs = SeparationInputs(d, t, nu, alpha)
                eps_p.append(pessimistic_separation(inputs))
                try:
                    rec = experimental_separation(case1[ti], ens2, inputs, strict=False)
                    eps_e.append(rec.epsilon_e)
                    delta.append(rec.delta_e)
                except DegenerateSeparationError:
                    eps_e.append(0.0)
                    delta.append(math.nan)
            cells.append(SweepCell(float(alpha_deg), int(d), float(np.mean(eps_p)), _std(eps_p),
                                   optimistic_separation(alpha), float(np.mean(eps_e)),
                                   _std(eps_e), float(np.nanmean(delta)) if np.any(np.isfinite(delta)) else math.nan,
                                   tuple(zip(t_grid, eps_p, eps_e, delta))))
    return cells


def _cell_seed(base_seed: int, d: int, alpha_deg, t_index: int) -> int:
    from .pipeline import derive_seed
    return derive_seed(base_seed, "bounds", f"{d}:{alpha_deg}", t_index)
