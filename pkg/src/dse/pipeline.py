"""Two-phase discriminative subspace emersion.

Phase 1 trains an ensemble of base learners on the same binary task in two
populations (Case 1 and Case 2) and keeps one relevance vector per run.
Phase 2 treats those relevance vectors as samples labelled by population
and trains the learner again; its relevances point at the features on
which the task differs between populations.
"""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from .datagen import GaussianTaskSpec, LabeledDataset, make_rng, sample_task
from .exceptions import ConfigError, DataError, DegenerateSeparationError, DimensionError
from .learners import (GmlvqModel, LearnerConfig, classifier_score, config_kind,
                       default_config, relevance, train, validate_relevance)
from .metrics import embed2d, mean_roc, roc_auc
from .separations import experimental_separation, direction_bounds

log = logging.getLogger(__name__)

_U64 = 0xFFFFFFFFFFFFFFFF


def derive_seed(base_seed: int, phase, case, run) -> int:
    """Base seed XOR a 64-bit hash of (phase, case, run)."""
    h = hashlib.blake2b(f"{phase}|{case}|{run}".encode(), digest_size=8).digest()
    return (int(base_seed) & _U64) ^ int.from_bytes(h, "little")


@dataclass(frozen=True)
class PhaseOneConfig:
    runs: int = 100
    learner: str = "gmlvq"
    learner_config: Optional[LearnerConfig] = None
    resampling: Optional[str] = None  # inferred from the data source when None
    test_fraction: float = 0.3
    base_seed: int = 0

    def __post_init__(self):
        if self.runs < 2:
            raise ConfigError("runs must be at least 2")
        if not 0.0 < self.test_fraction <= 0.5:
            raise ConfigError("test_fraction must lie in (0, 0.5]")
        if self.resampling not in (None, "fresh-synthetic", "undersample-real"):
            raise ConfigError(f"unknown resampling mode {self.resampling!r}")
        cfg = self.learner_config if self.learner_config is not None else default_config(self.learner)
        if config_kind(cfg) != self.learner:
            raise ConfigError(f"learner_config does not match learner {self.learner!r}")
        object.__setattr__(self, "learner_config", cfg)


# Phase 2 takes the same knobs; the split is a fresh 70/30 draw each run.
Phase2Config = PhaseOneConfig


@dataclass
class RelevanceEnsemble:
    phase: int
    case: Optional[int]
    relevances: np.ndarray
    aucs: np.ndarray
    seeds: list
    roc_fpr: np.ndarray = field(default_factory=lambda: np.zeros(0))
    roc_tpr: np.ndarray = field(default_factory=lambda: np.zeros(0))
    embedding: Optional[dict] = None

    def __post_init__(self):
        self.relevances = np.asarray(self.relevances, dtype=np.float64)
        self.aucs = np.asarray(self.aucs, dtype=np.float64)
        self.roc_fpr = np.asarray(self.roc_fpr, dtype=np.float64)
        self.roc_tpr = np.asarray(self.roc_tpr, dtype=np.float64)
        if self.relevances.ndim != 2:
            raise DimensionError("relevances must be a (runs, d) array")
        if self.aucs.shape != (self.relevances.shape[0],):
            raise DimensionError("one AUC per run required")

    @property
    def runs(self) -> int:
        return self.relevances.shape[0]

    @property
    def d(self) -> int:
        return self.relevances.shape[1]

    def mean_relevance(self) -> np.ndarray:
        return self.relevances.mean(axis=0)

    def auc_summary(self) -> dict:
        std = float(self.aucs.std(ddof=1)) if self.runs > 1 else 0.0
        return {"mean": float(self.aucs.mean()), "std": std}

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "case": self.case,
            "relevances": self.relevances.tolist(),
            "aucs": self.aucs.tolist(),
            "seeds": [int(s) for s in self.seeds],
            "roc_fpr": self.roc_fpr.tolist(),
            "roc_tpr": self.roc_tpr.tolist(),
            "embedding": self.embedding,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RelevanceEnsemble":
        return cls(doc["phase"], doc["case"], np.array(doc["relevances"], dtype=np.float64),
                   np.array(doc["aucs"], dtype=np.float64), list(doc["seeds"]),
                   np.array(doc["roc_fpr"]), np.array(doc["roc_tpr"]), doc.get("embedding"))


def stratified_split(labels: np.ndarray, test_fraction: float,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-class random split; each class keeps at least one row on each side
    when it has two or more."""
    train_idx, test_idx = [], []
    for c in (1, 2):
        idx = rng.permutation(np.flatnonzero(labels == c))
        k = int(round(test_fraction * idx.size))
        if idx.size >= 2:
            k = min(max(k, 1), idx.size - 1)
        test_idx.append(idx[:k])
        train_idx.append(idx[k:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def paired_split(labels: np.ndarray, test_fraction: float,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Split that sends the j-th row of class 1 and the j-th row of class 2
    to the same side.

    Phase-2 rows are indexed by run, and independent per-class splits would
    put the twin of a held-out row into the other class's training set
    whenever the two ensembles share vectors.  Falls back to
    :func:`stratified_split` when the classes differ in size.
    """
    c1, c2 = np.flatnonzero(labels == 1), np.flatnonzero(labels == 2)
    if c1.size != c2.size or c1.size < 2:
        return stratified_split(labels, test_fraction, rng)
    m = c1.size
    perm = rng.permutation(m)
    k = min(max(int(round(test_fraction * m)), 1), m - 1)
    test = np.r_[c1[perm[:k]], c2[perm[:k]]]
    train = np.r_[c1[perm[k:]], c2[perm[k:]]]
    return np.sort(train), np.sort(test)


def undersample_balanced(data: LabeledDataset, seed: int) -> LabeledDataset:
    """Downsample both classes without replacement to the minority count."""
    n1, n2 = data.class_counts()
    if n1 == 0 or n2 == 0:
        raise DataError(f"cannot balance: class counts are {n1}/{n2}")
    m = min(n1, n2)
    rng = make_rng(seed)
    keep = [rng.choice(np.flatnonzero(data.labels == c), size=m, replace=False) for c in (1, 2)]
    return data.subset(np.sort(np.concatenate(keep)))


@dataclass
class _RunResult:
    relevance: np.ndarray
    auc: float
    roc: object
    embedding: Optional[dict]


def _fit_and_score(data: LabeledDataset, config: PhaseOneConfig, rng: np.random.Generator,
                   want_embedding: bool, monitor_every: int, monitors: Optional[list],
                   split=stratified_split):
    train_idx, test_idx = split(data.labels, config.test_fraction, rng)
    train_set, test_set = data.subset(train_idx), data.subset(test_idx)
    model = train(train_set, config.learner_config, int(rng.integers(0, 2 ** 63)),
                  monitor_every=monitor_every)
    if monitors is not None and getattr(model, "monitor", None):
        monitors.append(model.monitor)
    r = validate_relevance(relevance(model))
    roc = roc_auc(classifier_score(model, test_set.features), test_set.labels)
    emb = None
    if want_embedding and isinstance(model, GmlvqModel):
        emb = {"coordinates": embed2d(model, test_set).tolist(),
               "labels": test_set.labels.tolist()}
    return _RunResult(r, roc.auc, roc, emb)


def _gather(run_fn, runs: int, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run_fn, range(runs)))
    return [run_fn(i) for i in range(runs)]


def _assemble(phase: int, case: Optional[int], results, seeds) -> RelevanceEnsemble:
    fpr, tpr = mean_roc([res.roc for res in results])
    return RelevanceEnsemble(phase, case, np.stack([res.relevance for res in results]),
                             np.array([res.auc for res in results]), seeds, fpr, tpr,
                             results[0].embedding)


def run_phase1_case(source: Union[GaussianTaskSpec, LabeledDataset], config: PhaseOneConfig,
                    case: int, threads: int = 1, monitor_every: int = 0,
                    monitors: Optional[list] = None) -> RelevanceEnsemble:
    """Train ``config.runs`` learners on fresh draws of one population.

    Synthetic sources are re-sampled each run; real datasets are randomly
    undersampled to balanced classes each run.
    """
    if case not in (1, 2):
        raise ConfigError("case must be 1 or 2")
    synthetic = isinstance(source, GaussianTaskSpec)
    expected = "fresh-synthetic" if synthetic else "undersample-real"
    if config.resampling not in (None, expected):
        raise ConfigError(f"resampling {config.resampling!r} does not fit this data source")
    if not synthetic:
        n1, n2 = source.class_counts()
        if n1 == 0 or n2 == 0:
            raise DataError(f"case {case} data lacks a class (counts {n1}/{n2})")
    seeds = [derive_seed(config.base_seed, 1, case, i) for i in range(config.runs)]

    def one(i):
        rng = make_rng(seeds[i])
        data_seed = int(rng.integers(0, 2 ** 63))
        if synthetic:
            data = sample_task(source.with_seed(data_seed))
        else:
            data = undersample_balanced(source, data_seed)
        return _fit_and_score(data, config, rng, i == 0, monitor_every, monitors)

    results = _gather(one, config.runs, threads)
    return _assemble(1, case, results, seeds)


def build_phase2_dataset(r1: RelevanceEnsemble, r2: RelevanceEnsemble) -> LabeledDataset:
    if r1.runs == 0 or r2.runs == 0:
        raise DataError("both relevance ensembles must be non-empty")
    if r1.d != r2.d:
        raise DimensionError(f"ensembles differ in dimension ({r1.d} vs {r2.d})")
    x = np.vstack([r1.relevances, r2.relevances])
    y = np.r_[np.ones(r1.runs, dtype=np.int64), np.full(r2.runs, 2, dtype=np.int64)]
    return LabeledDataset(x, y)


def run_phase2(data: LabeledDataset, config: Phase2Config, threads: int = 1,
               monitor_every: int = 0, monitors: Optional[list] = None) -> RelevanceEnsemble:
    """Ensemble of learners on random train/test splits of the relevance data.

    Splits pair rows by run index (see :func:`paired_split`).
    """
    n1, n2 = data.class_counts()
    if n1 == 0 or n2 == 0:
        raise DataError("phase 2 needs relevance vectors from both cases")
    seeds = [derive_seed(config.base_seed, 2, 0, i) for i in range(config.runs)]

    def one(i):
        return _fit_and_score(data, config, make_rng(seeds[i]), i == 0, monitor_every, monitors,
                              split=paired_split)

    results = _gather(one, config.runs, threads)
    return _assemble(2, None, results, seeds)


@dataclass
class DseReport:
    case1: RelevanceEnsemble
    case2: RelevanceEnsemble
    phase2: RelevanceEnsemble
    separations: dict
    config: dict
    metadata: dict = field(default_factory=dict)

    @property
    def auc_summary(self) -> dict:
        return {"phase1_case1": self.case1.auc_summary(),
                "phase1_case2": self.case2.auc_summary(),
                "phase2": self.phase2.auc_summary()}

    def to_dict(self) -> dict:
        return {
            "auc_summary": self.auc_summary,
            "separations": self.separations,
            "phase2_mean_relevance": self.phase2.mean_relevance().tolist(),
            "case1": self.case1.to_dict(),
            "case2": self.case2.to_dict(),
            "phase2": self.phase2.to_dict(),
            "config": self.config,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DseReport":
        return cls(RelevanceEnsemble.from_dict(doc["case1"]),
                   RelevanceEnsemble.from_dict(doc["case2"]),
                   RelevanceEnsemble.from_dict(doc["phase2"]),
                   doc["separations"], doc["config"], doc.get("metadata", {}))

    def __eq__(self, other):
        if not isinstance(other, DseReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _nan_to_none(x):
    return None if x is None or x != x else x


def separation_summary(r1: RelevanceEnsemble, r2: RelevanceEnsemble,
                       theory: Optional[tuple] = None) -> dict:
    """Experimental separation of two Phase-1 ensembles, with closed-form
    bounds when the generating directions are known.

    ``theory`` is ``(d, t, nu, a1, a2)``.
    """
    out = {"epsilon_p": None, "epsilon_o": None, "ratio_predicted": None}
    if theory is not None:
        d, t, nu, a1, a2 = theory
        eps_p, eps_o = direction_bounds(d, t, nu, a1, a2)
        g = t * t / (4 * nu * nu)
        out.update(epsilon_p=eps_p, epsilon_o=eps_o, ratio_predicted=g / (d + g))
    try:
        rec = experimental_separation(r1, r2, strict=False)
        out.update(epsilon_e=rec.epsilon_e, delta_e=_nan_to_none(rec.delta_e),
                   varsigma_1=rec.varsigma_1, varsigma_2=rec.varsigma_2)
    except DegenerateSeparationError:
        out.update(epsilon_e=0.0, delta_e=None, varsigma_1=None, varsigma_2=None)
    return out


def run_dse(config, threads: Optional[int] = None, monitor_every: int = 0,
            monitors: Optional[list] = None, progress=None) -> DseReport:
    """Run both Phase-1 cases, Phase 2 and the separation measures.

    ``config`` is an :class:`dse.io.ExperimentConfig`.  The report depends
    only on the configuration (including its seed), not on ``threads``.
    """
    from .io import read_dataset

    threads = config.resolved_threads() if threads is None else threads
    p1 = config.phase1_config()
    p2 = config.phase2_config()
    theory = None
    metadata = {}
    if config.mode == "synthetic":
        spec1, spec2 = config.task_specs()
        sources = (spec1, spec2)
        theory = (spec1.d, spec1.t, spec1.nu, spec1.a, spec2.a)
        metadata["directions_raw"] = [spec1.a_raw.tolist(), spec2.a_raw.tolist()]
        metadata["directions"] = [spec1.a.tolist(), spec2.a.tolist()]
    else:
        loaded = read_dataset(config.data_path)
        if not isinstance(loaded, tuple):
            raise DataError("csv mode needs a 'population' column with values A and B")
        sources = loaded
        metadata["rows"] = [sources[0].n, sources[1].n]
        if sources[0].feature_names:
            metadata["feature_names"] = list(sources[0].feature_names)

    ensembles = []
    for case, src in zip((1, 2), sources):
        if progress:
            progress(f"phase 1 case {case}: {p1.runs} runs")
        ensembles.append(run_phase1_case(src, p1, case, threads=threads,
                                         monitor_every=monitor_every, monitors=monitors))
    if progress:
        progress(f"phase 2: {p2.runs} runs")
    phase2 = run_phase2(build_phase2_dataset(*ensembles), p2, threads=threads,
                        monitor_every=monitor_every, monitors=monitors)
    seps = separation_summary(ensembles[0], ensembles[1], theory)
    return DseReport(ensembles[0], ensembles[1], phase2, seps, config.report_dict(), metadata)


def learner_config_dict(cfg: LearnerConfig) -> dict:
    return asdict(cfg)


def sweep_seed(base_seed: int, t_index: int) -> int:
    """Seed of one grid point; points are statistically independent."""
    return derive_seed(base_seed, "sweep", 0, t_index) & _U64


def auc_sweep(config, t_grid=None, learners=None, threads: Optional[int] = None,
              progress=None) -> dict:
    """Phase-1 and Phase-2 AUC summaries over a grid of separations.

    Runs a full DSE per (learner, t).  Returns ``{learner: rows}`` where each
    row has keys t, phase, case, auc_mean, auc_std; Phase-2 rows have case
    ``None``.
    """
    t_grid = list(config.sweep.t_grid if t_grid is None else t_grid)
    learners = list(config.sweep.learners if learners is None else learners)
    if not t_grid:
        raise ConfigError("t grid must be non-empty")
    out = {}
    for kind in learners:
        rows = []
        for ti, t in enumerate(t_grid):
            cfg = config.with_overrides(t=t, learner=kind, seed=sweep_seed(config.seed, ti))
            if progress:
                progress(f"sweep {kind} t={t:g}")
            rep = run_dse(cfg, threads=threads)
            s = rep.auc_summary
            for phase, case, key in ((1, 1, "phase1_case1"), (1, 2, "phase1_case2"),
                                     (2, None, "phase2")):
                rows.append({"t": float(t), "phase": phase, "case": case,
                             "auc_mean": s[key]["mean"], "auc_std": s[key]["std"]})
        out[kind] = rows
    return out
