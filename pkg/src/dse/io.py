"""Datasets, experiment configuration and report files.

Every float written to CSV uses 17 significant digits, which is enough to
recover the exact 64-bit value on read.  JSON documents use Python's
shortest round-trip repr, which has the same property.
"""
from __future__ import annotations

import contextlib
import csv
import dataclasses
import json
import math
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Union

import numpy as np
import yaml

from .datagen import GaussianTaskSpec, LabeledDataset, paper_directions, rotated_direction
from .exceptions import ConfigError, DataError, DimensionError
from .learners import (GmlvqConfig, SvmConfig, TrainedModel, model_from_dict,
                       model_to_dict)

ENV_OUT = "DSE_OUT"
ENV_SEED = "DSE_SEED"
POPULATIONS = ("A", "B")
_U64_MAX = 2 ** 64 - 1


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def write_csv(path: Union[str, Path], header: Iterable[str], rows: Iterable[Iterable]) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(header))
            for row in rows:
                w.writerow([_cell(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


@contextlib.contextmanager
def atomic_directory(target: Union[str, Path]):
    """Yield a scratch directory that replaces ``target`` only on success.

    On any exception the scratch directory is removed and ``target`` is
    left as it was.
    """
    target = Path(target)
    parent = target.parent if str(target.parent) else Path(".")
    parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    old = None
    if target.exists():
        old = parent / f".{target.name}.old-{os.getpid()}"
        os.replace(target, old)
    os.replace(tmp, target)
    if old is not None:
        shutil.rmtree(old, ignore_errors=True)


# ---------------------------------------------------------------- datasets

def read_dataset(path: Union[str, Path]) -> Union[LabeledDataset, tuple[LabeledDataset, LabeledDataset]]:
    """Read a CSV table with a ``class`` column (values 1/2).

    All other columns except an optional ``population`` column (A/B) are
    features.  With a population column the result is ``(A, B)``.  Data rows
    are numbered from 1, the header not counted.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if "class" not in header:
            raise DataError(f"{path}: missing required column 'class'")
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        ci = header.index("class")
        pi = header.index("population") if "population" in header else None
        feat_idx = [i for i in range(len(header)) if i not in (ci, pi)]
        if not feat_idx:
            raise DataError(f"{path}: no feature columns")
        rows, labels, pops = [], [], []
        for r, line in enumerate(reader, start=1):
            if not line or all(not c.strip() for c in line):
                continue
            if len(line) != len(header):
                raise DataError(f"{path}: row {r} has {len(line)} cells, header has {len(header)}")
            vals = []
            for i in feat_idx:
                try:
                    v = float(line[i])
                except ValueError:
                    raise DataError(f"{path}: row {r}, column {header[i]!r}: "
                                    f"not a number: {line[i]!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {r}, column {header[i]!r}: non-finite value")
                vals.append(v)
            lab = line[ci].strip()
            if lab not in ("1", "2", "1.0", "2.0"):
                raise DataError(f"{path}: row {r}, column 'class': expected 1 or 2, got {lab!r}")
            if pi is not None:
                p = line[pi].strip()
                if p not in POPULATIONS:
                    raise DataError(f"{path}: row {r}, column 'population': "
                                    f"expected A or B, got {p!r}")
                pops.append(p)
            rows.append(vals)
            labels.append(int(float(lab)))
    if not rows:
        raise DataError(f"{path}: no data rows")
    x = np.array(rows, dtype=np.float64)
    y = np.array(labels, dtype=np.int64)
    names = tuple(header[i] for i in feat_idx)
    if pi is None:
        return LabeledDataset(x, y, None, names)
    pops = np.array(pops)
    out = []
    for p in POPULATIONS:
        m = pops == p
        if not m.any():
            raise DataError(f"{path}: population {p} has no rows")
        out.append(LabeledDataset(x[m], y[m], p, names))
    return out[0], out[1]


def write_dataset(data: LabeledDataset, path: Union[str, Path]) -> Path:
    names = list(data.feature_names) if data.feature_names else [f"f{j + 1}" for j in range(data.d)]
    header = names + ["class"]
    with_pop = data.population is not None
    if with_pop:
        header.append("population")

    def rows():
        for xi, yi in zip(data.features, data.labels):
            row = list(xi) + [int(yi)]
            if with_pop:
                row.append(data.population)
            yield row

    return write_csv(path, header, rows())


# ------------------------------------------------------------ configuration

@dataclass(frozen=True)
class SyntheticSection:
    d: int = 17
    t: float = 0.25
    nu: float = 1.0
    n_per_class: int = 500
    directions: str = "benchmark"  # benchmark | rotation
    alpha_deg: float = 90.0
    plane: tuple = (0, 1)


@dataclass(frozen=True)
class PhaseSection:
    runs: int = 100
    learner: Optional[str] = "gmlvq"
    test_fraction: float = 0.3


@dataclass(frozen=True)
class SweepSection:
    t_grid: tuple = (0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0)
    learners: tuple = ("gmlvq", "svm")


@dataclass(frozen=True)
class BoundsSection:
    d_values: tuple = (5, 20)
    alpha_deg: tuple = (0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0)
    t_grid: tuple = (0.25, 0.5, 1.0, 2.0)
    runs: int = 50
    learner: str = "gmlvq"


_SECTIONS = {
    "synthetic": SyntheticSection,
    "phase1": PhaseSection,
    "phase2": PhaseSection,
    "gmlvq": GmlvqConfig,
    "svm": SvmConfig,
    "sweep": SweepSection,
    "bounds": BoundsSection,
}
_TOP_KEYS = {"mode", "seed", "threads", "data", "output", *_SECTIONS}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; build with :func:`load_config` or directly."""

    mode: str = "synthetic"
    seed: int = 0
    threads: Optional[int] = None  # None: all available cores
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    data_path: Optional[str] = None
    phase1: PhaseSection = field(default_factory=PhaseSection)
    phase2: PhaseSection = field(default_factory=lambda: PhaseSection(learner=None))
    gmlvq: GmlvqConfig = field(default_factory=GmlvqConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    sweep: SweepSection = field(default_factory=SweepSection)
    bounds: BoundsSection = field(default_factory=BoundsSection)
    out_dir: str = "dse-out"

    def __post_init__(self):
        if self.mode not in ("synthetic", "csv"):
            raise ConfigError(f"mode: expected 'synthetic' or 'csv', got {self.mode!r}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed <= _U64_MAX:
            raise ConfigError("seed: expected an unsigned 64-bit integer")
        if self.threads is not None and int(self.threads) < 1:
            raise ConfigError("threads: must be at least 1")
        if self.mode == "csv" and not self.data_path:
            raise ConfigError("data.path: required in csv mode")
        s = self.synthetic
        if s.directions not in ("benchmark", "rotation"):
            raise ConfigError(f"synthetic.directions: expected 'benchmark' or 'rotation', "
                              f"got {s.directions!r}")
        if len(s.plane) != 2:
            raise ConfigError("synthetic.plane: expected two axis indices")
        if s.directions == "benchmark" and s.d < 8:
            raise ConfigError("synthetic.d: benchmark directions need d >= 8")
        for name, ph in (("phase1", self.phase1), ("phase2", self.phase2)):
            if ph.runs < 2:
                raise ConfigError(f"{name}.runs: must be at least 2")
            if ph.learner is not None and ph.learner not in ("gmlvq", "svm"):
                raise ConfigError(f"{name}.learner: unknown learner {ph.learner!r}")
            if not 0.0 < ph.test_fraction <= 0.5:
                raise ConfigError(f"{name}.test_fraction: must lie in (0, 0.5]")
        if self.phase1.learner is None:
            raise ConfigError("phase1.learner: required")
        for lr in (*self.sweep.learners, self.bounds.learner):
            if lr not in ("gmlvq", "svm"):
                raise ConfigError(f"unknown learner {lr!r} in sweep/bounds")
        if not self.sweep.t_grid:
            raise ConfigError("sweep.t_grid: must be non-empty")
        if self.bounds.runs < 2:
            raise ConfigError("bounds.runs: must be at least 2")

    def resolved_threads(self) -> int:
        return int(self.threads) if self.threads else (os.cpu_count() or 1)

    def learner_config(self, kind: str):
        return self.gmlvq if kind == "gmlvq" else self.svm

    def phase2_learner(self) -> str:
        return self.phase2.learner or self.phase1.learner

    def phase1_config(self):
        from .pipeline import PhaseOneConfig
        kind = self.phase1.learner
        return PhaseOneConfig(self.phase1.runs, kind, self.learner_config(kind), None,
                              self.phase1.test_fraction, self.seed)

    def phase2_config(self):
        from .pipeline import PhaseOneConfig
        kind = self.phase2_learner()
        return PhaseOneConfig(self.phase2.runs, kind, self.learner_config(kind), None,
                              self.phase2.test_fraction, self.seed)

    def task_specs(self) -> tuple[GaussianTaskSpec, GaussianTaskSpec]:
        s = self.synthetic
        if s.directions == "benchmark":
            a1, a2 = paper_directions(s.d)
        else:
            a1 = np.eye(s.d)[0]
            try:
                a2 = rotated_direction(a1, math.radians(s.alpha_deg), tuple(s.plane))
            except (DimensionError, ValueError) as exc:
                raise ConfigError(f"synthetic.plane: {exc}") from exc
        return (GaussianTaskSpec(s.d, s.t, s.nu, a1, s.n_per_class, self.seed),
                GaussianTaskSpec(s.d, s.t, s.nu, a2, s.n_per_class, self.seed))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_overrides(self, seed=None, t=None, alpha_deg=None, d=None, runs=None,
                       learner=None, threads=None, out=None) -> "ExperimentConfig":
        """Apply command-line style overrides; ``None`` leaves a value alone."""
        cfg = self
        syn = {}
        if t is not None:
            syn["t"] = float(t)
        if alpha_deg is not None:
            syn["alpha_deg"] = float(alpha_deg)
        if d is not None:
            syn["d"] = int(d)
        if syn:
            cfg = cfg.replace(synthetic=dataclasses.replace(cfg.synthetic, **syn))
        if runs is not None:
            cfg = cfg.replace(phase1=dataclasses.replace(cfg.phase1, runs=int(runs)),
                              phase2=dataclasses.replace(cfg.phase2, runs=int(runs)),
                              bounds=dataclasses.replace(cfg.bounds, runs=int(runs)))
        if learner is not None:
            cfg = cfg.replace(phase1=dataclasses.replace(cfg.phase1, learner=learner),
                              sweep=dataclasses.replace(cfg.sweep, learners=(learner,)),
                              bounds=dataclasses.replace(cfg.bounds, learner=learner))
        if seed is not None:
            cfg = cfg.replace(seed=int(seed))
        if threads is not None:
            cfg = cfg.replace(threads=int(threads))
        if out is not None:
            cfg = cfg.replace(out_dir=str(out))
        return cfg

    def to_dict(self) -> dict:
        def plain(v):
            if isinstance(v, (tuple, list)):
                return [plain(u) for u in v]
            return v

        doc = {"mode": self.mode, "seed": int(self.seed), "threads": self.threads,
               "data": {"path": self.data_path}, "output": {"dir": self.out_dir}}
        for name in _SECTIONS:
            doc[name] = {k: plain(v) for k, v in dataclasses.asdict(getattr(self, name)).items()}
        return doc

    def report_dict(self) -> dict:
        """Configuration snapshot stored in reports; leaves out settings that
        cannot change the numbers (threads, output location)."""
        doc = self.to_dict()
        doc.pop("threads")
        doc.pop("output")
        return doc


def _section(name: str, cls, doc) -> Any:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{name}: expected a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {', '.join(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(doc: Optional[dict], env: Optional[dict] = None) -> ExperimentConfig:
    """Build a configuration from a parsed document.

    ``DSE_SEED`` and ``DSE_OUT`` from ``env`` fill in the seed and output
    directory when the document does not set them.
    """
    doc = {} if doc is None else doc
    env = os.environ if env is None else env
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping at top level")
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
    kwargs = {}
    for key in ("mode", "threads"):
        if key in doc:
            kwargs[key] = doc[key]
    if "seed" in doc:
        kwargs["seed"] = doc["seed"]
    elif env.get(ENV_SEED):
        try:
            kwargs["seed"] = int(env[ENV_SEED])
        except ValueError:
            raise ConfigError(f"{ENV_SEED}: not an integer: {env[ENV_SEED]!r}") from None
    for block, key, attr in (("data", "path", "data_path"), ("output", "dir", "out_dir")):
        sub = doc.get(block) or {}
        if not isinstance(sub, dict):
            raise ConfigError(f"{block}: expected a mapping")
        extra = sorted(set(sub) - {key})
        if extra:
            raise ConfigError(f"{block}: unknown key(s) {', '.join(extra)}")
        if sub.get(key) is not None:
            kwargs[attr] = str(sub[key])
    if "out_dir" not in kwargs and env.get(ENV_OUT):
        kwargs["out_dir"] = env[ENV_OUT]
    for name, cls in _SECTIONS.items():
        if name in doc:
            kwargs[name] = _section(name, cls, doc[name])
    if "phase2" in doc and "learner" not in (doc["phase2"] or {}):
        kwargs["phase2"] = dataclasses.replace(kwargs["phase2"], learner=None)
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Optional[Union[str, Path]] = None,
                env: Optional[dict] = None) -> ExperimentConfig:
    """Load a YAML or JSON configuration; ``None`` gives the defaults."""
    if path is None:
        return config_from_dict({}, env)
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read configuration ({exc.strerror})") from exc
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot parse configuration: {exc}") from exc
    return config_from_dict(doc, env)


# ------------------------------------------------------------------ reports

def _dump_json(doc, path: Path) -> None:
    try:
        text = json.dumps(doc, indent=1, sort_keys=True, allow_nan=False)
    except ValueError as exc:
        raise DataError(f"{path}: report holds non-finite numbers") from exc
    path.write_text(text + "\n")


def report_manifest(report) -> list[str]:
    names = ["report.json", "relevances_case1.csv", "relevances_case2.csv",
             "relevances_phase2.csv", "roc_phase1_case1.csv", "roc_phase1_case2.csv",
             "roc_phase2.csv", "separations.csv"]
    for label, ens in _ensembles(report):
        if ens.embedding is not None:
            names.append(f"embedding_{label}.csv")
    return sorted(names)


def _ensembles(report):
    return (("phase1_case1", report.case1), ("phase1_case2", report.case2),
            ("phase2", report.phase2))


def _feature_names(report) -> list[str]:
    names = report.metadata.get("feature_names")
    return list(names) if names else [f"f{j + 1}" for j in range(report.case1.d)]


SEPARATION_COLUMNS = ("epsilon_p", "epsilon_o", "epsilon_e", "delta_e",
                      "varsigma_1", "varsigma_2", "ratio_predicted")


def _write_report_files(report, out: Path) -> None:
    _dump_json(report.to_dict(), out / "report.json")
    feats = _feature_names(report)
    for fname, ens, names in (("relevances_case1.csv", report.case1, feats),
                              ("relevances_case2.csv", report.case2, feats),
                              ("relevances_phase2.csv", report.phase2, feats)):
        write_csv(out / fname, ["run", "seed", "auc", *names],
                  ([i, s, a, *r] for i, (s, a, r) in
                   enumerate(zip(ens.seeds, ens.aucs, ens.relevances))))
    for label, ens in _ensembles(report):
        write_csv(out / f"roc_{label}.csv", ["fpr", "tpr"], zip(ens.roc_fpr, ens.roc_tpr))
        if ens.embedding is not None:
            coords = ens.embedding["coordinates"]
            labs = ens.embedding["labels"]
            write_csv(out / f"embedding_{label}.csv", ["x", "y", "class"],
                      ([c[0], c[1], l] for c, l in zip(coords, labs)))
    sep = report.separations
    write_csv(out / "separations.csv", SEPARATION_COLUMNS,
              [[sep.get(k) for k in SEPARATION_COLUMNS]])


def write_report(report, directory: Union[str, Path]) -> list[Path]:
    """Write the full report and its CSV tables; the directory is replaced
    atomically."""
    directory = Path(directory)
    with atomic_directory(directory) as tmp:
        _write_report_files(report, tmp)
    return [directory / n for n in report_manifest(report)]


def read_report(directory: Union[str, Path]):
    from .pipeline import DseReport
    path = Path(directory)
    if path.is_dir():
        path = path / "report.json"
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"{path}: cannot read report ({exc.strerror})") from exc
    except ValueError as exc:
        raise DataError(f"{path}: malformed report: {exc}") from exc
    return DseReport.from_dict(doc)


# ----------------------------------------------------------- sweep tables

SWEEP_TABLE_COLUMNS = ("t", "phase", "case", "auc_mean", "auc_std")


def write_sweep_table(rows: Iterable[dict], path: Union[str, Path]) -> Path:
    return write_csv(path, SWEEP_TABLE_COLUMNS,
                     ([r[c] for c in SWEEP_TABLE_COLUMNS] for r in rows))


def write_bounds_table(cells, path: Union[str, Path]) -> Path:
    from .separations import SWEEP_COLUMNS
    return write_csv(path, SWEEP_COLUMNS,
                     ([c.row()[k] for k in SWEEP_COLUMNS] for c in cells))


def read_table(path: Union[str, Path]) -> list[dict]:
    """Read a CSV written by this module.

    Integer cells become ints (seeds need all 64 bits), other numeric cells
    floats; everything else stays a string.
    """
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for k, v in row.items():
                for conv in (int, float, str):
                    try:
                        rec[k] = conv(v)
                        break
                    except ValueError:
                        pass
            out.append(rec)
    return out


# ------------------------------------------------------------------ models

def write_model(model: TrainedModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    _dump_json(model_to_dict(model), path)
    return path


def read_model(path: Union[str, Path]) -> TrainedModel:
    path = Path(path)
    try:
        return model_from_dict(json.loads(path.read_text()))
    except OSError as exc:
        raise DataError(f"{path}: cannot read model ({exc.strerror})") from exc
    except (ValueError, KeyError) as exc:
        raise DataError(f"{path}: malformed model document: {exc}") from exc
