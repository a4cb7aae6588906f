"""Command-line entry point: ``dse {synth,dse,sweep,bounds,train}``.

Progress goes to standard error; results go to files under ``--out``.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .datagen import sample_task
from .exceptions import ConfigError, DataError, DimensionError, InvalidAxisError, NumericError
from .io import (ExperimentConfig, atomic_directory, load_config, read_dataset, write_bounds_table,
                 write_dataset, write_model, write_report, write_sweep_table)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("dse")


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON experiment configuration")
    common.add_argument("--seed", type=_u64, help="base seed")
    common.add_argument("--t", type=float, help="separation between class means")
    common.add_argument("--alpha-deg", type=float, help="rotation angle of the Case-2 direction")
    common.add_argument("--d", type=_positive_int, help="number of features")
    common.add_argument("--runs", type=_positive_int, help="ensemble size per phase")
    common.add_argument("--learner", choices=("gmlvq", "svm"))
    common.add_argument("--threads", type=_positive_int,
                        help="worker threads (default: available cores)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write the Case-1/Case-2 synthetic datasets")
    sub.add_parser("dse", parents=[common], help="run both phases and write the report")
    sub.add_parser("sweep", parents=[common], help="AUC versus separation t, one CSV per learner")
    sub.add_parser("bounds", parents=[common], help="separation bounds versus rotation angle")
    tr = sub.add_parser("train", parents=[common], help="train one model and print its relevances")
    tr.add_argument("--data", type=Path, help="CSV dataset (default: synthetic Case 1)")
    return p


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, t=args.t, alpha_deg=args.alpha_deg, d=args.d,
                              runs=args.runs, learner=args.learner, threads=args.threads,
                              out=args.out)


def cmd_synth(cfg: ExperimentConfig) -> list[Path]:
    spec1, spec2 = cfg.task_specs()
    out = Path(cfg.out_dir)
    with atomic_directory(out) as tmp:
        for name, spec in (("case1.csv", spec1), ("case2.csv", spec2)):
            _progress(f"writing {name}: {2 * spec.n_per_class} rows")
            write_dataset(sample_task(spec), tmp / name)
    return [out / "case1.csv", out / "case2.csv"]


def cmd_dse(cfg: ExperimentConfig) -> list[Path]:
    from .pipeline import run_dse
    report = run_dse(cfg, progress=_progress)
    s = report.auc_summary
    _progress("AUC phase1 case1 {:.3f}, case2 {:.3f}, phase2 {:.3f}".format(
        s["phase1_case1"]["mean"], s["phase1_case2"]["mean"], s["phase2"]["mean"]))
    return write_report(report, cfg.out_dir)


def cmd_sweep(cfg: ExperimentConfig) -> list[Path]:
    from .pipeline import auc_sweep
    tables = auc_sweep(cfg, progress=_progress)
    out = Path(cfg.out_dir)
    with atomic_directory(out) as tmp:
        for kind, rows in tables.items():
            write_sweep_table(rows, tmp / f"sweep_{kind}.csv")
    return [out / f"sweep_{kind}.csv" for kind in tables]


def cmd_bounds(cfg: ExperimentConfig) -> list[Path]:
    from .separations import bound_sandwich_sweep
    b = cfg.bounds
    cells = bound_sandwich_sweep(b.d_values, b.alpha_deg, b.t_grid, runs=b.runs,
                                 learner=b.learner, learner_config=cfg.learner_config(b.learner),
                                 nu=cfg.synthetic.nu, n_per_class=cfg.synthetic.n_per_class,
                                 base_seed=cfg.seed, test_fraction=cfg.phase1.test_fraction,
                                 threads=cfg.resolved_threads(), progress=_progress)
    out = Path(cfg.out_dir)
    with atomic_directory(out) as tmp:
        write_bounds_table(cells, tmp / "bounds.csv")
    return [out / "bounds.csv"]


def cmd_train(cfg: ExperimentConfig, data_path: Optional[Path] = None) -> list[Path]:
    from .learners import relevance, train
    if data_path is not None:
        data = read_dataset(data_path)
        if isinstance(data, tuple):
            raise DataError(f"{data_path}: train expects a single population")
    else:
        data = sample_task(cfg.task_specs()[0])
    kind = cfg.phase1.learner
    model = train(data, cfg.learner_config(kind), cfg.seed)
    r = relevance(model)
    names = data.feature_names or [f"f{j + 1}" for j in range(data.d)]
    for name, v in zip(names, r):
        print(f"{name}\t{v:.17g}")
    out = Path(cfg.out_dir)
    with atomic_directory(out) as tmp:
        write_model(model, tmp / "model.json")
    return [out / "model.json"]


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "synth":
            written = cmd_synth(cfg)
        elif args.command == "dse":
            written = cmd_dse(cfg)
        elif args.command == "sweep":
            written = cmd_sweep(cfg)
        elif args.command == "bounds":
            written = cmd_bounds(cfg)
        else:
            written = cmd_train(cfg, args.data)
    except (ConfigError, InvalidAxisError) as exc:
        _progress(f"configuration error: {exc}")
        return EXIT_CONFIG
    except (DataError, DimensionError) as exc:
        _progress(f"data error: {exc}")
        return EXIT_DATA
    except NumericError as exc:
        _progress(f"numeric failure: {exc}")
        return EXIT_NUMERIC
    except OSError as exc:
        _progress(f"i/o error: {exc}")
        return EXIT_DATA
    for path in written:
        _progress(f"wrote {path}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
