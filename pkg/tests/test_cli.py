import json
import subprocess
import sys

import pytest

from dse.cli import EXIT_CONFIG, EXIT_DATA, build_parser, main, resolve_config
from dse.io import read_dataset, read_report, read_table

FAST = ["--runs", "2", "--threads", "1"]


def _config(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _small(tmp_path, **extra):
    doc = {"synthetic": {"n_per_class": 40}}
    doc.update(extra)
    return _config(tmp_path, doc)


def test_flags_override_config(tmp_path):
    cfg_path = _config(tmp_path, {"seed": 1, "synthetic": {"t": 0.5}, "phase1": {"runs": 9}})
    args = build_parser().parse_args(["dse", "--config", cfg_path, "--seed", "4", "--t", "2"])
    cfg = resolve_config(args)
    assert cfg.seed == 4 and cfg.synthetic.t == 2.0 and cfg.phase1.runs == 9


def test_synth_default_sizes_and_determinism(tmp_path):
    for out in ("a", "b"):
        assert main(["synth", "--seed", "3", "--out", str(tmp_path / out)]) == 0
    for name in ("case1.csv", "case2.csv"):
        data = read_dataset(tmp_path / "a" / name)
        assert data.n == 1000 and data.class_counts() == (500, 500)
        assert data.d == 17
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_zero_separation(tmp_path):
    assert main(["synth", "--t", "0", "--out", str(tmp_path / "o")]) == 0
    data = read_dataset(tmp_path / "o" / "case1.csv")
    m1 = data.features[data.labels == 1].mean(axis=0)
    m2 = data.features[data.labels == 2].mean(axis=0)
    # difference of two means of 500 unit normals: sd sqrt(2/500)
    assert abs(m1 - m2).max() < 5 * (2 / 500) ** 0.5


def test_dse_writes_report(tmp_path, capsys):
    out = tmp_path / "rep"
    assert main(["dse", "--config", _small(tmp_path), *FAST, "--out", str(out)]) == 0
    rep = read_report(out)
    assert rep.case1.runs == 2 and rep.config["phase1"]["learner"] == "gmlvq"
    captured = capsys.readouterr()
    assert captured.out == ""  # progress goes to stderr only
    assert "phase 2" in captured.err


def test_dse_svm_learner(tmp_path):
    out = tmp_path / "rep"
    assert main(["dse", "--config", _small(tmp_path), *FAST, "--learner", "svm",
                 "--out", str(out)]) == 0
    rep = read_report(out)
    assert rep.config["phase1"]["learner"] == "svm"
    assert rep.phase2.d == 17
    assert rep.case1.embedding is None  # embeddings are GMLVQ-only


def test_dse_csv_without_population(tmp_path):
    data = tmp_path / "plain.csv"
    data.write_text("f1,f2,class\n0,1,1\n1,0,2\n2,1,1\n1,2,2\n")
    cfg = _config(tmp_path, {"mode": "csv", "data": {"path": str(data)}})
    out = tmp_path / "rep"
    code = main(["dse", "--config", cfg, *FAST, "--out", str(out)])
    assert code == EXIT_DATA
    assert not out.exists()


def test_config_error_exit_code(tmp_path, capsys):
    cfg = _config(tmp_path, {"phase1": {"runz": 2}})
    assert main(["dse", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "runz" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_bad_plane_is_config_error(tmp_path):
    cfg = _config(tmp_path, {"synthetic": {"d": 5, "directions": "rotation", "plane": [0, 7]}})
    assert main(["synth", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_invalid_flag_is_rejected_by_parser(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["dse", "--runs", "0", "--out", str(tmp_path / "o")])
    assert exc.value.code == 2
    assert not (tmp_path / "o").exists()


def test_sweep_single_point(tmp_path):
    cfg = _small(tmp_path, sweep={"t_grid": [1.0], "learners": ["gmlvq", "svm"]})
    out = tmp_path / "sw"
    assert main(["sweep", "--config", cfg, *FAST, "--out", str(out)]) == 0
    for kind in ("gmlvq", "svm"):
        rows = read_table(out / f"sweep_{kind}.csv")
        assert len(rows) == 3
        assert {r["t"] for r in rows} == {1.0}
        assert [(r["phase"], r["case"]) for r in rows] == [(1, 1), (1, 2), (2, "")]
        assert all(0.0 <= r["auc_mean"] <= 1.0 for r in rows)


def test_sweep_learner_flag_restricts_tables(tmp_path):
    cfg = _small(tmp_path, sweep={"t_grid": [1.0]})
    out = tmp_path / "sw"
    assert main(["sweep", "--config", cfg, *FAST, "--learner", "svm", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["sweep_svm.csv"]


def test_bounds_grid(tmp_path):
    cfg = _small(tmp_path, bounds={"t_grid": [1.0]})
    out = tmp_path / "b"
    assert main(["bounds", "--config", cfg, *FAST, "--out", str(out)]) == 0
    rows = read_table(out / "bounds.csv")
    assert len(rows) == 14
    assert {(r["d"], r["alpha_deg"]) for r in rows} == {
        (d, a) for d in (5, 20) for a in (0, 15, 30, 45, 60, 75, 90)}
    for r in rows:
        if r["alpha_deg"] == 0:
            assert r["eps_o"] == 0.0
            assert r["eps_p_mean"] == 0.0


def test_train_prints_relevances(tmp_path, capsys):
    out = tmp_path / "m"
    assert main(["train", "--config", _small(tmp_path), "--t", "3", "--out", str(out)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 17
    values = [float(line.split("\t")[1]) for line in lines]
    assert sum(values) == pytest.approx(1.0)
    assert (out / "model.json").is_file()


def test_train_on_csv(tmp_path, capsys):
    data = tmp_path / "d.csv"
    rows = ["a,b,class"] + [f"{i % 5},{(i * 7) % 3 + (i % 2) * 4},{1 + i % 2}" for i in range(40)]
    data.write_text("\n".join(rows) + "\n")
    assert main(["train", "--data", str(data), "--learner", "svm",
                 "--out", str(tmp_path / "m")]) == 0
    names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert names == ["a", "b"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dse", "synth", "--d", "8", "--out",
                           str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout == ""
    assert read_dataset(tmp_path / "o" / "case2.csv").d == 8
