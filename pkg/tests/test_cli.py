import csv
import json
from pathlib import Path

import pytest

from metastate.catalog import chain_graph
from metastate.cli import main
from metastate.landscape import spec_to_dict

ROOT = Path(__file__).resolve().parents[1]
LANDSCAPES = ROOT / "landscapes"


def write_config(tmp_path, landscape, **blocks):
    doc = {"landscape": str(landscape), "out": str(tmp_path / "out"), **blocks}
    p = tmp_path / "run.json"
    p.write_text(json.dumps(doc))
    return p


def small_sim_block(seed=5):
    return {"epsilon": 0.25, "dt": 0.005, "horizon": 150.0, "nTraj": 300, "seed": seed,
            "experiments": [{"kind": "coarse-tv", "start": "m1", "times": [5.0, 40.0]},
                            {"kind": "hitting", "start": "m1", "target": "m2", "tolerance": 0.5}]}


def test_analyze_predict_report(tmp_path, capsys):
    cfg = write_config(tmp_path, LANDSCAPES / "ten_minimum.json",
                       predict={"deltas": [0.25, 0.1], "epsilons": [0.5], "perDecade": 10})
    assert main(["analyze", "--config", str(cfg)]) == 0
    assert "q = 3" in capsys.readouterr().out
    assert main(["predict", "--config", str(cfg)]) == 0
    assert main(["report", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    tree = json.loads((out / "tree.json").read_text())
    assert tree["tree"]["q"] == 3
    with open(out / "curves.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["layer"] for r in rows} == {"1", "2", "3"}
    assert all(0 <= float(r["f_value"]) <= 1 for r in rows)
    with open(out / "mixing.csv") as fh:
        mix = list(csv.DictReader(fh))
    assert len(mix) == 2
    assert "T_mix" in (out / "summary.txt").read_text()
    assert json.loads((out / "report.json").read_text())["analysis"]["tree"]["q"] == 3


def test_out_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path, LANDSCAPES / "three_layer.json")
    assert main(["analyze", "--config", str(cfg), "--out", str(tmp_path / "elsewhere")]) == 0
    assert (tmp_path / "elsewhere" / "tree.json").exists()


def test_report_without_artifacts_fails(tmp_path, capsys):
    cfg = write_config(tmp_path, LANDSCAPES / "three_layer.json")
    assert main(["report", "--config", str(cfg)]) == 1
    assert "MissingArtifacts" in capsys.readouterr().err


def test_invalid_inputs_exit_1(tmp_path):
    assert main(["analyze", "--config", str(tmp_path / "nope.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["analyze", "--config", str(bad)]) == 1
    land = tmp_path / "l.json"
    land.write_text(json.dumps({"kind": "analytic-1d", "potential": "x**2/2", "box": [-3, 3]}))
    assert main(["analyze", "--config", str(write_config(tmp_path, land))]) == 1
    cfg = write_config(tmp_path, LANDSCAPES / "three_layer.json", predict={"deltas": [1.5]})
    assert main(["predict", "--config", str(cfg)]) == 1


def test_near_tie_exits_2(tmp_path, capsys):
    doc = spec_to_dict(chain_graph([0.0, 5e-7], [1.0]))
    land = tmp_path / "tie.json"
    land.write_text(json.dumps(doc))
    assert main(["analyze", "--config", str(write_config(tmp_path, land))]) == 2
    assert "GenericityWarning" in capsys.readouterr().err


def test_simulate_needs_analytic_landscape(tmp_path):
    cfg = write_config(tmp_path, LANDSCAPES / "three_layer.json", simulate=small_sim_block())
    assert main(["simulate", "--config", str(cfg)]) == 1


def test_simulate_writes_deterministic_artifacts(tmp_path, monkeypatch):
    runs = []
    for k, threads in enumerate(("1", "3")):
        monkeypatch.setenv("METASTATE_THREADS", threads)
        d = tmp_path / f"r{k}"
        d.mkdir()
        cfg = write_config(d, LANDSCAPES / "double_well.json", simulate=small_sim_block())
        assert main(["simulate", "--config", str(cfg)]) == 0
        runs.append(d / "out")
    names = sorted(p.name for p in runs[0].iterdir())
    assert "comparison.csv" in names and "occupation_0.csv" in names and "hitting_1.csv" in names
    for n in names:
        assert (runs[0] / n).read_bytes() == (runs[1] / n).read_bytes(), n
    man = json.loads((runs[0] / "simulation.json").read_text())
    assert len(man["content_hash"]) == 40


def test_unknown_experiment_kind(tmp_path):
    block = small_sim_block()
    block["experiments"] = [{"kind": "telepathy"}]
    cfg = write_config(tmp_path, LANDSCAPES / "double_well.json", simulate=block)
    assert main(["simulate", "--config", str(cfg)]) == 1


def test_shipped_configs_resolve():
    from metastate.cli import RunConfig

    for p in sorted((ROOT / "configs").glob("*.json")):
        cfg = RunConfig(p)
        assert cfg.landscape_path.exists()


def test_command_is_required():
    with pytest.raises(SystemExit):
        main(["--config", "x.json"])
