import csv
import json
import math

import pytest

import fracperc


def test_extinction_and_offspring():
    assert fracperc.extinction_probability(1, 0.7) == pytest.approx(9 / 49, abs=1e-10)
    off = fracperc.offspring_distribution(1, 0.7)
    assert off[1] == pytest.approx(0.6, abs=1e-10)
    assert off[2] == pytest.approx(0.4, abs=1e-10)


def test_full_tree_counts():
    t = fracperc.sample_tree(2, 1.0, 3, seed=5)
    assert t.counts() == [1, 4, 16, 64]
    assert t.box_dimension(1, 3) == pytest.approx(2.0)
    assert len(t.level(2)) == 16


def test_threshold_and_detection():
    th = fracperc.threshold("family=homothetic d=1 points=0;1;2")
    assert th["critical_s"] == pytest.approx(1 / 3)
    # cubes 0, 1, 2 at level 3 carry the progression 0, 1/8, 2/8
    r = fracperc.detect_cubes([[0], [1], [2]], 3, "family=homothetic d=1 points=0;1;2")
    assert r["present"]
    r = fracperc.detect_cubes([[0]], 3, "family=homothetic d=1 points=0;1;2")
    assert not r["present"]


def test_intersection_mass_full_tree():
    # p = 1: the product measure is Lebesgue, Y_j is the length of the line in the square
    s = fracperc.intersection_mass(1, 2, 1.0, 3, [[1.0, 0.0]], [0.0, 0.25])
    assert s["Y"] == pytest.approx([1.0] * 4)


def test_run_sample_writes_outputs(tmp_path):
    summary = fracperc.run("sample", {"d": 2, "p": 1, "n": 3}, out=tmp_path)
    assert summary["complete"]
    assert summary["results"]["slope"] == pytest.approx(2.0)
    with open(tmp_path / "levels.csv") as f:
        rows = list(csv.DictReader(f))
    assert [int(r["N"]) for r in rows] == [4**j for j in range(4)]
    assert json.loads((tmp_path / "summary.json").read_text())["config"]["n"] == 3


def test_config_errors_are_itemized(tmp_path):
    with pytest.raises(fracperc.ConfigError) as err:
        fracperc.run("sample", {"p": 2, "bogus": 1}, out=tmp_path)
    assert "bogus" in str(err.value) and "p:" in str(err.value)


def test_aggregate_identity(tmp_path):
    fracperc.run("sweep", fracperc.preset("sweep", "smoke"), out=tmp_path / "a")
    agg = fracperc.aggregate([tmp_path / "a" / "frequencies.csv"], out=tmp_path / "b")
    a = (tmp_path / "a" / "frequencies.csv").read_text()
    b = (tmp_path / "b" / "aggregate.csv").read_text()
    assert a == b
    assert all(math.isfinite(r["frequency"]) for r in agg["results"]["rows"])
