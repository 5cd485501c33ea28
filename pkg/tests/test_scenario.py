import json
import math

import numpy as np
import pytest

from netfunnel.errors import ScenarioError, SchemaMismatch
from netfunnel.logio import csv_text, read_csv, write_csv, write_json
from netfunnel.scenario import config_hash, dumps, load, loads
from netfunnel.sim import run

from conftest import SMALL_TOML


def _run(sc):
    return run(sc.model, sc.schedule, sc.t_span, sc.init, sc.cfg, sc.library)


def test_toml_load_and_defaults(small_toml):
    sc = load(small_toml)
    assert sc.name == "chain"
    assert sc.t_span == (0.0, 6.0)
    assert sc.cfg.rtol == 1e-8 and sc.cfg.sample_dt == 0.5
    assert sc.resolved["graph"]["nodes"] == [1, 2, 3]
    assert [e["kind"] for e in sc.resolved["events"]] == ["leave", "join"]
    # the default funnel fills every edge with its own copy
    assert len(sc.resolved["funnels"]["edges"]) == 2
    assert sc.resolved["agents"]["1"]["F"] == ["-y1 + 1.0"]


def test_hash_round_trip_through_json(small_toml):
    sc = load(small_toml)
    again = loads(dumps(sc.resolved), "x.json")
    assert again.hash == sc.hash
    assert len(sc.hash) == 64
    # whitespace and key order in the source do not matter
    assert loads(SMALL_TOML.replace(" = ", "="), "y.toml").hash == sc.hash


def test_hash_changes_with_content(small_toml):
    sc = load(small_toml)
    assert sc.with_overrides(rtol=1e-7).hash != sc.hash
    assert sc.with_overrides(rtol=None).hash == sc.hash
    assert config_hash(sc.resolved) == sc.hash


def test_with_overrides():
    sc = loads(SMALL_TOML, "a.toml").with_overrides(t_end=3.0, sample_dt=0.25, method="dopri5")
    assert sc.t_span == (0.0, 3.0)
    assert sc.cfg.sample_dt == 0.25 and sc.cfg.method == "dopri5"
    with pytest.raises(KeyError):
        sc.with_overrides(bogus=1)


@pytest.mark.parametrize("old,new,key", [
    ('F = ["-y1"]', 'F = ["-y1 +"]', "agents.2.F"),
    ("B = 3.0", "B = 0.1", "funnels.default.B"),
    ("t_end = 6.0", "t_end = -1.0", "integrator.t_end"),
    ('kind = "leave"', 'kind = "exit"', "events[0].kind"),
])
def test_schema_errors_carry_key_and_line(old, new, key):
    text = SMALL_TOML.replace(old, new, 1)
    line = text.splitlines().index(new) + 1
    with pytest.raises(ScenarioError) as exc:
        loads(text, "bad.toml")
    assert key in exc.value.message
    assert exc.value.line == line
    assert f"bad.toml:{line}" in str(exc.value)


def test_unknown_key_and_bad_syntax():
    with pytest.raises(ScenarioError, match="unknown key"):
        loads(SMALL_TOML + "\n[extra]\nx = 1\n", "a.toml")
    with pytest.raises(ScenarioError, match="invalid TOML") as exc:
        loads("name = \n", "a.toml")
    assert exc.value.line == 1
    with pytest.raises(ScenarioError, match="invalid JSON"):
        loads("{", "a.json")


def test_unbound_variable_rejected():
    with pytest.raises(ScenarioError, match="unbound"):
        loads(SMALL_TOML.replace('"-y1 + 1"', '"-y1 + z4"'), "a.toml")


def test_demo_uri():
    sc = load("demo://neuromorphic")
    assert sorted(sc.library) == [1, 2, 3, 4]
    assert sc.t_span == (0.0, 300.0)
    with pytest.raises(ScenarioError):
        load("demo://nope")


def test_csv_round_trip(small_toml, tmp_path):
    sc = load(small_toml)
    lg = _run(sc)
    path = write_csv(lg, tmp_path / "t.csv")
    back = read_csv(path)
    assert back.nodes == lg.nodes and back.m == lg.m
    assert np.array_equal(back.t, lg.t)
    for i in lg.nodes:
        assert np.array_equal(back.y[i], lg.y[i], equal_nan=True)
        assert np.array_equal(back.u[i], lg.u[i], equal_nan=True)
        assert np.array_equal(back.membership[i], lg.membership[i])
    for e in lg.edges:
        assert np.array_equal(back.ratio[e], lg.ratio[e], equal_nan=True)
    assert csv_text(back) == path.read_text()


def test_csv_format(small_toml):
    lg = _run(load(small_toml))
    text = csv_text(lg)
    lines = text.splitlines()
    assert lines[0] == ("t,y1_1,y2_1,y3_1,u1_1,u2_1,u3_1,ratio_1_2_1,psi_1_2_1,"
                        "ratio_1_3_1,psi_1_3_1,ratio_2_3_1,psi_2_3_1")
    row = lines[1].split(",")
    assert float(row[1]) == lg.y[1][0, 0]
    # agent 3 is away between its leave and rejoin
    k = int(np.searchsorted(lg.t, 3.0))
    assert lines[k + 1].split(",")[6] == ""
    assert lg.membership[3][k] == -1


@pytest.mark.parametrize("text,msg", [
    ("", "empty"),
    ("x,y1_1\n1,2\n", "first column"),
    ("t,y1_1,u1_1\n", "no data"),
    ("t,y1_1,q\n0,1,2\n", "unknown column"),
    ("t,y1_1,u1_1\n0,abc,1\n", "could not convert"),
    ("t,y1_1\n0,1\n", "missing column"),
    ("t,y1_1,y2_1,u1_1,u2_1,ratio_2_1_1\n0,1,1,0,0,0\n", "i < j"),
])
def test_read_csv_schema_mismatch(tmp_path, text, msg):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(SchemaMismatch, match=msg):
        read_csv(p)


def test_write_json_handles_numpy(tmp_path):
    p = write_json({"a": np.float64(1.5), "b": np.arange(3), "c": (1, 2)}, tmp_path / "x.json")
    assert json.loads(p.read_text()) == {"a": 1.5, "b": [0, 1, 2], "c": [1, 2]}
    assert not math.isnan(json.loads(p.read_text())["a"])
