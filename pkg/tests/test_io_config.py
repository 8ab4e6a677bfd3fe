import json

import numpy as np
import pytest

from afpo.config import OUTPUT_ENV, config_from_dict, load_config, resolve_output_dir
from afpo.errors import InputError
from afpo.fixtures import fixture_path
from afpo.io import load_regions, read_matrix, read_table, write_table

HEADER = "id,name,wealth,cx,cy\n"


def write(tmp_path, text, name="r.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_bundled_regions():
    regs = load_regions(fixture_path("regions_212.csv"))
    assert len(regs) == 212
    assert len({r.id for r in regs}) == 212
    assert all(r.wealth > 0 for r in regs)


@pytest.mark.parametrize("body, msg", [
    ("A,a,1,0,0\nA,b,2,0,0\n", "r.csv:3: duplicate region id 'A'"),
    ("A,a,-1,0,0\n", "r.csv:2: non-positive wealth"),
    ("A,a,0,0,0\n", "non-positive wealth"),
    ("A,a,x,0,0\n", "r.csv:2: non-numeric"),
    ("A,a,1,0\n", "expected 5 fields"),
    ("A,a,nan,0,0\n", "non-finite"),
])
def test_region_errors_name_line(tmp_path, body, msg):
    with pytest.raises(InputError, match=msg):
        load_regions(write(tmp_path, HEADER + body))


def test_region_header_and_comments(tmp_path):
    with pytest.raises(InputError, match="expected header"):
        load_regions(write(tmp_path, "id,wealth\nA,1\n"))
    regs = load_regions(write(tmp_path, "# note\n" + HEADER + "\nA,a,1.5,0,0\n"))
    assert regs[0].wealth == 1.5
    with pytest.raises(InputError):
        load_regions(tmp_path / "missing.csv")


def test_table_round_trip(tmp_path):
    p = write_table(tmp_path / "t.csv", ["a", "b"], [(0.1, 1 / 3), (2.0, np.float64(1e-300))],
                    {"seed": 5, "k": "1.5"})
    meta, header, rows = read_table(p)
    assert meta == {"seed": "5", "k": "1.5"}
    assert header == ["a", "b"]
    names, vals = read_matrix(p)
    assert vals[0, 1] == 1 / 3 and vals[1, 1] == 1e-300


def test_config_defaults_and_builtin(tmp_path):
    cfg = config_from_dict({"regions_path": "builtin:regions_3.csv"})
    assert cfg.regions_file() == fixture_path("regions_3.csv")
    assert cfg.insurer.theta == 0.3
    assert cfg.content_hash() == config_from_dict({"regions_path": "builtin:regions_3.csv",
                                                   "threads": 4}).content_hash()
    assert cfg.content_hash() != config_from_dict({"regions_path": "builtin:regions_3.csv",
                                                   "seed": 1}).content_hash()


def test_bundled_configs_load():
    for n in (2, 3, 50, 212):
        cfg = load_config(fixture_path(f"config_{n}.json"))
        assert len(load_regions(cfg.regions_file())) == n


@pytest.mark.parametrize("raw, msg", [
    ({"regions_path": "builtin:regions_3.csv", "sed": 1}, r"unknown keys \['sed'\]"),
    ({"regions_path": "builtin:regions_3.csv", "insurer": {"thet": 0.3}}, "insurer: unknown keys"),
    ({"regions_path": "builtin:regions_3.csv", "solver": {"bins": 3}}, "bins"),
    ({"regions_path": "builtin:regions_3.csv", "storm": {"path": [[0, 0]]}}, "storm.path"),
    ({"regions_path": "builtin:regions_3.csv", "mechanisms": ["mutual"]}, "unknown mechanism"),
    ({"regions_path": "builtin:regions_3.csv", "n_sims": 1}, "n_sims"),
    ({"regions_path": "nowhere.csv"}, "regions file not found"),
    ({"seed": 1}, "regions_path is required"),
])
def test_config_rejects(raw, msg):
    with pytest.raises(InputError, match=msg):
        config_from_dict(raw)


def test_load_config_errors(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text("{", encoding="utf-8")
    with pytest.raises(InputError, match="invalid JSON"):
        load_config(bad)
    with pytest.raises(InputError, match="not found"):
        load_config(tmp_path / "none.json")


def test_relative_regions_path(tmp_path):
    write(tmp_path, HEADER + "A,a,1,0,0\nB,b,2,1,1\n", "regs.csv")
    (tmp_path / "c.json").write_text(json.dumps({"regions_path": "regs.csv"}), encoding="utf-8")
    assert load_config(tmp_path / "c.json").regions_file() == tmp_path / "regs.csv"


def test_output_dir_precedence(monkeypatch):
    cfg = config_from_dict({"regions_path": "builtin:regions_3.csv", "output_dir": "from_cfg"})
    monkeypatch.setenv(OUTPUT_ENV, "from_env")
    assert str(resolve_output_dir(cfg, "flag")) == "flag"
    assert str(resolve_output_dir(cfg)) == "from_cfg"
    assert str(resolve_output_dir(None)) == "from_env"
    monkeypatch.delenv(OUTPUT_ENV)
    assert str(resolve_output_dir(None)) == "afpo_out"
