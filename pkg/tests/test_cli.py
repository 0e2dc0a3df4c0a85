import json

import pytest

from qrestrict import cli
from qrestrict.cli import ConfigError, RunConfig, dumps, main, parse_config
from qrestrict.errors import CapabilityError, NumericalFailure


def test_minimal_restrict_config():
    cfg = parse_config({"J": 1, "h": 1, "N": 4, "X": "sz", "beta": "ground"}, "restrict")
    assert cfg.command == "restrict"
    assert cfg["N"] == 4
    assert cfg["seed"] == 0


def test_defaults_documented():
    cfg = parse_config({"N": 3}, "restrict")
    assert cfg["beta"] == "ground"
    assert parse_config({"g": 2}, "ising-ldp")["quadrature"] == 4096
    assert parse_config({}, "betamax")["a"] == 1.0


@pytest.mark.parametrize(
    "obj,command,key",
    [
        ({"N": 30}, "restrict", "N"),
        ({"N": 13, "beta": 0.5}, "restrict", "N"),
        ({"N": 2, "X": "custom", "matrix": [[0, 1], [0, 0]]}, "restrict", "matrix"),
        ({"N": 2, "colour": 1}, "restrict", "colour"),
        ({}, "restrict", "N"),
        ({"g": 0.5}, "ising-ldp", "g"),
        ({"epsilon": 1.5}, "locality", "epsilon"),
        ({"N": 2, "beta": -1}, "restrict", "beta"),
    ],
)
def test_validation_errors_name_the_key(obj, command, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(obj, command)


def test_cap_is_named():
    with pytest.raises(ConfigError, match="cap of 20"):
        parse_config({"N": 30}, "restrict")


def test_command_mismatch():
    with pytest.raises(ConfigError, match="command"):
        parse_config({"command": "fcs"}, "restrict")


def test_round_trip():
    cfg = parse_config({"N": 3, "X": "custom", "matrix": [[1, [0, 1]], [[0, -1], -1]], "beta": 0.25}, "restrict")
    again = parse_config(json.loads(json.dumps(cfg.to_json())))
    assert again == cfg


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"command": "betamax", "a": 0.5}))
    cfg = parse_config(path, None, {"a": 2.0})
    assert cfg["a"] == 2.0
    with pytest.raises(ConfigError, match="config"):
        parse_config(tmp_path / "missing.json", "betamax")


def test_dumps_format():
    text = dumps({"b": 0.1, "a": [1, 2.5], "c": float("nan"), "d": -0.0})
    assert text.endswith("\n")
    assert '"b": 0.10000000000000001' in text
    assert text.index('"b"') < text.index('"a"')
    assert '"c": null' in text
    assert '"d": 0' in text


def test_header_only_csv():
    assert cli._csv(["L", "N", "epsilon", "p_zero", "p_one", "gap"], []) == "L,N,epsilon,p_zero,p_one,gap\n"


def run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def test_restrict_json_report(tmp_path):
    code, out = run(tmp_path, "r.json", "restrict", "--set", "N=2")
    assert code == 0
    rep = json.loads(out.read_text())
    assert list(rep) == ["command", "config_echo", "results", "timings_ms"]
    assert rep["timings_ms"] == {}
    probs = {tuple(r["config"]): r["prob"] for r in rep["results"]["table"]}
    assert probs[(1.0, 1.0)] == pytest.approx(0.9472136, abs=1e-6)


def test_ldp_csv_schema(tmp_path):
    code, out = run(tmp_path, "ldp.csv", "ising-ldp", "--set", "g=2", "--set", "n=[1,2]", "--format", "csv")
    assert code == 0
    assert out.read_text().splitlines()[0] == "n,t,G_n,logG_over_n,F"
    rate = tmp_path / "ldp_rate.csv"
    assert rate.read_text().splitlines()[0] == "m,I"


def test_locality_csv_schema(tmp_path):
    code, out = run(tmp_path, "loc.csv", "locality", "--set", "L=[1]", "--set", "buffer=1", "--format", "csv")
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "L,N,epsilon,p_zero,p_one,gap"
    assert len(lines) == 2


def test_fcs_and_potential_csv(tmp_path):
    code, out = run(tmp_path, "f.csv", "fcs", "--set", "samples=2", "--format", "csv")
    assert code == 0
    assert out.read_text().startswith("n,x_V,corr\n")
    code, out = run(tmp_path, "p.csv", "potential", "--set", "N=2", "--set", "beta=0.5", "--format", "csv")
    assert code == 0
    assert out.read_text().startswith("sites,config,value\n")


def test_exit_codes(tmp_path, monkeypatch, capsys):
    assert main(["restrict", "--set", "N=30"]) == 2
    assert "N" in capsys.readouterr().err

    def numerical(p, seed):
        raise NumericalFailure("boom")

    def capability(p, seed):
        raise CapabilityError("too big")

    monkeypatch.setitem(cli.RUNNERS, "betamax", numerical)
    assert main(["betamax"]) == 3
    monkeypatch.setitem(cli.RUNNERS, "betamax", capability)
    assert main(["betamax"]) == 4


def test_unwritable_path(tmp_path):
    assert main(["betamax", "--out", str(tmp_path / "no" / "such" / "dir.json")]) == 2


def test_threads_flag(tmp_path):
    code, out = run(tmp_path, "t.json", "betamax", "--threads", "1")
    assert code == 0


@pytest.mark.parametrize("args", [["dyson-check", "--set", "diagrams=3"], ["fcs"], ["restrict", "--set", "N=5"]])
def test_byte_identical_reports(tmp_path, args):
    _, a = run(tmp_path, "a.out", *args, "--seed", "11")
    _, b = run(tmp_path, "b.out", *args, "--seed", "11")
    assert a.read_bytes() == b.read_bytes()


def test_timings_opt_in(tmp_path):
    _, out = run(tmp_path, "t.json", "betamax", "--timings")
    assert "total" in json.loads(out.read_text())["timings_ms"]
