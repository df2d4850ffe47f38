import json

import pytest

from crindex.cli import run


def _write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def _report(capsys):
    return json.loads(capsys.readouterr().out)


REFERENCE = {"version": 1, "cz": {"operator": {"n": 1, "domain": "strip", "reference": {"sigma": 1.0}}},
             "params": {"nt": 32, "ns": 32, "L": 4.0}}


def test_cz_of_reference(tmp_path, capsys):
    assert run(["cz", _write(tmp_path, "ref.json", REFERENCE)]) == 0
    rep = _report(capsys)
    assert rep["results"]["flow"]["value"] == 0
    assert rep["results"]["flow"]["refined_value"] == 0
    assert rep["results"]["direct"]["value"] == 0
    assert rep["results"]["direct"]["refined_value"] == 0


def test_index_of_three_puncture_disk(tmp_path, capsys):
    prob = {"version": 1, "surface_index": {"surface": {"genus": 0, "boundary": [["+", "-", "-"]]}, "n": 1}}
    assert run(["index", _write(tmp_path, "disk.json", prob)]) == 0
    assert _report(capsys)["results"]["assembled"] == -1


def test_unknown_field_is_a_validation_error(tmp_path, capsys):
    bad = dict(REFERENCE, extra=1)
    assert run(["cz", _write(tmp_path, "bad.json", bad)]) == 2
    assert _report(capsys)["error"]["type"] == "ValidationError"


def test_degenerate_end_exit_code(tmp_path, capsys):
    prob = {"version": 1, "surface_index": {
        "surface": {"boundary": [["+", "-"]]}, "n": 1,
        "ends": {"b0.0": {"n": 1, "domain": "strip", "coeff": [[0.0, 0.0], [0.0, 0.0]]}}}}
    assert run(["index", _write(tmp_path, "deg.json", prob)]) == 4


def test_parity_with_named_generator(tmp_path, capsys):
    prob = {"version": 1, "cz": {"operator": {"n": 1, "domain": "strip", "reference": {}},
                                 "transition": "half_rotation_1"}, "params": {"nt": 32, "ns": 32}}
    assert run(["parity", _write(tmp_path, "par.json", prob)]) == 0
    res = _report(capsys)["results"]
    assert res["parity_shift"] == 1 and res["consistent"]


def test_reports_are_byte_identical(tmp_path):
    path = _write(tmp_path, "s.json", {"version": 1, "asymptotic": {"n": 1, "domain": "circle", "reference": {}}})
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        assert run(["spectrum", path, "--out", str(out), "--nt", "32"]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_concentration_csv(tmp_path, capsys):
    prob = {"version": 1, "deformation": {"zeros": [{"position": [0, 0], "tag": "interior+"}]}}
    csv_path = tmp_path / "profile.csv"
    assert run(["concentrate", _write(tmp_path, "d.json", prob), "--sigma", "1,4", "--csv", str(csv_path)]) == 0
    res = _report(capsys)["results"]
    assert [r["value"] for r in res["profile"]] == [1, 1]
    assert csv_path.read_text().splitlines()[0].startswith("sigma,mass_fraction")


def test_missing_payload(capsys):
    assert run(["index-strip"]) == 2


def test_flag_parsing_rejects_bad_sigma():
    with pytest.raises(SystemExit):
        run(["deform", "--sigma", "a,b"])
