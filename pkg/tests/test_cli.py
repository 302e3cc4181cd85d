import csv
import json

import numpy as np
import pytest

from minorforge.cli import run
from minorforge.compound import compound
from minorforge.dec import FormField, MetricField
from minorforge.io import (
    InputError,
    compound_from_json,
    compound_to_json,
    dumps,
    form_field_from_json,
    form_field_to_json,
    load_json,
    matrix_from_json,
    metric_field_from_json,
    metric_field_to_json,
)
from minorforge.reconstruct import nonproper_limit


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def invoke(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out else None), err


def test_compound_identity(tmp_path, capsys):
    inp = write(tmp_path / "I3.json", {"d": 3, "rows": np.eye(3).tolist()})
    code, rep, _ = invoke(capsys, "compound", "--input", inp, "--k", "2")
    assert code == 0 and rep["status"] == "pass"
    assert rep["result"]["compound"]["rows"] == np.eye(3).tolist()
    assert rep["schema_version"] == "1.0" and rep["config"]["k"] == 2


def test_membership_rejects_counterexample_limit(tmp_path, capsys):
    inp = write(tmp_path / "M.json", compound_to_json(nonproper_limit()))
    code, rep, _ = invoke(capsys, "membership", "--input", inp, "--tol", "1e-8")
    assert code == 1
    assert "rank 6 ∉ {4,10}" in rep["result"]["reason"]


def test_membership_bare_matrix_needs_degrees(tmp_path, capsys):
    inp = write(tmp_path / "M.json", {"d": 10, "rows": np.eye(10).tolist()})
    code, _, err = invoke(capsys, "membership", "--input", inp)
    assert code == 2 and "error" in err
    code, rep, _ = invoke(capsys, "membership", "--input", inp, "--d", "5", "--k", "3")
    assert code == 0 and rep["result"]["member"]


def test_reconstruct_command(tmp_path, capsys):
    A = np.diag([2.0, 3.0, 4.0])
    inp = write(tmp_path / "B.json", compound_to_json(compound(A, 2)))
    code, rep, _ = invoke(capsys, "reconstruct", "--input", inp, "--hint", "positive")
    assert code == 0
    np.testing.assert_allclose(rep["result"]["matrix"]["rows"], A, atol=1e-12)


def test_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"d": 3,\n "rows": [1, }\n')
    code, rep, err = invoke(capsys, "compound", "--input", str(bad), "--k", "2")
    assert code == 2 and rep is None
    assert "bad.json:2:" in err


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        run(["no-such-command"])
    assert info.value.code == 2
    code, _, err = invoke(capsys, "compound", "--k", "2")
    assert code == 2 and "--input" in err
    code, _, _ = invoke(capsys, "compound", "--input", str(tmp_path / "missing.json"), "--k", "2")
    assert code == 2


def test_bad_thread_setting(monkeypatch, capsys):
    monkeypatch.setenv("MINORFORGE_THREADS", "zero")
    code, _, err = invoke(capsys, "dpsi-check", "--d", "5", "--k", "3")
    assert code == 2 and "MINORFORGE_THREADS" in err


def test_rank_profile_and_dpsi(capsys):
    code, rep, _ = invoke(capsys, "rank-profile", "--d", "5", "--k", "2", "--trials", "5")
    assert code == 0 and all(r["failures"] == 0 for r in rep["result"]["profile"])
    code, rep, _ = invoke(capsys, "dpsi-check", "--d", "6", "--k", "3")
    assert code == 0 and len(rep["result"]["ranks"]) == 3


def test_kernel_stability_from_input(tmp_path, capsys):
    seq = [{"d": 2, "rows": [[1.0, 1.0 / n], [0.0, 0.0]]} for n in (1, 2, 4, 8)]
    inp = write(tmp_path / "K.json", {"sequence": seq, "limit": {"d": 2, "rows": [[1.0, 0.0], [0.0, 0.0]]}})
    out = tmp_path / "table.csv"
    code, rep, _ = invoke(capsys, "kernel-stability", "--input", inp, "--csv", str(out))
    assert code == 0 and rep["result"]["converging"]
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 4 and float(rows[-1]["max_angle"]) == pytest.approx(np.arctan(1 / 8))


def test_liouville_pipeline_command(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = invoke(capsys, "liouville-pipeline", "--fixture", "affine-d4", "--n", "4",
                        "--hint", "positive", "--output", str(out))
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["result"]["compared_error"] <= 1e-6


def test_counterexample_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["counterexample", "--seed", "7", "--output", str(a)]) == 0
    assert run(["counterexample", "--seed", "7", "--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(a.read_text())
    assert rep["result"]["preimage_norms"][-1]["norm"] > 1e3


def test_json_round_trips(tmp_path, rng):
    B = compound(rng.standard_normal((4, 4)), 2)
    back = compound_from_json(json.loads(json.dumps(compound_to_json(B))))
    np.testing.assert_array_equal(back.entries, B.entries)
    w = FormField((3, 4), 2, 1, rng.standard_normal((3, 4, 2)))
    np.testing.assert_array_equal(form_field_from_json(form_field_to_json(w)).coeffs, w.coeffs)
    g = MetricField.flat((3, 3), 2.0)
    np.testing.assert_array_equal(metric_field_from_json(metric_field_to_json(g)).values, g.values)


def test_schema_errors(tmp_path):
    with pytest.raises(InputError):
        matrix_from_json({"d": 2, "rows": [1, 2, 3]})
    with pytest.raises(InputError):
        compound_from_json({"d": 3, "k": 2, "basis": "colex", "rows": np.eye(3).tolist()})
    with pytest.raises(InputError):
        form_field_from_json({"grid": [2, 2], "d": 3, "k": 1, "values": []})
    p = tmp_path / "x.json"
    p.write_text("[1, 2,\n\n oops]")
    with pytest.raises(InputError, match=r"x\.json:3:2"):
        load_json(p)


def test_dumps_is_stable():
    text = dumps({"b": np.float64(np.nan), "a": np.arange(2)})
    assert text == '{\n  "a": [\n    0,\n    1\n  ],\n  "b": "nan"\n}\n'
