import csv
import io
import json
import subprocess
import sys
from importlib import resources

import jsonschema
import numpy as np
import pytest

from bellsim.cli import lhv_sweep, main
from bellsim.lhv import quantum_correlation

from . import oracles


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def schema(name):
    return json.loads(resources.files("bellsim").joinpath(f"schemas/{name}.schema.json").read_text())


def test_epr_csv_example(capsys):
    code, out, _ = run(capsys, "epr", "--theta-ab", "45", "--singlet", "--shots", "100000", "--seed", "7", "--format", "csv")
    assert code == 0
    assert out.splitlines()[0] == "m1_outcome,m2_outcome,analytic_p,empirical_freq"
    table = {(r["m1_outcome"], r["m2_outcome"]): r for r in rows(out)}
    assert abs(float(table["1", "1"]["analytic_p"]) - 0.0732233) < 5e-8
    assert sum(float(r["empirical_freq"]) for r in table.values()) == pytest.approx(1.0, abs=1e-12)


def test_epr_with_m3_matches_mixture(capsys):
    code, out, _ = run(capsys, "epr", "--theta-ab", "45", "--singlet", "--with-m3")
    assert code == 0
    assert out.splitlines()[0] == "m1_outcome,m2_outcome,m3_outcome,analytic_p,empirical_freq"
    pair = np.zeros((2, 2))
    for r in rows(out):
        pair[int(r["m1_outcome"]) - 1, int(r["m2_outcome"]) - 1] += float(r["analytic_p"])
        assert r["empirical_freq"] == ""
    s2 = 1 / np.sqrt(2)
    ref = oracles.mixture_pair_table((s2, -s2), oracles.spin_pair(0.0), oracles.spin_pair(np.pi / 4))
    np.testing.assert_allclose(pair, ref, atol=1e-10)


def test_epr_equal_settings_anticorrelated(capsys):
    _, out, _ = run(capsys, "epr", "--theta-ab", "0", "--singlet")
    t = {(r["m1_outcome"], r["m2_outcome"]): float(r["analytic_p"]) for r in rows(out)}
    assert t["1", "1"] == 0.0 and t["2", "2"] == 0.0


def test_epr_json_validates(capsys):
    code, out, _ = run(capsys, "epr", "--theta-ab", "30", "--c1", "0.6,0", "--c2", "0,-0.8", "--shots", "50", "--pseudo", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, schema("epr"))
    assert len(doc["pseudo"]) == 16
    assert doc["locality_deviation"] <= 1e-10


def test_epr_full_directions(capsys):
    code, out, _ = run(capsys, "epr", "--dir-a", "0,0,1", "--dir-b", "0,1,1", "--format", "json")
    doc = json.loads(out)
    assert code == 0
    assert doc["p_plus_plus"] == pytest.approx(quantum_correlation(np.pi / 4), abs=1e-12)


def test_bell_example(capsys):
    code, out, _ = run(capsys, "bell", "--angles", "45,45,90")
    assert code == 0
    r = rows(out)[0]
    assert r["satisfied"] == "false"
    assert abs(float(r["lhs"]) - 0.14645) < 1e-5


def test_bell_example_rhs(capsys):
    _, out, _ = run(capsys, "bell", "--angles", "45,45,90")
    assert abs(float(rows(out)[0]["rhs"]) - 0.5) < 1e-9


def test_bell_with_m3(capsys):
    _, out, _ = run(capsys, "bell", "--angles", "45,45,90", "--with-m3", "--format", "json")
    doc = json.loads(out)
    jsonschema.validate(doc, schema("bell"))
    assert doc["satisfied"] is True


def test_bell_zero_triple(capsys):
    _, out, _ = run(capsys, "bell", "--angles", "0,0,0")
    r = rows(out)[0]
    assert r["satisfied"] == "true" and float(r["margin"]) == 0.0


def test_bell_impossible_triple_is_domain_error(capsys):
    code, _, err = run(capsys, "bell", "--angles", "10,10,90")
    assert code == 1 and "coplanar" in err


def test_chsh_scan_examples(capsys):
    _, out, _ = run(capsys, "chsh-scan", "--resolution", "1")
    assert abs(float(rows(out)[0]["max_abs_s"]) - 2 * np.sqrt(2)) < 5e-4
    _, out, _ = run(capsys, "chsh-scan", "--state", "product", "--resolution", "5", "--format", "json")
    doc = json.loads(out)
    jsonschema.validate(doc, schema("chsh-scan"))
    assert doc["max_abs_s"] <= 2 + 1e-9


@pytest.mark.parametrize(
    "argv",
    [
        ["chsh-scan", "--resolution", "0"],
        ["chsh-scan", "--resolution", "nan"],
        ["lhv-check", "--trials", "0"],
        ["epr", "--shots", "-1"],
        ["epr", "--c1", "1,0"],
        ["epr", "--singlet", "--c1", "1,0", "--c2", "0,0"],
        ["epr", "--theta-ab", "inf"],
        ["epr", "--pseudo", "--with-m3"],
        ["bell"],
        ["bell", "--angles", "1,2"],
        ["nope"],
        [],
    ],
)
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert "usage" in err


def test_unnormalized_coefficients_exit_1(capsys):
    code, _, err = run(capsys, "epr", "--c1", "1,0", "--c2", "1,0")
    assert code == 1 and "InvariantError" in err


def test_lhv_check_summary():
    rep = lhv_sweep(100, 100, 0)
    assert rep["bell_violations"] == 0 and rep["chsh_violations"] == 0
    assert rep["summary"] == "all 10000 checks satisfied Bell's inequality"


def test_lhv_check_default_csv(capsys):
    code, out, err = run(capsys, "lhv-check", "--trials", "50")
    assert code == 0
    r = rows(out)[0]
    assert r["checks"] == "5000" and r["bell_violations"] == "0"
    assert err.strip() == "all 5000 checks satisfied Bell's inequality"


def test_lhv_check_json(capsys):
    code, out, err = run(capsys, "lhv-check", "--trials", "20", "--triples", "10", "--seed", "3", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, schema("lhv-check"))
    assert "all 200 checks satisfied" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["epr", "--theta-ab", "45", "--shots", "100000", "--seed", "7"],
        ["epr", "--theta-ab", "45", "--shots", "1000", "--seed", "18446744073709551615", "--format", "json"],
        ["lhv-check", "--trials", "30", "--triples", "20", "--seed", "5"],
    ],
)
def test_fixed_seed_is_byte_identical(capsys, argv):
    _, first, _ = run(capsys, *argv)
    _, second, _ = run(capsys, *argv)
    assert first == second and first


def test_floats_have_17_digits(capsys):
    _, out, _ = run(capsys, "epr", "--theta-ab", "45")
    p = rows(out)[0]["analytic_p"]
    assert float(p) == float(format(float(p), ".17g")) and p == format(float(p), ".17g")


def test_out_file(tmp_path, capsys):
    path = tmp_path / "bell.json"
    code, out, _ = run(capsys, "bell", "--angles", "45,45,90", "--format", "json", "--out", str(path))
    assert code == 0 and out == ""
    jsonschema.validate(json.loads(path.read_text()), schema("bell"))


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "bellsim", "bell", "--angles", "0,0,0"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("theta_ab_deg,")
