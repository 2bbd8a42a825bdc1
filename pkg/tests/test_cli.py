import csv
import subprocess
import sys

import numpy as np
import pytest

from conftest import TOY
from fdtdsens import cli


@pytest.fixture(scope="module")
def toy_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("scen") / "toy.ini"
    path.write_text(TOY)
    return path


def manifest(out):
    items = {}
    for line in (out / "manifest.txt").read_text().splitlines():
        k, _, v = line.partition(" = ")
        items[k] = v
    return items


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_jacobian_outputs_and_budget(toy_file, tmp_path):
    out = tmp_path / "jac"
    assert cli.main(["jacobian", "--scenario", str(toy_file), "--params", "da,gap", "--out", str(out)]) == 0
    m = manifest(out)
    assert m["run_count"] == "1" == m["expected_run_count"]
    assert m["status"] == "0"
    rows = read_csv(out / "jacobian_da.csv")
    assert rows[0] == ["frequency_hz", "real", "imag", "magnitude", "phase_rad"]
    assert len(rows) > 10
    assert (out / "eqsources.csv").exists()
    assert (out / "nominal_S11.csv").exists()


def test_csv_is_deterministic(toy_file, tmp_path):
    args = ["high-order", "--scenario", str(toy_file), "--params", "db", "--order", "2"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    for name in ("high_order_db_m1.csv", "high_order_db_m2.csv"):
        assert (tmp_path / "a" / name).read_text() == (tmp_path / "b" / name).read_text()
    assert manifest(tmp_path / "a")["run_count"] == "2"


def test_hessian_budget(toy_file, tmp_path):
    out = tmp_path / "hes"
    assert cli.main(["hessian", "--scenario", str(toy_file), "--params", "da,gap,eb", "--out", str(out)]) == 0
    m = manifest(out)
    assert m["run_count"] == "4" == m["expected_run_count"]
    for u, v in (("da", "da"), ("da", "gap"), ("gap", "eb"), ("eb", "eb")):
        assert (out / f"hessian_{u}_{v}.csv").exists()


def test_compare_against_dual(toy_file, tmp_path, capsys):
    out = tmp_path / "cmp"
    code = cli.main(["compare", "--scenario", str(toy_file), "--params", "da", "--task", "jacobian",
                     "--oracle", "dual", "--out", str(out)])
    assert code == 0
    m = manifest(out)
    assert float(m["rel_l2_error"]) < 1e-8
    assert "aggregate relative L2 error" in capsys.readouterr().out


def test_exit_tolerance(toy_file, tmp_path):
    code = cli.main(["compare", "--scenario", str(toy_file), "--params", "da", "--oracle", "dual",
                     "--tol", "1e-300", "--out", str(tmp_path / "t")])
    assert code == cli.EXIT_TOLERANCE
    assert manifest(tmp_path / "t")["status"] == "4"


@pytest.mark.parametrize("extra", [
    ["--params", "nope"],
    ["--band", "abc"],
    ["--band", "5e9:1e9"],
    ["--freqs", "0"],
])
def test_exit_validation(toy_file, tmp_path, extra):
    code = cli.main(["jacobian", "--scenario", str(toy_file), "--out", str(tmp_path / "v")] + extra)
    assert code == cli.EXIT_VALIDATION


def test_exit_validation_bad_scenario(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text(TOY.replace("dt = 4.41e-13", "dt = 4.41e-12"))
    assert cli.main(["jacobian", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == cli.EXIT_VALIDATION


def test_exit_numerical_instability(tmp_path):
    text = TOY.replace("dt = 4.41e-13", "dt = 2.9e-12\ndt_override = true").replace("nsteps = 9000", "nsteps = 2000")
    path = tmp_path / "unstable.ini"
    path.write_text(text)
    out = tmp_path / "u"
    assert cli.main(["jacobian", "--scenario", str(path), "--params", "da", "--out", str(out)]) == cli.EXIT_NUMERICAL
    assert manifest(out)["status"] == "3"


def test_wrong_arity(toy_file, tmp_path):
    code = cli.main(["mixed", "--scenario", str(toy_file), "--params", "da", "--out", str(tmp_path / "w")])
    assert code == cli.EXIT_VALIDATION


def test_module_entry_point(toy_file, tmp_path):
    out = tmp_path / "mod"
    proc = subprocess.run([sys.executable, "-m", "fdtdsens", "oracle-dual", "--scenario", str(toy_file),
                           "--params", "gap", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    rows = read_csv(out / "dual_gap_m1.csv")
    vals = np.array([[float(r[1]), float(r[2])] for r in rows[1:]])
    assert np.all(np.isfinite(vals))


def test_usage_error_exit_code(toy_file):
    with pytest.raises(SystemExit) as exc:
        cli.main(["bogus-task"])
    assert exc.value.code == 2
