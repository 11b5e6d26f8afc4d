import json

import pytest

from app import cli
from app.services import lemmas, reporting


def test_parse_levels():
    assert cli.parse_levels("4..6", dim=1) == [16, 32, 64]
    assert cli.parse_levels("0..2", dim=3) == [0, 1, 2]
    assert cli.parse_levels("3", dim=3) == [3]


@pytest.mark.parametrize("text", ["a..b", "5..3", "1..2..3"])
def test_parse_levels_rejects(text):
    with pytest.raises(cli.ParameterError):
        cli.parse_levels(text, dim=3)


def test_mesh_info_json(capsys):
    assert cli.main(["mesh-info", "--dim", "3", "--levels", "0..1", "--format", "json"]) == cli.EXIT_OK
    rows = json.loads(capsys.readouterr().out)
    assert [row["level"] for row in rows] == [0, 1]
    assert rows[0]["dofs"] == 1
    assert [row["cells"] for row in rows] == [8, 64]


def test_mesh_info_dumps_the_finest_mesh(capsys):
    assert cli.main(["mesh-info", "--dim", "3", "--levels", "0", "--dump", "mesh"]) == cli.EXIT_OK
    mesh = reporting.mesh_from_text(capsys.readouterr().out)
    assert mesh.n_cells == 8


def test_radial_study_to_file(tmp_path):
    out = tmp_path / "radial.csv"
    assert cli.main(["radial", "--levels", "4..6", "--out", str(out)]) == cli.EXIT_OK
    rows = reporting.rows_from_csv(out.read_text())
    assert [row.level for row in rows] == [16, 32, 64]
    assert all(row.value >= 0.25 - 1e-9 for row in rows)


def test_critical_weighted_json(capsys):
    assert cli.main(["critical", "--weighted", "--levels", "4..5", "--format", "json"]) == cli.EXIT_OK
    report = reporting.report_from_json(capsys.readouterr().out)
    assert report.spec.kind == "weighted_mu"


def test_minseq_csv(capsys):
    assert cli.main(["minseq", "--eps", "0.0625,0.03125"]) == cli.EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "eps,mu,alpha,N,A_eps,B_eps,ratio,h2_norm_sq"
    assert len(lines) == 3
    assert lines[1].startswith("0.0625,")


def test_fit_reads_a_study_csv(tmp_path, capsys):
    lines = [reporting.CSV_HEADER]
    for k in range(3, 8):
        h = 2.0 ** -k
        lines.append(f"{2 ** k},{h!r},{2 ** k},{0.25 + 3 * h * h!r},0.25,{3 * h * h!r},,0")
    source = tmp_path / "study.csv"
    source.write_text("\n".join(lines) + "\n")
    assert cli.main(["fit", "--input", str(source)]) == cli.EXIT_OK
    fit = json.loads(capsys.readouterr().out)
    assert fit["exponent"] == pytest.approx(2.0, abs=1e-6)


def test_usage_errors_exit_with_two(tmp_path):
    assert cli.main(["verify", "--select", "nope"]) == cli.EXIT_USAGE
    assert cli.main(["fit", "--input", str(tmp_path / "missing.csv")]) == cli.EXIT_USAGE
    assert cli.main(["subcritical", "--lambda", "0.25", "--levels", "4..5"]) == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["hardy", "--dim", "2"])
    assert excinfo.value.code == 2


def test_failed_verification_exits_with_one(monkeypatch, capsys):
    monkeypatch.setitem(
        lemmas.CHECKS, "logth", lambda quick=False: lemmas._check("logth", False, "forced failure")
    )
    assert cli.main(["verify", "--select", "logth"]) == cli.EXIT_FAILED
    assert json.loads(capsys.readouterr().out)["passed"] is False


@pytest.mark.slow
def test_interpolation_check_from_the_command_line(capsys):
    assert cli.main(["verify", "--select", "interpolation", "--quick"]) == cli.EXIT_OK
