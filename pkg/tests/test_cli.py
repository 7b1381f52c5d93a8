import json

import pytest

from stratfib.cli import bundled_problems, load_problem, main, run_command
from stratfib.errors import ProblemError

LINEAR = {
    "nvars": 2,
    "map": [[[1.0, [1, 0]]]],
    "strata": [{"id": "X"}],
    "frontier": [],
    "config": {"box": [[-1.0, 1.0]], "seed": 0},
}


def write(tmp_path, data, name="p.json"):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else json.dumps(data, indent=2))
    return str(path)


@pytest.mark.parametrize("name", bundled_problems())
def test_bundled_problems_load(name):
    p = load_problem(name)
    assert p.nvars == p.f.nvars and len(p.digest) == 64


def test_bundled_set_is_complete():
    assert {"broughton", "linear", "cross", "negative_control"} <= set(bundled_problems())


def test_parse_error_reports_line_and_column(tmp_path):
    path = write(tmp_path, '{\n  "nvars": 2,\n  "map": [,]\n}')
    with pytest.raises(ProblemError, match=r"p\.json:3:\d+:"):
        load_problem(path)


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ProblemError, match="colour"):
        load_problem(write(tmp_path, dict(LINEAR, colour="red")))


def test_exponent_length_checked(tmp_path):
    bad = dict(LINEAR, map=[[[1.0, [1, 0, 0]]]])
    with pytest.raises(ProblemError, match=r"map\[0\]"):
        load_problem(write(tmp_path, bad))


def test_frontier_with_unknown_stratum(tmp_path):
    bad = dict(LINEAR, frontier=[["X", "Y"]])
    with pytest.raises(ProblemError, match="frontier"):
        load_problem(write(tmp_path, bad))


def test_box_dimension_checked(tmp_path):
    bad = dict(LINEAR, config={"box": [[0, 1], [0, 1]]})
    with pytest.raises(ProblemError, match="config.box"):
        load_problem(write(tmp_path, bad))


def test_missing_file():
    with pytest.raises(ProblemError, match="no such problem"):
        load_problem("does/not/exist.json")


def test_exit_codes(capsys, tmp_path):
    assert main(["sigma", "linear"]) == 0
    assert "overall: PASS" in capsys.readouterr().out
    assert main(["audit-strata", "negative_control"]) == 1
    assert "overall: FAIL" in capsys.readouterr().out
    assert main(["sigma", write(tmp_path, "{")]) == 2
    assert "error" in capsys.readouterr().err


def test_box_override_and_bad_box(capsys):
    assert main(["safe-radius", "linear", "--box=-0.5,0.5"]) == 0
    assert main(["safe-radius", "linear", "--box", "0,1,0,1"]) == 2
    with pytest.raises(SystemExit):
        main(["safe-radius", "linear", "--box", "a,b"])


def test_report_header_and_formatting():
    rep = run_command("sigma", load_problem("linear"), seed=7)
    text = rep.text()
    assert text.splitlines()[:5] == [
        text.splitlines()[0],
        "command: sigma",
        "problem: linear.json",
        f"sha256: {load_problem('linear').digest}",
        "seed: 7",
    ]
    assert text.endswith("overall: PASS\n")


def test_outputs_are_deterministic(tmp_path):
    for k in range(2):
        assert main(["trivialize", "linear", "--out", str(tmp_path / str(k))]) == 0
    names = sorted(p.name for p in (tmp_path / "0").iterdir())
    assert "report.txt" in names and "trajectories.csv" in names
    for n in names:
        assert (tmp_path / "0" / n).read_bytes() == (tmp_path / "1" / n).read_bytes()
